"""Recompute the regression values stored under tests/golden.

Run once after a reviewed model change; the tests compare against the
committed file, never against a fresh run of this script.
"""

import csv
import json
import sys
import tempfile
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
sys.path.insert(0, str(ROOT / "tests"))

from conftest import bundled_scenarios  # noqa: E402
from helpers import GOLDEN, PKG_DATA  # noqa: E402
from test_cli import run_small  # noqa: E402

from gridplan.planning import load_system, solve_all_noncoop, solve_iop  # noqa: E402


def cli_golden() -> None:
    with tempfile.TemporaryDirectory() as tmp:
        _, out = run_small(Path(tmp))
        doc = {"scenario_ids": [s["id"] for s in json.loads((out / "scenarios.json").read_text())["scenarios"]]}
        for mode in ("noncoop", "coop"):
            doc[mode] = json.loads((out / f"plan_{mode}.json").read_text())["total_cost"]
        rows = {r["location"]: float(r["correlation"])
                for r in csv.DictReader((out / "solar_wind_correlation.csv").open())}
        doc["hil_solar_wind_correlation"] = rows["HIL"]
    path = GOLDEN / "cli_2mg_s3.json"
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    print(f"wrote {path}")


def main() -> None:
    sset = bundled_scenarios.__wrapped__()
    system = load_system(PKG_DATA / "system_2mg.json")
    noncoop = solve_all_noncoop(system, sset)
    coop = solve_iop(system, sset)
    doc = {
        "scenario_ids": sset.ids,
        "noncoop": {s.microgrids[0].id: {"install": s.microgrids[0].install, "total_cost": s.total_cost}
                    for s in noncoop},
        "coop": {"install": list(coop.install), "total_cost": coop.total_cost},
    }
    path = GOLDEN / "planning_2mg.json"
    path.write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")
    print(f"wrote {path}")
    cli_golden()


if __name__ == "__main__":
    main()
