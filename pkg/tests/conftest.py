import sys
from collections import defaultdict
from pathlib import Path

import numpy as np
import pytest

sys.path.insert(0, str(Path(__file__).resolve().parent))

from helpers import random_system  # noqa: E402

from helpers import PKG_DATA  # noqa: E402

from gridplan import cli  # noqa: E402
from gridplan.meteorology import load_models, per_unit_profile, read_weather_csv  # noqa: E402
from gridplan.planning import solve_all_noncoop, solve_iop  # noqa: E402
from gridplan.scenarios import build_daily_scenarios, reduce_scenarios  # noqa: E402

CRITERIA = {
    1: "solar/wind formula values",
    2: "QP solver vs brute-force grid",
    3: "planning QPs vs exhaustive oracles",
    4: "cooperation embeds noncooperation",
    5: "bargaining shares and incentives",
    6: "greedy scenario reduction vs exhaustive",
    7: "bundled dataset qualitative finding",
    8: "byte-identical pipeline reruns",
}

_outcomes: dict[int, list[bool]] = defaultdict(list)


def pytest_configure(config):
    config.addinivalue_line("markers", "criterion(n): acceptance criterion this test covers")


def pytest_runtest_logreport(report):
    crit = dict(report.user_properties).get("criterion")
    if crit is None:
        return
    if report.when == "call" or report.failed:
        _outcomes[crit].append(report.passed)


@pytest.fixture(autouse=True)
def _tag_criterion(request, record_property):
    mark = request.node.get_closest_marker("criterion")
    if mark is not None:
        record_property("criterion", mark.args[0])


def pytest_terminal_summary(terminalreporter):
    if not _outcomes:
        return
    terminalreporter.section("acceptance criteria")
    for n, label in CRITERIA.items():
        runs = _outcomes.get(n)
        if not runs:
            status = "NOT RUN"
        else:
            status = "PASS" if all(runs) else "FAIL"
        detail = f"{sum(runs)}/{len(runs)} tests" if runs else ""
        terminalreporter.write_line(f"criterion {n} [{status}] {label} {detail}".rstrip())


def run_pipeline(root: Path, config: str = "system_4mg.json", scenarios: int | None = None) -> Path:
    """assets -> analyze -> scenarios -> plan x2 -> bargain, all under ``root``."""
    assets, out = root / "assets", root / "out"
    assert cli.main(["assets", "--out", str(assets)]) == 0
    weather = sorted(str(p) for p in (assets / "weather").glob("*.csv"))
    models = ["--models", str(assets / "models.json")]
    assert cli.main(["analyze", *weather, *models, "--out", str(out)]) == 0
    extra = ["--scenarios", str(scenarios)] if scenarios else []
    assert cli.main(["scenarios", *weather, *models, *extra, "--out", str(out)]) == 0
    for mode in ("noncoop", "coop"):
        assert cli.main(["plan", "--config", str(assets / config), "--scenario-file", str(out / "scenarios.json"),
                         "--mode", mode, "--out", str(out)]) == 0
    assert cli.main(["bargain", "--noncoop", str(out / "plan_noncoop.json"), "--coop", str(out / "plan_coop.json"),
                     "--scenario-file", str(out / "scenarios.json"), "--config", str(assets / config),
                     "--out", str(out)]) == 0
    return root


@pytest.fixture(scope="session")
def bundled_runs(tmp_path_factory):
    """Two independent full runs of the 4-microgrid pipeline."""
    return [run_pipeline(tmp_path_factory.mktemp(f"pipeline{k}")) for k in range(2)]


@pytest.fixture(scope="session")
def random_planning_runs():
    """(system, scenarios, noncoop solutions, coop solution) for 20 random systems."""
    runs = []
    for seed in range(20):
        rng = np.random.default_rng(1000 + seed)
        m = int(rng.integers(2, 5))
        S = int(rng.integers(1, 6))
        system, sset = random_system(rng, m, T=24, S=S)
        runs.append((system, sset, solve_all_noncoop(system, sset), solve_iop(system, sset)))
    return runs


@pytest.fixture(scope="session")
def bundled_scenarios():
    """Bundled weather reduced to the default 10 scenarios, as the CLI does it."""
    solar, wind = load_models(PKG_DATA / "models.json")
    profiles = [per_unit_profile(read_weather_csv(p), solar, wind) for p in sorted((PKG_DATA / "weather").glob("*.csv"))]
    full = build_daily_scenarios({w.location_id: s for s, w in profiles}, {w.location_id: w for _, w in profiles})
    return reduce_scenarios(full, 10)
