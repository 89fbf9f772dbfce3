"""``gridplan`` command line: analyze -> scenarios -> plan -> bargain.

Stages talk to each other only through files in the output directory.
Every stage writes ``manifest_<stage>.json`` with SHA-256 digests of its
inputs and outputs; downstream stages use those digests to refuse stale or
mismatched artifacts.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import math
import os
import shutil
import sys
from importlib import resources
from pathlib import Path

import numpy as np

from . import qpcore
from .bargaining import (BargainingError, BargainingInput, solve_csp_closed_form, solve_csp_numeric,
                         verify_incentive, write_outcome_csv)
from .meteorology import (DegenerateSeriesError, SolarModel, ValidationError, WindModel, capacity_factor,
                          correlation, correlation_matrix, load_models, per_unit_profile, read_weather_csv,
                          write_capacity_factors, write_matrix)
from .planning import DEFAULT_ENUMERATION_LIMIT, PlanningError, load_system, solve_all_noncoop, solve_iop
from .scenarios import DEFAULT_SCENARIO_COUNT, ScenarioSet, build_daily_scenarios, reduce_scenarios

log = logging.getLogger("gridplan")

EXIT_OK, EXIT_VALIDATION, EXIT_SOLVER, EXIT_MANIFEST = 0, 2, 3, 4
MANIFEST_VERSION = 1


class ManifestError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# manifests


def sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def _entry(path) -> dict:
    # basenames only: the output tree must not depend on where it lives
    return {"name": Path(path).name, "sha256": sha256(path)}


def _dump(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=1, sort_keys=True, allow_nan=False) + "\n")


def _write_manifest(out: Path, stage: str, inputs: dict, params: dict, outputs: list[Path]) -> dict:
    manifest = {
        "version": MANIFEST_VERSION,
        "stage": stage,
        "inputs": inputs,
        "parameters": params,
        "outputs": [_entry(p) for p in outputs],
    }
    _dump(out / f"manifest_{stage}.json", manifest)
    return manifest


def _check_upstream(path: Path) -> None:
    """If ``path`` sits next to the manifest that produced it, the digests must agree."""
    for mf in sorted(path.parent.glob("manifest_*.json")):
        try:
            doc = json.loads(mf.read_text())
        except (OSError, json.JSONDecodeError):
            continue
        for out in doc.get("outputs", []):
            if out.get("name") == path.name and out.get("sha256") != sha256(path):
                raise ManifestError(f"{path} does not match the digest recorded in {mf.name}; "
                                    "re-run the producing stage")


# --------------------------------------------------------------------------
# shared helpers


def _models(args) -> tuple[SolarModel, WindModel]:
    if args.models:
        return load_models(args.models)
    return SolarModel(), WindModel()


def _models_params(solar: SolarModel, wind: WindModel) -> dict:
    return {"solar": dict(vars(solar)), "wind": dict(vars(wind))}


def _weather(args):
    paths = [Path(p) for p in args.weather]
    if not paths:
        raise ValidationError("no weather files given")
    series = [read_weather_csv(p) for p in paths]
    return paths, series


def _threads(args) -> int:
    if args.threads is not None:
        n = args.threads
    else:
        env = os.environ.get("GRIDPLAN_THREADS", "").strip()
        try:
            n = int(env) if env else 1
        except ValueError:
            raise ValidationError(f"GRIDPLAN_THREADS={env!r} is not an integer") from None
    if n < 1:
        raise ValidationError("thread count must be >= 1")
    return n


def _fmt(v: float) -> str:
    return repr(float(v))


def _writer(path: Path):
    fh = path.open("w", newline="")
    return fh, csv.writer(fh, lineterminator="\n")


# --------------------------------------------------------------------------
# stages


def cmd_analyze(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    solar_model, wind_model = _models(args)
    paths, series = _weather(args)
    inputs = {"weather": [_entry(p) for p in paths]}
    labels = [s.location_id for s in series]

    solar_profiles, wind_profiles = {}, []
    cf_profiles = []
    for s in series:
        sp, wp = per_unit_profile(s, solar_model, wind_model)
        if sp is not None:
            cf_profiles.append(sp)
            solar_profiles[s.location_id] = sp
        cf_profiles.append(wp)
        wind_profiles.append(wp)

    written = []
    cf_path = out / "capacity_factors.csv"
    write_capacity_factors(cf_path, cf_profiles)
    written.append(cf_path)

    wind_path = out / "wind_correlation.csv"
    try:
        matrix = correlation_matrix(wind_profiles)
    except DegenerateSeriesError as exc:
        log.warning("wind correlation undefined: %s", exc)
        matrix = np.full((len(labels), len(labels)), np.nan)
    write_matrix(wind_path, labels, matrix)
    written.append(wind_path)

    sw_path = out / "solar_wind_correlation.csv"
    fh, w = _writer(sw_path)
    with fh:
        w.writerow(("location", "correlation"))
        for wp in wind_profiles:
            sp = solar_profiles.get(wp.location_id)
            if sp is None:
                continue
            try:
                value = _fmt(correlation(sp.per_unit_output, wp.per_unit_output))
            except DegenerateSeriesError as exc:
                log.warning("%s: solar/wind correlation undefined (%s)", wp.location_id, exc)
                value = "nan"
            w.writerow((wp.location_id, value))
    written.append(sw_path)

    _write_manifest(out, "analyze", inputs, {"models": _models_params(solar_model, wind_model)}, written)
    for p in cf_profiles:
        print(f"{p.location_id:>10s} {p.technology:5s} capacity factor {capacity_factor(p):.4f}")
    return EXIT_OK


def cmd_scenarios(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    solar_model, wind_model = _models(args)
    paths, series = _weather(args)
    inputs = {"weather": [_entry(p) for p in paths]}
    solar, wind = {}, {}
    for s in series:
        if s.location_id in wind:
            raise ValidationError(f"location {s.location_id!r} given twice")
        solar[s.location_id], wind[s.location_id] = per_unit_profile(s, solar_model, wind_model)
    full = build_daily_scenarios(solar, wind)
    count = DEFAULT_SCENARIO_COUNT if args.scenarios is None else args.scenarios
    reduced = reduce_scenarios(full, count)

    scen_path = out / "scenarios.json"
    reduced.save(scen_path)
    summary = out / "scenario_probabilities.csv"
    fh, w = _writer(summary)
    with fh:
        w.writerow(("scenario", "probability"))
        for sid, p in zip(reduced.ids, reduced.probabilities):
            w.writerow((sid, _fmt(p)))
    params = {"scenarios": count, "original_count": len(full),
              "models": _models_params(solar_model, wind_model)}
    _write_manifest(out, "scenarios", inputs, params, [scen_path, summary])
    print(f"kept {len(reduced)} of {len(full)} daily scenarios -> {scen_path}")
    return EXIT_OK


def _plan_rows(solutions):
    for sol in solutions:
        for p in sol.microgrids:
            yield p


def cmd_plan(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    config, scen_file = Path(args.config), Path(args.scenario_file)
    _check_upstream(scen_file)
    inputs = {"config": _entry(config), "scenarios": _entry(scen_file)}
    system = load_system(config)
    scenarios = ScenarioSet.load(scen_file)
    threads = _threads(args)
    kw = dict(tol=args.tol, max_iter=args.max_iter, threads=threads)
    if args.mode == "noncoop":
        solutions = solve_all_noncoop(system, scenarios, **kw)
    else:
        solutions = [solve_iop(system, scenarios, enumeration_limit=args.enumeration_limit, **kw)]
    for sol in solutions:
        for note in sol.diagnostics:
            log.warning("%s", note)

    params = {"mode": args.mode, "tol": args.tol, "max_iter": args.max_iter,
              "enumeration_limit": args.enumeration_limit, "days": system.days,
              "daily_rate": system.daily_rate, "theta": system.theta}
    # thread count changes nothing in the result, so it is not recorded
    manifest_stub = {"version": MANIFEST_VERSION, "stage": f"plan_{args.mode}", "inputs": inputs,
                     "parameters": params}
    doc = {"manifest": manifest_stub, "mode": args.mode,
           "total_cost": math.fsum(s.total_cost for s in solutions),
           "solutions": [s.to_json() for s in solutions]}
    sol_path = out / f"plan_{args.mode}.json"
    _dump(sol_path, doc)

    cap_path = out / f"capacities_{args.mode}.csv"
    fh, w = _writer(cap_path)
    with fh:
        w.writerow(("microgrid", "install", "solar_kw", "wind_kw"))
        for p in _plan_rows(solutions):
            w.writerow((p.id, p.install, _fmt(p.solar_capacity), _fmt(p.wind_capacity)))
    cost_path = out / f"costs_{args.mode}.csv"
    fh, w = _writer(cost_path)
    with fh:
        w.writerow(("microgrid", "investment", "operational", "overall"))
        for p in _plan_rows(solutions):
            w.writerow((p.id, _fmt(p.investment_cost), _fmt(p.operational_cost), _fmt(p.overall_cost)))
    _write_manifest(out, f"plan_{args.mode}", inputs, params, [sol_path, cap_path, cost_path])

    for p in _plan_rows(solutions):
        print(f"{p.id:>8s} install={p.install} solar={p.solar_capacity:10.2f} kW wind={p.wind_capacity:10.2f} kW "
              f"overall={p.overall_cost:.6g}")
    print(f"{args.mode} total overall cost {doc['total_cost']:.6g}")
    return EXIT_OK


def _load_plan(path: Path, mode: str) -> dict:
    _check_upstream(path)
    try:
        doc = json.loads(path.read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    if doc.get("mode") != mode or "manifest" not in doc:
        raise ValidationError(f"{path}: not a {mode} plan written by 'gridplan plan'")
    return doc


def cmd_bargain(args) -> int:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    nc_path, co_path = Path(args.noncoop), Path(args.coop)
    nc, co = _load_plan(nc_path, "noncoop"), _load_plan(co_path, "coop")
    m_nc, m_co = nc["manifest"]["inputs"], co["manifest"]["inputs"]
    for key in ("scenarios", "config"):
        if m_nc[key]["sha256"] != m_co[key]["sha256"]:
            raise ManifestError(f"noncoop and coop plans were built from different {key} files "
                                f"({m_nc[key]['name']} vs {m_co[key]['name']})")
    for key, given in (("scenarios", args.scenario_file), ("config", args.config)):
        if given and sha256(given) != m_co[key]["sha256"]:
            raise ManifestError(f"{given} does not match the {key} file the plans were built from")

    coop = co["solutions"][0]
    ids = [p["id"] for p in coop["microgrids"]]
    nc_cost = {}
    for sol in nc["solutions"]:
        for p in sol["microgrids"]:
            nc_cost[p["id"]] = p
    if set(nc_cost) != set(ids):
        raise ManifestError("noncoop and coop plans cover different microgrids")
    inp = BargainingInput(
        np.array([nc_cost[i]["costs"]["overall"] for i in ids]),
        np.array([p["costs"]["operational"] for p in coop["microgrids"]]),
        math.fsum(p["costs"]["investment"] for p in coop["microgrids"]),
        tuple(ids),
    )
    outcome = solve_csp_closed_form(inp)
    check = solve_csp_numeric(inp)
    gap = float(np.max(np.abs(check.shares - outcome.shares))) / max(1.0, float(np.max(np.abs(outcome.shares))))
    reports = verify_incentive(outcome, inp)
    failed = [r.id for r in reports if not r.passed]
    nc_total = math.fsum(inp.noncoop_costs)
    co_total = math.fsum(inp.coop_operational_costs) + inp.total_investment
    reduction = 100.0 * (nc_total - co_total) / nc_total if nc_total else 0.0

    inputs = {"noncoop": _entry(nc_path), "coop": _entry(co_path),
              "scenarios": m_co["scenarios"], "config": m_co["config"]}
    doc = {"outcome": outcome.to_json(), "total_investment": inp.total_investment,
           "noncoop_total": nc_total, "coop_total": co_total, "system_reduction_pct": reduction,
           "numeric_check_rel_gap": gap,
           "incentive": [{"id": r.id, "noncoop_overall": r.noncoop_cost, "coop_overall": r.coop_cost,
                          "reduction_pct": r.reduction_pct, "passed": r.passed} for r in reports]}
    json_path = out / "bargaining.json"
    _dump(json_path, doc)
    share_path = out / "cost_sharing.csv"
    write_outcome_csv(share_path, outcome, inp)
    op_path = out / "operational_costs.csv"
    fh, w = _writer(op_path)
    with fh:
        w.writerow(("microgrid", "noncoop_operational", "coop_operational"))
        for i in ids:
            w.writerow((i, _fmt(nc_cost[i]["costs"]["operational"]),
                        _fmt(next(p for p in coop["microgrids"] if p["id"] == i)["costs"]["operational"])))
    _write_manifest(out, "bargain", inputs, {}, [json_path, share_path, op_path])

    for r, v in zip(reports, outcome.shares):
        print(f"{r.id:>8s} share={v:.6g} noncoop={r.noncoop_cost:.6g} coop={r.coop_cost:.6g} "
              f"reduction={r.reduction_pct:.2f}%")
    print(f"system overall cost reduced by {reduction:.2f}%")
    if failed:
        log.error("incentive constraint violated for %s", ", ".join(failed))
        return EXIT_SOLVER
    return EXIT_OK


def cmd_assets(args) -> int:
    """Copy the bundled synthetic dataset and configurations to a directory."""
    out = Path(args.out)
    (out / "weather").mkdir(parents=True, exist_ok=True)
    data = resources.files("gridplan") / "data"
    for name in ("models.json", "system_2mg.json", "system_4mg.json"):
        with resources.as_file(data / name) as src:
            shutil.copyfile(src, out / name)
    for item in sorted((data / "weather").iterdir(), key=lambda p: p.name):
        if item.name.endswith(".csv"):
            with resources.as_file(item) as src:
                shutil.copyfile(src, out / "weather" / item.name)
    print(f"bundled assets written to {out}")
    return EXIT_OK


# --------------------------------------------------------------------------
# argument parsing


def _positive_float(text: str) -> float:
    v = float(text)
    if not v > 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def _positive_int(text: str) -> int:
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="gridplan", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="debug logging")
    sub = parser.add_subparsers(dest="command", required=True)

    def weather_opts(p):
        p.add_argument("weather", nargs="+", help="hourly weather CSV, one per location")
        p.add_argument("--models", help="JSON with solar/wind model parameters")
        p.add_argument("--out", required=True, help="output directory")

    p = sub.add_parser("analyze", help="capacity factors and correlations")
    weather_opts(p)
    p.set_defaults(func=cmd_analyze)

    p = sub.add_parser("scenarios", help="daily scenarios reduced by forward selection")
    weather_opts(p)
    p.add_argument("--scenarios", type=_positive_int, default=None, metavar="S",
                   help=f"scenarios to keep (default {DEFAULT_SCENARIO_COUNT})")
    p.set_defaults(func=cmd_scenarios)

    p = sub.add_parser("plan", help="noncooperative or joint investment planning")
    p.add_argument("--config", required=True, help="system configuration JSON")
    p.add_argument("--scenario-file", required=True, help="scenarios.json from the scenarios stage")
    p.add_argument("--mode", choices=("noncoop", "coop"), required=True)
    p.add_argument("--tol", type=_positive_float, default=qpcore.DEFAULT_TOL)
    p.add_argument("--max-iter", type=_positive_int, default=qpcore.DEFAULT_MAX_ITER)
    p.add_argument("--threads", type=_positive_int, default=None,
                   help="parallel install branches (default: $GRIDPLAN_THREADS or 1)")
    p.add_argument("--enumeration-limit", type=_positive_int, default=DEFAULT_ENUMERATION_LIMIT)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("bargain", help="Nash-bargaining cost shares")
    p.add_argument("--noncoop", required=True, help="plan_noncoop.json")
    p.add_argument("--coop", required=True, help="plan_coop.json")
    p.add_argument("--scenario-file", help="optionally re-verify the scenario file digest")
    p.add_argument("--config", help="optionally re-verify the configuration digest")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_bargain)

    p = sub.add_parser("assets", help="copy the bundled dataset and configs")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_assets)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except ManifestError as exc:
        log.error("manifest mismatch: %s", exc)
        return EXIT_MANIFEST
    except (PlanningError, BargainingError) as exc:
        log.error("%s", exc)
        return EXIT_SOLVER
    except (ValidationError, qpcore.QPValidationError, OSError, ValueError) as exc:
        log.error("%s", exc)
        return EXIT_VALIDATION


if __name__ == "__main__":
    sys.exit(main())
