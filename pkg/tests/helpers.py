"""Shared builders and oracles for the test suite."""

from __future__ import annotations

import itertools
import json
from pathlib import Path

import numpy as np

from gridplan.planning import MicrogridSpec, StorageSpec, SystemSpec, UserSpec
from gridplan.scenarios import Scenario, ScenarioSet

DATA = Path(__file__).resolve().parent / "data"
GOLDEN = Path(__file__).resolve().parent / "golden"
PKG_DATA = Path(__file__).resolve().parents[1] / "src" / "gridplan" / "data"


def scenario_set(solar: dict, wind: dict, probs=None, ids=None) -> ScenarioSet:
    """``solar[loc]`` / ``wind[loc]`` are (S, T) arrays."""
    locs = sorted(solar)
    S = np.asarray(solar[locs[0]]).shape[0]
    ids = ids or list(range(1, S + 1))
    probs = np.full(S, 1.0 / S) if probs is None else np.asarray(probs, float)
    scen = tuple(Scenario(ids[w], {l: np.asarray(solar[l], float)[w] for l in locs},
                          {l: np.asarray(wind[l], float)[w] for l in locs}) for w in range(S))
    return ScenarioSet(scen, probs)


def random_user(rng, uid: str, T: int) -> UserSpec:
    pref = rng.uniform(0.0, 40.0, T)
    total = float(pref.sum() * rng.uniform(0.8, 1.2))
    l_max = np.maximum(pref * 2.0, total / T * 1.5)
    return UserSpec(uid, total, np.zeros(T), l_max, pref, float(rng.uniform(0.01, 0.3)))


def random_microgrid(rng, mid: str, loc: str, T: int, storage: bool = True) -> MicrogridSpec:
    st = StorageSpec()
    if storage:
        cap = float(rng.uniform(50.0, 300.0))
        st = StorageSpec(cap, float(rng.uniform(0.5, 0.9)), 0.2 * cap, 0.2 * cap,
                         float(rng.uniform(0.9, 1.0)), float(rng.uniform(0.9, 1.0)), float(rng.uniform(0.01, 0.3)))
    users = tuple(random_user(rng, f"u{k}", T) for k in range(int(rng.integers(1, 3))))
    return MicrogridSpec(
        mid, loc,
        fixed_cost=float(rng.uniform(0.0, 2e4)),
        solar_unit_cost=float(rng.uniform(50.0, 200.0)),
        wind_unit_cost=float(rng.uniform(50.0, 200.0)),
        solar_cap=float(rng.uniform(100.0, 600.0)),
        wind_cap=float(rng.uniform(100.0, 600.0)),
        grid_cap=2000.0,
        inelastic_load=rng.uniform(20.0, 150.0, T),
        storage=st,
        users=users,
    )


def random_system(rng, m: int, T: int = 24, S: int = 3):
    """Random M-microgrid system plus an S-scenario set over M locations."""
    locs = [f"L{k}" for k in range(m)]
    mgs = tuple(random_microgrid(rng, f"MG{k + 1}", locs[k], T, storage=bool(rng.integers(0, 2)) or k == 0)
                for k in range(m))
    tariff = rng.uniform(0.5, 1.5, T)
    eff = rng.uniform(0.85, 0.99, (m, m))
    np.fill_diagonal(eff, 1.0)
    system = SystemSpec(mgs, tariff, eff, int(rng.integers(200, 800)), float(rng.uniform(0.0, 1e-3)))
    hours = np.arange(T)
    solar, wind = {}, {}
    for l in locs:
        bell = np.clip(np.sin(np.pi * (hours - 6) / 12), 0, None) if T == 24 else rng.random(T)
        solar[l] = np.clip(bell[None, :] * rng.uniform(0.3, 1.0, (S, 1)), 0, 1)
        wind[l] = np.clip(rng.uniform(0, 1, (S, T)) * (rng.random((S, T)) > 0.2), 0, 1)
    probs = rng.dirichlet(np.ones(S))
    probs[-1] = 1.0 - probs[:-1].sum()
    return system, scenario_set(solar, wind, probs)


# --------------------------------------------------------------------------
# grid oracles


def grid_minimize(f, lo, hi, coarse: int = 41, zoom: int = 21, levels: int = 6):
    """Exhaustive search over a tensor grid, then repeated exhaustive searches
    on shrinking windows around the incumbent.

    ``f`` maps an (N, d) array of points to N objective values (``inf`` for
    infeasible points).  Correct for convex ``f`` (the window always keeps the
    neighbours of the incumbent, which bracket the minimiser).
    """
    lo, hi = np.asarray(lo, float), np.asarray(hi, float)
    axes = [np.linspace(a, b, coarse) for a, b in zip(lo, hi)]
    step = (hi - lo) / (coarse - 1)
    best_x, best_f = None, np.inf
    for _ in range(levels + 1):
        pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, lo.size)
        vals = f(pts)
        k = int(np.argmin(vals))
        if vals[k] < best_f:
            best_x, best_f = pts[k], float(vals[k])
        # window = incumbent +- one old step
        a = np.maximum(lo, best_x - step)
        b = np.minimum(hi, best_x + step)
        axes = [np.linspace(u, v, zoom) for u, v in zip(a, b)]
        step = (b - a) / (zoom - 1)
    return best_x, best_f


def _capacity_vertices(rows, rhs, caps):
    """Every intersection of two lines ``rows[k] . G = rhs[k]`` inside the box."""
    lines = [(np.asarray(r, float), float(v)) for r, v in zip(rows, rhs)]
    lines += [(np.array([1.0, 0.0]), 0.0), (np.array([1.0, 0.0]), caps[0]),
              (np.array([0.0, 1.0]), 0.0), (np.array([0.0, 1.0]), caps[1])]
    pts = []
    for (a, u), (b, v) in itertools.combinations(lines, 2):
        M = np.vstack([a, b])
        if abs(np.linalg.det(M)) < 1e-14:
            continue
        G = np.linalg.solve(M, [u, v])
        if np.all(G >= -1e-12) and G[0] <= caps[0] + 1e-12 and G[1] <= caps[1] + 1e-12:
            pts.append(np.clip(G, 0.0, caps))
    return np.array(pts)


def noncoop_t2_oracle(spec: MicrogridSpec, tariff, theta, solar, wind, grid_points: int = 401, levels: int = 12):
    """Minimum (without F) of the T=2, S=1, one-user, no-storage stand-alone
    problem with capacities installed.

    For a fixed first-slot load ``x_1`` the best dispatch is closed form
    (renewables first, grid for the rest), which leaves a piecewise-linear
    convex function of (G_s, G_w); its minimum sits on a vertex of the
    arrangement of kink lines and box edges, all of which are enumerated.
    The outer search over ``x_1`` is an exhaustive grid, refined on the
    bracketing window (valid because the outer function is convex).
    Returns ``(G_s, G_w, x_1, objective)``.
    """
    (u,) = spec.users
    p = np.asarray(tariff, float)
    b = spec.inelastic_load
    A = np.stack([solar, wind], axis=1)  # availability rows per slot
    caps = np.array([spec.solar_cap, spec.wind_cap])

    def inner(x1):
        x = np.array([x1, u.daily_total - x1])
        need = b + x
        verts = _capacity_vertices(A, np.concatenate([need, need - spec.grid_cap]), caps)
        q = np.maximum(need[None, :] - verts @ A.T, 0.0)
        ok = np.all(q <= spec.grid_cap + 1e-9, axis=1)
        val = verts @ np.array([spec.solar_unit_cost, spec.wind_unit_cost]) + theta * (q @ p)
        val = np.where(ok, val, np.inf) + theta * u.beta * float(np.sum((x - u.preferred) ** 2))
        k = int(np.argmin(val))
        return float(val[k]), verts[k]

    lo = max(u.l_min[0], u.daily_total - u.l_max[1])
    hi = min(u.l_max[0], u.daily_total - u.l_min[1])
    best = (np.inf, None, None)
    for _ in range(levels):
        grid = np.linspace(lo, hi, grid_points)
        vals = [inner(x1) for x1 in grid]
        k = int(np.argmin([v for v, _ in vals]))
        if vals[k][0] < best[0]:
            best = (vals[k][0], vals[k][1], grid[k])
        step = (hi - lo) / (grid_points - 1)
        lo, hi = max(lo, grid[k] - step), min(hi, grid[k] + step)
        if hi - lo < 1e-12:
            break
    val, G, x1 = best
    return G[0], G[1], x1, val


def iop_t1_objective(system: SystemSpec, install, theta, solar):
    """Two microgrids, T=1, S=1, solar-only availability, fixed loads.

    With one slot the daily-energy equality pins every user load, so the
    joint problem reduces to the two solar capacities; the cheapest dispatch
    serves each microgrid from its own array, ships any surplus to the other
    one (losing 1 - eta on the way) and buys the remaining deficit.
    """
    g1, g2 = system.microgrids
    p = float(system.tariff[0])
    eta = system.distribution_eff
    need = np.array([g.inelastic_load[0] + sum(u.daily_total for u in g.users) for g in (g1, g2)])
    disc = np.array([theta * sum(u.beta * float((u.daily_total - u.preferred[0]) ** 2) for u in g.users)
                     for g in (g1, g2)])

    def f(pts):
        gs = pts * np.asarray(install, float)[None, :]
        avail = gs * np.asarray(solar, float)[None, :]
        own = np.minimum(avail, need[None, :])
        surplus = avail - own
        deficit = need[None, :] - own
        ship12 = np.minimum(surplus[:, 0], deficit[:, 1] / eta[1, 0])
        ship21 = np.minimum(surplus[:, 1], deficit[:, 0] / eta[0, 1])
        q1 = deficit[:, 0] - eta[0, 1] * ship21
        q2 = deficit[:, 1] - eta[1, 0] * ship12
        ok = (q1 <= g1.grid_cap + 1e-12) & (q2 <= g2.grid_cap + 1e-12)
        val = (g1.solar_unit_cost * gs[:, 0] + g2.solar_unit_cost * gs[:, 1]
               + theta * p * (q1 + q2) + disc.sum())
        return np.where(ok, val, np.inf)

    return f


def iop_t1_oracle(system: SystemSpec, install, theta, solar):
    """Exact minimum of :func:`iop_t1_objective` over the capacity box.

    The objective is piecewise linear in (G_1, G_2) with kinks where a
    microgrid exactly covers itself or exactly covers the other's deficit,
    so its minimum is attained on a vertex of those lines and the box.
    Returns ``(G, objective)`` (wind capacity is zero at the optimum because
    the wind profile is zero and wind capacity costs money).
    """
    g1, g2 = system.microgrids
    eta = system.distribution_eff
    s = np.asarray(solar, float)
    need = np.array([g.inelastic_load[0] + sum(u.daily_total for u in g.users) for g in (g1, g2)])
    rows = [[s[0], 0.0], [0.0, s[1]], [s[0], s[1] / eta[1, 0]], [s[0] / eta[0, 1], s[1]]]
    rhs = [need[0], need[1], need[0] + need[1] / eta[1, 0], need[1] + need[0] / eta[0, 1]]
    caps = np.array([g1.solar_cap, g2.solar_cap]) * np.asarray(install, float)
    verts = _capacity_vertices(rows, rhs, caps)
    vals = iop_t1_objective(system, install, theta, solar)(verts)
    k = int(np.argmin(vals))
    return verts[k], float(vals[k])


def exhaustive_reduction(sset: ScenarioSet, count: int, error_fn):
    """Best reduction objective over all subsets of the given size."""
    ids = sset.ids
    return min(error_fn(sset, list(c)) for c in itertools.combinations(ids, count))


def load_qp_instances():
    from gridplan.qpcore import QuadraticProgram

    doc = json.loads((DATA / "qp_micro.json").read_text())
    out = []
    for inst in doc["instances"]:
        kw = {k: inst[k] for k in ("h", "t", "c", "A_eq", "b_eq", "A_in", "b_in", "lo", "hi") if k in inst}
        out.append((inst["name"], QuadraticProgram.build(inst["n"], **kw)))
    return out
