"""Noncooperative and joint (IOP) investment-and-operation problems.

Install decisions ``z`` are enumerated outside the solver; for a fixed ``z``
every problem is a convex QP handed to :mod:`gridplan.qpcore`.
"""

from __future__ import annotations

import itertools
import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
import scipy.sparse as sp

from . import qpcore
from .meteorology import ValidationError
from .scenarios import ScenarioSet

logger = logging.getLogger(__name__)

DEFAULT_ENUMERATION_LIMIT = 16
TIE_RTOL = 1e-6
# per-unit availability treated as no resource at all (e.g. sin(pi) round-off)
DEAD_SLOT = 1e-9


class PlanningError(RuntimeError):
    """A subproblem could not be solved to certified optimality."""


# --------------------------------------------------------------------------
# input types


def _vec(v, what: str, length: int | None = None) -> np.ndarray:
    arr = np.asarray(v, dtype=float)
    if arr.ndim != 1 or arr.size == 0 or (length is not None and arr.size != length):
        raise ValidationError(f"{what}: expected {length or 'a nonempty list of'} values, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{what}: non-finite values")
    return arr


@dataclass(frozen=True)
class UserSpec:
    id: str
    daily_total: float
    l_min: np.ndarray
    l_max: np.ndarray
    preferred: np.ndarray
    beta: float

    def __post_init__(self):
        n_t = len(self.preferred)
        for name in ("l_min", "l_max", "preferred"):
            object.__setattr__(self, name, _vec(getattr(self, name), f"user {self.id} {name}", n_t))
        if self.beta < 0:
            raise ValidationError(f"user {self.id}: beta must be >= 0")
        if np.any(self.l_min > self.l_max):
            raise ValidationError(f"user {self.id}: l_min > l_max in some slot")
        tol = 1e-9 * max(1.0, abs(self.daily_total))
        if not self.l_min.sum() - tol <= self.daily_total <= self.l_max.sum() + tol:
            raise ValidationError(
                f"user {self.id}: daily total {self.daily_total} outside "
                f"[{self.l_min.sum()}, {self.l_max.sum()}]"
            )


@dataclass(frozen=True)
class StorageSpec:
    capacity: float = 0.0
    dod: float = 1.0
    charge_cap: float = 0.0
    discharge_cap: float = 0.0
    charge_eff: float = 1.0
    discharge_eff: float = 1.0
    wear_cost: float = 0.0
    initial_level: float | None = None

    def __post_init__(self):
        if self.capacity < 0 or self.charge_cap < 0 or self.discharge_cap < 0 or self.wear_cost < 0:
            raise ValidationError("storage capacity, limits and wear cost must be >= 0")
        if not 0 < self.dod <= 1:
            raise ValidationError("depth of discharge must be in (0, 1]")
        if not (0 < self.charge_eff <= 1 and 0 < self.discharge_eff <= 1):
            raise ValidationError("storage efficiencies must be in (0, 1]")
        s0 = self.level0
        if not self.s_min - 1e-12 <= s0 <= self.capacity + 1e-12:
            raise ValidationError(f"initial storage level {s0} outside [{self.s_min}, {self.capacity}]")

    @property
    def s_min(self) -> float:
        return self.capacity * (1.0 - self.dod)

    @property
    def level0(self) -> float:
        return self.s_min if self.initial_level is None else float(self.initial_level)

    @property
    def present(self) -> bool:
        return self.capacity > 0


@dataclass(frozen=True)
class MicrogridSpec:
    id: str
    location_id: str
    fixed_cost: float
    solar_unit_cost: float
    wind_unit_cost: float
    solar_cap: float
    wind_cap: float
    grid_cap: float
    inelastic_load: np.ndarray
    storage: StorageSpec = field(default_factory=StorageSpec)
    users: tuple[UserSpec, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "inelastic_load", _vec(self.inelastic_load, f"microgrid {self.id} load"))
        object.__setattr__(self, "users", tuple(self.users))
        for u in self.users:
            if u.preferred.size != self.inelastic_load.size:
                raise ValidationError(f"microgrid {self.id}: user {u.id} has a different slot count")
        for name in ("fixed_cost", "solar_unit_cost", "wind_unit_cost", "solar_cap", "wind_cap", "grid_cap"):
            v = getattr(self, name)
            if not math.isfinite(v) or v < 0:
                raise ValidationError(f"microgrid {self.id}: {name} must be finite and >= 0")
        ids = [u.id for u in self.users]
        if len(set(ids)) != len(ids):
            raise ValidationError(f"microgrid {self.id}: duplicate user ids")


@dataclass(frozen=True)
class SystemSpec:
    microgrids: tuple[MicrogridSpec, ...]
    tariff: np.ndarray
    distribution_eff: np.ndarray
    days: int
    daily_rate: float

    def __post_init__(self):
        object.__setattr__(self, "microgrids", tuple(self.microgrids))
        object.__setattr__(self, "tariff", _vec(self.tariff, "tariff"))
        m = len(self.microgrids)
        if m < 1:
            raise ValidationError("at least one microgrid required")
        for g in self.microgrids:
            if g.inelastic_load.size != self.tariff.size:
                raise ValidationError(f"microgrid {g.id}: load length differs from tariff length")
        ids = [g.id for g in self.microgrids]
        if len(set(ids)) != m:
            raise ValidationError("duplicate microgrid ids")
        eff = np.asarray(self.distribution_eff, dtype=float)
        if eff.shape != (m, m):
            raise ValidationError(f"distribution_eff must be {m}x{m}")
        if np.any(eff <= 0) or np.any(eff > 1) or np.any(np.diag(eff) != 1):
            raise ValidationError("distribution_eff entries must lie in (0, 1] with unit diagonal")
        object.__setattr__(self, "distribution_eff", eff)
        if self.days < 1 or self.daily_rate < 0:
            raise ValidationError("horizon needs days >= 1 and daily_rate >= 0")
        if np.any(self.tariff < 0):
            raise ValidationError("tariff must be >= 0")

    @property
    def slots(self) -> int:
        return self.tariff.size

    @property
    def theta(self) -> float:
        return discount_coefficient(self.days, self.daily_rate)

    def single(self, k: int) -> "SystemSpec":
        """Stand-alone system holding only microgrid ``k``."""
        return SystemSpec((self.microgrids[k],), self.tariff, np.ones((1, 1)), self.days, self.daily_rate)


# --------------------------------------------------------------------------
# cost helpers


def discount_coefficient(days: int, daily_rate: float) -> float:
    """Present-value factor sum_{d=1..D} (1 + R)^-d."""
    if days < 1 or daily_rate < 0:
        raise ValidationError("need days >= 1 and daily_rate >= 0")
    if daily_rate == 0:
        return float(days)
    return float(-math.expm1(-days * math.log1p(daily_rate)) / daily_rate)


def operational_cost(schedule: Mapping[str, np.ndarray], spec: MicrogridSpec, tariff) -> float:
    """Daily cost: procurement + storage wear + quadratic discomfort.

    ``schedule`` holds ``grid`` (q), ``charge`` (r), ``discharge`` (d) and
    ``loads`` (one array per user, in ``spec.users`` order).  Missing
    storage keys count as zero.
    """
    tariff = np.asarray(tariff, dtype=float)
    q = np.asarray(schedule["grid"], dtype=float)
    n_t = tariff.shape[0]
    r = np.asarray(schedule.get("charge", np.zeros(n_t)), dtype=float)
    d = np.asarray(schedule.get("discharge", np.zeros(n_t)), dtype=float)
    loads = [np.asarray(x, dtype=float) for x in schedule.get("loads", [])]
    if q.shape != (n_t,) or r.shape != (n_t,) or d.shape != (n_t,):
        raise ValidationError("schedule length does not match tariff")
    if len(loads) != len(spec.users) or any(x.shape != (n_t,) for x in loads):
        raise ValidationError("schedule loads do not match the microgrid's users")
    terms = [float(tariff @ q), spec.storage.wear_cost * float(np.sum(r + d))]
    for u, x in zip(spec.users, loads):
        terms.append(u.beta * float(np.sum((x - u.preferred[:n_t]) ** 2)))
    return math.fsum(terms)


def expected_operational_cost(costs, probabilities) -> float:
    c = np.asarray(costs, dtype=float)
    p = np.asarray(probabilities, dtype=float)
    if c.shape != p.shape:
        raise ValidationError("one probability per cost required")
    if np.any(p < 0) or abs(math.fsum(p) - 1.0) > 1e-9:
        raise ValidationError("probabilities must be >= 0 and sum to 1")
    return math.fsum(c * p)


def investment_cost(install: int, solar_kw: float, wind_kw: float, spec: MicrogridSpec) -> float:
    if install not in (0, 1):
        raise ValidationError("install must be 0 or 1")
    slack = 1e-9
    if not (-slack <= solar_kw <= spec.solar_cap * (1 + slack) + slack
            and -slack <= wind_kw <= spec.wind_cap * (1 + slack) + slack):
        raise ValidationError(f"microgrid {spec.id}: capacity outside [0, cap]")
    if not install:
        return 0.0
    return math.fsum([spec.fixed_cost, spec.solar_unit_cost * solar_kw, spec.wind_unit_cost * wind_kw])


# --------------------------------------------------------------------------
# QP assembly


class _Layout:
    """Sequential variable allocation with named index blocks."""

    def __init__(self):
        self.n = 0
        self.names: list[str] = []
        self.lo: list[np.ndarray] = []
        self.hi: list[np.ndarray] = []
        self.blocks: dict[tuple, np.ndarray] = {}

    def add(self, key: tuple, shape, lo, hi, label: str) -> np.ndarray:
        size = int(np.prod(shape))
        idx = np.arange(self.n, self.n + size).reshape(shape)
        self.n += size
        self.lo.append(np.broadcast_to(np.asarray(lo, dtype=float), shape).reshape(-1))
        self.hi.append(np.broadcast_to(np.asarray(hi, dtype=float), shape).reshape(-1))
        for k in np.ndindex(*shape) if shape else [()]:
            self.names.append(label + "".join(f"[{j}]" for j in k))
        self.blocks[key] = idx
        return idx


class _Rows:
    def __init__(self):
        self.r: list[int] = []
        self.c: list[int] = []
        self.v: list[float] = []
        self.b: list[float] = []

    def add(self, cols, vals, rhs) -> None:
        row = len(self.b)
        cols = np.atleast_1d(cols)
        vals = np.broadcast_to(np.asarray(vals, dtype=float), cols.shape)
        self.r.extend([row] * cols.size)
        self.c.extend(int(c) for c in cols)
        self.v.extend(float(v) for v in vals)
        self.b.append(float(rhs))

    def matrix(self, n: int):
        return sp.csr_matrix((self.v, (self.r, self.c)), shape=(len(self.b), n)), np.array(self.b)


@dataclass(frozen=True)
class _Built:
    qp: qpcore.QuadraticProgram
    layout: _Layout
    install: tuple[int, ...]
    cooperative: bool


def _profiles(scenarios: ScenarioSet, location: str):
    if location not in scenarios.locations:
        raise ValidationError(f"location {location!r} not present in scenario data")
    solar = np.stack([np.asarray(s.solar[location], dtype=float) for s in scenarios.scenarios])
    wind = np.stack([np.asarray(s.wind[location], dtype=float) for s in scenarios.scenarios])
    return solar, wind


def _assemble(system: SystemSpec, scenarios: ScenarioSet, theta: float, install, cooperative: bool) -> _Built:
    mgs = system.microgrids
    m = len(mgs)
    install = tuple(int(z) for z in install)
    if len(install) != m or any(z not in (0, 1) for z in install):
        raise ValidationError("install vector must hold one 0/1 entry per microgrid")
    if not cooperative and m != 1:
        raise ValidationError("the noncooperative problem covers exactly one microgrid")
    S = len(scenarios)
    T = system.slots
    if scenarios.slots != T:
        raise ValidationError(f"scenarios have {scenarios.slots} slots, the system has {T}")
    pi = scenarios.probabilities
    lay = _Layout()
    cost: dict[int, float] = {}
    quad: dict[int, tuple[float, float]] = {}
    eq, ineq = _Rows(), _Rows()
    sources = [j for j in range(m) if install[j]]

    for j in sources:
        g = mgs[j]
        cs, cw = lay.add(("Gs", j), (), 0.0, g.solar_cap, f"Gs[{g.id}]"), lay.add(("Gw", j), (), 0.0, g.wind_cap, f"Gw[{g.id}]")
        cost[int(cs)] = g.solar_unit_cost
        cost[int(cw)] = g.wind_unit_cost

    for i, g in enumerate(mgs):
        if cooperative:
            for j in sources:
                lay.add(("e", i, j), (S, T), 0.0, np.inf, f"e[{g.id}<-{mgs[j].id}]")
        elif install[i]:
            lay.add(("g", i), (S, T), 0.0, np.inf, f"g[{g.id}]")
        q = lay.add(("q", i), (S, T), 0.0, g.grid_cap, f"q[{g.id}]")
        for w in range(S):
            for t in range(T):
                cost[int(q[w, t])] = theta * pi[w] * system.tariff[t]
        st = g.storage
        if st.present:
            r = lay.add(("r", i), (S, T), 0.0, st.charge_cap, f"r[{g.id}]")
            d = lay.add(("d", i), (S, T), 0.0, st.discharge_cap, f"d[{g.id}]")
            lay.add(("s", i), (S, T), st.s_min, st.capacity, f"s[{g.id}]")
            for w in range(S):
                for t in range(T):
                    cost[int(r[w, t])] = theta * pi[w] * st.wear_cost
                    cost[int(d[w, t])] = theta * pi[w] * st.wear_cost
        for u in g.users:
            x = lay.add(("x", i, u.id), (S, T), u.l_min, u.l_max, f"x[{g.id}/{u.id}]")
            for w in range(S):
                for t in range(T):
                    quad[int(x[w, t])] = (theta * pi[w] * u.beta, u.preferred[t])

    B = lay.blocks
    for i, g in enumerate(mgs):
        st = g.storage
        # storage dynamics + terminal condition
        if st.present:
            r, d, s = B[("r", i)], B[("d", i)], B[("s", i)]
            for w in range(S):
                for t in range(T):
                    cols = [s[w, t], r[w, t], d[w, t]]
                    vals = [1.0, -st.charge_eff, 1.0 / st.discharge_eff]
                    rhs = 0.0
                    if t == 0:
                        rhs = st.level0
                    else:
                        cols.append(s[w, t - 1])
                        vals.append(-1.0)
                    eq.add(cols, vals, rhs)
        # daily energy requirement
        for u in g.users:
            x = B[("x", i, u.id)]
            for w in range(S):
                eq.add(x[w], 1.0, u.daily_total)
        # power balance
        for w in range(S):
            for t in range(T):
                cols, vals = [B[("q", i)][w, t]], [1.0]
                if cooperative:
                    for j in sources:
                        cols.append(B[("e", i, j)][w, t])
                        vals.append(system.distribution_eff[i, j])
                elif install[i]:
                    cols.append(B[("g", i)][w, t])
                    vals.append(1.0)
                if st.present:
                    cols += [B[("d", i)][w, t], B[("r", i)][w, t]]
                    vals += [1.0, -1.0]
                for u in g.users:
                    cols.append(B[("x", i, u.id)][w, t])
                    vals.append(-1.0)
                eq.add(cols, vals, g.inelastic_load[t])

    lo = np.concatenate(lay.lo) if lay.lo else np.zeros(0)
    hi = np.concatenate(lay.hi) if lay.hi else np.zeros(0)
    # terminal level as a fixed bound: s0 often sits on the DoD floor, and an
    # equality row there would leave no strictly interior point
    for i, g in enumerate(mgs):
        if g.storage.present:
            last = B[("s", i)][:, T - 1]
            lo[last] = hi[last] = g.storage.level0
    # renewable availability; slots with no resource pin the flows to zero
    for j in sources:
        solar, wind = _profiles(scenarios, mgs[j].location_id)
        gs, gw = B[("Gs", j)], B[("Gw", j)]
        for w in range(S):
            for t in range(T):
                if cooperative:
                    cols = [B[("e", i, j)][w, t] for i in range(m)]
                else:
                    cols = [B[("g", j)][w, t]]
                if solar[w, t] <= DEAD_SLOT and wind[w, t] <= DEAD_SLOT:
                    hi[cols] = 0.0
                    continue
                vals = [1.0] * len(cols)
                ineq.add(cols + [gs, gw], vals + [-solar[w, t], -wind[w, t]], 0.0)

    n = lay.n
    c = np.zeros(n)
    for k, v in cost.items():
        c[k] = v
    h = np.zeros(n)
    tgt = np.zeros(n)
    for k, (hk, tk) in quad.items():
        h[k], tgt[k] = hk, tk
    A_eq, b_eq = eq.matrix(n)
    A_in, b_in = ineq.matrix(n)
    qp = qpcore.QuadraticProgram.build(n, h=h, t=tgt, c=c, A_eq=A_eq, b_eq=b_eq, A_in=A_in, b_in=b_in,
                                       lo=lo, hi=hi, names=lay.names)
    return _Built(qp, lay, install, cooperative)


def build_noncoop_qp(spec: MicrogridSpec, scenarios: ScenarioSet, tariff, theta: float, install: int,
                     ) -> qpcore.QuadraticProgram:
    """Stand-alone problem of one microgrid with the install decision fixed.

    The objective holds the capacity-dependent investment terms plus
    ``theta`` times the expected daily operating cost; the fixed cost is a
    constant and is left out.
    """
    system = SystemSpec((spec,), tariff, np.ones((1, 1)), 1, 0.0)
    return _assemble(system, scenarios, theta, (install,), cooperative=False).qp


def build_iop_qp(system: SystemSpec, scenarios: ScenarioSet, theta: float, install) -> qpcore.QuadraticProgram:
    """Joint problem of all microgrids for a fixed install vector."""
    return _assemble(system, scenarios, theta, install, cooperative=True).qp


# --------------------------------------------------------------------------
# solutions


@dataclass
class MicrogridPlan:
    id: str
    install: int
    solar_capacity: float
    wind_capacity: float
    grid: np.ndarray
    charge: np.ndarray
    discharge: np.ndarray
    storage_level: np.ndarray
    loads: dict[str, np.ndarray]
    # cooperative: incoming renewable power per source microgrid; noncoop: {own id: g}
    supply: dict[str, np.ndarray]
    investment_cost: float
    daily_costs: np.ndarray
    expected_daily_cost: float
    operational_cost: float
    overall_cost: float

    def to_json(self) -> dict:
        arr = lambda a: np.asarray(a).tolist()
        return {
            "id": self.id,
            "install": self.install,
            "solar_capacity_kw": self.solar_capacity,
            "wind_capacity_kw": self.wind_capacity,
            "costs": {
                "investment": self.investment_cost,
                "expected_daily_operational": self.expected_daily_cost,
                "operational": self.operational_cost,
                "overall": self.overall_cost,
                "daily_by_scenario": arr(self.daily_costs),
            },
            "schedule": {
                "grid": arr(self.grid),
                "charge": arr(self.charge),
                "discharge": arr(self.discharge),
                "storage_level": arr(self.storage_level),
                "loads": {k: arr(v) for k, v in self.loads.items()},
                "supply": {k: arr(v) for k, v in self.supply.items()},
            },
        }


@dataclass
class PlanSolution:
    mode: str
    theta: float
    scenario_ids: list[int]
    probabilities: np.ndarray
    microgrids: list[MicrogridPlan]
    total_cost: float
    kkt_max: float
    branches: list[dict] = field(default_factory=list)
    diagnostics: list[str] = field(default_factory=list)

    @property
    def install(self) -> tuple[int, ...]:
        return tuple(p.install for p in self.microgrids)

    def plan(self, mg_id: str) -> MicrogridPlan:
        for p in self.microgrids:
            if p.id == mg_id:
                return p
        raise KeyError(mg_id)

    def to_json(self) -> dict:
        return {
            "mode": self.mode,
            "theta": self.theta,
            "scenario_ids": list(self.scenario_ids),
            "probabilities": np.asarray(self.probabilities).tolist(),
            "total_cost": self.total_cost,
            "kkt_max_residual": self.kkt_max,
            "branches": self.branches,
            "diagnostics": self.diagnostics,
            "microgrids": [p.to_json() for p in self.microgrids],
        }


def _decode(built: _Built, system: SystemSpec, scenarios: ScenarioSet, theta: float, x: np.ndarray) -> list[MicrogridPlan]:
    B = built.layout.blocks
    mgs = system.microgrids
    S, T = len(scenarios), system.slots
    # IPM round-off can leave x a hair outside its box; q >= 0 must hold exactly
    x = np.clip(x, built.qp.lo, built.qp.hi)
    zeros = np.zeros((S, T))
    plans = []
    for i, g in enumerate(mgs):
        z = built.install[i]
        gs = float(x[B[("Gs", i)]]) if z else 0.0
        gw = float(x[B[("Gw", i)]]) if z else 0.0
        q = x[B[("q", i)]]
        st = g.storage.present
        r = x[B[("r", i)]] if st else zeros
        d = x[B[("d", i)]] if st else zeros
        s = x[B[("s", i)]] if st else np.full((S, T), g.storage.level0)
        loads = {u.id: x[B[("x", i, u.id)]] for u in g.users}
        if built.cooperative:
            supply = {mgs[j].id: x[B[("e", i, j)]] for j in range(len(mgs)) if built.install[j]}
        else:
            supply = {g.id: x[B[("g", i)]]} if z else {}
        daily = np.array([
            operational_cost({"grid": q[w], "charge": r[w], "discharge": d[w],
                              "loads": [loads[u.id][w] for u in g.users]}, g, system.tariff)
            for w in range(S)
        ])
        exp = expected_operational_cost(daily, scenarios.probabilities)
        inv = investment_cost(z, gs, gw, g)
        oper = theta * exp
        plans.append(MicrogridPlan(g.id, z, gs, gw, q.copy(), np.array(r), np.array(d), np.array(s),
                                   {k: v.copy() for k, v in loads.items()},
                                   {k: v.copy() for k, v in supply.items()},
                                   inv, daily, exp, oper, inv + oper))
    return plans


def _solve_branch(system, scenarios, theta, install, cooperative, tol, max_iter):
    built = _assemble(system, scenarios, theta, install, cooperative)
    sol = qpcore.solve_qp(built.qp, tol=tol, max_iter=max_iter)
    return built, sol


def _audit(plans: list[MicrogridPlan], tol: float) -> list[str]:
    notes = []
    for p in plans:
        both = np.minimum(p.charge, p.discharge)
        if np.any(both > tol):
            w, t = np.unravel_index(int(np.argmax(both)), both.shape)
            notes.append(f"{p.id}: simultaneous charge/discharge {both[w, t]:.3g} kW (scenario #{w}, slot {t})")
    return notes


def _pick(results: list[tuple[tuple[int, ...], float]]) -> tuple[int, ...]:
    """Lowest total; within the tie tolerance prefer fewer installs, then lexicographic order."""
    best = min(total for _, total in results)
    tied = [z for z, total in results if total <= best + TIE_RTOL * max(1.0, abs(best))]
    return min(tied, key=lambda z: (sum(z), z))


def _run_branches(system, scenarios, theta, vectors, cooperative, tol, max_iter, threads):
    def work(z):
        return z, _solve_branch(system, scenarios, theta, z, cooperative, tol, max_iter)

    if threads and threads > 1 and len(vectors) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            out = list(pool.map(work, vectors))
    else:
        out = [work(z) for z in vectors]
    return out


def _finish(mode, system, scenarios, theta, outcomes, tol):
    results, failures, branch_log = [], [], []
    solved = {}
    for z, (built, sol) in outcomes:
        entry = {"install": list(z), "status": sol.status, "kkt_max_residual": sol.kkt.max()}
        if sol.status == qpcore.OPTIMAL:
            plans = _decode(built, system, scenarios, theta, sol.x)
            total = math.fsum(p.overall_cost for p in plans)
            entry["total_cost"] = total
            results.append((z, total))
            solved[z] = (plans, sol)
        elif sol.status == qpcore.ITERATION_LIMIT:
            failures.append(f"install={list(z)}: {sol.diagnostic}")
        else:
            entry["diagnostic"] = sol.diagnostic
        branch_log.append(entry)
    if failures:
        raise PlanningError(f"{mode}: uncertified subproblem(s): " + "; ".join(failures))
    if not results:
        raise PlanningError(f"{mode}: every install branch is infeasible: "
                            + "; ".join(f"install={b['install']}: {b.get('diagnostic', '')}" for b in branch_log))
    z = _pick(results)
    plans, sol = solved[z]
    total = dict(results)[z]
    return PlanSolution(mode, theta, scenarios.ids, scenarios.probabilities.copy(), plans, total,
                        sol.kkt.max(), branch_log, _audit(plans, tol))


def solve_noncoop(spec: MicrogridSpec, scenarios: ScenarioSet, tariff, theta: float, *,
                  tol: float = qpcore.DEFAULT_TOL, max_iter: int = qpcore.DEFAULT_MAX_ITER,
                  threads: int = 1) -> PlanSolution:
    """Best stand-alone plan of one microgrid (the better of install / no install)."""
    system = SystemSpec((spec,), tariff, np.ones((1, 1)), 1, 0.0)
    outcomes = _run_branches(system, scenarios, theta, [(0,), (1,)], False, tol, max_iter, threads)
    return _finish("noncoop", system, scenarios, theta, outcomes, tol)


def solve_all_noncoop(system: SystemSpec, scenarios: ScenarioSet, **kw) -> list[PlanSolution]:
    theta = system.theta
    return [solve_noncoop(g, scenarios, system.tariff, theta, **kw) for g in system.microgrids]


def solve_iop(system: SystemSpec, scenarios: ScenarioSet, theta: float | None = None, *,
              tol: float = qpcore.DEFAULT_TOL, max_iter: int = qpcore.DEFAULT_MAX_ITER,
              threads: int = 1, enumeration_limit: int = DEFAULT_ENUMERATION_LIMIT) -> PlanSolution:
    """Enumerate all 2^M install vectors and keep the cheapest joint plan."""
    m = len(system.microgrids)
    if m > enumeration_limit:
        raise PlanningError(f"{m} microgrids exceeds the enumeration limit of {enumeration_limit}")
    theta = system.theta if theta is None else theta
    vectors = list(itertools.product((0, 1), repeat=m))
    outcomes = _run_branches(system, scenarios, theta, vectors, True, tol, max_iter, threads)
    return _finish("coop", system, scenarios, theta, outcomes, tol)


# --------------------------------------------------------------------------
# independent constraint audit


def schedule_residuals(system: SystemSpec, scenarios: ScenarioSet, solution: PlanSolution) -> dict[str, float]:
    """Largest violation of each constraint family, recomputed from the decoded schedule."""
    mgs = system.microgrids
    idx = {g.id: k for k, g in enumerate(mgs)}
    S, T = len(scenarios), system.slots
    worst: dict[str, float] = {k: 0.0 for k in
                               ("supply_cap", "grid_bounds", "storage_bounds", "storage_dynamics",
                                "terminal", "demand_total", "demand_bounds", "balance", "capacity_bounds")}

    def bump(key, v):
        worst[key] = max(worst[key], float(np.max(v, initial=0.0)))

    delivered = {g.id: np.zeros((S, T)) for g in mgs}
    for p in solution.microgrids:
        g = mgs[idx[p.id]]
        st = g.storage
        bump("capacity_bounds", np.array([-p.solar_capacity, p.solar_capacity - g.solar_cap,
                                          -p.wind_capacity, p.wind_capacity - g.wind_cap]))
        bump("grid_bounds", np.maximum(-p.grid, p.grid - g.grid_cap))
        if st.present:
            bump("storage_bounds", np.maximum.reduce([-p.charge, p.charge - st.charge_cap,
                                                      -p.discharge, p.discharge - st.discharge_cap,
                                                      st.s_min - p.storage_level, p.storage_level - st.capacity]))
            prev = np.concatenate([np.full((S, 1), st.level0), p.storage_level[:, :-1]], axis=1)
            bump("storage_dynamics", np.abs(p.storage_level - prev - st.charge_eff * p.charge
                                            + p.discharge / st.discharge_eff))
            bump("terminal", np.abs(p.storage_level[:, -1] - st.level0))
        total_x = np.zeros((S, T))
        for u in g.users:
            x = p.loads[u.id]
            total_x += x
            bump("demand_total", np.abs(x.sum(axis=1) - u.daily_total))
            bump("demand_bounds", np.maximum(u.l_min - x, x - u.l_max))
        incoming = np.zeros((S, T))
        for src, e in p.supply.items():
            bump("supply_cap", -e)  # e >= 0
            eff = system.distribution_eff[idx[p.id], idx[src]] if solution.mode == "coop" else 1.0
            incoming += eff * e
            delivered[src] = delivered[src] + e
        bump("balance", np.abs(incoming + p.grid + p.discharge - p.charge - g.inelastic_load - total_x))
    for p in solution.microgrids:
        g = mgs[idx[p.id]]
        if p.install:
            solar, wind = _profiles(scenarios, g.location_id)
            avail = p.solar_capacity * solar + p.wind_capacity * wind
            bump("supply_cap", delivered[p.id] - avail)
        else:
            bump("supply_cap", delivered[p.id])
    return worst


# --------------------------------------------------------------------------
# configuration I/O


def _user_from(doc) -> UserSpec:
    return UserSpec(str(doc["id"]), float(doc["daily_total"]), doc["l_min"], doc["l_max"], doc["preferred"],
                    float(doc["beta"]))


def _storage_from(doc) -> StorageSpec:
    if not doc:
        return StorageSpec()
    known = {f for f in StorageSpec.__dataclass_fields__}
    extra = set(doc) - known
    if extra:
        raise ValidationError(f"unknown storage field(s) {sorted(extra)}")
    return StorageSpec(**{k: (None if v is None else float(v)) for k, v in doc.items()})


def system_from_json(doc: dict) -> SystemSpec:
    try:
        mgs = []
        for g in doc["microgrids"]:
            mgs.append(MicrogridSpec(
                id=str(g["id"]), location_id=str(g["location_id"]),
                fixed_cost=float(g["fixed_cost"]), solar_unit_cost=float(g["solar_unit_cost"]),
                wind_unit_cost=float(g["wind_unit_cost"]), solar_cap=float(g["solar_cap"]),
                wind_cap=float(g["wind_cap"]), grid_cap=float(g["grid_cap"]),
                inelastic_load=g["inelastic_load"], storage=_storage_from(g.get("storage")),
                users=tuple(_user_from(u) for u in g.get("users", [])),
            ))
        m = len(mgs)
        eff = doc.get("distribution_eff", np.ones((m, m)).tolist())
        horizon = doc["horizon"]
        return SystemSpec(tuple(mgs), doc["tariff"], eff, int(horizon["days"]), float(horizon["daily_rate"]))
    except (KeyError, TypeError) as exc:
        raise ValidationError(f"malformed system configuration: missing or bad field {exc}") from None


def load_system(path) -> SystemSpec:
    try:
        doc = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{path}: {exc}") from None
    return system_from_json(doc)
