"""Nash-bargaining split of the joint investment cost."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

INCENTIVE_RTOL = 1e-6


class BargainingError(ValueError):
    """Inputs admit no individually rational split (negative total surplus)."""


@dataclass(frozen=True)
class BargainingInput:
    """Disagreement costs, cooperative operating costs and the investment bill."""

    noncoop_costs: np.ndarray
    coop_operational_costs: np.ndarray
    total_investment: float
    ids: tuple[str, ...] = ()

    def __post_init__(self):
        nc = np.asarray(self.noncoop_costs, dtype=float)
        op = np.asarray(self.coop_operational_costs, dtype=float)
        object.__setattr__(self, "noncoop_costs", nc)
        object.__setattr__(self, "coop_operational_costs", op)
        if nc.ndim != 1 or nc.size < 1 or op.shape != nc.shape:
            raise ValueError("need one noncooperative and one operational cost per microgrid")
        if not (np.all(np.isfinite(nc)) and np.all(np.isfinite(op)) and math.isfinite(self.total_investment)):
            raise ValueError("costs must be finite")
        ids = tuple(self.ids) or tuple(f"MG{k + 1}" for k in range(nc.size))
        if len(ids) != nc.size:
            raise ValueError("one id per microgrid required")
        object.__setattr__(self, "ids", ids)

    @property
    def m(self) -> int:
        return self.noncoop_costs.size

    @property
    def total_surplus(self) -> float:
        return math.fsum(self.noncoop_costs) - math.fsum(self.coop_operational_costs) - self.total_investment

    @property
    def scale(self) -> float:
        return max(1.0, math.fsum(np.abs(self.noncoop_costs)))

    @classmethod
    def from_plans(cls, noncoop: Sequence, coop) -> "BargainingInput":
        """Build from per-microgrid noncoop :class:`PlanSolution` s and the joint one."""
        ids = tuple(p.id for p in coop.microgrids)
        nc = {s.microgrids[0].id: s.total_cost for s in noncoop}
        if set(nc) != set(ids):
            raise ValueError("noncooperative and cooperative solutions cover different microgrids")
        return cls(
            np.array([nc[i] for i in ids]),
            np.array([p.operational_cost for p in coop.microgrids]),
            math.fsum(p.investment_cost for p in coop.microgrids),
            ids,
        )


@dataclass(frozen=True)
class BargainingOutcome:
    ids: tuple[str, ...]
    shares: np.ndarray
    surpluses: np.ndarray
    nash_product: float

    def to_json(self) -> dict:
        return {
            "ids": list(self.ids),
            "shares": self.shares.tolist(),
            "surpluses": self.surpluses.tolist(),
            "nash_product": self.nash_product,
        }


def _check_surplus(inp: BargainingInput) -> float:
    total = inp.total_surplus
    if total < -INCENTIVE_RTOL * inp.scale:
        raise BargainingError(
            f"total surplus {total:.6g} is negative: cooperation costs more than standing alone"
        )
    # a round-off deficit is shared equally, like any surplus
    return total


def _outcome(inp: BargainingInput, shares: np.ndarray) -> BargainingOutcome:
    sur = inp.noncoop_costs - (shares + inp.coop_operational_costs)
    return BargainingOutcome(inp.ids, shares, sur, float(np.prod(sur)))


def solve_csp_closed_form(inp: BargainingInput) -> BargainingOutcome:
    """Equal-surplus shares: v_i = C_i^nc - C_i^op - (total surplus) / M."""
    total = _check_surplus(inp)
    shares = inp.noncoop_costs - inp.coop_operational_costs - total / inp.m
    # put the budget round-off on the largest share so sum(v) matches exactly
    drift = inp.total_investment - math.fsum(shares)
    shares[int(np.argmax(np.abs(shares)))] += drift
    return _outcome(inp, shares)


def solve_csp_numeric(inp: BargainingInput, tol: float = 1e-14, max_iter: int = 100) -> BargainingOutcome:
    """Maximise sum(log surplus) over the budget hyperplane by Newton's method.

    Works on surplus fractions u (sum u = 1) and starts from a deliberately
    unequal interior point so the closed form is never the initial guess.
    """
    total = _check_surplus(inp)
    m = inp.m
    base = inp.noncoop_costs - inp.coop_operational_costs
    if abs(total) <= INCENTIVE_RTOL * inp.scale * 1e-6 or total < 0 or m == 1:
        u = np.full(m, 1.0 / m)
    else:
        u = np.arange(1, m + 1, dtype=float)
        u /= u.sum()
        ones = np.ones(m)
        for _ in range(max_iter):
            g = 1.0 / u
            hinv = u * u  # inverse of -Hessian diag(1/u^2)
            # Newton step for max sum log u s.t. 1'u = 1 (feasible start)
            nu = (ones @ (hinv * g)) / (ones @ hinv)
            du = hinv * (g - nu)
            # fraction-to-boundary damping keeps u > 0
            neg = du < 0
            step = 1.0 if not np.any(neg) else min(1.0, 0.99 * float(np.min(-u[neg] / du[neg])))
            u = u + step * du
            u /= u.sum()
            if np.max(np.abs(du)) <= tol:
                break
    shares = base - total * u
    return _outcome(inp, shares)


@dataclass(frozen=True)
class IncentiveReport:
    id: str
    noncoop_cost: float
    coop_cost: float
    reduction_pct: float
    passed: bool


def verify_incentive(outcome: BargainingOutcome, inp: BargainingInput) -> list[IncentiveReport]:
    """Flag any microgrid paying more under cooperation than standing alone."""
    out = []
    for k, mg in enumerate(inp.ids):
        nc = float(inp.noncoop_costs[k])
        coop = float(outcome.shares[k] + inp.coop_operational_costs[k])
        tol = INCENTIVE_RTOL * max(1.0, abs(nc))
        pct = 100.0 * (nc - coop) / nc if nc != 0 else 0.0
        out.append(IncentiveReport(mg, nc, coop, pct, coop <= nc + tol))
    return out


def write_outcome_csv(path, outcome: BargainingOutcome, inp: BargainingInput) -> None:
    reports = verify_incentive(outcome, inp)
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("microgrid", "cost_share", "surplus", "noncoop_overall", "coop_overall", "reduction_pct"))
        for k, r in enumerate(reports):
            w.writerow((r.id, repr(float(outcome.shares[k])), repr(float(outcome.surpluses[k])),
                        repr(r.noncoop_cost), repr(r.coop_cost), f"{r.reduction_pct:.6f}"))
