"""Convex quadratic programs with a diagonal Hessian.

Problems have the form::

    minimize    sum_k h_k (x_k - t_k)^2 + c^T x
    subject to  A_eq x  = b_eq
                A_in x <= b_in
                lo <= x <= hi

and are solved with a Mehrotra predictor-corrector interior-point method
followed by an active-set polish step.  Optimality is always judged by
:func:`check_kkt` on the original (unscaled) data.
"""

from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

logger = logging.getLogger(__name__)

OPTIMAL = "optimal"
INFEASIBLE = "infeasible"
ITERATION_LIMIT = "iteration_limit"

DEFAULT_TOL = 1e-6
DEFAULT_MAX_ITER = 200_000


class QPValidationError(ValueError):
    """Raised for malformed problems (bad shapes, h < 0, lo > hi, ...)."""


def _as_csr(A, n: int, name: str) -> sp.csr_matrix:
    if A is None:
        return sp.csr_matrix((0, n))
    A = sp.csr_matrix(A, dtype=float)
    if A.shape[1] != n:
        raise QPValidationError(f"{name} has {A.shape[1]} columns, expected {n}")
    return A


@dataclass(frozen=True)
class QuadraticProgram:
    """Immutable QP description.  See module docstring for the form."""

    h: np.ndarray
    t: np.ndarray
    c: np.ndarray
    A_eq: sp.csr_matrix
    b_eq: np.ndarray
    A_in: sp.csr_matrix
    b_in: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    names: tuple = ()

    @classmethod
    def build(
        cls,
        n: int,
        *,
        h=None,
        t=None,
        c=None,
        A_eq=None,
        b_eq=None,
        A_in=None,
        b_in=None,
        lo=None,
        hi=None,
        names=None,
    ) -> "QuadraticProgram":
        def vec(v, default):
            if v is None:
                return np.full(n, default, dtype=float)
            v = np.array(v, dtype=float).reshape(-1)
            if v.shape != (n,):
                raise QPValidationError(f"vector of length {v.shape[0]}, expected {n}")
            return v

        h, t, c = vec(h, 0.0), vec(t, 0.0), vec(c, 0.0)
        lo, hi = vec(lo, -np.inf), vec(hi, np.inf)
        A_eq = _as_csr(A_eq, n, "A_eq")
        A_in = _as_csr(A_in, n, "A_in")
        b_eq = np.zeros(0) if b_eq is None else np.array(b_eq, dtype=float).reshape(-1)
        b_in = np.zeros(0) if b_in is None else np.array(b_in, dtype=float).reshape(-1)
        if b_eq.shape[0] != A_eq.shape[0]:
            raise QPValidationError("b_eq length does not match A_eq rows")
        if b_in.shape[0] != A_in.shape[0]:
            raise QPValidationError("b_in length does not match A_in rows")
        names = tuple(names) if names is not None else tuple(f"x{k}" for k in range(n))
        if len(names) != n:
            raise QPValidationError("names length does not match n")
        qp = cls(h, t, c, A_eq, b_eq, A_in, b_in, lo, hi, names)
        qp.validate()
        return qp

    @property
    def n(self) -> int:
        return self.h.shape[0]

    def validate(self) -> None:
        for name in ("h", "t", "c", "b_eq", "b_in"):
            if not np.all(np.isfinite(getattr(self, name))):
                raise QPValidationError(f"{name} contains non-finite values")
        if np.any(self.h < 0):
            raise QPValidationError("quadratic coefficients must be nonnegative")
        if np.any(np.isnan(self.lo)) or np.any(np.isnan(self.hi)):
            raise QPValidationError("bounds contain NaN")
        if np.any(self.lo > self.hi):
            k = int(np.argmax(self.lo > self.hi))
            raise QPValidationError(f"lo > hi for variable {self.names[k]}")
        if np.any(self.lo == np.inf) or np.any(self.hi == -np.inf):
            raise QPValidationError("infinite bound on the wrong side")
        for A in (self.A_eq, self.A_in):
            if not np.all(np.isfinite(A.data)):
                raise QPValidationError("constraint matrix contains non-finite values")

    def objective(self, x: np.ndarray) -> float:
        x = np.asarray(x, dtype=float)
        return float(np.sum(self.h * (x - self.t) ** 2) + self.c @ x)

    def dump(self) -> str:
        """Plain-text listing, one line per nonzero, for external cross-checks."""
        nm = self.names
        f = lambda v: repr(float(v))  # noqa: E731
        lines = ["min"]
        for k in np.flatnonzero(self.h):
            lines.append(f"quad {nm[k]} {f(self.h[k])} {f(self.t[k])}")
        for k in np.flatnonzero(self.c):
            lines.append(f"lin {nm[k]} {f(self.c[k])}")
        for label, A, b, op in (("eq", self.A_eq, self.b_eq, "="), ("ineq", self.A_in, self.b_in, "<=")):
            for r in range(A.shape[0]):
                lo_, hi_ = A.indptr[r], A.indptr[r + 1]
                terms = " ".join(f"{nm[k]} {f(v)}" for k, v in zip(A.indices[lo_:hi_], A.data[lo_:hi_]))
                lines.append(f"{label} {r}: {terms} {op} {f(b[r])}")
        for k in range(self.n):
            if self.lo[k] != -np.inf or self.hi[k] != np.inf:
                lines.append(f"bnd {nm[k]} {f(self.lo[k])} {f(self.hi[k])}")
        return "\n".join(lines) + "\n"


@dataclass(frozen=True)
class KKTResiduals:
    primal_eq: float
    primal_ineq: float
    stationarity: float
    complementarity: float

    def max(self) -> float:
        return max(self.primal_eq, self.primal_ineq, self.stationarity, self.complementarity)

    def within(self, tol: float) -> bool:
        return self.max() <= tol


@dataclass(frozen=True)
class Multipliers:
    """Dual values.  ``bound`` is positive at an active upper bound and
    negative at an active lower bound."""

    eq: np.ndarray
    ineq: np.ndarray
    bound: np.ndarray


@dataclass(frozen=True)
class QpSolution:
    x: np.ndarray
    objective: float
    status: str
    kkt: KKTResiduals
    multipliers: Multipliers
    iterations: int = 0
    diagnostic: str = ""


def check_kkt(qp: QuadraticProgram, x, multipliers: Multipliers) -> KKTResiduals:
    """Recompute the four KKT residuals (infinity norms) from scratch.

    Dual sign violations (negative inequality multipliers, a bound multiplier
    pointing at an infinite bound) are counted in the complementarity entry.
    """
    x = np.asarray(x, dtype=float)
    y, z, lam = (np.asarray(a, dtype=float) for a in (multipliers.eq, multipliers.ineq, multipliers.bound))
    if x.shape != (qp.n,) or lam.shape != (qp.n,):
        raise QPValidationError("x / bound multipliers have the wrong length")
    if y.shape != qp.b_eq.shape or z.shape != qp.b_in.shape:
        raise QPValidationError("constraint multipliers have the wrong length")

    def inf_norm(v):
        return float(np.max(np.abs(v))) if v.size else 0.0

    r_eq = inf_norm(qp.A_eq @ x - qp.b_eq)
    slack_in = qp.b_in - qp.A_in @ x
    bound_viol = np.maximum(np.maximum(qp.lo - x, x - qp.hi), 0.0)
    r_in = max(inf_norm(np.maximum(-slack_in, 0.0)), inf_norm(bound_viol))

    grad = 2.0 * qp.h * (x - qp.t) + qp.c + qp.A_eq.T @ y + qp.A_in.T @ z + lam
    r_stat = inf_norm(grad)

    comp = [inf_norm(z * np.maximum(slack_in, 0.0)), inf_norm(np.maximum(-z, 0.0))]
    lam_up, lam_lo = np.maximum(lam, 0.0), np.maximum(-lam, 0.0)
    with np.errstate(invalid="ignore"):
        gap_up = np.where(np.isfinite(qp.hi), np.maximum(qp.hi - x, 0.0), np.inf)
        gap_lo = np.where(np.isfinite(qp.lo), np.maximum(x - qp.lo, 0.0), np.inf)
        comp_up = np.where(lam_up > 0, lam_up * np.where(np.isfinite(gap_up), gap_up, 1.0), 0.0)
        comp_lo = np.where(lam_lo > 0, lam_lo * np.where(np.isfinite(gap_lo), gap_lo, 1.0), 0.0)
    comp += [inf_norm(comp_up), inf_norm(comp_lo)]
    return KKTResiduals(r_eq, r_in, r_stat, max(comp))


# --------------------------------------------------------------------------
# scaling


@dataclass
class _Scaled:
    """Ruiz-equilibrated copy: x = D xs, rows scaled by E, cost scaled by k."""

    qp: QuadraticProgram
    D: np.ndarray
    E_eq: np.ndarray
    E_in: np.ndarray
    cost_scale: float


def _ruiz(qp: QuadraticProgram, iters: int = 15) -> _Scaled:
    n = qp.n
    D = np.ones(n)
    E_eq = np.ones(qp.A_eq.shape[0])
    E_in = np.ones(qp.A_in.shape[0])
    A = sp.vstack([qp.A_eq, qp.A_in]).tocsc() if (qp.A_eq.shape[0] + qp.A_in.shape[0]) else sp.csc_matrix((0, n))
    H = 2.0 * qp.h.copy()
    for _ in range(iters):
        As = sp.diags(np.concatenate([E_eq, E_in])) @ A @ sp.diags(D)
        col = np.maximum(abs(As).max(axis=0).toarray().ravel() if As.shape[0] else np.zeros(n), H * D * D)
        col = np.where(col > 0, col, 1.0)
        D = D / np.sqrt(col)
        if As.shape[0]:
            As = sp.diags(np.concatenate([E_eq, E_in])) @ A @ sp.diags(D)
            row = abs(As).max(axis=1).toarray().ravel()
            row = np.where(row > 0, row, 1.0)
            E = np.concatenate([E_eq, E_in]) / np.sqrt(row)
            E_eq, E_in = E[: E_eq.size], E[E_eq.size :]
    D = np.clip(D, 1e-4, 1e4)
    hs = qp.h * D * D
    cs = qp.c * D
    cost_scale = max(np.max(np.abs(cs), initial=0.0), np.max(2 * hs, initial=0.0), 1e-12)
    cost_scale = 1.0 / cost_scale
    scaled = QuadraticProgram(
        h=hs * cost_scale,
        t=np.where(qp.h > 0, qp.t / D, 0.0),
        c=cs * cost_scale,
        A_eq=(sp.diags(E_eq) @ qp.A_eq @ sp.diags(D)).tocsr(),
        b_eq=qp.b_eq * E_eq,
        A_in=(sp.diags(E_in) @ qp.A_in @ sp.diags(D)).tocsr(),
        b_in=qp.b_in * E_in,
        lo=qp.lo / D,
        hi=qp.hi / D,
        names=qp.names,
    )
    return _Scaled(scaled, D, E_eq, E_in, cost_scale)


def _unscale(sc: _Scaled, xs, ys, zs, lams):
    x = sc.D * xs
    y = ys * sc.E_eq / sc.cost_scale
    z = zs * sc.E_in / sc.cost_scale
    lam = lams / sc.D / sc.cost_scale
    return x, Multipliers(y, z, lam)


# --------------------------------------------------------------------------
# interior point


def _solve_kkt(K: sp.csc_matrix, rhs: np.ndarray, lu, K_exact=None, refine: int = 3) -> np.ndarray:
    sol = lu.solve(rhs)
    if K_exact is not None:
        for _ in range(refine):
            res = rhs - K_exact @ sol
            sol = sol + lu.solve(res)
    return sol


def _ipm(qp: QuadraticProgram, tol: float, max_iter: int, accept=None):
    """Infeasible primal-dual IPM on an already scaled problem.

    ``accept(x, y, z, lam)`` is consulted once the iterate is nearly
    optimal in scaled terms; returning True stops the iteration.
    Returns (x, y, z, lu, ll, L, U, converged, iterations, diverged).
    """
    n = qp.n
    A_eq, A_in = qp.A_eq.tocsc(), qp.A_in.tocsc()
    m_eq, m_in = A_eq.shape[0], A_in.shape[0]
    H = 2.0 * qp.h
    L = np.flatnonzero(np.isfinite(qp.lo))
    U = np.flatnonzero(np.isfinite(qp.hi))

    # start from the box midpoint (or 0), pushed inside finite bounds
    x = np.zeros(n)
    both = np.isfinite(qp.lo) & np.isfinite(qp.hi)
    x[both] = 0.5 * (qp.lo[both] + qp.hi[both])
    only_lo = np.isfinite(qp.lo) & ~np.isfinite(qp.hi)
    only_hi = ~np.isfinite(qp.lo) & np.isfinite(qp.hi)
    x[only_lo] = qp.lo[only_lo] + 1.0
    x[only_hi] = qp.hi[only_hi] - 1.0
    sl = np.maximum(x[L] - qp.lo[L], 1.0)
    su = np.maximum(qp.hi[U] - x[U], 1.0)
    w = np.maximum(qp.b_in - A_in @ x, 1.0)
    y = np.zeros(m_eq)
    z = np.ones(m_in)
    ll = np.ones(L.size)
    lu_ = np.ones(U.size)

    reg_p, reg_d = 1e-10, 1e-10
    Hd = sp.diags(H)
    top_eq = A_eq.T
    top_in = A_in.T
    n_comp = m_in + L.size + U.size
    scale_b = 1.0 + max(np.max(np.abs(qp.b_eq), initial=0.0), np.max(np.abs(qp.b_in), initial=0.0))
    scale_c = 1.0 + np.max(np.abs(qp.c), initial=0.0)
    diverged = False

    for it in range(1, max_iter + 1):
        PL_ll = np.zeros(n)
        PL_ll[L] = ll
        PU_lu = np.zeros(n)
        PU_lu[U] = lu_
        r_d = H * (x - qp.t) + qp.c + A_eq.T @ y + A_in.T @ z - PL_ll + PU_lu
        r_eq = A_eq @ x - qp.b_eq
        r_in = A_in @ x + w - qp.b_in
        r_l = x[L] - sl - qp.lo[L]
        r_u = x[U] + su - qp.hi[U]
        mu = (w @ z + sl @ ll + su @ lu_) / n_comp if n_comp else 0.0

        pres = max(
            np.max(np.abs(r_eq), initial=0.0),
            np.max(np.abs(r_in), initial=0.0),
            np.max(np.abs(r_l), initial=0.0),
            np.max(np.abs(r_u), initial=0.0),
        )
        dres = np.max(np.abs(r_d), initial=0.0)
        if pres <= tol * scale_b and dres <= tol * scale_c and mu <= tol:
            if accept is None:
                if mu <= tol * 1e-2:
                    return x, y, z, lu_, ll, L, U, True, it, False
            elif accept(x, y, z, _bound_multiplier(n, L, U, ll, lu_)):
                return x, y, z, lu_, ll, L, U, True, it, False
            if mu < 1e-300:
                break
        logger.debug("ipm it=%d pres=%.2e dres=%.2e mu=%.2e", it, pres, dres, mu)
        dual_norm = max(np.max(np.abs(y), initial=0.0), np.max(np.abs(z), initial=0.0))
        if dual_norm > 1e12 and pres > 1e-6 * scale_b:
            diverged = True
            return x, y, z, lu_, ll, L, U, False, it, diverged

        # diagonal contributions from bound slacks
        Dx = np.zeros(n)
        Dx[L] += ll / sl
        Dx[U] += lu_ / su
        Winv_z = w / z  # (W/Z) block

        K = sp.bmat(
            [
                [Hd + sp.diags(Dx + reg_p), top_eq, top_in],
                [A_eq, sp.diags(np.full(m_eq, -reg_d)) if m_eq else None, None],
                [A_in, None, sp.diags(-Winv_z - reg_d) if m_in else None],
            ],
            format="csc",
        )
        K_exact = sp.bmat(
            [
                [Hd + sp.diags(Dx), top_eq, top_in],
                [A_eq, sp.csc_matrix((m_eq, m_eq)) if m_eq else None, None],
                [A_in, None, sp.diags(-Winv_z) if m_in else None],
            ],
            format="csc",
        )
        try:
            fact = spla.splu(K, permc_spec="COLAMD")
        except RuntimeError:
            reg_p *= 100
            reg_d *= 100
            continue

        def direction(r_wz, r_sl, r_su):
            rhs1 = -r_d.copy()
            tmp = np.zeros(n)
            tmp[L] = (-r_sl - ll * r_l) / sl
            rhs1 += tmp
            tmp = np.zeros(n)
            tmp[U] = (-r_su + lu_ * r_u) / su
            rhs1 -= tmp
            rhs = np.concatenate([rhs1, -r_eq, r_wz / z - r_in])
            sol = _solve_kkt(K, rhs, fact, K_exact)
            dx = sol[:n]
            dy = sol[n : n + m_eq]
            dz = sol[n + m_eq :]
            dw = -r_in - A_in @ dx
            dsl = dx[L] + r_l
            dll = (-r_sl - ll * dsl) / sl
            dsu = -r_u - dx[U]
            dlu = (-r_su - lu_ * dsu) / su
            return dx, dy, dz, dw, dsl, dll, dsu, dlu

        def max_step(v, dv):
            neg = dv < 0
            if not np.any(neg):
                return 1.0
            return min(1.0, float(np.min(-v[neg] / dv[neg])))

        # predictor
        aff = direction(w * z, sl * ll, su * lu_)
        dx, dy, dz, dw, dsl, dll, dsu, dlu = aff
        a_p = min(max_step(w, dw), max_step(sl, dsl), max_step(su, dsu))
        a_d = min(max_step(z, dz), max_step(ll, dll), max_step(lu_, dlu))
        if n_comp:
            mu_aff = (
                (w + a_p * dw) @ (z + a_d * dz) + (sl + a_p * dsl) @ (ll + a_d * dll) + (su + a_p * dsu) @ (lu_ + a_d * dlu)
            ) / n_comp
            sigma = (mu_aff / mu) ** 3 if mu > 0 else 0.0
        else:
            sigma = 0.0
        # corrector
        cor = direction(
            w * z + dw * dz - sigma * mu,
            sl * ll + dsl * dll - sigma * mu,
            su * lu_ + dsu * dlu - sigma * mu,
        )
        dx, dy, dz, dw, dsl, dll, dsu, dlu = cor
        eta = 0.995 if mu > 1e-6 else 0.9999
        a_p = min(1.0, eta * min(max_step(w, dw), max_step(sl, dsl), max_step(su, dsu)))
        a_d = min(1.0, eta * min(max_step(z, dz), max_step(ll, dll), max_step(lu_, dlu)))
        if qp.h.any():
            # quadratic terms couple x into stationarity; use one step
            a_p = a_d = min(a_p, a_d)

        x = x + a_p * dx
        w = w + a_p * dw
        sl = sl + a_p * dsl
        su = su + a_p * dsu
        y = y + a_d * dy
        z = z + a_d * dz
        ll = ll + a_d * dll
        lu_ = lu_ + a_d * dlu
        # keep strictly positive
        floor = 1e-300
        w, z, sl, ll, su, lu_ = (np.maximum(v, floor) for v in (w, z, sl, ll, su, lu_))
        if max(a_p, a_d) < 1e-12:
            break

    return x, y, z, lu_, ll, L, U, False, it, diverged


def _bound_multiplier(n, L, U, ll, lu_):
    lam = np.zeros(n)
    lam[U] += lu_
    lam[L] -= ll
    return lam


# --------------------------------------------------------------------------
# polish


def _polish(qp: QuadraticProgram, x, y, z, lam):
    """Guess the active set from an IPM iterate and solve the resulting
    equality-constrained QP.  Returns (x, y, z, lam) or None."""
    n = qp.n
    slack_in = qp.b_in - qp.A_in @ x
    act_in = np.flatnonzero(z > slack_in)
    at_lo = np.isfinite(qp.lo) & (-lam > x - qp.lo) & (lam < 0)
    at_hi = np.isfinite(qp.hi) & (lam > qp.hi - x) & (lam > 0)
    fixed = at_lo | at_hi
    x_fix = np.where(at_lo, qp.lo, np.where(at_hi, qp.hi, 0.0))
    # equal bounds are always fixed
    eqb = np.isfinite(qp.lo) & (qp.lo == qp.hi)
    fixed |= eqb
    x_fix = np.where(eqb, qp.lo, x_fix)
    free = np.flatnonzero(~fixed)

    A_act = sp.vstack([qp.A_eq, qp.A_in[act_in]]).tocsr()
    b_act = np.concatenate([qp.b_eq, qp.b_in[act_in]])
    A_free = A_act[:, free].tocsc()
    A_fixed = A_act[:, np.flatnonzero(fixed)]
    b_red = b_act - A_fixed @ x_fix[fixed]
    m = A_act.shape[0]
    Hf = 2.0 * qp.h[free]
    gf = qp.c[free] - 2.0 * qp.h[free] * qp.t[free]

    delta = 1e-9
    K = sp.bmat(
        [[sp.diags(Hf), A_free.T], [A_free, sp.csc_matrix((m, m)) if m else None]],
        format="csc",
    )
    Kreg = K + sp.diags(np.concatenate([np.full(free.size, delta), np.full(m, -delta)]))
    rhs = np.concatenate([-gf, b_red])
    try:
        fact = spla.splu(Kreg.tocsc(), permc_spec="COLAMD")
    except RuntimeError:
        return None
    # start from the IPM point to keep the polished solution near it
    sol0 = np.concatenate([x[free], np.concatenate([y, z[act_in]])])
    sol = sol0 + fact.solve(rhs - K @ sol0)
    for _ in range(25):
        res = rhs - K @ sol
        if np.max(np.abs(res), initial=0.0) < 1e-13 * (1 + np.max(np.abs(rhs), initial=0.0)):
            break
        sol = sol + fact.solve(res)
    if not np.all(np.isfinite(sol)):
        return None

    xp = x_fix.copy()
    xp[free] = sol[: free.size]
    mult = sol[free.size :]
    yp = mult[: qp.b_eq.size]
    zp = np.zeros(qp.b_in.size)
    zp[act_in] = mult[qp.b_eq.size :]
    grad = 2.0 * qp.h * (xp - qp.t) + qp.c + qp.A_eq.T @ yp + qp.A_in.T @ zp
    lamp = np.zeros(n)
    lamp[fixed] = -grad[fixed]
    return xp, yp, zp, lamp


def _clean(qp: QuadraticProgram, x: np.ndarray) -> np.ndarray:
    return np.minimum(np.maximum(x, qp.lo), qp.hi)


# --------------------------------------------------------------------------
# infeasibility diagnostics


def _row_conflicts(qp: QuadraticProgram) -> list[str]:
    """Rows whose activity range over the bound box cannot meet the rhs."""
    out = []
    for label, A, b, is_eq in (("eq", qp.A_eq, qp.b_eq, True), ("ineq", qp.A_in, qp.b_in, False)):
        Ap = A.maximum(0)
        An = A.minimum(0)
        with np.errstate(invalid="ignore"):
            lo_act = Ap @ np.where(np.isfinite(qp.lo), qp.lo, -1e300) + An @ np.where(np.isfinite(qp.hi), qp.hi, 1e300)
            hi_act = Ap @ np.where(np.isfinite(qp.hi), qp.hi, 1e300) + An @ np.where(np.isfinite(qp.lo), qp.lo, -1e300)
        for r in range(A.shape[0]):
            slack = 1e-9 * (1 + abs(b[r]))
            if lo_act[r] > b[r] + slack or (is_eq and hi_act[r] < b[r] - slack):
                out.append(f"{label} row {r}: activity range [{lo_act[r]:.6g}, {hi_act[r]:.6g}] vs rhs {b[r]:.6g}")
    return out


def _presolve(qp: QuadraticProgram):
    """Drop fixed variables (lo == hi) and the rows left empty.

    Returns ``(reduced, free, eq_rows, in_rows)`` or ``None`` if nothing
    changes.  Fixed columns would otherwise leave the IPM without an
    interior point.
    """
    fixed = np.isfinite(qp.lo) & (qp.lo == qp.hi)
    if not fixed.any():
        return None
    free = np.flatnonzero(~fixed)
    xf = np.where(fixed, qp.lo, 0.0)
    b_eq = qp.b_eq - qp.A_eq @ xf
    b_in = qp.b_in - qp.A_in @ xf
    A_eq = qp.A_eq[:, free].tocsr()
    A_in = qp.A_in[:, free].tocsr()
    eq_rows = np.flatnonzero(np.diff(A_eq.indptr) > 0)
    in_rows = np.flatnonzero(np.diff(A_in.indptr) > 0)
    names = tuple(qp.names[k] for k in free) if qp.names else ()
    reduced = QuadraticProgram(
        h=qp.h[free], t=qp.t[free], c=qp.c[free],
        A_eq=A_eq[eq_rows], b_eq=b_eq[eq_rows], A_in=A_in[in_rows], b_in=b_in[in_rows],
        lo=qp.lo[free], hi=qp.hi[free], names=names,
    )
    return reduced, free, eq_rows, in_rows


def _expand(qp: QuadraticProgram, pre, x_r, mult_r: Multipliers):
    _, free, eq_rows, in_rows = pre
    x = qp.lo.copy()
    x[free] = x_r
    y = np.zeros(qp.b_eq.size)
    y[eq_rows] = mult_r.eq
    z = np.zeros(qp.b_in.size)
    z[in_rows] = mult_r.ineq
    # fixed columns absorb their whole gradient into the bound multiplier
    lam = -(2.0 * qp.h * (x - qp.t) + qp.c + qp.A_eq.T @ y + qp.A_in.T @ z)
    lam[free] = mult_r.bound
    return x, Multipliers(y, z, lam)


def _solve_core(qp: QuadraticProgram, tol: float, max_iter: int):
    sc = _ruiz(qp)
    ipm_tol = min(1e-9, tol * 1e-3)

    def accept(xs, ys, zs, lams):
        x, mult = _unscale(sc, xs, ys, zs, lams)
        return check_kkt(qp, _clean(qp, x), mult).within(0.5 * tol)

    xs, ys, zs, lus, lls, L, U, converged, iters, diverged = _ipm(sc.qp, ipm_tol, min(max_iter, 500), accept)
    lams = _bound_multiplier(qp.n, L, U, lls, lus)
    x, mult = _unscale(sc, xs, ys, zs, lams)

    candidates = []
    polished = _polish(sc.qp, xs, ys, zs, lams)
    if polished is not None:
        xp, yp, zp, lp = polished
        candidates.append(_unscale(sc, xp, yp, zp, lp))
    candidates.append((_clean(qp, x), mult))
    candidates.append((x, mult))
    best = min(candidates, key=lambda cand: check_kkt(qp, *cand).max())
    return best[0], best[1], converged, iters, diverged


def solve_qp(qp: QuadraticProgram, tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER) -> QpSolution:
    """Solve ``qp`` to KKT residuals ``<= tol``.

    The status is ``optimal`` only if :func:`check_kkt` on the returned point
    confirms every residual is within ``tol``.
    """
    qp.validate()
    if tol <= 0:
        raise QPValidationError("tol must be positive")
    n = qp.n
    conflicts = _row_conflicts(qp)
    if conflicts:
        zero = Multipliers(np.zeros(qp.b_eq.size), np.zeros(qp.b_in.size), np.zeros(n))
        x0 = _clean(qp, np.zeros(n))
        return QpSolution(x0, qp.objective(x0), INFEASIBLE, check_kkt(qp, x0, zero), zero, 0, "; ".join(conflicts[:10]))

    pre = _presolve(qp)
    if pre is None:
        x, mult, converged, iters, diverged = _solve_core(qp, tol, max_iter)
    elif pre[0].n == 0:
        x, mult = _expand(qp, pre, np.zeros(0), Multipliers(np.zeros(pre[0].b_eq.size), np.zeros(pre[0].b_in.size), np.zeros(0)))
        converged, iters, diverged = True, 0, False
    else:
        x_r, mult_r, converged, iters, diverged = _solve_core(pre[0], tol, max_iter)
        x, mult = _expand(qp, pre, x_r, mult_r)
    res = check_kkt(qp, x, mult)

    if res.within(tol):
        status = OPTIMAL
        diag = ""
    elif diverged or (not converged and res.primal_eq + res.primal_ineq > 1e3 * tol):
        status = INFEASIBLE
        diag = "interior-point iterates diverged without reaching primal feasibility"
    else:
        status = ITERATION_LIMIT
        diag = f"best KKT residual {res.max():.3e} > tol {tol:.1e}"
    logger.debug("solve_qp n=%d iters=%d status=%s kkt=%.2e", n, iters, status, res.max())
    return QpSolution(x, qp.objective(x), status, res, mult, iters, diag)


# --------------------------------------------------------------------------
# test oracle


def brute_force_min(qp: QuadraticProgram, grid_step: float):
    """Exhaustive grid search over the bound box.

    A grid point is accepted when every row holds within half a grid step
    (scaled by the row's largest coefficient when that exceeds one).  Returns
    ``(x, objective)`` or ``(None, inf)`` when no grid point qualifies.
    """
    if qp.n > 4:
        raise QPValidationError("brute force limited to n <= 4")
    if not (np.all(np.isfinite(qp.lo)) and np.all(np.isfinite(qp.hi))):
        raise QPValidationError("brute force needs a finite box")
    if grid_step <= 0:
        raise QPValidationError("grid_step must be positive")
    axes = [np.linspace(l, u, max(int(round((u - l) / grid_step)) + 1, 1)) for l, u in zip(qp.lo, qp.hi)]
    Aeq, Ain = qp.A_eq.toarray(), qp.A_in.toarray()
    # half a grid cell along the steepest coordinate of each row
    slack_eq = 0.5 * grid_step * np.maximum(1.0, np.abs(Aeq).max(axis=1, initial=0.0)) + 1e-12
    slack_in = 0.5 * grid_step * np.maximum(1.0, np.abs(Ain).max(axis=1, initial=0.0)) + 1e-12
    best_x, best_val = None, np.inf
    rest = np.stack(np.meshgrid(*axes[1:], indexing="ij"), axis=-1).reshape(-1, qp.n - 1) \
        if qp.n > 1 else np.zeros((1, 0))
    # stream over the first axis to keep memory bounded
    for x0 in axes[0]:
        pts = np.hstack([np.full((rest.shape[0], 1), x0), rest])
        ok = np.ones(pts.shape[0], dtype=bool)
        if Aeq.shape[0]:
            ok &= np.all(np.abs(pts @ Aeq.T - qp.b_eq) <= slack_eq, axis=1)
        if Ain.shape[0]:
            ok &= np.all(pts @ Ain.T - qp.b_in <= slack_in, axis=1)
        if not np.any(ok):
            continue
        pts = pts[ok]
        vals = np.sum(qp.h * (pts - qp.t) ** 2, axis=1) + pts @ qp.c
        k = int(np.argmin(vals))
        if vals[k] < best_val:
            best_x, best_val = pts[k].copy(), float(vals[k])
    return best_x, best_val
