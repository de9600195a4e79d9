"""Dense convex QP solver.

Solves

    minimize    1/2 x'Hx + g'x + const
    subject to  A_eq x = b_eq,  lb <= x <= ub

with an alternating-direction (ADMM) scheme on the stacked constraint matrix
[A_eq; I], followed by an active-set polish that re-solves the equality
constrained QP on the detected active set.  Both primal and dual variables are
returned; the sign convention is

    H x + g + A_eq' mu_eq + mu_bound = 0,

so ``mu_bound`` is positive at an active upper bound and negative at an active
lower bound.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass, field
from typing import Mapping

import numpy as np
import scipy.linalg as sla

logger = logging.getLogger(__name__)

SYMMETRY_TOL = 1e-8


class QpError(ValueError):
    """Malformed QP data (dimension mismatch, lb > ub, asymmetric H)."""


class NotConvexError(QpError):
    """The cost matrix has a negative pivot in its LDL' factorization."""


class Status(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    MAX_ITERATIONS = "MaxIterations"
    UNBOUNDED = "Unbounded"


@dataclass(frozen=True)
class QpProblem:
    H: np.ndarray
    g: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    lb: np.ndarray
    ub: np.ndarray
    const: float = 0.0

    def __post_init__(self):
        H = np.atleast_2d(np.asarray(self.H, dtype=float))
        g = np.atleast_1d(np.asarray(self.g, dtype=float)).ravel()
        n = g.size
        A = np.asarray(self.A_eq, dtype=float)
        if A.size == 0:
            A = A.reshape(0, n)
        b = np.asarray(self.b_eq, dtype=float).ravel()
        lb = np.broadcast_to(np.asarray(self.lb, dtype=float), (n,)).copy()
        ub = np.broadcast_to(np.asarray(self.ub, dtype=float), (n,)).copy()
        if H.shape != (n, n):
            raise QpError(f"H has shape {H.shape}, expected ({n}, {n})")
        if A.ndim != 2 or A.shape[1] != n:
            raise QpError(f"A_eq has shape {A.shape}, expected (*, {n})")
        if A.shape[0] != b.size:
            raise QpError(f"A_eq has {A.shape[0]} rows but b_eq has {b.size} entries")
        asym = np.max(np.abs(H - H.T)) if n else 0.0
        if asym > SYMMETRY_TOL * max(1.0, np.max(np.abs(H), initial=0.0)):
            raise QpError(f"H is not symmetric (max asymmetry {asym:.3e})")
        if np.any(lb > ub):
            i = int(np.argmax(lb > ub))
            raise QpError(f"lb[{i}] = {lb[i]} exceeds ub[{i}] = {ub[i]}")
        for name, val in (("H", 0.5 * (H + H.T)), ("g", g), ("A_eq", A), ("b_eq", b),
                          ("lb", lb), ("ub", ub)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n(self) -> int:
        return self.g.size

    @property
    def n_eq(self) -> int:
        return self.b_eq.size

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.H @ x + self.g @ x + self.const)


@dataclass(frozen=True)
class QpSolution:
    x_star: np.ndarray
    mu_eq: np.ndarray
    mu_bound: np.ndarray
    objective: float
    status: Status
    iterations: int = 0
    prim_res: float = np.nan
    dual_res: float = np.nan
    polished: bool = False
    certificate: float = np.nan
    mu_fixed: np.ndarray = field(default_factory=lambda: np.zeros(0))

    @property
    def ok(self) -> bool:
        return self.status is Status.OPTIMAL


@dataclass
class SolverSettings:
    eps_prim: float = 1e-8
    eps_dual: float = 1e-8
    max_iterations: int = 200_000
    rho: float = 0.1
    sigma: float = 1e-6
    alpha: float = 1.6
    adapt_interval: int = 25
    eq_rho_scale: float = 1e3
    scaling_iterations: int = 10
    polish: bool = True
    polish_delta: float = 1e-9
    polish_refine: int = 30
    polish_interval: int = 100
    polish_rounds: int = 8
    infeas_window: int = 5000
    eps_certificate: float = 1e-7


def kkt_residuals(problem: QpProblem, x, mu_eq, mu_bound) -> tuple[float, float]:
    """Primal (equality + bound violation) and stationarity residuals, inf-norm."""
    r_eq = np.max(np.abs(problem.A_eq @ x - problem.b_eq), initial=0.0)
    r_bd = np.max(np.maximum(problem.lb - x, 0.0), initial=0.0)
    r_bd = max(r_bd, np.max(np.maximum(x - problem.ub, 0.0), initial=0.0))
    stat = problem.H @ x + problem.g + problem.A_eq.T @ mu_eq + mu_bound
    return float(max(r_eq, r_bd)), float(np.max(np.abs(stat), initial=0.0))


def check_psd(H: np.ndarray, tol: float = 1e-9) -> None:
    """Raise NotConvexError naming the first negative pivot of H = L D L'."""
    if H.size == 0:
        return
    scale = max(1.0, float(np.max(np.abs(H))))
    _, D, perm = sla.ldl(H, lower=True)
    n = H.shape[0]
    i = 0
    while i < n:
        if i + 1 < n and D[i + 1, i] != 0.0:
            block = D[i:i + 2, i:i + 2]
            eig = np.linalg.eigvalsh(block)
            if eig[0] < -tol * scale:
                raise NotConvexError(
                    f"H is not positive semidefinite: 2x2 pivot at rows {perm[i]},{perm[i + 1]} "
                    f"has eigenvalue {eig[0]:.3e}")
            i += 2
        else:
            if D[i, i] < -tol * scale:
                raise NotConvexError(
                    f"H is not positive semidefinite: pivot {perm[i]} equals {D[i, i]:.3e}")
            i += 1


class _Scaled:
    """Ruiz-equilibrated copy of a problem: x = D xs, eq rows scaled by E, cost by c."""

    def __init__(self, p: QpProblem, iterations: int):
        n, m = p.n, p.n_eq
        D = np.ones(n)
        E = np.ones(m)
        H, A = p.H.copy(), p.A_eq.copy()
        for _ in range(iterations):
            col = np.max(np.abs(H), axis=0, initial=0.0)
            if m:
                col = np.maximum(col, np.max(np.abs(A), axis=0))
            dD = 1.0 / np.sqrt(np.clip(col, 1e-4, 1e4))
            dD[col == 0] = 1.0
            dE = np.ones(m)
            if m:
                row = np.max(np.abs(A), axis=1)
                dE = 1.0 / np.sqrt(np.clip(row, 1e-4, 1e4))
                dE[row == 0] = 1.0
            H = dD[:, None] * H * dD[None, :]
            A = dE[:, None] * A * dD[None, :]
            D *= dD
            E *= dE
        g = D * p.g
        c = 1.0 / max(1.0, np.max(np.abs(H), initial=0.0), np.max(np.abs(g), initial=0.0))
        c = min(c, 1e4)
        self.D, self.E, self.c = D, E, c
        self.H = c * H
        self.g = c * g
        self.A = A
        self.b = E * p.b_eq
        with np.errstate(invalid="ignore"):
            self.lb = p.lb / D
            self.ub = p.ub / D

    def unscale(self, xs, ys_eq, ys_b):
        return self.D * xs, self.E * ys_eq / self.c, ys_b / (self.D * self.c)


def solve_qp(problem: QpProblem, settings: SolverSettings | None = None,
             x0: np.ndarray | None = None) -> QpSolution:
    """Solve a convex QP; ``x0`` optionally seeds the primal iterate."""
    s = settings or SolverSettings()
    p = problem
    check_psd(p.H)
    n, m = p.n, p.n_eq
    if n == 0:
        return QpSolution(np.zeros(0), np.zeros(m), np.zeros(0), p.const, Status.OPTIMAL)

    sc = _Scaled(p, s.scaling_iterations)
    H, g, A, b = sc.H, sc.g, sc.A, sc.b
    lb, ub = sc.lb, sc.ub
    box_free = np.isinf(lb) & np.isinf(ub)
    box_fixed = lb == ub

    def rho_vectors(rho):
        r_eq = np.full(m, rho * s.eq_rho_scale)
        r_b = np.full(n, rho)
        r_b[box_free] = 1e-6
        r_b[box_fixed] = rho * s.eq_rho_scale
        return r_eq, r_b

    def factor(rho):
        r_eq, r_b = rho_vectors(rho)
        K = H + s.sigma * np.eye(n) + np.diag(r_b)
        if m:
            K += A.T @ (r_eq[:, None] * A)
        return sla.cho_factor(K), r_eq, r_b

    rho = s.rho
    chol, r_eq, r_b = factor(rho)

    x = np.zeros(n) if x0 is None else np.asarray(x0, dtype=float) / sc.D
    x = np.where(np.isfinite(x), x, 0.0)
    z_b = np.clip(x, lb, ub)
    z_eq = b.copy()
    y_eq = np.zeros(m)
    y_b = np.zeros(n)

    last_polish_res = np.inf
    last_polish_it = 0
    history: list[tuple[int, float]] = []
    it = 0
    prim = dual = np.inf
    cert = np.nan
    x_prev, y_eq_prev, y_b_prev = x.copy(), y_eq.copy(), y_b.copy()

    while it < s.max_iterations:
        it += 1
        x_prev[:] = x
        y_eq_prev[:] = y_eq
        y_b_prev[:] = y_b
        rhs = s.sigma * x - g + (r_b * z_b - y_b)
        if m:
            rhs += A.T @ (r_eq * z_eq - y_eq)
        xt = sla.cho_solve(chol, rhs)
        zt_b = xt
        zt_eq = A @ xt
        x = s.alpha * xt + (1 - s.alpha) * x
        zr_b = s.alpha * zt_b + (1 - s.alpha) * z_b
        zr_eq = s.alpha * zt_eq + (1 - s.alpha) * z_eq
        z_b_new = np.clip(zr_b + y_b / r_b, lb, ub)
        y_b = y_b + r_b * (zr_b - z_b_new)
        z_b = z_b_new
        y_eq = y_eq + r_eq * (zr_eq - b)
        z_eq = b

        if it % s.adapt_interval and it != 1:
            continue

        xu, mu_eq, mu_b = sc.unscale(x, y_eq, y_b)
        prim, dual = _admm_residuals(p, xu, sc.D * z_b, mu_eq, mu_b)

        status, cert = _certificates(s, A, lb, ub, b, H, g, x - x_prev, y_eq - y_eq_prev,
                                     y_b - y_b_prev)
        if status is not None:
            logger.debug("certificate %s after %d iterations", status.value, it)
            return _failed(p, sc, x, y_eq, y_b, status, it, prim, dual, cert)

        if prim <= s.eps_prim and dual <= s.eps_dual:
            sol = _polish(p, sc, s, x, z_b, y_eq, y_b, it) if s.polish else None
            if sol is not None:
                return sol
            mu_b_c = _clean_bound_duals(p, xu, mu_b, s)
            return QpSolution(xu, mu_eq, mu_b_c, p.objective(xu), Status.OPTIMAL, it,
                              prim, dual)

        worst = max(prim, dual)
        if s.polish and it >= 50 and (worst <= 0.1 * last_polish_res
                                      or it - last_polish_it >= s.polish_interval):
            last_polish_res = min(worst, last_polish_res)
            last_polish_it = it
            sol = _polish(p, sc, s, x, z_b, y_eq, y_b, it)
            if sol is not None:
                return sol

        history.append((it, prim))
        if _stagnant(history, s.infeas_window) and dual <= 1e3 * s.eps_dual:
            return _failed(p, sc, x, y_eq, y_b, Status.INFEASIBLE, it, prim, dual, prim)

        if it % s.adapt_interval == 0:
            new_rho = _adapt_rho(rho, H, g, A, x, z_b, y_eq, y_b, b)
            if new_rho > 5 * rho or new_rho < 0.2 * rho:
                rho = new_rho
                chol, r_eq, r_b = factor(rho)

    xu, mu_eq, mu_b = sc.unscale(x, y_eq, y_b)
    return QpSolution(xu, mu_eq, mu_b, p.objective(xu), Status.MAX_ITERATIONS, it, prim, dual)


def _admm_residuals(p, x, z_b, mu_eq, mu_b):
    r_eq = np.max(np.abs(p.A_eq @ x - p.b_eq), initial=0.0)
    r_b = np.max(np.abs(x - z_b), initial=0.0)
    stat = p.H @ x + p.g + p.A_eq.T @ mu_eq + mu_b
    return float(max(r_eq, r_b)), float(np.max(np.abs(stat), initial=0.0))


def _stagnant(history, window):
    if not history or history[-1][0] < window:
        return False
    it_now, r_now = history[-1]
    for it_old, r_old in history:
        if it_old >= it_now - window:
            return r_now > 0.5 * r_old
    return False


def _adapt_rho(rho, H, g, A, x, z_b, y_eq, y_b, b):
    ax = np.concatenate([A @ x, x])
    z = np.concatenate([b, z_b])
    y = np.concatenate([y_eq, y_b])
    r_p = np.max(np.abs(ax - z), initial=0.0)
    aty = A.T @ y_eq + y_b
    r_d = np.max(np.abs(H @ x + g + aty), initial=0.0)
    np_ = max(np.max(np.abs(ax), initial=0.0), np.max(np.abs(z), initial=0.0), 1e-12)
    nd = max(np.max(np.abs(H @ x), initial=0.0), np.max(np.abs(aty), initial=0.0),
             np.max(np.abs(g), initial=0.0), 1e-12)
    ratio = (r_p / np_) / max(r_d / nd, 1e-16)
    return float(np.clip(rho * np.sqrt(max(ratio, 1e-16)), 1e-6, 1e6))


def _certificates(s, A, lb, ub, b, H, g, dx, dy_eq, dy_b):
    """OSQP-style primal/dual infeasibility certificates on the scaled data."""
    eps = s.eps_certificate
    ny = max(np.max(np.abs(dy_eq), initial=0.0), np.max(np.abs(dy_b), initial=0.0))
    if ny > 1e-10:
        aty = A.T @ dy_eq + dy_b
        support = b @ dy_eq
        pos, neg = np.maximum(dy_b, 0), np.minimum(dy_b, 0)
        with np.errstate(invalid="ignore"):
            up = np.where(pos > 0, ub * pos, 0.0)
            lo = np.where(neg < 0, lb * neg, 0.0)
        support += np.sum(up) + np.sum(lo)
        if np.all(np.isfinite(support)) and np.max(np.abs(aty)) <= eps * ny \
                and support < -eps * ny:
            return Status.INFEASIBLE, float(np.max(np.abs(aty)) / ny)
    nx = np.max(np.abs(dx), initial=0.0)
    if nx > 1e-10:
        ok_bounds = np.all(np.where(np.isfinite(ub), dx <= eps * nx, True)) and \
            np.all(np.where(np.isfinite(lb), dx >= -eps * nx, True))
        if ok_bounds and np.max(np.abs(H @ dx), initial=0.0) <= eps * nx \
                and g @ dx < -eps * nx and np.max(np.abs(A @ dx), initial=0.0) <= eps * nx:
            return Status.UNBOUNDED, float(g @ dx / nx)
    return None, np.nan


def _failed(p, sc, x, y_eq, y_b, status, it, prim, dual, cert):
    xu, mu_eq, mu_b = sc.unscale(x, y_eq, y_b)
    return QpSolution(xu, mu_eq, mu_b, np.nan, status, it, prim, dual, certificate=cert)


def _clean_bound_duals(p, x, mu_b, s):
    """Zero bound multipliers of variables strictly inside their box."""
    inside = (x > p.lb + s.eps_prim) & (x < p.ub - s.eps_prim)
    out = mu_b.copy()
    out[inside] = 0.0
    return out


def _polish(p: QpProblem, sc: _Scaled, s: SolverSettings, x, z_b, y_eq, y_b, it):
    """Active-set polish seeded by the ADMM iterate; None if no KKT point is found."""
    lb, ub = sc.lb, sc.ub
    pinned = lb == ub
    low = (z_b - lb < -y_b) | pinned
    upp = (ub - z_b < y_b) & ~low
    t_x, t_y = x.copy(), y_eq.copy()
    for _ in range(s.polish_rounds):
        out = _reduced_solve(sc, s, low, upp, t_x, t_y)
        if out is None:
            return None
        xs, ys_eq, ys_b = out
        tol_p = s.eps_prim / max(1.0, np.max(sc.D))
        tol_d = s.eps_dual * sc.c * np.min(sc.D)
        wrong_low = low & ~pinned & (ys_b > tol_d)
        wrong_upp = upp & (ys_b < -tol_d)
        free = ~(low | upp)
        below = free & (xs < lb - tol_p)
        above = free & (xs > ub + tol_p)
        if not (wrong_low.any() or wrong_upp.any() or below.any() or above.any()):
            xu, mu_eq, mu_b = sc.unscale(xs, ys_eq, ys_b)
            xu = np.where(low, p.lb, np.where(upp, p.ub, xu))
            prim, dual = kkt_residuals(p, xu, mu_eq, mu_b)
            sign_ok = np.all(mu_b[low & ~(p.lb == p.ub)] <= s.eps_dual) and \
                np.all(mu_b[upp] >= -s.eps_dual)
            if prim <= s.eps_prim and dual <= s.eps_dual and sign_ok:
                return QpSolution(xu, mu_eq, mu_b, p.objective(xu), Status.OPTIMAL, it,
                                  prim, dual, polished=True)
            logger.debug("polish rejected at it=%d (prim %.2e, dual %.2e, sign %s)",
                         it, prim, dual, sign_ok)
            return None
        low = (low & ~wrong_low) | below
        upp = (upp & ~wrong_upp) | above
        t_x, t_y = np.clip(xs, lb, ub), ys_eq
    logger.debug("polish active set did not settle at it=%d", it)
    return None


def _reduced_solve(sc: _Scaled, s: SolverSettings, low, upp, x_start, y_start):
    """Equality-constrained QP with the active bounds substituted, by regularized refinement."""
    lb, ub = sc.lb, sc.ub
    fixed = low | upp
    free = ~fixed
    xs = np.where(low, lb, np.where(upp, ub, x_start))
    if not np.all(np.isfinite(xs)):
        return None
    H, g, A, b = sc.H, sc.g, sc.A, sc.b
    nf, m = int(free.sum()), b.size
    Hff = H[np.ix_(free, free)]
    Af = A[:, free]
    rhs = np.concatenate([-(g[free] + H[np.ix_(free, fixed)] @ xs[fixed]),
                          b - A[:, fixed] @ xs[fixed]])
    K = np.block([[Hff, Af.T], [Af, np.zeros((m, m))]])
    d = s.polish_delta
    Kd = K + np.diag(np.concatenate([np.full(nf, d), np.full(m, -d)]))
    try:
        lu = sla.lu_factor(Kd, check_finite=False)
    except (ValueError, np.linalg.LinAlgError):
        return None
    t = np.concatenate([x_start[free], y_start])
    scale = 1.0 + np.max(np.abs(rhs), initial=0.0)
    for _ in range(s.polish_refine):
        r = rhs - K @ t
        if np.max(np.abs(r), initial=0.0) <= 1e-14 * scale:
            break
        t = t + sla.lu_solve(lu, r, check_finite=False)
    if not np.all(np.isfinite(t)):
        return None
    xs = xs.copy()
    xs[free] = t[:nf]
    ys_eq = t[nf:]
    ys_b = np.zeros_like(xs)
    ys_b[fixed] = -(H @ xs + g + A.T @ ys_eq)[fixed]
    return xs, ys_eq, ys_b


def solve_qp_with_fixed_variables(problem: QpProblem, fixed: Mapping[int, float],
                                  settings: SolverSettings | None = None,
                                  x0: np.ndarray | None = None) -> QpSolution:
    """Solve with x[i] = v for each (i, v) in ``fixed``; their multipliers go to ``mu_fixed``."""
    idx = np.array(sorted(fixed), dtype=int)
    vals = np.array([fixed[i] for i in idx], dtype=float)
    n = problem.n
    if idx.size and (idx.min() < 0 or idx.max() >= n):
        raise QpError(f"fixed index out of range for {n} variables")
    if np.any(vals < problem.lb[idx]) or np.any(vals > problem.ub[idx]):
        return QpSolution(np.full(n, np.nan), np.full(problem.n_eq, np.nan), np.full(n, np.nan),
                          np.nan, Status.INFEASIBLE, 0, mu_fixed=np.full(idx.size, np.nan))
    rows = np.zeros((idx.size, n))
    rows[np.arange(idx.size), idx] = 1.0
    augmented = QpProblem(problem.H, problem.g, np.vstack([problem.A_eq, rows]),
                          np.concatenate([problem.b_eq, vals]), problem.lb, problem.ub,
                          problem.const)
    sol = solve_qp(augmented, settings, x0)
    m = problem.n_eq
    return QpSolution(sol.x_star, sol.mu_eq[:m], sol.mu_bound, sol.objective, sol.status,
                      sol.iterations, sol.prim_res, sol.dual_res, sol.polished, sol.certificate,
                      mu_fixed=sol.mu_eq[m:])
