"""Optimal periodic steady states, the steady-state set and the regularization weight."""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla

from .dynamics import AugmentedSystem, LiftedSystem
from .model import BoxConstraints, PeriodModel, StageCostSpec, build_period_model
from .qp import QpProblem, QpSolution, SolverSettings, Status, solve_qp

NULLSPACE_CUTOFF = 1e-9


class SteadyStateInfeasible(RuntimeError):
    def __init__(self, message: str, solution: QpSolution | None = None):
        super().__init__(message)
        self.solution = solution


@dataclass(frozen=True)
class SteadyStateResult:
    u_s: np.ndarray
    ell_s: float               # economic cost at the optimum
    ell_s_full: float          # economic + eps * x'x, the objective actually minimized
    mu: np.ndarray             # multiplier of (I - F) s - G u = c
    x_s_particular: np.ndarray
    x_s_nullspace: np.ndarray  # (ns, k) orthonormal basis, k may be 0
    epsilon: float
    qp: QpSolution

    @property
    def nullspace_dim(self) -> int:
        return self.x_s_nullspace.shape[1]

    @property
    def storage_value(self) -> float:
        """Stage cost the rotated cost is measured against (economic or full)."""
        return self.ell_s_full


def steady_state_qp(model: PeriodModel) -> QpProblem:
    ns, nu = model.ns, model.nu
    A_eq = np.hstack([np.eye(ns) - model.F, -model.G])
    return QpProblem(model.hessian(), model.q, A_eq, model.c,
                     np.concatenate([model.s_lb, model.u_lb]),
                     np.concatenate([model.s_ub, model.u_ub]), model.r)


def fixed_point_nullspace(F: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Orthonormal bases (nullspace, complement) of I - F via pivoted QR of its transpose."""
    M = np.eye(F.shape[0]) - F
    Q, R, _ = sla.qr(M.T, pivoting=True)
    diag = np.abs(np.diag(R))
    top = diag[0] if diag.size else 0.0
    rank = int(np.sum(diag > NULLSPACE_CUTOFF * top)) if top > 0 else 0
    return Q[:, rank:], Q[:, :rank]


def solve_steady_state(model: PeriodModel, settings: SolverSettings | None = None
                       ) -> SteadyStateResult:
    qp = steady_state_qp(model)
    sol = solve_qp(qp, settings)
    if sol.status is Status.INFEASIBLE:
        raise SteadyStateInfeasible("steady-state problem infeasible", sol)
    assert sol.status is not Status.UNBOUNDED, "box-constrained steady-state QP reported unbounded"
    if not sol.ok:
        raise SteadyStateInfeasible(f"steady-state solve ended with status {sol.status.value}", sol)
    ns = model.ns
    s, u = sol.x_star[:ns], sol.x_star[ns:]
    if model.epsilon > 0:
        V = np.zeros((ns, 0))
    else:
        V, _ = fixed_point_nullspace(model.F)
    econ = model.economic_cost(s, u)
    return SteadyStateResult(u, econ, econ + model.eps_cost(s), sol.mu_eq.copy(), s, V,
                             model.epsilon, sol)


def solve_steady_state_for(lifted: LiftedSystem, cost: StageCostSpec, box: BoxConstraints,
                           aug: AugmentedSystem | None = None,
                           settings: SolverSettings | None = None) -> SteadyStateResult:
    return solve_steady_state(build_period_model(lifted, cost, box, aug), settings)


@dataclass(frozen=True)
class AffineSliceSet:
    """{particular + V z} intersected with the state box."""

    particular: np.ndarray
    V: np.ndarray
    complement: np.ndarray
    lb: np.ndarray
    ub: np.ndarray

    @property
    def dim(self) -> int:
        return self.V.shape[1]

    def residual(self, x) -> float:
        """Distance of x from the affine hull, ignoring the box."""
        d = np.asarray(x, dtype=float) - self.particular
        return float(np.linalg.norm(self.complement.T @ d))

    def contains(self, x, tol: float = 1e-8) -> bool:
        x = np.asarray(x, dtype=float)
        in_box = np.all(x >= self.lb - tol) and np.all(x <= self.ub + tol)
        return bool(in_box and self.residual(x) <= tol)

    def project(self, x, settings: SolverSettings | None = None) -> tuple[np.ndarray, float]:
        """Euclidean projection onto the set and the distance to it."""
        x = np.asarray(x, dtype=float)
        if self.dim == 0:
            return self.particular.copy(), float(np.linalg.norm(x - self.particular))
        C = self.complement.T
        qp = QpProblem(np.eye(x.size), -x, C, C @ self.particular, self.lb, self.ub,
                       0.5 * x @ x)
        sol = solve_qp(qp, settings)
        if not sol.ok:
            raise RuntimeError(f"projection onto steady-state set failed: {sol.status.value}")
        y = sol.x_star
        return y, float(np.linalg.norm(x - y))

    def distance(self, x, settings: SolverSettings | None = None) -> float:
        return self.project(x, settings)[1]

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Points of the set: random affine-hull points projected back into the box slice."""
        if self.dim == 0:
            return np.repeat(self.particular[None, :], n, axis=0)
        span = np.max(self.ub - self.lb)
        out = np.empty((n, self.particular.size))
        for k in range(n):
            z = rng.uniform(-span, span, self.dim)
            out[k] = self.project(self.particular + self.V @ z)[0]
        return out


def steady_state_set(result: SteadyStateResult, model: PeriodModel) -> AffineSliceSet:
    ns = model.ns
    if result.nullspace_dim == 0:
        comp = np.eye(ns)
    else:
        _, comp = fixed_point_nullspace(model.F)
    return AffineSliceSet(result.x_s_particular, result.x_s_nullspace, comp,
                          model.s_lb, model.s_ub)


def lifted_radius(box: BoxConstraints, T: int) -> float:
    """max x'x over the lifted state box: T copies of the one-step box."""
    return float(T * np.sum(np.maximum(box.x_lb ** 2, box.x_ub ** 2)))


def choose_epsilon(gamma: float, box: BoxConstraints, T: int) -> float:
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    R = lifted_radius(box, T)
    return min(gamma, gamma / R)


def dual_value(model: PeriodModel, mu: np.ndarray, settings: SolverSettings | None = None
               ) -> float:
    """Lagrangian dual function at mu: min over the box of l(z) + mu'((I-F)s - Gu - c)."""
    ns = model.ns
    A = np.hstack([np.eye(ns) - model.F, -model.G])
    qp = QpProblem(model.hessian(), model.q + A.T @ mu, np.zeros((0, ns + model.nu)),
                   np.zeros(0), np.concatenate([model.s_lb, model.u_lb]),
                   np.concatenate([model.s_ub, model.u_ub]), model.r - mu @ model.c)
    sol = solve_qp(qp, settings)
    if not sol.ok:
        raise RuntimeError(f"dual function evaluation failed: {sol.status.value}")
    return sol.objective


@dataclass(frozen=True)
class ShiftReport:
    costs: np.ndarray
    max_cost_deviation: float
    max_shift_deviation: float
    cyclic: bool


def rotate_model(model: PeriodModel, shift: int) -> PeriodModel:
    lifted = model.lifted
    p = lifted.d_tilde.size // lifted.T
    d_rot = np.roll(lifted.d_tilde.reshape(lifted.T, p), -shift, axis=0).reshape(-1)
    new_lifted = replace(lifted, d_tilde=d_rot)
    aug = model.aug and replace(model.aug, lifted=new_lifted)
    return build_period_model(new_lifted, model.cost.rotated(shift), model.box, aug)


def periodic_shift_check(model: PeriodModel, tol: float = 1e-6,
                         settings: SolverSettings | None = None) -> ShiftReport:
    """Solve every cyclic rotation of the period and compare with shifted copies of rotation 0."""
    T, m = model.lifted.T, model.lifted.m
    costs = np.empty(T)
    base = None
    worst_shift = 0.0
    for k in range(T):
        res = solve_steady_state(rotate_model(model, k), settings)
        costs[k] = res.ell_s_full
        if base is None:
            base = res.u_s
        expected = np.roll(base.reshape(T, m), -k, axis=0).reshape(-1)
        worst_shift = max(worst_shift, float(np.max(np.abs(res.u_s - expected))))
    dev = float(np.max(costs) - np.min(costs))
    return ShiftReport(costs, dev, worst_shift, worst_shift <= tol)
