"""Storage functions, rotated costs, dissipativity sampling and closed-loop audits."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .model import PeriodModel
from .qp import SolverSettings
from .steady_state import AffineSliceSet, SteadyStateResult, steady_state_set

ROTATED_TOL = 1e-6
DESCENT_TOL = 1e-5


@dataclass(frozen=True)
class StorageFunction:
    """Linear storage lambda(s) = mu's + offset."""

    mu: np.ndarray
    offset: float = 0.0

    def __call__(self, s) -> float:
        return float(self.mu @ np.asarray(s, dtype=float) + self.offset)

    @classmethod
    def from_steady_state(cls, ss: SteadyStateResult) -> "StorageFunction":
        return cls(ss.mu.copy())

    def corrupted(self, shift: float = 1.0) -> "StorageFunction":
        return StorageFunction(self.mu + shift, self.offset)


def rotated_cost(storage: StorageFunction, model: PeriodModel, ss: SteadyStateResult, s, u
                 ) -> float:
    """l(s,u) - l^s + lambda(s) - lambda(f(s,u)), with the eps term included when eps > 0.

    With eps > 0 this is l(u) - l(u_eps) + eps (x'x - x_eps'x_eps) plus the storage
    difference, since ``ss.ell_s_full`` already contains eps * x_eps'x_eps.
    """
    s = np.asarray(s, dtype=float)
    u = np.asarray(u, dtype=float)
    if storage.mu.size != model.ns:
        raise ValueError(f"storage has dimension {storage.mu.size}, state has {model.ns}")
    return (model.stage_cost(s, u) - ss.ell_s_full
            + storage(s) - storage(model.step(s, u)))


def rotated_cost_batch(storage: StorageFunction, model: PeriodModel, ss: SteadyStateResult,
                       S: np.ndarray, U: np.ndarray) -> np.ndarray:
    Z = np.hstack([S, U])
    quad = 0.5 * np.einsum("ij,jk,ik->i", Z, model.P, Z) + Z @ model.q + model.r
    if model.epsilon > 0:
        X = S[:, :model.nx]
        quad = quad + model.epsilon * np.einsum("ij,ij->i", X, X)
    nxt = S @ model.F.T + U @ model.G.T + model.c
    return quad - ss.ell_s_full + (S - nxt) @ storage.mu


@dataclass(frozen=True)
class DissipativityReport:
    n_samples: int
    min_rotated_cost: float
    min_rotated_cost_far: float
    max_abs_on_set: float
    delta: float
    certified: bool
    witness_state: np.ndarray | None = None
    witness_input: np.ndarray | None = None
    witness_value: float = np.nan

    @property
    def verdict(self) -> str:
        return "CertifiedAtSamples" if self.certified else "Violated"


def check_dissipativity(storage: StorageFunction, model: PeriodModel, ss: SteadyStateResult,
                        n_samples: int = 10_000, seed: int = 0, n_set_samples: int = 100,
                        batch: int = 2000, n_local: int = 5) -> DissipativityReport:
    """Falsification check of L >= 0 on the box and L = 0 on the steady-state set.

    Box samples come from ``np.random.default_rng(seed)`` in fixed-size batches;
    set samples use the independent stream ``default_rng([seed, 1])``.
    ``min_rotated_cost`` is the sampled minimum; the verdict also accounts for a
    projected-gradient search started from the worst sample and ``n_local`` set points.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    rng = np.random.default_rng(seed)
    slb, sub = model.s_lb, model.s_ub
    ulb, uub = model.u_lb, model.u_ub
    Xs = steady_state_set(ss, model)
    diam = float(np.linalg.norm(np.concatenate([sub - slb, uub - ulb])))
    delta = 1e-2 * diam

    best_val, best_s, best_u = np.inf, None, None
    min_far = np.inf
    done = 0
    while done < n_samples:
        k = min(batch, n_samples - done)
        S = rng.uniform(slb, sub, (k, model.ns))
        U = rng.uniform(ulb, uub, (k, model.nu))
        vals = rotated_cost_batch(storage, model, ss, S, U)
        i = int(np.argmin(vals))
        if vals[i] < best_val:
            best_val, best_s, best_u = float(vals[i]), S[i].copy(), U[i].copy()
        far = _far_from_set(Xs, ss, S, U, delta)
        if far.any():
            min_far = min(min_far, float(np.min(vals[far])))
        done += k

    set_rng = np.random.default_rng([seed, 1])
    on_set = Xs.sample(n_set_samples, set_rng)
    set_vals = rotated_cost_batch(storage, model, ss, on_set,
                                  np.repeat(ss.u_s[None, :], len(on_set), axis=0))
    max_on_set = float(np.max(np.abs(set_vals)))

    # local search from the worst box sample and from points on the set, where a
    # wrong multiplier leaves a first-order slope in L
    min_sampled = best_val
    starts = [(best_s, best_u, best_val)]
    for s0 in on_set[:n_local]:
        starts.append((s0, ss.u_s.copy(), rotated_cost(storage, model, ss, s0, ss.u_s)))
    for s0, u0, v0 in starts:
        s1, u1, v1 = _descend(storage, model, ss, s0, u0, v0)
        if v1 < best_val:
            best_s, best_u, best_val = s1, u1, v1
    certified = best_val >= -ROTATED_TOL and max_on_set <= ROTATED_TOL
    if certified:
        return DissipativityReport(n_samples, min_sampled, min_far, max_on_set, delta, True)
    return DissipativityReport(n_samples, min_sampled, min_far, max_on_set, delta, False,
                               best_s, best_u, best_val)


def _far_from_set(Xs: AffineSliceSet, ss: SteadyStateResult, S, U, delta):
    """Cheap lower bound on the distance to Z^s: affine-hull residual and input offset."""
    d_state = np.linalg.norm((S - Xs.particular) @ Xs.complement, axis=1)
    d_input = np.linalg.norm(U - ss.u_s, axis=1)
    return np.hypot(d_state, d_input) >= delta


def _descend(storage, model, ss, s, u, val, iters: int = 200):
    """Projected gradient steps on L from a violating sample to sharpen the witness."""
    step = 1e-2
    for _ in range(iters):
        z = np.concatenate([s, u])
        grad = model.P @ z + model.q
        grad[:model.nx] += 2 * model.epsilon * s[:model.nx]
        gs = grad[:model.ns] + (np.eye(model.ns) - model.F).T @ storage.mu
        gu = grad[model.ns:] - model.G.T @ storage.mu
        s_new = np.clip(s - step * gs, model.s_lb, model.s_ub)
        u_new = np.clip(u - step * gu, model.u_lb, model.u_ub)
        new = rotated_cost(storage, model, ss, s_new, u_new)
        if new < val:
            s, u, val = s_new, u_new, new
        else:
            step *= 0.5
            if step < 1e-12:
                break
    return s, u, val


@dataclass(frozen=True)
class LyapunovAudit:
    values: np.ndarray
    descent: np.ndarray            # V(t+1) - V(t) + L(t); must stay <= tol
    worst_violation: float
    worst_step: int
    n_violations: int
    lower_bound_ok: bool | None    # modified variant: V(t) >= L(t)
    tol: float = DESCENT_TOL

    @property
    def passed(self) -> bool:
        return self.n_violations == 0 and self.lower_bound_ok is not False


def lyapunov_value(ol, storage: StorageFunction, model: PeriodModel, ss: SteadyStateResult,
                   modified: bool) -> float:
    """Optimal rotated cost along an open-loop solution, plus lambda(s_K) unless modified."""
    K = ol.inputs.shape[0]
    total = sum(rotated_cost(storage, model, ss, ol.states[k], ol.inputs[k]) for k in range(K))
    if not modified:
        total += storage(ol.states[K])
    return float(total)


def lyapunov_audit(trace, storage: StorageFunction, ss: SteadyStateResult,
                   tol: float = DESCENT_TOL) -> LyapunovAudit:
    """Recompute V at each step from the stored open-loop solutions and check descent."""
    if not trace.open_loop or trace.rotated_cost is None:
        raise ValueError("trace lacks open-loop solutions or rotated costs")
    model = trace.model
    modified = model.epsilon > 0
    V = np.array([lyapunov_value(ol, storage, model, ss, modified) for ol in trace.open_loop])
    L = np.array([rotated_cost(storage, model, ss, ol.states[0], ol.inputs[0])
                  for ol in trace.open_loop])
    descent = V[1:] - V[:-1] + L[:-1]
    if descent.size:
        worst_step = int(np.argmax(descent))
        worst = float(descent[worst_step])
    else:
        worst_step, worst = -1, -np.inf
    lower = bool(np.all(V >= L - tol)) if modified else None
    return LyapunovAudit(V, descent, worst, worst_step, int(np.sum(descent > tol)), lower, tol)


@dataclass(frozen=True)
class CostGapLedger:
    steady_gap: float
    gamma: float | None
    epsilon: float
    radius: float
    open_loop_gaps: np.ndarray = field(default_factory=lambda: np.zeros(0))
    bound: float = 0.0

    @property
    def steady_ok(self) -> bool:
        return self.gamma is None or self.steady_gap <= self.gamma + 1e-8

    @property
    def open_loop_ok(self) -> bool:
        g = self.open_loop_gaps
        return bool(np.all(g >= -1e-8) and np.all(g <= self.bound + 1e-6))

    @property
    def passed(self) -> bool:
        return self.steady_ok and self.open_loop_ok


def cost_gap_ledger(ss_plain: SteadyStateResult, ss_modified: SteadyStateResult,
                    model_plain: PeriodModel, model_modified: PeriodModel,
                    states=(), horizon_periods: int = 3, gamma: float | None = None,
                    settings: SolverSettings | None = None) -> CostGapLedger:
    """Steady and open-loop cost gaps of the eps-modified problems against the plain ones.

    Open-loop gaps are taken at each state in ``states`` with both problems using the
    plain steady-state set as terminal set, so they share one feasible region.
    """
    from .controller import CostVariant, EmpcConfig, EmpcController
    from .steady_state import lifted_radius

    if model_plain.ns != model_modified.ns or model_plain.nu != model_modified.nu:
        raise ValueError("plain and modified instances differ in dimension")
    if model_plain.epsilon != 0.0:
        raise ValueError("the plain instance must have epsilon = 0")
    eps = model_modified.epsilon
    radius = lifted_radius(model_plain.box, model_plain.lifted.T)
    gap = ss_modified.ell_s - ss_plain.ell_s
    gaps = []
    if len(states):
        plain = EmpcController(model_plain, ss_plain, EmpcConfig(horizon_periods), settings)
        shared = EmpcController(model_modified, ss_modified,
                                EmpcConfig(horizon_periods, cost_variant=CostVariant.MODIFIED),
                                settings, terminal_ss=ss_plain, terminal_model=model_plain)
        for s in states:
            j = plain.solve(s).cost
            j_eps = shared.solve(s).cost
            gaps.append(j_eps - j)
    bound = horizon_periods * eps * radius
    return CostGapLedger(gap, gamma, eps, radius, np.array(gaps), bound)
