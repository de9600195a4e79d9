"""Stage-cost and constraint containers and their compiled per-period quadratic form.

A ``PeriodModel`` packages everything an optimization needs about one lifted
period: the transition s+ = F s + G u + c (lifted or augmented state s, lifted
input u), the state/input boxes, and the stage cost

    l(s, u) = alpha'u + u'Ru + du'W du + T*offset  [+ eps * x'x]

with du = M u - N s the within-period input differences (augmented case only)
and x the physical lifted-state block of s.  The regularization weight eps
acts on that block only, never on the carried input.
"""

from __future__ import annotations

from dataclasses import dataclass, replace

import numpy as np
import scipy.linalg as sla

from .dynamics import AugmentedSystem, LiftedSystem, augment


@dataclass(frozen=True)
class BoxConstraints:
    x_lb: np.ndarray
    x_ub: np.ndarray
    u_lb: np.ndarray
    u_ub: np.ndarray

    def __post_init__(self):
        for name in ("x_lb", "x_ub", "u_lb", "u_ub"):
            val = np.atleast_1d(np.asarray(getattr(self, name), dtype=float)).ravel()
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        if self.x_lb.shape != self.x_ub.shape or self.u_lb.shape != self.u_ub.shape:
            raise ValueError("lower and upper bounds differ in length")
        if np.any(self.x_lb > self.x_ub) or np.any(self.u_lb > self.u_ub):
            raise ValueError("box is empty: some lower bound exceeds its upper bound")
        if not (np.all(np.isfinite(self.x_lb)) and np.all(np.isfinite(self.x_ub))):
            raise ValueError("state box must be bounded")

    @property
    def n(self) -> int:
        return self.x_lb.size

    @property
    def m(self) -> int:
        return self.u_lb.size


@dataclass(frozen=True)
class StageCostSpec:
    """Periodic economic stage cost; ``alpha_seq`` has one price vector per step.

    ``R`` (input weight) and ``offset`` (constant per step) extend the pure
    price-plus-input-change form so costs like (u - 1)^2 fit the same container.
    """

    alpha_seq: np.ndarray
    W: np.ndarray
    epsilon: float = 0.0
    R: np.ndarray | None = None
    offset: float = 0.0

    def __post_init__(self):
        alpha = np.atleast_2d(np.asarray(self.alpha_seq, dtype=float))
        m = alpha.shape[1]
        W = np.asarray(self.W, dtype=float).reshape(m, m)
        R = np.zeros((m, m)) if self.R is None else np.asarray(self.R, dtype=float).reshape(m, m)
        for name, M in (("W", W), ("R", R)):
            if np.max(np.abs(M - M.T), initial=0.0) > 1e-12:
                raise ValueError(f"{name} must be symmetric")
            if m and np.linalg.eigvalsh(M)[0] < -1e-12:
                raise ValueError(f"{name} must be positive semidefinite")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        for name, val in (("alpha_seq", alpha), ("W", W), ("R", R)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "epsilon", float(self.epsilon))
        object.__setattr__(self, "offset", float(self.offset))

    @property
    def T(self) -> int:
        return self.alpha_seq.shape[0]

    @property
    def has_input_change(self) -> bool:
        return bool(np.any(self.W != 0))

    def with_epsilon(self, epsilon: float) -> "StageCostSpec":
        return replace(self, epsilon=epsilon)

    def rotated(self, shift: int) -> "StageCostSpec":
        return replace(self, alpha_seq=np.roll(self.alpha_seq, -shift, axis=0))


@dataclass(frozen=True)
class PeriodModel:
    lifted: LiftedSystem
    aug: AugmentedSystem | None
    cost: StageCostSpec
    box: BoxConstraints
    F: np.ndarray
    G: np.ndarray
    c: np.ndarray
    P: np.ndarray          # Hessian of the economic cost in z = (s, u)
    q: np.ndarray
    r: float
    s_lb: np.ndarray
    s_ub: np.ndarray
    u_lb: np.ndarray
    u_ub: np.ndarray

    @property
    def ns(self) -> int:
        return self.F.shape[0]

    @property
    def nu(self) -> int:
        return self.G.shape[1]

    @property
    def nx(self) -> int:
        """Size of the physical lifted-state block."""
        return self.lifted.state_dim

    @property
    def epsilon(self) -> float:
        return self.cost.epsilon

    @property
    def augmented(self) -> bool:
        return self.aug is not None

    def eps_hessian(self) -> np.ndarray:
        """Hessian of eps * x'x in z = (s, u)."""
        d = np.zeros(self.ns + self.nu)
        d[:self.nx] = 2.0 * self.epsilon
        return np.diag(d)

    def hessian(self, with_eps: bool = True) -> np.ndarray:
        return self.P + self.eps_hessian() if with_eps else self.P

    def economic_cost(self, s, u) -> float:
        z = np.concatenate([s, u])
        return float(0.5 * z @ self.P @ z + self.q @ z + self.r)

    def eps_cost(self, s) -> float:
        x = np.asarray(s)[:self.nx]
        return float(self.epsilon * x @ x)

    def stage_cost(self, s, u, with_eps: bool = True) -> float:
        val = self.economic_cost(s, u)
        return val + self.eps_cost(s) if with_eps else val

    def step(self, s, u) -> np.ndarray:
        return self.F @ s + self.G @ u + self.c

    def with_cost(self, cost: StageCostSpec) -> "PeriodModel":
        return build_period_model(self.lifted, cost, self.box, self.aug)


def build_period_model(lifted: LiftedSystem, cost: StageCostSpec, box: BoxConstraints,
                       aug: AugmentedSystem | None = None) -> PeriodModel:
    T, n, m = lifted.T, lifted.n, lifted.m
    if cost.T != T:
        raise ValueError(f"cost has {cost.T} price vectors but the period is {T}")
    if cost.alpha_seq.shape[1] != m or box.m != m or box.n != n:
        raise ValueError("cost/box dimensions do not match the system")
    if cost.has_input_change and aug is None:
        raise ValueError("an input-change weight W requires the augmented system")
    if aug is not None and aug.lifted is not lifted:
        aug = augment(lifted)

    nx, nu = n * T, m * T
    s_lb = np.tile(box.x_lb, T)
    s_ub = np.tile(box.x_ub, T)
    if aug is None:
        F, G, c = lifted.A_tilde, lifted.B_tilde, lifted.offset
    else:
        F, G, c = aug.A_hat, aug.B_hat, aug.offset
        s_lb = np.concatenate([s_lb, box.u_lb])
        s_ub = np.concatenate([s_ub, box.u_ub])
    ns = F.shape[0]

    P = np.zeros((ns + nu, ns + nu))
    P[ns:, ns:] = 2.0 * sla.block_diag(*([cost.R] * T))
    if aug is not None:
        Wt = sla.block_diag(*([cost.W] * T))
        L = np.hstack([-aug.N_hat, aug.M_bar])
        P += 2.0 * L.T @ Wt @ L
    q = np.concatenate([np.zeros(ns), cost.alpha_seq.reshape(-1)])
    r = T * cost.offset
    for v in (s_lb, s_ub):
        v.setflags(write=False)
    return PeriodModel(lifted, aug, cost, box, F, G, c, P, q, r, s_lb, s_ub,
                       np.tile(box.u_lb, T), np.tile(box.u_ub, T))
