"""Linear systems with periodic disturbances, period lifting and input-change augmentation.

Lifting convention: the lifted state at period k stacks the T samples
x_{(k-1)T+1}, ..., x_{kT}, so block i (1-based) of the lifted state holds the
physical state i steps after the start of the previous period.  Only the last
block feeds the next period.  The lifted input stacks u_{kT}, ..., u_{(k+1)T-1}.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def _mat(a, rows=None, cols=None, name="matrix"):
    a = np.atleast_2d(np.asarray(a, dtype=float))
    if rows is not None and a.shape[0] != rows:
        raise ValueError(f"{name} has {a.shape[0]} rows, expected {rows}")
    if cols is not None and a.shape[1] != cols:
        raise ValueError(f"{name} has {a.shape[1]} columns, expected {cols}")
    return a


def _vec(v, size, name):
    v = np.atleast_1d(np.asarray(v, dtype=float)).ravel()
    if v.size != size:
        raise ValueError(f"{name} has length {v.size}, expected {size}")
    return v


@dataclass(frozen=True)
class LinearPeriodicSystem:
    A: np.ndarray
    B_u: np.ndarray
    B_d: np.ndarray
    T: int
    d_seq: np.ndarray

    def __post_init__(self):
        A = _mat(self.A, name="A")
        n = A.shape[0]
        _mat(A, n, n, "A")
        B_u = _mat(self.B_u, n, name="B_u")
        B_d = np.asarray(self.B_d, dtype=float)
        B_d = B_d.reshape(n, -1) if B_d.size else np.zeros((n, 0))
        T = int(self.T)
        if T < 1:
            raise ValueError("period T must be >= 1")
        d = np.asarray(self.d_seq, dtype=float).reshape(T, B_d.shape[1]) \
            if np.asarray(self.d_seq).size == T * B_d.shape[1] else None
        if d is None:
            raise ValueError(f"d_seq must hold {T} disturbance vectors of length {B_d.shape[1]}")
        for name, val in (("A", A), ("B_u", B_u), ("B_d", B_d), ("d_seq", d)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)
        object.__setattr__(self, "T", T)

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def m(self) -> int:
        return self.B_u.shape[1]

    @property
    def p(self) -> int:
        return self.B_d.shape[1]

    def rotated(self, shift: int) -> "LinearPeriodicSystem":
        """Same system with the disturbance sequence started ``shift`` steps later."""
        return LinearPeriodicSystem(self.A, self.B_u, self.B_d, self.T,
                                    np.roll(self.d_seq, -shift, axis=0))


@dataclass(frozen=True)
class LiftedSystem:
    A_tilde: np.ndarray
    B_tilde: np.ndarray
    Bd_tilde: np.ndarray
    d_tilde: np.ndarray
    T: int
    n: int
    m: int

    @property
    def state_dim(self) -> int:
        return self.n * self.T

    @property
    def input_dim(self) -> int:
        return self.m * self.T

    @property
    def offset(self) -> np.ndarray:
        """Constant disturbance term Bd_tilde @ d_tilde."""
        return self.Bd_tilde @ self.d_tilde

    def step(self, x_tilde, u_tilde):
        return self.A_tilde @ x_tilde + self.B_tilde @ u_tilde + self.offset


@dataclass(frozen=True)
class AugmentedSystem:
    """Lifted system with the last applied input v appended to the state."""

    lifted: LiftedSystem
    A_hat: np.ndarray
    B_hat: np.ndarray
    Bd_hat: np.ndarray
    M_bar: np.ndarray
    N_bar: np.ndarray
    E: np.ndarray
    N_hat: np.ndarray

    @property
    def state_dim(self) -> int:
        return self.A_hat.shape[0]

    @property
    def input_dim(self) -> int:
        return self.B_hat.shape[1]

    @property
    def offset(self) -> np.ndarray:
        return self.Bd_hat @ self.lifted.d_tilde

    def step(self, x_hat, u_tilde):
        return self.A_hat @ x_hat + self.B_hat @ u_tilde + self.offset

    def delta_u(self, x_hat, u_tilde):
        """Input differences of one period given the carried previous input."""
        return self.M_bar @ u_tilde - self.N_hat @ x_hat

    def initial_state(self, x_tilde, v=None):
        v = np.zeros(self.lifted.m) if v is None else _vec(v, self.lifted.m, "v")
        return np.concatenate([np.asarray(x_tilde, dtype=float), v])


@dataclass(frozen=True)
class Trajectory:
    states: np.ndarray
    inputs: np.ndarray
    t0: int = 0


def step(sys: LinearPeriodicSystem, x, u, t: int) -> np.ndarray:
    if t < 0:
        raise ValueError("time index must be nonnegative")
    x = _vec(x, sys.n, "x")
    u = _vec(u, sys.m, "u")
    return sys.A @ x + sys.B_u @ u + sys.B_d @ sys.d_seq[t % sys.T]


def lift(sys: LinearPeriodicSystem) -> LiftedSystem:
    n, m, p, T = sys.n, sys.m, sys.p, sys.T
    powers = [np.eye(n)]
    for _ in range(T):
        powers.append(sys.A @ powers[-1])
    A_t = np.zeros((n * T, n * T))
    B_t = np.zeros((n * T, m * T))
    Bd_t = np.zeros((n * T, p * T))
    for i in range(T):
        A_t[i * n:(i + 1) * n, (T - 1) * n:] = powers[i + 1]
        for j in range(i + 1):
            Ak = powers[i - j]
            B_t[i * n:(i + 1) * n, j * m:(j + 1) * m] = Ak @ sys.B_u
            Bd_t[i * n:(i + 1) * n, j * p:(j + 1) * p] = Ak @ sys.B_d
    return LiftedSystem(A_t, B_t, Bd_t, sys.d_seq.reshape(-1).copy(), T, n, m)


def augment(lifted: LiftedSystem) -> AugmentedSystem:
    n, m, T = lifted.n, lifted.m, lifted.T
    nT, mT = n * T, m * T
    M_bar = np.eye(mT) - np.eye(mT, k=-m)
    N_bar = np.zeros((mT, m))
    N_bar[:m] = np.eye(m)
    E = np.zeros((m, mT))
    E[:, -m:] = np.eye(m)
    A_hat = np.zeros((nT + m, nT + m))
    A_hat[:nT, :nT] = lifted.A_tilde
    B_hat = np.vstack([lifted.B_tilde, E])
    Bd_hat = np.vstack([lifted.Bd_tilde, np.zeros((m, lifted.Bd_tilde.shape[1]))])
    N_hat = np.hstack([np.zeros((mT, nT)), N_bar])
    return AugmentedSystem(lifted, A_hat, B_hat, Bd_hat, M_bar, N_bar, E, N_hat)


def simulate(sys: LinearPeriodicSystem, x0, inputs, t0: int = 0) -> Trajectory:
    inputs = np.asarray(inputs, dtype=float).reshape(-1, sys.m)
    states = np.empty((len(inputs) + 1, sys.n))
    states[0] = _vec(x0, sys.n, "x0")
    for k, u in enumerate(inputs):
        states[k + 1] = step(sys, states[k], u, t0 + k)
    return Trajectory(states, inputs, t0)


def simulate_lifted(lifted: LiftedSystem, x_tilde0, u_periods) -> np.ndarray:
    """Lifted states after each period; row 0 is the initial lifted state."""
    u_periods = np.asarray(u_periods, dtype=float).reshape(-1, lifted.input_dim)
    out = np.empty((len(u_periods) + 1, lifted.state_dim))
    out[0] = x_tilde0
    for k, u in enumerate(u_periods):
        out[k + 1] = lifted.step(out[k], u)
    return out
