"""Receding-horizon economic MPC on the lifted (or augmented) period model.

Decision vector of the horizon QP: z = [u_0, ..., u_{K-1}, s_1, ..., s_K], one
lifted input and one lifted state per period.  Dynamics enter as equality rows,
so their multipliers are available alongside the primal solution.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field

import numpy as np

from .certification import StorageFunction, lyapunov_value, rotated_cost
from .model import PeriodModel
from .qp import QpProblem, QpSolution, SolverSettings, Status, solve_qp
from .steady_state import AffineSliceSet, SteadyStateResult, steady_state_set

CLAMP_TOL = 1e-9


class TerminalMode(str, enum.Enum):
    STEADY_STATE_SET = "steady_state_set"
    FIXED_POINT = "fixed_point"


class CostVariant(str, enum.Enum):
    ECONOMIC = "economic"
    ROTATED = "rotated"
    MODIFIED = "modified"


class WarmStart(str, enum.Enum):
    SHIFTED = "shifted"
    COLD = "cold"


class EmpcInfeasible(RuntimeError):
    """A horizon QP failed; carries the solver status and residual."""

    def __init__(self, message: str, solution: QpSolution | None = None, trace=None):
        super().__init__(message)
        self.solution = solution
        self.trace = trace


@dataclass(frozen=True)
class EmpcConfig:
    horizon_periods: int = 3
    terminal_mode: TerminalMode = TerminalMode.STEADY_STATE_SET
    cost_variant: CostVariant = CostVariant.ECONOMIC
    warm_start: WarmStart = WarmStart.SHIFTED
    x_target: np.ndarray | None = None
    allow_single_period: bool = False

    def __post_init__(self):
        object.__setattr__(self, "terminal_mode", TerminalMode(self.terminal_mode))
        object.__setattr__(self, "cost_variant", CostVariant(self.cost_variant))
        object.__setattr__(self, "warm_start", WarmStart(self.warm_start))
        K = self.horizon_periods
        if K < 1 or (K < 2 and not self.allow_single_period):
            raise ValueError("horizon_periods must be >= 2 (K = 1 needs allow_single_period)")
        if self.terminal_mode is TerminalMode.FIXED_POINT and self.x_target is None:
            raise ValueError("fixed-point terminal mode needs x_target")


@dataclass(frozen=True)
class OpenLoopSolution:
    inputs: np.ndarray       # (K, nu)
    states: np.ndarray       # (K + 1, ns); row 0 is the measured state
    cost: float              # objective of the solved variant
    economic_cost: float     # sum of economic stage costs
    status: Status
    candidate_cost: float = np.nan
    qp: QpSolution | None = None


@dataclass
class ClosedLoopTrace:
    model: PeriodModel
    config: EmpcConfig
    states: list = field(default_factory=list)
    inputs: list = field(default_factory=list)
    stage_cost_economic: list = field(default_factory=list)
    stage_cost_modified: list = field(default_factory=list)
    rotated_cost: list = field(default_factory=list)
    lyapunov: list = field(default_factory=list)
    dist_to_set: list = field(default_factory=list)
    status: list = field(default_factory=list)
    solve_ms: list = field(default_factory=list)
    open_loop: list = field(default_factory=list)
    final_state: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self.inputs)

    def as_arrays(self) -> dict[str, np.ndarray]:
        keys = ("states", "inputs", "stage_cost_economic", "stage_cost_modified",
                "rotated_cost", "lyapunov", "dist_to_set", "solve_ms")
        return {k: np.asarray(getattr(self, k)) for k in keys}


class EmpcController:
    """Builds and solves the horizon QP; keeps the previous solution for warm starts.

    ``terminal_ss``/``terminal_model`` override the steady state that defines the
    terminal set (default: ``ss`` itself), e.g. to impose the plain steady-state
    set on an eps-modified cost.
    """

    def __init__(self, model: PeriodModel, ss: SteadyStateResult, config: EmpcConfig,
                 settings: SolverSettings | None = None, storage: StorageFunction | None = None,
                 terminal_ss: SteadyStateResult | None = None,
                 terminal_model: PeriodModel | None = None):
        if ss is None:
            raise ValueError("a solved steady state is required")
        if ss.mu.size != model.ns or ss.u_s.size != model.nu:
            raise ValueError("steady state does not match the model dimensions")
        if config.cost_variant is CostVariant.MODIFIED and model.epsilon <= 0:
            raise ValueError("modified variant needs a model with epsilon > 0")
        if config.cost_variant is not CostVariant.MODIFIED and model.epsilon > 0:
            raise ValueError("economic/rotated variants need epsilon = 0")
        self.model = model
        self.ss = ss
        self.config = config
        self.settings = settings or SolverSettings()
        self.storage = storage or StorageFunction.from_steady_state(ss)
        self.terminal_ss = terminal_ss or ss
        self.terminal_set: AffineSliceSet = steady_state_set(self.terminal_ss,
                                                             terminal_model or model)
        if config.terminal_mode is TerminalMode.FIXED_POINT:
            target = np.asarray(config.x_target, dtype=float)
            if target.size != model.ns:
                raise ValueError(f"x_target has length {target.size}, expected {model.ns}")
            if not self.terminal_set.contains(target, 1e-6):
                raise ValueError("x_target is not in the steady-state set")
            self._target = target
        else:
            self._target = None
        self._prev: OpenLoopSolution | None = None
        self._static = self._build_static()

    @property
    def K(self) -> int:
        return self.config.horizon_periods

    def _u_idx(self, i):
        return slice(i * self.model.nu, (i + 1) * self.model.nu)

    def _s_idx(self, k):
        """Block of s_k, k = 1..K."""
        off = self.K * self.model.nu
        return slice(off + (k - 1) * self.model.ns, off + k * self.model.ns)

    def _build_static(self):
        m, K = self.model, self.K
        ns, nu = m.ns, m.nu
        nz = K * (nu + ns)
        Hs = m.hessian(self.config.cost_variant is CostVariant.MODIFIED)
        Pss, Psu, Puu = Hs[:ns, :ns], Hs[:ns, ns:], Hs[ns:, ns:]
        H = np.zeros((nz, nz))
        g = np.zeros(nz)
        qs, qu = m.q[:ns], m.q[ns:]
        for i in range(K):
            ui = self._u_idx(i)
            H[ui, ui] = Puu
            g[ui] += qu
            if i > 0:
                si = self._s_idx(i)
                H[si, si] = Pss
                H[si, ui] = Psu
                H[ui, si] = Psu.T
                g[si] += qs
        if self.config.cost_variant is CostVariant.ROTATED:
            mu = self.storage.mu
            IF = np.eye(ns) - m.F
            for i in range(K):
                g[self._u_idx(i)] -= m.G.T @ mu
                if i > 0:
                    g[self._s_idx(i)] += IF.T @ mu
            g[self._s_idx(K)] += mu

        rows = []
        rhs = []
        for k in range(K):
            R = np.zeros((ns, nz))
            R[:, self._s_idx(k + 1)] = np.eye(ns)
            R[:, self._u_idx(k)] = -m.G
            if k > 0:
                R[:, self._s_idx(k)] = -m.F
            rows.append(R)
            rhs.append(m.c.copy())
        if self.config.terminal_mode is TerminalMode.FIXED_POINT:
            C = np.eye(ns)
            c_rhs = self._target
        else:
            C = self.terminal_set.complement.T
            c_rhs = C @ self.terminal_set.particular
        R = np.zeros((C.shape[0], nz))
        R[:, self._s_idx(K)] = C
        rows.append(R)
        rhs.append(c_rhs)
        lb = np.concatenate([np.tile(m.u_lb, K), np.tile(m.s_lb, K)])
        ub = np.concatenate([np.tile(m.u_ub, K), np.tile(m.s_ub, K)])
        return dict(H=H, g=g, A=np.vstack(rows), b=np.concatenate(rhs), lb=lb, ub=ub,
                    Pss=Pss, Psu=Psu)

    def admissible_state(self, s_now) -> np.ndarray:
        s = np.asarray(s_now, dtype=float)
        m = self.model
        if s.size != m.ns:
            raise ValueError(f"state has length {s.size}, expected {m.ns}")
        viol = max(np.max(m.s_lb - s), np.max(s - m.s_ub), 0.0)
        if viol > CLAMP_TOL:
            raise ValueError(f"state violates its bounds by {viol:.3e}")
        return np.clip(s, m.s_lb, m.s_ub)

    def build_qp(self, s_now) -> QpProblem:
        s0 = self.admissible_state(s_now)
        st = self._static
        m = self.model
        ns = m.ns
        g = st["g"].copy()
        b = st["b"].copy()
        g[self._u_idx(0)] += st["Psu"].T @ s0
        b[:ns] += m.F @ s0
        const = 0.5 * s0 @ st["Pss"] @ s0 + m.q[:ns] @ s0 + self.K * m.r
        if self.config.cost_variant is CostVariant.ROTATED:
            mu = self.storage.mu
            const += mu @ (s0 - m.F @ s0) - self.K * (self.ss.ell_s_full + mu @ m.c)
        return QpProblem(st["H"], g, st["A"], b, st["lb"], st["ub"], const)

    def _terminal_input(self) -> np.ndarray:
        return self.terminal_ss.u_s

    def shifted_candidate(self, prev: OpenLoopSolution) -> np.ndarray:
        """Previous plan shifted by one period with the steady input appended."""
        m = self.model
        u = np.vstack([prev.inputs[1:], self._terminal_input()[None, :]])
        s_last = m.step(prev.states[-1], self._terminal_input())
        s = np.vstack([prev.states[2:], s_last[None, :]])
        return np.concatenate([u.ravel(), s.ravel()])

    def solve(self, s_now, prev: OpenLoopSolution | None = None) -> OpenLoopSolution:
        qp = self.build_qp(s_now)
        x0 = None
        cand_cost = np.nan
        if prev is not None:
            cand = self.shifted_candidate(prev)
            cand_cost = qp.objective(cand)
            if self.config.warm_start is WarmStart.SHIFTED:
                x0 = cand
        sol = solve_qp(qp, self.settings, x0)
        if not sol.ok:
            raise EmpcInfeasible(
                f"horizon QP {sol.status.value} (primal residual {sol.prim_res:.3e}, "
                f"certificate {sol.certificate:.3e})", sol)
        m, K = self.model, self.K
        z = sol.x_star
        inputs = z[:K * m.nu].reshape(K, m.nu)
        states = np.vstack([self.admissible_state(s_now)[None, :],
                            z[K * m.nu:].reshape(K, m.ns)])
        econ = sum(m.economic_cost(states[k], inputs[k]) for k in range(K))
        return OpenLoopSolution(inputs, states, sol.objective, econ, sol.status, cand_cost, sol)

    def step(self, s_now) -> OpenLoopSolution:
        """Solve with the stored previous plan as warm start and remember the result."""
        ol = self.solve(s_now, self._prev)
        self._prev = ol
        return ol

    def reset(self):
        self._prev = None


def run_closed_loop(controller: EmpcController, s0, n_steps: int, plant=None,
                    record_distance: bool = True) -> ClosedLoopTrace:
    """Apply the first input block each period; ``plant(s, u)`` defaults to the model."""
    m = controller.model
    plant = plant or m.step
    modified = controller.config.cost_variant is CostVariant.MODIFIED
    trace = ClosedLoopTrace(m, controller.config)
    controller.reset()
    s = controller.admissible_state(s0)
    for t in range(n_steps):
        t0 = time.perf_counter()
        try:
            ol = controller.step(s)
        except EmpcInfeasible as exc:
            exc.trace = trace
            trace.final_state = s
            if t == 0:
                raise EmpcInfeasible(f"initial state is not admissible: {exc}", exc.solution,
                                     trace) from exc
            raise
        ms = 1e3 * (time.perf_counter() - t0)
        u = ol.inputs[0]
        trace.states.append(s.copy())
        trace.inputs.append(u.copy())
        trace.stage_cost_economic.append(m.economic_cost(s, u))
        trace.stage_cost_modified.append(m.stage_cost(s, u))
        trace.rotated_cost.append(rotated_cost(controller.storage, m, controller.ss, s, u))
        trace.lyapunov.append(lyapunov_value(ol, controller.storage, m, controller.ss, modified))
        trace.dist_to_set.append(controller.terminal_set.distance(s) if record_distance
                                 else np.nan)
        trace.status.append(ol.status.value)
        trace.solve_ms.append(ms)
        trace.open_loop.append(ol)
        s = controller.admissible_state(plant(s, u))
    trace.final_state = s
    return trace
