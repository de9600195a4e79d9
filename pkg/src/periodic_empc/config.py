"""Scenario files: YAML with units in key names, turned into ready-to-run objects."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import yaml

from .controller import CostVariant, EmpcConfig, TerminalMode, WarmStart
from .dynamics import AugmentedSystem, LiftedSystem, LinearPeriodicSystem, augment, lift
from .model import BoxConstraints, PeriodModel, StageCostSpec, build_period_model
from .steady_state import choose_epsilon
from .wdn import build_richmond

X0_KEYWORDS = ("min", "max", "zero")


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class SystemBlock:
    kind: str = "linear"                      # "linear" or "richmond"
    A: Any = None
    B_u: Any = None
    B_d: Any = None
    period_steps: int = 1
    step_hours: float = 1.0
    disturbance: Any = None                   # (T, p)
    richmond: dict = field(default_factory=dict)


@dataclass(frozen=True)
class CostBlock:
    alpha: Any = None                         # (T, m) prices; richmond uses its tariff
    R: Any = None
    W: Any = None
    offset: float = 0.0
    epsilon: float | None = None
    gamma: float | None = None


@dataclass(frozen=True)
class ConstraintsBlock:
    x_lb: Any = None
    x_ub: Any = None
    u_lb: Any = None
    u_ub: Any = None


@dataclass(frozen=True)
class EmpcBlock:
    horizon_periods: int = 3
    terminal_mode: str = "steady_state_set"
    cost_variant: str = "economic"
    warm_start: str = "shifted"
    n_steps: int = 6
    x0: Any = "min"
    v0: Any = None
    x_target: Any = "steady"
    allow_single_period: bool = False


@dataclass(frozen=True)
class CertificationBlock:
    n_samples: int = 10_000
    seed: int = 0
    n_set_samples: int = 100
    shift_check: bool = True


@dataclass(frozen=True)
class OutputBlock:
    directory: str = "out"
    formats: tuple = ("csv", "json")


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "scenario"
    system: SystemBlock = field(default_factory=SystemBlock)
    cost: CostBlock = field(default_factory=CostBlock)
    constraints: ConstraintsBlock = field(default_factory=ConstraintsBlock)
    empc: EmpcBlock = field(default_factory=EmpcBlock)
    certification: CertificationBlock = field(default_factory=CertificationBlock)
    output: OutputBlock = field(default_factory=OutputBlock)
    base_dir: Path = field(default=Path("."), compare=False)


_BLOCKS = {"system": SystemBlock, "cost": CostBlock, "constraints": ConstraintsBlock,
           "empc": EmpcBlock, "certification": CertificationBlock, "output": OutputBlock}


def _block(cls, raw, name):
    if raw is None:
        return cls()
    if not isinstance(raw, dict):
        raise ConfigError(f"{name}: expected a mapping")
    known = set(cls.__dataclass_fields__)
    extra = sorted(set(raw) - known)
    if extra:
        raise ConfigError(f"{name}: unknown key(s) {', '.join(extra)}")
    raw = dict(raw)
    if cls is OutputBlock and "formats" in raw:
        raw["formats"] = tuple(raw["formats"])
    return cls(**raw)


def parse_config(raw: dict, base_dir: Path = Path(".")) -> ScenarioConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config root must be a mapping")
    extra = sorted(set(raw) - set(_BLOCKS) - {"name"})
    if extra:
        raise ConfigError(f"unknown top-level key(s) {', '.join(extra)}")
    blocks = {k: _block(cls, raw.get(k), k) for k, cls in _BLOCKS.items()}
    return ScenarioConfig(name=str(raw.get("name", "scenario")), base_dir=Path(base_dir),
                          **blocks)


def load_config(path) -> ScenarioConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: not valid YAML ({exc})") from exc
    return parse_config(raw, path.parent)


def _array(value, base_dir: Path, name: str, ndim: int | None = None):
    """Inline nested lists, or a path to a whitespace/comma separated text or .npy file."""
    if value is None:
        return None
    if isinstance(value, str):
        p = base_dir / value
        if not p.is_file():
            raise ConfigError(f"{name}: referenced file {p} does not exist")
        if p.suffix == ".npy":
            arr = np.load(p)
        else:
            arr = np.loadtxt(p, delimiter="," if p.suffix == ".csv" else None, ndmin=2)
    else:
        try:
            arr = np.asarray(value, dtype=float)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{name}: not numeric") from exc
    if ndim == 2:
        arr = np.atleast_2d(arr)
    elif ndim == 1:
        arr = np.atleast_1d(arr).ravel()
    if not np.all(np.isfinite(arr)) and name not in ("u_lb", "u_ub"):
        raise ConfigError(f"{name}: contains non-finite entries")
    return arr.astype(float)


@dataclass(frozen=True)
class Scenario:
    """Everything a command needs; ``model_plain`` has epsilon 0, ``model`` the run's cost."""

    config: ScenarioConfig
    system: LinearPeriodicSystem
    lifted: LiftedSystem
    aug: AugmentedSystem | None
    box: BoxConstraints
    cost_plain: StageCostSpec
    model_plain: PeriodModel
    model: PeriodModel
    epsilon: float
    gamma: float | None

    @property
    def variant(self) -> CostVariant:
        return CostVariant(self.config.empc.cost_variant)

    @property
    def step_hours(self) -> float:
        return self.config.system.step_hours

    def initial_state(self) -> np.ndarray:
        x0 = self.config.empc.x0
        n, T = self.system.n, self.system.T
        if isinstance(x0, str):
            if x0 not in X0_KEYWORDS:
                raise ConfigError(f"empc.x0: unknown keyword {x0!r}")
            one = {"min": self.box.x_lb, "max": self.box.x_ub, "zero": np.zeros(n)}[x0]
            x = np.tile(one, T)
        else:
            x = _array(x0, self.config.base_dir, "empc.x0", 1)
            if x.size == n:
                x = np.tile(x, T)
            elif x.size != n * T:
                raise ConfigError(f"empc.x0: need {n} or {n * T} entries, got {x.size}")
        if self.aug is None:
            return x
        v = self.config.empc.v0
        v = None if v is None else _array(v, self.config.base_dir, "empc.v0", 1)
        if v is not None and v.size != self.system.m:
            raise ConfigError(f"empc.v0: need {self.system.m} entries")
        return self.aug.initial_state(x, v)

    def empc_config(self, x_target=None) -> EmpcConfig:
        e = self.config.empc
        try:
            return EmpcConfig(e.horizon_periods, TerminalMode(e.terminal_mode),
                              CostVariant(e.cost_variant), WarmStart(e.warm_start),
                              x_target, e.allow_single_period)
        except ValueError as exc:
            raise ConfigError(f"empc: {exc}") from exc


def _resolve_epsilon(cost: CostBlock, variant: CostVariant, box: BoxConstraints, T: int):
    eps, gamma = cost.epsilon, cost.gamma
    if variant is CostVariant.MODIFIED:
        if (eps is None) == (gamma is None):
            raise ConfigError("cost: the modified variant needs exactly one of epsilon / gamma")
        if gamma is not None:
            if gamma <= 0:
                raise ConfigError("cost.gamma must be positive")
            return choose_epsilon(gamma, box, T), float(gamma)
        if eps <= 0:
            raise ConfigError("cost.epsilon must be positive for the modified variant")
        return float(eps), None
    if eps not in (None, 0, 0.0) or gamma is not None:
        raise ConfigError("cost: epsilon / gamma only apply to the modified variant")
    return 0.0, None


def build_scenario(cfg: ScenarioConfig) -> Scenario:
    try:
        variant = CostVariant(cfg.empc.cost_variant)
    except ValueError as exc:
        raise ConfigError(f"empc.cost_variant: {exc}") from exc
    s, c, b = cfg.system, cfg.cost, cfg.constraints
    try:
        if s.kind == "richmond":
            if c.alpha is not None or any(v is not None for v in vars(b).values()):
                raise ConfigError("richmond systems take prices and bounds from the instance; "
                                  "use system.richmond overrides instead")
            bundle = build_richmond(**s.richmond)
            system, lifted, box = bundle.system, bundle.lifted, bundle.box
            cost_plain = bundle.cost
            if c.W is not None or c.R is not None:
                raise ConfigError("richmond: set W through system.richmond.W_weight")
        elif s.kind == "linear":
            system, lifted, box, cost_plain = _linear_pieces(cfg)
        else:
            raise ConfigError(f"system.kind: unknown kind {s.kind!r}")
        eps, gamma = _resolve_epsilon(c, variant, box, system.T)
        aug = augment(lifted) if cost_plain.has_input_change else None
        model_plain = build_period_model(lifted, cost_plain, box, aug)
        model = model_plain if eps == 0 else build_period_model(
            lifted, cost_plain.with_epsilon(eps), box, aug)
    except ConfigError:
        raise
    except (ValueError, TypeError) as exc:
        raise ConfigError(str(exc)) from exc
    if s.step_hours <= 0:
        raise ConfigError("system.step_hours must be positive")
    if cfg.empc.n_steps < 0:
        raise ConfigError("empc.n_steps must be nonnegative")
    return Scenario(cfg, system, lifted, aug, box, cost_plain, model_plain, model, eps, gamma)


def _linear_pieces(cfg: ScenarioConfig):
    s, c, b = cfg.system, cfg.cost, cfg.constraints
    base = cfg.base_dir
    if s.A is None or s.B_u is None:
        raise ConfigError("system: linear systems need A and B_u")
    A = _array(s.A, base, "system.A", 2)
    B_u = _array(s.B_u, base, "system.B_u", 2)
    n, m, T = A.shape[0], B_u.shape[1], int(s.period_steps)
    if A.shape != (n, n) or B_u.shape[0] != n:
        raise ConfigError(f"system: A is {A.shape}, B_u is {B_u.shape}")
    if s.B_d is None:
        B_d, d = np.zeros((n, 0)), np.zeros((T, 0))
    else:
        B_d = _array(s.B_d, base, "system.B_d", 2)
        if B_d.shape[0] != n:
            raise ConfigError(f"system.B_d: expected {n} rows, got {B_d.shape[0]}")
        if s.disturbance is None:
            raise ConfigError("system.disturbance is required when B_d is given")
        d = _array(s.disturbance, base, "system.disturbance", 2)
        if d.shape != (T, B_d.shape[1]):
            raise ConfigError(f"system.disturbance: expected shape {(T, B_d.shape[1])}, "
                              f"got {d.shape}")
    system = LinearPeriodicSystem(A, B_u, B_d, T, d)
    alpha = np.zeros((T, m)) if c.alpha is None else _array(c.alpha, base, "cost.alpha", 2)
    if alpha.shape == (1, m) and T > 1:
        alpha = np.repeat(alpha, T, axis=0)
    if alpha.shape != (T, m):
        raise ConfigError(f"cost.alpha: expected shape {(T, m)}, got {alpha.shape}")
    W = np.zeros((m, m)) if c.W is None else _array(c.W, base, "cost.W", 2)
    R = None if c.R is None else _array(c.R, base, "cost.R", 2)
    cost = StageCostSpec(alpha, W, 0.0, R, c.offset)

    def bound(val, name, size, default):
        if val is None:
            if default is None:
                raise ConfigError(f"constraints.{name} is required")
            return np.full(size, default)
        arr = _array(val, base, f"constraints.{name}", 1)
        if arr.size == 1:
            arr = np.full(size, arr[0])
        if arr.size != size:
            raise ConfigError(f"constraints.{name}: expected {size} entries, got {arr.size}")
        return arr

    box = BoxConstraints(bound(b.x_lb, "x_lb", n, None), bound(b.x_ub, "x_ub", n, None),
                         bound(b.u_lb, "u_lb", m, -np.inf), bound(b.u_ub, "u_ub", m, np.inf))
    return system, lift(system), box, cost
