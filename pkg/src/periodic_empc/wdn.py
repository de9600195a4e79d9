"""Richmond-style water distribution network: six tanks, six pump stations, ten demands.

Tank areas, demand magnitudes and the daily profiles are placeholders chosen to
keep the instance self-contained; the incidence pattern and the level/flow
bounds are those of the benchmark's control-oriented model.
"""

from __future__ import annotations

from dataclasses import dataclass, field, fields, replace

import numpy as np

from .dynamics import AugmentedSystem, LiftedSystem, LinearPeriodicSystem, augment, lift
from .model import BoxConstraints, StageCostSpec

TANKS = ("A", "B", "C", "D", "E", "F")

# +1 inflow, -1 outflow; rows are tanks, columns pumps
PUMP_INCIDENCE = np.array([
    [1, -1, -1, -1, 0, 0],
    [0, 1, 0, 0, 0, 0],
    [0, 0, 1, 0, 0, 0],
    [0, 0, 0, 1, -1, 0],
    [0, 0, 0, 0, 1, -1],
    [0, 0, 0, 0, 0, 1],
], dtype=float)

# demand j is drawn from tank DEMAND_TANK[j]
DEMAND_TANK = (0, 0, 0, 1, 2, 3, 3, 3, 4, 5)

LEVEL_MAX_M = (1.011, 1.095, 0.6, 0.633, 0.807, 0.657)
PUMP_MAX_M3_PER_H = 50.0

DEFAULT_AREAS_M2 = (30.0, 20.0, 10.0, 15.0, 25.0, 12.0)
DEFAULT_DEMAND_BASE_M3_PER_H = (2.5, 1.5, 2.0, 3.0, 2.2, 1.2, 1.8, 1.0, 2.6, 2.2)

OFF_PEAK_HOURS = tuple(range(0, 7)) + (22, 23)


def synthesize_profiles(amplitude: float = 0.3, off_peak: float = 0.5, peak: float = 1.5,
                        T: int = 24, morning_hour: float = 8.0, evening_hour: float = 19.0,
                        ) -> tuple[np.ndarray, np.ndarray]:
    """Mean-one diurnal demand multiplier and a two-level tariff.

    The multiplier has a morning and an evening bump of relative height
    ``amplitude`` and a night trough; it is renormalized so its mean is exactly one.
    """
    h = np.arange(T, dtype=float) * 24.0 / T

    def bump(center, width):
        d = (h - center + 12.0) % 24.0 - 12.0
        return np.exp(-0.5 * (d / width) ** 2)

    shape = bump(morning_hour, 2.0) + 0.8 * bump(evening_hour, 2.5) - 0.6 * bump(3.0, 3.0)
    raw = 1.0 + amplitude * shape
    if np.any(raw <= 0):
        raise ValueError("amplitude too large: demand multiplier becomes nonpositive")
    multiplier = raw / raw.mean()
    hours = np.floor(h).astype(int)
    tariff = np.where(np.isin(hours, OFF_PEAK_HOURS), off_peak, peak).astype(float)
    return multiplier, tariff


@dataclass(frozen=True)
class WdnInstance:
    tank_areas: tuple[float, ...] = DEFAULT_AREAS_M2
    dt_hours: float = 1.0
    demand_base: tuple[float, ...] = DEFAULT_DEMAND_BASE_M3_PER_H
    demand_amplitude: float = 0.3
    tariff_off_peak: float = 0.5
    tariff_peak: float = 1.5
    W_weight: float = 0.1
    T: int = 24
    demand_multiplier: np.ndarray = field(default=None, repr=False)
    tariff: np.ndarray = field(default=None, repr=False)

    def __post_init__(self):
        areas = np.asarray(self.tank_areas, dtype=float)
        if areas.shape != (6,) or np.any(areas <= 0):
            raise ValueError("tank_areas: need six positive tank areas")
        if self.dt_hours <= 0:
            raise ValueError("dt_hours: sampling interval must be positive")
        base = np.asarray(self.demand_base, dtype=float)
        if base.shape != (10,) or np.any(base < 0):
            raise ValueError("demand_base: need ten nonnegative demand magnitudes")
        if self.W_weight < 0:
            raise ValueError("W_weight: must be nonnegative")
        mult, tariff = synthesize_profiles(self.demand_amplitude, self.tariff_off_peak,
                                           self.tariff_peak, self.T)
        if self.demand_multiplier is not None:
            mult = np.asarray(self.demand_multiplier, dtype=float)
            if mult.shape != (self.T,) or abs(mult.mean() - 1.0) > 1e-9:
                raise ValueError("demand_multiplier: need T entries with mean 1")
        if self.tariff is not None:
            tariff = np.asarray(self.tariff, dtype=float)
            if tariff.shape != (self.T,):
                raise ValueError("tariff: need T entries")
        object.__setattr__(self, "demand_multiplier", mult)
        object.__setattr__(self, "tariff", tariff)

    @property
    def A(self) -> np.ndarray:
        return np.eye(6)

    @property
    def B_u(self) -> np.ndarray:
        scale = self.dt_hours / np.asarray(self.tank_areas)
        return PUMP_INCIDENCE * scale[:, None]

    @property
    def B_d(self) -> np.ndarray:
        scale = self.dt_hours / np.asarray(self.tank_areas)
        Bd = np.zeros((6, 10))
        for j, tank in enumerate(DEMAND_TANK):
            Bd[tank, j] = -scale[tank]
        return Bd

    @property
    def demands(self) -> np.ndarray:
        """(T, 10) demand sequence: multiplier times base."""
        return self.demand_multiplier[:, None] * np.asarray(self.demand_base)[None, :]

    @property
    def box(self) -> BoxConstraints:
        x_max = np.array(LEVEL_MAX_M)
        return BoxConstraints(-x_max, x_max, np.zeros(6), np.full(6, PUMP_MAX_M3_PER_H))

    @property
    def W(self) -> np.ndarray:
        return self.W_weight * np.eye(6)

    def system(self) -> LinearPeriodicSystem:
        return LinearPeriodicSystem(self.A, self.B_u, self.B_d, self.T, self.demands)

    def cost(self, epsilon: float = 0.0) -> StageCostSpec:
        alpha = np.repeat(self.tariff[:, None], 6, axis=1)
        return StageCostSpec(alpha, self.W, epsilon)

    def required_pumping(self) -> np.ndarray:
        """Per-pump average flow that balances the average demand over a period."""
        mean_d = self.demands.mean(axis=0)
        return np.linalg.solve(PUMP_INCIDENCE, -(self.B_d / self.B_u.diagonal()[:, None]) @ mean_d)


@dataclass(frozen=True)
class RichmondBundle:
    instance: WdnInstance
    system: LinearPeriodicSystem
    lifted: LiftedSystem
    aug: AugmentedSystem
    cost: StageCostSpec
    box: BoxConstraints

    def x0_lower(self) -> np.ndarray:
        """Lifted initial state with every block at the lower level bound."""
        return np.tile(self.box.x_lb, self.instance.T)


def build_richmond(**overrides) -> RichmondBundle:
    known = {f.name for f in fields(WdnInstance)}
    for key in overrides:
        if key not in known:
            raise ValueError(f"{key}: unknown Richmond instance field")
    inst = replace(WdnInstance(), **overrides) if overrides else WdnInstance()
    sys = inst.system()
    lifted = lift(sys)
    return RichmondBundle(inst, sys, lifted, augment(lifted), inst.cost(), inst.box)
