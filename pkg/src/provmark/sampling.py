"""Deterministic DDIM sampling with optional key-conditioned deflection.

Plain update (one step t -> t-1, eta = 0):

    x_{t-1} = x_t / sqrt(a_t) + (sqrt(1 - abar_{t-1}) - sqrt(1 - abar_t) / sqrt(a_t)) eps

Deflected update scales the state path by M = clamp(gamma K + 1, m_min),
elementwise in the key K:

    x_{t-1} = M x_t / sqrt(a_t) + (sqrt(1 - abar_{t-1}) - M sqrt(1 - abar_t) / sqrt(a_t)) eps

With M = 1 the two coincide.  sqrt(1 - abar_{t-1}) is always written as
sqrt(a_t - abar_t) / sqrt(a_t), the identity that also powers the exact
inverse in the companion inversion module.

All entry points broadcast over leading batch axes of (..., C, H, W);
the deflection coefficient may be a scalar, one key (C, H, W), or a
batch of keys.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError
from .predictors import NoisePredictor
from .schedule import DiffusionSchedule


@dataclass(frozen=True)
class DeflectionConfig:
    """Which steps are deflected and how strongly.

    ``steps`` holds the set of step indices t at which the coefficient is
    applied.  The conventional choice is the first few sampling steps,
    i.e. the largest t values; see ``first_steps``.
    """

    gamma: float = 0.1
    steps: tuple[int, ...] = ()
    m_min: float = 0.5

    def __post_init__(self):
        if self.gamma < 0:
            raise ParameterError(f"gamma must be nonnegative, got {self.gamma}")
        if not 0 < self.m_min <= 1:
            raise ParameterError(f"m_min must lie in (0, 1], got {self.m_min}")
        steps = tuple(sorted(set(int(t) for t in self.steps)))
        if steps and steps[0] < 1:
            raise ParameterError("deflected step indices must be >= 1")
        object.__setattr__(self, "steps", steps)

    @classmethod
    def first_steps(cls, schedule: DiffusionSchedule, n_steps: int = 5,
                    gamma: float = 0.1, m_min: float = 0.5) -> "DeflectionConfig":
        """Deflect the first ``n_steps`` of sampling: t = T, T-1, ..."""
        T = schedule.num_steps
        if not 0 <= n_steps <= T:
            raise ParameterError(f"n_steps must be in 0..{T}, got {n_steps}")
        return cls(gamma=gamma, steps=tuple(range(T - n_steps + 1, T + 1)), m_min=m_min)

    def coefficient(self, key: np.ndarray | float) -> np.ndarray:
        """M = clamp(gamma K + 1, m_min), elementwise."""
        return np.maximum(self.gamma * np.asarray(key, dtype=np.float64) + 1.0, self.m_min)

    def is_deflected(self, t: int) -> bool:
        return t in self.steps


def ddim_step(x: np.ndarray, eps: np.ndarray, schedule: DiffusionSchedule, t: int) -> np.ndarray:
    a, s1m, sam = schedule.coefficients_at(t)
    ra = np.sqrt(a)
    return x / ra + (sam / ra - s1m / ra) * eps


def deflected_step(x: np.ndarray, eps: np.ndarray, schedule: DiffusionSchedule,
                   t: int, coef: np.ndarray | float) -> np.ndarray:
    a, s1m, sam = schedule.coefficients_at(t)
    ra = np.sqrt(a)
    m = np.asarray(coef, dtype=np.float64)
    return m * x / ra + (sam / ra - m * s1m / ra) * eps


@dataclass
class Trajectory:
    """States of one denoising or inversion pass, indexed by step.

    ``state_at(t)`` returns x_t; index 0 is the clean image for a forward
    pass or the starting image for an inversion.
    """

    num_steps: int
    _states: dict[int, np.ndarray] = field(default_factory=dict)

    def record(self, t: int, x: np.ndarray) -> None:
        self._states[int(t)] = np.array(x, copy=True)

    def state_at(self, t: int) -> np.ndarray:
        if t not in self._states:
            raise ParameterError(f"no state recorded for step {t}")
        return self._states[t]

    @property
    def recorded_steps(self) -> list[int]:
        return sorted(self._states)


def run_denoise(x_start: np.ndarray, predictor: NoisePredictor,
                schedule: DiffusionSchedule,
                deflection: DeflectionConfig | None = None,
                key: np.ndarray | None = None,
                trajectory: Trajectory | None = None) -> np.ndarray:
    """Run t = T..1 and return the clean image x_0.

    ``key`` is required when ``deflection`` names any steps; pass a
    trajectory to capture every intermediate state.
    """
    coef = _resolve_coef(deflection, key)
    x = np.asarray(x_start, dtype=np.float64)
    if trajectory is not None:
        trajectory.record(schedule.num_steps, x)
    for t in range(schedule.num_steps, 0, -1):
        eps = predictor(x, t)
        if deflection is not None and deflection.is_deflected(t):
            x = deflected_step(x, eps, schedule, t, coef)
        else:
            x = ddim_step(x, eps, schedule, t)
        if trajectory is not None:
            trajectory.record(t - 1, x)
    return x


def _resolve_coef(deflection: DeflectionConfig | None, key) -> np.ndarray | None:
    if deflection is None or not deflection.steps:
        return None
    if key is None:
        raise ParameterError("deflection requested but no key given")
    return deflection.coefficient(key)
