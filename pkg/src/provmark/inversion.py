"""DDIM inversion and the initialization bias it leaves behind.

Solving the sampling update for x_t gives the exact inverse

    x_t = sqrt(a_t) x_{t-1} + (sqrt(1 - abar_t) - sqrt(a_t - abar_t)) eps

and, when step t was deflected with coefficient M,

    x_t = sqrt(a_t) x_{t-1} / M + (sqrt(1 - abar_t) - sqrt(a_t - abar_t) / M) eps.

The algebra is an identity for a shared eps.  In practice the inverse
pass can only evaluate the predictor at the state it has, x_{t-1}, while
the forward pass evaluated it at x_t; that argument substitution is the
sole source of drift.  After inverting all T steps, the gap between the
recovered start and the keyed initialization,

    delta_T = x_hat_T - F(K, S),

is the initialization bias.  Its strength is summarized by the mean of
delta_T^2 over elements, which keeps the scale comparable across
resolutions.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .keys import Salt, UserKey, initialize_noise, make_salt
from .predictors import NoisePredictor
from .sampling import DeflectionConfig, Trajectory, _resolve_coef
from .schedule import DiffusionSchedule


def inverse_ddim_step(x_prev: np.ndarray, eps: np.ndarray,
                      schedule: DiffusionSchedule, t: int) -> np.ndarray:
    a, s1m, sam = schedule.coefficients_at(t)
    return np.sqrt(a) * x_prev + (s1m - sam) * eps


def inverse_deflected_step(x_prev: np.ndarray, eps: np.ndarray,
                           schedule: DiffusionSchedule, t: int,
                           coef: np.ndarray | float) -> np.ndarray:
    a, s1m, sam = schedule.coefficients_at(t)
    m = np.asarray(coef, dtype=np.float64)
    return np.sqrt(a) * x_prev / m + (s1m - sam / m) * eps


def run_invert(image: np.ndarray, predictor: NoisePredictor,
               schedule: DiffusionSchedule,
               deflection: DeflectionConfig | None = None,
               key: np.ndarray | None = None,
               trajectory: Trajectory | None = None) -> np.ndarray:
    """Run t = 1..T from a clean image and return the recovered start.

    The predictor is evaluated at the current (previous-step) state; this
    is where inversion departs from the forward pass.
    """
    coef = _resolve_coef(deflection, key)
    x = np.asarray(image, dtype=np.float64)
    if trajectory is not None:
        trajectory.record(0, x)
    for t in range(1, schedule.num_steps + 1):
        eps = predictor(x, t)
        if deflection is not None and deflection.is_deflected(t):
            x = inverse_deflected_step(x, eps, schedule, t, coef)
        else:
            x = inverse_ddim_step(x, eps, schedule, t)
        if trajectory is not None:
            trajectory.record(t, x)
    return x


@dataclass(frozen=True)
class InitializationBias:
    """delta_T and its per-image second moment.

    ``delta`` has the shape of the inverted latents; ``second_moment`` is
    mean(delta^2) over the trailing (C, H, W) axes, so a batch of images
    yields a vector of moments.
    """

    delta: np.ndarray
    second_moment: np.ndarray | float

    @classmethod
    def from_delta(cls, delta: np.ndarray) -> "InitializationBias":
        delta = np.asarray(delta, dtype=np.float64)
        sm = np.mean(delta * delta, axis=(-3, -2, -1))
        return cls(delta=delta, second_moment=sm if sm.ndim else float(sm))


def compute_bias(image: np.ndarray,
                 key: np.ndarray | UserKey,
                 timestamp: int | np.ndarray,
                 predictor: NoisePredictor,
                 schedule: DiffusionSchedule,
                 deflection: DeflectionConfig | None = None) -> InitializationBias:
    """Invert ``image`` under ``key`` and compare with the keyed start.

    ``timestamp`` may be a scalar or one value per leading batch element;
    the salts are rebuilt from it exactly as generation built them.
    """
    k = key.tensor if isinstance(key, UserKey) else np.asarray(key, dtype=np.float64)
    image = np.asarray(image, dtype=np.float64)
    shape = image.shape[-3:]
    timestamps = np.atleast_1d(np.asarray(timestamp, dtype=np.int64))
    if timestamps.size == 1:
        salts = make_salt(int(timestamps[0]), shape).values
    else:
        salts = np.stack([make_salt(int(ts), shape).values for ts in timestamps])
    full = np.broadcast_shapes(k.shape, salts.shape, image.shape)
    reference = initialize_noise(np.broadcast_to(k, full), np.broadcast_to(salts, full))
    recovered = run_invert(image, predictor, schedule, deflection, key=k)
    return InitializationBias.from_delta(recovered - reference)
