"""Variance schedule for the DDIM-style pipeline.

Conventions used throughout the package:

    alpha_t    = 1 - beta_t
    alpha_bar_t = prod_{i<=t} alpha_i,  alpha_bar_0 = 1

Steps are indexed 1..T.  All three arrays are stored with length T+1 so
that position ``t`` holds the value for step t; position 0 is a sentinel
(beta_0 = 0, alpha_0 = alpha_bar_0 = 1).  Keeping the sentinel means no
off-by-one bookkeeping at call sites: ``alpha_bar[t-1]`` is the previous
accumulated product even at t = 1.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .errors import ParameterError


@dataclass(frozen=True)
class DiffusionSchedule:
    """Immutable per-step variance schedule.

    ``beta`` may be any per-step sequence in (0, 1); ``alpha`` and
    ``alpha_bar`` are derived in ``__post_init__`` and must not be
    supplied.
    """

    num_steps: int
    beta: np.ndarray
    alpha: np.ndarray = field(init=False, repr=False)
    alpha_bar: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        T = self.num_steps
        if T < 1:
            raise ParameterError(f"num_steps must be >= 1, got {T}")
        beta = np.asarray(self.beta, dtype=np.float64)
        if beta.shape == (T,):
            beta = np.concatenate([[0.0], beta])
        if beta.shape != (T + 1,):
            raise ParameterError(
                f"beta must have length {T} (or {T + 1} with sentinel), got {beta.shape}"
            )
        if beta[0] != 0.0:
            raise ParameterError("beta sentinel at index 0 must be 0")
        if np.any(beta[1:] <= 0.0) or np.any(beta[1:] >= 1.0):
            raise ParameterError("beta values must lie strictly in (0, 1)")
        alpha = 1.0 - beta
        alpha_bar = np.cumprod(alpha)
        for name, value in (("beta", beta), ("alpha", alpha), ("alpha_bar", alpha_bar)):
            value.setflags(write=False)
            object.__setattr__(self, name, value)
        # cumprod of values in (0,1) is strictly decreasing and positive
        assert alpha_bar[0] == 1.0 and np.all(np.diff(alpha_bar) < 0) and alpha_bar[-1] > 0

    def coefficients_at(self, t: int) -> tuple[float, float, float]:
        """Return (alpha_t, sqrt(1 - alpha_bar_t), sqrt(alpha_t - alpha_bar_t)).

        These three numbers are everything a single DDIM update or its
        inverse needs.  The identity

            sqrt(alpha_t - alpha_bar_t) = sqrt(alpha_t) * sqrt(1 - alpha_bar_{t-1})

        holds because alpha_bar_t = alpha_t * alpha_bar_{t-1}.
        """
        t = self._check_step(t)
        a = float(self.alpha[t])
        return a, float(np.sqrt(1.0 - self.alpha_bar[t])), float(np.sqrt(a - self.alpha_bar[t]))

    def _check_step(self, t: int) -> int:
        if not 1 <= t <= self.num_steps:
            raise ParameterError(f"step index {t} outside 1..{self.num_steps}")
        return int(t)

    def content_hash(self) -> str:
        """Stable hex digest of (T, beta); used for provenance checks."""
        h = hashlib.sha256()
        h.update(str(self.num_steps).encode())
        h.update(self.beta[1:].tobytes())
        return h.hexdigest()[:16]


def make_linear_schedule(num_steps: int = 50,
                         beta_start: float = 1e-4,
                         beta_end: float = 0.02) -> DiffusionSchedule:
    """Linearly spaced beta_1..beta_T directly over the T sampling steps."""
    if num_steps < 1:
        raise ParameterError(f"num_steps must be >= 1, got {num_steps}")
    if not (0.0 < beta_start <= beta_end < 1.0):
        raise ParameterError(
            f"need 0 < beta_start <= beta_end < 1, got ({beta_start}, {beta_end})"
        )
    beta = np.linspace(beta_start, beta_end, num_steps)
    return DiffusionSchedule(num_steps=num_steps, beta=beta)
