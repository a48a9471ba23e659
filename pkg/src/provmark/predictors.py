"""Noise predictors: the pluggable denoiser interface and three backends.

A predictor maps (state x, step t) to an estimate of the standard normal
noise carried by x.  Three backends cover the needs of the toolkit:

``TimeOnlyPredictor``
    eps depends on t alone.  Forward sampling and inversion then see the
    same eps at every step, so DDIM inversion is exact up to float error.
    Useful as a correctness probe of the update algebra.

``StochasticOraclePredictor``
    Every call draws fresh N(0, 1) noise from a seeded stream.  Resetting
    the seed replays the identical stream, which lets a simulation and a
    closed-form evaluation consume the very same draws.

``MixturePredictor``
    The MMSE estimator of eps when clean images follow an isotropic
    Gaussian mixture sum_j w_j N(mu_j, sigma0^2 I) and x was produced by
    the forward process x = sqrt(abar_t) x0 + sqrt(1 - abar_t) eps:

        s_t^2   = abar_t sigma0^2 + 1 - abar_t
        r_j(x)  = softmax_j[ log w_j - ||x - sqrt(abar_t) mu_j||^2 / (2 s_t^2) ]
        eps_hat = sum_j r_j sqrt(1 - abar_t) (x - sqrt(abar_t) mu_j) / s_t^2

    Responsibilities use the whole-image squared norm, so they are scalar
    per image; the predictor is deterministic and smooth in x.
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np
from scipy.ndimage import zoom as ndi_zoom
from scipy.ndimage import gaussian_filter

from .errors import ParameterError
from .schedule import DiffusionSchedule


class NoisePredictor:
    """Interface: callable (x, t) -> eps_hat with a provenance hash."""

    def predict(self, x: np.ndarray, t: int) -> np.ndarray:
        raise NotImplementedError

    def __call__(self, x: np.ndarray, t: int) -> np.ndarray:
        return self.predict(x, t)

    def content_hash(self) -> str:
        raise NotImplementedError


class TimeOnlyPredictor(NoisePredictor):
    """Per-step fixed noise tables, independent of the state."""

    def __init__(self, num_steps: int, shape: tuple[int, ...], seed: int = 0):
        rng = np.random.default_rng(seed)
        self.num_steps = int(num_steps)
        self.shape = tuple(shape)
        self.seed = int(seed)
        self._table = rng.standard_normal((self.num_steps,) + self.shape)

    def predict(self, x: np.ndarray, t: int) -> np.ndarray:
        if not 1 <= t <= self.num_steps:
            raise ParameterError(f"step {t} outside 1..{self.num_steps}")
        eps = self._table[t - 1]
        return np.broadcast_to(eps, np.shape(x)).copy() if np.shape(x) != eps.shape else eps

    def content_hash(self) -> str:
        return _digest("time_only", self.num_steps, self.shape, self.seed)


class StochasticOraclePredictor(NoisePredictor):
    """Fresh standard normal noise on every call, replayable via reset()."""

    def __init__(self, seed: int = 0):
        self.seed = int(seed)
        self.reset()

    def reset(self, seed: int | None = None) -> None:
        if seed is not None:
            self.seed = int(seed)
        self._rng = np.random.default_rng(self.seed)
        self.calls = 0

    def predict(self, x: np.ndarray, t: int) -> np.ndarray:
        self.calls += 1
        return self._rng.standard_normal(np.shape(x))

    def content_hash(self) -> str:
        return _digest("stochastic_oracle", self.seed)


@dataclass(frozen=True)
class MixtureImageModel:
    """Isotropic Gaussian mixture over clean images."""

    means: np.ndarray        # (J, C, H, W)
    weights: np.ndarray      # (J,), positive, sums to 1
    sigma0_sq: float

    def __post_init__(self):
        means = np.asarray(self.means, dtype=np.float64)
        weights = np.asarray(self.weights, dtype=np.float64)
        if means.ndim != 4:
            raise ParameterError(f"means must be (J, C, H, W), got shape {means.shape}")
        if weights.shape != (means.shape[0],):
            raise ParameterError("one weight per component required")
        if np.any(weights <= 0) or abs(weights.sum() - 1.0) > 1e-9:
            raise ParameterError("weights must be positive and sum to 1")
        if self.sigma0_sq <= 0:
            raise ParameterError("sigma0_sq must be positive")
        object.__setattr__(self, "means", means)
        object.__setattr__(self, "weights", weights)

    @property
    def image_shape(self) -> tuple[int, int, int]:
        return tuple(self.means.shape[1:])

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Draw n clean images from the mixture."""
        comp = rng.choice(len(self.weights), size=n, p=self.weights)
        noise = rng.standard_normal((n,) + self.image_shape)
        return self.means[comp] + np.sqrt(self.sigma0_sq) * noise

    def content_hash(self) -> str:
        h = hashlib.sha256()
        h.update(self.means.tobytes())
        h.update(self.weights.tobytes())
        h.update(np.float64(self.sigma0_sq).tobytes())
        return h.hexdigest()[:16]


class MixturePredictor(NoisePredictor):
    """MMSE noise estimate under a MixtureImageModel prior."""

    def __init__(self, model: MixtureImageModel, schedule: DiffusionSchedule):
        self.model = model
        self.schedule = schedule
        self._log_w = np.log(model.weights)

    def predict(self, x: np.ndarray, t: int) -> np.ndarray:
        self.schedule._check_step(t)
        abar = self.schedule.alpha_bar[t]
        s_sq = abar * self.model.sigma0_sq + 1.0 - abar
        x = np.asarray(x, dtype=np.float64)
        scaled_means = np.sqrt(abar) * self.model.means           # (J, C, H, W)
        diff = x[..., None, :, :, :] - scaled_means               # (..., J, C, H, W)
        sq = np.sum(diff * diff, axis=(-3, -2, -1))               # (..., J)
        logits = self._log_w - sq / (2.0 * s_sq)
        logits -= logits.max(axis=-1, keepdims=True)
        resp = np.exp(logits)
        resp /= resp.sum(axis=-1, keepdims=True)
        per_comp = np.sqrt(1.0 - abar) * diff / s_sq
        return np.einsum("...j,...jchw->...chw", resp, per_comp)

    def content_hash(self) -> str:
        return _digest("mixture_mmse", self.model.content_hash(),
                       self.schedule.content_hash())


def default_mixture_model(shape: tuple[int, int, int] = (1, 16, 16),
                          n_components: int = 4,
                          sigma0_sq: float = 0.05,
                          contrast: float = 0.5,
                          seed: int = 1234,
                          dc_offsets: tuple[float, ...] | None = None,
                          dc_taper: float = 0.11) -> MixtureImageModel:
    """Smooth two-tone block patterns as component means.

    Each mean starts from a random coarse binary grid, is upsampled to the
    target size and lightly blurred, then mapped to 0.5 +- contrast/2 so
    clean images live around the unit interval.

    ``dc_offsets`` replicates every mean at the given global brightness
    shifts, with component weights tapered by a Gaussian of width
    ``dc_taper`` over the offset.  A model carrying its own brightness
    band treats exposure-shifted copies of its content as in
    distribution, which keeps the denoiser from steering them back to
    the unshifted band.
    """
    c, h, w = shape
    if h % 4 or w % 4:
        raise ParameterError("height and width must be multiples of 4")
    rng = np.random.default_rng(seed)
    means = np.empty((n_components, c, h, w))
    for j in range(n_components):
        coarse = rng.integers(0, 2, size=(h // 4, w // 4)).astype(np.float64)
        fine = ndi_zoom(coarse, 4, order=0)
        fine = gaussian_filter(fine, sigma=1.0)
        means[j] = 0.5 + contrast * (fine - 0.5)
    weights = np.full(n_components, 1.0 / n_components)
    if dc_offsets:
        if dc_taper <= 0:
            raise ParameterError("dc_taper must be positive")
        offsets = np.asarray(dc_offsets, dtype=np.float64)
        means = np.concatenate([means + a for a in offsets])
        weights = np.concatenate([
            weights * np.exp(-a * a / (2.0 * dc_taper * dc_taper)) for a in offsets])
        weights = weights / weights.sum()
    return MixtureImageModel(means=means, weights=weights, sigma0_sq=sigma0_sq)


def _digest(*parts) -> str:
    h = hashlib.sha256()
    for p in parts:
        h.update(repr(p).encode())
    return h.hexdigest()[:16]
