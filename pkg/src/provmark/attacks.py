"""Attack and degradation suite used to probe the verifier.

All image inputs live in [0, 1] with shape (..., C, H, W); every
transformation clips back into [0, 1].  Degradations model routine
processing (compression, noise, smoothing, exposure shifts) at three
escalating levels.  The remaining functions implement adversaries:
spoofing by averaged-pattern extraction, local patch splicing, metadata
swaps, and two white-box optimization attacks that only get
finite-difference access to the verification pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import ndimage
from scipy.fft import dctn, idctn

from .errors import ParameterError
from .inversion import compute_bias
from .predictors import NoisePredictor
from .sampling import DeflectionConfig
from .schedule import DiffusionSchedule
from .verification import PcaGaussianModel

# ITU-T T.81 luminance quantization table
_BASE_QTABLE = np.array([
    [16, 11, 10, 16, 24, 40, 51, 61],
    [12, 12, 14, 19, 26, 58, 60, 55],
    [14, 13, 16, 24, 40, 57, 69, 56],
    [14, 17, 22, 29, 51, 87, 80, 62],
    [18, 22, 37, 56, 68, 109, 103, 77],
    [24, 35, 55, 64, 81, 104, 113, 92],
    [49, 64, 78, 87, 103, 121, 120, 101],
    [72, 92, 95, 98, 112, 100, 103, 99],
], dtype=np.float64)

DEGRADATION_KINDS = ("jpeg_like", "gaussian_noise", "gaussian_blur", "brightness")

# level tables scaled to the 16x16 pipeline; noise amplitudes are gray
# levels on the 0-255 scale, blur sigmas are direct (the kernel-size
# mapping bottoms out at 0.8, far too destructive at this resolution)
_JPEG_QUALITY = {1: 45, 2: 35, 3: 25}
_NOISE_GRAY_SIGMA = {1: 2.0, 2: 8.0, 3: 20.0}
_BLUR_SIGMA = {1: 0.24, 2: 0.28, 3: 0.32}
_BRIGHTNESS_SHIFT = {1: -0.1, 2: 0.1, 3: 0.2}


def quality_to_qtable(quality: int) -> np.ndarray:
    """Scale the base table for a JPEG quality setting in 1..100."""
    if not 1 <= quality <= 100:
        raise ParameterError(f"quality must be in 1..100, got {quality}")
    scale = 5000.0 / quality if quality < 50 else 200.0 - 2.0 * quality
    table = np.floor((_BASE_QTABLE * scale + 50.0) / 100.0)
    return np.clip(table, 1.0, 255.0)


def jpeg_like(images: np.ndarray, qtable: np.ndarray) -> np.ndarray:
    """Blockwise DCT quantization in the 8-bit luminance domain.

    An all-ones table short-circuits coefficient rounding, making the
    transform chain itself the only error source (well under a gray
    level), so identity quantization behaves as an identity.
    """
    images = np.asarray(images, dtype=np.float64)
    qtable = np.asarray(qtable, dtype=np.float64)
    if qtable.shape != (8, 8) or np.any(qtable < 1):
        raise ParameterError("quantization table must be 8x8 with entries >= 1")
    h, w = images.shape[-2:]
    if h % 8 or w % 8:
        raise ParameterError(f"spatial dims must be multiples of 8, got {h}x{w}")
    identity = bool(np.all(qtable == 1.0))
    lead = images.shape[:-2]
    work = images.reshape((-1, h, w)) * 255.0 - 128.0
    blocks = work.reshape(-1, h // 8, 8, w // 8, 8).transpose(0, 1, 3, 2, 4)
    coeff = dctn(blocks, axes=(-2, -1), norm="ortho")
    if not identity:
        coeff = np.round(coeff / qtable) * qtable
    back = idctn(coeff, axes=(-2, -1), norm="ortho")
    out = back.transpose(0, 1, 3, 2, 4).reshape(-1, h, w)
    out = (out + 128.0) / 255.0
    return np.clip(out.reshape(lead + (h, w)), 0.0, 1.0)


def gaussian_noise(images: np.ndarray, sigma: float, rng: np.random.Generator) -> np.ndarray:
    images = np.asarray(images, dtype=np.float64)
    if sigma < 0:
        raise ParameterError("sigma must be >= 0")
    return np.clip(images + sigma * rng.standard_normal(images.shape), 0.0, 1.0)


def gaussian_blur(images: np.ndarray, kernel_size: int,
                  sigma: float | None = None) -> np.ndarray:
    """Separable Gaussian; sigma defaults to the conventional size mapping."""
    if kernel_size < 1 or kernel_size % 2 == 0:
        raise ParameterError(f"kernel_size must be odd and positive, got {kernel_size}")
    images = np.asarray(images, dtype=np.float64)
    if sigma is None:
        sigma = 0.3 * ((kernel_size - 1) / 2.0 - 1.0) + 0.8
    if sigma <= 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    radius = (kernel_size - 1) // 2
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    kern = np.exp(-(x * x) / (2.0 * sigma * sigma))
    kern /= kern.sum()
    out = ndimage.convolve1d(images, kern, axis=-2, mode="mirror")
    out = ndimage.convolve1d(out, kern, axis=-1, mode="mirror")
    return np.clip(out, 0.0, 1.0)


def brightness_shift(images: np.ndarray, shift: float) -> np.ndarray:
    return np.clip(np.asarray(images, dtype=np.float64) + shift, 0.0, 1.0)


def degrade(images: np.ndarray, kind: str, level: int,
            rng: np.random.Generator | None = None) -> np.ndarray:
    """Apply one named degradation at level 1 (mild) .. 3 (strong)."""
    if kind not in DEGRADATION_KINDS:
        raise ParameterError(f"unknown degradation {kind!r}, know {DEGRADATION_KINDS}")
    if level not in (1, 2, 3):
        raise ParameterError(f"level must be 1, 2 or 3, got {level}")
    if kind == "jpeg_like":
        return jpeg_like(images, quality_to_qtable(_JPEG_QUALITY[level]))
    if kind == "gaussian_noise":
        if rng is None:
            raise ParameterError("gaussian_noise needs an rng")
        return gaussian_noise(images, _NOISE_GRAY_SIGMA[level] / 255.0, rng)
    if kind == "gaussian_blur":
        return gaussian_blur(images, 5, sigma=_BLUR_SIGMA[level])
    return brightness_shift(images, _BRIGHTNESS_SHIFT[level])


def all_degradations() -> list[tuple[str, int]]:
    """The 12 (kind, level) combinations in a stable order."""
    return [(kind, level) for kind in DEGRADATION_KINDS for level in (1, 2, 3)]


# --------------------------------------------------------------------------
# spoofing and tampering

def extract_pattern(wm_pool: np.ndarray, plain_pool: np.ndarray) -> np.ndarray:
    """Mean watermarked image minus mean plain image."""
    wm = np.asarray(wm_pool, dtype=np.float64)
    plain = np.asarray(plain_pool, dtype=np.float64)
    if wm.ndim < 4 or plain.ndim < 4:
        raise ParameterError("pools must be batches of (C, H, W) images")
    return wm.mean(axis=0) - plain.mean(axis=0)


def pattern_spoof(wm_pool: np.ndarray, plain_pool: np.ndarray,
                  targets: np.ndarray, strength: float = 0.1) -> np.ndarray:
    """Add the extracted average pattern onto target images."""
    pattern = extract_pattern(wm_pool, plain_pool)
    return np.clip(np.asarray(targets, dtype=np.float64) + strength * pattern, 0.0, 1.0)


def tamper_patch(image: np.ndarray, ratio: float, rng: np.random.Generator,
                 donor: np.ndarray | None = None) -> tuple[np.ndarray, np.ndarray]:
    """Splice a random rectangle covering ~ratio of the area.

    The patch is filled from ``donor`` at the same location when given,
    otherwise with uniform noise.  Returns (tampered image, truth mask).
    """
    image = np.asarray(image, dtype=np.float64)
    if image.ndim != 3:
        raise ParameterError(f"expected one (C, H, W) image, got shape {image.shape}")
    if not 0.0 < ratio < 1.0:
        raise ParameterError(f"ratio must be in (0, 1), got {ratio}")
    c, h, w = image.shape
    ph = min(h, max(1, round(h * np.sqrt(ratio))))
    pw = min(w, max(1, round(w * np.sqrt(ratio))))
    top = int(rng.integers(0, h - ph + 1))
    left = int(rng.integers(0, w - pw + 1))
    out = image.copy()
    if donor is not None:
        donor = np.asarray(donor, dtype=np.float64)
        if donor.shape != image.shape:
            raise ParameterError("donor must match the image shape")
        out[:, top : top + ph, left : left + pw] = \
            donor[:, top : top + ph, left : left + pw]
    else:
        out[:, top : top + ph, left : left + pw] = \
            rng.uniform(size=(c, ph, pw))
    mask = np.zeros((h, w), dtype=bool)
    mask[top : top + ph, left : left + pw] = True
    return np.clip(out, 0.0, 1.0), mask


def metadata_tamper(sidecar: dict, new_timestamp: int) -> dict:
    """Sidecar copy whose generation timestamp was swapped."""
    if "timestamp" not in sidecar:
        raise ParameterError("sidecar has no timestamp field")
    out = dict(sidecar)
    out["timestamp"] = int(new_timestamp)
    return out


# --------------------------------------------------------------------------
# optimization attacks (finite-difference access only)

@dataclass
class KeyExtractionResult:
    key: np.ndarray
    loss_history: list[float] = field(default_factory=list)
    final_moments: np.ndarray | None = None


def key_extraction_attack(images: np.ndarray, timestamps: np.ndarray,
                          predictor: NoisePredictor, schedule: DiffusionSchedule,
                          deflection: DeflectionConfig,
                          rng: np.random.Generator,
                          n_iters: int = 40, step_size: float = 1e-4,
                          fd_eps: float = 1e-4, reg: float = 1e-3,
                          init_key: np.ndarray | None = None) -> KeyExtractionResult:
    """Gradient-descend a candidate key against the observed biases.

    Loss: mean over images of the bias second moment, plus reg * mean(K^2).
    Gradients use central finite differences coordinate by coordinate; the
    published step budget is deliberately honored, not improved.
    """
    images = np.asarray(images, dtype=np.float64)
    if images.ndim != 4:
        raise ParameterError("images must be (B, C, H, W)")
    timestamps = np.asarray(timestamps, dtype=np.int64)
    if timestamps.shape != (images.shape[0],):
        raise ParameterError("one timestamp per image required")
    shape = images.shape[1:]
    dim = int(np.prod(shape))
    key = (rng.standard_normal(shape) if init_key is None
           else np.array(init_key, dtype=np.float64))

    def loss_of(keys: np.ndarray) -> np.ndarray:
        # keys (..., C, H, W) -> loss (...,) averaged over the image set
        lead = keys.shape[:-3]
        total = np.zeros(lead)
        for img, ts in zip(images, timestamps):
            bias = compute_bias(np.broadcast_to(img, lead + shape), np.asarray(keys),
                                int(ts), predictor, schedule, deflection)
            total += np.asarray(bias.second_moment).reshape(lead)
        total /= len(images)
        return total + reg * np.mean(keys * keys, axis=(-3, -2, -1))

    history = [float(loss_of(key))]
    eye = np.eye(dim).reshape(dim, *shape)
    for _ in range(n_iters):
        probes = np.concatenate([key + fd_eps * eye, key - fd_eps * eye])
        vals = loss_of(probes)
        grad = ((vals[:dim] - vals[dim:]) / (2.0 * fd_eps)).reshape(shape)
        key = key - step_size * grad
        history.append(float(loss_of(key)))
    per_image = np.array([
        compute_bias(img, key, int(ts), predictor, schedule, deflection).second_moment
        for img, ts in zip(images, timestamps)])
    return KeyExtractionResult(key=key, loss_history=history, final_moments=per_image)


@dataclass
class PcaSpaceAttackResult:
    images: np.ndarray
    objective_history: list[float] = field(default_factory=list)
    linf: float = 0.0


def pca_space_attack(images: np.ndarray, candidate_key: np.ndarray,
                     timestamps: np.ndarray,
                     predictor: NoisePredictor, schedule: DiffusionSchedule,
                     deflection: DeflectionConfig,
                     pca_model: PcaGaussianModel, target_point: np.ndarray,
                     epsilon: float = 0.09, lam: float = 0.2,
                     n_iters: int = 50, step_size: float | None = None,
                     fd_eps: float = 1e-3) -> PcaSpaceAttackResult:
    """Push images toward a target point in the verifier's PCA plane.

    Objective per image: squared distance between the projected bias
    (computed under the attacker's candidate key) and ``target_point``,
    plus lam times the squared pixel change.  Projected sign-gradient
    steps stay inside the L-inf ball of radius epsilon and [0, 1].
    """
    base = np.asarray(images, dtype=np.float64)
    if base.ndim != 4:
        raise ParameterError("images must be (B, C, H, W)")
    timestamps = np.asarray(timestamps, dtype=np.int64)
    if timestamps.shape != (base.shape[0],):
        raise ParameterError("one timestamp per image required")
    if step_size is None:
        step_size = 2.5 * epsilon / n_iters
    b = base.shape[0]
    shape = base.shape[1:]
    dim = int(np.prod(shape))
    target = np.asarray(target_point, dtype=np.float64)

    def objective(batch: np.ndarray, stamps: np.ndarray) -> np.ndarray:
        bias = compute_bias(batch, np.asarray(candidate_key), stamps,
                            predictor, schedule, deflection)
        proj = pca_model.project(bias.delta)
        dist = np.sum((proj - target) ** 2, axis=-1)
        ref = np.broadcast_to(base, batch.shape[:-4] + base.shape)
        payload = np.sum((batch - ref) ** 2, axis=(-3, -2, -1))
        return dist + lam * payload

    adv = base.copy()
    history = [float(np.mean(objective(adv, timestamps)))]
    eye = np.eye(dim).reshape(dim, *shape)
    for _ in range(n_iters):
        probes = np.stack([adv + fd_eps * eye[:, None].repeat(b, 1),
                           adv - fd_eps * eye[:, None].repeat(b, 1)])
        vals = objective(probes, timestamps)          # (2, dim, b)
        grad = ((vals[0] - vals[1]) / (2.0 * fd_eps)).T.reshape(base.shape)
        adv = adv - step_size * np.sign(grad)
        adv = np.clip(adv, base - epsilon, base + epsilon)
        adv = np.clip(adv, 0.0, 1.0)
        history.append(float(np.mean(objective(adv, timestamps))))
    return PcaSpaceAttackResult(images=adv, objective_history=history,
                                linf=float(np.max(np.abs(adv - base))))
