"""Pixel-level tamper localization from the initialization bias.

Even untouched content does not invert perfectly: the predictor sees
slightly different arguments on the way up than on the way down, leaving
a small systematic drift.  That drift is measured once, on plain
self-generated content whose true starting latents are known:

    baseline = mean_i ( invert(generate(x_T_i)) - x_T_i )

For a suspect image verified under its valid key, subtracting the
baseline from the bias field isolates the response to tampering:

    response = delta_T - baseline

Local edits concentrate energy in the response at the edited pixels.
The refinement chain turns the response into a binary mask: channel
magnitude, Gaussian smoothing, a median + c * MAD threshold, a
morphological close then open, and removal of tiny components.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import ndimage, stats

from .errors import CalibrationMissingError, FormatError, ParameterError
from .inversion import run_invert
from .predictors import NoisePredictor
from .sampling import run_denoise
from .schedule import DiffusionSchedule
from .tensorio import load_model_file, save_model_file


@dataclass(frozen=True)
class IntrinsicBiasBaseline:
    """Mean inversion drift of plain content, shape (C, H, W)."""

    field: np.ndarray
    n_samples: int
    provenance: dict

    def __post_init__(self):
        f = np.asarray(self.field, dtype=np.float64)
        if f.ndim != 3:
            raise ParameterError(f"baseline field must be (C, H, W), got {f.shape}")
        object.__setattr__(self, "field", f)


def build_baseline(predictor: NoisePredictor, schedule: DiffusionSchedule,
                   shape: tuple[int, int, int], n_samples: int,
                   rng: np.random.Generator,
                   provenance: dict | None = None) -> IntrinsicBiasBaseline:
    """Average the round-trip drift over fresh plain generations."""
    if n_samples < 1:
        raise ParameterError("n_samples must be positive")
    starts = rng.standard_normal((n_samples,) + tuple(shape))
    images = run_denoise(starts, predictor, schedule)
    recovered = run_invert(images, predictor, schedule)
    field = np.mean(recovered - starts, axis=0)
    return IntrinsicBiasBaseline(field=field, n_samples=n_samples,
                                 provenance=dict(provenance or {}))


def tamper_response(delta: np.ndarray, baseline: IntrinsicBiasBaseline) -> np.ndarray:
    """Bias field minus the intrinsic drift; same shape as delta."""
    delta = np.asarray(delta, dtype=np.float64)
    if delta.shape[-3:] != baseline.field.shape:
        raise ParameterError(
            f"bias shape {delta.shape} does not match baseline {baseline.field.shape}")
    return delta - baseline.field


@dataclass(frozen=True)
class RefineParams:
    """Knobs of the response-to-mask chain.

    ``smooth_radius`` maps to a Gaussian sigma of radius / 2; the
    threshold is median + mad_factor * MAD of the smoothed magnitude
    (raw MAD, no normal-consistency scaling); morphology uses a cross
    of the given radius; components below ``min_component`` pixels are
    dropped.
    """

    smooth_radius: float = 2.0
    mad_factor: float = 3.0
    morph_radius: int = 1
    min_component: int = 4

    def __post_init__(self):
        if self.smooth_radius < 0 or self.mad_factor <= 0:
            raise ParameterError("smooth_radius must be >= 0 and mad_factor > 0")
        if self.morph_radius < 0 or self.min_component < 0:
            raise ParameterError("morph_radius and min_component must be >= 0")


def response_magnitude(response: np.ndarray) -> np.ndarray:
    """Channel L2 magnitude, (C, H, W) -> (H, W)."""
    response = np.asarray(response, dtype=np.float64)
    if response.ndim == 2:
        return np.abs(response)
    return np.sqrt(np.mean(response * response, axis=-3))


def refine_mask(response: np.ndarray, params: RefineParams = RefineParams()) -> np.ndarray:
    """Binary (H, W) tamper mask from a response field."""
    mag = response_magnitude(response)
    if params.smooth_radius > 0:
        mag = ndimage.gaussian_filter(mag, sigma=params.smooth_radius / 2.0)
    med = np.median(mag)
    mad = np.median(np.abs(mag - med))
    mask = mag > med + params.mad_factor * mad
    if params.morph_radius > 0:
        structure = ndimage.iterate_structure(
            ndimage.generate_binary_structure(2, 1), params.morph_radius)
        mask = ndimage.binary_closing(mask, structure=structure)
        mask = ndimage.binary_opening(mask, structure=structure)
    if params.min_component > 0 and mask.any():
        labels, n = ndimage.label(mask)
        sizes = ndimage.sum_labels(mask, labels, index=np.arange(1, n + 1))
        keep = np.flatnonzero(sizes >= params.min_component) + 1
        mask = np.isin(labels, keep)
    return mask


def mask_scores(predicted: np.ndarray, truth: np.ndarray) -> dict:
    """Precision, recall, F1 and IoU of a binary mask pair."""
    p = np.asarray(predicted, dtype=bool)
    t = np.asarray(truth, dtype=bool)
    if p.shape != t.shape:
        raise ParameterError(f"mask shapes differ: {p.shape} vs {t.shape}")
    tp = np.sum(p & t)
    fp = np.sum(p & ~t)
    fn = np.sum(~p & t)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    union = tp + fp + fn
    iou = tp / union if union else 0.0
    return {"precision": float(precision), "recall": float(recall),
            "f1": float(f1), "iou": float(iou)}


def field_auc(score_field: np.ndarray, truth: np.ndarray) -> float:
    """Rank AUC of a per-pixel score against a binary truth mask.

    Computed as U / (n1 * n0) from the Mann-Whitney statistic, which is
    the probability that a random tampered pixel outscores a random
    clean one (ties split evenly).
    """
    score = np.asarray(score_field, dtype=np.float64).ravel()
    t = np.asarray(truth, dtype=bool).ravel()
    if score.shape != t.shape:
        raise ParameterError("score and truth shapes differ")
    n1, n0 = int(t.sum()), int((~t).sum())
    if n1 == 0 or n0 == 0:
        raise ParameterError("AUC needs both tampered and clean pixels")
    u = stats.mannwhitneyu(score[t], score[~t], alternative="two-sided").statistic
    return float(u / (n1 * n0))


# --------------------------------------------------------------------------
# persistence

def save_baseline(path: str | Path, baseline: IntrinsicBiasBaseline) -> None:
    save_model_file(path,
                    {"kind": "intrinsic_baseline",
                     "n_samples": baseline.n_samples,
                     "provenance": dict(baseline.provenance)},
                    {"field": baseline.field})


def load_baseline(path: str | Path) -> IntrinsicBiasBaseline:
    path = Path(path)
    if not path.exists():
        raise CalibrationMissingError(f"no intrinsic baseline at {path}")
    header, tensors = load_model_file(path)
    if header.get("kind") != "intrinsic_baseline":
        raise FormatError(f"{path}: not an intrinsic baseline container")
    return IntrinsicBiasBaseline(field=tensors["field"],
                                 n_samples=int(header.get("n_samples", 0)),
                                 provenance=header.get("provenance", {}))
