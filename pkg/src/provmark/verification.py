"""Two-stage ownership verification from initialization biases.

Stage one thresholds the scalar second moment.  Invalid hypotheses
(wrong key, or content that was never watermarked) produce large
moments; a Gaussian fit to a pool of such moments gives the acceptance
threshold

    tau = mean + std * Phi^{-1}(alpha)

so that an invalid sample is accepted with probability alpha.  Samples
at or above tau are rejected outright.

Stage two looks at the shape of the bias rather than its size.  Benign
bias fields, flattened and centered by their mean, are projected onto
their top principal directions; a Gaussian fit in that small space turns
each new bias into a squared Mahalanobis distance, compared against the
chi-square quantile with k degrees of freedom.  Two fits with different
benign pools run side by side:

    detection   pool of untouched watermarked samples; any distortion
                shows up here.
    ownership   pool that also contains degraded copies; only
                distortions outside ordinary wear land above it.

The verdict combines the stages:

    vanilla fail                      -> invalid_or_nonwatermarked
    ownership distance over its tau   -> spoofed_rejected
    detection distance over its tau   -> removal_attacked_owned
    both under                        -> benign

Ownership is affirmed for the last two outcomes only.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from pathlib import Path

import numpy as np
from scipy import stats
from scipy.special import ndtri

from .errors import CalibrationMissingError, FormatError, ParameterError
from .tensorio import load_model_file, save_model_file


class Classification(str, Enum):
    BENIGN = "benign"
    SPOOFED_REJECTED = "spoofed_rejected"
    REMOVAL_ATTACKED_OWNED = "removal_attacked_owned"
    INVALID_OR_NONWATERMARKED = "invalid_or_nonwatermarked"


#: outcomes that affirm the claimed ownership
OWNED_CLASSIFICATIONS = frozenset(
    {Classification.BENIGN, Classification.REMOVAL_ATTACKED_OWNED})


@dataclass(frozen=True)
class VanillaThreshold:
    tau: float
    alpha: float
    fit_mean: float
    fit_std: float
    n_fit: int

    def accepts(self, second_moment: float | np.ndarray):
        """Strictly below tau accepts; the boundary rejects."""
        return np.asarray(second_moment) < self.tau


def calibrate_vanilla(invalid_bias_moments: np.ndarray, alpha: float) -> VanillaThreshold:
    moments = np.asarray(invalid_bias_moments, dtype=np.float64).ravel()
    if moments.size < 2:
        raise ParameterError("need at least two moments to fit a Gaussian")
    if not 0.0 < alpha < 0.5:
        raise ParameterError(f"alpha must lie in (0, 0.5), got {alpha}")
    mean = float(moments.mean())
    std = float(moments.std(ddof=1))
    if std == 0.0:
        raise ParameterError("invalid moments are all identical, cannot calibrate")
    tau = mean + std * float(ndtri(alpha))
    return VanillaThreshold(tau=tau, alpha=alpha, fit_mean=mean, fit_std=std,
                            n_fit=int(moments.size))


def chi_square_quantile(alpha: float, k: int) -> float:
    """Upper 1 - alpha quantile of chi-square with k degrees of freedom."""
    if not 0.0 < alpha < 1.0:
        raise ParameterError(f"alpha must lie in (0, 1), got {alpha}")
    return float(stats.chi2.ppf(1.0 - alpha, df=k))


@dataclass(frozen=True)
class PcaGaussianModel:
    """Gaussian fit of benign biases in their top-k principal subspace.

    ``mean`` centers flattened bias fields (no per-element rescaling);
    ``components`` holds the k orthonormal directions; the projected
    Gaussian is (proj_mean, proj_cov) with a small ridge already folded
    into the covariance.  ``tau_sq`` is the chi-square acceptance bound
    for squared Mahalanobis distances; ``tau_distance`` is its square
    root for comparison against plain distances.
    """

    mean: np.ndarray
    components: np.ndarray
    proj_mean: np.ndarray
    proj_cov: np.ndarray
    alpha: float
    tau_sq: float
    n_fit: int

    @property
    def k(self) -> int:
        return self.components.shape[0]

    @property
    def tau_distance(self) -> float:
        return float(np.sqrt(self.tau_sq))

    def project(self, delta: np.ndarray) -> np.ndarray:
        flat = np.asarray(delta, dtype=np.float64).reshape(
            np.shape(delta)[: -3] + (-1,)) if np.ndim(delta) >= 3 else np.asarray(delta)
        return (flat - self.mean) @ self.components.T

    def mahalanobis_sq(self, delta: np.ndarray):
        p = self.project(delta) - self.proj_mean
        sol = np.linalg.solve(self.proj_cov, p[..., None])[..., 0]
        d2 = np.sum(p * sol, axis=-1)
        return float(d2) if d2.ndim == 0 else d2


def fit_pca_gaussian(deltas: np.ndarray, k: int = 2, alpha: float = 0.05,
                     ridge_scale: float = 1e-6) -> PcaGaussianModel:
    """Fit the benign model from a stack of bias fields.

    ``deltas`` is (n, ...) and is flattened per sample.  The pool is
    split in half: the first half supplies the center and the principal
    directions, the second half the projected Gaussian statistics.
    Estimating variances along directions chosen on the same samples
    overstates them (the directions chase those very samples), which
    deflates holdout distances; with the halves separated, holdout D^2
    follows its nominal chi-square law for any pool spectrum.  The
    projected covariance gets ridge_scale * trace / k added to its
    diagonal so near-degenerate pools stay invertible.
    """
    deltas = np.asarray(deltas, dtype=np.float64)
    n = deltas.shape[0]
    flat = deltas.reshape(n, -1)
    if n < max(2 * k + 2, 6):
        raise ParameterError(f"need at least {max(2 * k + 2, 6)} samples to fit, got {n}")
    if k < 1 or k > min(n // 2, flat.shape[1]):
        raise ParameterError(f"k = {k} impossible for pool of shape {flat.shape}")
    half = n // 2
    mean = flat[:half].mean(axis=0)
    _, _, vt = np.linalg.svd(flat[:half] - mean, full_matrices=False)
    components = vt[:k]
    proj = (flat[half:] - mean) @ components.T
    proj_mean = proj.mean(axis=0)
    proj_cov = np.cov(proj, rowvar=False, ddof=1).reshape(k, k)
    proj_cov = proj_cov + np.eye(k) * ridge_scale * np.trace(proj_cov) / k
    return PcaGaussianModel(mean=mean, components=components, proj_mean=proj_mean,
                            proj_cov=proj_cov, alpha=alpha,
                            tau_sq=chi_square_quantile(alpha, k), n_fit=n)


def ks_against_chi_square(d2_values: np.ndarray, k: int) -> tuple[float, float]:
    """Kolmogorov-Smirnov statistic and p-value of D^2 against chi2_k."""
    res = stats.kstest(np.asarray(d2_values, dtype=np.float64), stats.chi2(df=k).cdf)
    return float(res.statistic), float(res.pvalue)


@dataclass(frozen=True)
class VerdictReport:
    """Everything the two verification stages measured for one sample."""

    second_moment: float
    tau_vanilla: float
    vanilla_pass: bool
    d2_detection: float
    tau_sq_detection: float
    d2_ownership: float
    tau_sq_ownership: float
    classification: Classification

    @property
    def ownership_affirmed(self) -> bool:
        return self.classification in OWNED_CLASSIFICATIONS

    @property
    def attack_flagged(self) -> bool:
        return self.classification is not Classification.BENIGN

    def as_dict(self) -> dict:
        return {
            "second_moment": self.second_moment,
            "tau_vanilla": self.tau_vanilla,
            "vanilla_pass": self.vanilla_pass,
            "d2_detection": self.d2_detection,
            "tau_sq_detection": self.tau_sq_detection,
            "distance_detection": float(np.sqrt(max(self.d2_detection, 0.0))),
            "d2_ownership": self.d2_ownership,
            "tau_sq_ownership": self.tau_sq_ownership,
            "distance_ownership": float(np.sqrt(max(self.d2_ownership, 0.0))),
            "classification": self.classification.value,
            "ownership_affirmed": self.ownership_affirmed,
            "attack_flagged": self.attack_flagged,
        }


def robust_verify(delta: np.ndarray, vanilla: VanillaThreshold,
                  detection: PcaGaussianModel,
                  ownership: PcaGaussianModel) -> VerdictReport:
    """Run both stages on one bias field and apply the decision table."""
    delta = np.asarray(delta, dtype=np.float64)
    sm = float(np.mean(delta * delta))
    vanilla_pass = bool(vanilla.accepts(sm))
    d2_det = float(detection.mahalanobis_sq(delta))
    d2_own = float(ownership.mahalanobis_sq(delta))
    if not vanilla_pass:
        cls = Classification.INVALID_OR_NONWATERMARKED
    elif d2_own > ownership.tau_sq:
        cls = Classification.SPOOFED_REJECTED
    elif d2_det > detection.tau_sq:
        cls = Classification.REMOVAL_ATTACKED_OWNED
    else:
        cls = Classification.BENIGN
    return VerdictReport(second_moment=sm, tau_vanilla=vanilla.tau,
                         vanilla_pass=vanilla_pass,
                         d2_detection=d2_det, tau_sq_detection=detection.tau_sq,
                         d2_ownership=d2_own, tau_sq_ownership=ownership.tau_sq,
                         classification=cls)


# --------------------------------------------------------------------------
# persistence: one model container holds both fits and the scalar threshold

@dataclass(frozen=True)
class CalibrationModels:
    vanilla: VanillaThreshold
    detection: PcaGaussianModel
    ownership: PcaGaussianModel
    provenance: dict


def save_models(path: str | Path, models: CalibrationModels) -> None:
    header = {
        "kind": "verification_models",
        "vanilla": {
            "tau": models.vanilla.tau,
            "alpha": models.vanilla.alpha,
            "fit_mean": models.vanilla.fit_mean,
            "fit_std": models.vanilla.fit_std,
            "n_fit": models.vanilla.n_fit,
        },
        "detection": _pca_header(models.detection),
        "ownership": _pca_header(models.ownership),
        "provenance": dict(models.provenance),
    }
    tensors = {}
    for tag, model in (("det", models.detection), ("own", models.ownership)):
        tensors[f"{tag}_mean"] = model.mean
        tensors[f"{tag}_components"] = model.components
        tensors[f"{tag}_proj_mean"] = model.proj_mean
        tensors[f"{tag}_proj_cov"] = model.proj_cov
    save_model_file(path, header, tensors)


def load_models(path: str | Path) -> CalibrationModels:
    path = Path(path)
    if not path.exists():
        raise CalibrationMissingError(f"no calibrated models at {path}")
    header, tensors = load_model_file(path)
    if header.get("kind") != "verification_models":
        raise FormatError(f"{path}: not a verification model container")
    try:
        v = header["vanilla"]
        vanilla = VanillaThreshold(tau=v["tau"], alpha=v["alpha"],
                                   fit_mean=v["fit_mean"], fit_std=v["fit_std"],
                                   n_fit=v["n_fit"])
        detection = _pca_from(header["detection"], tensors, "det")
        ownership = _pca_from(header["ownership"], tensors, "own")
    except KeyError as exc:
        raise FormatError(f"{path}: model container missing field {exc}") from None
    return CalibrationModels(vanilla=vanilla, detection=detection,
                             ownership=ownership,
                             provenance=header.get("provenance", {}))


def _pca_header(model: PcaGaussianModel) -> dict:
    return {"alpha": model.alpha, "tau_sq": model.tau_sq, "n_fit": model.n_fit}


def _pca_from(head: dict, tensors: dict, tag: str) -> PcaGaussianModel:
    return PcaGaussianModel(mean=tensors[f"{tag}_mean"],
                            components=tensors[f"{tag}_components"],
                            proj_mean=tensors[f"{tag}_proj_mean"],
                            proj_cov=tensors[f"{tag}_proj_cov"],
                            alpha=head["alpha"], tau_sq=head["tau_sq"],
                            n_fit=head["n_fit"])
