"""Training-free provenance watermarking for deterministic diffusion.

A persistent user key deflects a few early sampling steps; exact DDIM
inversion later recovers the keyed initialization up to a small bias
whose size and shape carry the provenance signal.  The package covers
the whole loop: key management, generation, two-stage verification,
tamper localization, an attack bench, and the closed-form bias theory.
"""

from .config import RunConfig
from .errors import (CalibrationMissingError, FormatError, ParameterError,
                     ProvenanceError, ProvmarkError, UnknownUserError)
from .inversion import InitializationBias, compute_bias, run_invert
from .keys import KeyStore, Salt, UserKey, generate_key, initialize_noise, make_salt
from .localization import (IntrinsicBiasBaseline, RefineParams, build_baseline,
                           refine_mask, tamper_response)
from .sampling import DeflectionConfig, Trajectory, run_denoise
from .schedule import DiffusionSchedule, make_linear_schedule
from .theory import theory_report
from .verification import (CalibrationModels, Classification, PcaGaussianModel,
                           VanillaThreshold, VerdictReport, calibrate_vanilla,
                           fit_pca_gaussian, load_models, robust_verify,
                           save_models)
from .workflows import (Pipeline, generate_plain, generate_watermarked,
                        localize_image, run_attack_bench, run_calibration,
                        run_localization_bench, verify_image)
from .workspace import Workspace

__version__ = "0.1.0"

__all__ = [
    "RunConfig", "Pipeline", "Workspace",
    "UserKey", "Salt", "KeyStore", "generate_key", "make_salt", "initialize_noise",
    "DiffusionSchedule", "make_linear_schedule",
    "DeflectionConfig", "Trajectory", "run_denoise",
    "InitializationBias", "compute_bias", "run_invert",
    "Classification", "VanillaThreshold", "PcaGaussianModel", "VerdictReport",
    "CalibrationModels", "calibrate_vanilla", "fit_pca_gaussian",
    "robust_verify", "save_models", "load_models",
    "IntrinsicBiasBaseline", "RefineParams", "build_baseline",
    "tamper_response", "refine_mask",
    "generate_watermarked", "generate_plain", "run_calibration", "verify_image",
    "localize_image", "run_attack_bench", "run_localization_bench",
    "theory_report",
    "ProvmarkError", "ParameterError", "FormatError", "CalibrationMissingError",
    "ProvenanceError", "UnknownUserError",
]
