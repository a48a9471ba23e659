"""Image artifacts on disk: tensor payload, JSON sidecar, optional preview.

A generated image is stored as a float tensor blob (the canonical data
the inverter consumes, deliberately not clipped to [0, 1]) next to a
small JSON sidecar recording who it was generated for and under which
pipeline.  An 8-bit PGM preview can be written alongside for eyeballing;
verifying from the preview is supported but lossy, since the preview is
clipped and quantized.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np
from pydantic import BaseModel, ConfigDict

from .errors import FormatError, ProvenanceError
from .sampling import DeflectionConfig
from .tensorio import load_pgm, load_tensor, save_pgm, save_tensor

SIDECAR_SUFFIX = ".json"
TENSOR_SUFFIX = ".pait"
PREVIEW_SUFFIX = ".pgm"


class DeflectionStamp(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    gamma: float
    steps: tuple[int, ...]

    @classmethod
    def from_config(cls, deflection: DeflectionConfig) -> "DeflectionStamp":
        return cls(gamma=deflection.gamma, steps=tuple(deflection.steps))


class ImageSidecar(BaseModel):
    """Provenance record written next to every generated image."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    user_id: str
    timestamp: int
    schedule_hash: str
    deflection: DeflectionStamp
    predictor_hash: str
    format_version: int = 1


def sidecar_path(image_path: str | Path) -> Path:
    return Path(image_path).with_suffix(SIDECAR_SUFFIX)


def preview_path(image_path: str | Path) -> Path:
    return Path(image_path).with_suffix(PREVIEW_SUFFIX)


def save_image(path: str | Path, image: np.ndarray, sidecar: ImageSidecar,
               preview: bool = False) -> Path:
    """Write image + sidecar (and preview if asked).  Returns tensor path."""
    path = Path(path)
    if path.suffix != TENSOR_SUFFIX:
        path = path.with_suffix(TENSOR_SUFFIX)
    save_tensor(path, np.asarray(image, dtype=np.float64))
    sidecar_path(path).write_text(sidecar.model_dump_json(indent=2) + "\n")
    if preview:
        save_pgm(preview_path(path), image)
    return path


def load_sidecar(image_path: str | Path) -> ImageSidecar:
    sc_path = sidecar_path(image_path)
    if not sc_path.exists():
        raise FormatError(f"missing sidecar {sc_path}")
    try:
        return ImageSidecar.model_validate_json(sc_path.read_text())
    except ValueError as exc:
        raise FormatError(f"{sc_path}: bad sidecar: {exc}") from None


def load_image(image_path: str | Path, from_preview: bool = False
               ) -> tuple[np.ndarray, ImageSidecar]:
    """Load an image and its sidecar.

    With ``from_preview`` the pixel data comes from the 8-bit PGM next
    to the tensor file.  That path exists for interop checks; expect
    weaker verification statistics from the quantization.
    """
    image_path = Path(image_path)
    sidecar = load_sidecar(image_path)
    if from_preview:
        pv = image_path if image_path.suffix == PREVIEW_SUFFIX else preview_path(image_path)
        if not pv.exists():
            raise FormatError(f"no preview at {pv}")
        pixels = load_pgm(pv).astype(np.float64) / 255.0
        return pixels[None, :, :], sidecar
    if image_path.suffix == PREVIEW_SUFFIX:
        image_path = image_path.with_suffix(TENSOR_SUFFIX)
    return load_tensor(image_path), sidecar


def verify_provenance(sidecar: ImageSidecar, expected: dict,
                      deflection: DeflectionConfig) -> None:
    """Refuse to verify under a pipeline the image was not generated with.

    ``expected`` carries schedule_hash / predictor_hash for the active
    configuration.  A mismatch means the bias statistics the calibration
    was fitted on do not apply, so raising beats returning a verdict
    that silently measures the wrong thing.
    """
    problems = []
    if sidecar.schedule_hash != expected["schedule_hash"]:
        problems.append(f"schedule {sidecar.schedule_hash} != {expected['schedule_hash']}")
    if sidecar.predictor_hash != expected["predictor_hash"]:
        problems.append(f"predictor {sidecar.predictor_hash} != {expected['predictor_hash']}")
    stamp = DeflectionStamp.from_config(deflection)
    if sidecar.deflection != stamp:
        problems.append(f"deflection {sidecar.deflection} != {stamp}")
    if problems:
        raise ProvenanceError("sidecar does not match active pipeline: "
                              + "; ".join(problems))
