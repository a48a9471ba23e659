import numpy as np
import pytest

from provmark.artifacts import (DeflectionStamp, ImageSidecar, load_image,
                                load_sidecar, preview_path, save_image,
                                sidecar_path, verify_provenance)
from provmark.errors import FormatError, ProvenanceError
from provmark.sampling import DeflectionConfig
from provmark.schedule import make_linear_schedule


def _sidecar(**overrides):
    fields = dict(user_id="alice", timestamp=1234,
                  schedule_hash="s" * 16,
                  deflection=DeflectionStamp(gamma=0.1, steps=(4, 5, 6)),
                  predictor_hash="p" * 16)
    fields.update(overrides)
    return ImageSidecar(**fields)


def test_save_load_round_trip(tmp_path):
    rng = np.random.default_rng(0)
    image = rng.standard_normal((1, 8, 8))     # canonical pixels, unclipped
    path = save_image(tmp_path / "img", image, _sidecar())
    assert path.suffix == ".pait"
    back, sidecar = load_image(path)
    assert np.array_equal(back, image)
    assert sidecar.user_id == "alice" and sidecar.timestamp == 1234
    assert sidecar_path(path).exists()
    assert not preview_path(path).exists()


def test_preview_written_and_loadable(tmp_path):
    image = np.linspace(0, 1, 64).reshape(1, 8, 8)
    path = save_image(tmp_path / "img", image, _sidecar(), preview=True)
    quantized, sidecar = load_image(path, from_preview=True)
    assert quantized.shape == (1, 8, 8)
    assert np.abs(quantized - image).max() <= 0.5 / 255.0 + 1e-12
    assert sidecar.timestamp == 1234


def test_missing_preview_raises(tmp_path):
    path = save_image(tmp_path / "img", np.zeros((1, 8, 8)), _sidecar())
    with pytest.raises(FormatError, match="preview"):
        load_image(path, from_preview=True)


def test_missing_or_corrupt_sidecar(tmp_path):
    path = save_image(tmp_path / "img", np.zeros((1, 8, 8)), _sidecar())
    sidecar_path(path).unlink()
    with pytest.raises(FormatError, match="sidecar"):
        load_sidecar(path)
    sidecar_path(path).write_text("{bad")
    with pytest.raises(FormatError, match="sidecar"):
        load_image(path)


def test_sidecar_rejects_unknown_fields(tmp_path):
    path = save_image(tmp_path / "img", np.zeros((1, 8, 8)), _sidecar())
    raw = sidecar_path(path).read_text().rstrip()[:-1] + ', "extra": 1}'
    sidecar_path(path).write_text(raw)
    with pytest.raises(FormatError):
        load_sidecar(path)


def test_verify_provenance_accepts_match():
    schedule = make_linear_schedule(6, 1e-4, 0.05)
    deflection = DeflectionConfig.first_steps(schedule, 3, gamma=0.1)
    sidecar = _sidecar(deflection=DeflectionStamp.from_config(deflection))
    verify_provenance(sidecar, {"schedule_hash": "s" * 16,
                                "predictor_hash": "p" * 16}, deflection)


@pytest.mark.parametrize("overrides", [
    {"schedule_hash": "x" * 16},
    {"predictor_hash": "x" * 16},
    {"deflection": DeflectionStamp(gamma=0.2, steps=(4, 5, 6))},
    {"deflection": DeflectionStamp(gamma=0.1, steps=(5, 6))},
])
def test_verify_provenance_rejects_mismatch(overrides):
    schedule = make_linear_schedule(6, 1e-4, 0.05)
    deflection = DeflectionConfig.first_steps(schedule, 3, gamma=0.1)
    good = {"deflection": DeflectionStamp.from_config(deflection)}
    good.update(overrides)
    with pytest.raises(ProvenanceError):
        verify_provenance(_sidecar(**good),
                          {"schedule_hash": "s" * 16, "predictor_hash": "p" * 16},
                          deflection)
