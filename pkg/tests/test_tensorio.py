import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from provmark.errors import FormatError
from provmark.tensorio import load_pgm, load_tensor, save_pgm, save_tensor


def test_round_trip_f64(tmp_path):
    rng = np.random.default_rng(0)
    arr = rng.standard_normal((2, 3, 4))
    path = tmp_path / "t.pait"
    save_tensor(path, arr)
    back = load_tensor(path)
    assert back.dtype == np.float64
    assert np.array_equal(back, arr)


def test_round_trip_f32(tmp_path):
    arr = np.arange(12, dtype=np.float32).reshape(3, 4)
    path = tmp_path / "t.pait"
    save_tensor(path, arr)
    back = load_tensor(path)
    assert back.dtype == np.float32
    assert np.array_equal(back, arr)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.integers(min_value=1, max_value=5), min_size=1, max_size=4),
       st.integers(min_value=0, max_value=2**31))
def test_round_trip_any_shape(tmp_path_factory, shape, seed):
    rng = np.random.default_rng(seed)
    arr = rng.standard_normal(tuple(shape))
    path = tmp_path_factory.mktemp("h") / "t.pait"
    save_tensor(path, arr)
    assert np.array_equal(load_tensor(path), arr)


def test_corruption_detected(tmp_path):
    path = tmp_path / "t.pait"
    save_tensor(path, np.ones((4, 4)))
    raw = bytearray(path.read_bytes())
    raw[20] ^= 0xFF
    path.write_bytes(bytes(raw))
    with pytest.raises(FormatError, match="checksum"):
        load_tensor(path)


def test_truncation_detected(tmp_path):
    path = tmp_path / "t.pait"
    save_tensor(path, np.ones((4, 4)))
    path.write_bytes(path.read_bytes()[:-9])
    with pytest.raises(FormatError):
        load_tensor(path)


def test_bad_magic_rejected(tmp_path):
    path = tmp_path / "bad.bin"
    path.write_bytes(b"NOPE" + b"\x00" * 32)
    with pytest.raises(FormatError, match="magic"):
        load_tensor(path)


def test_pgm_round_trip_uint8(tmp_path):
    img = np.arange(256, dtype=np.uint8).reshape(16, 16)
    path = tmp_path / "i.pgm"
    save_pgm(path, img)
    assert np.array_equal(load_pgm(path), img)


def test_pgm_float_clipping(tmp_path):
    img = np.array([[-0.5, 0.0], [0.5, 1.7]])
    path = tmp_path / "i.pgm"
    save_pgm(path, img)
    assert np.array_equal(load_pgm(path), [[0, 0], [128, 255]])


def test_pgm_drops_unit_channel(tmp_path):
    img = np.zeros((1, 8, 8))
    path = tmp_path / "i.pgm"
    save_pgm(path, img)
    assert load_pgm(path).shape == (8, 8)
