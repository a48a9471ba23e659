"""Binary tensor and model containers plus PGM helpers.

Tensor container layout (little endian throughout):

    offset  size  field
    0       4     magic b"PAIT"
    4       2     format version (currently 1)
    6       1     dtype tag: 0 = float32, 1 = float64
    7       1     ndim (1..8)
    8       4*n   dims, u32 each
    ...           payload, C order
    end     4     CRC32 over all preceding bytes

The model container ("PAIM") bundles a JSON header with named tensor
blobs, each an embedded tensor container, again CRC-terminated.  The
trailing checksums make truncation and bit rot detectable without a
separate manifest.  PGM (P5, maxval 255) is used for human-viewable
previews and binary masks; it round-trips exactly for uint8 data.
"""

from __future__ import annotations

import json
import struct
import zlib
from pathlib import Path

import numpy as np

from .errors import FormatError

MAGIC = b"PAIT"
MODEL_MAGIC = b"PAIM"
VERSION = 1
_DTYPE_TAGS = {np.dtype("<f4"): 0, np.dtype("<f8"): 1}
_TAG_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_MAX_NDIM = 8


def encode_tensor(array: np.ndarray) -> bytes:
    array = np.ascontiguousarray(array)
    if array.dtype not in (np.float32, np.float64):
        array = array.astype(np.float64)
    dtype = array.dtype.newbyteorder("<")
    tag = _DTYPE_TAGS[np.dtype(dtype)]
    if not 1 <= array.ndim <= _MAX_NDIM:
        raise FormatError(f"tensor rank {array.ndim} outside 1..{_MAX_NDIM}")
    head = MAGIC + struct.pack("<HBB", VERSION, tag, array.ndim)
    head += struct.pack(f"<{array.ndim}I", *array.shape)
    body = array.astype(dtype, copy=False).tobytes()
    crc = zlib.crc32(head + body) & 0xFFFFFFFF
    return head + body + struct.pack("<I", crc)


def decode_tensor(raw: bytes, origin: str = "<memory>") -> np.ndarray:
    if len(raw) < 12 or raw[:4] != MAGIC:
        raise FormatError(f"{origin}: not a tensor container (bad magic)")
    (stored_crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(raw[:-4]) & 0xFFFFFFFF != stored_crc:
        raise FormatError(f"{origin}: checksum mismatch, file corrupt or truncated")
    version, tag, ndim = struct.unpack("<HBB", raw[4:8])
    if version != VERSION:
        raise FormatError(f"{origin}: unsupported container version {version}")
    if tag not in _TAG_DTYPES:
        raise FormatError(f"{origin}: unknown dtype tag {tag}")
    if not 1 <= ndim <= _MAX_NDIM:
        raise FormatError(f"{origin}: bad rank {ndim}")
    dims_end = 8 + 4 * ndim
    if len(raw) < dims_end + 4:
        raise FormatError(f"{origin}: header truncated")
    shape = struct.unpack(f"<{ndim}I", raw[8:dims_end])
    dtype = _TAG_DTYPES[tag]
    expected = int(np.prod(shape)) * dtype.itemsize
    payload = raw[dims_end:-4]
    if len(payload) != expected:
        raise FormatError(
            f"{origin}: payload is {len(payload)} bytes, shape {shape} needs {expected}"
        )
    return np.frombuffer(payload, dtype=dtype).reshape(shape).copy()


def save_tensor(path: str | Path, array: np.ndarray) -> None:
    Path(path).write_bytes(encode_tensor(array))


def load_tensor(path: str | Path) -> np.ndarray:
    return decode_tensor(Path(path).read_bytes(), origin=str(path))


def save_model_file(path: str | Path, header: dict, tensors: dict[str, np.ndarray]) -> None:
    """Write a JSON header plus named tensor blobs as one checksummed file."""
    header = dict(header)
    header["tensor_names"] = sorted(tensors)
    head_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    out = bytearray(MODEL_MAGIC)
    out += struct.pack("<HI", VERSION, len(head_bytes))
    out += head_bytes
    for name in header["tensor_names"]:
        blob = encode_tensor(tensors[name])
        out += struct.pack("<I", len(blob))
        out += blob
    out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
    Path(path).write_bytes(bytes(out))


def load_model_file(path: str | Path) -> tuple[dict, dict[str, np.ndarray]]:
    raw = Path(path).read_bytes()
    if len(raw) < 14 or raw[:4] != MODEL_MAGIC:
        raise FormatError(f"{path}: not a model container (bad magic)")
    (crc,) = struct.unpack("<I", raw[-4:])
    if zlib.crc32(raw[:-4]) & 0xFFFFFFFF != crc:
        raise FormatError(f"{path}: model checksum mismatch")
    version, head_len = struct.unpack("<HI", raw[4:10])
    if version != VERSION:
        raise FormatError(f"{path}: unsupported model version {version}")
    try:
        header = json.loads(raw[10 : 10 + head_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise FormatError(f"{path}: model header unreadable: {exc}") from None
    tensors = {}
    pos = 10 + head_len
    for name in header.get("tensor_names", []):
        if pos + 4 > len(raw) - 4:
            raise FormatError(f"{path}: tensor blob {name!r} missing")
        (blob_len,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        tensors[name] = decode_tensor(raw[pos : pos + blob_len], origin=f"{path}:{name}")
        pos += blob_len
    if pos != len(raw) - 4:
        raise FormatError(f"{path}: trailing bytes in model container")
    return header, tensors


def save_pgm(path: str | Path, image: np.ndarray) -> None:
    """Write a 2-D array as binary PGM.  Float input is clipped to [0, 1]."""
    if image.ndim == 3 and image.shape[0] == 1:
        image = image[0]
    if image.ndim != 2:
        raise FormatError(f"PGM wants a 2-D array, got shape {image.shape}")
    if np.issubdtype(image.dtype, np.floating):
        image = np.round(np.clip(image, 0.0, 1.0) * 255.0)
    data = image.astype(np.uint8)
    h, w = data.shape
    Path(path).write_bytes(f"P5 {w} {h} 255\n".encode() + data.tobytes())


def load_pgm(path: str | Path) -> np.ndarray:
    raw = Path(path).read_bytes()
    fields, pos = [], 0
    while len(fields) < 4:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if raw[pos : pos + 1] == b"#":  # comment line
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and not raw[pos : pos + 1].isspace():
            pos += 1
        fields.append(raw[start:pos])
    pos += 1  # single whitespace after maxval
    if fields[0] != b"P5":
        raise FormatError(f"{path}: not a binary PGM")
    w, h, maxval = int(fields[1]), int(fields[2]), int(fields[3])
    if maxval != 255:
        raise FormatError(f"{path}: only maxval 255 supported, got {maxval}")
    data = raw[pos : pos + w * h]
    if len(data) != w * h:
        raise FormatError(f"{path}: pixel payload truncated")
    return np.frombuffer(data, dtype=np.uint8).reshape(h, w).copy()
