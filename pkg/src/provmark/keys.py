"""User keys, timestamp salts, and the keyed initial-noise map.

The initial latent of a watermarked generation is

    x_T = sqrt(-2 ln S) * cos(2 pi Phi(K))        (elementwise)

with K the user's persistent N(0, 1) key, S a U(0, 1) salt derived from
the generation timestamp, and Phi the standard normal CDF.  Because
Phi(K) is uniform and independent of S, this is exactly the Box-Muller
transform: x_T is standard normal, indistinguishable from an ordinary
diffusion seed, yet fully reproducible from (K, timestamp).

S is clamped away from {0, 1} before the logarithm so the amplitude stays
finite; the clamp moves less than 2e-7 of probability mass.
"""

from __future__ import annotations

import hashlib
import os
import struct
import zlib
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import ndtr

from .errors import FormatError, ParameterError, UnknownUserError

SALT_CLAMP = 1e-7


def standard_normal_cdf(x: np.ndarray) -> np.ndarray:
    return ndtr(x)


@dataclass(frozen=True)
class UserKey:
    user_id: str
    tensor: np.ndarray        # N(0,1) draws, shape (C, H, W)
    created_at: int

    def __post_init__(self):
        t = np.asarray(self.tensor, dtype=np.float64)
        if t.ndim != 3:
            raise ParameterError(f"key tensor must be (C, H, W), got {t.shape}")
        t.setflags(write=False)
        object.__setattr__(self, "tensor", t)

    def fingerprint(self) -> str:
        return hashlib.sha256(self.tensor.tobytes()).hexdigest()[:16]


@dataclass(frozen=True)
class Salt:
    timestamp: int
    values: np.ndarray        # clamped U(0,1), same shape as the key

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64)
        if np.any(v < SALT_CLAMP) or np.any(v > 1.0 - SALT_CLAMP):
            raise ParameterError("salt values outside the clamped unit interval")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def generate_key(user_id: str, shape: tuple[int, int, int],
                 rng: np.random.Generator, created_at: int = 0) -> UserKey:
    return UserKey(user_id=user_id, tensor=rng.standard_normal(shape),
                   created_at=int(created_at))


def make_salt(timestamp: int, shape: tuple[int, ...]) -> Salt:
    """Deterministic salt for a generation instant.

    The timestamp seeds the draw directly, so verification can rebuild the
    salt from sidecar metadata alone.  Callers must hand out distinct
    timestamps per image.
    """
    if timestamp < 0:
        raise ParameterError(f"timestamp must be nonnegative, got {timestamp}")
    rng = np.random.default_rng(int(timestamp))
    values = rng.uniform(size=shape)
    return Salt(timestamp=int(timestamp),
                values=np.clip(values, SALT_CLAMP, 1.0 - SALT_CLAMP))


def initialize_noise(key: np.ndarray | UserKey, salt: Salt | np.ndarray) -> np.ndarray:
    """Box-Muller combination of key and salt; output is standard normal."""
    k = key.tensor if isinstance(key, UserKey) else np.asarray(key, dtype=np.float64)
    s = salt.values if isinstance(salt, Salt) else np.asarray(salt, dtype=np.float64)
    if k.shape != s.shape:
        raise ParameterError(f"key shape {k.shape} and salt shape {s.shape} differ")
    s = np.clip(s, SALT_CLAMP, 1.0 - SALT_CLAMP)
    return np.sqrt(-2.0 * np.log(s)) * np.cos(2.0 * np.pi * ndtr(k))


# --------------------------------------------------------------------------
# keystore: one binary file holding every registered key, owner-only perms

_KS_MAGIC = b"PAIK"
_KS_VERSION = 1


class KeyStore:
    """In-memory map user_id -> UserKey with a single-file binary format."""

    def __init__(self):
        self._keys: dict[str, UserKey] = {}

    def __len__(self) -> int:
        return len(self._keys)

    def __contains__(self, user_id: str) -> bool:
        return user_id in self._keys

    def user_ids(self) -> list[str]:
        return sorted(self._keys)

    def add(self, key: UserKey) -> None:
        if key.user_id in self._keys:
            raise ParameterError(f"user {key.user_id!r} already registered")
        if not key.user_id:
            raise ParameterError("user_id must be nonempty")
        self._keys[key.user_id] = key

    def get(self, user_id: str) -> UserKey:
        try:
            return self._keys[user_id]
        except KeyError:
            raise UnknownUserError(f"no key registered for user {user_id!r}") from None

    def register(self, user_id: str, shape: tuple[int, int, int],
                 rng: np.random.Generator, created_at: int = 0) -> UserKey:
        key = generate_key(user_id, shape, rng, created_at)
        self.add(key)
        return key

    def save(self, path: str | Path) -> None:
        out = bytearray(_KS_MAGIC)
        out += struct.pack("<HI", _KS_VERSION, len(self._keys))
        for user_id in self.user_ids():
            key = self._keys[user_id]
            name = user_id.encode("utf-8")
            tensor = np.ascontiguousarray(key.tensor, dtype="<f8")
            out += struct.pack("<I", len(name)) + name
            out += struct.pack("<q", key.created_at)
            out += struct.pack("<BBB", *tensor.shape)
            out += tensor.tobytes()
        out += struct.pack("<I", zlib.crc32(bytes(out)) & 0xFFFFFFFF)
        path = Path(path)
        path.write_bytes(bytes(out))
        os.chmod(path, 0o600)

    @classmethod
    def load(cls, path: str | Path) -> "KeyStore":
        raw = Path(path).read_bytes()
        if len(raw) < 14 or raw[:4] != _KS_MAGIC:
            raise FormatError(f"{path}: not a keystore file")
        (crc,) = struct.unpack("<I", raw[-4:])
        if zlib.crc32(raw[:-4]) & 0xFFFFFFFF != crc:
            raise FormatError(f"{path}: keystore checksum mismatch")
        version, count = struct.unpack("<HI", raw[4:10])
        if version != _KS_VERSION:
            raise FormatError(f"{path}: unsupported keystore version {version}")
        store = cls()
        pos = 10
        try:
            for _ in range(count):
                (name_len,) = struct.unpack_from("<I", raw, pos)
                pos += 4
                user_id = raw[pos : pos + name_len].decode("utf-8")
                pos += name_len
                (created_at,) = struct.unpack_from("<q", raw, pos)
                pos += 8
                shape = struct.unpack_from("<BBB", raw, pos)
                pos += 3
                n = int(np.prod(shape)) * 8
                tensor = np.frombuffer(raw, dtype="<f8", count=int(np.prod(shape)),
                                       offset=pos).reshape(shape).copy()
                pos += n
                store.add(UserKey(user_id=user_id, tensor=tensor, created_at=created_at))
        except (struct.error, UnicodeDecodeError, ValueError) as exc:
            raise FormatError(f"{path}: keystore record corrupt: {exc}") from None
        if pos != len(raw) - 4:
            raise FormatError(f"{path}: trailing bytes after last record")
        return store
