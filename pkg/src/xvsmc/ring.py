"""Arithmetic in Z_2^64 and the fixed-point codec layered on top of it.

Ring values are numpy ``uint64`` scalars or arrays; all arithmetic wraps
modulo 2^64 with two's-complement signed interpretation.  Real numbers are
embedded as x = y * 2^f for an integer y ("fixed point").
"""

from __future__ import annotations

import hashlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FixedPointRangeError

MODULUS = 1 << 64
RING_DTYPE = np.uint64


@dataclass(frozen=True)
class FixedPointConfig:
    """Bit allocation of the fixed-point embedding into Z_2^64.

    k: total ring width, fixed at 64.
    f: fractional bits; resolution is 2^-f.
    m: integer magnitude bits; representable range is [-2^m, 2^m).
    s: requested statistical-security bits for masked openings.  With the
       default allocation m + f + s exceeds k - 1, so probabilistic
       truncation operates at a reduced effective security of
       k - 1 - m - f bits (see ``s_eff``).
    """

    k: int = 64
    f: int = 15
    m: int = 16
    s: int = 40

    def __post_init__(self):
        if self.k != 64:
            raise ConfigError(f"only k=64 is supported, got k={self.k}")
        if self.f < 1 or self.m < 1:
            raise ConfigError("f and m must both be >= 1")
        if self.f + self.m >= self.k:
            raise ConfigError(f"f + m must be < k, got {self.f}+{self.m}")

    @property
    def scale(self) -> int:
        return 1 << self.f

    @property
    def s_eff(self) -> int:
        """Effective statistical hiding of probabilistic-truncation openings."""
        return min(self.s, self.k - 1 - self.m - self.f)

    @property
    def ltz_bits(self) -> int:
        """Bit position used as the sign bit by the comparison protocol.

        Values handed to the comparison must satisfy |x| < 2^ltz_bits; for
        such values every ring bit at position >= ltz_bits equals the sign,
        so the borrow circuit only has to span ltz_bits low bits.
        """
        return self.m + self.f + 1

    def config_hash(self) -> int:
        """32-bit digest used by the transport handshake and material files."""
        text = f"k={self.k};f={self.f};m={self.m};s={self.s}"
        return int.from_bytes(hashlib.sha256(text.encode()).digest()[:4], "little")


def as_ring(values) -> np.ndarray:
    """Coerce integers (python ints or arrays) into ring representation."""
    arr = np.asarray(values)
    if arr.dtype == RING_DTYPE:
        return arr
    if arr.dtype.kind in "iu":
        return arr.astype(RING_DTYPE)
    # python ints may be negative or >= 2^63; reduce per element
    flat = [int(v) % MODULUS for v in np.atleast_1d(arr).ravel()]
    out = np.array(flat, dtype=RING_DTYPE).reshape(np.atleast_1d(arr).shape)
    return out if arr.shape else out.reshape(())


def to_signed(values: np.ndarray) -> np.ndarray:
    """Two's-complement signed view of ring values."""
    return np.asarray(values, dtype=RING_DTYPE).astype(np.int64)


def from_signed(values: np.ndarray) -> np.ndarray:
    return np.asarray(values, dtype=np.int64).astype(RING_DTYPE)


def encode_fixed(x, cfg: FixedPointConfig) -> np.ndarray:
    """Embed real number(s) as round(x * 2^f) mod 2^64.

    Rounds half away from zero.  Raises FixedPointRangeError when any
    |x| >= 2^m.
    """
    arr = np.asarray(x, dtype=np.float64)
    limit = float(1 << cfg.m)
    if np.any(~np.isfinite(arr)) or np.any(np.abs(arr) >= limit):
        raise FixedPointRangeError(
            f"value out of fixed-point range (-2^{cfg.m}, 2^{cfg.m})"
        )
    scaled = arr * float(cfg.scale)
    rounded = np.sign(scaled) * np.floor(np.abs(scaled) + 0.5)
    return from_signed(rounded.astype(np.int64))


def decode_fixed(v, cfg: FixedPointConfig) -> np.ndarray:
    """Inverse of encode_fixed up to quantization: signed(v) / 2^f."""
    return to_signed(np.asarray(v, dtype=RING_DTYPE)).astype(np.float64) / float(cfg.scale)


def shift_truncate(v, t: int) -> np.ndarray:
    """Arithmetic right shift by t bits (round toward -infinity)."""
    if t == 0:
        return np.asarray(v, dtype=RING_DTYPE)
    return from_signed(to_signed(np.asarray(v, dtype=RING_DTYPE)) >> np.int64(t))


def ring_add(a, b) -> np.ndarray:
    return np.asarray(a, dtype=RING_DTYPE) + np.asarray(b, dtype=RING_DTYPE)


def ring_sub(a, b) -> np.ndarray:
    return np.asarray(a, dtype=RING_DTYPE) - np.asarray(b, dtype=RING_DTYPE)


def ring_mul(a, b) -> np.ndarray:
    return np.asarray(a, dtype=RING_DTYPE) * np.asarray(b, dtype=RING_DTYPE)


def ring_neg(a) -> np.ndarray:
    return np.zeros_like(np.asarray(a, dtype=RING_DTYPE)) - np.asarray(a, dtype=RING_DTYPE)


def random_ring(rng: np.random.Generator, shape=()) -> np.ndarray:
    """Uniform ring element(s)."""
    return rng.integers(0, MODULUS, size=shape, dtype=RING_DTYPE)
