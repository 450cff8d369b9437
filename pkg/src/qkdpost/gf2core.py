"""Bit-exact GF(2) primitives.

Bit order is LSB-first everywhere: bit 0 of a :class:`BitString` is the first
bit transmitted or processed, and bit ``i`` is stored at ``1 << i`` of the
backing integer. Toeplitz matrices use the entry convention

    entry(i, j) = diagonal_bits[i - j + cols - 1]
"""

from __future__ import annotations

import enum
import functools
import struct
from dataclasses import dataclass
from typing import Iterable, Sequence

import numpy as np
from scipy.signal import fftconvolve

__all__ = [
    "BitString",
    "LfsrSpec",
    "ToeplitzSource",
    "ToeplitzSpec",
    "is_irreducible",
    "lfsr_stream",
    "polynomial_order",
    "repair_connection_poly",
    "toeplitz_from_lfsr",
    "toeplitz_matrix",
    "toeplitz_multiply",
    "xor_otp",
]

_LEN = struct.Struct("<Q")


@dataclass(frozen=True)
class BitString:
    """Immutable bit sequence packed into a Python integer."""

    value: int
    length: int

    def __post_init__(self):
        if self.length < 0:
            raise ValueError("length must be non-negative")
        if self.value < 0 or self.value >> self.length:
            raise ValueError("value has bits beyond length")

    # -- construction -----------------------------------------------------
    @classmethod
    def zeros(cls, length: int) -> "BitString":
        return cls(0, length)

    @classmethod
    def ones(cls, length: int) -> "BitString":
        return cls((1 << length) - 1, length)

    @classmethod
    def from_bits(cls, bits: Iterable[int]) -> "BitString":
        return cls.from_array(np.fromiter((int(b) for b in bits), dtype=np.uint8))

    @classmethod
    def from_str(cls, text: str) -> "BitString":
        """Parse ``"1011"``; the leftmost character is bit 0."""
        text = text.strip()
        if any(c not in "01" for c in text):
            raise ValueError(f"not a bit string: {text!r}")
        return cls(int(text[::-1], 2) if text else 0, len(text))

    @classmethod
    def from_array(cls, arr: np.ndarray | Sequence[int]) -> "BitString":
        arr = np.asarray(arr, dtype=np.uint8)
        if arr.ndim != 1:
            raise ValueError("expected a 1-D bit array")
        if arr.size and arr.max() > 1:
            raise ValueError("bit array must contain only 0/1")
        packed = np.packbits(arr, bitorder="little").tobytes()
        return cls(int.from_bytes(packed, "little"), int(arr.size))

    @classmethod
    def random(cls, length: int, rng: np.random.Generator) -> "BitString":
        return cls.from_array(rng.integers(0, 2, size=length, dtype=np.uint8))

    # -- conversion -------------------------------------------------------
    def to_array(self) -> np.ndarray:
        nbytes = (self.length + 7) // 8
        raw = np.frombuffer(self.value.to_bytes(nbytes, "little"), dtype=np.uint8)
        return np.unpackbits(raw, bitorder="little", count=self.length)

    def to_bytes(self) -> bytes:
        """Wire form: 8-byte little-endian bit count, then packed bytes LSB-first."""
        nbytes = (self.length + 7) // 8
        return _LEN.pack(self.length) + self.value.to_bytes(nbytes, "little")

    @classmethod
    def from_bytes(cls, data: bytes) -> "BitString":
        bs, used = cls.read_from(data, 0)
        if used != len(data):
            raise ValueError("trailing bytes after BitString")
        return bs

    @classmethod
    def read_from(cls, data: bytes, offset: int) -> tuple["BitString", int]:
        """Decode one serialized BitString at ``offset``; return it and the new offset."""
        if len(data) - offset < _LEN.size:
            raise ValueError("truncated BitString header")
        (length,) = _LEN.unpack_from(data, offset)
        offset += _LEN.size
        nbytes = (length + 7) // 8
        if len(data) - offset < nbytes:
            raise ValueError("truncated BitString body")
        value = int.from_bytes(data[offset : offset + nbytes], "little")
        if value >> length:
            raise ValueError("padding bits must be zero")
        return cls(value, length), offset + nbytes

    # -- sequence protocol --------------------------------------------------
    def __len__(self) -> int:
        return self.length

    def __iter__(self):
        v = self.value
        for _ in range(self.length):
            yield v & 1
            v >>= 1

    def __getitem__(self, idx):
        if isinstance(idx, slice):
            start, stop, step = idx.indices(self.length)
            if step != 1:
                return BitString.from_array(self.to_array()[idx])
            if stop <= start:
                return BitString(0, 0)
            width = stop - start
            return BitString((self.value >> start) & ((1 << width) - 1), width)
        if idx < 0:
            idx += self.length
        if not 0 <= idx < self.length:
            raise IndexError("bit index out of range")
        return (self.value >> idx) & 1

    def __add__(self, other: "BitString") -> "BitString":
        """Concatenation: ``self`` first, then ``other``."""
        if not isinstance(other, BitString):
            return NotImplemented
        return BitString(self.value | (other.value << self.length), self.length + other.length)

    def __xor__(self, other: "BitString") -> "BitString":
        if not isinstance(other, BitString):
            return NotImplemented
        if other.length != self.length:
            raise ValueError(f"length mismatch: {self.length} vs {other.length}")
        return BitString(self.value ^ other.value, self.length)

    def __str__(self) -> str:
        if not self.length:
            return ""
        return format(self.value, f"0{self.length}b")[::-1]

    def __repr__(self) -> str:
        if self.length <= 64:
            return f"BitString('{self}')"
        return f"BitString(<{self.length} bits>)"

    def weight(self) -> int:
        return self.value.bit_count()

    def parity(self) -> int:
        return self.value.bit_count() & 1

    def flip(self, idx: int) -> "BitString":
        if not 0 <= idx < self.length:
            raise IndexError("bit index out of range")
        return BitString(self.value ^ (1 << idx), self.length)

    def reversed(self) -> "BitString":
        return BitString.from_array(self.to_array()[::-1])


def xor_otp(message: BitString, pad: BitString) -> BitString:
    """One-time-pad encryption (and decryption): bitwise XOR of equal-length strings."""
    if message.length != pad.length:
        raise ValueError(f"pad length {pad.length} does not match message length {message.length}")
    return message ^ pad


# ---------------------------------------------------------------------------
# Polynomials over GF(2), stored as ints (bit i = coefficient of x^i).


def _pmod(a: int, m: int) -> int:
    dm = m.bit_length() - 1
    while a.bit_length() - 1 >= dm:
        a ^= m << (a.bit_length() - 1 - dm)
    return a


def _pmulmod(a: int, b: int, m: int) -> int:
    r = 0
    while b:
        if b & 1:
            r ^= a
        b >>= 1
        a <<= 1
        if a >> (m.bit_length() - 1):
            a ^= m
    return r


def _pgcd(a: int, b: int) -> int:
    while b:
        a, b = b, _pmod(a, b)
    return a


def is_irreducible(poly: int) -> bool:
    """Ben-Or irreducibility test for a GF(2) polynomial given as an int."""
    k = poly.bit_length() - 1
    if k < 1:
        return False
    if k == 1:
        return True
    if not poly & 1:
        return False
    x = 0b10
    power = x
    for _ in range(k // 2):
        power = _pmulmod(power, power, poly)
        if _pgcd(poly, power ^ x) != 1:
            return False
    return True


def polynomial_order(poly: int) -> int:
    """Smallest e >= 1 with x^e = 1 mod poly (poly must have a nonzero constant term)."""
    if not poly & 1:
        raise ValueError("polynomial must have constant term 1")
    k = poly.bit_length() - 1
    acc = _pmod(0b10, poly)
    for e in range(1, 1 << k):
        if acc == 1:
            return e
        acc = _pmulmod(acc, 0b10, poly)
    raise ArithmeticError("order not found")  # unreachable for constant term 1


def repair_connection_poly(candidate: int, k: int) -> int:
    """Increment a k-bit candidate (constant term forced to 1) until x^k + candidate is irreducible.

    Returns the low k coefficient bits of the repaired polynomial.
    """
    mask = (1 << k) - 1
    c = (candidate & mask) | 1
    for _ in range(1 << k):
        if is_irreducible((1 << k) | c):
            return c
        c = ((c + 1) & mask) | 1
    raise ArithmeticError(f"no irreducible polynomial of degree {k} found")  # unreachable


# ---------------------------------------------------------------------------
# LFSR


@dataclass(frozen=True)
class LfsrSpec:
    """LFSR of degree k.

    ``connection_poly`` holds the coefficients c_0..c_{k-1} of the monic
    feedback polynomial x^k + c_{k-1} x^{k-1} + ... + c_0, and the output
    sequence obeys s[t+k] = sum_i c_i s[t+i]. ``initial_state`` is s[0..k-1].
    """

    degree: int
    initial_state: BitString
    connection_poly: BitString

    def __post_init__(self):
        if self.degree < 1:
            raise ValueError("degree must be positive")
        if self.initial_state.length != self.degree or self.connection_poly.length != self.degree:
            raise ValueError("state and polynomial must both have length == degree")

    @property
    def polynomial(self) -> int:
        return (1 << self.degree) | self.connection_poly.value


def lfsr_stream(spec: LfsrSpec, n_out: int) -> BitString:
    """First ``n_out`` output bits of the LFSR."""
    if n_out < 0:
        raise ValueError("n_out must be non-negative")
    if spec.initial_state.value == 0:
        raise ValueError("all-zero LFSR state gives a constant stream")
    k = spec.degree
    taps = spec.connection_poly.value
    state = spec.initial_state.value
    top = k - 1
    out = np.empty(n_out, dtype=np.uint8)
    for t in range(n_out):
        out[t] = state & 1
        fb = (state & taps).bit_count() & 1
        state = (state >> 1) | (fb << top)
    return BitString.from_array(out)


# ---------------------------------------------------------------------------
# Toeplitz


class ToeplitzSource(enum.Enum):
    EXPLICIT_RANDOM = "explicit-random"
    LFSR_GENERATED = "lfsr-generated"


@dataclass(frozen=True)
class ToeplitzSpec:
    rows: int
    cols: int
    diagonal_bits: BitString
    source: ToeplitzSource = ToeplitzSource.EXPLICIT_RANDOM

    def __post_init__(self):
        if self.rows < 1 or self.cols < 1:
            raise ValueError("Toeplitz dimensions must be positive")
        if self.diagonal_bits.length != self.rows + self.cols - 1:
            raise ValueError(
                f"need {self.rows + self.cols - 1} diagonal bits, got {self.diagonal_bits.length}"
            )


def toeplitz_matrix(spec: ToeplitzSpec) -> np.ndarray:
    """Materialize the matrix as a (rows, cols) uint8 array. Test-sized inputs only."""
    d = spec.diagonal_bits.to_array()
    i = np.arange(spec.rows)[:, None]
    j = np.arange(spec.cols)[None, :]
    return d[i - j + spec.cols - 1]


FFT_THRESHOLD = 1 << 20  # rows * cols above which the convolution path is used


def _multiply_bitwise(spec: ToeplitzSpec, v: BitString) -> BitString:
    # Row i, read over j, is bits (rows-1-i) .. of the reversed diagonal.
    rev = spec.diagonal_bits.reversed().value
    vec = v.value
    rows = spec.rows
    out = np.empty(rows, dtype=np.uint8)
    for i in range(rows):
        out[i] = ((rev >> (rows - 1 - i)) & vec).bit_count() & 1
    return BitString.from_array(out)


def _multiply_fft(spec: ToeplitzSpec, v: BitString) -> BitString | None:
    # (T v)_i = sum_j d[i - j + cols - 1] v[j] is entry i + cols - 1 of d * v
    d = spec.diagonal_bits.to_array().astype(np.float64)
    x = v.to_array().astype(np.float64)
    conv = fftconvolve(d, x)[spec.cols - 1 : spec.cols - 1 + spec.rows]
    counts = np.rint(conv)
    if np.max(np.abs(conv - counts), initial=0.0) > 0.25:
        return None  # too long for double-precision rounding; use the exact path
    return BitString.from_array(counts.astype(np.int64) & 1)


def toeplitz_multiply(spec: ToeplitzSpec, v: BitString) -> BitString:
    """Product T·v over GF(2); returns ``spec.rows`` bits.

    Large products go through an integer convolution (FFT) and are checked
    for exact rounding; small ones use word-level AND/popcount.
    """
    if v.length != spec.cols:
        raise ValueError(f"vector length {v.length} != matrix cols {spec.cols}")
    if spec.rows * spec.cols > FFT_THRESHOLD:
        out = _multiply_fft(spec, v)
        if out is not None:
            return out
    return _multiply_bitwise(spec, v)


@functools.lru_cache(maxsize=64)
def toeplitz_from_lfsr(key2k: BitString, rows: int, cols: int) -> ToeplitzSpec:
    """Krawczyk-style Toeplitz matrix whose diagonal is an LFSR stream.

    The first ``rows`` key bits seed the state (all-zero is replaced by
    00..01), the second ``rows`` bits seed the feedback polynomial, which is
    then repaired to the next irreducible one.
    """
    if key2k.length != 2 * rows:
        raise ValueError(f"need a {2 * rows}-bit key for a {rows}-row matrix, got {key2k.length}")
    k = rows
    state = key2k[:k]
    if state.value == 0:
        state = BitString(1, k)
    poly = repair_connection_poly(key2k[k:].value, k)
    spec = LfsrSpec(k, state, BitString(poly, k))
    diag = lfsr_stream(spec, rows + cols - 1)
    return ToeplitzSpec(rows, cols, diag, ToeplitzSource.LFSR_GENERATED)
