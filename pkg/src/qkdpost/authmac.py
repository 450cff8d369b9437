"""LFSR-Toeplitz authentication tags, one-time-pad encrypted.

A tag is ``T(matrix_key) · message`` XOR ``pad_key``, where ``T`` is the
Toeplitz matrix built by :func:`toeplitz_from_lfsr`. Because the tag is
encrypted, the 2k-bit matrix key stays private and may be reused; only the
k-bit pad is consumed per tag.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

from .gf2core import BitString, toeplitz_from_lfsr, toeplitz_multiply, xor_otp

_K = struct.Struct("<H")


@dataclass(frozen=True)
class AuthTag:
    ciphertext: BitString

    @property
    def k(self) -> int:
        return self.ciphertext.length

    def to_bytes(self) -> bytes:
        """Wire form: 16-bit little-endian k, then the packed tag bits."""
        k = self.k
        return _K.pack(k) + self.ciphertext.value.to_bytes((k + 7) // 8, "little")

    @classmethod
    def from_bytes(cls, data: bytes) -> "AuthTag":
        if len(data) < _K.size:
            raise ValueError("truncated tag")
        (k,) = _K.unpack_from(data)
        body = data[_K.size :]
        if len(body) != (k + 7) // 8:
            raise ValueError("tag body length does not match k")
        return cls(BitString(int.from_bytes(body, "little"), k))


def bare_hash(message: BitString, matrix_key: BitString) -> BitString:
    """Unencrypted Toeplitz hash of ``message`` (tag length = half the key)."""
    if message.length < 1:
        raise ValueError("cannot authenticate an empty message")
    if matrix_key.length % 2:
        raise ValueError("matrix key must have even length 2k")
    k = matrix_key.length // 2
    return toeplitz_multiply(toeplitz_from_lfsr(matrix_key, k, message.length), message)


def make_tag(message: BitString, matrix_key: BitString, pad_key: BitString) -> AuthTag:
    if matrix_key.length != 2 * pad_key.length:
        raise ValueError(
            f"matrix key must be twice the pad length ({matrix_key.length} vs {pad_key.length})"
        )
    return AuthTag(xor_otp(bare_hash(message, matrix_key), pad_key))


def verify_tag(message: BitString, tag: AuthTag, matrix_key: BitString, pad_key: BitString) -> bool:
    if tag.k != pad_key.length:
        return False
    return make_tag(message, matrix_key, pad_key) == tag


def auth_failure_prob(m: int, k: int) -> float:
    """Forgery/collision probability m·2^(1-k) of a k-bit tag on an m-bit message, capped at 1."""
    if m < 1 or k < 2:
        raise ValueError("need m >= 1 and k >= 2")
    return min(1.0, math.ldexp(m, 1 - k))


def required_tag_len(m: int, eps: float) -> int:
    """Smallest k >= 2 with m·2^(1-k) <= eps."""
    if not 0 < eps < 1:
        raise ValueError("eps must lie in (0, 1)")
    k = max(2, math.ceil(math.log2(m / eps)) + 1)
    # log2 rounding can land one off either way
    while auth_failure_prob(m, k) > eps:
        k += 1
    while k > 2 and auth_failure_prob(m, k - 1) <= eps:
        k -= 1
    return k
