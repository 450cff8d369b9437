"""Privacy amplification: final-length arithmetic, seed exchange, Toeplitz compression."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .authmac import AuthTag, auth_failure_prob, make_tag, verify_tag
from .budget import KeyPool
from .gf2core import BitString, ToeplitzSource, ToeplitzSpec, toeplitz_from_lfsr, toeplitz_multiply
from .phasest import phase_entropy


@dataclass(frozen=True)
class PaPlan:
    l: int
    t_oe: int
    k_pa: int
    eps_pa: float

    @property
    def feasible(self) -> bool:
        return self.l > 0


def pa_length_terms(n_x, n_z, e_bx, e_bz, theta_x, theta_z) -> tuple[float, float]:
    """Per-basis PA contributions (X key term, Z key term) before t_oe.

    The X key's phase error is bounded through the Z sample (e_bz + theta_z)
    and vice versa. A bound at or above 1/2 is charged a full bit per key bit.
    """
    x_term = n_x * (1 - phase_entropy(e_bz + theta_z))
    z_term = n_z * (1 - phase_entropy(e_bx + theta_x))
    return x_term, z_term


def pa_final_length(n_x, n_z, e_bx, e_bz, theta_x, theta_z, t_oe, use_x=True, use_z=True) -> int:
    """floor(n_x[1-H2(e_bz+θ_z)] + n_z[1-H2(e_bx+θ_x)] - t_oe), or 0 when not positive.

    ``use_x``/``use_z`` drop a basis that only serves parameter estimation.
    """
    if t_oe < 0:
        raise ValueError("t_oe must be non-negative")
    x_term, z_term = pa_length_terms(n_x, n_z, e_bx, e_bz, theta_x, theta_z)
    raw = x_term * use_x + z_term * use_z - t_oe
    return max(0, math.floor(raw))


def pa_failure_prob(n_key: int, l: int, k_pa: int, t_oe: float) -> float:
    """(n_key + l - 1)·2^(1-k_pa) + 2^(-t_oe)."""
    return auth_failure_prob(max(1, n_key + l - 1), k_pa) + 2.0 ** -t_oe


def pa_compress(key: BitString, seed: BitString, l: int | None = None) -> BitString:
    """Multiply the reconciled key by the seed's Toeplitz matrix (l rows, len(key) cols)."""
    if l is None:
        l = seed.length - key.length + 1
    if l < 1:
        raise ValueError("final length must be positive")
    if seed.length != key.length + l - 1:
        raise ValueError(f"seed must have {key.length + l - 1} bits, got {seed.length}")
    return toeplitz_multiply(ToeplitzSpec(l, key.length, seed, ToeplitzSource.EXPLICIT_RANDOM), key)


def pa_compress_lfsr(key: BitString, key_material: BitString, l: int) -> BitString:
    """Experimental: compress with an LFSR-Toeplitz matrix seeded from pre-shared key.

    Carries no failure-probability accounting; the sound length and error
    bound for this variant are open.
    """
    spec = toeplitz_from_lfsr(key_material, key_material.length // 2, key.length)
    if l > spec.rows:
        raise ValueError("LFSR variant yields at most half the key material length")
    return toeplitz_multiply(spec, key)[:l]


@dataclass(frozen=True)
class SeedExchange:
    seed: BitString
    accepted: bool
    k_pa: int
    eps_auth: float


def pa_seed_exchange(
    n_key: int,
    l: int,
    k_pa: int,
    pool_alice: KeyPool,
    pool_bob: KeyPool,
    rng: np.random.Generator,
    tamper=None,
) -> SeedExchange:
    """Alice sends a fresh (n_key + l - 1)-bit seed with an encrypted tag; Bob checks it.

    ``tamper``, if given, maps the (seed, tag) pair in flight to a new pair.
    """
    seed = BitString.random(n_key + l - 1, rng)
    pad_a = pool_alice.draw(k_pa, "pa-pad")
    tag = make_tag(seed, pool_alice.matrix_key(k_pa, 0), pad_a)
    received, rtag = (seed, tag) if tamper is None else tamper(seed, tag)
    pad_b = pool_bob.draw(k_pa, "pa-pad")
    ok = received.length == seed.length and verify_tag(received, rtag, pool_bob.matrix_key(k_pa, 0), pad_b)
    return SeedExchange(received, ok, k_pa, auth_failure_prob(seed.length, k_pa))


__all__ = [
    "AuthTag",
    "PaPlan",
    "SeedExchange",
    "pa_compress",
    "pa_compress_lfsr",
    "pa_failure_prob",
    "pa_final_length",
    "pa_length_terms",
    "pa_seed_exchange",
]
