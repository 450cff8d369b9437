"""Key sift (drop no-clicks, resolve double clicks) and authenticated basis sift."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .authmac import AuthTag, auth_failure_prob, make_tag, verify_tag
from .budget import KeyPool
from .gf2core import BitString


class Basis(enum.IntEnum):
    X = 0
    Z = 1


class Click(enum.IntEnum):
    NONE = 0
    SINGLE = 1
    DOUBLE = 2


@dataclass(frozen=True)
class RawDetection:
    """One pulse. ``bob_bit`` is meaningful only for a single click."""

    alice_bit: int
    alice_basis: Basis
    bob_click: Click
    bob_basis: Basis
    bob_bit: int = 0

    def __post_init__(self):
        if self.bob_click != Click.SINGLE and self.bob_bit:
            raise ValueError("only a single click carries a bit")


@dataclass
class DetectionTable:
    """Column form of a pulse record list.

    ``pulse`` holds the original pulse index of each row, so a table may
    list only the pulses that clicked; ``n_pulses`` is the full count.
    """

    alice_bit: np.ndarray
    alice_basis: np.ndarray
    bob_click: np.ndarray
    bob_basis: np.ndarray
    bob_bit: np.ndarray
    pulse: np.ndarray
    n_pulses: int

    def __post_init__(self):
        cols = (self.alice_bit, self.alice_basis, self.bob_click, self.bob_basis, self.bob_bit, self.pulse)
        sizes = {len(c) for c in cols}
        if len(sizes) > 1:
            raise ValueError("detection columns differ in length")
        if len(self.pulse) > self.n_pulses:
            raise ValueError("more rows than pulses")

    def __len__(self) -> int:
        return len(self.pulse)

    @classmethod
    def from_records(cls, records: Iterable[RawDetection]) -> "DetectionTable":
        recs = list(records)
        col = lambda f: np.fromiter((int(f(r)) for r in recs), dtype=np.uint8, count=len(recs))  # noqa: E731
        return cls(
            col(lambda r: r.alice_bit),
            col(lambda r: r.alice_basis),
            col(lambda r: r.bob_click),
            col(lambda r: r.bob_basis),
            col(lambda r: r.bob_bit),
            np.arange(len(recs), dtype=np.int64),
            len(recs),
        )

    def records(self) -> list[RawDetection]:
        return [
            RawDetection(int(a), Basis(int(ab)), Click(int(c)), Basis(int(bb)), int(b))
            for a, ab, c, bb, b in zip(self.alice_bit, self.alice_basis, self.bob_click, self.bob_basis, self.bob_bit)
        ]


@dataclass(frozen=True)
class RawKey:
    """Both parties' n-bit raw keys and bases after key sift.

    ``index`` maps each raw position back to its pulse number.
    """

    alice_bits: np.ndarray
    alice_basis: np.ndarray
    bob_bits: np.ndarray
    bob_basis: np.ndarray
    index: np.ndarray

    @property
    def n(self) -> int:
        return len(self.index)


def key_sift(table: DetectionTable, rng: np.random.Generator, passive: bool = False) -> RawKey:
    """Drop no-click pulses and give each double click a uniformly random bit.

    In ``passive`` mode Bob's basis for a double click is also redrawn
    uniformly, since a passive setup has no basis setting of its own there.
    """
    keep = table.bob_click != Click.NONE
    bits = table.bob_bit[keep].copy()
    basis = table.bob_basis[keep].copy()
    dbl = table.bob_click[keep] == Click.DOUBLE
    n_dbl = int(dbl.sum())
    bits[dbl] = rng.integers(0, 2, n_dbl, dtype=np.uint8)
    if passive:
        basis[dbl] = rng.integers(0, 2, n_dbl, dtype=np.uint8)
    return RawKey(
        table.alice_bit[keep].copy(),
        table.alice_basis[keep].copy(),
        bits,
        basis,
        table.pulse[keep].copy(),
    )


@dataclass(frozen=True)
class SiftedKeys:
    x_alice: BitString
    x_bob: BitString
    z_alice: BitString
    z_bob: BitString
    x_index: np.ndarray
    z_index: np.ndarray

    @property
    def n_x(self) -> int:
        return self.x_alice.length

    @property
    def n_z(self) -> int:
        return self.z_alice.length

    @property
    def q_x(self) -> float:
        total = self.n_x + self.n_z
        return self.n_x / total if total else 0.0


def split_by_basis(alice_bits, bob_bits, alice_basis, bob_basis, index=None) -> SiftedKeys:
    """Keep rounds where the bases agree and split them into X and Z keys."""
    alice_bits = np.asarray(alice_bits, dtype=np.uint8)
    bob_bits = np.asarray(bob_bits, dtype=np.uint8)
    alice_basis = np.asarray(alice_basis, dtype=np.uint8)
    bob_basis = np.asarray(bob_basis, dtype=np.uint8)
    if index is None:
        index = np.arange(len(alice_bits), dtype=np.int64)
    same = alice_basis == bob_basis
    sel_x = same & (alice_basis == Basis.X)
    sel_z = same & (alice_basis == Basis.Z)
    return SiftedKeys(
        BitString.from_array(alice_bits[sel_x]),
        BitString.from_array(bob_bits[sel_x]),
        BitString.from_array(alice_bits[sel_z]),
        BitString.from_array(bob_bits[sel_z]),
        np.asarray(index)[sel_x],
        np.asarray(index)[sel_z],
    )


Tamper = Callable[[BitString, AuthTag], tuple[BitString, AuthTag]]


@dataclass(frozen=True)
class BasisSiftResult:
    sifted: SiftedKeys | None
    accepted: bool
    key_cost: int
    eps_bs: float

    @property
    def eps_total(self) -> float:
        return 2 * self.eps_bs


def _send(msg, k, sender: KeyPool, receiver: KeyPool, direction, purpose, tamper):
    pad_s = sender.draw(k, purpose)
    tag = make_tag(msg, sender.matrix_key(k, direction), pad_s)
    got, got_tag = (msg, tag) if tamper is None else tamper(msg, tag)
    pad_r = receiver.draw(k, purpose)
    ok = got.length == msg.length and verify_tag(got, got_tag, receiver.matrix_key(k, direction), pad_r)
    return got, ok


def basis_sift(
    raw: RawKey,
    k_bs: int,
    pool_alice: KeyPool,
    pool_bob: KeyPool,
    tamper_a2b: Tamper | None = None,
    tamper_b2a: Tamper | None = None,
) -> BasisSiftResult:
    """Exchange authenticated n-bit basis strings and sift on agreement.

    Each side pays one k_bs pad per direction, 2·k_bs in total, and the step
    fails with probability at most 2·ε_bs.
    """
    n = raw.n
    if n == 0:
        raise ValueError("no raw key to sift")
    a_bases = BitString.from_array(raw.alice_basis)
    b_bases = BitString.from_array(raw.bob_basis)
    got_a, ok_a = _send(a_bases, k_bs, pool_alice, pool_bob, 0, "bs-pad-a2b", tamper_a2b)
    got_b, ok_b = _send(b_bases, k_bs, pool_bob, pool_alice, 1, "bs-pad-b2a", tamper_b2a)
    eps = auth_failure_prob(n, k_bs)
    if not (ok_a and ok_b):
        return BasisSiftResult(None, False, 2 * k_bs, eps)
    sifted = split_by_basis(raw.alice_bits, raw.bob_bits, raw.alice_basis, raw.bob_basis, raw.index)
    return BasisSiftResult(sifted, True, 2 * k_bs, eps)
