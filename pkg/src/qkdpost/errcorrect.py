"""Error correction with one-time-pad encrypted parities, and error verification.

Codecs are split into a driver (Bob) and a responder (Alice). The driver is
a generator that yields :class:`ParityRequest` objects and receives Alice's
parity bits back, so the same code runs inside the two-party session and in
the direct :func:`correct_errors` helper. Requests are public; only the
replies carry key information and they are always encrypted.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Generator, Protocol

import numpy as np

from .authmac import auth_failure_prob, make_tag, verify_tag
from .budget import KeyPool
from .gf2core import BitString, ToeplitzSource, ToeplitzSpec, toeplitz_multiply
from .phasest import binary_entropy
from .sift import SiftedKeys

N_PASSES = 4
# corrupted parities can make blocks contradict each other; stop sweeping
# after this many rounds per pass and leave it to error verification
MAX_SWEEPS = 64


@dataclass(frozen=True)
class ParityRequest:
    """Public request for Alice's parities.

    ``kind`` is ``"blocks"`` (all top-level blocks of a new pass, permuted by
    ``seed``), ``"ranges"`` (sub-ranges ``(pass, start, end)`` of earlier
    passes) or ``"hash"`` (``rows`` Toeplitz parities with a ``seed``-derived
    matrix, used by the oracle codec).
    """

    kind: str
    pass_no: int = 0
    seed: int | None = None
    block: int = 0
    ranges: tuple[tuple[int, int, int], ...] = ()
    rows: int = 0

    def reply_length(self, n: int) -> int:
        if self.kind == "blocks":
            return -(-n // self.block)
        if self.kind == "ranges":
            return len(self.ranges)
        return self.rows

    def to_meta(self) -> dict:
        d = {"kind": self.kind, "pass": self.pass_no}
        if self.seed is not None:
            d["seed"] = self.seed
        if self.kind == "blocks":
            d["block"] = self.block
        elif self.kind == "ranges":
            d["ranges"] = [list(r) for r in self.ranges]
        else:
            d["rows"] = self.rows
        return d

    @classmethod
    def from_meta(cls, d: dict) -> "ParityRequest":
        return cls(
            d["kind"],
            d.get("pass", 0),
            d.get("seed"),
            d.get("block", 0),
            tuple(tuple(r) for r in d.get("ranges", ())),
            d.get("rows", 0),
        )


def _permutation(n: int, seed: int | None) -> np.ndarray:
    if seed is None:
        return np.arange(n)
    return np.random.default_rng(seed).permutation(n)


class Responder:
    """Alice's side: answers parity requests from her fixed key."""

    def __init__(self, bits: np.ndarray):
        self.bits = np.asarray(bits, dtype=np.uint8)
        self._prefix: dict[int, np.ndarray] = {}

    def _cum(self, pass_no: int, seed: int | None) -> np.ndarray:
        if pass_no not in self._prefix:
            perm = _permutation(len(self.bits), seed)
            cum = np.zeros(len(self.bits) + 1, dtype=np.uint8)
            np.bitwise_xor.accumulate(self.bits[perm], out=cum[1:])
            self._prefix[pass_no] = cum
        return self._prefix[pass_no]

    def respond(self, req: ParityRequest) -> np.ndarray:
        n = len(self.bits)
        if req.kind == "blocks":
            cum = self._cum(req.pass_no, req.seed)
            edges = np.minimum(np.arange(0, n + req.block, req.block), n)
            edges = np.unique(edges)
            return cum[edges[1:]] ^ cum[edges[:-1]]
        if req.kind == "ranges":
            out = np.empty(len(req.ranges), dtype=np.uint8)
            for i, (p, s, e) in enumerate(req.ranges):
                if p not in self._prefix or not 0 <= s < e <= n:
                    raise ValueError(f"bad parity range {(p, s, e)}")
                cum = self._prefix[p]
                out[i] = cum[e] ^ cum[s]
            return out
        if req.kind == "hash":
            diag = BitString.random(req.rows + n - 1, np.random.default_rng(req.seed))
            spec = ToeplitzSpec(req.rows, n, diag, ToeplitzSource.EXPLICIT_RANDOM)
            return toeplitz_multiply(spec, BitString.from_array(self.bits)).to_array()
        raise ValueError(f"unknown request kind {req.kind!r}")


@dataclass
class DriverResult:
    bits: np.ndarray
    flips: int
    passes: int


Driver = Generator[ParityRequest, np.ndarray, DriverResult]


class Codec(Protocol):
    name: str

    def driver(self, bob_bits: np.ndarray, rng: np.random.Generator, attempt: int = 0,
               alice_bits: np.ndarray | None = None) -> Driver: ...


@dataclass(frozen=True)
class CascadeCodec:
    """Interactive Cascade: permuted block parities, binary search, back-tracking.

    Pass p uses blocks of ``block0 << p`` bits; pass 0 of the first attempt is
    unpermuted. Searches in all open blocks advance together, one request
    per bisection step.
    """

    e_est: float
    n_passes: int = N_PASSES
    name: str = "cascade"

    def first_block(self, n: int) -> int:
        if self.e_est <= 0:
            return max(1, n)
        return max(1, min(n, math.ceil(0.73 / self.e_est)))

    def driver(self, bob_bits, rng, attempt=0, alice_bits=None) -> Driver:
        b = np.array(bob_bits, dtype=np.uint8)
        n = len(b)
        if n == 0:
            return DriverResult(b, 0, 0)
        block0 = self.first_block(n)
        perms: list[np.ndarray] = []
        inv: list[np.ndarray] = []
        views: list[np.ndarray] = []  # Bob's bits in each pass's order
        tops: list[np.ndarray] = []
        sizes: list[int] = []
        flips = 0

        def par(p, s, e):
            return int(views[p][s:e].sum() & 1)

        def flip(pos):
            nonlocal flips
            b[pos] ^= 1
            for p in range(len(perms)):
                views[p][inv[p][pos]] ^= 1
            flips += 1

        for p in range(self.n_passes):
            size = min(n, block0 << p)
            seed = None if (p == 0 and attempt == 0) else int(rng.integers(0, 2**62))
            perm = _permutation(n, seed)
            perms.append(perm)
            iv = np.empty(n, dtype=np.int64)
            iv[perm] = np.arange(n)
            inv.append(iv)
            views.append(b[perm].copy())
            sizes.append(size)
            top = yield ParityRequest("blocks", p, seed, size)
            tops.append(np.asarray(top, dtype=np.uint8))

            for _ in range(MAX_SWEEPS):
                # every top-level block whose parity still disagrees
                searches = []
                for q in range(len(perms)):
                    sz = sizes[q]
                    for blk in range(len(tops[q])):
                        s, e = blk * sz, min(n, (blk + 1) * sz)
                        if par(q, s, e) != tops[q][blk]:
                            searches.append((q, s, e, int(tops[q][blk])))
                if not searches:
                    break
                while searches:
                    live = []
                    for q, s, e, ap in searches:
                        if par(q, s, e) == ap:
                            continue  # a flip elsewhere fixed this range
                        if e - s == 1:
                            flip(perms[q][s])
                        else:
                            live.append((q, s, e, ap))
                    if not live:
                        break
                    ranges = tuple((q, s, (s + e) // 2) for q, s, e, _ in live)
                    left = yield ParityRequest("ranges", p, ranges=ranges)
                    searches = []
                    for (q, s, e, ap), lp in zip(live, left):
                        m = (s + e) // 2
                        if par(q, s, m) != int(lp):
                            searches.append((q, s, m, int(lp)))
                        else:
                            searches.append((q, m, e, ap ^ int(lp)))
        return DriverResult(b, flips, self.n_passes)


@dataclass(frozen=True)
class ShannonOracleCodec:
    """Reference codec at the Shannon limit.

    Alice sends ceil(n·H2(e)) encrypted hash parities, with e the true error
    rate, and Bob's key is then set to Alice's by fiat. Only meaningful in
    simulation, where both keys are visible.
    """

    name: str = "oracle"

    def driver(self, bob_bits, rng, attempt=0, alice_bits=None) -> Driver:
        if alice_bits is None:
            raise ValueError("oracle codec needs Alice's key")
        b = np.asarray(bob_bits, dtype=np.uint8)
        a = np.asarray(alice_bits, dtype=np.uint8)
        n = len(b)
        if n == 0:
            return DriverResult(b.copy(), 0, 0)
        errors = int(np.count_nonzero(a != b))
        rows = shannon_cost(n, errors)
        if rows:
            yield ParityRequest("hash", 0, int(rng.integers(0, 2**62)), rows=rows)
        return DriverResult(a.copy(), errors, 1)


def shannon_cost(n: int, errors: int) -> int:
    """ceil(n·H2(errors/n))."""
    return math.ceil(n * binary_entropy(errors / n)) if n else 0


@dataclass
class LeakageMeter:
    """Counts EC traffic; ``k_ec`` is the encrypted share, i.e. the pool cost."""

    bits_sent: int = 0
    k_ec: int = 0
    messages: int = 0
    per_basis: dict[str, int] = field(default_factory=dict)

    def record(self, n_bits: int, encrypted: bool, basis: str = "") -> None:
        self.bits_sent += n_bits
        self.messages += 1
        if encrypted:
            self.k_ec += n_bits
            self.per_basis[basis] = self.per_basis.get(basis, 0) + n_bits

    def efficiency(self, n: int, e: float, basis: str) -> float:
        """Measured f(e) = k_ec / (n·H2(e)) for one basis."""
        h = binary_entropy(e)
        return self.per_basis.get(basis, 0) / (n * h) if n and h else math.inf


@dataclass(frozen=True)
class ErrorCounts:
    errors_x: int
    errors_z: int
    n_x: int
    n_z: int
    corrected_x: bool = True
    corrected_z: bool = True

    @property
    def e_bx(self) -> float:
        return self.errors_x / self.n_x if self.n_x else 0.0

    @property
    def e_bz(self) -> float:
        return self.errors_z / self.n_z if self.n_z else 0.0


def exchange_parities(req: ParityRequest, responder: Responder, pool_alice: KeyPool, pool_bob: KeyPool,
                      meter: LeakageMeter, basis: str = "") -> np.ndarray:
    """Alice answers ``req``; the reply crosses the wire OTP-encrypted."""
    plain = BitString.from_array(responder.respond(req))
    cipher = plain ^ pool_alice.draw(plain.length, "ec-pad")
    meter.record(cipher.length, True, basis)
    return (cipher ^ pool_bob.draw(cipher.length, "ec-pad")).to_array()


def run_driver(driver: Driver, respond) -> DriverResult:
    """Drive a codec generator to completion with ``respond(request) -> parities``."""
    try:
        req = next(driver)
        while True:
            req = driver.send(respond(req))
    except StopIteration as stop:
        return stop.value


@dataclass(frozen=True)
class CorrectionResult:
    x_bob: BitString
    z_bob: BitString
    meter: LeakageMeter
    counts: ErrorCounts


def correct_errors(
    sifted: SiftedKeys,
    codec: Codec,
    pool_alice: KeyPool,
    pool_bob: KeyPool,
    rng: np.random.Generator,
    attempt: int = 0,
) -> CorrectionResult:
    """Correct Bob's X and Z keys independently; every parity reply is encrypted and metered."""
    meter = LeakageMeter()
    out = {}
    flips = {}
    for name, a_key, b_key in (("x", sifted.x_alice, sifted.x_bob), ("z", sifted.z_alice, sifted.z_bob)):
        a = a_key.to_array()
        resp = Responder(a)
        drv = codec.driver(b_key.to_array(), rng, attempt, alice_bits=a)
        res = run_driver(drv, lambda r, resp=resp, name=name: exchange_parities(r, resp, pool_alice, pool_bob,
                                                                                meter, name))
        out[name] = BitString.from_array(res.bits)
        flips[name] = int((out[name] ^ b_key).weight())
    counts = ErrorCounts(flips["x"], flips["z"], sifted.n_x, sifted.n_z)
    return CorrectionResult(out["x"], out["z"], meter, counts)


@dataclass(frozen=True)
class VerifyResult:
    accepted: bool
    k_ev: int
    eps_ev: float


def error_verify(alice_key: BitString, bob_key: BitString, k_ev: int, pool_alice: KeyPool, pool_bob: KeyPool,
                 tamper=None) -> VerifyResult:
    """Alice sends an encrypted tag of her key; Bob accepts iff it matches his.

    Keys are the X key followed by the Z key. Accepting unequal keys has
    probability at most (n_x+n_z)·2^(1-k_ev).
    """
    if alice_key.length != bob_key.length:
        raise ValueError("verification needs equal-length keys")
    pad_a = pool_alice.draw(k_ev, "ev-pad")
    tag = make_tag(alice_key, pool_alice.matrix_key(k_ev, 0), pad_a)
    if tamper is not None:
        _, tag = tamper(alice_key, tag)
    pad_b = pool_bob.draw(k_ev, "ev-pad")
    ok = verify_tag(bob_key, tag, pool_bob.matrix_key(k_ev, 0), pad_b)
    return VerifyResult(ok, k_ev, auth_failure_prob(alice_key.length, k_ev))
