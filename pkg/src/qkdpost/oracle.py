"""Brute-force validation suites for the sampling bound and the authentication hash.

The sampling sweep compares the exact hypergeometric tail with the closed
form bound at every block split up to a small total size. For a fixed
(n_s, n_t, E, θ) the tail is a union of sample outcomes k; the bound is
checked against the largest closed-form value among those outcomes.
"""

from __future__ import annotations

from dataclasses import dataclass
from math import comb

import numpy as np

from .gf2core import BitString, toeplitz_from_lfsr, toeplitz_multiply
from .phasest import log2_p_theta_raw


def _h2(p):
    p = np.asarray(p, dtype=np.float64)
    with np.errstate(divide="ignore", invalid="ignore"):
        h = -(p * np.log2(p) + (1 - p) * np.log2(1 - p))
    return np.where((p <= 0) | (p >= 1), 0.0, h)


def log2_bound_grid(n_s: int, n_t: int, e: float, thetas: np.ndarray) -> np.ndarray:
    """Closed-form log2 bound in double precision over a theta grid (raw, unclamped).

    ``e`` is the effective sample rate. Adequate at oracle sizes (n <= a few
    dozen); the library evaluates the same form in extended precision.
    """
    n = n_s + n_t
    q = n_s / n
    xi = _h2(e + thetas - q * thetas) - q * _h2(e) - (1 - q) * _h2(e + thetas)
    return 0.5 * (np.log2(n) - np.log2(n_s * n_t * e * (1 - e))) - n * xi


@dataclass(frozen=True)
class SweepRow:
    n_s: int
    n_t: int
    errors: int
    theta: float
    exact: float
    bound: float
    raw_bound: float
    saturated: bool

    @property
    def violation(self) -> bool:
        return self.exact > self.bound

    @property
    def raw_violation(self) -> bool:
        return self.exact > self.raw_bound


@dataclass
class SweepSummary:
    cases: int
    nonzero_cases: int
    violations: int
    raw_violations: int
    worst_raw_ratio: float
    raw_violation_min_rate: float
    rows: list[SweepRow]


def theta_grid(step: float = 0.005) -> np.ndarray:
    return np.round(np.arange(step, 1.0, step), 12)


def tail_bound_sweep(max_total: int = 24, thetas: np.ndarray | None = None, keep_rows: bool = False) -> SweepSummary:
    """Exact tail vs closed-form bound for all n_s + n_t <= ``max_total``, all E, all thetas.

    Only cases with a non-empty tail can violate; every case is still
    counted in ``cases``. ``raw_violation_min_rate`` is the smallest
    e_sample + θ among raw-form violations (1.0 when there are none).
    """
    if thetas is None:
        thetas = theta_grid()
    thetas = np.asarray(thetas, dtype=np.float64)
    cases = nonzero = viol = raw_viol = 0
    worst = 0.0
    min_rate = 1.0
    rows: list[SweepRow] = []
    for total in range(2, max_total + 1):
        for n_s in range(1, total):
            n_t = total - n_s
            # log2 bound per sample outcome k, for every theta
            raw = np.full((n_s + 1, len(thetas)), -np.inf)
            guard = np.full((n_s + 1, len(thetas)), -np.inf)
            for k in range(n_s + 1):
                e = k / n_s if k else 1 / n_s
                if e >= 1:
                    continue
                ok = e + thetas <= 1
                lg = np.full(len(thetas), np.inf)
                lg[ok] = log2_bound_grid(n_s, n_t, e, thetas[ok])
                raw[k] = np.minimum(lg, 0.0)
                sat = e + thetas >= 1 - 1 / n_t
                guard[k] = np.where(sat, 0.0, raw[k])
            for errors in range(total + 1):
                denom = comb(total, errors)
                ks = np.arange(max(0, errors - n_t), min(errors, n_s) + 1)
                weight = np.array([comb(n_s, k) * comb(n_t, errors - k) for k in ks], dtype=np.float64) / denom
                e_eff = np.where(ks == 0, 1 / n_s, ks / n_s)
                tgt = (errors - ks) / n_t
                # tail[k, theta]: outcome k is in the event target > sample + theta
                tail = tgt[:, None] > e_eff[:, None] + thetas[None, :] + 1e-12
                exact = (weight[:, None] * tail).sum(axis=0)
                cases += len(thetas)
                hit = tail.any(axis=0)
                nonzero += int(hit.sum())
                if not hit.any():
                    continue
                lr = np.where(tail, raw[ks], -np.inf).max(axis=0)
                lgd = np.where(tail, guard[ks], -np.inf).max(axis=0)
                b_raw, b_guard = 2.0**lr, 2.0**lgd
                v = hit & (exact > b_guard * (1 + 1e-12))
                rv = hit & (exact > b_raw * (1 + 1e-12))
                viol += int(v.sum())
                raw_viol += int(rv.sum())
                if rv.any():
                    worst = max(worst, float(np.max(exact[rv] / b_raw[rv])))
                    rates = np.where(tail, e_eff[:, None] + thetas[None, :], np.inf).min(axis=0)
                    min_rate = min(min_rate, float(rates[rv].min()))
                if keep_rows:
                    for j in np.nonzero(hit)[0]:
                        sat = bool(lgd[j] == 0.0 and lr[j] < 0.0)
                        rows.append(SweepRow(n_s, n_t, errors, float(thetas[j]), float(exact[j]),
                                             float(b_guard[j]), float(b_raw[j]), sat))
    return SweepSummary(cases, nonzero, viol, raw_viol, worst, min_rate, rows)


def crosscheck_grid_vs_library(samples=((10, 14, 0.1, 0.05), (5, 7, 0.2, 0.3), (12, 12, 1 / 12, 0.4))) -> float:
    """Largest |log2| gap between the double-precision grid form and the library."""
    gap = 0.0
    for n_s, n_t, e, th in samples:
        lib = log2_p_theta_raw(n_s, n_t, e, th)
        grid = float(log2_bound_grid(n_s, n_t, e, np.array([th]))[0])
        gap = max(gap, abs(lib - grid))
    return gap


@dataclass(frozen=True)
class CollisionSummary:
    k: int
    m: int
    keys: int
    max_fraction: float
    worst_difference: int
    bound: float

    @property
    def exceedances(self) -> int:
        return int(self.max_fraction > self.bound)


def auth_collision_enumeration(k: int, m: int) -> CollisionSummary:
    """Enumerate every 2k-bit matrix key and every nonzero message difference.

    Two distinct messages collide under a key iff the hash of their XOR is
    zero (the hash is linear), so the maximum over message pairs equals the
    maximum over nonzero differences D of the fraction of keys with h(D)=0.
    Keys are drawn uniformly, repairs included, as in real use.
    """
    if 2 * k > 24 or m > 16:
        raise ValueError("enumeration limited to 2k <= 24 and m <= 16")
    n_keys = 1 << (2 * k)
    diffs = np.arange(1, 1 << m, dtype=np.int64)
    dbits = ((diffs[:, None] >> np.arange(m)) & 1).astype(np.int64)  # (D, m)
    zero_count = np.zeros(len(diffs), dtype=np.int64)
    cols = np.arange(m)
    for key in range(n_keys):
        spec = toeplitz_from_lfsr.__wrapped__(BitString(key, 2 * k), k, m)
        d = spec.diagonal_bits.to_array().astype(np.int64)
        mat = d[np.arange(k)[:, None] - cols[None, :] + m - 1]  # (k, m)
        h = (dbits @ mat.T) & 1
        zero_count += ~h.any(axis=1)
    frac = zero_count / n_keys
    i = int(np.argmax(frac))
    return CollisionSummary(k, m, n_keys, float(frac[i]), int(diffs[i]), min(1.0, m * 2.0 ** (1 - k)))


def hypergeometric_golden(cases=((10, 10, 4, 0.1), (6, 9, 3, 0.05), (12, 12, 6, 0.2), (4, 8, 3, 0.05))):
    """Exact tail values for regression tables."""
    from .phasest import hypergeometric_tail_oracle

    out = []
    for n_s, n_t, e, th in cases:
        v = hypergeometric_tail_oracle(n_s, n_t, e, th)
        out.append({"n_s": n_s, "n_t": n_t, "errors": e, "theta": th, "exact": f"{v.numerator}/{v.denominator}",
                    "value": float(v)})
    return out


def toeplitz_golden(keys=("101100", "000111", "111111", "010010"), rows=3, cols=4):
    """LFSR-Toeplitz diagonals and the hash of 1010 for a few fixed keys."""
    msg = BitString.from_str("1010")
    out = []
    for key in keys:
        spec = toeplitz_from_lfsr(BitString.from_str(key), rows, cols)
        out.append({"key": key, "diagonal": str(spec.diagonal_bits),
                    "hash_1010": str(toeplitz_multiply(spec, msg))})
    return out


def total_cases(max_total: int, n_theta: int) -> int:
    return sum((t - 1) * (t + 1) for t in range(2, max_total + 1)) * n_theta
