"""Phase-error-rate bounds from random sampling.

The bit-error rate measured in one basis (the *sample*) bounds the phase
error rate of the other basis (the *target*). Bounds are evaluated with
30-digit arithmetic: the exponent multiplies a ~1e7 block length by a ~1e-6
entropy gap, so double precision leaves too little headroom.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from math import comb

import mpmath
from scipy.optimize import brentq

_CTX = mpmath.MPContext()
_CTX.dps = 30

ORACLE_MAX_SIZE = 30


def binary_entropy(p: float) -> float:
    """H2(p) in bits, with H2(0) = H2(1) = 0."""
    if not 0.0 <= p <= 1.0:
        raise ValueError(f"probability out of range: {p}")
    if p == 0.0 or p == 1.0:
        return 0.0
    return -p * math.log2(p) - (1.0 - p) * math.log2(1.0 - p)


def phase_entropy(bound: float) -> float:
    """Entropy charged for a phase error rate known only to be <= ``bound``.

    H2 is increasing on [0, 1/2], so a bound at or above 1/2 costs a full bit.
    """
    return binary_entropy(min(0.5, bound))


def _h2(p):
    if p <= 0 or p >= 1:
        return _CTX.mpf(0)
    return -(p * _CTX.log(p, 2) + (1 - p) * _CTX.log(1 - p, 2))


def _xi_mp(theta, e_b, q):
    return _h2(e_b + theta - q * theta) - q * _h2(e_b) - (1 - q) * _h2(e_b + theta)


def xi(theta: float, e_b: float, q: float) -> float:
    """Exponent gap H2(e+θ-qθ) - q·H2(e) - (1-q)·H2(e+θ); positive for θ > 0."""
    if theta < 0 or e_b < 0 or e_b + theta > 1:
        raise ValueError("need theta >= 0, e_b >= 0 and e_b + theta <= 1")
    if not 0 < q < 1:
        raise ValueError("q must lie in (0, 1)")
    if theta == 0:
        return 0.0
    mpf = _CTX.mpf
    return float(_xi_mp(mpf(theta), mpf(e_b), mpf(q)))


def effective_rate(e_b: float, n_s: int) -> float:
    """Sample error rate with the zero-error substitution n_s·e_b = 1."""
    return 1.0 / n_s if e_b == 0 else e_b


def _check(n_s, n_t, e_b, theta):
    if n_s < 1 or n_t < 1:
        raise ValueError("sample and target sizes must be >= 1")
    if not 0 <= e_b <= 1:
        raise ValueError("sample error rate out of range")
    if theta <= 0:
        raise ValueError("theta must be positive")


def log2_p_theta_raw(n_s: float, n_t: float, e_b: float, theta: float) -> float:
    """log2 of the unclamped sampling tail bound (no saturation guard).

    q = n_s/(n_s+n_t); prefactor sqrt(n)/sqrt(n_s n_t e(1-e)); exponent -n·xi.
    The zero-error substitution is applied; ``e_b`` must be < 1 and
    ``e_eff + theta <= 1``.
    """
    _check(n_s, n_t, e_b, theta)
    mpf = _CTX.mpf
    e = mpf(effective_rate(e_b, n_s))
    if e >= 1 or e + mpf(theta) > 1:
        raise ValueError("bound undefined: need e < 1 and e + theta <= 1")
    ns, nt = mpf(n_s), mpf(n_t)
    n = ns + nt
    gap = _xi_mp(mpf(theta), e, ns / n)
    lg = (_CTX.log(n, 2) - _CTX.log(ns * nt * e * (1 - e), 2)) / 2 - n * gap
    return float(lg)


def p_theta_bound_raw(n_s: float, n_t: float, e_b: float, theta: float) -> float:
    """Sampling tail bound exactly as the closed form gives it, clamped to 1."""
    return min(1.0, 2.0 ** min(0.0, log2_p_theta_raw(n_s, n_t, e_b, theta)))


def _saturated(n_s, n_t, e_b, theta) -> bool:
    # Only "every target bit is wrong" is left in the event; the closed form
    # stops being an upper bound there at small block sizes.
    return effective_rate(e_b, n_s) + theta >= 1.0 - 1.0 / n_t


def log2_p_theta_bound(n_s: float, n_t: float, e_b: float, theta: float) -> float:
    """log2 of :func:`p_theta_bound`; stays finite where the bound underflows doubles."""
    _check(n_s, n_t, e_b, theta)
    if _saturated(n_s, n_t, e_b, theta):
        return 0.0
    return min(0.0, log2_p_theta_raw(n_s, n_t, e_b, theta))


def p_theta_bound(n_s: float, n_t: float, e_b: float, theta: float) -> float:
    """Probability that the target error rate exceeds e_b + theta.

    ``n_s`` and ``e_b`` describe the measured (sample) basis, ``n_t`` the
    other one. Returns a value in [0, 1].
    """
    return 2.0 ** log2_p_theta_bound(n_s, n_t, e_b, theta)


def theta_for_budget(n_s: float, n_t: float, e_b: float, budget: float) -> float | None:
    """Smallest theta with p_theta_bound <= budget, or None if even e+theta = 1 is not enough."""
    if not 0 < budget < 1:
        raise ValueError("budget must lie in (0, 1)")
    e = effective_rate(e_b, n_s)
    hi = math.nextafter((1.0 - 1.0 / n_t) - e, 0.0)
    if hi <= 0 or _saturated(n_s, n_t, e_b, hi):
        return None
    target = math.log2(budget)
    f = lambda t: log2_p_theta_bound(n_s, n_t, e_b, t) - target  # noqa: E731
    if f(hi) > 0:
        return None
    lo = hi * 1e-12
    if f(lo) <= 0:
        return lo
    # f is nonincreasing; return the right end so the budget is always met
    t = brentq(f, lo, hi, xtol=1e-14, rtol=1e-12, maxiter=200)
    step = max(abs(t) * 1e-12, 1e-15)
    while f(t) > 0:
        t = min(hi, t + step)
        step *= 2
    return t


@dataclass(frozen=True)
class PhaseEstimate:
    """Phase-error deviations for both bases and their failure probabilities.

    ``theta_x`` pads the X bit-error rate and so bounds the Z phase error;
    ``theta_z`` pads the Z rate and bounds the X phase error.
    """

    theta_x: float
    theta_z: float
    p_theta_x: float
    p_theta_z: float

    @property
    def eps_ph(self) -> float:
        return self.p_theta_x + self.p_theta_z


def estimate_phase(n_x, n_z, e_bx, e_bz, theta_x, theta_z) -> PhaseEstimate:
    return PhaseEstimate(
        theta_x,
        theta_z,
        p_theta_bound(n_x, n_z, e_bx, theta_x),
        p_theta_bound(n_z, n_x, e_bz, theta_z),
    )


def eps_ph_total(n_x, n_z, e_bx, e_bz, theta_x, theta_z) -> float:
    return estimate_phase(n_x, n_z, e_bx, e_bz, theta_x, theta_z).eps_ph


def hypergeometric_tail_oracle(n_s: int, n_t: int, errors: int, theta) -> Fraction:
    """Exact P[target rate > effective sample rate + theta] for E errors placed uniformly.

    ``theta`` may be a float or a Fraction; floats are converted exactly.
    The zero-error substitution is applied to the sample rate.
    """
    if n_s < 1 or n_t < 1:
        raise ValueError("sample and target sizes must be >= 1")
    total = n_s + n_t
    if total > ORACLE_MAX_SIZE:
        raise ValueError(f"oracle limited to n_s + n_t <= {ORACLE_MAX_SIZE}")
    if not 0 <= errors <= total:
        raise ValueError("error count out of range")
    th = Fraction(theta)
    hits = 0
    for k in range(max(0, errors - n_t), min(errors, n_s) + 1):
        sample = Fraction(k, n_s) if k else Fraction(1, n_s)
        if Fraction(errors - k, n_t) > sample + th:
            hits += comb(n_s, k) * comb(n_t, errors - k)
    return Fraction(hits, comb(total, errors))


def tail_outcomes(n_s: int, n_t: int, errors: int, theta) -> list[int]:
    """Sample error counts k for which the tail event holds."""
    th = Fraction(theta)
    out = []
    for k in range(max(0, errors - n_t), min(errors, n_s) + 1):
        sample = Fraction(k, n_s) if k else Fraction(1, n_s)
        if Fraction(errors - k, n_t) > sample + th:
            out.append(k)
    return out
