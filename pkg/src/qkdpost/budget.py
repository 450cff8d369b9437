"""Pre-shared key pool, failure budget, and secondary-cost arithmetic."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

from .authmac import auth_failure_prob
from .gf2core import BitString

DEFAULT_MATRIX_RESERVE = 512


class PoolExhausted(RuntimeError):
    pass


@dataclass
class KeyPool:
    """Pre-shared secret bits, consumed strictly in order.

    The first ``matrix_reserve`` bits hold the reusable authentication matrix
    keys (half per direction). They are never charged as consumption; every
    other draw is recorded in ``ledger`` and never reused.
    """

    bits: BitString
    matrix_reserve: int = DEFAULT_MATRIX_RESERVE
    drawn: int = 0
    ledger: list[tuple[str, int]] = field(default_factory=list)

    def __post_init__(self):
        if self.matrix_reserve % 2 or self.matrix_reserve > self.bits.length:
            raise ValueError("matrix reserve must be even and fit in the pool")

    @property
    def capacity(self) -> int:
        return self.bits.length - self.matrix_reserve

    @property
    def remaining(self) -> int:
        return self.capacity - self.drawn

    def draw(self, n: int, purpose: str) -> BitString:
        if n < 0:
            raise ValueError("cannot draw a negative amount")
        if n > self.remaining:
            raise PoolExhausted(f"{purpose}: need {n} bits, {self.remaining} left")
        start = self.matrix_reserve + self.drawn
        out = self.bits[start : start + n]
        self.drawn += n
        self.ledger.append((purpose, n))
        return out

    def matrix_key(self, k: int, direction: int = 0) -> BitString:
        """Reusable 2k-bit Toeplitz key for ``direction`` 0 (Alice→Bob) or 1 (Bob→Alice)."""
        half = self.matrix_reserve // 2
        if 2 * k > half:
            raise ValueError(f"tag length {k} needs a {2 * k}-bit matrix key; reserve has {half} per direction")
        start = direction * half
        return self.bits[start : start + 2 * k]

    def spent(self, prefix: str = "") -> int:
        return sum(n for p, n in self.ledger if p.startswith(prefix))

    def copy(self) -> "KeyPool":
        return KeyPool(self.bits, self.matrix_reserve, self.drawn, list(self.ledger))

    def unused(self) -> BitString:
        """Reserve plus undrawn bits: what carries over to the next session."""
        return self.bits[: self.matrix_reserve] + self.bits[self.matrix_reserve + self.drawn :]


@dataclass(frozen=True)
class ProtocolParams:
    """Tunables and calibration estimates fixed before a run."""

    N: int
    eta: float
    e_bx_cal: float
    e_bz_cal: float
    eps_target: float
    p_x: float = 0.5
    f_model: float | Callable[[float], float] = 1.0

    def __post_init__(self):
        if not 0 < self.eta <= 1:
            raise ValueError("eta must lie in (0, 1]")
        for e in (self.e_bx_cal, self.e_bz_cal):
            if not 0 <= e <= 0.5:
                raise ValueError("calibration error rates must lie in [0, 0.5]")
        if not 0 < self.eps_target < 1:
            raise ValueError("eps_target must lie in (0, 1)")
        if not 0 < self.p_x < 1:
            raise ValueError("p_x must lie in (0, 1)")

    @property
    def n_expected(self) -> float:
        return self.N * self.eta

    def efficiency(self, e: float) -> float:
        return self.f_model(e) if callable(self.f_model) else float(self.f_model)


@dataclass(frozen=True)
class FailureBudget:
    eps_bs: float
    eps_ev: float
    eps_ph: float
    eps_pa: float
    eps_total: float = field(init=False)

    def __post_init__(self):
        object.__setattr__(self, "eps_total", 2 * self.eps_bs + self.eps_ev + self.eps_ph + self.eps_pa)

    def as_dict(self) -> dict:
        return {
            "eps_bs": self.eps_bs,
            "eps_ev": self.eps_ev,
            "eps_ph": self.eps_ph,
            "eps_pa": self.eps_pa,
            "eps_total": self.eps_total,
        }


def net_key_length(l: int, k_bs: int, k_ec: int, k_ev: int, k_pa: int) -> int:
    """Net key growth l - 2k_bs - k_ec - k_ev - k_pa; negative means the run lost key."""
    if min(l, k_bs, k_ec, k_ev, k_pa) < 0:
        raise ValueError("lengths and costs must be non-negative")
    return l - 2 * k_bs - k_ec - k_ev - k_pa


def a_term(n: float, n_ev: float, l: float, n_pa: float | None = None) -> float:
    """A = n²·n_ev·(n_pa + l - 1): product of the four authenticated message lengths."""
    if n_pa is None:
        n_pa = n_ev
    return float(n) ** 2 * float(n_ev) * max(1.0, float(n_pa) + float(l) - 1)


def eps3(k3: float, A: float) -> float:
    """Grouped failure probability 5·A^(1/5)·2^(-(k3-4)/5) of the optimized secondary costs."""
    if A < 1 or k3 <= 4:
        raise ValueError("need A >= 1 and k3 > 4")
    return 5.0 * 2.0 ** (math.log2(A) / 5 - (k3 - 4) / 5)


def k3_shortcut(eps: float, n: float) -> int:
    """ceil(-5·log2(eps) + 4·log2(n) + 50)."""
    if not 0 < eps < 1 or n < 1:
        raise ValueError("need 0 < eps < 1 and n >= 1")
    return math.ceil(-5 * math.log2(eps) + 4 * math.log2(n) + 50)


@dataclass(frozen=True)
class GroupedCosts:
    t_oe: int
    k_bs: int
    k_ev: int
    k_pa: int
    t_oe_exact: float

    @property
    def k3(self) -> int:
        return 2 * self.k_bs + self.k_ev + self.k_pa + self.t_oe


def grouped_costs(k3: float, n: float, n_ev: float, l: float, n_pa: float | None = None) -> GroupedCosts:
    """Split a k3 budget into (t_oe, k_bs, k_ev, k_pa) by the optimal closed forms, each ceiled."""
    if n_pa is None:
        n_pa = n_ev
    A = a_term(n, n_ev, l, n_pa)
    t = k3 / 5 - 4 / 5 - math.log2(A) / 5
    if t < 1:
        raise ValueError(f"k3={k3} leaves t_oe={t:.3f} < 1; infeasible")
    return GroupedCosts(
        t_oe=math.ceil(t),
        k_bs=math.ceil(t + 1 + math.log2(n)),
        k_ev=math.ceil(t + 1 + math.log2(n_ev)),
        k_pa=math.ceil(t + 1 + math.log2(max(1.0, n_pa + l - 1))),
        t_oe_exact=t,
    )


def secondary_eps(n: float, n_ev: float, n_pa: float, l: float, costs: GroupedCosts) -> float:
    """2ε_bs + ε_ev + ε_pa recomputed from rounded costs (the realized ε3)."""
    eps_bs = auth_failure_prob(max(1, round(n)), costs.k_bs)
    eps_ev = auth_failure_prob(max(1, round(n_ev)), costs.k_ev)
    eps_pa = auth_failure_prob(max(1, round(n_pa + l - 1)), costs.k_pa) + 2.0 ** -costs.t_oe
    return 2 * eps_bs + eps_ev + eps_pa
