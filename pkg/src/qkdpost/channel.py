"""Simulated BB84 quantum layer: which pulses click and what Bob reads."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sift import Basis, Click, DetectionTable


@dataclass(frozen=True)
class ChannelModel:
    """Lossy, noisy channel plus detector.

    A pulse clicks with probability ``eta``; an extra noise click appears
    with probability ``dark_like_noise`` and reads a uniform bit. Matched
    basis bits flip with the basis's QBER. A click is a double click with
    probability ``double_click_prob``.
    """

    eta: float
    qber_x: float = 0.0
    qber_z: float = 0.0
    double_click_prob: float = 0.0
    dark_like_noise: float = 0.0
    seed: int = 0
    passive: bool = False

    def __post_init__(self):
        for name in ("eta", "qber_x", "qber_z", "double_click_prob", "dark_like_noise"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")

    @property
    def click_prob(self) -> float:
        return 1 - (1 - self.eta) * (1 - self.dark_like_noise)


def simulate_quantum_exchange(n_pulses: int, p_x: float, model: ChannelModel,
                              rng: np.random.Generator | None = None) -> DetectionTable:
    """Simulate ``n_pulses`` pulses; only clicking pulses get a row.

    Both sides choose X with probability ``p_x``. Click positions are drawn
    as a binomial count followed by a uniform subset, so N = 10⁸ costs
    memory only for the ~N·eta clicks.
    """
    if rng is None:
        rng = np.random.default_rng(model.seed)
    c = int(rng.binomial(n_pulses, model.click_prob))
    pulse = np.sort(rng.choice(n_pulses, size=c, replace=False)).astype(np.int64)
    a_bit = rng.integers(0, 2, c, dtype=np.uint8)
    a_basis = np.where(rng.random(c) < p_x, Basis.X, Basis.Z).astype(np.uint8)
    b_basis = np.where(rng.random(c) < p_x, Basis.X, Basis.Z).astype(np.uint8)
    # a click is signal with probability eta / click_prob, otherwise noise
    signal = rng.random(c) * model.click_prob < model.eta
    qber = np.where(a_basis == Basis.X, model.qber_x, model.qber_z)
    flip = (rng.random(c) < qber).astype(np.uint8)
    b_bit = np.where(signal & (a_basis == b_basis), a_bit ^ flip, rng.integers(0, 2, c, dtype=np.uint8))
    double = rng.random(c) < model.double_click_prob
    click = np.where(double, Click.DOUBLE, Click.SINGLE).astype(np.uint8)
    b_bit = np.where(double, 0, b_bit).astype(np.uint8)
    return DetectionTable(a_bit, a_basis, click, b_basis, b_bit, pulse, n_pulses)
