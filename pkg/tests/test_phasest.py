import math
from fractions import Fraction

import numpy as np
import pytest
from scipy.stats import hypergeom

from qkdpost.phasest import (
    binary_entropy,
    effective_rate,
    estimate_phase,
    hypergeometric_tail_oracle,
    log2_p_theta_bound,
    log2_p_theta_raw,
    phase_entropy,
    p_theta_bound,
    tail_outcomes,
    theta_for_budget,
    xi,
)


def test_entropy_values():
    assert binary_entropy(0) == binary_entropy(1) == 0.0
    assert binary_entropy(0.5) == 1.0
    assert binary_entropy(0.04) == pytest.approx(0.24229218908241476, rel=1e-14)
    assert 1 - 2 * binary_entropy(0.04) == pytest.approx(0.5154156218, abs=1e-10)
    with pytest.raises(ValueError):
        binary_entropy(1.5)


def test_phase_entropy_caps_at_one_bit():
    assert phase_entropy(0.04) == binary_entropy(0.04)
    assert phase_entropy(0.5) == phase_entropy(0.7) == phase_entropy(1.0) == 1.0


def test_xi_value_and_sign():
    assert xi(0.0107, 0.04, 0.998) == pytest.approx(3.9677787787058e-6, rel=1e-9)
    assert xi(0, 0.04, 0.5) == 0
    for th in (1e-4, 1e-2, 0.3):
        assert xi(th, 0.04, 0.5) > 0


def test_effective_rate():
    assert effective_rate(0, 200) == 1 / 200
    assert effective_rate(0.03, 200) == 0.03


def test_worked_bound_value():
    assert p_theta_bound(9.98e6, 2e4, 0.04, 0.0107) == pytest.approx(4.1072e-14, rel=1e-4)


def test_bound_monotone_in_theta():
    prev = 1.0
    for th in np.linspace(0.001, 0.05, 40):
        v = p_theta_bound(1e5, 1e5, 0.03, float(th))
        assert v <= prev
        prev = v


def test_bound_saturates_near_one():
    assert p_theta_bound(10, 10, 0.5, 0.45) == 1.0
    assert log2_p_theta_bound(10, 10, 0.5, 0.45) == 0.0


def test_bound_input_checks():
    with pytest.raises(ValueError):
        p_theta_bound(0, 10, 0.1, 0.1)
    with pytest.raises(ValueError):
        p_theta_bound(10, 10, 0.1, -0.1)


def test_theta_for_budget_meets_budget_tightly():
    for n_s, n_t, e in ((1e5, 1e5, 0.03), (9.98e6, 2e4, 0.04), (2e4, 9.98e6, 0.04), (500, 500, 0.0)):
        for budget in (1e-3, 1e-10, 1e-20):
            th = theta_for_budget(n_s, n_t, e, budget)
            if th is None:
                continue
            assert p_theta_bound(n_s, n_t, e, th) <= budget
            assert p_theta_bound(n_s, n_t, e, th * (1 - 1e-6)) > budget * (1 - 1e-6)


def test_theta_for_budget_none_when_hopeless():
    assert theta_for_budget(5, 5, 0.2, 1e-30) is None


def test_estimate_phase_cross_pairing():
    est = estimate_phase(1e5, 2e5, 0.02, 0.03, 0.01, 0.005)
    assert est.p_theta_x == p_theta_bound(1e5, 2e5, 0.02, 0.01)
    assert est.p_theta_z == p_theta_bound(2e5, 1e5, 0.03, 0.005)
    assert est.eps_ph == est.p_theta_x + est.p_theta_z


def test_oracle_golden():
    assert hypergeometric_tail_oracle(10, 10, 4, 0.1) == Fraction(94, 323)


def _scipy_tail(n_s, n_t, errors, theta):
    total = n_s + n_t
    p = 0.0
    for k in tail_outcomes(n_s, n_t, errors, theta):
        p += hypergeom.pmf(k, total, errors, n_s)
    return p


def test_oracle_matches_scipy():
    for case in ((10, 10, 4, 0.1), (6, 9, 3, 0.05), (12, 12, 6, 0.2), (4, 8, 3, 0.05), (15, 15, 9, 0.0)):
        assert float(hypergeometric_tail_oracle(*case)) == pytest.approx(_scipy_tail(*case), rel=1e-12)


def test_oracle_size_limit():
    with pytest.raises(ValueError):
        hypergeometric_tail_oracle(20, 20, 3, 0.1)


def test_guarded_bound_holds_on_small_sweep():
    for n_s in range(2, 12):
        for n_t in range(2, 12):
            for errors in range(n_s + n_t + 1):
                for th in (0.02, 0.1, 0.25, 0.5):
                    exact = float(hypergeometric_tail_oracle(n_s, n_t, errors, th))
                    if exact == 0:
                        continue
                    worst = max(
                        p_theta_bound(n_s, n_t, k / n_s, th) if k / n_s + th <= 1 else 1.0
                        for k in tail_outcomes(n_s, n_t, errors, th)
                    )
                    assert exact <= worst * (1 + 1e-9)


def test_raw_form_log_finite_at_large_sizes():
    v = log2_p_theta_raw(1e9, 1e9, 0.02, 0.01)
    assert math.isfinite(v) and v < -1e5
