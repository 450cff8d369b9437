"""Parameter optimization for the finite-key post-processing budget.

The search is over the basis bias q_x and the split of the phase-error
budget between the two sampling bounds. Each theta is the exact root of
``P_theta = share``, so every candidate saturates the constraint.
"""

from __future__ import annotations

import functools
import math
from dataclasses import asdict, dataclass, field

from .budget import (
    FailureBudget,
    ProtocolParams,
    a_term,
    eps3,
    grouped_costs,
    k3_shortcut,
)
from .authmac import auth_failure_prob
from .phasest import binary_entropy, effective_rate, p_theta_bound, phase_entropy, theta_for_budget

_GOLDEN = (math.sqrt(5) - 1) / 2
_Q_GRID = (0.5, 0.6, 0.7, 0.8, 0.9, 0.95, 0.97, 0.98, 0.99, 0.995, 0.998, 0.999, 0.9995)
_SPLIT_GRID = tuple(float(z) for z in range(-8, 9))  # log10-odds of the X share


def qx_from_px(p_x: float) -> float:
    return p_x**2 / (p_x**2 + (1 - p_x) ** 2)


def px_from_qx(q_x: float) -> float:
    r = math.sqrt(q_x / (1 - q_x))
    return r / (1 + r)


def sift_split(n: float, p_x: float) -> tuple[float, float]:
    """Expected (n_x, n_z) after basis sift when both sides pick X with probability p_x."""
    return p_x**2 * n, (1 - p_x) ** 2 * n


def basis_brackets(n_x, n_z, e_bx, e_bz, theta_x, theta_z, f_x=1.0, f_z=1.0):
    """Per-basis net contributions n_b[1 - f·H2(e_b) - H2(min(1/2, e_other + θ_other))]."""
    ex_eff = effective_rate(e_bx, max(1, n_x)) if n_x else e_bx
    ez_eff = effective_rate(e_bz, max(1, n_z)) if n_z else e_bz
    bx = n_x * (1 - f_x * binary_entropy(e_bx) - phase_entropy(ez_eff + theta_z))
    bz = n_z * (1 - f_z * binary_entropy(e_bz) - phase_entropy(ex_eff + theta_x))
    return bx, bz


def key_length_bound(n_x, n_z, e_bx, e_bz, theta_x, theta_z, k3, f=1.0) -> float:
    """Rewritten net key length: sum of non-negative basis brackets minus k3."""
    bx, bz = basis_brackets(n_x, n_z, e_bx, e_bz, theta_x, theta_z, f, f)
    return max(bx, 0.0) + max(bz, 0.0) - k3


@dataclass(frozen=True)
class ThetaChoice:
    theta_x: float | None
    theta_z: float | None
    use_x: bool
    use_z: bool
    value: float


@functools.lru_cache(maxsize=65536)
def _theta(n_s, n_t, e_b, share):
    return theta_for_budget(n_s, n_t, e_b, share)


def _golden_max(f, a, b, iters=28):
    c = b - _GOLDEN * (b - a)
    d = a + _GOLDEN * (b - a)
    fc, fd = f(c), f(d)
    for _ in range(iters):
        if fc >= fd:
            b, d, fd = d, c, fc
            c = b - _GOLDEN * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + _GOLDEN * (b - a)
            fd = f(d)
    return (c, fc) if fc >= fd else (d, fd)


def optimize_thetas(n_x, n_z, e_bx, e_bz, budget, value) -> ThetaChoice:
    """Best theta pair under P_θx + P_θz <= budget.

    ``value(theta_x, theta_z)`` returns (bracket_x, bracket_z); a basis with a
    non-positive bracket is dropped, and a dropped basis also frees the
    sampling bound that only served it.
    """
    if budget <= 0:
        return ThetaChoice(None, None, False, False, -math.inf)
    candidates = []

    def both(z):
        s = 1 / (1 + 10 ** (-z))
        tx = _theta(n_x, n_z, e_bx, s * budget)
        tz = _theta(n_z, n_x, e_bz, (1 - s) * budget)
        if tx is None or tz is None:
            return -math.inf
        bx, bz = value(tx, tz)
        return max(bx, 0.0) + max(bz, 0.0)

    if n_x >= 1 and n_z >= 1:
        scores = [both(z) for z in _SPLIT_GRID]
        i = max(range(len(scores)), key=scores.__getitem__)
        if scores[i] > -math.inf:
            lo = _SPLIT_GRID[max(0, i - 1)]
            hi = _SPLIT_GRID[min(len(_SPLIT_GRID) - 1, i + 1)]
            z, best = _golden_max(both, lo, hi)
            if scores[i] > best:
                z, best = _SPLIT_GRID[i], scores[i]
            s = 1 / (1 + 10 ** (-z))
            tx = _theta(n_x, n_z, e_bx, s * budget)
            tz = _theta(n_z, n_x, e_bz, (1 - s) * budget)
            bx, bz = value(tx, tz)
            candidates.append(ThetaChoice(tx, tz, bx > 0, bz > 0, best))

    # X key only: needs the Z sample to bound the X phase error
    if n_x >= 1 and n_z >= 1:
        tz = _theta(n_z, n_x, e_bz, budget)
        if tz is not None:
            bx, _ = value(0.0, tz)
            candidates.append(ThetaChoice(None, tz, bx > 0, False, max(bx, 0.0)))
        tx = _theta(n_x, n_z, e_bx, budget)
        if tx is not None:
            _, bz = value(tx, 0.0)
            candidates.append(ThetaChoice(tx, None, False, bz > 0, max(bz, 0.0)))

    if not candidates:
        return ThetaChoice(None, None, False, False, -math.inf)
    return max(candidates, key=lambda c: (c.value, c.use_x and c.use_z))


@dataclass(frozen=True)
class PlanResult:
    n: float
    n_x: float
    n_z: float
    e_bx: float
    e_bz: float
    q_x: float
    p_x: float
    theta_x: float | None
    theta_z: float | None
    use_x: bool
    use_z: bool
    k3: int
    k3_target: int
    t_oe: int
    k_bs: int
    k_ec: int
    k_ev: int
    k_pa: int
    l: int
    net_key: int
    eps_target: float
    eps_ph_budget: float
    eps3_planned: float
    budget: FailureBudget
    feasible: bool
    diagnostics: str = ""
    rate_bound: float = field(default=0.0)

    def as_dict(self) -> dict:
        d = asdict(self)
        d["budget"] = self.budget.as_dict()
        return d


def _infeasible(params, n, n_x, n_z, e_bx, e_bz, k3, why) -> PlanResult:
    q = n_x / (n_x + n_z) if n_x + n_z else 0.0
    return PlanResult(
        n, n_x, n_z, e_bx, e_bz, q, params.p_x, None, None, False, False, k3, k3, 0, 0, 0, 0, 0, 0, 0,
        params.eps_target, 0.0, 0.0, FailureBudget(0.0, 0.0, 0.0, 0.0), False, why,
    )


def _phase_budget(eps_target, k3, n, n_sift):
    # A is largest at l = n_x + n_z, so this eps3 never undershoots
    return eps_target - eps3(k3, a_term(n, n_sift, n_sift))


def _finalize(params, n, n_x, n_z, e_bx, e_bz, k3, budget_ph, choice: ThetaChoice) -> PlanResult:
    f_x, f_z = params.efficiency(e_bx), params.efficiency(e_bz)
    ex_eff = effective_rate(e_bx, max(1, n_x)) if n_x else e_bx
    ez_eff = effective_rate(e_bz, max(1, n_z)) if n_z else e_bz
    use_x, use_z = choice.use_x, choice.use_z
    x_term = n_x * (1 - phase_entropy(ez_eff + choice.theta_z)) if use_x else 0.0
    z_term = n_z * (1 - phase_entropy(ex_eff + choice.theta_x)) if use_z else 0.0
    n_ev = n_x + n_z
    n_pa = n_x * use_x + n_z * use_z
    l_raw = x_term + z_term
    try:
        l_est = l_raw
        for _ in range(4):
            costs = grouped_costs(k3, n, n_ev, max(1.0, l_est), n_pa)
            l_est = l_raw - costs.t_oe
    except ValueError as exc:
        return _infeasible(params, n, n_x, n_z, e_bx, e_bz, k3, str(exc))
    l = max(0, math.floor(l_raw - costs.t_oe))
    k_ec = math.ceil(n_x * f_x * binary_entropy(e_bx) * use_x + n_z * f_z * binary_entropy(e_bz) * use_z)
    net = l - 2 * costs.k_bs - k_ec - costs.k_ev - costs.k_pa

    p_x_ = p_z_ = 0.0
    if use_z:
        p_x_ = p_theta_bound(n_x, n_z, e_bx, choice.theta_x)
    if use_x:
        p_z_ = p_theta_bound(n_z, n_x, e_bz, choice.theta_z)
    eps_ph = p_x_ + p_z_
    budget = FailureBudget(
        eps_bs=auth_failure_prob(max(1, round(n)), costs.k_bs),
        eps_ev=auth_failure_prob(max(1, round(n_ev)), costs.k_ev),
        eps_ph=eps_ph,
        eps_pa=auth_failure_prob(max(1, round(n_pa + l - 1)), costs.k_pa) + 2.0**-costs.t_oe,
    )
    feasible = l > 0 and net > 0 and eps_ph <= budget_ph * (1 + 1e-9)
    diag = "" if feasible else f"l={l}, net={net}, eps_ph={eps_ph:.3e} vs budget {budget_ph:.3e}"
    q = n_x / n_ev if n_ev else 0.0
    return PlanResult(
        n=n, n_x=n_x, n_z=n_z, e_bx=e_bx, e_bz=e_bz, q_x=q, p_x=px_from_qx(q) if 0 < q < 1 else params.p_x,
        theta_x=choice.theta_x, theta_z=choice.theta_z, use_x=use_x, use_z=use_z,
        k3=costs.k3, k3_target=k3, t_oe=costs.t_oe, k_bs=costs.k_bs, k_ec=k_ec, k_ev=costs.k_ev,
        k_pa=costs.k_pa, l=l, net_key=net, eps_target=params.eps_target, eps_ph_budget=budget_ph,
        eps3_planned=eps3(k3, a_term(n, n_ev, l, n_pa)), budget=budget, feasible=feasible,
        diagnostics=diag, rate_bound=net / n if n else 0.0,
    )


def _value_fn(n_x, n_z, e_bx, e_bz, f_x, f_z):
    def value(tx, tz):
        return basis_brackets(n_x, n_z, e_bx, e_bz, tx, tz, f_x, f_z)

    return value


def plan_for_split(params: ProtocolParams, n: float, n_x: float, n_z: float, e_bx: float, e_bz: float) -> PlanResult:
    """Optimize the thetas for known block sizes and error rates."""
    k3 = k3_shortcut(params.eps_target, n)
    budget_ph = _phase_budget(params.eps_target, k3, n, n_x + n_z)
    f_x, f_z = params.efficiency(e_bx), params.efficiency(e_bz)
    choice = optimize_thetas(n_x, n_z, e_bx, e_bz, budget_ph, _value_fn(n_x, n_z, e_bx, e_bz, f_x, f_z))
    if choice.value == -math.inf:
        return _infeasible(params, n, n_x, n_z, e_bx, e_bz, k3, "no theta pair meets the phase-error budget")
    return _finalize(params, n, n_x, n_z, e_bx, e_bz, k3, budget_ph, choice)


def optimize_plan(
    params: ProtocolParams,
    n: float | None = None,
    observed: tuple[int, int, float, float] | None = None,
    optimize_q: bool = True,
) -> PlanResult:
    """Maximize the net key length.

    Before a run (``observed`` is None) the search covers q_x, with the sift
    sizes tied to the bias; ``optimize_q=False`` keeps ``params.p_x``. After
    verification pass ``observed=(n_x, n_z, e_bx, e_bz)`` to fix everything
    except the thetas.
    """
    if n is None:
        n = params.n_expected
    if observed is not None:
        n_x, n_z, e_bx, e_bz = observed
        return plan_for_split(params, n, n_x, n_z, e_bx, e_bz)

    e_bx, e_bz = params.e_bx_cal, params.e_bz_cal

    def at_q(q):
        n_x, n_z = sift_split(n, px_from_qx(q))
        k3 = k3_shortcut(params.eps_target, n)
        budget_ph = _phase_budget(params.eps_target, k3, n, n_x + n_z)
        f_x, f_z = params.efficiency(e_bx), params.efficiency(e_bz)
        choice = optimize_thetas(n_x, n_z, e_bx, e_bz, budget_ph, _value_fn(n_x, n_z, e_bx, e_bz, f_x, f_z))
        return choice.value

    if not optimize_q:
        n_x, n_z = sift_split(n, params.p_x)
        return plan_for_split(params, n, n_x, n_z, e_bx, e_bz)

    # logit grid, then golden-section between the best grid neighbours
    zs = [math.log10(q / (1 - q)) for q in _Q_GRID]
    vals = [at_q(q) for q in _Q_GRID]
    i = max(range(len(vals)), key=vals.__getitem__)
    if vals[i] == -math.inf:
        return _infeasible(params, n, *sift_split(n, params.p_x), e_bx, e_bz, k3_shortcut(params.eps_target, n),
                           "no bias admits a feasible plan")
    lo, hi = zs[max(0, i - 1)], zs[min(len(zs) - 1, i + 1)]
    z, best = _golden_max(lambda z: at_q(1 / (1 + 10 ** (-z))), lo, hi, iters=22)
    q = 1 / (1 + 10 ** (-z)) if best >= vals[i] else _Q_GRID[i]
    n_x, n_z = sift_split(n, px_from_qx(q))
    plan = plan_for_split(params, n, n_x, n_z, e_bx, e_bz)
    return plan


def asymptotic_key_length(n: float, e_bx: float, e_bz: float, f: float = 1.0) -> float:
    """Net key length with theta -> 0, k3 = 0 and q_x -> 1."""
    return n * (1 - f * binary_entropy(e_bx) - binary_entropy(e_bz))


@dataclass(frozen=True)
class PaChoice:
    """Thetas and final length chosen once n_x, n_z, e_bx, e_bz are exact."""

    theta_x: float | None
    theta_z: float | None
    use_x: bool
    use_z: bool
    l: int
    eps_ph: float
    eps_ph_budget: float

    @property
    def feasible(self) -> bool:
        return self.l > 0


@functools.lru_cache(maxsize=256)
def plan_privacy_amplification(n_x, n_z, e_bx, e_bz, eps_ph_budget, t_oe) -> PaChoice:
    """Maximize the final length l once error correction is paid for.

    The key-correction cost is sunk at this point, so only the PA terms
    enter; a basis whose PA term is not positive is left out of the key.
    """
    if eps_ph_budget <= 0:
        return PaChoice(None, None, False, False, 0, 0.0, eps_ph_budget)
    ex_eff = effective_rate(e_bx, max(1, n_x))
    ez_eff = effective_rate(e_bz, max(1, n_z))

    def value(tx, tz):
        return (n_x * (1 - phase_entropy(ez_eff + tz)),
                n_z * (1 - phase_entropy(ex_eff + tx)))

    choice = optimize_thetas(n_x, n_z, e_bx, e_bz, eps_ph_budget, value)
    if choice.value == -math.inf or not (choice.use_x or choice.use_z):
        return PaChoice(None, None, False, False, 0, 0.0, eps_ph_budget)
    x_term, z_term = value(choice.theta_x or 0.0, choice.theta_z or 0.0)
    l = max(0, math.floor(x_term * choice.use_x + z_term * choice.use_z - t_oe))
    eps_ph = 0.0
    if choice.use_z:
        eps_ph += p_theta_bound(n_x, n_z, e_bx, choice.theta_x)
    if choice.use_x:
        eps_ph += p_theta_bound(n_z, n_x, e_bz, choice.theta_z)
    return PaChoice(choice.theta_x, choice.theta_z, choice.use_x, choice.use_z, l, eps_ph, eps_ph_budget)
