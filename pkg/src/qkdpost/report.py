"""Report figures. Each function writes PNG files and returns their paths."""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .phasest import p_theta_bound  # noqa: E402

STYLE = {
    "font.size": 9,
    "axes.labelsize": 9,
    "legend.fontsize": 8,
    "xtick.labelsize": 8,
    "ytick.labelsize": 8,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "figure.dpi": 120,
}


def _save(fig, path: Path) -> Path:
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_q_scan(rows: list[dict], plan, outdir: Path) -> Path:
    """Net key length against the sifted X fraction q_x."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3))
        q = np.array([r["q_x"] for r in rows])
        v = np.array([r["net_key"] for r in rows], dtype=float)
        ax.semilogx(1 - q, v, "o-", ms=3, color="k")
        ax.axvline(1 - plan.q_x, color="tab:red", lw=0.8, ls="--", label=f"chosen q_x={plan.q_x:.4f}")
        ax.set_xlabel("1 - q_x")
        ax.set_ylabel("net key (bits)")
        ax.legend(frameon=False)
        return _save(fig, Path(outdir) / "plan_q_scan.png")


def plot_theta_bounds(plan, outdir: Path) -> Path:
    """P_theta for both samples with the chosen thetas and the phase-error budget."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3))
        hi = 1.6 * max(plan.theta_x or 0.01, plan.theta_z or 0.01)
        th = np.linspace(hi / 200, hi, 120)
        for label, n_s, n_t, e, chosen, c in (
            ("X sample", plan.n_x, plan.n_z, plan.e_bx, plan.theta_x, "tab:blue"),
            ("Z sample", plan.n_z, plan.n_x, plan.e_bz, plan.theta_z, "tab:orange"),
        ):
            if n_s < 1 or n_t < 1:
                continue
            p = [max(p_theta_bound(n_s, n_t, e, t), 1e-300) for t in th]
            ax.semilogy(th * 100, p, color=c, label=label)
            if chosen:
                ax.axvline(chosen * 100, color=c, lw=0.8, ls=":")
        ax.axhline(plan.eps_ph_budget, color="k", lw=0.8, ls="--", label="phase budget")
        ax.set_ylim(max(plan.eps_ph_budget * 1e-6, 1e-300), 2)
        ax.set_xlabel("theta (%)")
        ax.set_ylabel("P_theta bound")
        ax.legend(frameon=False)
        return _save(fig, Path(outdir) / "plan_theta_bounds.png")


def plot_pool_usage(outcome, outdir: Path) -> Path:
    """Pre-shared key spent per step next to the final length."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3))
        c = outcome.costs
        labels = ["basis", "ec", "ev", "pa", "final l"]
        vals = [2 * c.k_bs, c.k_ec, sum(c.k_ev), c.k_pa, outcome.l] if c else [0, 0, 0, 0, 0]
        colors = ["0.5"] * 4 + ["tab:green"]
        ax.bar(labels, vals, color=colors)
        ax.set_yscale("symlog", linthresh=100)
        ax.set_ylabel("bits")
        ax.set_title(f"{outcome.status.value}, net {outcome.net_key}")
        return _save(fig, Path(outdir) / "run_pool_usage.png")


def plot_tail_sweep(rows, outdir: Path) -> Path:
    """Exact tail against both forms of the bound, one point per case with a non-empty tail."""
    with plt.rc_context(STYLE):
        fig, ax = plt.subplots(figsize=(4.5, 3.2))
        exact = np.array([r.exact for r in rows])
        raw = np.array([r.raw_bound for r in rows])
        guard = np.array([r.bound for r in rows])
        ax.loglog(raw, exact, ".", ms=1, color="0.6", label="closed form")
        sat = guard > raw
        ax.loglog(guard[sat], exact[sat], ".", ms=2, color="tab:red", label="saturated (bound = 1)")
        lo = max(1e-12, min(exact.min(), raw.min()))
        ax.plot([lo, 1], [lo, 1], "k-", lw=0.6)
        ax.set_xlim(lo, 2)
        ax.set_ylim(lo, 2)
        ax.set_xlabel("bound")
        ax.set_ylabel("exact tail")
        ax.legend(frameon=False, loc="upper left")
        return _save(fig, Path(outdir) / "oracle_tail_sweep.png")
