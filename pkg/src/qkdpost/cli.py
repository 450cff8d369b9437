"""Command-line entry point: ``qkdpost {plan,simulate,run,oracle}``.

Each report-producing command writes tab-separated tables and PNG figures
to ``--out`` and prints the main table to stdout.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np

from . import fileio, report
from .budget import KeyPool
from .channel import ChannelModel, simulate_quantum_exchange
from .oracle import (
    auth_collision_enumeration,
    crosscheck_grid_vs_library,
    hypergeometric_golden,
    tail_bound_sweep,
    theta_grid,
    toeplitz_golden,
)
from .planner import optimize_plan, plan_for_split, px_from_qx, sift_split
from .session import Status, run_session

EXIT = {
    Status.SUCCESS: 0,
    Status.INFEASIBLE: 10,
    Status.AUTH_FAIL: 11,
    Status.VERIFY_FAIL: 12,
    Status.POOL_EXHAUSTED: 13,
}
EXIT_ORACLE_FAIL = 1


def _outdir(path: str) -> Path:
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _print_tsv(rows: list[dict]) -> None:
    keys = list(rows[0])
    print("\t".join(keys))
    for r in rows:
        print("\t".join(fileio._fmt(r.get(k)) for k in keys))


def _kv_rows(d: dict) -> list[dict]:
    rows = []
    for k, v in d.items():
        if isinstance(v, dict):
            rows += [{"quantity": f"{k}.{kk}", "value": vv} for kk, vv in v.items()]
        else:
            rows.append({"quantity": k, "value": v})
    return rows


def cmd_plan(args) -> int:
    params, _, _ = fileio.load_config(args.config)
    out = _outdir(args.out)
    n = args.n if args.n else params.n_expected
    plan = optimize_plan(params, n=n, optimize_q=not args.fixed_px)
    rows = _kv_rows(plan.as_dict())
    fileio.write_tsv(out / "plan.tsv", rows)
    (out / "plan.json").write_text(json.dumps(plan.as_dict(), indent=2) + "\n")
    scan = []
    for q in (0.5, 0.8, 0.9, 0.95, 0.98, 0.99, 0.995, 0.998, 0.999, 0.9995):
        n_x, n_z = sift_split(n, px_from_qx(q))
        p = plan_for_split(params, n, n_x, n_z, params.e_bx_cal, params.e_bz_cal)
        scan.append({"q_x": q, "net_key": p.net_key if p.feasible else 0, "l": p.l,
                     "theta_x": p.theta_x, "theta_z": p.theta_z})
    fileio.write_tsv(out / "plan_q_scan.tsv", scan)
    if plan.feasible:
        report.plot_q_scan(scan, plan, out)
        report.plot_theta_bounds(plan, out)
    _print_tsv(rows)
    return 0 if plan.feasible else EXIT[Status.INFEASIBLE]


def cmd_simulate(args) -> int:
    params, channel, _ = fileio.load_config(args.config)
    if channel is None:
        print("config has no channel section", file=sys.stderr)
        return 2
    seed = channel.seed if args.seed is None else args.seed
    table = simulate_quantum_exchange(params.N, params.p_x, channel, np.random.default_rng(seed))
    fileio.write_detections(args.out, table)
    print(f"pulses\t{table.n_pulses}\nrows\t{len(table)}")
    return 0


def cmd_run(args) -> int:
    params, channel, session = fileio.load_config(args.config)
    out = _outdir(args.out)
    if channel is None:
        channel = ChannelModel(eta=params.eta, qber_x=params.e_bx_cal, qber_z=params.e_bz_cal)
    if args.pool:
        pool_a = fileio.read_pool(args.pool)
    else:
        pool_a = fileio.fresh_pool(args.pool_bits, np.random.default_rng(args.pool_seed))
    pool_b = pool_a.copy()
    detections = fileio.read_detections(args.detections) if args.detections else None
    outcome = run_session(params, channel, pool_a, pool_b, config=session, detections=detections, seed=args.seed)
    summary = outcome.summary()
    rows = _kv_rows(summary)
    fileio.write_tsv(out / "run.tsv", rows)
    (out / "outcome.json").write_text(json.dumps(summary, indent=2, default=str) + "\n")
    (out / "transcript.jsonl").write_text(outcome.transcript.to_jsonl())
    fileio.write_pool(out / "pool_after.pool", KeyPool(pool_a.unused()))
    if outcome.status is Status.SUCCESS:
        # the new key can seed the next session's pool
        fileio.write_pool(out / "final_key_alice.pool", KeyPool(outcome.alice_key, 0))
        fileio.write_pool(out / "final_key_bob.pool", KeyPool(outcome.bob_key, 0))
        report.plot_pool_usage(outcome, out)
    _print_tsv(rows)
    return EXIT[outcome.status]


def cmd_oracle(args) -> int:
    out = _outdir(args.out)
    sweep = tail_bound_sweep(args.max_total, theta_grid(args.theta_step), keep_rows=True)
    fileio.write_tsv(out / "oracle_tail_sweep.tsv", [r.__dict__ for r in sweep.rows])
    coll = [auth_collision_enumeration(k, m) for k, m in ((4, 8), (8, 8))]
    summary = [
        {"check": "tail_bound_violations", "value": sweep.violations, "pass": sweep.violations == 0},
        {"check": "tail_cases", "value": sweep.cases, "pass": True},
        {"check": "tail_nonzero_cases", "value": sweep.nonzero_cases, "pass": True},
        {"check": "raw_form_violations", "value": sweep.raw_violations, "pass": True},
        {"check": "raw_form_min_rate", "value": sweep.raw_violation_min_rate, "pass": True},
        {"check": "grid_vs_library_log2_gap", "value": crosscheck_grid_vs_library(), "pass": True},
    ]
    for c in coll:
        summary.append({"check": f"collision_k{c.k}_m{c.m}", "value": c.max_fraction,
                        "pass": c.max_fraction <= c.bound})
    fileio.write_tsv(out / "oracle_summary.tsv", summary)
    fileio.write_tsv(out / "golden_hypergeometric.tsv", hypergeometric_golden())
    fileio.write_tsv(out / "golden_toeplitz.tsv", toeplitz_golden())
    report.plot_tail_sweep(sweep.rows, out)
    _print_tsv(summary)
    return 0 if all(r["pass"] for r in summary) else EXIT_ORACLE_FAIL


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="qkdpost", description="BB84 post-processing planner and simulator")
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("plan", help="optimize parameters and write a plan report")
    p.add_argument("config")
    p.add_argument("--out", "-o", default="plan_out")
    p.add_argument("--n", type=float, help="raw key length (default N·eta)")
    p.add_argument("--fixed-px", action="store_true", help="keep p_x from the config")
    p.set_defaults(func=cmd_plan)

    s = sub.add_parser("simulate", help="write a detections file from the channel model")
    s.add_argument("config")
    s.add_argument("--out", "-o", default="detections.tsv")
    s.add_argument("--seed", type=int)
    s.set_defaults(func=cmd_simulate)

    r = sub.add_parser("run", help="run a full two-party session")
    r.add_argument("config")
    r.add_argument("--out", "-o", default="run_out")
    r.add_argument("--pool", help="pre-shared pool file (both sides get a copy)")
    r.add_argument("--pool-bits", type=int, default=200_000, help="size of a fresh pool when --pool is absent")
    r.add_argument("--pool-seed", type=int, default=0)
    r.add_argument("--detections", help="detections file (default: simulate)")
    r.add_argument("--seed", type=int)
    r.set_defaults(func=cmd_run)

    o = sub.add_parser("oracle", help="run the brute-force validation suites")
    o.add_argument("--out", "-o", default="oracle_out")
    o.add_argument("--max-total", type=int, default=24)
    o.add_argument("--theta-step", type=float, default=0.005)
    o.set_defaults(func=cmd_oracle)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    return args.func(args)


if __name__ == "__main__":
    sys.exit(main())
