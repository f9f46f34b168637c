"""Command-line front end: ``analyze``, ``sweep``, ``simulate``, ``validate``.

Exit codes: 0 ok, 1 usage or input error, 2 computed but the PU queue is
unstable (``analyze``) or a validation check failed (``validate``).
"""

from __future__ import annotations

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

from . import sfg
from .configfile import ConfigError, apply_sensing, apply_variable, load_config, load_sweep
from .model import Protocol
from .performance import (
    analyze,
    optimal_q,
    pu_delay,
    pu_delay_phase_type,
    stability_check,
    su_throughput_aux,
    su_throughput_bound,
)
from .protocols import branch_gains, build_flow_graph, pu_throughput
from .simcore import SimConfig, format_trace, simulate

EXIT_OK, EXIT_USAGE, EXIT_UNSTABLE = 0, 1, 2
SWEEP_HEADER = "variable,value,protocol,sensing,mu_P,mu_S,mu_S_aux,stable"


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(EXIT_USAGE)


def _fmt(x):
    return f"{x:.12g}"


def _dumps(obj):
    return json.dumps(obj, indent=2, sort_keys=True)


def cmd_analyze(args):
    loaded = load_config(args.config)
    cfg = loaded.config
    report = analyze(cfg, optimize=args.optimize_q, grid_step=args.grid_step)
    out = report.to_dict()
    if loaded.notes:
        out["notes"] = list(loaded.notes)
    print(_dumps(out))
    if args.dump_gains or args.dump_graph:
        if cfg.protocol is Protocol.NC:
            raise ConfigError("NC has no branch gains to dump", None, str(args.config))
        gains = branch_gains(cfg.replace(q=report.q_star) if report.q_star is not None else cfg)
        if args.dump_gains:
            Path(args.dump_gains).write_text(gains.to_json() + "\n")
        if args.dump_graph:
            Path(args.dump_graph).write_text(sfg.dump(build_flow_graph(gains, cfg.protocol)))
    return EXIT_OK if report.stable else EXIT_UNSTABLE


def _sweep_cell(task):
    variable, value, cfg, protocol, mode, optimize = task
    cfg = apply_sensing(apply_variable(cfg, variable, value), mode).replace(protocol=protocol)
    if optimize:
        q_star, _ = optimal_q(cfg)
        cfg = cfg.replace(q=q_star)
    mu_p = pu_throughput(cfg)
    mu_s = su_throughput_bound(cfg, mu_p) if mu_p > 0 else 0.0
    aux = su_throughput_aux(cfg)
    stable = stability_check(cfg.lambda_P, mu_p)
    return (
        f"{variable},{_fmt(value)},{protocol.value},{mode},"
        f"{_fmt(mu_p)},{_fmt(mu_s)},{_fmt(aux)},{str(stable).lower()}"
    )


def cmd_sweep(args):
    spec = load_sweep(args.spec)
    tasks = [
        (spec.variable, v, spec.fixed, p, mode, spec.optimize_q)
        for p in spec.protocols
        for mode in spec.sensing_modes
        for v in spec.values
    ]
    if args.jobs > 1:
        with ProcessPoolExecutor(args.jobs) as pool:
            rows = list(pool.map(_sweep_cell, tasks, chunksize=4))
    else:
        rows = [_sweep_cell(t) for t in tasks]
    text = "\n".join([SWEEP_HEADER, *rows]) + "\n"
    try:
        Path(args.out).write_text(text)
    except OSError as exc:
        print(f"error: cannot write {args.out}: {exc.strerror}", file=sys.stderr)
        return EXIT_USAGE
    for note in spec.notes:
        print(f"note: {note}", file=sys.stderr)
    return EXIT_OK


def _z(est, target):
    return None if target is None else est.z(target)


def _delay_from_moments(cfg):
    """Mean delay from the first two moments of the per-packet service time."""
    if cfg.protocol is Protocol.NC:
        return pu_delay(cfg.lambda_P, pu_throughput(cfg))
    es, es2 = sfg.delivery_time_moments(build_flow_graph(branch_gains(cfg), cfg.protocol))
    return pu_delay_phase_type(cfg.lambda_P, es, es2)


def cmd_simulate(args):
    loaded = load_config(args.config)
    cfg = loaded.config
    try:
        sim = SimConfig(
            slots=args.slots,
            warmup=args.warmup,
            seed=args.seed,
            saturated_pu=args.saturated,
            replications=args.replications,
            join_mid_packet=args.join_mid_packet,
            batches=min(50, max(2, args.slots - args.warmup)),
            workers=args.workers,
        )
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    report = simulate(cfg, sim, trace=bool(args.trace))
    mu_p = pu_throughput(cfg)
    stable = stability_check(cfg.lambda_P, mu_p)
    analytic = {"mu_P": mu_p}
    if not args.saturated:
        analytic["idle_frac"] = 1 - cfg.lambda_P / mu_p if stable else 0.0
        analytic["mu_S_bound"] = su_throughput_bound(cfg, mu_p)
        analytic["D_P"] = pu_delay(cfg.lambda_P, mu_p) if stable else None
        analytic["D_P_service_moments"] = _delay_from_moments(cfg) if stable else None
    target = {
        "mu_P_hat": cfg.lambda_P if not args.saturated and stable else mu_p,
        "idle_frac_hat": analytic.get("idle_frac"),
        "mu_S_bound_hat": analytic.get("mu_S_bound"),
        "delay_hat": analytic.get("D_P"),
    }
    if not args.saturated:
        # in a stable queue the departure rate equals the arrival rate
        analytic["departure_rate"] = target["mu_P_hat"]
    sim_out = report.to_dict()
    z = {
        "mu_P_hat": _z(report.mu_P_hat, target["mu_P_hat"]),
        "idle_frac": _z(report.idle_frac, target["idle_frac_hat"]),
        "mu_S_bound_hat": _z(report.mu_S_bound_hat, target["mu_S_bound_hat"]),
        "delay_hat": _z(report.delay_hat, target["delay_hat"]) if report.delay_hat.n else None,
        "delay_hat_vs_service_moments": (
            _z(report.delay_hat, analytic.get("D_P_service_moments")) if report.delay_hat.n else None
        ),
    }
    out = {"simulation": sim_out, "analytic": analytic, "z": z}
    if loaded.notes:
        out["notes"] = list(loaded.notes)
    print(_dumps(_finite(out)))
    if args.trace:
        Path(args.trace).write_text(format_trace(report, cfg.L))
    return EXIT_OK


def _finite(obj):
    """JSON has no NaN/inf; map them to null."""
    if isinstance(obj, dict):
        return {k: _finite(v) for k, v in obj.items()}
    if isinstance(obj, float) and not (obj == obj and abs(obj) != float("inf")):
        return None
    return obj


def cmd_validate(args):
    from .validation import CSV_HEADER, run_checks

    print(CSV_HEADER)
    ok = True
    for row in run_checks(args.level):
        print(row.csv(), flush=True)
        ok &= row.passed
    return EXIT_OK if ok else EXIT_UNSTABLE


def build_parser():
    p = _Parser(prog="coopcr", description="Stable throughput of cooperative cognitive radio networks.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="PU/SU throughput, stability and delay as JSON")
    a.add_argument("config")
    a.add_argument("--optimize-q", action="store_true", help="grid-search the SU access probability")
    a.add_argument("--grid-step", type=float, default=1e-3)
    a.add_argument("--dump-gains", metavar="PATH", help="write the branch gains as JSON")
    a.add_argument("--dump-graph", metavar="PATH", help="write the flow graph edge list")
    a.set_defaults(func=cmd_analyze)

    s = sub.add_parser("sweep", help="evaluate a sweep file into CSV")
    s.add_argument("spec")
    s.add_argument("out")
    s.add_argument("--jobs", type=int, default=1, help="worker processes")
    s.set_defaults(func=cmd_sweep)

    m = sub.add_parser("simulate", help="slot-level simulation against the analytic values")
    m.add_argument("config")
    m.add_argument("--slots", type=int, default=10**6)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--warmup", type=int, default=0)
    m.add_argument("--saturated", action="store_true", help="keep the PU queue always backlogged")
    m.add_argument("--replications", type=int, default=1)
    m.add_argument("--workers", type=int, default=1, help="threads running replications")
    m.add_argument("--join-mid-packet", action="store_true",
                   help="let listening SUs join an ongoing assisted retransmission")
    m.add_argument("--trace", metavar="PATH", help="write a per-slot trace of replication 0")
    m.set_defaults(func=cmd_simulate)

    v = sub.add_parser("validate", help="oracle and acceptance battery as a CSV table")
    v.add_argument("level")
    v.set_defaults(func=cmd_validate)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command == "validate" and args.level not in ("quick", "full"):
        print(f"error: unknown level {args.level!r} (quick or full)", file=sys.stderr)
        return EXIT_USAGE
    if args.command == "sweep" and args.jobs < 1:
        print("error: --jobs must be positive", file=sys.stderr)
        return EXIT_USAGE
    if args.command == "simulate" and args.workers < 1:
        print("error: --workers must be positive", file=sys.stderr)
        return EXIT_USAGE
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
