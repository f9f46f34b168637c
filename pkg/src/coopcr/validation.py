"""Pass/fail battery behind ``coopcr validate``.

Each check yields ``Row`` records; the CLI prints them as CSV.  ``quick``
covers the small quadrature grid and flow-graph identities, ``full`` adds
the simulator runs, figure trends, optimal-q anchors and determinism.
"""

from __future__ import annotations

import io
import tempfile
import time
from contextlib import redirect_stdout
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from . import sfg
from .configfile import PERFECT, apply_sensing, format_config
from .linkprob import success_best_relay, success_ostbc
from .model import Protocol, Sensing, default_config
from .oracle import ua_quadrature, ub_quadrature
from .performance import (
    optimal_q,
    optimal_q_closed_form,
    q_grid,
    pu_delay,
    pu_delay_phase_type,
    su_throughput_aux,
)
from .protocols import (
    BranchGains,
    branch_gains,
    build_flow_graph,
    fuse_majority,
    pu_throughput,
    pu_throughput_closed_form,
)
from .simcore import SimConfig, simulate

LEVELS = ("quick", "full")
COOPERATIVE = (Protocol.ARC, Protocol.RBRC, Protocol.NRBRC)
TREND_TOL = 1e-12


@dataclass(frozen=True)
class Row:
    check: str
    cell: str
    value: float
    reference: float
    tolerance: float
    passed: bool

    @property
    def delta(self):
        return abs(self.value - self.reference)

    def csv(self):
        return (
            f"{self.check},{self.cell},{self.value:.12g},{self.reference:.12g},"
            f"{self.delta:.3g},{self.tolerance:.3g},{'pass' if self.passed else 'FAIL'}"
        )


CSV_HEADER = "check,cell,value,reference,delta,tolerance,result"


def _close(check, cell, value, ref, tol):
    return Row(check, cell, float(value), float(ref), tol, abs(value - ref) <= tol)


def _flag(check, cell, ok):
    return Row(check, cell, float(bool(ok)), 1.0, 0.0, bool(ok))


def random_configs(count, seed=2024):
    """Randomised link parameters around the baseline, with L = 8."""
    rng = np.random.default_rng(seed)
    out = []
    for _ in range(count):
        out.append(
            default_config(
                L=8,
                P_P=float(rng.uniform(0.05, 1.0)),
                P_S=float(rng.uniform(0.01, 0.5)),
                sigma_N2=float(rng.uniform(0.01, 0.2)),
                beta=float(rng.uniform(0.05, 1.0)),
                sigma_PD2=float(10 ** rng.uniform(-1.5, 0)),
                sigma_SD2=float(10 ** rng.uniform(-1.5, 0)),
            )
        )
    return out


def random_branch_gains(rng, L, with_fresh):
    direct = rng.dirichlet(np.ones(L + 2))
    s_a = rng.uniform(0.05, 1.0, L)
    s_f = float(rng.uniform(0.05, 1.0)) if with_fresh else None
    return BranchGains.from_success(float(direct[0]), direct[2:], s_a, s_f)


# --- individual checks -------------------------------------------------------


def check_ua_quadrature(nmax, configs):
    for k, cfg in enumerate(configs):
        for n in range(nmax + 1):
            for m in range(nmax + 1):
                yield _close(
                    "ua_quadrature", f"cfg{k}:n={n}:m={m}",
                    success_ostbc(n, m, cfg), ua_quadrature(n, m, cfg), 1e-6,
                )


def check_ub_quadrature(nmax, cfg):
    for n in range(1, nmax + 1):
        for m in range(nmax + 1):
            yield _close(
                "ub_quadrature", f"n={n}:m={m}",
                success_best_relay(n, m, cfg), ub_quadrature(n, m, cfg), 1e-6,
            )
    for m in range(nmax + 1):
        yield _close(
            "ub_identity", f"m={m}", success_best_relay(1, m, cfg), success_ostbc(1, m, cfg), 1e-12
        )


def check_sfg(count, seed=7):
    rng = np.random.default_rng(seed)
    for proto in COOPERATIVE:
        worst_thr = worst_h = worst_mason = 0.0
        for _ in range(count):
            L = int(rng.integers(1, 7))
            g = random_branch_gains(rng, L, proto is Protocol.NRBRC)
            graph = build_flow_graph(g, proto)
            lin = sfg.transfer_linear_solve(graph, 1.0)
            mas = sfg.transfer_mason(graph, 1.0)
            worst_thr = max(worst_thr, abs(sfg.throughput(graph) - pu_throughput_closed_form(g, proto)))
            worst_h = max(worst_h, abs(lin.h - 1.0))
            worst_mason = max(worst_mason, abs(lin.h - mas.h), abs(lin.dh - mas.dh) / max(1.0, lin.dh))
        yield _close("sfg_closed_form", proto.value, worst_thr, 0.0, 1e-10)
        yield _close("sfg_H1", proto.value, worst_h, 0.0, 1e-10)
        yield _close("sfg_mason", proto.value, worst_mason, 0.0, 1e-10)


def _sensing_cfg(mode, **kw):
    return apply_sensing(default_config(**kw), mode)


def check_simulator(slots=10**6, replications=4, seed=7):
    sim = SimConfig(slots=slots, seed=seed, replications=replications)
    for proto in Protocol:
        for mode in ("IS", "CS", PERFECT):
            cfg = _sensing_cfg(mode, protocol=proto)
            t = time.perf_counter()
            rep = simulate(cfg, sim)
            elapsed = time.perf_counter() - t
            mu = pu_throughput(cfg)
            est = rep.mu_P_hat
            yield Row("sim_mu_P", f"{proto.value}:{mode}", est.mean, mu, 3 * est.stderr,
                      abs(est.mean - mu) <= 3 * est.stderr and elapsed < 120)


def check_queue(slots=10**6, replications=4, seed=11):
    cfg = default_config()
    mu = pu_throughput(cfg)
    rep = simulate(cfg, SimConfig(slots=slots, warmup=1000, seed=seed, saturated_pu=False,
                                  replications=replications))
    idle = 1 - cfg.lambda_P / mu
    yield Row("queue_idle", "ARC:IS", rep.idle_frac.mean, idle, 3 * rep.idle_frac.stderr,
              abs(rep.idle_frac.mean - idle) <= 3 * rep.idle_frac.stderr)
    d = rep.delay_hat
    ref = pu_delay(cfg.lambda_P, mu)
    yield Row("queue_delay_geometric", "ARC:IS", d.mean, ref, 3 * d.stderr, abs(d.mean - ref) <= 3 * d.stderr)
    es, es2 = sfg.delivery_time_moments(build_flow_graph(branch_gains(cfg), cfg.protocol))
    ref = pu_delay_phase_type(cfg.lambda_P, es, es2)
    yield Row("queue_delay_phase_type", "ARC:IS", d.mean, ref, 3 * d.stderr, abs(d.mean - ref) <= 3 * d.stderr)


def _nondecreasing(xs, tol=TREND_TOL):
    return all(b >= a - tol for a, b in zip(xs, xs[1:]))


def is_unimodal(xs, tol=TREND_TOL):
    """Nondecreasing up to the maximum, nonincreasing after it."""
    xs = list(xs)
    k = int(np.argmax(xs))
    return _nondecreasing(xs[: k + 1], tol) and _nondecreasing(xs[k:][::-1], tol)


def fig4_curves(Ls=range(1, 16)):
    curves = {}
    for mode in ("IS", "CS", PERFECT):
        for proto in Protocol:
            base = default_config(q=0.7, sigma_SD2=10 ** -1.3, protocol=proto)
            curves[mode, proto] = [pu_throughput(apply_sensing(base.replace(L=L), mode)) for L in Ls]
    return curves


def check_fig4():
    curves = fig4_curves()
    order = (Protocol.ARC, Protocol.RBRC, Protocol.NRBRC, Protocol.NC)
    for mode in ("IS", "CS", PERFECT):
        ok = all(
            all(a >= b - TREND_TOL for a, b in zip(curves[mode, hi], curves[mode, lo]))
            for hi, lo in zip(order, order[1:])
        )
        yield _flag("fig4_order", mode, ok)
        for proto in COOPERATIVE:
            yield _flag("fig4_increasing_L", f"{proto.value}:{mode}", _nondecreasing(curves[mode, proto]))
    between = all(
        i - TREND_TOL <= c <= p + TREND_TOL
        for i, c, p in zip(curves["IS", Protocol.ARC], curves["CS", Protocol.ARC], curves[PERFECT, Protocol.ARC])
    )
    yield _flag("fig4_cs_between", "ARC", between)


def fig5_curve(points=61):
    grid = np.logspace(-2, 1, points)
    base = default_config(L=8, q=0.7)
    return grid, [pu_throughput(base.replace(P_S=float(p))) for p in grid]


def check_fig5():
    grid, mu = fig5_curve()
    k = int(np.argmax(mu))
    yield _flag("fig5_unimodal", "IS:ARC:L=8", is_unimodal(mu) and 0 < k < len(mu) - 1)


def fig6_curve(protocol=Protocol.ARC, step=0.01):
    base = default_config(L=15, lambda_P=0.1, protocol=protocol)
    qs = np.round(np.arange(0, 1 + step / 2, step), 10)
    cfgs = [base.replace(q=float(q)) for q in qs]
    return qs, [pu_throughput(c) for c in cfgs], [su_throughput_aux(c) for c in cfgs]


def check_fig6():
    for protocol in (Protocol.ARC, Protocol.NC):
        base = default_config(L=15, lambda_P=0.1, protocol=protocol)
        qs, mu, aux = fig6_curve(protocol)
        unstable = [a for m, a in zip(mu, aux) if m < base.lambda_P]
        support = [a for a in aux if a > 0]
        cell = f"IS:{protocol.value}"
        yield _flag("fig6_zero_when_unstable", cell, all(a == 0 for a in unstable))
        yield _flag("fig6_unimodal_support", cell, is_unimodal(support))
        step = 1e-3
        q_star, _ = optimal_q(base, step)
        grid = q_grid(step)
        values = [su_throughput_aux(base.replace(q=float(q))) for q in grid]
        yield _close("fig6_argmax", cell, q_star, float(grid[int(np.argmax(values))]), 0.0)


def check_optimal_q(Ls=(2, 5, 15), step=1e-3):
    for L in Ls:
        for sensing in (Sensing.IS, Sensing.CS):
            kw = dict(L=L, p_f=0.1, sensing=sensing)
            if sensing is Sensing.IS:
                kw["p_d"] = 1.0
            else:
                kw["p_d_star"] = 1.0
            cfg = default_config(**kw)
            yield _close("optimal_q", f"{sensing.value}:L={L}", optimal_q(cfg, step)[0],
                         optimal_q_closed_form(cfg), step + 1e-12)


def check_fusion():
    yield _flag("fusion", "0.8,3", fuse_majority(Fraction(4, 5), 3) == Fraction(896, 1000))
    yield _flag("fusion", "0.1,3", fuse_majority(Fraction(1, 10), 3) == Fraction(28, 1000))


def check_determinism():
    from .cli import main

    cfg = apply_sensing(default_config(protocol=Protocol.NC), PERFECT)
    with tempfile.TemporaryDirectory() as tmp:
        cpath = Path(tmp, "nc.cfg")
        cpath.write_text(format_config(cfg))
        spath = Path(tmp, "sweep.cfg")
        spath.write_text(format_config(default_config()) +
                         "sweep.variable = L\nsweep.values = 1,2,3\nsweep.protocols = ARC,NRBRC\n"
                         "sweep.sensing = IS,CS\n")

        def run(args):
            buf = io.StringIO()
            with redirect_stdout(buf):
                main(args)
            return buf.getvalue()

        sim_args = ["simulate", str(cpath), "--slots", "20000", "--seed", "3", "--saturated"]
        yield _flag("determinism", "simulate", run(sim_args) == run(sim_args))
        outs = []
        for k in range(2):
            out = Path(tmp, f"out{k}.csv")
            run(["sweep", str(spath), str(out)])
            outs.append(out.read_bytes())
        yield _flag("determinism", "sweep", outs[0] == outs[1])


def run_checks(level):
    if level not in LEVELS:
        raise ValueError(f"level must be one of {LEVELS}")
    base = default_config(L=8)
    if level == "quick":
        yield from check_ua_quadrature(2, [base])
        yield from check_ub_quadrature(2, base)
        yield from check_sfg(10)
        return
    yield from check_ua_quadrature(4, [base, *random_configs(3)])
    yield from check_ub_quadrature(4, base)
    yield from check_sfg(100)
    yield from check_simulator()
    yield from check_queue()
    yield from check_fig4()
    yield from check_fig5()
    yield from check_fig6()
    yield from check_optimal_q()
    yield from check_fusion()
    yield from check_determinism()
