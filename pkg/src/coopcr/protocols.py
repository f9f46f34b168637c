"""Branch gains of the per-packet flow graphs and the resulting PU throughput.

For a packet at the PU the graph has a direct state P, assist states A_n
(n SUs hold the failed packet) and, for NR-BRC, a fresh-attempt state F.
Gains are built for individual sensing (each SU decides alone) and
cooperative sensing (one fused decision shared by all SUs).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Optional

import numpy as np

from . import sfg
from .linkprob import (
    success_best_relay,
    success_ostbc,
    su_reception_prob,
)
from .model import Protocol, Sensing, SystemConfig

_EXACT_COMB_MAX = 64


class UnstableProtocolError(ValueError):
    """A reachable assist or fresh-attempt state can never deliver the packet."""


def binom_pmf(n, p):
    """Vector of Binomial(n, p) probabilities for k = 0..n."""
    k = np.arange(n + 1)
    if n <= _EXACT_COMB_MAX:
        comb = np.array([math.comb(n, i) for i in k], dtype=float)
        return comb * np.power(p, k) * np.power(1.0 - p, n - k)
    if p in (0.0, 1.0):
        out = np.zeros(n + 1)
        out[0 if p == 0.0 else n] = 1.0
        return out
    logc = np.array([math.lgamma(n + 1) - math.lgamma(i + 1) - math.lgamma(n - i + 1) for i in k])
    return np.exp(logc + k * math.log(p) + (n - k) * math.log1p(-p))


def fuse_majority(p, L):
    """Majority-rule fused probability: at least ceil(L/2) of L users agree.

    Works with floats or ``fractions.Fraction`` inputs.
    """
    if not 0 <= p <= 1:
        raise ValueError(f"p must lie in [0, 1], got {p!r}")
    if L < 1:
        raise ValueError("L must be >= 1")
    one = Fraction(1) if isinstance(p, Fraction) else 1.0
    return sum(
        math.comb(L, n) * p**n * (one - p) ** (L - n)
        for n in range(-(-L // 2), L + 1)
    )


def fused_probabilities(cfg: SystemConfig):
    """(p_d*, p_f*) for cooperative sensing."""
    pd = cfg.p_d_star if cfg.p_d_star is not None else fuse_majority(cfg.p_d, cfg.L)
    pf = cfg.p_f_star if cfg.p_f_star is not None else fuse_majority(cfg.p_f, cfg.L)
    return pd, pf


@dataclass(frozen=True)
class BranchGains:
    s_na: float
    s_bar_na: float
    s_ps: tuple
    s_a: tuple
    s_bar_a: tuple
    s_f: Optional[float] = None
    tol: float = field(default=1e-12, repr=False, compare=False)

    def __post_init__(self):
        for name in ("s_ps", "s_a", "s_bar_a"):
            object.__setattr__(self, name, tuple(float(v) for v in getattr(self, name)))
        if not len(self.s_ps) == len(self.s_a) == len(self.s_bar_a) >= 1:
            raise ValueError("s_ps, s_a and s_bar_a must have the same length L >= 1")
        values = [self.s_na, self.s_bar_na, *self.s_ps, *self.s_a, *self.s_bar_a]
        if self.s_f is not None:
            values.append(self.s_f)
        if any(not (0.0 <= v <= 1.0) for v in values):
            raise ValueError(f"branch gain outside [0, 1]: {values}")
        if abs(self.s_na + self.s_bar_na + math.fsum(self.s_ps) - 1.0) > self.tol:
            raise ValueError("direct-state gains do not sum to one")
        for a, b in zip(self.s_a, self.s_bar_a):
            if abs(a + b - 1.0) > self.tol:
                raise ValueError("assist-state gains do not sum to one")

    @property
    def L(self):
        return len(self.s_ps)

    @property
    def s_bar_f(self):
        return None if self.s_f is None else 1.0 - self.s_f

    @classmethod
    def from_success(cls, s_na, s_ps, s_a, s_f=None):
        """Fill in the failure gains from the conservation identities."""
        s_ps = [float(v) for v in s_ps]
        s_a = [min(max(float(v), 0.0), 1.0) for v in s_a]
        s_bar_na = 1.0 - s_na - math.fsum(s_ps)
        if -1e-12 < s_bar_na < 0.0:
            s_bar_na = 0.0
        return cls(
            s_na=float(s_na),
            s_bar_na=s_bar_na,
            s_ps=s_ps,
            s_a=s_a,
            s_bar_a=[1.0 - v for v in s_a],
            s_f=None if s_f is None else float(s_f),
        )

    def to_json(self) -> str:
        d = {
            "s_na": self.s_na,
            "s_bar_na": self.s_bar_na,
            "s_ps": list(self.s_ps),
            "s_a": list(self.s_a),
            "s_bar_a": list(self.s_bar_a),
        }
        if self.s_f is not None:
            d["s_f"] = self.s_f
        return json.dumps(d, indent=2)

    @classmethod
    def from_json(cls, text: str) -> "BranchGains":
        d = json.loads(text)
        return cls(**d)


def _pd_success(cfg):
    ch = cfg.channels
    return math.exp(-cfg.sigma_N2 * cfg.beta / (cfg.P_P * ch.sigma_PD2))


def interference_ratio(cfg):
    """B_P = beta P_S sigma_SD^2 / (P_P sigma_PD^2)."""
    ch = cfg.channels
    return cfg.beta * cfg.P_S * ch.sigma_SD2 / (cfg.P_P * ch.sigma_PD2)


def _assist_success(protocol):
    return success_ostbc if protocol is Protocol.ARC else success_best_relay


def _require_cooperative(cfg, sensing):
    if cfg.sensing is not sensing:
        raise ValueError(f"config uses {cfg.sensing.value} sensing, expected {sensing.value}")
    if cfg.protocol is Protocol.NC:
        raise ValueError("no-cooperation baseline has no assist states")


def branch_gains_is(cfg: SystemConfig) -> BranchGains:
    """Gains under individual sensing for ARC, R-BRC or NR-BRC."""
    _require_cooperative(cfg, Sensing.IS)
    L = cfg.L
    miss_tx = (1.0 - cfg.p_d) * cfg.q
    bp = interference_ratio(cfg)
    s_na = _pd_success(cfg) * (1.0 - bp * miss_tx / (1.0 + bp)) ** L

    # l users detect and listen; m of the L-l misdetecting users transmit
    ua0 = np.array([success_ostbc(0, m, cfg) for m in range(L)])
    w = np.array([su_reception_prob(m, cfg) for m in range(L)])
    detect = binom_pmf(L, cfg.p_d)
    s_ps = np.zeros(L + 1)
    for l in range(1, L + 1):
        interf = binom_pmf(L - l, cfg.q) * (1.0 - ua0[: L - l + 1])
        recv = np.array([binom_pmf(l, w[m]) for m in range(L - l + 1)])
        s_ps[: l + 1] += detect[l] * (interf @ recv)
    s_ps = s_ps[1:]

    assist = _assist_success(cfg.protocol)
    s_a = []
    for n in range(1, L + 1):
        pm = binom_pmf(L - n, miss_tx)
        s_a.append(math.fsum(pm[m] * assist(n, m, cfg) for m in range(L - n + 1)))
    s_f = None
    if cfg.protocol is Protocol.NRBRC:
        pm = binom_pmf(L - 1, miss_tx)
        s_f = math.fsum(pm[m] * success_best_relay(1, m, cfg) for m in range(L))
    return BranchGains.from_success(s_na, s_ps, s_a, s_f)


def branch_gains_cs(cfg: SystemConfig) -> BranchGains:
    """Gains under cooperative sensing (fused decision, silent assist phase)."""
    _require_cooperative(cfg, Sensing.CS)
    L = cfg.L
    pd_star, _ = fused_probabilities(cfg)
    bp = interference_ratio(cfg)
    s_na = _pd_success(cfg) * (
        pd_star + (1.0 - pd_star) * (1.0 - bp * cfg.q / (1.0 + bp)) ** L
    )
    s_ps = pd_star * (1.0 - success_ostbc(0, 0, cfg)) * binom_pmf(L, su_reception_prob(0, cfg))[1:]
    assist = _assist_success(cfg.protocol)
    s_a = [assist(n, 0, cfg) for n in range(1, L + 1)]
    s_f = success_best_relay(1, 0, cfg) if cfg.protocol is Protocol.NRBRC else None
    return BranchGains.from_success(s_na, s_ps, s_a, s_f)


def branch_gains(cfg: SystemConfig) -> BranchGains:
    if cfg.sensing is Sensing.IS:
        return branch_gains_is(cfg)
    return branch_gains_cs(cfg)


def build_flow_graph(g: BranchGains, protocol) -> sfg.FlowGraph:
    protocol = Protocol(protocol)
    if protocol is Protocol.NC:
        raise ValueError("no-cooperation baseline has no flow graph with assist states")
    nrbrc = protocol is Protocol.NRBRC
    if nrbrc and g.s_f is None:
        raise ValueError("NR-BRC graph needs the fresh-attempt gain s_f")
    assist = [f"A{n}" for n in range(1, g.L + 1)]
    edges = [("P", "D", g.s_na, 1), ("P", "P", g.s_bar_na, 1)]
    edges += [("P", a, s, 1) for a, s in zip(assist, g.s_ps)]
    edges += [(a, "D", s, 1) for a, s in zip(assist, g.s_a)]
    if nrbrc:
        edges += [(a, "F", s, 1) for a, s in zip(assist, g.s_bar_a)]
        edges += [("F", "D", g.s_f, 1), ("F", "F", g.s_bar_f, 1)]
        nodes = ["P", *assist, "F", "D"]
    else:
        edges += [(a, a, s, 1) for a, s in zip(assist, g.s_bar_a)]
        nodes = ["P", *assist, "D"]
    return sfg.FlowGraph(tuple(nodes), tuple(edges), "P", "D")


def pu_throughput_closed_form(g: BranchGains, protocol) -> float:
    protocol = Protocol(protocol)
    if protocol is Protocol.NC:
        raise ValueError("use pu_throughput_nc for the no-cooperation baseline")
    extra = 0.0
    if protocol is Protocol.NRBRC:
        stuck = math.fsum(p * sb for p, sb in zip(g.s_ps, g.s_bar_a))
        if stuck > 0 and g.s_f == 0:
            raise UnstableProtocolError("fresh-attempt state never succeeds")
        extra = math.fsum(g.s_ps) + (stuck / g.s_f if stuck > 0 else 0.0)
    else:
        for n, (p, a) in enumerate(zip(g.s_ps, g.s_a), start=1):
            if p > 0 and a == 0:
                raise UnstableProtocolError(f"assist state A{n} never succeeds")
            if p > 0:
                extra += p / a
    return (1.0 - g.s_bar_na) / (1.0 + extra)


def pu_throughput_nc(cfg: SystemConfig) -> float:
    """Direct-transmission success probability, the whole story without relays."""
    if cfg.protocol is not Protocol.NC:
        raise ValueError("pu_throughput_nc expects protocol NC")
    bp = interference_ratio(cfg)
    if cfg.sensing is Sensing.IS:
        miss_tx = (1.0 - cfg.p_d) * cfg.q
        return _pd_success(cfg) * (1.0 - bp * miss_tx / (1.0 + bp)) ** cfg.L
    pd_star, _ = fused_probabilities(cfg)
    return _pd_success(cfg) * (
        pd_star + (1.0 - pd_star) * (1.0 - bp * cfg.q / (1.0 + bp)) ** cfg.L
    )


def pu_throughput(cfg: SystemConfig) -> float:
    """mu_P for the configured protocol and sensing mode."""
    if cfg.protocol is Protocol.NC:
        return pu_throughput_nc(cfg)
    return pu_throughput_closed_form(branch_gains(cfg), cfg.protocol)


def pu_throughput_sfg(cfg: SystemConfig) -> float:
    """mu_P through the flow-graph engine instead of the closed form."""
    if cfg.protocol is Protocol.NC:
        return pu_throughput_nc(cfg)
    return sfg.throughput(build_flow_graph(branch_gains(cfg), cfg.protocol))
