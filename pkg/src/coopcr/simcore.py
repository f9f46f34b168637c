"""Slot-level Monte Carlo simulation of the PU queue and the SU network.

Every slot draws fresh Rayleigh power gains for all links that can matter,
applies the sensing/access rules and the cooperation protocol, and decides
each reception by comparing the instantaneous SINR with beta.  Nothing here
uses the closed-form probabilities, so the output is an independent check
on the analysis.

Random numbers come from one Philox stream per (replication, purpose,
entity), so a given seed yields the same channel and sensing realisations
whichever protocol is simulated.
"""

from __future__ import annotations

import enum
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numba
import numpy as np

from .model import Protocol, Sensing, SystemConfig

CHUNK = 1 << 15
DEFAULT_BATCHES = 50


class Phase(enum.IntEnum):
    DIRECT = 0
    ASSIST = 1
    FRESH = 2


class Purpose(enum.IntEnum):
    ARRIVAL = 0
    SENSE = 1
    ACCESS = 2
    FADE_PD = 3
    FADE_SD = 4
    FADE_PS = 5
    FADE_SS = 6
    FADE_SR = 7
    FADE_PR = 8


@dataclass
class ProtocolState:
    """Where the head-of-line PU packet is; mirrors the kernel's state slots."""

    phase: Phase = Phase.DIRECT
    assist_set: frozenset = frozenset()
    chosen_relay: Optional[int] = None


@dataclass(frozen=True)
class SimConfig:
    slots: int
    warmup: int = 0
    seed: int = 0
    saturated_pu: bool = True
    replications: int = 1
    join_mid_packet: bool = False
    batches: int = DEFAULT_BATCHES
    workers: int = 1

    def __post_init__(self):
        if self.slots < 1:
            raise ValueError("slots must be positive")
        if not 0 <= self.warmup < self.slots:
            raise ValueError("warmup must satisfy 0 <= warmup < slots")
        if self.replications < 1:
            raise ValueError("replications must be positive")
        if not 2 <= self.batches <= self.slots - self.warmup:
            raise ValueError("need 2 <= batches <= counted slots")
        if not 0 <= self.seed < 2**64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class SimEstimate:
    mean: float
    stderr: float
    n: int

    def z(self, target):
        if self.stderr == 0:
            return 0.0 if self.mean == target else math.copysign(math.inf, self.mean - target)
        return (self.mean - target) / self.stderr


@dataclass(frozen=True)
class SimReport:
    mu_P_hat: SimEstimate
    idle_frac: SimEstimate
    mu_S_hat: SimEstimate
    mu_S_bound_hat: SimEstimate
    delay_hat: SimEstimate
    trace: tuple = field(default=(), repr=False, compare=False)

    def to_dict(self):
        return {
            k: asdict(getattr(self, k))
            for k in ("mu_P_hat", "idle_frac", "mu_S_hat", "mu_S_bound_hat", "delay_hat")
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


# --- kernel ----------------------------------------------------------------

# per-batch accumulators
_B_SLOTS, _B_DEP, _B_IDLE, _B_SU, _B_SUB, _B_DSUM, _B_DCNT = range(7)
# scalar state
_S_Q, _S_PHASE, _S_RELAY, _S_HEAD, _S_TAIL, _S_ENTRY = range(6)


@numba.njit(cache=True, nogil=True)
def _run_chunk(
    t0, n, state, mask, fifo, acc, trace,
    u_arr, u_sense, u_acc, g_pd, g_sd, g_ps, g_ss, g_sr, g_pr,
    L, proto, cs, saturated_pu, join, fuse_direct, lam, p_d, p_f, q,
    pp_pd, ps_sd, pp_ps, ps_ss, ps_sr, pp_pr, beta, noise,
    warmup, counted, nbatch,
):
    busy = np.zeros(L, np.bool_)
    own = np.zeros(L, np.bool_)
    relay_tx = np.zeros(L, np.bool_)
    decoded = np.zeros(L, np.bool_)
    thr = (L + 1) // 2
    for k in range(n):
        t = t0 + k
        if not saturated_pu and u_arr[k] < lam:
            fifo[state[_S_TAIL]] = t
            state[_S_TAIL] += 1
            state[_S_Q] += 1
        active = saturated_pu or state[_S_Q] > 0
        phase = state[_S_PHASE]

        # sensing: True means "PU present" as seen by that SU
        for i in range(L):
            busy[i] = u_sense[k, i] < (p_d if active else p_f)
        if cs:
            if fuse_direct:
                fused = u_sense[k, 0] < (p_d if active else p_f)
            else:
                cnt = 0
                for i in range(L):
                    if busy[i]:
                        cnt += 1
                fused = cnt >= thr
            for i in range(L):
                busy[i] = fused

        # access decisions
        best = -1
        for i in range(L):
            own[i] = False
            relay_tx[i] = False
        if active and phase != 0:
            if phase == 2:
                relay_tx[state[_S_RELAY]] = True
            elif proto == 0:
                for i in range(L):
                    relay_tx[i] = mask[i]
            else:
                gbest = -1.0
                for i in range(L):
                    if mask[i] and g_sd[k, i] > gbest:
                        gbest = g_sd[k, i]
                        best = i
                relay_tx[best] = True
        for i in range(L):
            holding = mask[i] if active and phase != 0 else False
            if holding:
                continue
            if active and phase != 0 and cs:
                continue  # assisting users keep everyone else quiet
            if not busy[i] and u_acc[k, i] < q:
                own[i] = True

        success = False
        if active:
            sig = pp_pd * g_pd[k]
            interf = 0.0
            for i in range(L):
                if relay_tx[i]:
                    sig += ps_sd * g_sd[k, i]
                elif own[i]:
                    interf += ps_sd * g_sd[k, i]
            success = sig > beta * (noise + interf)

        # receptions of the PU packet at listening SU sources
        ndec = 0
        for i in range(L):
            decoded[i] = False
        listen_ok = proto != 3 and active and not success
        if listen_ok and (phase == 0 or (join and phase == 1 and proto != 2)):
            for i in range(L):
                if own[i] or relay_tx[i] or mask[i]:
                    continue
                if phase == 0 and not busy[i]:
                    continue
                if phase == 1 and not (busy[i] or cs):
                    continue
                s = pp_ps * g_ps[k, i]
                x = 0.0
                for j in range(L):
                    if j == i:
                        continue
                    if relay_tx[j]:
                        s += ps_ss * g_ss[k, i, j]
                    elif own[j]:
                        x += ps_ss * g_ss[k, i, j]
                if s > beta * (noise + x):
                    decoded[i] = True
                    ndec += 1

        # tagged SU 0, own packet
        su_ok = False
        if own[0]:
            s = ps_sr * g_sr[k, 0]
            x = pp_pr * g_pr[k] if active else 0.0
            for j in range(1, L):
                if own[j] or relay_tx[j]:
                    x += ps_sr * g_sr[k, j]
            su_ok = s > beta * (noise + x)

        # state update
        if active:
            if success:
                if phase == 1 and proto != 2 and not join:
                    cnt = 0
                    for i in range(L):
                        if mask[i]:
                            cnt += 1
                    if cnt != state[_S_ENTRY]:
                        raise RuntimeError("assist set changed while serving a packet")
                for i in range(L):
                    mask[i] = False
                state[_S_PHASE] = 0
                state[_S_RELAY] = -1
            elif phase == 0:
                if ndec > 0:
                    for i in range(L):
                        mask[i] = decoded[i]
                    state[_S_PHASE] = 1
                    state[_S_ENTRY] = ndec
            elif phase == 1:
                if proto == 2:
                    for i in range(L):
                        mask[i] = i == best
                    state[_S_PHASE] = 2
                    state[_S_RELAY] = best
                elif ndec > 0:
                    for i in range(L):
                        if decoded[i]:
                            mask[i] = True
        departed = active and success
        delay = 0
        if departed and not saturated_pu:
            delay = t - fifo[state[_S_HEAD]] + 1
            state[_S_HEAD] += 1
            state[_S_Q] -= 1

        if trace.shape[0] > 0:
            sense_bits = 0
            own_bits = 0
            relay_bits = 0
            for i in range(L):
                if busy[i]:
                    sense_bits |= 1 << i
                if own[i]:
                    own_bits |= 1 << i
                if relay_tx[i]:
                    relay_bits |= 1 << i
            trace[k, 0] = t
            trace[k, 1] = phase if active else -1
            trace[k, 2] = sense_bits
            trace[k, 3] = own_bits
            trace[k, 4] = relay_bits
            trace[k, 5] = 1 if departed else 0
            trace[k, 6] = ndec
            trace[k, 7] = 1 if su_ok else 0

        if t >= warmup:
            b = ((t - warmup) * nbatch) // counted
            acc[b, _B_SLOTS] += 1.0
            if departed:
                acc[b, _B_DEP] += 1.0
                if not saturated_pu:
                    acc[b, _B_DSUM] += delay
                    acc[b, _B_DCNT] += 1.0
            if not active:
                acc[b, _B_IDLE] += 1.0
            if su_ok:
                acc[b, _B_SU] += 1.0
                if not active:
                    acc[b, _B_SUB] += 1.0


# --- driver ----------------------------------------------------------------

_PROTO_CODE = {Protocol.ARC: 0, Protocol.RBRC: 1, Protocol.NRBRC: 2, Protocol.NC: 3}


def _stream(seed, rep, purpose, entity=0):
    ss = np.random.SeedSequence(seed, spawn_key=(rep, int(purpose), entity))
    return np.random.Generator(np.random.Philox(ss))


class _Draws:
    """Chunked random inputs, one generator per (purpose, entity)."""

    def __init__(self, seed, rep, L):
        self.L = L
        self.arr = _stream(seed, rep, Purpose.ARRIVAL)
        self.sense = [_stream(seed, rep, Purpose.SENSE, i) for i in range(L)]
        self.acc = [_stream(seed, rep, Purpose.ACCESS, i) for i in range(L)]
        self.pd = _stream(seed, rep, Purpose.FADE_PD)
        self.sd = [_stream(seed, rep, Purpose.FADE_SD, i) for i in range(L)]
        self.ps = [_stream(seed, rep, Purpose.FADE_PS, i) for i in range(L)]
        self.ss = [_stream(seed, rep, Purpose.FADE_SS, i) for i in range(L)]
        self.sr = [_stream(seed, rep, Purpose.FADE_SR, i) for i in range(L)]
        self.pr = _stream(seed, rep, Purpose.FADE_PR)

    def next(self, n):
        L = self.L

        def cols(gens, fn):
            out = np.empty((n, L))
            for i, g in enumerate(gens):
                out[:, i] = fn(g)
            return out

        ss = np.empty((n, L, L))
        for i, g in enumerate(self.ss):
            ss[:, i, :] = g.standard_exponential((n, L))
        return (
            self.arr.random(n),
            cols(self.sense, lambda g: g.random(n)),
            cols(self.acc, lambda g: g.random(n)),
            self.pd.standard_exponential(n),
            cols(self.sd, lambda g: g.standard_exponential(n)),
            cols(self.ps, lambda g: g.standard_exponential(n)),
            ss,
            cols(self.sr, lambda g: g.standard_exponential(n)),
            self.pr.standard_exponential(n),
        )


def _sensing_params(cfg):
    if cfg.sensing is Sensing.CS and (cfg.p_d_star is not None or cfg.p_f_star is not None):
        from .protocols import fused_probabilities

        pd, pf = fused_probabilities(cfg)
        return pd, pf, True
    return cfg.p_d, cfg.p_f, False


def _replicate(cfg: SystemConfig, sim: SimConfig, rep: int, with_trace: bool):
    L = cfg.L
    ch = cfg.channels
    p_d, p_f, fuse_direct = _sensing_params(cfg)
    state = np.array([0, 0, -1, 0, 0, 0], dtype=np.int64)
    mask = np.zeros(L, np.bool_)
    fifo = np.zeros(1 if sim.saturated_pu else sim.slots + 1, dtype=np.int64)
    counted = sim.slots - sim.warmup
    acc = np.zeros((sim.batches, 7))
    draws = _Draws(sim.seed, rep, L)
    traces = []
    t0 = 0
    while t0 < sim.slots:
        n = min(CHUNK, sim.slots - t0)
        trace = np.zeros((n if with_trace else 0, 8), dtype=np.int64)
        _run_chunk(
            t0, n, state, mask, fifo, acc, trace, *draws.next(n),
            L, _PROTO_CODE[cfg.protocol], cfg.sensing is Sensing.CS,
            sim.saturated_pu, sim.join_mid_packet, fuse_direct,
            cfg.lambda_P, p_d, p_f, cfg.q,
            cfg.P_P * ch.sigma_PD2, cfg.P_S * ch.sigma_SD2, cfg.P_P * ch.sigma_PS2,
            cfg.P_S * ch.sigma_SS2, cfg.P_S * ch.sigma_SR2, cfg.P_P * ch.sigma_PR2,
            cfg.beta, cfg.sigma_N2, sim.warmup, counted, sim.batches,
        )
        if with_trace:
            traces.append(trace)
        t0 += n
    return acc, (np.concatenate(traces) if traces else None)


def _ratio_estimate(num, den):
    """Ratio of totals with a batch-means standard error."""
    total = den.sum()
    if total == 0:
        return SimEstimate(float("nan"), float("nan"), 0)
    r = num.sum() / total
    b = len(num)
    resid = num - r * den
    var = (resid**2).sum() / (b * (b - 1)) / (total / b) ** 2
    return SimEstimate(float(r), float(math.sqrt(var)), int(total))


def simulate(cfg: SystemConfig, sim: SimConfig, trace: bool = False) -> SimReport:
    """Run ``sim.replications`` independent replications and pool their batches.

    With ``trace=True`` the per-slot records of replication 0 are attached.
    """
    reps = range(sim.replications)
    if sim.workers > 1:
        with ThreadPoolExecutor(sim.workers) as pool:
            results = list(pool.map(lambda r: _replicate(cfg, sim, r, trace and r == 0), reps))
    else:
        results = [_replicate(cfg, sim, r, trace and r == 0) for r in reps]
    acc = np.concatenate([a for a, _ in results])
    slots = acc[:, _B_SLOTS]
    report = SimReport(
        mu_P_hat=_ratio_estimate(acc[:, _B_DEP], slots),
        idle_frac=_ratio_estimate(acc[:, _B_IDLE], slots),
        mu_S_hat=_ratio_estimate(acc[:, _B_SU], slots),
        mu_S_bound_hat=_ratio_estimate(acc[:, _B_SUB], slots),
        delay_hat=_ratio_estimate(acc[:, _B_DSUM], acc[:, _B_DCNT]),
        trace=tuple(map(tuple, results[0][1])) if trace else (),
    )
    return report


def format_trace(report: SimReport, L: int) -> str:
    """Text trace, one line per slot: slot phase sensing own relay departed decoded su_ok."""
    names = {-1: "IDLE", 0: "DIRECT", 1: "ASSIST", 2: "FRESH"}
    lines = []
    for t, ph, sense, own, relay, dep, ndec, su in report.trace:
        bits = lambda v: format(v, f"0{L}b")[::-1]  # noqa: E731
        lines.append(
            f"{t} {names[ph]} sense={bits(sense)} own={bits(own)} "
            f"relay={bits(relay)} ack={dep} decoded={ndec} su0={su}"
        )
    return "\n".join(lines) + ("\n" if lines else "")
