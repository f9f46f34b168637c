"""System-level metrics: SU throughput, stability, optimal q, stable region, delay."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .model import Sensing, SystemConfig, ThroughputReport
from .protocols import fused_probabilities, pu_throughput


class UnstableQueueError(ValueError):
    pass


@dataclass(frozen=True)
class RegionPoint:
    lambda_P: float
    mu_S: float


def stability_check(lambda_P, mu_P):
    """Loynes: the PU queue is stable iff arrivals are strictly slower than service."""
    return lambda_P < mu_P


def _su_factor(cfg: SystemConfig):
    """SU throughput given that the PU is idle (the bound without its idle factor)."""
    k = cfg.beta / (1.0 + cfg.beta)
    link = math.exp(-cfg.sigma_N2 * cfg.beta / (cfg.P_S * cfg.channels.sigma_SR2))
    if cfg.sensing is Sensing.IS:
        access = cfg.q * (1.0 - cfg.p_f)
        return access * link * (1.0 - access * k) ** (cfg.L - 1)
    _, pf_star = fused_probabilities(cfg)
    return cfg.q * (1.0 - pf_star) * link * (1.0 - cfg.q * k) ** (cfg.L - 1)


def su_throughput_bound(cfg: SystemConfig, mu_P: float) -> float:
    """Lower bound on one SU's throughput, counting only PU-idle slots.

    Returns 0 when the PU queue is not stable.
    """
    if not 0.0 < mu_P <= 1.0:
        raise ValueError(f"mu_P must lie in (0, 1], got {mu_P!r}")
    if not stability_check(cfg.lambda_P, mu_P):
        return 0.0
    return (1.0 - cfg.lambda_P / mu_P) * _su_factor(cfg)


def su_throughput_aux(cfg: SystemConfig) -> float:
    """mu_S when the PU queue is kept stable by this q, else 0."""
    mu_P = pu_throughput(cfg)
    if mu_P < cfg.lambda_P:
        return 0.0
    return su_throughput_bound(cfg, mu_P)


def q_grid(step):
    if not 0.0 < step <= 0.01:
        raise ValueError("grid step must lie in (0, 0.01]")
    n = int(round(1.0 / step))
    if abs(n * step - 1.0) > 1e-9:
        raise ValueError("grid step must divide 1")
    return np.linspace(0.0, 1.0, n + 1)


def _curves(cfg, qs):
    mu_p = np.array([pu_throughput(cfg.replace(q=float(q))) for q in qs])
    factor = np.array([_su_factor(cfg.replace(q=float(q))) for q in qs])
    return mu_p, factor


def _aux_from_curves(lambda_P, mu_p, factor):
    with np.errstate(divide="ignore", invalid="ignore"):
        idle = np.where(mu_p > lambda_P, 1.0 - lambda_P / mu_p, 0.0)
    return idle * factor


def optimal_q(cfg: SystemConfig, grid_step: float = 1e-3):
    """(q*, mu_hat_S(q*)) by exhaustive grid search; ties go to the smaller q."""
    qs = q_grid(grid_step)
    mu_p, factor = _curves(cfg, qs)
    aux = _aux_from_curves(cfg.lambda_P, mu_p, factor)
    i = int(np.argmax(aux))  # first maximiser
    return float(qs[i]), float(aux[i])


def optimal_q_closed_form(cfg: SystemConfig):
    """q* under perfect detection, where mu_P no longer depends on q."""
    if cfg.sensing is Sensing.IS:
        return min((1.0 + cfg.beta) / ((1.0 - cfg.p_f) * cfg.beta * cfg.L), 1.0)
    return min((1.0 + cfg.beta) / (cfg.beta * cfg.L), 1.0)


def stable_region(cfg: SystemConfig, lambda_grid, grid_step: float = 1e-3):
    """Optimised SU throughput for each PU arrival rate.

    mu_P(q) does not depend on lambda_P, so the q-curves are computed once.
    """
    lambdas = [float(x) for x in lambda_grid]
    if any(not 0.0 <= x <= 1.0 for x in lambdas):
        raise ValueError("arrival rates must lie in [0, 1]")
    qs = q_grid(grid_step)
    mu_p, factor = _curves(cfg, qs)
    points = []
    for lam in lambdas:
        aux = _aux_from_curves(lam, mu_p, factor)
        points.append(RegionPoint(lam, float(aux.max())))
    return points


def pu_delay(lambda_P, mu_P):
    """Mean PU packet delay in slots, (1 - lambda_P) / (mu_P - lambda_P)."""
    if not stability_check(lambda_P, mu_P):
        raise UnstableQueueError(f"lambda_P={lambda_P} >= mu_P={mu_P}")
    return (1.0 - lambda_P) / (mu_P - lambda_P)


def pu_delay_phase_type(lambda_P, mean_service, second_factorial_moment):
    """Mean delay for general i.i.d. service times S (arrival slot to ACK slot).

    mean_service = E[S], second_factorial_moment = E[S(S-1)].  Reduces to
    ``pu_delay`` when S is geometric.
    """
    rho = lambda_P * mean_service
    if rho >= 1.0:
        raise UnstableQueueError(f"load {rho} >= 1")
    return mean_service + lambda_P * second_factorial_moment / (2.0 * (1.0 - rho))


def analyze(cfg: SystemConfig, optimize: bool = False, grid_step: float = 1e-3):
    """PU throughput, SU bound, stability and delay for one configuration."""
    q_star = None
    if optimize:
        q_star, _ = optimal_q(cfg, grid_step)
        cfg = cfg.replace(q=q_star)
    mu_P = pu_throughput(cfg)
    stable = stability_check(cfg.lambda_P, mu_P)
    return ThroughputReport(
        mu_P=mu_P,
        mu_S_bound=su_throughput_bound(cfg, mu_P) if mu_P > 0 else 0.0,
        stable=stable,
        D_P=pu_delay(cfg.lambda_P, mu_P) if stable else None,
        q_star=q_star,
    )
