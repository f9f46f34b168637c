"""Independent numerical checks for the closed-form link probabilities.

The quadratures integrate density times success kernel straight from the
definition of each event; the Monte Carlo samples the raw SINR.  Neither
uses the reduced series in ``linkprob``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, stats

from .linkprob import GammaDiffParams, gamma_diff_pdf
from .model import SystemConfig
from .simcore import SimEstimate

MAX_PIECES = 400


class QuadratureError(ArithmeticError):
    """Adaptive refinement did not converge within its budget."""


@dataclass(frozen=True)
class QuadratureSpec:
    abs_tol: float = 1e-10
    tail_cut: float = 1e-16

    def __post_init__(self):
        if not self.abs_tol > 0:
            raise ValueError("abs_tol must be positive")
        if not self.tail_cut > 0:
            raise ValueError("tail_cut must be positive")


def _quad(f, a, b, spec):
    val, err, info = integrate.quad(
        f, a, b, epsabs=spec.abs_tol / 10, epsrel=1e-12, limit=200, full_output=1
    )[:3]
    if err > spec.abs_tol:
        raise QuadratureError(f"quad on [{a}, {b}] error estimate {err:g} exceeds tolerance")
    return val


def _integrate_tail(f, start, direction, rate, floor, spec):
    """Integrate f from ``start`` towards +inf (direction=1) or -inf (-1).

    Pieces of width a few decay lengths are added until one contributes
    less than ``tail_cut`` of the running total, but not before ``floor``
    (distance from ``start``) has been covered, so the bulk of the mass is
    always included.
    """
    width = 4.0 / rate
    total = 0.0
    a = start
    for _ in range(MAX_PIECES):
        b = a + direction * width
        lo, hi = (a, b) if direction > 0 else (b, a)
        piece = _quad(f, lo, hi, spec)
        total += piece
        if abs(b - start) >= floor and abs(piece) <= spec.tail_cut * max(abs(total), 1e-300):
            return total
        a = b
    raise QuadratureError("tail integration did not converge")


class _Difference:
    """Density of Z = X - Y, X ~ Gamma(m, r1), Y ~ Gamma(n, r2); m or n may be 0."""

    def __init__(self, m, r1, n, r2):
        self.m, self.r1, self.n, self.r2 = m, r1, n, r2
        if m and n:
            params = GammaDiffParams(m, r1, n, r2)
            self.pdf = lambda z: gamma_diff_pdf(z, params)
        elif m:
            dist = stats.gamma(m, scale=1.0 / r1)
            self.pdf = lambda z: dist.pdf(z) if z > 0 else 0.0
        elif n:
            dist = stats.gamma(n, scale=1.0 / r2)
            self.pdf = lambda z: dist.pdf(-z) if z < 0 else 0.0
        else:
            self.pdf = None  # point mass at 0

    def pos_floor(self):
        return 4.0 * (self.m + 1) / self.r1 if self.m else 0.0

    def neg_floor(self):
        return 4.0 * (self.n + 1) / self.r2 if self.n else 0.0


def _expect_over(dist: _Difference, kernel, c, spec, below_mass=True):
    """P(Z < -c) (if ``below_mass``) + integral of kernel(z) f_Z(z) over [-c, inf)."""
    if dist.pdf is None:
        return (1.0 if below_mass and c < 0 else 0.0) + kernel(0.0)
    f = lambda z: kernel(z) * dist.pdf(z)  # noqa: E731
    total = 0.0
    if dist.n:
        if below_mass:
            total += _integrate_tail(dist.pdf, -c, -1, dist.r2, dist.neg_floor(), spec)
        if c > 0:
            total += _quad(f, -c, 0.0, spec)
    if dist.m:
        rate = dist.r1
        total += _integrate_tail(f, 0.0, 1, rate, dist.pos_floor(), spec)
    return total


def ua_quadrature(n, m, cfg: SystemConfig, spec: QuadratureSpec = QuadratureSpec()):
    """Success probability with PU + n power-summed SU relays, m interferers."""
    if n < 0 or m < 0:
        raise ValueError("n and m must be non-negative")
    ch = cfg.channels
    r_int = 1.0 / (cfg.beta * cfg.P_S * ch.sigma_SD2)
    r_relay = 1.0 / (cfg.P_S * ch.sigma_SD2)
    r_pu = 1.0 / (cfg.P_P * ch.sigma_PD2)
    c = cfg.beta * cfg.sigma_N2
    dist = _Difference(m, r_int, n, r_relay)
    # success iff PU power > c + Z; certain when Z < -c
    return _expect_over(dist, lambda z: math.exp(-r_pu * (c + z)), c, spec)


def ub_quadrature(n, m, cfg: SystemConfig, spec: QuadratureSpec = QuadratureSpec()):
    """Success probability with PU + the strongest of n SU relays, m interferers."""
    if n < 1 or m < 0:
        raise ValueError("need n >= 1 and m >= 0")
    ch = cfg.channels
    r_int = 1.0 / (cfg.beta * cfg.P_S * ch.sigma_SD2)
    r_pu = 1.0 / (cfg.P_P * ch.sigma_PD2)
    r_relay = 1.0 / (cfg.P_S * ch.sigma_SD2)
    c = cfg.beta * cfg.sigma_N2
    dist = _Difference(m, r_int, 1, r_pu)
    # failure iff best relay power <= c + Z
    fail = _expect_over(
        dist, lambda z: (-math.expm1(-r_relay * (c + z))) ** n, c, spec, below_mass=False
    )
    return 1.0 - fail


def gamma_diff_pdf_numeric(z, p: GammaDiffParams, spec: QuadratureSpec = QuadratureSpec()):
    """f_Z(z) as the convolution integral of the two Gamma densities."""
    fx = stats.gamma(p.m, scale=1.0 / p.beta1)
    fy = stats.gamma(p.n, scale=1.0 / p.beta2)
    lo = max(0.0, -z)
    g = lambda y: fx.pdf(z + y) * fy.pdf(y)  # noqa: E731
    floor = 4.0 * (p.n + 1) / p.beta2
    return _integrate_tail(g, lo, 1, min(p.beta1, p.beta2), floor, spec)


def sinr_monte_carlo(
    n, m, cfg: SystemConfig, samples: int, seed: int, best_relay: bool = False
) -> SimEstimate:
    """Empirical Pr[SINR > beta] at the PU destination with n relays, m interferers."""
    if samples < 10_000:
        raise ValueError("samples must be at least 1e4")
    ch = cfg.channels
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    hits = 0
    done = 0
    block = 1 << 18
    while done < samples:
        k = min(block, samples - done)
        sig = cfg.P_P * ch.sigma_PD2 * rng.standard_exponential(k)
        if n:
            relays = cfg.P_S * ch.sigma_SD2 * rng.standard_exponential((k, n))
            sig = sig + (relays.max(axis=1) if best_relay else relays.sum(axis=1))
        noise = np.full(k, cfg.sigma_N2)
        if m:
            noise += cfg.P_S * ch.sigma_SD2 * rng.standard_exponential((k, m)).sum(axis=1)
        hits += int(np.count_nonzero(sig > cfg.beta * noise))
        done += k
    p = hits / samples
    return SimEstimate(p, math.sqrt(p * (1.0 - p) / samples), samples)
