"""Closed-form per-slot success probabilities under Rayleigh fading.

* ``success_ostbc(n, m)``      U_a: PU + n SUs jointly retransmit (power sum
                               at D), m misdetecting SUs interfere.
* ``success_best_relay(n, m)`` U_b: PU + the strongest of n relays.
* ``su_reception_prob(m)``     W: PU packet overheard at an SU source.
* ``su_success_prob(m)``       V: SU packet delivered to its destination
                               with the PU silent.

U_a and U_b are written through the density of Z = X - Y, the difference of
two independent Gamma variables with integer shapes.  The two derivations
bind the rate symbols differently; each public function builds its own
rates from the config so they never mix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

from .specfun import gamma_int, lower_gamma_scaled, upper_gamma_int

REL_BRANCH_TOL = 1e-9
_PROB_SLACK = 1e-12


@dataclass(frozen=True)
class GammaDiffParams:
    """Z = X - Y with X ~ Gamma(m, rate beta1), Y ~ Gamma(n, rate beta2)."""

    m: int
    beta1: float
    n: int
    beta2: float

    def __post_init__(self):
        if self.m < 1 or self.n < 1:
            raise ValueError("Gamma shapes must be >= 1")
        if not (self.beta1 > 0 and self.beta2 > 0):
            raise ValueError("Gamma rates must be positive")


@dataclass(frozen=True)
class DirectLinkParams:
    c: float  # beta * sigma_N^2
    beta3: float

    def __post_init__(self):
        if self.c < 0 or not self.beta3 > 0:
            raise ValueError("need c >= 0 and beta3 > 0")


def _same_rate(a, b):
    return abs(a - b) <= REL_BRANCH_TOL * max(abs(a), abs(b))


def _log_comb(n, k):
    return math.lgamma(n + 1) - math.lgamma(k + 1) - math.lgamma(n - k + 1)


def _pdf_coeffs(m, b1, n, b2, positive):
    """Series coefficients of f_Z on one side of zero.

    f_Z(z) = e^{-b1 z} sum_j a_j z^j    (z >= 0, j < m)
    f_Z(z) = e^{ b2 z} sum_j a_j |z|^j  (z <  0, j < n)
    """
    k = m if positive else n
    log_pref = m * math.log(b1) + n * math.log(b2) - math.lgamma(m) - math.lgamma(n)
    log_sum = math.log(b1 + b2)
    out = []
    for j in range(k):
        p = m + n - 1 - j
        out.append(
            math.exp(log_pref + _log_comb(k - 1, j) + math.lgamma(p) - p * log_sum)
        )
    return out


def gamma_diff_pdf(z, p: GammaDiffParams):
    """Density of the difference of two independent integer-shape Gamma variables."""
    if z >= 0:
        coeffs = _pdf_coeffs(p.m, p.beta1, p.n, p.beta2, True)
        return math.exp(-p.beta1 * z) * sum(a * z**j for j, a in enumerate(coeffs))
    coeffs = _pdf_coeffs(p.m, p.beta1, p.n, p.beta2, False)
    u = -z
    return math.exp(-p.beta2 * u) * sum(a * u**j for j, a in enumerate(coeffs))


# --- U_a -----------------------------------------------------------------


def _ostbc_rates(cfg):
    """(beta1, beta2, beta3, c) as bound for U_a."""
    ch = cfg.channels
    b1 = 1.0 / (cfg.beta * cfg.P_S * ch.sigma_SD2)
    b2 = 1.0 / (cfg.P_S * ch.sigma_SD2)
    b3 = 1.0 / (cfg.P_P * ch.sigma_PD2)
    return b1, b2, b3, cfg.beta * cfg.sigma_N2


def _scaled_window(j1, b2, b3, c):
    """Integral of u^{j1-1} e^{-(b2-b3) u} over [0, c].

    Equal to gamma(j1, (b2-b3)c) / (b2-b3)^{j1}, with the limit
    c^{j1}/j1 when the rates coincide.
    """
    if _same_rate(b2, b3):
        return c**j1 / j1
    return c**j1 * lower_gamma_scaled(j1, (b2 - b3) * c)


@lru_cache(maxsize=65536)
def ostbc_terms(n, m, b1, b2, b3, c):
    """(I_A1, I_A2, I_A3) for n >= 1 assisting and m >= 1 interfering SUs.

    I_A1 = P(Z < -c), I_A2 and I_A3 integrate e^{-b3 (c+z)} f_Z over
    [-c, 0) and [0, inf).
    """
    neg = _pdf_coeffs(m, b1, n, b2, False)
    pos = _pdf_coeffs(m, b1, n, b2, True)
    damp = math.exp(-b3 * c)
    i1 = sum(
        a * upper_gamma_int(j + 1, b2 * c) / b2 ** (j + 1) for j, a in enumerate(neg)
    )
    i2 = damp * sum(a * _scaled_window(j + 1, b2, b3, c) for j, a in enumerate(neg))
    i3 = damp * sum(
        a * gamma_int(j + 1) / (b1 + b3) ** (j + 1) for j, a in enumerate(pos)
    )
    return i1, i2, i3


@lru_cache(maxsize=65536)
def _ua(n, m, b1, b2, b3, c):
    if n == 0:
        # no assistance: e^{-b3 c} E[e^{-b3 X}]
        return math.exp(-b3 * c) * (1.0 + b3 / b1) ** (-m)
    if m == 0:
        head = upper_gamma_int(n, b2 * c) / gamma_int(n)
        return head + math.exp(-b3 * c) * b2**n / gamma_int(n) * _scaled_window(
            n, b2, b3, c
        )
    return math.fsum(ostbc_terms(n, m, b1, b2, b3, c))


def _checked(value, what):
    if not (-_PROB_SLACK <= value <= 1.0 + _PROB_SLACK):
        raise ArithmeticError(f"{what} = {value!r} is not a probability")
    return min(max(value, 0.0), 1.0)


def success_ostbc(n, m, cfg):
    """U_a(n, m): PU + n assisting SUs (D-OSTBC) against m interferers."""
    if n < 0 or m < 0:
        raise ValueError("n and m must be non-negative")
    if n + m > cfg.L:
        raise ValueError(f"n + m = {n + m} exceeds L = {cfg.L}")
    return _checked(_ua(n, m, *_ostbc_rates(cfg)), f"U_a({n},{m})")


# --- U_b -----------------------------------------------------------------


def _best_relay_rates(cfg):
    """(beta1, beta2, beta3, c) as bound for U_b (beta2 is the PU link here)."""
    ch = cfg.channels
    b1 = 1.0 / (cfg.beta * cfg.P_S * ch.sigma_SD2)
    b2 = 1.0 / (cfg.P_P * ch.sigma_PD2)
    b3 = 1.0 / (cfg.P_S * ch.sigma_SD2)
    return b1, b2, b3, cfg.beta * cfg.sigma_N2


def _window_exp(rate, c):
    # integral of e^{-rate u} over [0, c]
    if _same_rate(rate, 0.0) or abs(rate * c) < 1e-300:
        return c
    return -math.expm1(-rate * c) / rate


def _blended_window(x, y, c):
    # e^{-y c} * integral of e^{-(x - y) u} over [0, c], without overflow for y >> x
    lo, gap = min(x, y), abs(x - y)
    window = c if _same_rate(x, y) else _window_exp(gap, c)
    return math.exp(-lo * c) * window


def best_relay_terms(j, m, b1, b2, b3, c, literal=False):
    """(I_B1, I_B2) for binomial index j and m >= 1 interferers, each scaled by e^{-j b3 c}.

    ``literal=True`` reproduces the uncorrected constants, which drop the
    (b1+b2)^{-m} factor from I_B1 and put b2 instead of b1 next to j*b3 in
    I_B2.  Kept only so the discrepancy can be demonstrated in tests.
    """
    jb3 = j * b3
    window = _blended_window(b2, jb3, c)
    log_b1m = m * math.log(b1)
    if literal:
        i1 = math.exp(log_b1m) * b2 * window
    else:
        i1 = math.exp(log_b1m - m * math.log(b1 + b2)) * b2 * window
    denom = (b2 if literal else b1) + jb3
    log_pref = log_b1m + math.log(b2) - math.lgamma(m) - jb3 * c
    i2 = 0.0
    for i in range(m):
        i2 += math.exp(
            log_pref
            + _log_comb(m - 1, i)
            + math.lgamma(m - i)
            - (m - i) * math.log(b1 + b2)
            + math.lgamma(i + 1)
            - (i + 1) * math.log(denom)
        )
    return i1, i2


@lru_cache(maxsize=65536)
def _ub_bar(n, m, b1, b2, b3, c, literal=False):
    total = []
    for j in range(n + 1):
        sign = -1.0 if j % 2 else 1.0
        weight = sign * math.comb(n, j)
        if m == 0:
            total.append(weight * b2 * _blended_window(b2, j * b3, c))
        else:
            total.append(weight * sum(best_relay_terms(j, m, b1, b2, b3, c, literal)))
    return math.fsum(total)


def success_best_relay(n, m, cfg, literal=False):
    """U_b(n, m): PU + the best of n relays against m interferers."""
    if n < 1:
        raise ValueError("best-relay selection needs n >= 1")
    if m < 0:
        raise ValueError("m must be non-negative")
    if n + m > cfg.L:
        raise ValueError(f"n + m = {n + m} exceeds L = {cfg.L}")
    value = 1.0 - _ub_bar(n, m, *_best_relay_rates(cfg), literal)
    if literal:
        return value
    return _checked(value, f"U_b({n},{m})")


# --- W, V ----------------------------------------------------------------


def su_reception_prob(m, cfg):
    """W(m): an SU source decodes the PU packet with m SU interferers."""
    if m < 0 or m > cfg.L - 1:
        raise ValueError(f"m must lie in [0, L-1], got {m}")
    ch = cfg.channels
    snr_scale = cfg.P_P * ch.sigma_PS2
    return math.exp(-cfg.sigma_N2 * cfg.beta / snr_scale) * (
        1.0 + cfg.beta * cfg.P_S * ch.sigma_SS2 / snr_scale
    ) ** (-m)


def su_success_prob(m, cfg):
    """V(m): an SU packet is delivered with m SU interferers and no PU."""
    if m < 0 or m > cfg.L - 1:
        raise ValueError(f"m must lie in [0, L-1], got {m}")
    return math.exp(
        -cfg.sigma_N2 * cfg.beta / (cfg.P_S * cfg.channels.sigma_SR2)
    ) * (1.0 + cfg.beta) ** (-m)
