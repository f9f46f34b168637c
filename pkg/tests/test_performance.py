import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from coopcr.linkprob import su_success_prob
from coopcr.model import Protocol, Sensing, default_config
from coopcr.performance import (
    UnstableQueueError,
    analyze,
    optimal_q,
    optimal_q_closed_form,
    pu_delay,
    pu_delay_phase_type,
    q_grid,
    stability_check,
    stable_region,
    su_throughput_aux,
    su_throughput_bound,
)
from coopcr.protocols import fused_probabilities, pu_throughput


@pytest.mark.parametrize("lam, mu, ok", [(0.1, 0.3, True), (0.3, 0.3, False), (0.0, 1e-9, True), (0.5, 0.2, False)])
def test_stability(lam, mu, ok):
    assert stability_check(lam, mu) is ok


def test_su_bound_examples(base):
    assert su_throughput_bound(base.replace(q=0.0), 0.5) == 0.0
    cfg = default_config(L=1, lambda_P=0.0, p_f=0.0, q=0.5)
    assert su_throughput_bound(cfg, 0.4) == pytest.approx(0.5 * math.exp(-1), rel=1e-14)
    assert su_throughput_bound(cfg, 0.4) == pytest.approx(0.18394, abs=1e-5)
    assert su_throughput_bound(base, base.lambda_P) == 0.0
    assert su_throughput_bound(base, base.lambda_P + 1e-12) == pytest.approx(0.0, abs=1e-10)
    with pytest.raises(ValueError):
        su_throughput_bound(base, 0.0)


@given(st.integers(1, 12), st.floats(0, 1), st.floats(0, 1), st.floats(0, 0.3), st.floats(0.35, 1))
def test_su_bound_is_idle_times_access_mixture(L, q, p_f, lam, mu):
    cfg = default_config(L=L, q=q, p_f=p_f, lambda_P=lam)
    a = q * (1 - p_f)
    mixture = sum(math.comb(L - 1, m) * a**m * (1 - a) ** (L - 1 - m) * su_success_prob(m, cfg) for m in range(L))
    assert su_throughput_bound(cfg, mu) == pytest.approx((1 - lam / mu) * a * mixture, rel=1e-12, abs=1e-300)


def test_su_bound_cooperative_sensing():
    cfg = default_config(L=5, sensing=Sensing.CS)
    _, pf = fused_probabilities(cfg)
    expected = (1 - 0.1 / 0.4) * 0.7 * (1 - pf) * math.exp(-1) * (1 - 0.7 * 0.1 / 1.1) ** 4
    assert su_throughput_bound(cfg, 0.4) == pytest.approx(expected, rel=1e-14)


@given(st.floats(0.05, 0.95))
def test_su_bound_linear_in_idle_probability(mu):
    cfg = default_config(lambda_P=0.0)
    full = su_throughput_bound(cfg, mu)
    for lam in (0.01, 0.02, 0.04):
        if lam < mu:
            assert su_throughput_bound(cfg.replace(lambda_P=lam), mu) == pytest.approx((1 - lam / mu) * full, rel=1e-12)


def test_aux_limits(base):
    free = base.replace(lambda_P=0.0)
    assert su_throughput_aux(free) == pytest.approx(su_throughput_bound(free, pu_throughput(free)))
    assert su_throughput_aux(base.replace(lambda_P=1.0)) == 0.0


@pytest.mark.parametrize("protocol, has_unstable_tail", [(Protocol.NC, True), (Protocol.ARC, False)])
def test_aux_zero_exactly_on_unstable_upset(protocol, has_unstable_tail):
    cfg = default_config(L=15, lambda_P=0.1, protocol=protocol)
    qs = q_grid(0.01)
    mu = [pu_throughput(cfg.replace(q=float(q))) for q in qs]
    aux = [su_throughput_aux(cfg.replace(q=float(q))) for q in qs]
    assert all(b <= a + 1e-15 for a, b in zip(mu, mu[1:]))
    unstable = [m < 0.1 for m in mu]
    assert any(unstable) is has_unstable_tail
    if has_unstable_tail:
        first = unstable.index(True)
        assert first > 0 and all(unstable[first:])
    assert all((a == 0) == u for a, u in zip(aux[1:], unstable[1:]))


def test_optimal_q_anchors():
    is_cfg = default_config(L=15, p_d=1.0, p_f=0.1)
    assert optimal_q_closed_form(is_cfg) == pytest.approx(1.1 / 1.35)
    assert optimal_q(is_cfg)[0] == pytest.approx(0.81481, abs=1e-3)
    cs_cfg = default_config(L=15, sensing=Sensing.CS, p_d_star=1.0)
    assert optimal_q_closed_form(cs_cfg) == pytest.approx(1.1 / 1.5)
    assert optimal_q(cs_cfg)[0] == pytest.approx(0.73333, abs=1e-3)


def test_optimal_q_clamped_to_one():
    cfg = default_config(L=1, p_d=1.0, p_f=0.0)
    assert optimal_q_closed_form(cfg) == 1.0
    assert optimal_q(cfg)[0] == 1.0


def test_optimal_q_ties_prefer_smaller_q():
    # nothing stabilises: every grid point scores 0
    q, value = optimal_q(default_config(lambda_P=1.0), 0.01)
    assert q == 0.0 and value == 0.0


@pytest.mark.parametrize("step", [0.0, 0.02, 0.003])
def test_q_grid_validation(step):
    with pytest.raises(ValueError):
        q_grid(step)


def test_stable_region_properties():
    cfg = default_config(L=5)
    lams = np.linspace(0, 0.6, 13)
    pts = stable_region(cfg, lams, grid_step=0.01)
    mus = [p.mu_S for p in pts]
    assert all(b <= a + 1e-15 for a, b in zip(mus, mus[1:]))
    assert mus[0] == pytest.approx(optimal_q(cfg.replace(lambda_P=0.0), 0.01)[1])
    assert mus[-1] == 0.0
    with pytest.raises(ValueError):
        stable_region(cfg, [1.5])


def test_region_trend_with_more_users():
    lams = np.round(np.linspace(0, 0.6, 61), 3)

    def summary(L):
        pts = stable_region(default_config(L=L), lams, grid_step=0.01)
        supported = max(p.lambda_P for p in pts if p.mu_S > 0)
        return supported, pts[0].mu_S

    small, large = summary(5), summary(15)
    assert large[0] >= small[0]
    assert large[1] < small[1]


def test_delay_examples():
    assert pu_delay(0.0, 0.4) == pytest.approx(1 / 0.4)
    assert pu_delay(0.1, 0.3) == pytest.approx(4.5)
    with pytest.raises(UnstableQueueError):
        pu_delay(0.3, 0.3)
    values = [pu_delay(lam, 0.3) for lam in np.linspace(0, 0.299, 50)]
    assert all(b > a for a, b in zip(values, values[1:]))


@given(st.floats(0.01, 1.0), st.floats(0.001, 0.99))
def test_delay_exceeds_service_time(mu, frac):
    lam = mu * frac
    delay = pu_delay(lam, mu)
    assert delay >= (1 / mu) * (1 - 1e-12) and delay >= 1.0 - 1e-12
    if mu < 0.999:  # queueing only adds delay once service can fail
        assert delay > 1 / mu


@given(st.floats(0.01, 1.0), st.floats(0.0, 0.99))
def test_general_service_delay_reduces_to_geometric(mu, frac):
    lam = mu * frac
    got = pu_delay_phase_type(lam, 1 / mu, 2 * (1 - mu) / mu**2)
    assert got == pytest.approx(pu_delay(lam, mu), rel=1e-10)


def test_analyze_report(base):
    r = analyze(base)
    assert r.mu_P == pytest.approx(pu_throughput(base))
    assert r.stable and r.D_P == pytest.approx(pu_delay(base.lambda_P, r.mu_P))
    assert r.q_star is None
    r = analyze(default_config(lambda_P=0.99, protocol=Protocol.NC))
    assert not r.stable and r.D_P is None and r.mu_S_bound == 0.0
    r = analyze(base, optimize=True, grid_step=0.01)
    assert r.q_star is not None and 0 <= r.q_star <= 1
