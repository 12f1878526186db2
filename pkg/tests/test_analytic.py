from fractions import Fraction

import pytest
from hypothesis import assume, given, strategies as st

from fcfs_aoi.analytic import (
    QueueConfig,
    aoi_approx,
    aoi_approx1,
    aoi_approx2,
    aoi_approx3,
    aoi_from_long_cross_moment,
    aoi_single_source_mg1,
    brief_cross_moment,
    laplace_system_time,
    long_cross_moment_approx,
    mean_delay,
    mean_wait,
    p_brief,
    p_brief_closed_form,
    p_long,
)
from fcfs_aoi.distributions import Exponential, Gamma, HyperExponential, LogNormal, Pareto
from fcfs_aoi.errors import Unstable

LAWS = [
    Exponential(1.0),
    Gamma(2.0, 2.0),
    HyperExponential((1 / 3, 1 / 3, 1 / 3), (0.5, 1.0, 1.5)),
    LogNormal(1.0, 1.0),
    Pareto(0.5, 4.0),
]
law_ids = [d.kind for d in LAWS]

# Exact rationals from sympy: the transform of an Exp(mu - lambda) system time,
# differentiated symbolically and pushed through the three assemblies.
MM1_APPROX = {
    (0.1, 0.6): (Fraction(157, 12), Fraction(673, 48), Fraction(1229, 96)),
    (0.2, 0.6): (Fraction(19, 2), Fraction(41, 4), Fraction(73, 8)),
    (0.3, 0.4): (Fraction(37, 6), Fraction(83, 12), Fraction(6)),
}
# Same pipeline for Gamma(2, 2) with its symbolic transform (2 / (2 + a))^2.
GAMMA_APPROX = {
    (0.3, 0.2): (4.812368994009223, 5.698814691603446, 4.7062702917970425),
    (0.2, 0.5): (7.522853185595568, 8.400415512465374, 7.153528211109491),
}


def stable_configs(laws=LAWS):
    @st.composite
    def build(draw):
        law = draw(st.sampled_from(laws))
        load = draw(st.floats(min_value=0.02, max_value=0.95))
        share = draw(st.floats(min_value=0.02, max_value=0.98))
        return QueueConfig(share * load * law.mu, (1 - share) * load * law.mu, law)

    return build()


@pytest.mark.parametrize("rates", list(MM1_APPROX))
def test_mm1_approximations_match_symbolic(rates):
    cfg = QueueConfig(*rates, Exponential(1.0))
    for which, ref in zip((1, 2, 3), MM1_APPROX[rates]):
        assert aoi_approx(cfg, which) == pytest.approx(float(ref), rel=1e-13)


@pytest.mark.parametrize("rates", list(GAMMA_APPROX))
def test_gamma_approximations_match_symbolic(rates):
    cfg = QueueConfig(*rates, Gamma(2.0, 2.0))
    got = (aoi_approx1(cfg), aoi_approx2(cfg), aoi_approx3(cfg))
    assert got == pytest.approx(GAMMA_APPROX[rates], rel=1e-13)


@given(
    l1=st.floats(min_value=0.01, max_value=0.5),
    l2=st.floats(min_value=0.0, max_value=0.45),
    mu=st.floats(min_value=0.5, max_value=5.0),
    a=st.floats(min_value=0.01, max_value=3.0),
)
def test_mm1_system_time_transform_is_exponential(l1, l2, mu, a):
    # in M/M/1 the system time is Exp(mu - lambda)
    lam = l1 + l2
    assume(lam < 0.95 * mu)
    c = mu - lam
    got = laplace_system_time(QueueConfig(l1, l2, Exponential(mu)), a)
    assert got.value == pytest.approx(c / (c + a), rel=1e-12)
    assert got.d1 == pytest.approx(-c / (c + a) ** 2, rel=1e-10)
    assert got.d2 == pytest.approx(2 * c / (c + a) ** 3, rel=1e-9)


@pytest.mark.parametrize("law", LAWS, ids=law_ids)
@pytest.mark.parametrize("load", [0.3, 0.7, 0.9])
@pytest.mark.parametrize("a", [0.05, 0.4, 2.0])
def test_system_time_derivatives_finite_difference(law, load, a):
    cfg = QueueConfig(0.4 * load * law.mu, 0.6 * load * law.mu, law)
    a = a * law.mu
    h = 1e-4 * a
    lo, mid, hi = (laplace_system_time(cfg, x) for x in (a - h, a, a + h))
    assert (hi.value - lo.value) / (2 * h) == pytest.approx(mid.d1, rel=1e-6)
    assert (hi.d1 - lo.d1) / (2 * h) == pytest.approx(mid.d2, rel=1e-6)


@pytest.mark.parametrize("law", LAWS, ids=law_ids)
def test_system_time_transform_near_zero(law):
    cfg = QueueConfig(0.3 * law.mu, 0.3 * law.mu, law)
    at0 = laplace_system_time(cfg, 0.0)
    assert at0.value == 1.0 and at0.d1 == -mean_delay(cfg)
    near = laplace_system_time(cfg, 1e-6 * law.mu)
    assert near.value == pytest.approx(1.0, abs=1e-5)
    assert -near.d1 == pytest.approx(mean_delay(cfg), rel=1e-4)


def test_pollaczek_khinchine_values():
    assert mean_wait(QueueConfig(0.25, 0.25, Exponential(1.0))) == pytest.approx(1.0)
    assert mean_delay(QueueConfig(0.25, 0.25, Exponential(1.0))) == pytest.approx(2.0)
    # deterministic-like gamma halves the M/M/1 wait in the limit of zero variance
    assert mean_wait(QueueConfig(0.25, 0.25, Gamma(1e6, 1e6))) == pytest.approx(0.5, rel=1e-5)


@given(stable_configs())
def test_p_brief_matches_closed_form(cfg):
    direct = p_brief_closed_form(cfg)
    assert p_brief(cfg) == pytest.approx(direct, rel=1e-9, abs=1e-12)
    assert 0.0 < p_long(cfg) < 1.0
    assert p_brief(cfg) + p_long(cfg) == pytest.approx(1.0)


def test_p_long_for_mm1():
    # P(X > T) with X ~ Exp(l1), T ~ Exp(mu - lam) is (mu - lam) / (mu - lam + l1)
    cfg = QueueConfig(0.4, 0.5, Exponential(1.0))
    assert p_long(cfg) == pytest.approx(0.1 / 0.5)
    assert p_long(QueueConfig(1e-8, 0.5, Exponential(1.0))) == pytest.approx(1.0, abs=1e-7)


@given(stable_configs())
def test_approx2_never_below_approx1(cfg):
    assert aoi_approx2(cfg) >= aoi_approx1(cfg) - 1e-12 * abs(aoi_approx1(cfg))


@given(stable_configs())
def test_approximations_exceed_mean_service(cfg):
    for which in (1, 2, 3):
        assert aoi_approx(cfg, which) > cfg.service.mean()


@given(stable_configs())
def test_cross_moment_split_is_consistent(cfg):
    # feeding an approximation's long term back through the generic assembly reproduces it
    for which in (1, 3):
        long_part = long_cross_moment_approx(cfg, which)
        assert aoi_from_long_cross_moment(cfg, long_part) == pytest.approx(aoi_approx(cfg, which), rel=1e-13)
    assert brief_cross_moment(cfg) > 0


def test_single_source_mm1_is_three_and_a_half():
    assert aoi_single_source_mg1(0.5, Exponential(1.0)) == pytest.approx(3.5, abs=1e-12)


@given(lam=st.floats(min_value=0.01, max_value=0.95), mu=st.floats(min_value=0.2, max_value=5.0))
def test_single_source_mm1_closed_form(lam, mu):
    # (1/mu) (1 + 1/rho + rho^2 / (1 - rho))
    rho = lam / mu
    assume(rho < 0.98)
    ref = (1 + 1 / rho + rho**2 / (1 - rho)) / mu
    assert aoi_single_source_mg1(lam, Exponential(mu)) == pytest.approx(ref, rel=1e-12)


@pytest.mark.parametrize("law", LAWS, ids=law_ids)
@pytest.mark.parametrize("load", [0.2, 0.5, 0.8])
def test_approximations_reduce_to_single_source(law, load):
    single = aoi_single_source_mg1(load * law.mu, law)
    cfg = QueueConfig(load * law.mu, 1e-9, law)
    assert aoi_approx1(cfg) == pytest.approx(single, rel=1e-5)
    assert aoi_approx3(cfg) == pytest.approx(single, rel=1e-5)


def test_unstable_is_rejected():
    cfg = QueueConfig(0.4, 0.6, Exponential(1.0))
    assert not cfg.stable
    for fn in (mean_wait, p_long, aoi_approx1, aoi_approx2, aoi_approx3):
        with pytest.raises(Unstable):
            fn(cfg)
    with pytest.raises(Unstable):
        aoi_single_source_mg1(1.2, Exponential(1.0))


def test_config_folding_and_validation():
    cfg = QueueConfig.from_rates([0.1, 0.2, 0.3], Exponential(2.0), tagged=1)
    assert (cfg.lambda1, cfg.lambda2) == pytest.approx((0.2, 0.4))
    assert cfg.rho == pytest.approx(0.3) and cfg.rho1 == pytest.approx(0.1)
    with pytest.raises(ValueError):
        QueueConfig(0.0, 0.1, Exponential(1.0))
    with pytest.raises(ValueError):
        QueueConfig(0.1, -0.1, Exponential(1.0))
    with pytest.raises(ValueError):
        aoi_approx(QueueConfig(0.1, 0.1, Exponential(1.0)), 4)
    with pytest.raises(ValueError):
        laplace_system_time(QueueConfig(0.1, 0.1, Exponential(1.0)), -1.0)
