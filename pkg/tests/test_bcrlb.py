import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from adpmcmc.bcrlb import (
    bcrlb_marginal, d_terms_from_moments, estimate_d_terms, fim_recursion, fim_step, fim_trace,
    kalman_information_filter_M0,
)
from adpmcmc.models import DomainError, ModelId, Params, transition_mean_derivative
from adpmcmc.particle_filter import ParticleCloud, run_sir
from adpmcmc.rng import make_rng
from adpmcmc.sampler import ChainRecord, SamplerConfig

from conftest import EXAMPLE_PARAMS, FLEX_ALLEE, THETA_LOGISTIC

GOLDEN = (1 + math.sqrt(5)) / 2


def test_fim_step_examples():
    assert fim_step(1.0, 1.0, -1.0, 2.0) == pytest.approx(1.5)
    assert fim_step(3.0, 0.7, 0.0, 2.5) == 2.5
    J = 1.0
    for _ in range(100):
        J = fim_step(J, 1.0, -1.0, 2.0)
    assert abs(J - GOLDEN) < 1e-12
    with pytest.raises(DomainError):
        fim_step(-1.0, 0.5, 0.1, 1.0)


def cloud_at(x, L=1):
    return ParticleCloud(np.full(L, x), np.zeros(L), np.full(L, 1.0 / L), np.arange(L))


def test_d_terms_examples():
    p = Params((0.2,), 0.5, 0.25)
    rng = make_rng(0)
    c = ParticleCloud(rng.normal(size=10), np.zeros(10), rng.dirichlet(np.ones(10)), np.arange(10))
    assert estimate_d_terms(ModelId.M0, c, p) == pytest.approx((2.0, -2.0, 6.0))
    d11, d12, d22 = estimate_d_terms(ModelId.M4, cloud_at(0.0), FLEX_ALLEE)
    assert d11 == pytest.approx(1.0475 ** 2 / FLEX_ALLEE.sigma_eps2, rel=1e-14)
    assert d12 == pytest.approx(-1.0475 / FLEX_ALLEE.sigma_eps2, rel=1e-14)


@pytest.mark.parametrize("model", list(ModelId))
def test_degenerate_cloud_matches_symbolic_terms(model):
    p = EXAMPLE_PARAMS[model]
    q, r = p.sigma_eps2, p.sigma_w2
    for x in np.linspace(-2, 3, 11):
        phi = transition_mean_derivative(model, x, p)
        got = estimate_d_terms(model, cloud_at(x, L=7), p)
        assert got == pytest.approx((phi * phi / q, -phi / q, 1 / q + 1 / r), rel=1e-12)


@pytest.mark.parametrize("model", list(ModelId))
def test_kernel_moments_match_python_d_terms(model, m2_data):
    p = EXAMPLE_PARAMS[model]
    out = run_sir(model, p, m2_data.y, 80, 1.0, make_rng(5))
    tr = fim_trace(model, out, p)
    assert tr.d_terms[0] == pytest.approx(estimate_d_terms(model, cloud_at(p.x0), p), rel=1e-12)
    for t in (1, 17, 49):
        assert tr.d_terms[t] == pytest.approx(estimate_d_terms(model, out.cloud(t - 1), p), rel=1e-10)
    assert np.all(tr.J > 0) and np.allclose(tr.bound, 1 / tr.J)


def record_at(model, p, T, phi=None):
    return ChainRecord(model, p.vector()[None, :], np.array([True]), np.zeros(1), None, phi)


def test_point_mass_m0_matches_kalman_bounds(m0_series):
    p, y = m0_series
    out = run_sir(ModelId.M0, p, y, 50, 1.0, make_rng(1))
    phi = np.stack([np.ones(len(y)), np.ones(len(y))], axis=1)[None]
    summ = bcrlb_marginal(ModelId.M0, y, record_at(ModelId.M0, p, len(y), phi))
    exact = kalman_information_filter_M0(p, y).exact_J
    assert np.allclose(summ.per_t_bounds, 1 / exact, rtol=1e-10, atol=0)
    assert np.allclose(fim_trace(ModelId.M0, out, p).J, exact, rtol=1e-12)
    assert summ.avg_root_bound == pytest.approx(math.sqrt(np.mean(1 / exact)))


def test_regenerated_moments(m2_data):
    rec = record_at(ModelId.M2, THETA_LOGISTIC, 50)
    with pytest.raises(ValueError):
        bcrlb_marginal(ModelId.M2, m2_data.y, rec)
    cfg = SamplerConfig(L=200)
    a = bcrlb_marginal(ModelId.M2, m2_data.y, rec, cfg, rng=make_rng(3))
    out = run_sir(ModelId.M2, THETA_LOGISTIC, m2_data.y, 200, 1.0, make_rng(3))
    assert np.allclose(a.per_t_bounds, fim_trace(ModelId.M2, out, THETA_LOGISTIC).bound)
    with pytest.raises(ValueError):
        bcrlb_marginal(ModelId.M2, m2_data.y, ChainRecord(ModelId.M2, np.empty((0, 6)), np.empty(0, bool), np.empty(0)))


def test_root_aggregation_flag():
    phi = np.ones((2, 5, 2))
    theta = np.array([[0.1, 0.2, 0.3, 0.0], [0.1, 0.5, 0.1, 0.0]])
    rec = ChainRecord(ModelId.M0, theta, np.ones(2, bool), np.zeros(2), None, phi)
    after = bcrlb_marginal(ModelId.M0, np.zeros(5), rec).avg_root_bound
    before = bcrlb_marginal(ModelId.M0, np.zeros(5), rec, root_after_average=False).avg_root_bound
    per = [1 / kalman_information_filter_M0(Params.from_vector(ModelId.M0, t), np.zeros(5)).exact_J for t in theta]
    assert after == pytest.approx(math.sqrt(np.mean(per)))
    assert before == pytest.approx(np.mean([math.sqrt(np.mean(b)) for b in per]))
    assert before <= after


def test_more_informative_observations_tighten_every_bound(m2_data):
    out = run_sir(ModelId.M2, THETA_LOGISTIC, m2_data.y, 100, 1.0, make_rng(2))
    phi = fim_trace(ModelId.M2, out, THETA_LOGISTIC)
    p_half = Params(THETA_LOGISTIC.b, THETA_LOGISTIC.sigma_eps2, THETA_LOGISTIC.sigma_w2 / 2, THETA_LOGISTIC.x0)
    moments = np.stack([-phi.d_terms[:, 1], phi.d_terms[:, 0]], axis=1) * THETA_LOGISTIC.sigma_eps2
    half = fim_recursion(d_terms_from_moments(moments, p_half.sigma_eps2, p_half.sigma_w2), 1 / p_half.sigma_eps2)
    assert np.all(half.bound < phi.bound)


@settings(max_examples=100, deadline=None)
@given(model=st.sampled_from(list(ModelId)), seed=st.integers(0, 2 ** 31),
       q=st.floats(0.01, 1.0), r=st.floats(0.01, 1.0))
def test_bounds_positive_and_below_observation_variance(model, seed, q, r, m2_data):
    base = EXAMPLE_PARAMS[model]
    p = Params(base.b, q, r, base.x0)
    out = run_sir(model, p, m2_data.y[:20], 30, 1.0, make_rng(seed))
    if not np.isfinite(out.log_marginal):
        return
    b = fim_trace(model, out, p).bound
    assert np.all(b > 0)
    # J_t >= 1/r because E[f']^2 <= E[f'^2] (Jensen).
    assert np.all(b <= r * (1 + 1e-9))


def test_bound_can_exceed_one_step_sum():
    # With r >> q the steady-state bound exceeds 1/d22 + 1/J0, so that is no upper bound.
    p = Params((0.0,), 0.01, 1.0)
    J = kalman_information_filter_M0(p, np.zeros(200)).exact_J
    assert 1 / J[-1] > 1 / (1 / 0.01 + 1 / 1.0) + 0.01


def test_particle_count_barely_moves_the_bound(m2_data):
    vals = []
    for L in (50, 5000):
        out = run_sir(ModelId.M2, THETA_LOGISTIC, m2_data.y, L, 1.0, make_rng(L))
        vals.append(math.sqrt(fim_trace(ModelId.M2, out, THETA_LOGISTIC).bound.mean()))
    assert abs(vals[0] - vals[1]) / vals[1] < 0.02


def test_kalman_golden_ratio():
    J = kalman_information_filter_M0(Params((0.3,), 1.0, 1.0), np.zeros(60)).exact_J
    assert J[0] == pytest.approx(1.5)
    assert abs(J[-1] - GOLDEN) < 1e-12


def dense_m0_loglik(p, y, x0_var=0.0):
    T = len(y)
    t = np.arange(1, T + 1)
    mean = p.x0 + p.b[0] * t
    cov = p.sigma_eps2 * np.minimum.outer(t, t) + p.sigma_w2 * np.eye(T) + x0_var
    return stats.multivariate_normal(mean, cov).logpdf(y)


@pytest.mark.parametrize("x0_var", [0.0, 0.7])
def test_kalman_matches_dense_gaussian(m0_series, x0_var):
    p, y = m0_series
    k = kalman_information_filter_M0(p, y, x0_var)
    assert k.log_likelihood == pytest.approx(dense_m0_loglik(p, y, x0_var), rel=1e-10)
    assert np.all(k.variances > 0) and k.means.shape == (len(y),)


def test_kalman_uninformative_observations():
    p = Params((0.1,), 0.2, 1e12)
    k = kalman_information_filter_M0(p, np.linspace(-3, 3, 10))
    k2 = kalman_information_filter_M0(p, np.zeros(10))
    assert k.log_likelihood == pytest.approx(k2.log_likelihood, abs=1e-9)
    J, pred = 1 / 0.2, []
    for _ in range(10):
        J = 1 / (0.2 + 1 / J)
        pred.append(J)
    assert np.allclose(k.exact_J, pred, rtol=1e-9)
    with pytest.raises(ValueError):
        kalman_information_filter_M0(Params((0.1, 0.2), 1, 1), [0.0])
