import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate, stats

from dualfilter.errors import InputError
from dualfilter.models import CIRModel, OUModel, WFModel, make_model

CIR = CIRModel(delta=2, gamma=1, sigma2=1, lambda_em=1)


def test_cir_h_examples():
    xs = np.array([0.1, 1.0, 7.5])
    np.testing.assert_allclose(CIR.h_eval(xs, (0,), CIR.stationary_theta), 1.0, rtol=1e-15)
    assert CIR.h_eval(0.5, (1,), 2.0) == pytest.approx(2 * math.exp(-0.5), rel=1e-14)
    ratio = stats.gamma(2, scale=0.5).pdf(0.5) / stats.gamma(1).pdf(0.5)
    assert CIR.h_eval(0.5, (1,), 2.0) == pytest.approx(ratio, rel=1e-12)


def test_wf_h_is_one_at_zero_index():
    wf = WFModel((0.5, 1.5, 2.0))
    x = np.array([[0.2, 0.3, 0.5], [0.9, 0.05, 0.05]])
    np.testing.assert_allclose(wf.h_eval(x, (0, 0, 0), None), 1.0, rtol=1e-15)


def test_state_space_violations():
    with pytest.raises(InputError):
        CIR.h_eval(-1.0, (1,), 1.0)
    with pytest.raises(InputError):
        WFModel((1.0, 1.0)).h_eval([0.7, 0.7], (1, 0), None)
    # small simplex drift is accepted and renormalised
    assert WFModel((1.0, 1.0)).h_eval([0.5 + 5e-10, 0.5], (1, 0), None) == pytest.approx(1.0, rel=1e-8)


def test_conjugate_update_examples():
    assert CIR.conjugate_update(0, (2,), 1.5) == ((2,), 2.5)
    assert WFModel((1.0, 1.0)).conjugate_update((3, 1), (0, 0)) == ((3, 1), None)
    ou = OUModel(gamma=0, alpha=1, sigma2=1, lambda_em=1)
    assert ou.conjugate_update(2.0, (), (0.0, 1.0)) == ((), (1.0, 0.5))


def test_predictive_const_examples():
    ou = OUModel(gamma=0, alpha=1, sigma2=1, lambda_em=1)
    assert ou.predictive_const((), (0.0, 1.0), 0.0) == pytest.approx(1 / math.sqrt(4 * math.pi), rel=1e-14)
    assert WFModel((1.0, 1.0)).predictive_const((0, 0), None, (1, 0)) == pytest.approx(0.5, rel=1e-14)
    assert CIR.predictive_const((0,), 1.0, 0) == pytest.approx(0.5, rel=1e-14)


def test_theta_flow_examples():
    assert CIR.theta_flow(3.0, 0.0) == 3.0
    for t in (0.1, 1.0, 50.0):
        assert CIR.theta_flow(CIR.stationary_theta, t) == pytest.approx(CIR.stationary_theta, rel=1e-15)
    ou = OUModel(gamma=0, alpha=1, sigma2=1, lambda_em=1)
    mu, tau = ou.theta_flow((5.0, 0.5), 40.0)
    assert mu == pytest.approx(0.0, abs=1e-12) and tau == pytest.approx(1.0, abs=1e-12)
    assert WFModel((1.0, 2.0)).theta_flow(None, 1.0) is None


def test_flows_solve_their_odes():
    cir = CIRModel(delta=3, gamma=0.7, sigma2=0.4, lambda_em=1)
    g = cir.stationary_theta
    sol = integrate.solve_ivp(lambda t, y: 2 * cir.sigma2 * y * (g - y), (0, 2.0), [5.0],
                              method="DOP853", rtol=1e-12, atol=1e-14, dense_output=True)
    for t in (0.1, 0.5, 2.0):
        assert cir.theta_flow(5.0, t) == pytest.approx(sol.sol(t)[0], rel=1e-10)
    ou = OUModel(gamma=0.3, alpha=1.5, sigma2=0.8, lambda_em=1)
    r = ou.sigma2 / ou.alpha
    sol = integrate.solve_ivp(lambda t, y: [-r * (y[0] - ou.gamma), -2 * r * (y[1] - ou.alpha)],
                              (0, 3.0), [5.0, 0.5], method="DOP853", rtol=1e-12, atol=1e-14,
                              dense_output=True)
    for t in (0.2, 3.0):
        np.testing.assert_allclose(ou.theta_flow((5.0, 0.5), t), sol.sol(t), rtol=1e-10)


def test_rho_integral_examples():
    assert CIR.rho_integral(4.0, 0.0) == 0.0
    assert WFModel((1.0, 1.0)).rho_integral(None, 2.5) == 2.5
    assert CIR.rho_integral(1.0, 0.7) == pytest.approx(0.7, rel=1e-14)
    cir = CIRModel(delta=3, gamma=0.7, sigma2=0.4, lambda_em=1)
    num, _ = integrate.quad(lambda s: cir.theta_flow(0.3, s), 0, 1.3, epsabs=1e-13)
    assert cir.rho_integral(0.3, 1.3) == pytest.approx(num, rel=1e-10)
    # large-time branch
    assert cir.rho_integral(0.3, 40.0) == pytest.approx(
        integrate.quad(lambda s: cir.theta_flow(0.3, s), 0, 40.0, limit=200)[0], rel=1e-9)


def test_binomial_transition_examples():
    assert CIR.binomial_transition(3, 0, 0.0, 2.5) == 1.0
    assert CIR.binomial_transition(0, 0, 4.0, 2.5) == 1.0
    assert CIR.binomial_transition(3, 1, math.log(2) / 2, 1.0) == pytest.approx(3 / 8, rel=1e-14)


def test_death_kernel_specs():
    spec = CIRModel(delta=1, gamma=1, sigma2=1, lambda_em=1).death_kernel_spec()
    assert spec.lambda_fn(7) == 2.0 and spec.level_rate(7) == 14.0
    wf = WFModel((1.0, 0.5, 1.5)).death_kernel_spec()
    assert wf.lambda_fn(2) == pytest.approx(2.0)
    rates = wf.level_rates(20)
    assert np.all(np.diff(rates) > 0)
    with pytest.raises(InputError):
        OUModel(gamma=0, alpha=1, sigma2=1, lambda_em=1).death_kernel_spec()


@pytest.mark.parametrize("bad", [
    dict(delta=0, gamma=1, sigma2=1, lambda_em=1),
    dict(delta=1, gamma=1, sigma2=1, lambda_em=0),
    dict(delta=1, gamma=-1, sigma2=1, lambda_em=1),
])
def test_cir_parameter_domain(bad):
    with pytest.raises(InputError):
        CIRModel(**bad)


def test_make_model_reports_problems():
    assert make_model("cir", delta=2, gamma=1, sigma2=1, lambda_em=1) == CIRModel(2, 1, 1, 1)
    with pytest.raises(InputError, match="lambda_em"):
        make_model("cir", delta=2, gamma=1, sigma2=1)
    with pytest.raises(InputError, match="delta"):
        make_model("wf", alpha=(1.0, 2.0), delta=1)
    with pytest.raises(InputError):
        make_model("heston", alpha=1)
    with pytest.raises(InputError):
        WFModel((1.0,))


# -- normalisation and conjugacy against quadrature -------------------------

@pytest.mark.parametrize("m, theta", [(0, 1.0), (3, 0.4), (7, 2.5)])
def test_cir_components_integrate_to_one(m, theta):
    cir = CIRModel(delta=3, gamma=0.5, sigma2=0.5, lambda_em=2)
    f = lambda x: math.exp(cir.log_h(x, (m,), theta) + cir.log_stationary_density(x))
    val, _ = integrate.quad(f, 0, np.inf, epsabs=1e-13, epsrel=1e-12, limit=200)
    assert val == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("theta", [(0.0, 1.0), (2.0, 0.3), (-1.0, 3.0)])
def test_ou_components_integrate_to_one(theta):
    ou = OUModel(gamma=0.5, alpha=2.0, sigma2=1.0, lambda_em=0.5)
    f = lambda x: math.exp(ou.log_h(x, (), theta) + ou.log_stationary_density(x))
    val, _ = integrate.quad(f, -np.inf, np.inf, epsabs=1e-13, epsrel=1e-12)
    assert val == pytest.approx(1.0, abs=1e-8)


@pytest.mark.parametrize("alpha, m", [((0.7, 1.3), (2, 0)), ((1.0, 2.0, 0.5), (1, 3, 2)),
                                      ((0.5, 0.5, 1.0, 2.0), (0, 1, 0, 4))])
def test_wf_components_integrate_to_one(alpha, m):
    wf = WFModel(alpha)
    rng = np.random.default_rng(11)
    x = rng.dirichlet(alpha, 200_000)
    h = wf.h_eval(x, m, None)
    se = h.std() / math.sqrt(len(h))
    assert abs(h.mean() - 1.0) < 3 * se


@pytest.mark.parametrize("m, theta, y", [(0, 1.0, 0), (2, 0.7, 3), (5, 3.0, 11)])
def test_cir_predictive_const_matches_quadrature(m, theta, y):
    cir = CIRModel(delta=3, gamma=0.5, sigma2=0.5, lambda_em=2)
    f = lambda x: math.exp(cir.log_emission(x, y) + cir.log_h(x, (m,), theta)
                           + cir.log_stationary_density(x))
    val, _ = integrate.quad(f, 0, np.inf, epsabs=1e-14, epsrel=1e-12, limit=200)
    assert cir.predictive_const((m,), theta, y) == pytest.approx(val, rel=1e-8)


def test_wf_predictive_const_matches_quadrature():
    wf = WFModel((0.8, 1.7))
    m, y = (2, 1), (3, 4)
    f = lambda p: math.exp(wf.log_emission(np.array([p, 1 - p]), np.array(y))
                           + wf.log_h(np.array([p, 1 - p]), m)
                           + wf.log_stationary_density(np.array([p, 1 - p])))
    val, _ = integrate.quad(f, 0, 1, epsabs=1e-14, epsrel=1e-12)
    assert wf.predictive_const(m, None, y) == pytest.approx(val, rel=1e-8)


def test_moments_match_components():
    cir = CIRModel(delta=3, gamma=0.5, sigma2=0.5, lambda_em=2)
    mean, second = cir.component_moments((4,), 1.7)
    dist = stats.gamma(1.5 + 4, scale=1 / 1.7)
    assert mean == pytest.approx(dist.mean()) and second == pytest.approx(dist.moment(2))
    wf = WFModel((1.0, 2.0, 3.0))
    mean, second = wf.component_moments((1, 0, 2))
    d = stats.dirichlet([2.0, 2.0, 5.0])
    np.testing.assert_allclose(mean, d.mean())
    np.testing.assert_allclose(second - mean**2, d.var())


# -- properties --------------------------------------------------------------

pos = st.floats(0.05, 10.0)


@given(pos, pos, pos, st.floats(0.0, 3.0), st.floats(0.0, 3.0))
def test_cir_flow_is_a_semigroup(gamma, sigma2, theta, s, t):
    cir = CIRModel(delta=1.0, gamma=gamma, sigma2=sigma2, lambda_em=1.0)
    lhs = cir.theta_flow(cir.theta_flow(theta, s), t)
    assert lhs == pytest.approx(cir.theta_flow(theta, s + t), rel=1e-10)
    # the clock is additive along the flow
    tau = cir.rho_integral(theta, s) + cir.rho_integral(cir.theta_flow(theta, s), t)
    assert tau == pytest.approx(cir.rho_integral(theta, s + t), rel=1e-10, abs=1e-300)


@given(st.floats(-5, 5), pos, pos, st.floats(-5, 5), pos, st.floats(0, 3), st.floats(0, 3))
def test_ou_flow_is_a_semigroup(gamma, alpha, sigma2, mu, tau, s, t):
    ou = OUModel(gamma=gamma, alpha=alpha, sigma2=sigma2, lambda_em=1.0)
    lhs = ou.theta_flow(ou.theta_flow((mu, tau), s), t)
    np.testing.assert_allclose(lhs, ou.theta_flow((mu, tau), s + t), rtol=1e-10, atol=1e-12)


@given(st.floats(0.1, 5), st.integers(0, 20), st.integers(0, 20), st.floats(0.01, 5),
       st.floats(0.01, 30))
def test_cir_conjugacy_pointwise(delta, m, y, theta, x):
    # f_x(y) h(x, m, theta) = c(m, theta, y) h(x, m', theta')
    cir = CIRModel(delta=delta, gamma=0.8, sigma2=0.6, lambda_em=1.7)
    n, theta2 = cir.conjugate_update(y, (m,), theta)
    lhs = cir.log_emission(x, y) + cir.log_h(x, (m,), theta)
    rhs = cir.log_predictive_const((m,), theta, y) + cir.log_h(x, n, theta2)
    assert math.exp(lhs - rhs) == pytest.approx(1.0, rel=1e-10)
