import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import linalg

from maxchoice import clt_theory as ct
from maxchoice import degree_dist as dd
from maxchoice import graph_engine as ge
from maxchoice.graph_engine import ModelParams

from conftest import betas, params, small_tables, tree_degrees


def onestep_covariance(by_degree, k):
    """Covariance of (dN_1..dN_k) from the law of the winner's degree, by applying each move."""
    mean = np.zeros(k)
    second = np.zeros((k, k))
    for j, p in enumerate(by_degree):
        if p == 0:
            continue
        delta = np.zeros(max(k, j) + 2)
        delta[1] += 1
        delta[j] -= 1
        delta[j + 1] += 1
        dv = delta[1:k + 1]
        mean += p * dv
        second += p * np.outer(dv, dv)
    return second - np.outer(mean, mean)


def test_h_linear_case():
    p = params(0.0, 1)
    assert ct.h_eval(0, [], p) == 1.0
    assert ct.h_eval(1, [0.6], p) == pytest.approx(0.3)
    assert ct.h_eval(2, [0.6, 0.2], p) == pytest.approx(0.2)


def test_h_two_choices_example():
    assert ct.h_eval(2, [0.8, 0.1], params(0.0, 2)) == pytest.approx(0.09, abs=1e-15)


def test_h_domain():
    with pytest.raises(ValueError):
        ct.h_eval(1, [float("nan")], params())
    with pytest.raises(ValueError):
        ct.h_eval(2, [1.0, 1.0], params())
    with pytest.raises(ValueError):
        ct.h_eval(1, [-0.1], params())
    with pytest.raises(ValueError):
        ct.h_eval(3, [0.1, 0.1], params())


def test_g_examples():
    np.testing.assert_allclose(ct.g_vec_eval([2 / 3, 1 / 6], params()), [0, 0], atol=1e-15)
    np.testing.assert_array_equal(ct.g_vec_eval(np.zeros(4), params(0.5, 3)), [1, 0, 0, 0])


@st.composite
def prefix(draw):
    k = draw(st.integers(1, 8))
    beta = draw(betas)
    raw = np.array(draw(st.lists(st.floats(0.0, 1.0), min_size=k, max_size=k)))
    w = (np.arange(1, k + 1) + beta) / (2 + beta)
    total = raw @ w
    scale = draw(st.floats(0.0, 1.0)) / total if total > 1e-6 else 0.0
    return raw * scale, beta


@given(data=prefix(), dist=small_tables(max_value=5))
@settings(max_examples=200, deadline=None)
def test_g_components_telescope(data, dist):
    x, beta = data
    p = ModelParams(beta, dist)
    k = x.size
    assert ct.g_vec_eval(x, p).sum() == pytest.approx(1 - ct.h_eval(k, x, p) - x.sum(), abs=1e-12)


def test_rho_single_choice():
    rho = ct.solve_rho_star(3, params())
    np.testing.assert_allclose(rho.values, [2 / 3, 1 / 6, 1 / 15], atol=1e-13)
    classical = [4 / (k * (k + 1) * (k + 2)) for k in range(1, 21)]
    np.testing.assert_allclose(ct.solve_rho_star(20, params()).values, classical, atol=1e-13)


def test_rho_two_choices():
    rho = ct.solve_rho_star(1, params(0.0, 2))
    assert rho.values[0] == pytest.approx(2 * math.sqrt(2) - 2, abs=1e-13)


@pytest.mark.parametrize("p", [ModelParams(0.5, dd.poisson(3.0)), params(0.0, 2), params(-0.5, 1),
                               ModelParams(2.0, dd.table({1: 0.3, 5: 0.7}))])
def test_rho_contract(p):
    rho = ct.solve_rho_star(10, p)
    assert np.all(rho.residuals < 1e-12)
    assert np.all(rho.values > 0) and np.all(np.diff(rho.values) < 0)
    assert rho.values.sum() <= 1


def test_rho_stable_under_truncation():
    coarse = ct.solve_rho_star(10, ModelParams(0.5, dd.poisson(3.0, truncation=1e-12))).values
    fine = ct.solve_rho_star(10, ModelParams(0.5, dd.poisson(3.0, truncation=1e-15))).values
    assert np.max(np.abs(coarse - fine)) < 1e-9


def test_stationary_choice_law_decreasing():
    p = ModelParams(0.0, dd.poisson(2.0))
    q = ct.stationary_choice_law(ct.solve_rho_star(8, p).values, p)
    assert np.all((q > 0) & (q < 1)) and np.all(np.diff(q) < 0)


@pytest.mark.parametrize("p", [params(0.0, 2), params(0.7, 3), ModelParams(-0.4, dd.poisson(1.5))])
def test_jacobian_matches_finite_differences(p):
    k = 4
    rho = ct.solve_rho_star(k, p).values
    jac, eig = ct.jacobian_G(rho, p)
    np.testing.assert_array_equal(eig, np.diag(jac))
    assert np.all(np.triu(jac, 1) == 0)
    step = 1e-6
    for j in range(k):
        e = np.zeros(k)
        e[j] = step
        col = (ct.g_vec_eval(rho + e, p) - ct.g_vec_eval(rho - e, p)) / (2 * step)
        np.testing.assert_allclose(jac[:, j], col, rtol=1e-6, atol=1e-9)


def test_eigenvalues_single_choice():
    _, eig = ct.jacobian_G(ct.solve_rho_star(5, params()).values, params())
    np.testing.assert_allclose(eig, [-(i / 2) - 1 for i in range(1, 6)], atol=1e-14)


@pytest.mark.parametrize("p", [params(0.0, 2), ModelParams(0.5, dd.poisson(3.0)), params(-0.5, 4)])
def test_eigenvalues_below_minus_one(p):
    _, eig = ct.jacobian_G(ct.solve_rho_star(8, p).values, p)
    assert np.all(eig < -1)


def test_noise_scalar():
    rho = ct.solve_rho_star(1, params()).values
    assert ct.noise_covariance(rho, params())[0, 0] == pytest.approx(2 / 9, abs=1e-15)


def test_noise_symmetric():
    p = ModelParams(0.5, dd.poisson(3.0))
    u = ct.noise_covariance(ct.solve_rho_star(7, p).values, p)
    np.testing.assert_array_equal(u, u.T)
    assert np.all(np.linalg.eigvalsh(u) > -1e-14)


@given(degrees=tree_degrees(min_vertices=3, max_vertices=7), beta=betas, dist=small_tables(),
       k=st.integers(1, 5))
@settings(max_examples=100, deadline=None)
def test_noise_matches_enumeration_on_small_trees(degrees, beta, dist, k):
    p = ModelParams(beta, dist)
    state = ge.tree_from_degrees(degrees)
    exact = onestep_covariance(ge.enumerate_choice_degrees(state, p), k)
    u = ct.noise_covariance(ct.empirical_fractions(state, k, beta), p)
    np.testing.assert_allclose(u, exact, atol=1e-12)


@pytest.mark.parametrize("p", [params(0.0, 2), ModelParams(0.5, dd.poisson(3.0))])
def test_noise_matches_onestep_law_on_grown_tree(p):
    k = 6
    state = ge.grow(ge.init_tree(p), p, np.random.default_rng(7), 10**4)
    exact = onestep_covariance(ge.choice_degree_distribution(state, p), k)
    np.testing.assert_allclose(ct.noise_covariance(ct.empirical_fractions(state, k, p.beta), p), exact,
                               atol=1e-12)
    # the frozen tree sits close to the fixed point, so the limiting U is nearby
    u_star = ct.noise_covariance(ct.solve_rho_star(k, p).values, p)
    assert np.max(np.abs(u_star - exact)) < 0.02


def test_limit_scalar():
    rep = ct.clt_report(1, params())
    assert rep.limit[0, 0] == pytest.approx(1 / 9, abs=1e-15)


def test_limit_residual_two_choices():
    rep = ct.clt_report(6, params(0.0, 2))
    assert rep.lyapunov_residual < 1e-10
    np.testing.assert_array_equal(rep.limit, rep.limit.T)
    assert np.all(np.linalg.eigvalsh(rep.limit) > 0)


@pytest.mark.parametrize("p", [params(0.0, 2), ModelParams(0.5, dd.poisson(3.0)), params(1.0, 1)])
def test_limit_matches_scipy_and_dense(p):
    rep = ct.clt_report(8, p)
    a = np.eye(8) + 2 * rep.jacobian
    reference = linalg.solve_continuous_lyapunov(a, -2 * rep.noise)
    np.testing.assert_allclose(rep.limit, reference, rtol=1e-8, atol=1e-14)
    np.testing.assert_allclose(rep.limit, ct.limit_covariance_dense(rep.jacobian, rep.noise),
                               rtol=1e-8, atol=1e-14)


def test_limit_matches_integral_representation():
    rep = ct.clt_report(2, params(0.0, 2))
    a = np.eye(2) + 2 * rep.jacobian
    h = 1e-3
    step = linalg.expm(a * h)
    prop = np.eye(2)
    ts = np.arange(0.0, 30.0, h)
    values = np.empty((ts.size, 2, 2))
    for i in range(ts.size):
        values[i] = prop @ (2 * rep.noise) @ prop.T
        prop = step @ prop
    integral = h * (values.sum(axis=0) - 0.5 * (values[0] + values[-1]))
    np.testing.assert_allclose(rep.limit, integral, atol=1e-6)


def test_limit_rejects_unstable_system():
    with pytest.raises(np.linalg.LinAlgError):
        ct.limit_covariance(np.array([[0.5]]), np.array([[1.0]]))


def test_partial_sums():
    p = params()
    np.testing.assert_allclose(ct.partial_sums(ct.solve_rho_star(2, p).values, p), [1 / 3, 1 / 2], atol=1e-14)
    s = ct.partial_sums(ct.solve_rho_star(50, p).values, p)
    assert np.all(np.diff(s) > 0) and s[-1] <= 1 and s[-1] > 0.96


def test_report_text():
    text = ct.clt_report(3, params(0.0, 2)).text()
    assert "eigenvalues" in text and "Lyapunov residual" in text
