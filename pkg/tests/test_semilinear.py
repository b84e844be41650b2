from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from semibeltrami.beltrami import (BeltramiCoefficient, LinearSolveConfig, residual_beltrami,
                                   solve_inhomogeneous)
from semibeltrami.errors import BlowupError, ConfigurationError, SupportError
from semibeltrami.generators import radial_bump
from semibeltrami.grid import ComplexField, RealField, core_mask, make_grid, norm_p
from semibeltrami.semilinear import (ContinuationConfig, Nonlinearity, compose_solution,
                                     factorize, image_grid, q_star, solve_semilinear,
                                     solve_semilinear_operator, vekua_residual)

G = make_grid(128, 2.0)


@pytest.fixture(scope="module")
def problem():
    mu = BeltramiCoefficient.from_field(radial_bump(G, 0.3, 0.9))
    sigma = radial_bump(G, 1.0, 0.8)
    return mu, sigma


@pytest.fixture(scope="module")
def neg_exp_solution(problem):
    mu, sigma = problem
    q = Nonlinearity.neg_exp_modulus()
    w, rep = solve_semilinear(mu, sigma, q)
    return q, w, rep


def test_nonlinearity_constructors():
    w = np.array([0.0, 3 + 4j])
    assert np.allclose(Nonlinearity.constant(2.0)(w), 2.0)
    assert np.allclose(Nonlinearity.power_modulus(0.5)(w), [0.0, np.sqrt(5.0)])
    assert np.allclose(Nonlinearity.power_modulus(0.5, 1.0)(w), [1.0, 26**0.25])
    assert np.allclose(Nonlinearity.neg_exp_modulus()(w), [1.0, np.exp(-5.0)])
    real = Nonlinearity.from_real(lambda u: u**2)
    assert real.real and np.allclose(real(w), [0.0, 9.0])
    for lam in (0.0, 1.0, -0.5):
        with pytest.raises(ConfigurationError):
            Nonlinearity.power_modulus(lam)


def test_sublinearity_probe():
    assert Nonlinearity.neg_exp_modulus().is_sublinear()
    assert Nonlinearity.power_modulus(0.5, 1.0).is_sublinear()
    assert Nonlinearity.constant(1.0).is_sublinear()
    assert not Nonlinearity(lambda w: w, "linear").is_sublinear()


@settings(deadline=None, max_examples=30)
@given(st.lists(st.floats(0.0, 50.0), min_size=1, max_size=8))
def test_q_star_is_monotone_and_dominates(ts):
    q = Nonlinearity(lambda w: np.abs(np.sin(w)) + 0.1 * np.abs(w) ** 0.5, "wiggle")
    vals = q_star(q, np.array(ts))
    order = np.argsort(ts)
    assert np.all(np.diff(vals[order]) >= 0)
    for t, v in zip(ts, vals):
        assert v >= abs(q(np.array([t]))[0]) - 1e-12


def test_q_star_rejects_negative_radius():
    with pytest.raises(ConfigurationError):
        q_star(Nonlinearity.constant(1.0), -1.0)


def test_config_validation():
    with pytest.raises(ConfigurationError):
        ContinuationConfig(damping=0.0)
    with pytest.raises(ConfigurationError):
        ContinuationConfig(tau_steps=0)


def test_noncompact_sigma_is_refused(problem):
    mu, _ = problem
    with pytest.raises(SupportError):
        solve_semilinear(mu, ComplexField(G, np.ones((128, 128))), Nonlinearity.constant(1.0))


def test_zero_weight_gives_zero_solution(problem):
    mu, _ = problem
    zero = ComplexField(G, np.zeros((128, 128)), 0.0)
    w, rep = solve_semilinear(mu, zero, Nonlinearity.neg_exp_modulus())
    assert rep.converged and w.sup() == 0.0


def test_constant_q_reduces_to_linear_solve(problem):
    mu, sigma = problem
    cfg = ContinuationConfig(inner_tol=1e-11)
    w, rep = solve_semilinear(mu, sigma, Nonlinearity.constant(1.0), cfg)
    lin, _ = solve_inhomogeneous(mu, sigma, LinearSolveConfig(tol=1e-13))
    assert rep.converged
    assert norm_p(w - lin, np.inf) <= 1e-9 * norm_p(lin, np.inf)


def test_fixed_point_certificate(problem, neg_exp_solution):
    mu, sigma = problem
    q, w, rep = neg_exp_solution
    assert rep.converged
    g = rep.extra["_source"]
    # recompute the certificate from the returned field alone
    target = sigma * ComplexField(G, q(w.data))
    assert norm_p(g - target, 2) / norm_p(sigma, 2) <= 1e-8
    assert residual_beltrami(mu, target, w) <= 1e-7
    # exp(-|w|) has a kink at the zero w(0) = 0; its grid-scale content
    # shows up only in the unprojected residual
    assert residual_beltrami(mu, target, w, full=True) < 1e-3
    assert w.value_at_origin() == 0
    assert rep.extra["tau_schedule"][-1] == 1.0
    assert len(rep.extra["tau_blocks"]) == ContinuationConfig().tau_steps
    assert rep.extra["apriori_radius"] > 0


def test_operator_form_with_weight(problem):
    mu, sigma = problem
    weight = RealField(G, np.abs(sigma.data), sigma.support_radius)
    q = Nonlinearity.neg_exp_modulus()
    w, rep = solve_semilinear_operator(mu, weight, lambda rho: rho * 1.0, q)
    assert rep.converged
    target = weight * ComplexField(G, q(w.data))
    assert norm_p(rep.extra["_source"] - target, 2) / norm_p(weight, 2) <= 1e-8


def test_iteration_cap_reports_stall(problem):
    mu, sigma = problem
    cfg = ContinuationConfig(inner_max_iter=2)
    _, rep = solve_semilinear(mu, sigma, Nonlinearity.neg_exp_modulus(), cfg)
    assert not rep.converged
    assert rep.extra["stalled_at_tau"] == rep.extra["tau_schedule"][0]


@pytest.mark.filterwarnings("ignore::RuntimeWarning")
def test_superlinear_growth_trips_guard(problem):
    mu, sigma = problem
    q = Nonlinearity(lambda w: np.exp(np.abs(w)) + 0j, "exp")
    with pytest.raises(BlowupError):
        solve_semilinear(mu, sigma * 20.0, q)


def test_factorization_roundtrip_and_vekua(problem, neg_exp_solution):
    mu, sigma = problem
    q, w, _ = neg_exp_solution
    fac = factorize(w, mu, sigma, q=q)
    assert fac.failed_fraction == 0.0
    img = image_grid(fac.map)
    assert img == fac.image_grid
    core = core_mask(G)
    back = compose_solution(fac.H, fac.map)
    assert np.abs(back.data - w.data)[core].max() <= 1e-4 * w.sup()
    assert vekua_residual(fac) <= 1e-3


def test_factorization_with_zero_mu_is_exact(problem):
    _, sigma = problem
    mu0 = BeltramiCoefficient.zero(G)
    q = Nonlinearity.neg_exp_modulus()
    w, _ = solve_semilinear(mu0, sigma, q)
    fac = factorize(w, mu0, sigma, q=q)
    back = compose_solution(fac.H, fac.map)
    assert np.array_equal(back.data, w.data)
    assert vekua_residual(fac) <= 1e-8


def test_compose_refuses_small_image_grid(problem, neg_exp_solution):
    mu, sigma = problem
    q, w, _ = neg_exp_solution
    fac = factorize(w, mu, sigma, q=q)
    small = ComplexField(make_grid(64, 0.5), np.zeros((64, 64)))
    with pytest.raises(ConfigurationError):
        compose_solution(small, fac.map)
