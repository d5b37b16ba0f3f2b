import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from numpy.testing import assert_allclose

from pkslab.errors import DomainError, HypothesisViolation, InvalidParameterError
from pkslab.potentials import (Nonlinearity, Potentials, cell_problem_g, check_hypotheses,
                               double_well_W, g_argmin, gamma_upper_bound, legendre_fstar,
                               legendre_fstar_prime, normalize, phase_constants,
                               surface_tension_gamma)

from oracles import fstar_brute, g_brute, h_scan


@pytest.mark.parametrize("m,rho_c", [(3, 0.5), (4, 0.5**0.5), (6, 0.5**0.25)])
def test_phase_constants_normalized(m, rho_c):
    nl = Nonlinearity.power_law(m)
    rc, a = phase_constants(nl)
    rs, as_ = h_scan(nl)
    assert_allclose(rc, rho_c, rtol=1e-12)
    assert abs(rc - rs) < 1e-8
    assert abs(a - as_) < 1e-8
    # -h(rho_c) evaluated directly
    assert_allclose(a, (m - 2) / (m - 1) * 0.5 ** ((m - 1) / (m - 2)), rtol=1e-12)


def test_phase_constants_chi_one():
    rc, a = phase_constants(Nonlinearity.power_law(3, beta=2.0, sigma=1.0))
    assert_allclose([rc, a], [1.0, 0.5], rtol=1e-12)


@pytest.mark.parametrize("m,beta,sigma", [(3, 3.0, 1.0), (4, 1.0, 0.3), (5, 2.0, 5.0)])
def test_a_matches_definition_not_displayed_exponent(m, beta, sigma):
    nl = Nonlinearity.power_law(m, beta, sigma)
    rc, a = phase_constants(nl)
    chi = beta / (2 * sigma)
    assert_allclose(rc, chi ** (1 / (m - 2)), rtol=1e-11)
    assert_allclose(a, (m - 2) / (m - 1) * chi ** ((m - 1) / (m - 2)), rtol=1e-11)
    stat = nl.fp(rc) * rc - nl.f(rc) - chi * rc**2
    assert abs(stat) <= 1e-10 * rc**2


def test_phase_constants_rejects_well_at_zero():
    # f = rho^2 (1 + rho): h = rho + rho^2 - rho/2 > 0 has its infimum at 0
    nl = Nonlinearity.custom(lambda r: r**2 * (1 + r), lambda r: 2 * r + 3 * r**2,
                             lambda r: 2 + 6 * r)
    with pytest.raises(HypothesisViolation):
        phase_constants(nl)


def test_invalid_parameters():
    with pytest.raises(InvalidParameterError, match="m must exceed 2"):
        Nonlinearity.power_law(1.5)
    with pytest.raises(InvalidParameterError):
        Nonlinearity.power_law(3, beta=0.0)
    with pytest.raises(InvalidParameterError):
        Nonlinearity.power_law(3, sigma=-1.0)
    with pytest.raises(InvalidParameterError):
        Nonlinearity.custom(lambda r: r + r**3, lambda r: 1 + 3 * r**2, lambda r: 6 * r)


def test_normalize_examples():
    nl = Nonlinearity.power_law(3, beta=2.0, sigma=1.0)
    n = normalize(nl)
    assert n.nonlinearity.is_normalized
    rho = np.linspace(0, 2, 11)
    assert_allclose(n.nonlinearity.fp(rho), 3 * rho**2 / 4)
    assert n.time_factor == 0.5
    assert n.epsilon(0.1) == 0.1

    ident = normalize(Nonlinearity.power_law(4))
    assert ident.time_factor == 1.0 and ident.nonlinearity == Nonlinearity.power_law(4)

    n4 = normalize(Nonlinearity.power_law(3, beta=1.0, sigma=4.0))
    assert n4.time_factor == 8.0
    assert n4.epsilon(0.1) == pytest.approx(0.05)


def test_normalize_preserves_gamma0_scaling():
    # gamma_max / gamma of the normalized system equals that of the original
    nl = Nonlinearity.power_law(3, beta=2.0, sigma=3.0)
    p = Potentials(nl)
    q = Potentials(normalize(nl).nonlinearity)
    assert_allclose(p.gamma / p.constants.gamma_max, q.gamma / q.constants.gamma_max, rtol=1e-8)
    # rho_c maps as sigma * phi scaling: rho_c is unchanged
    assert_allclose(p.rho_c, q.rho_c, rtol=1e-12)


def test_W_values(pot3):
    nl = pot3.nl
    assert double_well_W(nl, pot3.a, 0.0) == 0.0
    assert abs(pot3.W(0.5)) < 1e-15
    assert_allclose(pot3.W(1.0), 0.125, rtol=1e-14)
    rho = np.linspace(0, 3, 3001)
    assert_allclose(pot3.W(rho), rho**3 / 2 - rho**2 / 2 + rho / 8, atol=1e-15)
    mask = (np.abs(rho) > 1e-9) & (np.abs(rho - 0.5) > 1e-9)
    assert np.all(pot3.W(rho)[mask] > 0)
    with pytest.raises(DomainError):
        pot3.W(-0.1)


def test_legendre(pot3):
    nl = pot3.nl
    assert legendre_fstar(nl, -1.0) == 0 and legendre_fstar_prime(nl, -0.3) == 0
    assert_allclose(legendre_fstar(nl, 0.375), 0.125, rtol=1e-14)
    assert_allclose(legendre_fstar_prime(nl, 0.375), 0.5, rtol=1e-14)
    q = np.array([0.01, 0.3, 1.0, 4.0])
    assert_allclose(nl.fstar(q), (2 / 3) ** 1.5 * q**1.5, rtol=1e-13)
    for qq in q:
        assert abs(nl.fstar(qq) - fstar_brute(nl, qq)) < 1e-8


def test_custom_legendre_matches_power_law():
    pl = Nonlinearity.power_law(4)
    cu = Nonlinearity.custom(lambda r: r**4 / 3, lambda r: 4 * r**3 / 3, lambda r: 4 * r**2)
    q = np.concatenate([[-1.0, 0.0], np.geomspace(1e-6, 1e3, 50)])
    assert_allclose(cu.fstar_prime(q), pl.fstar_prime(q), rtol=1e-12, atol=1e-300)
    assert_allclose(cu.fstar(q), pl.fstar(q), rtol=1e-11, atol=1e-300)


def test_fstar_prime_linear_bound():
    for m in (3, 4, 6):
        nl = Nonlinearity.power_law(m)
        rep = check_hypotheses(nl)
        q = np.linspace(0, 100, 2001)
        assert np.all(nl.fstar_prime(q) <= (1 + q) / rep.delta)


@pytest.mark.parametrize("m", [3, 4, 6])
def test_hypotheses_sampled(m):
    rep = check_hypotheses(Nonlinearity.power_law(m))
    assert rep.ok
    assert rep.delta > 0 and rep.nu > 0 and rep.C >= 0


def test_g_spot_values(pot3):
    nl, a = pot3.nl, pot3.a
    assert cell_problem_g(nl, a, 0.0) == 0
    assert abs(cell_problem_g(nl, a, 0.5)) < 1e-15
    assert_allclose(pot3.g(0.25), 0.5 * 0.25**2 - (2 / 3) ** 1.5 * 0.125**1.5, rtol=1e-14)
    assert_allclose(pot3.g(0.25), 0.0071937, atol=1e-7)
    assert_allclose(g_argmin(nl, a, 0.25), math.sqrt(1 / 12), rtol=1e-14)
    assert g_argmin(nl, a, 0.1) == 0.0
    assert_allclose(g_argmin(nl, a, 0.5), 0.5, rtol=1e-14)


@pytest.mark.parametrize("m", [3, 4])
def test_g_closed_form_vs_brute_force(m, pot_cache):
    p = pot_cache(m)
    rng = np.random.default_rng(m)
    s = rng.uniform(-1.0, 3 * p.rho_c, 200)
    closed = p.g(s)
    brute = np.array([g_brute(p.nl, p.a, si) for si in s])
    assert np.all(np.abs(closed - brute) <= 1e-6 * (1 + s**2))


def test_g_argmin_attains_inf_and_monotone(pot3):
    s = np.linspace(-0.5, 1.5, 2001)
    r = pot3.g_argmin(s)
    assert np.all(np.diff(r) >= 0)
    attained = pot3.W(r) + 0.5 * (r - s) ** 2
    assert np.all(attained <= pot3.g(s) + 1e-8)


@pytest.mark.parametrize("m", [3, 4, 6])
def test_g_bounds(m, pot_cache):
    p = pot_cache(m)
    s = np.linspace(0, 3 * p.rho_c, 4001)
    g = p.g(s)
    assert np.all(g >= -1e-15)
    assert np.all(g <= np.minimum(0.5 * s**2, 0.5 * (s - p.rho_c) ** 2) + 1e-15)


def test_gamma_values(pot_cache):
    assert_allclose(pot_cache(3).gamma, 0.080899742159327, rtol=1e-9)
    assert_allclose(pot_cache(4).gamma, 0.13560, atol=1e-5)
    assert_allclose(pot_cache(6).gamma, 0.18080, atol=1e-5)


@pytest.mark.parametrize("m", [3, 4, 6])
def test_gamma_strict_bound(m, pot_cache):
    c = pot_cache(m).constants
    assert 0 < c.gamma < c.gamma_max
    assert c.margin > 0.01
    assert_allclose(c.gamma_max, gamma_upper_bound(pot_cache(m).nl, c.rho_c))


def test_gamma_brute_force_g(pot3):
    nl = pot3.nl
    gb = lambda s: g_brute(nl, pot3.a, s, rho_max=1.5, n=30001)
    val = surface_tension_gamma(nl, pot3.rho_c, pot3.a, tol=1e-8, g=gb)
    assert abs(val - pot3.gamma) < 1e-6


def test_gamma_tolerance_halving(pot3):
    g1 = surface_tension_gamma(pot3.nl, pot3.rho_c, pot3.a, tol=1e-9)
    g2 = surface_tension_gamma(pot3.nl, pot3.rho_c, pot3.a, tol=5e-10)
    assert abs(g1 - g2) < 1e-8


def test_gamma_general_beta_sigma():
    nl = Nonlinearity.power_law(3, beta=2.0, sigma=0.5)
    p = Potentials(nl)
    s = np.linspace(0, p.rho_c / nl.sigma, 200001)
    y = np.sqrt(np.maximum(2 * nl.beta * p.g(s), 0))
    trap = np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(s)) / p.rho_c
    assert_allclose(p.gamma, trap, rtol=1e-7)
    assert 0 < p.gamma < p.constants.gamma_max


def test_profile_F(pot3):
    assert pot3.F(0.0) == 0.0
    assert pot3.F(-1.0) == 0.0
    assert_allclose(pot3.F(pot3.rho_c), pot3.gamma * pot3.rho_c, rtol=1e-10)
    assert pot3.F(2 * pot3.rho_c) == pot3.F(pot3.rho_c)
    s = np.linspace(0, 0.5, 1001)
    F = pot3.F(s)
    assert np.all(np.diff(F) >= 0)
    # Lipschitz bound F' <= min(s, rho_c - s)
    assert np.all(pot3.F_prime(s) <= np.minimum(s, 0.5 - s) + 1e-15)
    # table against direct quadrature at a few points
    from scipy.integrate import quad
    for x in (0.07, 0.125, 0.3, 0.49):
        ref = quad(lambda t: math.sqrt(max(2 * float(pot3.g(t)), 0)), 0, x, points=[0.125])[0]
        assert abs(float(pot3.F(x)) - ref) < 1e-9


@given(st.floats(min_value=2.2, max_value=8.0), st.floats(min_value=0.2, max_value=5.0),
       st.floats(min_value=0.2, max_value=5.0))
@settings(max_examples=25, deadline=None)
def test_phase_constants_property(m, beta, sigma):
    nl = Nonlinearity.power_law(m, beta, sigma)
    rc, a = phase_constants(nl)
    chi = beta / (2 * sigma)
    assert_allclose(rc, chi ** (1 / (m - 2)), rtol=1e-9)
    assert abs(float(double_well_W(nl, a, rc))) <= 1e-12 * max(1.0, rc**m)
    assert a >= 0
