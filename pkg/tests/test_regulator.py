import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from csduality.regulator import (ERF, TANH, F_func, FTable, G_func, GTable, PotentialParams,
                                 get_regulator, potential_eval, potential_fourier,
                                 potential_fourier_diff, sigma1_hat_squared_integral,
                                 sigma1_squared_integral, sigma_eval)

SPECS = [TANH, ERF]
xs = st.floats(min_value=-30, max_value=30, allow_nan=False)


def test_sigma_eval_tanh_origin():
    assert sigma_eval(TANH, 0.0) == (0.0, 1.0, 0.0)


def test_sigma_eval_tanh_far():
    s, s1, s2 = sigma_eval(TANH, 20.0)
    assert s == pytest.approx(1.0, abs=1e-15)
    assert abs(s1) < 1e-16 and abs(s2) < 1e-16


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.name)
def test_derivatives_match_finite_differences(spec):
    h = 1e-5
    for x in (-2.0, -0.3, 0.0, 0.7, 1.0, 3.0):
        fd1 = (spec.sigma(x + h) - spec.sigma(x - h)) / (2 * h)
        fd2 = (spec.sigma1(x + h) - spec.sigma1(x - h)) / (2 * h)
        fd3 = (spec.sigma2(x + h) - spec.sigma2(x - h)) / (2 * h)
        assert spec.sigma1(x) == pytest.approx(fd1, abs=1e-9)
        assert spec.sigma2(x) == pytest.approx(fd2, abs=1e-9)
        assert spec.sigma3(x) == pytest.approx(fd3, abs=1e-9)


def test_tanh_second_derivative_closed_form():
    expected = -2 * math.tanh(1.0) / math.cosh(1.0) ** 2
    h = 1e-5
    fd = (TANH.sigma1(1 + h) - TANH.sigma1(1 - h)) / (2 * h)
    assert fd == pytest.approx(expected, rel=1e-9)
    assert TANH.sigma2(1.0) == pytest.approx(expected, rel=1e-14)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.name)
@given(x=xs)
def test_profile_constraints(spec, x):
    assert spec.sigma(-x) == pytest.approx(-spec.sigma(x), abs=1e-15)
    assert spec.sigma1(x) >= 0.0
    assert spec.sigma2(-x) == pytest.approx(-spec.sigma2(x), abs=1e-15)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.name)
def test_profile_limits(spec):
    assert spec.sigma1(0.0) > 0
    assert spec.sigma(40.0) == pytest.approx(1.0, abs=1e-15)
    assert abs(40.0 ** 2 * spec.sigma2(40.0)) < 1e-12


def test_get_regulator():
    assert get_regulator("erf") is ERF
    with pytest.raises(ValueError):
        get_regulator("box")


def test_params_validation():
    with pytest.raises(ValueError, match="a must be > 0"):
        PotentialParams(-0.1, 0.5)
    with pytest.raises(ValueError, match="beta must be > 0"):
        PotentialParams(0.1, 0.0)


def test_potential_origin_limit():
    p = PotentialParams(0.1, 0.5)
    assert potential_eval(p, 0.0) == pytest.approx(-2 * 0.5 / (0.01 * 0.6), rel=1e-14)
    # approaching the origin numerically reproduces the same limit
    assert potential_eval(p, 1e-9) == pytest.approx(-166.6666666, rel=1e-8)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.name)
@given(x=st.floats(min_value=0, max_value=2))
@settings(max_examples=50)
def test_potential_even(spec, x):
    p = PotentialParams(0.05, 0.7, spec)
    assert potential_eval(p, -x) == pytest.approx(potential_eval(p, x), rel=1e-12, abs=1e-12)


def test_potential_decays_outside_core():
    p = PotentialParams(0.1, 0.5)
    assert abs(potential_eval(p, 1.0)) < 1e-6 * abs(potential_eval(p, 0.0))


def _fourier_oracle(p, k):
    # fixed composite Gauss-Legendre rule in x, twice as many panels as needed
    edges = np.linspace(0.0, p.regulator.support * p.a, 801)
    x, w = np.polynomial.legendre.leggauss(20)
    total = 0.0
    for lo, hi in zip(edges[:-1], edges[1:]):
        nodes = 0.5 * (lo + hi) + 0.5 * (hi - lo) * x
        total += np.sum(0.5 * (hi - lo) * w * potential_eval(p, nodes) * np.cos(k * nodes))
    return 2.0 * total


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.name)
def test_potential_fourier_matches_oracle(spec):
    p = PotentialParams(0.1, 0.5, spec)
    assert potential_fourier(p, 1.0) == pytest.approx(_fourier_oracle(p, 1.0), rel=1e-9)
    assert potential_fourier(p, -3.0) == pytest.approx(potential_fourier(p, 3.0), rel=1e-12)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.name)
@pytest.mark.parametrize("k", [1.0, 5.0, 20.0])
def test_fourier_beta_expansion(spec, k):
    a, beta = 0.1, 0.01
    p = PotentialParams(a, beta, spec)
    diff = potential_fourier_diff(p, k)
    expansion = beta * F_func(spec, k * a) / a ** 2 + beta ** 2 * G_func(spec, k * a) / a ** 3
    # the next order is beta^3 / a^4, relative size (beta/a)^2
    assert diff == pytest.approx(expansion, rel=3 * (beta / a) ** 2)
    assert diff == pytest.approx(potential_fourier(p, k) - potential_fourier(p, 0.0), rel=1e-6)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.name)
def test_F_G_small_k(spec):
    c1 = sigma1_squared_integral(spec)
    assert F_func(spec, 0.0) == 0.0 and G_func(spec, 0.0) == 0.0
    assert F_func(spec, 1e-2) / 1e-4 == pytest.approx(1.0, abs=1e-4)
    assert G_func(spec, 1e-2) / 1e-4 == pytest.approx(-0.5 * c1, rel=1e-4)


def test_tanh_sigma1_squared_integral():
    oracle, _ = integrate.quad(lambda x: math.cosh(x) ** -4, -40, 40, epsabs=1e-14)
    assert oracle == pytest.approx(4.0 / 3.0, rel=1e-12)
    assert sigma1_squared_integral(TANH) == pytest.approx(oracle, rel=1e-12)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.name)
@pytest.mark.parametrize("k", [0.3, 1.0, 4.0])
def test_F_matches_definition(spec, k):
    # F(k) = int (cos kx - 1) sigma''(x) / x dx evaluated directly
    def f(x):
        return -2.0 * math.sin(0.5 * k * x) ** 2 * spec.sigma2(x) / x if x else 0.0

    direct, _ = integrate.quad(f, 0.0, spec.support, limit=400, epsabs=1e-14)
    assert F_func(spec, k) == pytest.approx(2.0 * direct, rel=1e-9)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.name)
@pytest.mark.parametrize("w", [0.0, 0.8, 3.0])
def test_sigma1_hat_is_fourier_transform(spec, w):
    direct, _ = integrate.quad(lambda x: spec.sigma1(x) * math.cos(w * x), 0, spec.support,
                               limit=200, epsabs=1e-14)
    assert float(spec.sigma1_hat(w)) == pytest.approx(2.0 * direct, rel=1e-10, abs=1e-14)


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.name)
def test_parseval(spec):
    assert abs(sigma1_squared_integral(spec) - sigma1_hat_squared_integral(spec)) <= 1e-8


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s.name)
def test_tables(spec):
    ft = FTable(spec)
    ks = np.array([0.0, 0.013, 0.7, 2.5, 9.1, 31.0, 100.0])
    assert np.allclose(ft(ks), [F_func(spec, k) for k in ks], rtol=1e-10, atol=1e-9)
    assert np.allclose(ft(-ks), ft(ks))
    gt = GTable(spec, 1.0)
    for k in (0.05, 0.31, 0.97):
        assert float(gt(k)) == pytest.approx(G_func(spec, k), rel=1e-8)
    with pytest.raises(ValueError):
        gt(1.5)
