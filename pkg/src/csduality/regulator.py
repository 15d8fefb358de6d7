"""Regulator profiles and the smooth weakly coupled fermionic potential.

A regulator is an odd profile ``sigma`` with ``sigma(+inf) = 1``,
``sigma' >= 0`` and ``sigma'(0) > 0``; ``sigma_a(x) = sigma(x / a)``.
The potential is

    V(x) = beta * sigma_a''(x) / (x + beta * sigma_a(x)),

whose two-body odd scattering solutions acquire the jump
``psi(0+) - psi(0-) = 2 beta psi'(0)`` as ``a -> 0``.

Fourier convention: ``f_hat(w) = int f(x) exp(i w x) dx``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy import integrate, special
from scipy.interpolate import CubicHermiteSpline

from .errors import DenominatorVanishes
from .quadrature import adaptive_panels, composite_gauss


@dataclass(frozen=True)
class RegulatorSpec:
    """An odd regulator profile together with its derivatives.

    ``support`` is the |x| beyond which sigma'' is below 1e-17 and
    ``hat_support`` the |w| beyond which sigma1_hat is negligible.
    All callables accept numpy arrays; sigma..sigma3 also accept complex input.
    """

    name: str
    sigma: Callable
    sigma1: Callable
    sigma2: Callable
    sigma3: Callable
    sigma1_hat: Callable
    analytic_strip: float
    support: float
    hat_support: float


def _sech2(x):
    x = np.asarray(x)
    if np.iscomplexobj(x):
        return 1.0 / np.cosh(x) ** 2
    e = np.exp(-2.0 * np.abs(x))
    return 4.0 * e / (1.0 + e) ** 2


def _tanh_sigma2(x):
    return -2.0 * np.tanh(x) * _sech2(x)


def _tanh_sigma3(x):
    s = _sech2(x)
    t = np.tanh(x)
    return -2.0 * s * s + 4.0 * t * t * s


def _tanh_sigma1_hat(w):
    # pi w / sinh(pi w / 2), written to avoid overflow; equals 2 at w = 0
    w = np.abs(np.asarray(w, dtype=float))
    e = np.exp(-0.5 * np.pi * w)
    small = w < 1e-8
    safe = np.where(small, 1.0, w)
    val = 2.0 * np.pi * safe * e / np.where(small, 1.0, -np.expm1(-np.pi * safe))
    return np.where(small, 2.0, val)


_SQRT_PI = math.sqrt(math.pi)


def _erf_sigma1(x):
    return 2.0 / _SQRT_PI * np.exp(-np.asarray(x) ** 2)


TANH = RegulatorSpec(
    name="tanh",
    sigma=np.tanh,
    sigma1=_sech2,
    sigma2=_tanh_sigma2,
    sigma3=_tanh_sigma3,
    sigma1_hat=_tanh_sigma1_hat,
    analytic_strip=0.5 * math.pi,  # sech^2 has its first pole at i pi/2
    support=25.0,
    hat_support=32.0,
)

ERF = RegulatorSpec(
    name="erf",
    sigma=special.erf,
    sigma1=_erf_sigma1,
    sigma2=lambda x: -2.0 * np.asarray(x) * _erf_sigma1(x),
    sigma3=lambda x: (4.0 * np.asarray(x) ** 2 - 2.0) * _erf_sigma1(x),
    sigma1_hat=lambda w: 2.0 * np.exp(-0.25 * np.asarray(w, dtype=float) ** 2),
    analytic_strip=math.inf,
    support=7.0,
    hat_support=14.0,
)

REGULATORS = {"tanh": TANH, "erf": ERF}


def get_regulator(name):
    try:
        return REGULATORS[name]
    except KeyError:
        raise ValueError(
            f"unknown regulator {name!r}; choose from {sorted(REGULATORS)}") from None


@dataclass(frozen=True)
class PotentialParams:
    """Regularisation length ``a``, coupling ``beta = 2/c`` and profile."""

    a: float
    beta: float
    regulator: RegulatorSpec = TANH

    def __post_init__(self):
        if not self.a > 0:
            raise ValueError("a must be > 0")
        if not self.beta > 0:
            raise ValueError("beta must be > 0")


def sigma_eval(spec, x):
    """Return (sigma, sigma', sigma'') of the unscaled profile at ``x``."""
    return spec.sigma(x), spec.sigma1(x), spec.sigma2(x)


def potential_eval(p, x):
    """V_{a,beta}(x); the removable point x = 0 uses its analytic limit.

    At the origin numerator and denominator both vanish linearly, giving
    beta * sigma'''(0) / (a^2 (a + beta sigma'(0))).
    """
    x = np.asarray(x, dtype=float)
    a, beta, spec = p.a, p.beta, p.regulator
    u = x / a
    den = x + beta * spec.sigma(u)
    zero = x == 0.0
    if np.any((den == 0.0) & ~zero):
        raise DenominatorVanishes("x + beta*sigma_a(x) vanished away from x = 0")
    limit = beta * spec.sigma3(0.0) / (a * a * (a + beta * spec.sigma1(0.0)))
    with np.errstate(invalid="ignore", divide="ignore"):
        val = beta * spec.sigma2(u) / (a * a * den)
    out = np.where(zero, limit, val)
    return float(out) if out.ndim == 0 else out


def potential_fourier(p, k, quad=None):
    """V_hat_{a,beta}(k) = int V(x) cos(k x) dx (real because V is even).

    Evaluated in the scaled variable u = x/a on oscillation-sized panels
    with adaptive Gauss-Kronrod; two panel levels must agree to ``quad.tol``.
    """
    tol = 1e-7 if quad is None else quad.tol
    a, beta, spec = p.a, p.beta, p.regulator
    ka = abs(float(k)) * a

    def integrand(u):
        return spec.sigma2(u) * math.cos(ka * u) / (a * u + beta * spec.sigma(u)) if u > 0 else (
            spec.sigma3(0.0) / (a + beta * spec.sigma1(0.0)))

    width = min(2.0, math.pi / ka) if ka > 0 else 2.0
    return 2.0 * beta / a * adaptive_panels(integrand, 0.0, spec.support, width, tol=tol)


def potential_fourier_diff(p, k, quad=None):
    """V_hat(k) - V_hat(0) computed directly with the (cos - 1) factor.

    Avoids cancelling two O(beta/a^2) numbers when only the O(beta k^2)
    difference is wanted.
    """
    tol = 1e-7 if quad is None else quad.tol
    a, beta, spec = p.a, p.beta, p.regulator
    ka = abs(float(k)) * a
    if ka == 0.0:
        return 0.0

    def integrand(u):
        if u == 0.0:
            return 0.0
        return (spec.sigma2(u) * -2.0 * math.sin(0.5 * ka * u) ** 2
                / (a * u + beta * spec.sigma(u)))

    width = min(2.0, math.pi / ka)
    return 2.0 * beta / a * adaptive_panels(integrand, 0.0, spec.support, width, tol=tol)


def F_func(spec, k):
    """F(k) = int_0^k x sigma1_hat(x) dx, even in k, F(k) = k^2 + O(k^4)."""
    k = abs(float(k))
    if k == 0.0:
        return 0.0
    upper = min(k, spec.hat_support)
    nodes = np.linspace(0.0, upper, max(2, int(math.ceil(upper / 0.5)) + 1))
    x, w = composite_gauss(nodes, 20)
    return float(np.sum(w * x * spec.sigma1_hat(x)))


def _g_weight(spec, x):
    # sigma'' sigma / x^2, finite at the origin
    if x == 0.0:
        return float(spec.sigma3(0.0) * spec.sigma1(0.0))
    return float(spec.sigma2(x) * spec.sigma(x) / (x * x))


def G_func(spec, k, tol=1e-9):
    """G(k) = -int (e^{ikx} - 1) sigma'' sigma / x^2 dx.

    Uses 1 - cos = 2 sin^2 to stay accurate at small k.
    """
    k = abs(float(k))
    if k == 0.0:
        return 0.0

    def integrand(x):
        return 4.0 * math.sin(0.5 * k * x) ** 2 * _g_weight(spec, x)

    width = min(2.0, math.pi / k)
    return adaptive_panels(integrand, 0.0, spec.support, width, tol=tol, epsabs=1e-16)


class FTable:
    """Cubic Hermite interpolant of F on [0, hat_support], constant beyond.

    The exact derivative F'(k) = k sigma1_hat(k) feeds the Hermite spline,
    so the table is accurate to ~h^4 with the default step.
    """

    def __init__(self, spec, step=0.01):
        kmax = spec.hat_support
        n = int(math.ceil(kmax / step))
        knots = np.linspace(0.0, kmax, n + 1)
        x, w = composite_gauss(knots, 8)
        increments = np.add.reduceat(w * x * spec.sigma1_hat(x), np.arange(0, 8 * n, 8))
        values = np.concatenate([[0.0], np.cumsum(increments)])
        self.kmax = kmax
        self.f_inf = values[-1]
        self._spline = CubicHermiteSpline(knots, values, knots * spec.sigma1_hat(knots))

    def __call__(self, k):
        k = np.abs(np.asarray(k, dtype=float))
        return np.where(k >= self.kmax, self.f_inf, self._spline(np.minimum(k, self.kmax)))


class GTable:
    """Cubic-spline table of G on [0, kmax] (G is even)."""

    def __init__(self, spec, kmax, n=201):
        from scipy.interpolate import CubicSpline

        ks = np.linspace(0.0, kmax, n)
        vals = np.array([G_func(spec, k) for k in ks])
        self.kmax = kmax
        self._spline = CubicSpline(ks, vals, bc_type=((1, 0.0), "not-a-knot"))

    def __call__(self, k):
        k = np.abs(np.asarray(k, dtype=float))
        if np.any(k > self.kmax * (1 + 1e-12)):
            raise ValueError("G table evaluated beyond its range")
        return self._spline(k)


def sigma1_squared_integral(spec):
    """int sigma'(x)^2 dx over the real line."""
    val, _ = integrate.quad(lambda x: spec.sigma1(x) ** 2, 0.0, spec.support * 2,
                            epsabs=1e-15, epsrel=1e-13, limit=200)
    return 2.0 * val


def sigma1_hat_squared_integral(spec):
    """(1/2pi) int sigma1_hat(w)^2 dw over the real line."""
    val, _ = integrate.quad(lambda w: float(spec.sigma1_hat(w)) ** 2, 0.0, spec.hat_support * 2,
                            epsabs=1e-15, epsrel=1e-13, limit=200)
    return val / math.pi
