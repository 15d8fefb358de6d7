"""Perturbative energy density of a free-fermion macrostate in powers of beta.

Orders e0, e1, e2 are computed from the beta-expanded Fourier transform
of the regularised potential at fixed ``a``:

    V(k) - V(0) = beta F(ka)/a^2 + beta^2 G(ka)/a^3 + O(beta^3),

which is the sequencing (small beta first, a -> 0 afterwards) under
which the 1/a pieces of e1 and e2 cancel.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .errors import PVUnstable, QuadratureNotConverged
from .quadrature import QuadratureConfig, composite_gauss
from .regulator import (FTable, GTable, PotentialParams, RegulatorSpec,
                        sigma1_hat_squared_integral, sigma1_squared_integral)

TWO_PI = 2.0 * math.pi
_TAIL = math.log(1e14)


def fermi(x):
    """1 / (1 + e^x) without overflow."""
    x = np.asarray(x, dtype=float)
    return 0.5 * (1.0 - np.tanh(0.5 * x))


@dataclass(frozen=True)
class RootDensity:
    """Particle root density rho(lambda) with 0 <= rho <= 1/(2 pi).

    ``provenance`` is ("thermal", T, mu), ("fermi_sea", k_F) or ("custom",).
    Custom densities are linearly interpolated and vanish off the grid.
    """

    grid: np.ndarray
    rho: np.ndarray
    provenance: tuple = ("custom",)
    breaks: tuple = field(default=(), repr=False)

    def __post_init__(self):
        r = np.asarray(self.rho)
        if r.shape != np.shape(self.grid):
            raise ValueError("grid and rho must have the same shape")
        if np.any(r < -1e-12) or np.any(r > 1.0 / TWO_PI + 1e-12):
            raise ValueError("rho must lie in [0, 1/(2 pi)]")

    @classmethod
    def thermal(cls, T, mu, n=401):
        if T <= 0:
            raise ValueError("T must be > 0")
        cut = math.sqrt(max(mu, 0.0) + T * _TAIL)
        grid = np.linspace(-cut, cut, n)
        obj = cls(grid, fermi((grid ** 2 - mu) / T) / TWO_PI, ("thermal", T, mu))
        return obj

    @classmethod
    def fermi_sea(cls, k_F, n=401):
        if k_F < 0:
            raise ValueError("k_F must be >= 0")
        grid = np.linspace(-k_F, k_F, n)
        return cls(grid, np.full(n, 1.0 / TWO_PI), ("fermi_sea", k_F), breaks=(-k_F, k_F))

    @classmethod
    def custom(cls, grid, rho):
        return cls(np.asarray(grid, float), np.asarray(rho, float), ("custom",))

    @classmethod
    def from_file(cls, path):
        """Two whitespace-separated columns (lambda, rho); '#' starts a comment."""
        data = np.loadtxt(path, comments="#", ndmin=2)
        return cls.custom(data[:, 0], data[:, 1])

    @property
    def cutoff(self):
        return float(np.max(np.abs(self.grid))) if len(self.grid) else 0.0

    def at(self, lam):
        lam = np.asarray(lam, dtype=float)
        kind = self.provenance[0]
        if kind == "thermal":
            _, T, mu = self.provenance
            return fermi((lam ** 2 - mu) / T) / TWO_PI
        if kind == "fermi_sea":
            return np.where(np.abs(lam) <= self.provenance[1], 1.0 / TWO_PI, 0.0)
        return np.interp(lam, self.grid, self.rho, left=0.0, right=0.0)

    def hole(self, lam):
        """Hole density rho_h = 1/(2 pi) - rho."""
        return 1.0 / TWO_PI - self.at(lam)

    def nodes(self, n_panels=16, n_per_panel=12):
        """Gauss-Legendre nodes and weights covering the support of rho."""
        cut = self.cutoff
        if cut == 0.0:
            return np.zeros(0), np.zeros(0)
        edges = np.union1d(np.linspace(-cut, cut, n_panels + 1), np.clip(self.breaks, -cut, cut))
        if self.provenance[0] == "custom":
            edges = np.union1d(edges, self.grid[:: max(1, len(self.grid) // 64)])
        return composite_gauss(edges, n_per_panel)


@dataclass(frozen=True)
class MacroScalars:
    D: float
    E: float


def macro_scalars(rho: RootDensity, n_panels=16, n_per_panel=12):
    """Particle density D = int rho and energy density E = int rho lambda^2."""
    x, w = rho.nodes(n_panels, n_per_panel)
    r = rho.at(x)
    return MacroScalars(float(np.sum(w * r)), float(np.sum(w * r * x ** 2)))


def divergence_coefficients(spec: RegulatorSpec):
    """(c1, c2) = (int sigma'^2 dx, int sigma_hat'^2 dw / 2 pi); equal by Parseval."""
    return sigma1_squared_integral(spec), sigma1_hat_squared_integral(spec)


def e_closed(rho: RootDensity, beta):
    """(1 - 2 beta D + 3 beta^2 D^2) E."""
    if beta < 0:
        raise ValueError("beta must be >= 0")
    m = macro_scalars(rho)
    return (1.0 - 2.0 * beta * m.D + 3.0 * beta ** 2 * m.D ** 2) * m.E


@dataclass(frozen=True)
class EnergyOrders:
    e0: float
    e1: float
    e2: float
    pv_spread: float = 0.0
    outer_error: float = 0.0

    @property
    def total(self):
        return self.e0 + self.e1 + self.e2


def _outer_nodes(rho, n):
    n_panels = max(2, n // 8)
    return rho.nodes(n_panels, max(2, n // n_panels))


def e1_order(rho: RootDensity, p: PotentialParams, n_outer=64):
    """First order: -int rho rho [beta F(sa)/a^2 + beta^2 G(sa)/a^3], s = lambda - mu."""
    x, w = _outer_nodes(rho, n_outer)
    r = w * rho.at(x)
    s = x[:, None] - x[None, :]
    a, beta = p.a, p.beta
    ftab = FTable(p.regulator)
    gtab = GTable(p.regulator, max(float(np.max(np.abs(s))) * a, 1e-6) * (1 + 1e-9))
    kern = beta * ftab(s * a) / a ** 2 + beta ** 2 * gtab(s * a) / a ** 3
    return -float(r @ kern @ r)


def _nu_panels(inner, p, radius, n_nu):
    """Nodes in t > 0 for the subtracted principal value integral."""
    a = p.a
    t_end = p.regulator.hat_support / a + inner
    fine = np.arange(radius, inner, 1.0)
    edges = [0.0, radius]
    edges.extend(fine[1:])
    edges.append(inner)
    if t_end > inner:
        n_geo = max(2, int(math.ceil(math.log(t_end / inner) / math.log(1.25))))
        edges.extend(np.geomspace(inner, t_end, n_geo + 1)[1:])
    return composite_gauss(np.asarray(edges), n_nu)


def _pv_pair(rho, f, lam, mu, t, wt):
    """(PV int h/nu, PV int h/(nu - s)) for each (lam, mu) pair, s = mu - lam.

    h(nu) = rho_h(lam + nu) rho_h(mu - nu) [f(nu - s) - f(nu)]^2 and
    PV int h(nu)/(nu - c) = int_0^inf [h(c + t) - h(c - t)] / t dt.
    """
    s = (mu - lam)[:, None]
    lam_, mu_ = lam[:, None], mu[:, None]

    def h(nu):
        return rho.hole(lam_ + nu) * rho.hole(mu_ - nu) * (f(nu - s) - f(nu)) ** 2

    tt = t[None, :]
    pv0 = ((h(tt) - h(-tt)) / tt) @ wt
    pv1 = ((h(s + tt) - h(s - tt)) / tt) @ wt
    return pv0, pv1


def e2_order(rho: RootDensity, p: PotentialParams, quad=QuadratureConfig(), n_outer=None,
             radius=None, batch=256):
    """Second order with the nu integral as a principal value at nu = 0 and nu = s.

    Returns the value at ``radius`` and its change when the inner panel
    split is moved to radius / 2 (the subtracted PV is radius independent).
    """
    n_outer = n_outer or quad.n_outer
    radius = quad.pv_radius if radius is None else radius
    a, beta = p.a, p.beta
    ftab = FTable(p.regulator)

    def f(q):
        return ftab(q * a) / a ** 2

    x, w = _outer_nodes(rho, n_outer)
    r = w * rho.at(x)
    keep = r > 1e-13 * np.max(r) if len(r) else r > 0
    x, r = x[keep], r[keep]
    lam, mu = np.repeat(x, len(x)), np.tile(x, len(x))
    weight = np.repeat(r, len(r)) * np.tile(r, len(r))
    s = mu - lam
    inner = 2.0 * rho.cutoff + 2.0 + 2.0 * np.max(np.abs(s), initial=0.0)

    results = []
    for rad in (radius, 0.5 * radius):
        t, wt = _nu_panels(inner, p, rad, quad.n_nu)
        total = np.zeros(len(lam))
        for i in range(0, len(lam), batch):
            sl = slice(i, i + batch)
            pv0, pv1 = _pv_pair(rho, f, lam[sl], mu[sl], t, wt)
            ss = s[sl]
            safe = np.where(ss == 0.0, 1.0, ss)
            total[sl] = np.where(ss == 0.0, 0.0, (pv0 - pv1) / safe)
        results.append(math.pi * beta ** 2 * float(np.sum(weight * total)))
    return results[0], abs(results[0] - results[1])


def e_orders(rho: RootDensity, p: PotentialParams, quad=QuadratureConfig(), check_outer=True):
    """Energy density orders (e0, e1, e2) at fixed a; see module docstring.

    Raises PVUnstable when the principal value moves by more than
    ``quad.tol`` (relative) between two inner split radii, and
    QuadratureNotConverged when a 3/4-size outer rule changes e2 by
    more than 100 * tol relative.
    """
    m = macro_scalars(rho)
    e1 = e1_order(rho, p, quad.n_outer)
    e2, spread = e2_order(rho, p, quad)
    scale = max(abs(e2), 1e-300)
    if spread > quad.tol * scale + 1e-15:
        raise PVUnstable(f"principal value changed by {spread:.3e} between radii")
    outer_err = 0.0
    if check_outer:
        coarse, _ = e2_order(rho, p, quad, n_outer=max(8, 3 * quad.n_outer // 4))
        outer_err = abs(coarse - e2)
        if outer_err > 100 * quad.tol * scale + 1e-15:
            raise QuadratureNotConverged(f"outer e2 rule error {outer_err:.3e}")
    return EnergyOrders(m.E, e1, e2, spread, outer_err)


def fit_inverse_a(a_values, values):
    """Least-squares fit values = alpha + slope / a + gamma a; returns (alpha, slope, gamma)."""
    a_values = np.asarray(a_values, float)
    design = np.column_stack([np.ones_like(a_values), 1.0 / a_values, a_values])
    coef, *_ = np.linalg.lstsq(design, np.asarray(values, float), rcond=None)
    return tuple(float(c) for c in coef)
