"""Quadrature plumbing shared by the numerical modules.

Composite Gauss-Legendre rules, endpoint-clustered panels and an adaptive
panel integrator for oscillatory integrands.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate

from .errors import QuadratureNotConverged


@dataclass(frozen=True)
class QuadratureConfig:
    """Numerical knobs for the many-body and perturbative integrals.

    ``lambda_cut`` is the momentum cutoff; ``None`` picks it from the Fermi
    tail so that occupations beyond it are below ``1e-16``.
    """

    lambda_cut: float | None = None
    n_q2: int = 320
    n_q3: int = 160
    n_outer: int = 64
    n_nu: int = 24
    eta: float = 0.05
    pv_radius: float = 0.5
    tol: float = 1e-7

    def __post_init__(self):
        if not self.eta > 0:
            raise ValueError("eta must be > 0")
        if not self.tol > 0:
            raise ValueError("tol must be > 0")
        if self.lambda_cut is not None and not self.lambda_cut > 0:
            raise ValueError("lambda_cut must be > 0")
        for name in ("n_q2", "n_q3", "n_outer", "n_nu"):
            if getattr(self, name) < 4:
                raise ValueError(f"{name} must be >= 4")


@lru_cache(maxsize=64)
def _leggauss(n):
    x, w = np.polynomial.legendre.leggauss(n)
    x.setflags(write=False)
    w.setflags(write=False)
    return x, w


def gauss_legendre(a, b, n):
    """Nodes and weights of the n-point Gauss-Legendre rule on [a, b]."""
    x, w = _leggauss(n)
    half = 0.5 * (b - a)
    return 0.5 * (a + b) + half * x, half * w


def composite_gauss(breaks, n_per_panel):
    """Gauss-Legendre rule on consecutive panels delimited by ``breaks``."""
    breaks = np.asarray(breaks, dtype=float)
    xs, ws = [], []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        if hi > lo:
            x, w = gauss_legendre(lo, hi, n_per_panel)
            xs.append(x)
            ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


def clustered_gauss(a, b, n):
    """Gauss rule on [a, b] mapped with u = (1 - cos(pi v))/2.

    The map clusters nodes quadratically at both ends, which makes
    inverse-square-root endpoint singularities integrable to spectral
    accuracy. ``a``/``b`` may be arrays of the same shape (one rule per row).
    """
    v, wv = _leggauss(n)
    v = 0.5 * (v + 1.0)
    wv = 0.5 * wv
    u = 0.5 * (1.0 - np.cos(np.pi * v))
    du = 0.5 * np.pi * np.sin(np.pi * v) * wv
    a = np.asarray(a, dtype=float)[..., None]
    b = np.asarray(b, dtype=float)[..., None]
    return a + (b - a) * u, (b - a) * du


def adaptive_panels(f, a, b, width, tol=1e-7, epsabs=1e-14, max_levels=6):
    """Integrate ``f`` over [a, b] by adaptive Gauss-Kronrod on panels.

    Panels of length <= ``width`` are halved until two successive levels
    agree to relative ``tol``.
    """
    if b <= a:
        return 0.0

    def level(w):
        n = max(1, int(math.ceil((b - a) / w)))
        edges = np.linspace(a, b, n + 1)
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            val, _ = integrate.quad(f, lo, hi, epsabs=epsabs, epsrel=tol * 1e-2, limit=200)
            total += val
        return total

    prev = level(width)
    for _ in range(max_levels):
        width *= 0.5
        cur = level(width)
        if abs(cur - prev) <= tol * abs(cur) + 10 * epsabs:
            return cur
        prev = cur
    raise QuadratureNotConverged(
        f"panel refinement on [{a}, {b}] did not settle: {prev!r}")
