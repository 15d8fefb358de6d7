"""Two-body odd scattering states of the regularised potential.

Solvers for the smooth potential (direct shooting and the Volterra
fixed point built on the k = 0 homogeneous solutions), the naive
regularisation of ``2 beta d/dx[delta(x) d/dx]`` and the exact
Cheon-Shigehara double-delta problem, plus the sinusoid fit that reads
off the emergent jump condition outside the regulator core.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from .errors import (IllConditionedFit, IntegratorDiverged, IterationNotConverged,
                     StepTooCoarse, WindowEmpty)
from .regulator import PotentialParams, potential_eval


@dataclass(frozen=True)
class GridConfig:
    """Sampling grid on [0, 1]: uniform core, geometric middle, uniform tail.

    Lengths ``core_width`` and ``core_step`` are in units of ``a``.
    """

    core_width: float = 10.0
    core_step: float = 1.0 / 50.0
    geom_end: float = 0.1
    n_geom: int = 1500
    n_outer: int = 901

    def points(self, a):
        x_core = self.core_width * a
        n_core = int(math.ceil(self.core_width / self.core_step))
        if x_core >= self.geom_end:
            if x_core >= 1.0:
                return np.linspace(0.0, 1.0, int(math.ceil(1.0 / (self.core_step * a))) + 1)
            core = np.linspace(0.0, x_core, n_core + 1)
            tail = np.linspace(x_core, 1.0, self.n_outer)[1:]
            return np.concatenate([core, tail])
        core = np.linspace(0.0, x_core, n_core + 1)
        geom = np.geomspace(x_core, self.geom_end, self.n_geom)[1:]
        tail = np.linspace(self.geom_end, 1.0, self.n_outer)[1:]
        return np.concatenate([core, geom, tail])


@dataclass
class Wavefunction:
    """Odd solution sampled on x >= 0 and normalised to psi(1) = 1."""

    grid: np.ndarray
    psi: np.ndarray
    dpsi: np.ndarray
    k: float
    parity: str = "odd"
    residuals: tuple = field(default=())

    def mirrored(self):
        """Grid, psi and psi' on [-1, 1] using the odd extension."""
        x = self.grid
        inner = slice(1, None) if x[0] == 0.0 else slice(None)
        xs = np.concatenate([-x[inner][::-1], x])
        psi = np.concatenate([-self.psi[inner][::-1], self.psi])
        dpsi = np.concatenate([self.dpsi[inner][::-1], self.dpsi])
        return xs, psi, dpsi


@dataclass(frozen=True)
class JumpReport:
    jump: float
    slope: float
    ratio: float
    phase_shift: float
    fit_window: tuple
    residual: float


def _check_grid(a, grid):
    if grid.core_step > 1.0 / 50.0 + 1e-15:
        raise StepTooCoarse(f"core step {grid.core_step}a exceeds a/50")


def _normalise(x, psi, dpsi, k, residuals=()):
    scale = psi[-1]
    if not np.isfinite(scale) or scale == 0.0:
        raise IntegratorDiverged("cannot normalise: psi(1) is zero or not finite")
    return Wavefunction(grid=x, psi=psi / scale, dpsi=dpsi / scale, k=float(k),
                        residuals=tuple(residuals))


def solve_smooth(p: PotentialParams, k, grid=GridConfig()):
    """Odd solution of psi'' + k^2 psi = V psi with psi(1) = 1.

    The equation is linear, so one outward shot from psi(0) = 0,
    psi'(0) = 1 followed by a rescale replaces a boundary-value solve.
    Steps are capped at a/50 inside |x| <= core_width * a.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    _check_grid(p.a, grid)
    x = grid.points(p.a)
    k2 = k * k

    def rhs(t, y):
        return [y[1], (potential_eval(p, t) - k2) * y[0]]

    y = _shoot_from(rhs, [0.0, 1.0], 0.0, x, min(grid.core_width * p.a, 1.0),
                    grid.core_step * p.a)
    return _normalise(x, y[0], y[1], k)


def extract_jump(w: Wavefunction, a, k, x_hi=None):
    """Fit psi = A sin(kx) + B cos(kx) outside the core.

    Then jump = 2B, slope = Ak and ratio = jump / (2 slope), which tends
    to beta for the smooth potential. The window is [max(10a, 1e-3), 0.1];
    for a > 2e-3 its upper end grows to 5x the lower one.
    """
    x_lo = max(10.0 * a, 1e-3)
    if x_hi is None:
        x_hi = 0.1 if x_lo <= 0.02 else min(1.0, 5.0 * x_lo)
    mask = (w.grid >= x_lo) & (w.grid <= x_hi)
    if np.count_nonzero(mask) < 20:
        raise WindowEmpty(f"fewer than 20 samples in [{x_lo:g}, {x_hi:g}]")
    if k <= 0:
        raise IllConditionedFit("k = 0: sin and cos columns are degenerate")
    xs, ys = w.grid[mask], w.psi[mask]
    design = np.column_stack([np.sin(k * xs), np.cos(k * xs)])
    if np.linalg.cond(design) > 1e10:
        raise IllConditionedFit("sin/cos nearly collinear; enlarge window or k")
    (A, B), *_ = np.linalg.lstsq(design, ys, rcond=None)
    resid = float(np.sqrt(np.mean((design @ np.array([A, B]) - ys) ** 2)))
    return JumpReport(jump=2.0 * B, slope=A * k, ratio=B / (A * k),
                      phase_shift=math.atan2(B, A), fit_window=(x_lo, x_hi), residual=resid)


def _naive_gap(p, z):
    return 1.0 - p.beta / p.a * p.regulator.sigma1(z / p.a)


def solve_naive(p: PotentialParams, k, grid=GridConfig()):
    """Odd solution of the naive regularisation psi'' + k^2 psi = beta (sigma_a' psi')'.

    Written as psi' = u / g, u' = -k^2 psi with g = 1 - beta sigma_a'. When
    beta sigma'(0) > a, g has a simple zero y0 > 0 and psi' a pole there; the
    solution is then defined by the principal value, realised as the mean of
    two continuations along half-sine detours above and below y0.
    """
    if k < 0:
        raise ValueError("k must be >= 0")
    _check_grid(p.a, grid)
    a = p.a
    x = grid.points(a)
    k2 = k * k
    max_step = grid.core_step * a
    x_core = min(grid.core_width * a, 1.0)

    def rhs(t, y):
        return [y[1] / _naive_gap(p, t), -k2 * y[0]]

    if p.beta * p.regulator.sigma1(0.0) <= a:
        y = _shoot_from(rhs, [0.0, 1.0], 0.0, x, x_core, max_step)
        return _normalise(x, y[0], y[1] / _naive_gap(p, x), k)

    y0 = optimize.brentq(lambda t: _naive_gap(p, t), 0.0, p.regulator.support * a, xtol=1e-15 * a)
    r = min(0.5 * y0, 0.25 * a)
    lo, hi = y0 - r, y0 + r
    psi = np.empty_like(x)
    dpsi = np.empty_like(x)

    first = x <= lo
    sol = integrate.solve_ivp(rhs, (0.0, lo), [0.0, 1.0], method="DOP853", dense_output=True,
                              rtol=1e-11, atol=1e-14, max_step=max_step)
    if not sol.success:
        raise IntegratorDiverged(sol.message)
    ys = sol.sol(x[first])
    psi[first] = ys[0]
    dpsi[first] = ys[1] / _naive_gap(p, x[first])
    start = sol.y[:, -1].astype(complex)

    mid = (x > lo) & (x < hi)
    branch_ends, branch_vals = [], []
    for side in (1.0, -1.0):
        def path(t, side=side):
            phase = 0.5 * math.pi * (t - lo) / r
            return t + 1j * side * r * np.sin(phase), 1.0 + 1j * side * 0.5 * math.pi * np.cos(phase)

        def crhs(t, y, path=path):
            z, dz = path(t)
            return [y[1] / _naive_gap(p, z) * dz, -k2 * y[0] * dz]

        det = integrate.solve_ivp(crhs, (lo, hi), start, method="DOP853", dense_output=True,
                                  rtol=1e-11, atol=1e-14, max_step=r / 20.0)
        if not det.success:
            raise IntegratorDiverged(det.message)
        branch_ends.append(det.y[:, -1])
        if np.any(mid):
            yv = det.sol(x[mid])
            z, _ = path(x[mid])
            branch_vals.append((yv[0], yv[1] / _naive_gap(p, z)))
    if np.any(mid):
        psi[mid] = 0.5 * (branch_vals[0][0] + branch_vals[1][0]).real
        dpsi[mid] = 0.5 * (branch_vals[0][1] + branch_vals[1][1]).real
    state = 0.5 * (branch_ends[0] + branch_ends[1]).real

    rest = x >= hi
    y = _shoot_from(rhs, state, hi, x[rest], x_core, max_step)
    psi[rest] = y[0]
    dpsi[rest] = y[1] / _naive_gap(p, x[rest])
    return _normalise(x, psi, dpsi, k)


def _shoot_from(rhs, state, start, x, x_core, max_step):
    out = []
    for lo, hi, step in ((start, x_core, max_step), (max(start, x_core), 1.0, np.inf)):
        if hi <= lo:
            continue
        sol = integrate.solve_ivp(rhs, (lo, hi), state, method="DOP853", dense_output=True,
                                  rtol=1e-11, atol=1e-14, max_step=step)
        if not sol.success or not np.all(np.isfinite(sol.y)):
            raise IntegratorDiverged(sol.message)
        sel = (x >= lo) & (x <= hi)
        if out:
            sel &= x > lo
        out.append(sol.sol(x[sel]))
        state = sol.y[:, -1]
    return np.concatenate(out, axis=1)


def _sin_over_k(k, x):
    return np.sin(k * x) / k if k > 0 else np.asarray(x, dtype=float)


def cs_coefficients(a, beta, k):
    """Exterior amplitudes (A, B) of psi = A sin(kx)/k + B cos(kx), |x| > a.

    Interior solution sin(kx)/k; at x = a the derivative jumps by
    g psi(a) with g = 1/beta - 1/a.
    """
    g = 1.0 / beta - 1.0 / a
    psi_a = float(_sin_over_k(k, a))
    dpsi_a = math.cos(k * a) + g * psi_a
    s, ds = psi_a, math.cos(k * a)
    c, dc = math.cos(k * a), -k * math.sin(k * a)
    # Wronskian s dc - ds c = -1
    A = c * dpsi_a - dc * psi_a
    B = ds * psi_a - s * dpsi_a
    return A, B


def cs_double_delta(a, beta, k, grid=GridConfig()):
    """Exact odd solution for the Cheon-Shigehara double-delta potential."""
    if not (a > 0 and beta > 0):
        raise ValueError("a and beta must be > 0")
    x = grid.points(a)
    A, B = cs_coefficients(a, beta, k)
    inside = x < a
    psi = np.where(inside, _sin_over_k(k, x), A * _sin_over_k(k, x) + B * np.cos(k * x))
    dpsi = np.where(inside, np.cos(k * x), A * np.cos(k * x) - B * k * np.sin(k * x))
    return _normalise(x, psi, dpsi, k)


def _phi_plus_integrand(p, t):
    # integrand of the phi+ quadrature in the scaled variable t = y / a
    a, beta, s = p.a, p.beta, p.regulator
    t = np.asarray(t, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore"):
        ratio = np.where(t == 0.0, s.sigma3(0.0) / (a + beta * s.sigma1(0.0)),
                         s.sigma2(t) / (a * t + beta * s.sigma(t)))
    return beta * ratio / (a * (1.0 + beta * s.sigma1(t) / a) ** 2)


def _phi_plus_integral(p, x):
    upper = min(abs(x) / p.a, p.regulator.support)
    if upper == 0.0:
        return 0.0
    val, _ = integrate.quad(lambda t: float(_phi_plus_integrand(p, t)), 0.0, upper,
                            epsabs=1e-14, epsrel=1e-12, limit=500)
    return val if x > 0 else -val


def homogeneous_solutions(p: PotentialParams, x, quad=None):
    """The k = 0 solutions (phi_minus, phi_plus) at a single point x."""
    x = float(x)
    s, a, beta = p.regulator, p.a, p.beta
    phi_minus = x + beta * float(s.sigma(x / a))
    phi_plus = 1.0 / (1.0 + beta * float(s.sigma1(x / a)) / a) + phi_minus * _phi_plus_integral(p, x)
    return phi_minus, phi_plus


def homogeneous_derivatives(p: PotentialParams, x):
    """(phi_minus', phi_plus') at x; phi_plus' = (1 + beta sigma_a') I(x)."""
    x = float(x)
    d_minus = 1.0 + p.beta * float(p.regulator.sigma1(x / p.a)) / p.a
    return d_minus, d_minus * _phi_plus_integral(p, x)


def volterra_solve(p: PotentialParams, k, quad=None, grid=GridConfig(), max_iter=200, tol=1e-13):
    """Picard iteration of the variation-of-parameters integral equation.

    psi = k^2 [phi+ int_0^x psi phi-  -  phi- int_0^x psi phi+] + A phi-,
    run with A = 1 and rescaled afterwards so that psi(1) = 1.
    """
    _check_grid(p.a, grid)
    a, beta, s = p.a, p.beta, p.regulator
    x = grid.points(a)
    u = x / a
    phi_m = x + beta * s.sigma(u)
    dphi_m = 1.0 + beta * s.sigma1(u) / a
    integral = integrate.cumulative_simpson(_phi_plus_integrand(p, u) / a, x=x, initial=0.0)
    phi_p = 1.0 / dphi_m + phi_m * integral
    dphi_p = dphi_m * integral

    k2 = k * k
    psi = phi_m.copy()
    residuals = []
    for _ in range(max_iter):
        c_minus = integrate.cumulative_simpson(psi * phi_m, x=x, initial=0.0)
        c_plus = integrate.cumulative_simpson(psi * phi_p, x=x, initial=0.0)
        new = k2 * (phi_p * c_minus - phi_m * c_plus) + phi_m
        res = float(np.max(np.abs(new - psi)))
        residuals.append(res)
        psi = new
        if res <= tol * np.max(np.abs(psi)):
            dpsi = k2 * (dphi_p * c_minus - dphi_m * c_plus) + dphi_m
            return _normalise(x, psi, dpsi, k, residuals)
    raise IterationNotConverged(f"Volterra iteration stalled at residual {residuals[-1]:.3e}")
