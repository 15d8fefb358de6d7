"""Exact Lieb-Liniger references: finite-N Bethe roots and Yang-Yang thermodynamics."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .errors import GridTooNarrow, IterationNotConverged, NewtonDiverged
from .perturb import RootDensity, e_closed
from .thermal import ThermalState

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class BetheState:
    N: int
    L: float
    c: float
    I: np.ndarray
    roots: np.ndarray
    residual: float


def _check_quantum_numbers(I):
    I = np.sort(np.asarray(I, dtype=float))
    N = len(I)
    if N == 0:
        raise ValueError("need at least one quantum number")
    if len(np.unique(I)) != N:
        raise ValueError("quantum numbers must be distinct")
    frac = 0.0 if N % 2 else 0.5
    if np.any(np.abs(np.mod(I - frac, 1.0)) > 1e-12):
        kind = "integers" if N % 2 else "half-odd integers"
        raise ValueError(f"for N={N} quantum numbers must be {kind}")
    return I


def _bethe_residual(lam, L, c, I):
    d = lam[:, None] - lam[None, :]
    return L * lam + 2.0 * np.sum(np.arctan(d / c), axis=1) - TWO_PI * I


def _bethe_jacobian(lam, L, c):
    d = lam[:, None] - lam[None, :]
    k = 2.0 * c / (c * c + d * d)
    jac = -k
    np.fill_diagonal(jac, L + np.sum(k, axis=1) - 2.0 / c)
    return jac


def _newton(lam, L, c, I, tol, max_iter):
    for _ in range(max_iter):
        r = _bethe_residual(lam, L, c, I)
        if np.max(np.abs(r)) <= tol:
            return lam, float(np.max(np.abs(r)))
        step = np.linalg.solve(_bethe_jacobian(lam, L, c), r)
        lam = lam - step
        if not np.all(np.isfinite(lam)):
            break
    raise NewtonDiverged(f"Bethe Newton iteration did not converge at c={c:g}")


def bethe_solve(N, L, c, I, tol=1e-12, max_iter=50):
    """Roots of L lam_j = 2 pi I_j - sum_k 2 atan((lam_j - lam_k)/c).

    Newton from the free seed 2 pi I / L; on failure, continuation in
    1/c from the hard-core limit.
    """
    if not c > 0:
        raise ValueError("c must be > 0")
    if not L > 0:
        raise ValueError("L must be > 0")
    I = _check_quantum_numbers(I)
    if len(I) != N:
        raise ValueError("len(I) must equal N")
    seed = TWO_PI * I / L
    try:
        lam, res = _newton(seed, L, c, I, tol, max_iter)
    except NewtonDiverged:
        lam = seed
        for cc in np.geomspace(1e6 * max(c, 1.0), c, 40):
            lam, res = _newton(lam, L, cc, I, tol, max_iter)
    return BetheState(N, L, c, I, lam, res)


def bethe_energy(st: BetheState):
    """Total energy sum lam_j^2."""
    return float(np.sum(st.roots ** 2))


@dataclass(frozen=True)
class TBASolution:
    grid: np.ndarray
    epsilon: np.ndarray
    rho: np.ndarray
    rho_t: np.ndarray
    energy_density: float
    particle_density: float
    pressure: float
    residual: float
    history: tuple = ()


def yy_cutoff(s: ThermalState, tol=1e-10):
    return max(6.0 * math.sqrt(s.T * math.log(1.0 / tol)), 6.0 * math.sqrt(abs(s.mu)))


def _log_occupation(eps, T):
    """ln(1 + exp(-eps/T)) without overflow."""
    return np.logaddexp(0.0, -eps / T)


def yang_yang_solve(s: ThermalState, c, n_grid=1601, cutoff=None, tol=1e-10, max_iter=2000):
    """Fixed point of the Yang-Yang equation and the dressed root density.

    Uniform grid on [-cutoff, cutoff] with trapezoid weights; the
    integrands decay like exp(-lam^2/T) so end tails are below ``tol``
    whenever the grid check passes.
    """
    if not c > 0:
        raise ValueError("c must be > 0")
    T, mu = s.T, s.mu
    cut = yy_cutoff(s, tol) if cutoff is None else cutoff
    lam = np.linspace(-cut, cut, n_grid)
    w = np.full(n_grid, lam[1] - lam[0])
    w[[0, -1]] *= 0.5
    kern = 2.0 * c / (c * c + (lam[:, None] - lam[None, :]) ** 2) * w[None, :]
    bare = lam ** 2 - mu
    eps = bare.copy()
    history = []
    for _ in range(max_iter):
        new = bare - T / TWO_PI * kern @ _log_occupation(eps, T)
        diff = float(np.max(np.abs(new - eps)))
        history.append(diff)
        eps = new
        if diff < tol:
            break
    else:
        raise IterationNotConverged(f"Yang-Yang iteration stalled at {history[-1]:.3e}")
    edge = T * float(np.max(_log_occupation(eps[[0, -1]], T)))
    if edge > tol:
        raise GridTooNarrow(f"occupation at the grid edge is {edge:.3e}; widen the cutoff")
    theta = 1.0 / (1.0 + np.exp(np.minimum(eps / T, 700.0)))
    rho_t = np.linalg.solve(np.eye(n_grid) - kern * theta[None, :] / TWO_PI,
                            np.full(n_grid, 1.0 / TWO_PI))
    rho = rho_t * theta
    residual = float(np.max(np.abs(bare - T / TWO_PI * kern @ _log_occupation(eps, T) - eps)))
    return TBASolution(
        grid=lam, epsilon=eps, rho=rho, rho_t=rho_t,
        energy_density=float(np.sum(w * lam ** 2 * rho)),
        particle_density=float(np.sum(w * rho)),
        pressure=float(T / TWO_PI * np.sum(w * _log_occupation(eps, T))),
        residual=residual, history=tuple(history))


def _free_moments(T, mu):
    """Free-fermion (pressure, density, energy) per unit length at (T, mu)."""
    cut = math.sqrt(max(mu, 0.0) + T * math.log(1e18))

    def occ(x):
        return 0.5 * (1.0 - math.tanh(0.5 * (x * x - mu) / T))

    opts = dict(points=[-math.sqrt(mu), math.sqrt(mu)] if mu > 0 else None, limit=200,
                epsabs=1e-15, epsrel=1e-13)
    P = integrate.quad(lambda x: T * np.logaddexp(0.0, (mu - x * x) / T), -cut, cut, **opts)[0]
    D = integrate.quad(occ, -cut, cut, **opts)[0]
    E = integrate.quad(lambda x: x * x * occ(x), -cut, cut, **opts)[0]
    return P / TWO_PI, D / TWO_PI, E / TWO_PI


def tba_first_order_density(s: ThermalState, c):
    """Root density of the Yang-Yang equation with its kernel truncated to 2/c.

    Then eps = lam^2 - mu_eff with mu_eff = mu + (2/c) P0(mu_eff), and
    rho(lam) = n0(lam / (1 + beta D); mu_eff) / 2 pi, beta = 2/c,
    D = D0/(1 - beta D0). The rescaled Fermi function is again thermal,
    with T' = (1 + beta D)^2 T and mu' = (1 + beta D)^2 mu_eff.
    """
    if not c > 0:
        raise ValueError("c must be > 0")
    if math.isinf(c):
        return RootDensity.thermal(s.T, s.mu)
    beta = 2.0 / c
    hi = s.mu + 10.0 + 10.0 * beta * (abs(s.mu) + s.T)
    mu_eff = optimize.brentq(lambda m: m - s.mu - beta * _free_moments(s.T, m)[0],
                             s.mu - 1.0, hi, xtol=1e-15, rtol=1e-15)
    D0 = _free_moments(s.T, mu_eff)[1]
    scale2 = (1.0 + beta * D0 / (1.0 - beta * D0)) ** 2
    return RootDensity.thermal(scale2 * s.T, scale2 * mu_eff)


def tba_energy_expansion(s: ThermalState, c):
    """Thermal energy density through order 1/c^2.

    The closed perturbative form (1 - 2 beta D + 3 beta^2 D^2) E with
    beta = 2/c, evaluated on ``tba_first_order_density``.
    """
    beta = 0.0 if math.isinf(c) else 2.0 / c
    return e_closed(tba_first_order_density(s, c), beta)
