"""Second-order self-energy of the Cheon-Shigehara gas and derived observables.

The thermodynamic-limit self-energy (regulator already removed) is

    Sigma(z, k) = -2 beta (A2 + A0 k^2)
                  - (4 beta^2 / T) int dq/2pi (A2 + A0 q^2)(k - q)^2 n(q)(1 - n(q))
                  + 2 beta^2 int dq2 dq3 / (2pi)^2  N(q2, q3) / (z + q2^2 - q3^2 - q4^2 + mu)
                  - i beta^2 int dq2/2pi  sqrt+(2(z - k^2 + mu) + (k - q2)^2) (k - q2)^2 n(q2)

with q4 = k + q2 - q3, N = ((k-q3)^2 - (q2-q3)^2)^2 (n3 n4 - n2 n3 - n2 n4) and
sqrt+ cut along the positive real axis. ``self_energy_finite_L`` is an
independent brute-force evaluation on a ring at finite regulator width.
"""
from __future__ import annotations

import math
import os
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate

from .errors import CutoffTooSmall, EtaTooSmall, QuadratureNotConverged
from .quadrature import QuadratureConfig, clustered_gauss, composite_gauss
from .regulator import TANH, FTable, GTable, RegulatorSpec
from .thermal import ThermalState, fermi_n

TWO_PI = 2.0 * math.pi
# coefficient of the beta^2/T static term; see internal_energy tests for the check
TADPOLE = 4.0
THREADS_ENV = "CSDUALITY_THREADS"

__all__ = [
    "ThermalState", "fermi_n", "moment_A", "sqrt_pos_cut", "self_energy",
    "retarded_self_energy", "greens_retarded", "spectral", "sum_rule", "SpectralGrid",
    "spectral_grid", "VertexParams", "vertex_W", "self_energy_finite_L", "f_T",
    "internal_energy", "internal_energy_parts", "InternalEnergy", "parallel_map", "matsubara",
]


def parallel_map(func, items, threads=None):
    """Ordered map over independent items, threaded when CSDUALITY_THREADS > 1.

    Each item is computed on its own, so the output does not depend on
    the thread count.
    """
    items = list(items)
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1") or 1)
    if threads <= 1 or len(items) <= 1:
        return [func(it) for it in items]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(func, items))


def matsubara(n, T):
    """Fermionic Matsubara frequency 2 pi T (n + 1/2)."""
    return TWO_PI * T * (n + 0.5)


def _n(s, p):
    return 0.5 * (1.0 - np.tanh(0.5 * (p * p - s.mu) / s.T))


def _dn(s, p):
    nn = _n(s, p)
    return -2.0 * p / s.T * nn * (1.0 - nn)


def _cutoff(s, quad):
    return quad.lambda_cut if quad.lambda_cut is not None else s.momentum_cutoff(16)


@lru_cache(maxsize=128)
def _moments(s: ThermalState):
    """A0, A2 and the static second-order moments M0, M2."""
    cut = s.momentum_cutoff(17)
    pts = [math.sqrt(s.mu)] if 0 < s.mu < cut ** 2 else None
    opts = dict(points=pts, limit=400, epsabs=1e-15, epsrel=1e-13)

    def mom(fun):
        return 2.0 * integrate.quad(fun, 0.0, cut, **opts)[0] / TWO_PI

    A0 = mom(lambda q: _n(s, q))
    A2 = mom(lambda q: q * q * _n(s, q))
    M0 = mom(lambda q: (A2 + A0 * q * q) * _n(s, q) * (1 - _n(s, q)))
    M2 = mom(lambda q: (A2 + A0 * q * q) * q * q * _n(s, q) * (1 - _n(s, q)))
    return A0, A2, M0, M2


def moment_A(s: ThermalState, m):
    """A_m = int dp/2pi p^m n(p) for m in {0, 2}."""
    if m not in (0, 2):
        raise ValueError("m must be 0 or 2")
    A0, A2, _, _ = _moments(s)
    return A0 if m == 0 else A2


def sqrt_pos_cut(z):
    """Square root with its cut on [0, inf): arg z in (0, 2pi), Im >= 0."""
    return 1j * np.sqrt(-np.asarray(z, dtype=complex))


def _first_order(s, k):
    A0, A2, _, _ = _moments(s)
    return -2.0 * (A2 + A0 * k * k)


def _static_second(s, k, tadpole):
    _, _, M0, M2 = _moments(s)
    return -(tadpole / s.T) * (k * k * M0 + M2)


def _combo(s, k, q2, q3):
    """N(q2, q3) and dN/dq3 for real arguments."""
    q4 = k + q2 - q3
    n2, n3, n4 = _n(s, q2), _n(s, q3), _n(s, q4)
    d3, d4 = _dn(s, q3), _dn(s, q4)
    occ = n3 * n4 - n2 * n3 - n2 * n4
    docc = d3 * n4 - n3 * d4 - n2 * d3 + n2 * d4
    u = k * k - q2 * q2 - 2.0 * q3 * (k - q2)
    return u * u * occ, u * u * docc - 4.0 * u * (k - q2) * occ


def _q2_rule(z, k, s, lam, n):
    lim = 2.0 * lam + abs(k)
    edges = set(np.linspace(-lim, lim, int(math.ceil(lim)) + 1).tolist())
    d = k * k - s.mu - z.real
    if d > 0:
        r = math.sqrt(2.0 * d)
        edges.update(q for q in (k - r, k + r) if -lim < q < lim)
    edges = np.array(sorted(edges))
    edges = edges[np.concatenate([[True], np.diff(edges) > 1e-9])]
    xs, ws = [], []
    for lo, hi in zip(edges[:-1], edges[1:]):
        m = max(6, int(math.ceil(n * (hi - lo) / (2.0 * lim))))
        x, w = clustered_gauss(lo, hi, m)
        xs.append(x)
        ws.append(w)
    return np.concatenate(xs), np.concatenate(ws)


@lru_cache(maxsize=8)
def _q3_reference(n):
    panels = max(1, n // 16)
    return composite_gauss(np.linspace(0.0, 1.0, panels + 1), max(4, n // panels))


def _cauchy(s, k, q2, q3, w3, a, b, nq, p):
    """int_a^b N(q2, q3)/(q3 - p) dq3 with the near-pole part done analytically."""
    r = p.real
    Nr, dNr = _combo(s, k, q2, r)
    num = nq - Nr[:, None] - dNr[:, None] * (q3 - r[:, None])
    body = np.sum(w3 * num / (q3 - p[:, None]), axis=1)
    ell = np.log(b - p) - np.log(a - p)
    return body + Nr * ell + dNr * ((b - a) + (p - r) * ell)


def _dynamic(z, k, s, quad, mode):
    """(iii) + (iv) divided by beta^2."""
    lam = _cutoff(s, quad)
    q2, w2 = _q2_rule(z, k, s, lam, quad.n_q2)
    u, wu = _q3_reference(quad.n_q3)
    a = np.minimum(-lam, k + q2 - lam)
    b = np.maximum(lam, k + q2 + lam)
    q3 = a[:, None] + (b - a)[:, None] * u[None, :]
    w3 = (b - a)[:, None] * wu[None, :]
    w = 2.0 * (z - k * k + s.mu) + (k - q2) ** 2
    root = sqrt_pos_cut(w)
    if mode == "subtract":
        nq = _combo(s, k, q2[:, None], q3)[0]
        p_plus = 0.5 * (k + q2) + 0.5 * root
        p_minus = 0.5 * (k + q2) - 0.5 * root
        inner = -(_cauchy(s, k, q2, q3, w3, a, b, nq, p_plus)
                  - _cauchy(s, k, q2, q3, w3, a, b, nq, p_minus)) / (2.0 * root)
    elif mode == "direct":
        width = np.min(np.abs(0.5 * root.imag))
        spacing = float(np.max((b - a))) * float(np.max(np.diff(u)))
        if width < 3.0 * spacing:
            raise EtaTooSmall(f"pole width {width:.2e} below 3 grid spacings ({spacing:.2e})")
        q4 = k + q2[:, None] - q3
        nq = _combo(s, k, q2[:, None], q3)[0]
        den = z + q2[:, None] ** 2 - q3 ** 2 - q4 ** 2 + s.mu
        inner = np.sum(w3 * nq / den, axis=1)
    else:
        raise ValueError("mode must be 'subtract' or 'direct'")
    third = 2.0 * np.sum(w2 * inner) / TWO_PI ** 2
    fourth = -1j * np.sum(w2 * root * (k - q2) ** 2 * _n(s, q2)) / TWO_PI
    return complex(third + fourth)


def self_energy(z, k, s: ThermalState, beta, quad=QuadratureConfig(), order=2,
                tadpole=TADPOLE, mode="subtract", check=False):
    """Self-energy at complex frequency z (Matsubara i w_n or continued w + i eta).

    ``order=1`` keeps only the static first-order term. ``check`` repeats
    the dynamic part with 3/4 of the nodes and raises
    QuadratureNotConverged on a relative change above 100 * quad.tol.
    """
    z = complex(z)
    if z.imag == 0.0:
        raise ValueError("self_energy needs Im z != 0")
    if z.imag < 0:
        return self_energy(z.conjugate(), k, s, beta, quad, order, tadpole, mode, check).conjugate()
    if order not in (1, 2):
        raise ValueError("order must be 1 or 2")
    first = beta * _first_order(s, k)
    if order == 1 or beta == 0:
        return complex(first)
    dyn = _dynamic(z, k, s, quad, mode)
    if check:
        coarse = QuadratureConfig(quad.lambda_cut, max(8, 3 * quad.n_q2 // 4),
                                  max(8, 3 * quad.n_q3 // 4), quad.n_outer, quad.n_nu,
                                  quad.eta, quad.pv_radius, quad.tol)
        err = abs(_dynamic(z, k, s, coarse, mode) - dyn)
        if err > 100 * quad.tol * max(abs(dyn), 1e-12):
            raise QuadratureNotConverged(f"self-energy changed by {err:.3e} under refinement")
    return complex(first + beta ** 2 * (_static_second(s, k, tadpole) + dyn))


def retarded_self_energy(omega, k, s, beta, quad=QuadratureConfig(), continuation="extrapolate",
                         **kw):
    """Sigma(omega + i0) by one of three continuations.

    "eta": value at omega + i quad.eta; "extrapolate": linear
    extrapolation from eta0 = quad.eta and eta0/2 to zero; "boundary":
    value at eta = 1e-10 using the analytic pole subtraction.
    """
    if continuation == "eta":
        return self_energy(omega + 1j * quad.eta, k, s, beta, quad, **kw)
    if continuation == "extrapolate":
        s1 = self_energy(omega + 1j * quad.eta, k, s, beta, quad, **kw)
        s2 = self_energy(omega + 0.5j * quad.eta, k, s, beta, quad, **kw)
        return 2.0 * s2 - s1
    if continuation == "boundary":
        return self_energy(omega + 1e-10j, k, s, beta, quad, **kw)
    raise ValueError("continuation must be 'eta', 'extrapolate' or 'boundary'")


def _g_eta(quad, continuation):
    return quad.eta if continuation == "eta" else 1e-12


def greens_retarded(omega, k, s, beta, quad=QuadratureConfig(), continuation="eta", **kw):
    """G^R = 1 / (omega + i eta - k^2 + mu - Sigma(omega + i eta, k))."""
    sig = retarded_self_energy(omega, k, s, beta, quad, continuation, **kw)
    return 1.0 / (omega + 1j * _g_eta(quad, continuation) - k * k + s.mu - sig)


def spectral(omega, k, s, beta, quad=QuadratureConfig(), continuation="eta", **kw):
    """A(omega, k) = -2 Im G^R(omega, k)."""
    return float(-2.0 * greens_retarded(omega, k, s, beta, quad, continuation, **kw).imag)


def sum_rule(k, s, beta, quad=QuadratureConfig(), continuation="extrapolate", omega_max=400.0,
             tol=1e-6):
    """int dw/2pi A(w, k) by adaptive quadrature plus fitted power-law tails.

    Right tail model c1 w^-3/2 + c2 w^-2 (the sqrt term makes Im Sigma grow
    like sqrt(w)); left tail c w^-2. At beta = 0 the spectrum is a single
    delta peak of unit weight and 1.0 is returned.
    """
    if beta == 0:
        return 1.0
    xi = k * k - s.mu
    lam = _cutoff(s, quad)
    lo = min(-lam * lam - s.mu, xi - 20.0)

    def A(w):
        return spectral(w, k, s, beta, quad, continuation)

    centre = xi + (beta * _first_order(s, k) if beta else 0.0)
    marks = sorted({lo, xi - 10.0, centre - 2.0, centre, centre + 2.0, xi + 10.0, 50.0, omega_max})
    marks = [m for m in marks if lo <= m <= omega_max]
    total = 0.0
    with warnings.catch_warnings():
        # roundoff warnings near the peak are covered by the 1e-2 sum-rule budget
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        for a, b in zip(marks[:-1], marks[1:]):
            if b > a:
                total += integrate.quad(A, a, b, limit=400, epsabs=tol, epsrel=tol,
                                        points=[c for c in (xi, centre) if a < c < b] or None)[0]
    # right tail from two samples
    w1, w2 = omega_max, 2.0 * omega_max
    a1, a2 = A(w1), A(w2)
    m = np.array([[w1 ** -1.5, w1 ** -2.0], [w2 ** -1.5, w2 ** -2.0]])
    c1, c2 = np.linalg.solve(m, [a1, a2])
    total += 2.0 * c1 / math.sqrt(omega_max) + c2 / omega_max
    a_lo = A(lo)
    total += a_lo * lo * lo / abs(lo)
    return total / TWO_PI


@dataclass
class SpectralGrid:
    omegas: np.ndarray
    ks: np.ndarray
    sigma: np.ndarray
    a_vals: np.ndarray
    meta: dict = field(default_factory=dict)

    def min_ratio(self):
        """min A / max A; retarded positivity keeps this >= -tolerance."""
        return float(np.min(self.a_vals) / np.max(self.a_vals))


def spectral_grid(omegas, ks, s, beta, quad=QuadratureConfig(), continuation="extrapolate",
                  threads=None):
    """Sigma and A on an (omega, k) grid; rows for k and -k share one evaluation."""
    omegas = np.asarray(omegas, float)
    ks = np.asarray(ks, float)
    uniq = np.unique(np.abs(ks))

    def row(k):
        sig = np.array([retarded_self_energy(w, k, s, beta, quad, continuation) for w in omegas])
        g = 1.0 / (omegas + 1j * _g_eta(quad, continuation) - k * k + s.mu - sig)
        return sig, -2.0 * g.imag

    rows = dict(zip(uniq.tolist(), parallel_map(row, uniq, threads)))
    sigma = np.array([rows[abs(k)][0] for k in ks])
    a_vals = np.array([rows[abs(k)][1] for k in ks])
    meta = dict(T=s.T, mu=s.mu, beta=beta, eta=quad.eta, continuation=continuation,
                lambda_cut=_cutoff(s, quad), n_q2=quad.n_q2, n_q3=quad.n_q3)
    return SpectralGrid(omegas, ks, sigma, a_vals, meta)


# ---------------------------------------------------------------- finite ring


@dataclass(frozen=True)
class VertexParams:
    """Ring of length L, regulator (a, beta), momentum-index cutoff."""

    L: float
    a: float
    beta: float
    cutoff: int | None = None
    regulator: RegulatorSpec = TANH

    def __post_init__(self):
        if not self.L > 0:
            raise ValueError("L must be > 0")
        if not (self.a > 0 and self.beta > 0):
            raise ValueError("a and beta must be > 0")

    @property
    def dp(self):
        return TWO_PI / self.L


@lru_cache(maxsize=16)
def _tables(spec, kmax):
    return FTable(spec), GTable(spec, kmax)


def _vhat_diff(v, q, order=2):
    """beta-expanded V(q) - V(0) to the given order."""
    ft, gt = _tables(v.regulator, 64.0 * max(v.a, 0.01))
    a = v.a
    val = v.beta * ft(q * a) / a ** 2
    if order >= 2:
        val = val + v.beta ** 2 * gt(np.abs(q) * a) / a ** 3
    return val


def vertex_W(v: VertexParams, p1, p2, p3, p4, order=2):
    """(1/4L) delta_{p1+p2,p3+p4} sum_{P,Q} sgn(PQ) V(p_P(1) - p_{Q(1)+2}).

    V enters through its beta expansion (the V(0) pieces cancel in the
    signed sum). Momenta must sit on the 2 pi / L lattice.
    """
    p = [np.asarray(x, float) for x in (p1, p2, p3, p4)]
    for x in p:
        m = x / v.dp
        if np.any(np.abs(m - np.round(m)) > 1e-8):
            raise ValueError("momenta must lie on the 2 pi / L lattice")
    conserve = np.abs(p[0] + p[1] - p[2] - p[3]) < 1e-9 * v.dp
    val = (_vhat_diff(v, p[0] - p[2], order) - _vhat_diff(v, p[1] - p[2], order)
           - _vhat_diff(v, p[0] - p[3], order) + _vhat_diff(v, p[1] - p[3], order))
    out = np.where(conserve, val / (4.0 * v.L), 0.0)
    return float(out) if out.ndim == 0 else out


def f_T(x, T):
    """(e^{x/T} - 1)/x with the removable value 1/T at x = 0."""
    x = np.asarray(x, dtype=complex)
    small = np.abs(x) < 1e-8 * T
    safe = np.where(small, 1.0, x)
    out = np.where(small, 1.0 / T + x / (2 * T * T), np.expm1(x / T) / safe)
    return complex(out) if out.ndim == 0 else out


def _required_index(v, s, p):
    return int(math.ceil((v.regulator.hat_support / v.a + 2 * s.momentum_cutoff(16) + abs(p)) / v.dp)) + 1


def self_energy_finite_L(n, k_idx, v: VertexParams, s: ThermalState, order=2, chunk=64):
    """Brute-force self-energy on the ring at Matsubara frequency w_n.

    Uses the physical antisymmetrised vertex U = -W (W from vertex_W),
    which fixes the operator ordering of the interaction:
      first order   4 sum_q U(p,q,q,p) n_q                (Hartree-Fock)
      tadpole       -(1/T) sum_q 4 U(p,q,q,p) S1(q) n_q (1 - n_q)
      Born          (1/2) sum_{p2,p3} |4 U|^2 [n2 (1-n3)(1-n4) + (1-n2) n3 n4]
                    / (i w_n + e2 - e3 - e4),
    the last written with f_T as in the discrete-sum expression. V is
    expanded to beta^2 (first order) and beta (vertices at second order).
    """
    dp = v.dp
    p = k_idx * dp
    z = 1j * matsubara(n, s.T)
    need = _required_index(v, s, p)
    cutoff = v.cutoff if v.cutoff is not None else need
    if cutoff < need:
        raise CutoffTooSmall(f"momentum cutoff {cutoff} below the required {need}")
    lam = s.momentum_cutoff(16)
    mt = int(math.ceil(lam / dp)) + 1
    q = np.arange(-mt, mt + 1) * dp
    nq = fermi_n(s, q)

    def U(p1, p2, p3, p4, o):
        return -vertex_W(v, p1, p2, p3, p4, order=o)

    hf = 4.0 * np.sum(U(p, q, q, p, order) * nq)
    if order == 1:
        return complex(hf)
    S1 = np.array([4.0 * np.sum(U(qq, q, q, qq, 1) * nq) for qq in q])
    tad = -(1.0 / s.T) * np.sum(4.0 * U(p, q, q, p, 1) * S1 * nq * (1 - nq))

    def e(x):
        return x * x - s.mu

    p3 = np.arange(-cutoff, cutoff + 1)[None, :] * dp

    def amp(p3_, p4_):
        # 4 U(p, p2, p3, p4) reduced with p2 - p3 = p4 - p
        return (2.0 / v.L) * (_vhat_diff(v, p - p4_, 1) - _vhat_diff(v, p - p3_, 1))

    born = 0j
    # p2 thermal, p3 over the whole cutoff range: covers both occupation terms
    for i in range(0, len(q), chunk):
        p2 = q[i:i + chunk, None]
        p4 = p + p2 - p3
        n2, n3, n4 = fermi_n(s, p2), fermi_n(s, p3), fermi_n(s, p4)
        occ = n2 * (1 - n3) * (1 - n4) + (1 - n2) * n3 * n4
        born += 0.5 * np.sum(amp(p3, p4) ** 2 * occ / (z + e(p2) - e(p3) - e(p4)))
    # (1-n2) n3 n4 with p2 outside the thermal window
    P3, P4 = np.meshgrid(q, q, indexing="ij")
    P2 = P3 + P4 - p
    outside = np.abs(P2) > q[-1] + 1e-9 * dp
    occ = np.where(outside, (1 - fermi_n(s, P2)) * fermi_n(s, P3) * fermi_n(s, P4), 0.0)
    born += 0.5 * np.sum(amp(P3, P4) ** 2 * occ / (z + e(P2) - e(P3) - e(P4)))
    return complex(hf + tad + born)


# ---------------------------------------------------------------- internal energy


@dataclass(frozen=True)
class InternalEnergy:
    u: float
    u0: float
    u1: float
    u2: float
    beta: float
    formula: str = "galitskii-migdal, expanded to beta^2"


def _g_and_derivs(s, k, w):
    """g(w) = (w + mu + k^2) f(w) / 2 with f the Fermi function, and g', g''."""
    f = 0.5 * (1.0 - np.tanh(0.5 * w / s.T))
    f1 = -f * (1.0 - f) / s.T
    f2 = -f1 * (1.0 - 2.0 * f) / s.T
    c = 0.5 * (w + s.mu + k * k)
    return c * f, 0.5 * f + c * f1, f1 + c * f2


def _second_difference(s, k, xi, delta):
    """[g(D) - g(xi) - g'(xi)(D - xi)] / (D - xi)^2, -> g''(xi)/2 as D -> xi."""
    g0, g1, g2 = _g_and_derivs(s, k, xi)
    gd = _g_and_derivs(s, k, delta)[0]
    d = delta - xi
    small = np.abs(d) < 1e-5
    ds = np.where(small, 1.0, d)
    return np.where(small, 0.5 * g2, (gd - g0 - g1 * d) / ds ** 2)


def _energy_iii(s, k, x, wx):
    """Galitskii-Migdal weight of term (iii): 2 int N * second difference."""
    xi = k * k - s.mu
    A, B = np.meshgrid(x, x, indexing="ij")
    W = np.outer(wx, wx) / TWO_PI ** 2
    total = 0.0
    # each occupation product gets its own pair of integration variables
    for sign, (q2, q3, q4), occ in (
            (1.0, (A + B - k, A, B), _n(s, A) * _n(s, B)),       # n3 n4
            (-1.0, (A, B, k + A - B), _n(s, A) * _n(s, B)),      # n2 n3
            (-1.0, (A, k + A - B, B), _n(s, A) * _n(s, B))):     # n2 n4
        u = (k - q3) ** 2 - (q2 - q3) ** 2
        delta = q3 ** 2 + q4 ** 2 - q2 ** 2 - s.mu
        total += sign * np.sum(W * u * u * occ * _second_difference(s, k, xi, delta))
    return 2.0 * total


@lru_cache(maxsize=4)
def _t_reference(panels, n):
    return composite_gauss(np.linspace(0.0, 1.0, panels + 1), n)


def _energy_iv(s, k, x, wx):
    """Galitskii-Migdal weight of term (iv) via a Hadamard finite part.

    (1/pi) f.p. int_{z0}^inf g(w) sqrt(2(w - z0)) / (w - xi)^2 dw with
    z0 = xi - (k - q2)^2 / 2, integrated in t = sqrt(w - z0).
    """
    xi = k * k - s.mu
    keep = np.abs(k - x) > 1e-12
    q2, w2 = x[keep], wx[keep]
    d = np.abs(k - q2)
    z0 = xi - 0.5 * d * d
    g0, g1, _ = _g_and_derivs(s, k, xi)
    sq = d  # sqrt(2 (xi - z0))
    phi0 = g0 * sq
    phi1 = g1 * sq + g0 / sq
    w_end = np.maximum(2 * xi - z0, 0.0) + 60.0 * s.T + np.abs(z0)
    u, wu = _t_reference(8, 40)
    total = np.zeros_like(q2)
    for lo, hi, chi in ((np.zeros_like(d), d, 1.0), (d, np.sqrt(w_end - z0), 0.0)):
        t = lo[:, None] + (hi - lo)[:, None] * u[None, :]
        wt = (hi - lo)[:, None] * wu[None, :]
        w = z0[:, None] + t * t
        dd = w - xi
        phi = _g_and_derivs(s, k, w)[0] * math.sqrt(2.0) * t
        val = (phi - phi0[:, None] - chi * phi1[:, None] * dd) / dd ** 2
        total += np.sum(wt * 2.0 * t * val, axis=1)
    total -= phi0 / (w_end - xi)
    J = (total - phi0 / (xi - z0)) / math.pi
    return float(np.sum(w2 * d * d * _n(s, q2) * J) / TWO_PI)


def internal_energy_parts(s: ThermalState, beta, quad=QuadratureConfig(), tadpole=TADPOLE,
                          threads=None, k_split=None):
    """Internal energy density u = int dk/2pi int dw/2pi (w + mu + k^2)/2 A(w,k) f(w).

    A is taken from the Dyson propagator of the second-order self-energy
    and the frequency integral is done analytically order by order, which
    keeps u exact through beta^2:

      A = 2 pi delta(w - xi') - 2 Im[Sigma_dyn / (w - xi + i0)^2],
      xi' = k^2 - mu + Sigma_static.

    The k integrand decays like 1/k^2, so [K, inf) is mapped with k = K/s.
    """
    lam = _cutoff(s, quad)
    K = k_split or lam + 2.0
    k1, w1 = composite_gauss(np.linspace(0.0, K, 17), 8)
    sv, ws = composite_gauss(np.linspace(0.0, 1.0, 3), 8)
    ks = np.concatenate([k1, K / sv])
    wk = np.concatenate([w1, ws * K / sv ** 2])
    panels = max(2, quad.n_outer // 4)
    x, wx = composite_gauss(np.linspace(-lam, lam, panels + 1), 8)

    def parts(k):
        xi = k * k - s.mu
        g0, g1, g2 = _g_and_derivs(s, k, xi)
        s1 = _first_order(s, k)
        u2 = (g1 * _static_second(s, k, tadpole) + 0.5 * g2 * s1 * s1
              + _energy_iii(s, k, x, wx) + _energy_iv(s, k, x, wx))
        return g0, g1 * s1, u2

    vals = np.array(parallel_map(parts, ks, threads))
    u0, u1, u2 = (float(2.0 * np.sum(wk * vals[:, i]) / TWO_PI) for i in range(3))
    return InternalEnergy(u0 + beta * u1 + beta ** 2 * u2, u0, u1, u2, beta)


def internal_energy(s: ThermalState, beta, quad=QuadratureConfig(), **kw):
    """Internal energy density; see ``internal_energy_parts`` for the route."""
    return float(internal_energy_parts(s, beta, quad, **kw).u)
