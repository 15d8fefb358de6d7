import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate

from csduality.bethe import tba_energy_expansion
from csduality.errors import CutoffTooSmall, EtaTooSmall
from csduality.manybody import (ThermalState, VertexParams, f_T, fermi_n, greens_retarded,
                                internal_energy, internal_energy_parts, matsubara, moment_A,
                                parallel_map, retarded_self_energy, self_energy,
                                self_energy_finite_L, spectral, spectral_grid, sqrt_pos_cut,
                                vertex_W)
from csduality.quadrature import QuadratureConfig, composite_gauss

S = ThermalState(1.0, 1.0)
ZM = 1j * math.pi  # lowest Matsubara frequency at T = 1


def test_fermi_n_values():
    assert fermi_n(S, 1.0) == pytest.approx(0.5, abs=1e-15)
    assert fermi_n(S, 0.0) == pytest.approx(1.0 / (1.0 + math.exp(-1.0)), rel=1e-14)
    assert fermi_n(S, 100.0) < 1e-300 + 1e-16


def test_moment_A_limits():
    assert moment_A(ThermalState(1e-3, 1.0), 0) == pytest.approx(1.0 / math.pi, rel=1e-6)
    assert moment_A(ThermalState(1.0, -50.0), 0) < 1e-20
    with pytest.raises(ValueError):
        moment_A(S, 1)


def test_moment_A2_doubled_resolution():
    vals = []
    for n in (32, 64):
        x, w = composite_gauss(np.linspace(0.0, 7.0, n + 1), 16)
        vals.append(2 * np.sum(w * x * x / (1 + np.exp(x * x - 1))) / (2 * math.pi))
    assert vals[0] == pytest.approx(vals[1], rel=1e-14)
    assert moment_A(S, 2) == pytest.approx(vals[1], rel=1e-12)
    assert moment_A(S, 2) == pytest.approx(0.22224002832941636, rel=1e-12)


def test_sqrt_pos_cut_examples():
    assert sqrt_pos_cut(-4.0) == pytest.approx(2j)
    assert sqrt_pos_cut(2j) == pytest.approx(1 + 1j)
    assert sqrt_pos_cut(4.0 + 1e-14j) == pytest.approx(2.0, abs=1e-7)
    assert sqrt_pos_cut(4.0 - 1e-14j) == pytest.approx(-2.0, abs=1e-7)


@given(re=st.floats(-50, 50), im=st.floats(-50, 50))
def test_sqrt_pos_cut_branch(re, im):
    z = complex(re, im)
    r = complex(sqrt_pos_cut(z))
    assert r.imag >= 0
    assert r * r == pytest.approx(z, abs=1e-9 * (1 + abs(z)))


def test_self_energy_beta_zero_and_first_order():
    assert self_energy(ZM, 1.0, S, 0.0) == 0
    for k in (0.0, 0.7, 2.0):
        closed = -2 * 0.5 * (moment_A(S, 2) + moment_A(S, 0) * k * k)
        assert self_energy(0.3 + 2j, k, S, 0.5, order=1) == pytest.approx(closed, rel=1e-14)
    with pytest.raises(ValueError):
        self_energy(1.0, 1.0, S, 0.5)


def test_beta_one_part_of_full_self_energy():
    # Sigma is a quadratic polynomial in beta
    b = 0.3
    for z, k in ((ZM, 0.0), (0.5 + 0.1j, 1.2), (-2 + 0.05j, 2.5)):
        lin = (4 * self_energy(z, k, S, b) - self_energy(z, k, S, 2 * b)) / (2 * b)
        closed = -2 * (moment_A(S, 2) + moment_A(S, 0) * k * k)
        assert lin == pytest.approx(closed, rel=1e-10)


@settings(max_examples=15, deadline=None)
@given(w=st.floats(-5, 8), eta=st.floats(0.05, 3), k=st.floats(0, 2.5))
def test_matsubara_reality_and_parity(w, eta, k):
    z = complex(w, eta)
    val = self_energy(z, k, S, 0.5)
    assert self_energy(z.conjugate(), k, S, 0.5) == pytest.approx(val.conjugate(), abs=1e-14)
    assert self_energy(z, -k, S, 0.5) == pytest.approx(val, abs=1e-9)
    assert val.imag <= 1e-9  # retarded sign in the upper half plane


def test_self_energy_against_frozen_oracle():
    # finite ring oracle extrapolated linearly in a (L dependence is exponentially small)
    oracle = {0.0: -0.244345 - 0.098836j, 1.0: -0.47905 - 0.26645j}
    for k, ref in oracle.items():
        assert abs(self_energy(ZM, k, S, 0.5) - ref) <= 5e-4 * abs(ref)


def test_direct_mode_cross_check():
    fine = QuadratureConfig(n_q3=1280)
    direct = self_energy(ZM, 1.0, S, 0.5, fine, mode="direct")
    assert direct == pytest.approx(self_energy(ZM, 1.0, S, 0.5), rel=1e-8)
    with pytest.raises(EtaTooSmall):
        self_energy(0.5 + 1e-3j, 1.0, S, 0.5, mode="direct")


def test_retarded_continuations_agree():
    ext = retarded_self_energy(0.5, 1.0, S, 0.5)
    bnd = retarded_self_energy(0.5, 1.0, S, 0.5, continuation="boundary")
    small = self_energy(0.5 + 1e-4j, 1.0, S, 0.5)
    assert ext == pytest.approx(bnd, abs=1e-4)
    assert small == pytest.approx(bnd, abs=1e-5)


def test_quadrature_refinement_check_passes():
    self_energy(ZM, 1.0, S, 0.5, check=True)


def test_vertex_symmetries():
    v = VertexParams(2 * math.pi * 4, 0.05, 0.5)
    dp = v.dp
    p1, p2, p3 = 3 * dp, -dp, 2 * dp
    p4 = p1 + p2 - p3
    w = vertex_W(v, p1, p2, p3, p4)
    assert w != 0
    assert vertex_W(v, p2, p1, p3, p4) == pytest.approx(-w, rel=1e-14)
    assert vertex_W(v, p1, p2, p4, p3) == pytest.approx(-w, rel=1e-14)
    assert vertex_W(v, p1, p1, p3, 2 * p1 - p3) == 0
    assert vertex_W(v, p1, p2, p3, p4 + dp) == 0
    with pytest.raises(ValueError):
        vertex_W(v, 0.5 * dp, p2, p3, p4)


def test_f_T_removable_point():
    assert f_T(0.0, 2.0) == pytest.approx(0.5)
    assert f_T(1e-3, 1.0) == pytest.approx(math.expm1(1e-3) / 1e-3, rel=1e-12)


def test_finite_ring_oracle():
    v = VertexParams(50.0, 0.02, 0.5)
    val = self_energy_finite_L(0, 0, v, S)
    assert val == pytest.approx(-0.24219224689631735 - 0.09535544204123801j, rel=1e-8)
    # the ring size only enters through exponentially small Fermi-sum corrections
    other = self_energy_finite_L(0, 0, VertexParams(25.0, 0.02, 0.5), S)
    assert abs(val - other) < 1e-8
    assert self_energy_finite_L(0, 0, VertexParams(50.0, 0.02, 0.5), S, order=1) == pytest.approx(
        self_energy(ZM, 0.0, S, 0.5, order=1), rel=1e-3)
    assert matsubara(0, 1.0) == pytest.approx(math.pi)


def test_finite_ring_cutoff_too_small():
    with pytest.raises(CutoffTooSmall):
        self_energy_finite_L(0, 0, VertexParams(50.0, 0.02, 0.5, cutoff=10), S)


def test_free_green_function():
    quad = QuadratureConfig(eta=0.05)
    g = greens_retarded(0.3, 1.2, S, 0.0, quad)
    assert g == pytest.approx(1.0 / (0.3 + 0.05j - 1.44 + 1.0), rel=1e-14)
    assert greens_retarded(0.44, 1.2, S, 0.0, quad).real == pytest.approx(0.0, abs=1e-12)


def test_free_lorentzian_weight():
    for eta in (0.1, 0.01):
        quad = QuadratureConfig(eta=eta)
        val = integrate.quad(lambda w: spectral(w, 1.0, S, 0.0, quad), -200, 200,
                             points=[0.0], limit=400)[0] / (2 * math.pi)
        assert val == pytest.approx(1 - 2 * math.atan(eta / 200) / math.pi, rel=1e-7)
        assert spectral(0.0, 1.0, S, 0.0, quad) == pytest.approx(2 / eta)


def test_spectral_grid_positive_and_parallel_deterministic():
    om = np.linspace(-6, 10, 9)
    ks = np.array([-2.0, 0.0, 1.0, 2.0])
    g1 = spectral_grid(om, ks, S, 0.5, threads=1)
    g2 = spectral_grid(om, ks, S, 0.5, threads=2)
    assert np.array_equal(g1.a_vals, g2.a_vals)
    assert np.array_equal(g1.a_vals[0], g1.a_vals[3])
    assert g1.min_ratio() >= -1e-6
    assert g1.meta["beta"] == 0.5


def test_parallel_map_order():
    assert parallel_map(lambda x: x * x, range(7), threads=3) == [x * x for x in range(7)]


def test_quasiparticle_shift():
    k = 1.0
    om = np.linspace(-1.5, 0.5, 201)
    a = np.array([spectral(w, k, S, 0.5, continuation="extrapolate") for w in om])
    peak = om[np.argmax(a)]
    shift = retarded_self_energy(peak, k, S, 0.5).real
    assert peak == pytest.approx(k * k - 1.0 + shift, abs=0.02)


def test_internal_energy_orders():
    parts = internal_energy_parts(S, 0.1)
    assert parts.u0 == pytest.approx(moment_A(S, 2), rel=1e-9)
    assert parts.u == pytest.approx(internal_energy(S, 0.1), rel=1e-14)
    assert "galitskii-migdal" in parts.formula
    # first order against the independent expanded Yang-Yang thermodynamics
    b = 1e-4
    assert parts.u1 == pytest.approx((tba_energy_expansion(S, 2 / b) - parts.u0) / b, rel=1e-4)
    assert internal_energy(S, 0.0) == pytest.approx(moment_A(S, 2), rel=1e-9)


def test_peak_broadens_with_beta():
    om = np.linspace(-2.0, 1.5, 141)
    heights = [max(spectral(w, 1.0, S, b, continuation="extrapolate") for w in om) for b in (0.5, 1.0)]
    weights = [integrate.trapezoid([spectral(w, 1.0, S, b, continuation="extrapolate") for w in om], om)
               for b in (0.5, 1.0)]
    assert heights[1] < heights[0]
    assert all(0.5 < w / (2 * math.pi) <= 1.0 for w in weights)
