import numpy as np
import pytest

from fchkit.errors import SpectralGapViolation
from fchkit.potential import WellSpec, eval_well
from fchkit.profile1d import build_profiles, pearling_condition

# frozen [DERIVED] constants of the gamma = 0.3, eta1 = 1, eta2 = 2 pipeline
LAM0 = -0.6842963299118376
LAM2 = 0.8442050527620734
M0 = 4.682747342423038
M1 = 0.8353238533281528
M2 = 0.39318344782431874
M3 = 0.8121575042620203
SIGMA1 = -0.2235117193760261
S1 = -1.2471545034755156


def test_pulse_ode_residual(profiles, well):
    g = profiles.grid
    res = g.deriv(profiles.phi0, 2) - eval_well(well, profiles.phi0, 1)
    assert np.max(np.abs(res)) < 1e-6


def test_first_integral(profiles, well):
    err = profiles.dphi0**2 - 2.0 * eval_well(well, profiles.phi0)
    assert np.max(np.abs(err)) < 1e-8


def test_kernel_mode(profiles):
    g = profiles.grid
    assert g.norm(profiles.L0.apply(profiles.dphi0)) < 1e-6
    # psi1 is the normalized kernel: phi0'/m1
    assert np.allclose(profiles.psi1 * profiles.m1, profiles.dphi0,
                       atol=1e-6)


def test_frozen_spectrum(profiles):
    assert profiles.lam0 == pytest.approx(LAM0, abs=1e-9)
    assert abs(profiles.lam1) < 1e-9
    assert profiles.lam2 == pytest.approx(LAM2, abs=1e-9)
    assert profiles.lam0 < 0.0


def test_frozen_moments(profiles):
    assert profiles.m0 == pytest.approx(M0, abs=1e-9)
    assert profiles.m1 == pytest.approx(M1, abs=1e-9)
    assert profiles.m2 == pytest.approx(M2, abs=1e-9)
    assert profiles.m3 == pytest.approx(M3, abs=1e-9)


def test_sigma1_star_identity(profiles):
    pred = -(profiles.eta1 + profiles.eta2) * profiles.m1**2 \
        / (2.0 * profiles.m0)
    assert profiles.sigma1_star == pytest.approx(pred, abs=1e-14)
    assert profiles.sigma1_star == pytest.approx(SIGMA1, abs=1e-9)


def test_pearling_margin(profiles):
    assert profiles.S1 == pytest.approx(S1, abs=1e-6)
    margin = pearling_condition(profiles.sigma1_star, profiles.S1,
                                profiles.eta_d, profiles.lam0)
    assert margin == pytest.approx(0.963045, abs=1e-4)
    assert margin > 0.0
    assert profiles.pearling_margin(profiles.sigma1_star) \
        == pytest.approx(margin)


def test_far_field_constants(profiles):
    nu2 = 1.4
    assert profiles.B1_infty == pytest.approx(1.0 / nu2, abs=1e-8)
    assert profiles.B2_infty == pytest.approx(1.0 / nu2**2, abs=1e-8)
    # B_k solve a chain L0 B1 = 1, L0 B2 = B1; far-field values saturate
    # (endpoint samples carry the residual tail of the deflated solve)
    assert profiles.B1[0] == pytest.approx(1.0 / nu2, abs=1e-6)
    assert profiles.B2[0] == pytest.approx(1.0 / nu2**2, abs=1e-6)


def test_phi1_operator_identity(profiles):
    """L0 phi1(sigma) = sigma B1 + (eta_d/2) z phi0' by construction."""
    g = profiles.grid
    for sigma in (0.0, 0.15, profiles.sigma1_star):
        lhs = profiles.L0.apply(profiles.phi1(sigma))
        rhs = sigma * profiles.B1 \
            + 0.5 * profiles.eta_d * g.z * profiles.dphi0
        assert g.norm(lhs - rhs) < 1e-7


def test_phi2_polynomial_structure(profiles):
    kap = -0.5
    for sigma in (-0.1, 0.2):
        direct = profiles.phi2(sigma, kap)
        split = profiles.P0(sigma) + kap * profiles.P1 + kap**2 * profiles.P2
        assert np.allclose(direct, split, atol=1e-14)
    # array curvature broadcast
    kaps = np.array([-1.0, -0.5])
    arr = profiles.phi2(0.1, kaps)
    assert arr.shape == (2, profiles.z.size)
    assert np.allclose(arr[1], profiles.phi2(0.1, -0.5))


def test_deflated_solve_consistency(profiles):
    """L0.solve returns a genuine preimage orthogonal to the kernel."""
    g = profiles.grid
    rhs = np.exp(-g.z**2)
    rhs -= g.inner(rhs, profiles.psi1) * profiles.psi1
    sol = profiles.L0.solve(rhs)
    assert g.norm(profiles.L0.apply(sol) - rhs) < 1e-6
    assert abs(g.inner(sol, profiles.psi1)) < 1e-8


def test_S2_affine_in_sigma(profiles):
    for k in (0, 1):
        a = profiles.S2(k, 0.0)
        b = profiles.S2(k, 1.0)
        assert profiles.S2(k, 0.3) == pytest.approx(a + 0.3 * (b - a),
                                                    abs=1e-12)


def test_solvability_residue_recorded(profiles):
    # the kappa-linear solvability projection was verified at build time
    assert abs(profiles.solvability_projection) < 1e-6


def test_spectral_gap_guard(well):
    from fchkit.profile1d import L0Operator, eigs_L0, solve_phi0, ZGrid
    g = ZGrid(ell_z=20.0, n_z=2049)
    phi0, dphi0 = solve_phi0(well, g)
    L0 = L0Operator(well, phi0, g)
    lam0, _, lam1, _, lam2 = eigs_L0(L0)
    assert lam2 > 10.0 * abs(lam1)
