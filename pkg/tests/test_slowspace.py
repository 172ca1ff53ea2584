import numpy as np
import pytest

from fchkit.ansatz import AnsatzParams, FieldState, assemble_Phi, eval_F
from fchkit.errors import NearResonance, SetsOverlap
from fchkit.geometry import BaseCurve, MeanderVector, build_interface
from fchkit.potential import WellSpec
from fchkit.profile1d import build_profiles
from fchkit.slowspace import _correction_profiles, _solve_deflated_quartic, \
    apply_linearization, assemble_Mstar, build_basis, build_index_sets, \
    fast_coercivity_probe, h2in_norm, mode_matrix_prediction, \
    pearling_coercivity


def test_h2in_norm_pure_mode():
    f = FieldState.constant(0.0, 128, np.pi, 0.1)
    X, Y = f.meshgrid()
    g = np.sin(X) * np.cos(2.0 * Y)
    l2 = f.norm_L2(g)
    # k^2 = 5 for this mode, so the H2 part is sqrt(1 + 5 + 25) l2
    assert h2in_norm(f, g) == pytest.approx(l2 * (1.0 + 0.01 * np.sqrt(31)),
                                            rel=1e-10)


def test_index_set_counting(profiles):
    """Frozen mode counts at R0 = 1; both classes scale like 1/eps."""
    lam0 = profiles.lam0
    rho = 0.1 * lam0**2
    counts = {}
    for eps in (0.2, 0.1, 0.05):
        s = build_index_sets(eps, rho, lam0, R0=1.0)
        counts[eps] = (s.N0, s.N1)
        # pearling wavenumbers sit in the band eps beta in [.5, 1.1]
        betas = s.eps * np.array([s.beta_p(j) for j in s.Sigma0])
        assert np.all((betas > 0.5) & (betas < 1.1))
        # meander always keeps the geometric modes j = 0, 1, 2
        assert s.Sigma1[:3] == [0, 1, 2]
        assert s.wavenumber_gap() > 0.2
    assert counts[0.2] == (2, 5)
    assert counts[0.1] == (6, 9)
    assert counts[0.05] == (10, 19)


def test_index_set_overlap_guards(profiles):
    lam0 = profiles.lam0
    with pytest.raises(SetsOverlap):
        build_index_sets(0.1, lam0**2, lam0)
    # above the continuum threshold rho = lam0^2/4 the bands meet
    with pytest.raises(SetsOverlap):
        build_index_sets(0.05, 0.3 * lam0**2, lam0, R0=1.0)
    s = build_index_sets(0.05, 0.3 * lam0**2, lam0, R0=1.0,
                         check_disjoint=False)
    assert set(s.Sigma0) & set(s.Sigma1)
    with pytest.raises(ValueError):
        build_index_sets(0.1, -1.0, lam0)


def test_index_set_p0_rescaling(profiles):
    from fchkit.geometry import beta_j
    lam0 = profiles.lam0
    s = build_index_sets(0.1, 0.1 * lam0**2, lam0, R0=2.0, p0=0.25)
    for j in s.indices[:5]:
        assert s.beta_p(j) == pytest.approx(beta_j(j) / (1.25 * 2.0))
        k = s.I(j)
        lam = lam0 if k == 0 else 0.0
        assert s.Lam(j) == pytest.approx(lam + 0.01 * s.beta_p(j)**2)
    with pytest.raises(KeyError):
        s.I(10**6)


def test_linearization_fd_consistency(well, circle_setup):
    """L is the derivative of the flow field F along Phi."""
    Phi = circle_setup["Phi"]
    rng = np.random.default_rng(3)
    from scipy.fft import fft2, ifft2
    v = rng.standard_normal(Phi.values.shape)
    v = np.real(ifft2(fft2(v) * np.exp(-0.5 * Phi.k2_grid())))
    v /= np.max(np.abs(v))
    Lv, PLv = apply_linearization(v, Phi, well, 1.0, 2.0)
    h = 1e-6
    up, um = Phi.copy(), Phi.copy()
    up.values = Phi.values + h * v
    um.values = Phi.values - h * v
    fd = (eval_F(up, well, 1.0, 2.0) - eval_F(um, well, 1.0, 2.0)) / (2 * h)
    assert np.max(np.abs(Lv - fd)) < 1e-5 * np.max(np.abs(Lv))
    assert abs(np.mean(PLv)) < 1e-14


def test_gram_near_identity(circle_basis):
    G = circle_basis.gram()
    N = circle_basis.N
    eps = circle_basis.eps
    d = np.diag(G)
    # diagonal = (1 + p0) + O(eps^2); here p0 = 0
    assert np.max(np.abs(d - 1.0)) < 5.0 * eps**2
    off = G - np.diag(d)
    assert np.max(np.abs(off)) < 5.0 * eps**2


def test_gram_dilation_tracks_p0(profiles):
    eps, R0 = 0.1, 2.0
    p0 = 0.12
    iset = build_index_sets(eps, 0.1 * profiles.lam0**2, profiles.lam0,
                            R0=R0, p0=p0)
    p = np.zeros(iset.N1)
    p[0] = p0
    interface = build_interface(BaseCurve.circle(R0, 512), MeanderVector(p))
    basis = build_basis(iset, profiles, interface, eps, sigma=0.15,
                        ell=0.9, n=256)
    d = np.diag(basis.gram())
    assert np.max(np.abs(d - (1.0 + p0))) < 5.0 * eps**2


def test_correction_projection_identity(profiles):
    """<g*, psi> = (sigma S1 + eta_d lam0) delta_{k0} + S2_k Lam."""
    sigma, x = 0.15, 0.01
    for k in (0, 1):
        Lam = (profiles.lam0 if k == 0 else 0.0) + x
        _, _, proj = _correction_profiles(profiles, sigma, x, Lam, k)
        pred = profiles.S2(k, sigma) * Lam
        if k == 0:
            pred += sigma * profiles.S1 + profiles.eta_d * profiles.lam0
        assert proj == pytest.approx(pred, abs=1e-9)


def test_deflated_quartic_residual(profiles):
    g = profiles.grid
    L0 = profiles.L0
    rhs = np.exp(-0.5 * g.z**2)
    x, Lam = 0.02, 0.02
    k = L0.kernel_index()
    sol = _solve_deflated_quartic(L0, rhs, x, Lam, k)
    resid = (L0.apply(L0.apply(sol)) + 2.0 * x * L0.apply(sol)
             + (x**2 - Lam**2) * sol) - rhs
    # residual away from the deflated kernel direction
    vals, vecs = L0.eigendecomposition()
    r = resid[:-1] - (vecs[:, k] @ resid[:-1] * g.h_z) * vecs[:, k]
    assert g.norm(np.append(r, r[0])) < 1e-5 * g.norm(rhs)


def test_near_resonance_guard(profiles):
    g = profiles.grid
    rhs = np.exp(-0.5 * g.z**2)
    with pytest.raises(NearResonance):
        _solve_deflated_quartic(profiles.L0, rhs, 0.02, 0.02,
                                profiles.L0.kernel_index(), cond_limit=1.0)


def test_mode_matrix_symmetry_and_prediction(profiles, well, circle_setup,
                                             circle_basis):
    Phi = circle_setup["Phi"]
    M = assemble_Mstar(circle_basis, Phi, well, 1.0, 2.0)
    assert M.asymmetry() < 1e-8
    pred = mode_matrix_prediction(circle_basis.index_set, profiles,
                                  circle_setup["sigma"])
    d = np.diag(M.M)
    n0 = circle_basis.index_set.N0
    eps = circle_basis.eps
    # pearling diagonal is O(1): relative class-l2 error is O(eps)
    err0 = np.linalg.norm(d[:n0] - pred[:n0]) / np.linalg.norm(pred[:n0])
    assert err0 < 0.2
    # meander diagonal is itself O(eps^2): only the absolute error is
    # meaningful, and it carries the next-order O(eps^2) correction
    assert np.max(np.abs(d[n0:] - pred[n0:])) < 2.0 * eps**2


def test_pearling_coercivity_pass(profiles, well, circle_setup, circle_basis):
    Phi = circle_setup["Phi"]
    eps = circle_setup["eps"]
    M = assemble_Mstar(circle_basis, Phi, well, 1.0, 2.0)
    margin = profiles.pearling_margin(circle_setup["sigma"])
    rep = pearling_coercivity(M, eps, margin)
    assert rep["passed"]
    assert rep["min_eig"] >= rep["threshold"] > 0.0


def test_pearling_coercivity_fails_without_tilt_differential(well):
    """eta1 = eta2 removes the eta_d lam0 stabilization; at sigma where
    sigma S1 < 0 the pearling block loses its margin."""
    profiles = build_profiles(well, eta1=2.0, eta2=2.0)
    margin = profiles.pearling_margin(0.15)
    assert margin < 0.0
    eps, R0 = 0.1, 2.0
    iset = build_index_sets(eps, 0.1 * profiles.lam0**2, profiles.lam0,
                            R0=R0)
    p = MeanderVector(np.zeros(iset.N1))
    interface = build_interface(BaseCurve.circle(R0, 512), p)
    params = AnsatzParams(p, eps, sigma=0.15, ell=0.9, n=256,
                          resolution_factor=2.0)
    Phi, sigma, frame = assemble_Phi(params, profiles, interface)
    basis = build_basis(iset, profiles, interface, eps, sigma=sigma,
                        ell=0.9, n=256, frame=frame)
    M = assemble_Mstar(basis, Phi, profiles.well, 2.0, 2.0)
    rep = pearling_coercivity(M, eps, margin)
    assert not rep["passed"]
    assert rep["min_eig"] < 0.0


def test_fast_coercivity_probe(profiles, well, circle_setup, circle_basis):
    Phi = circle_setup["Phi"]
    rho = 0.1 * profiles.lam0**2
    rep = fast_coercivity_probe(Phi, circle_basis, well, 1.0, 2.0, rho,
                                trials=1, iters=30, seed=0)
    q = rep["min_quotient"]
    assert np.isfinite(q)
    # orthogonal complement of the slow basis carries no strongly
    # negative direction (tiny negatives are iteration noise)
    assert q > -1e-3
