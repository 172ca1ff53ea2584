import numpy as np
import pytest
from scipy.fft import fft2, ifft2

from fchkit.ansatz import pi0
from fchkit.errors import ContractionFailed, IllConditioned
from fchkit.geometry import BaseCurve, MeanderVector, lb_modes
from fchkit.modulation import ModulationContext, ModulationSeries, \
    T_prediction, build_T, curve_sensitivity, dPhi_dp, decompose, \
    nonlinear_scaling, nonlinear_term, parameter_scales, project, tube_check
from fchkit.slowspace import build_index_sets, h2in_norm

EPS = 0.1
R0 = 1.0
ELL = 0.45
DELTA = 0.5


@pytest.fixture(scope="module")
def ctx(profiles):
    base = BaseCurve.circle(R0, 512)
    iset = build_index_sets(EPS, 0.1 * profiles.lam0**2, profiles.lam0,
                            R0=R0)
    c = ModulationContext(profiles, base, iset, M0=0.0, eps=EPS, ell=ELL,
                          n=256, delta=DELTA, resolution_factor=2.0)
    # pick M0 so that the slaved bulk density at p = 0 is sigma = 0.15
    _, Phi, _, _ = c.assemble(c.zero_p(), sigma=0.15)
    c.M0 = Phi.integrate(Phi.values - profiles.well.b_minus) / EPS
    return c


@pytest.fixture(scope="module")
def target(ctx):
    """A nearby manifold point and its exact field."""
    p = np.zeros(ctx.N1)
    p[0] = 0.02
    p[5] = 0.01
    interface, Phi, sigma, frame = ctx.assemble(p)
    return {"p": p, "Phi": Phi, "sigma": sigma}


def test_curve_sensitivity_geometric_modes(ctx):
    base = ctx.base
    p = ctx.zero_p()
    h = base.s[1] - base.s[0]
    # dilation: constant normal velocity R0, curvature rate 1/R0
    V, kd = curve_sensitivity(base, p, 0)
    assert np.allclose(V, R0, atol=1e-6)
    assert np.allclose(kd, 1.0 / R0, atol=1e-4)
    # translation: cosine velocity, no curvature change
    V, kd = curve_sensitivity(base, p, 1)
    Th1, _ = lb_modes(R0, 1)
    assert h * np.sum(V * Th1(base.s)) == pytest.approx(1 / np.sqrt(2),
                                                        abs=1e-6)
    assert np.max(np.abs(kd)) < 1e-4
    # meander: unit tangential mode
    V, kd = curve_sensitivity(base, p, 5)
    Th5, _ = lb_modes(R0, 5)
    assert h * np.sum(V * Th5(base.s)) == pytest.approx(1.0, abs=1e-6)


def test_dPhi_dp_matches_fd(ctx):
    """Analytic tangent field against centered differencing of the full
    assembly at fixed sigma."""
    p0 = ctx.zero_p()
    interface, Phi, sigma, frame = ctx.assemble(p0, sigma=0.15)
    j, h = 4, 1e-5
    pp, pm = np.zeros(ctx.N1), np.zeros(ctx.N1)
    pp[j], pm[j] = h, -h
    _, Pp, _, _ = ctx.assemble(pp, sigma=0.15)
    _, Pm, _, _ = ctx.assemble(pm, sigma=0.15)
    fd = (Pp.values - Pm.values) / (2.0 * h)
    V, kd = curve_sensitivity(ctx.base, p0, j, h=ctx.fd_step,
                              delta=ctx.delta)
    ana = dPhi_dp(ctx.profiles, frame, ctx.eps, sigma, V, kd, ctx.base)
    err = np.max(np.abs(ana - fd)) / np.max(np.abs(fd))
    assert err < 1e-3


def test_T_structure(ctx, profiles):
    p = ctx.zero_p()
    interface, Phi, sigma, frame = ctx.assemble(p)
    basis = ctx.basis(interface, sigma, frame)
    T = build_T(ctx, p, sigma, frame, basis)
    d = np.diag(T)
    pred = T_prediction(profiles, ctx.eps, sigma) \
        * parameter_scales(R0, ctx.N1)
    assert np.max(np.abs(d / pred - 1.0)) < 0.1          # O(eps^2) at 0.1
    off = T - np.diag(d)
    assert np.max(np.abs(off)) < 0.1 * np.min(np.abs(d))
    # T^{-1} contracts like sqrt(eps)
    assert np.linalg.norm(np.linalg.inv(T), 2) < 3.0 * np.sqrt(ctx.eps)
    with pytest.raises(IllConditioned):
        build_T(ctx, p, sigma, frame, basis, cond_limit=1.0)


def test_project_fixed_point(ctx, target):
    res = project(target["Phi"], ctx)
    assert np.linalg.norm(res.p.p - target["p"]) < 1e-8
    assert res.sigma == pytest.approx(target["sigma"], abs=1e-8)
    assert res.sweeps < 50
    # residual meander projections vanish at the solution
    n0 = res.basis.index_set.N0
    v = (target["Phi"].values - res.Phi.values).ravel()
    r = res.basis.h**2 * (res.basis.Zstar[n0:].reshape(ctx.N1, -1) @ v)
    assert np.max(np.abs(r)) < 1e-8


def test_project_perturbed(ctx, target):
    """A mass-free perturbation orthogonal to the meander span leaves the
    recovered parameters unchanged."""
    Phi = target["Phi"]
    rng = np.random.default_rng(11)
    v = rng.standard_normal(Phi.values.shape)
    v = np.real(ifft2(fft2(v) * np.exp(-0.2 * Phi.k2_grid())))
    v = pi0(v)
    # orthogonalize against the meander fields at the target
    interface, _, sigma, frame = ctx.assemble(target["p"])
    basis = ctx.basis(interface, sigma, frame, p0=target["p"][0])
    n0 = basis.index_set.N0
    for Z in basis.Zstar[n0:]:
        v -= (basis.h**2 * np.sum(v * Z)) / \
            (basis.h**2 * np.sum(Z * Z)) * Z
    v = pi0(v)
    u = Phi.copy()
    amp = 0.5 * DELTA * ctx.eps / h2in_norm(Phi, v)
    u.values = Phi.values + amp * v
    res = project(u, ctx, p_init=target["p"])
    assert np.linalg.norm(res.p.p - target["p"]) < 1e-6


def test_project_contraction_failed(ctx, target):
    with pytest.raises(ContractionFailed):
        project(target["Phi"], ctx, max_sweeps=1)


def test_decompose_invariants(ctx, target):
    Phi = target["Phi"]
    rng = np.random.default_rng(12)
    v = rng.standard_normal(Phi.values.shape)
    v = pi0(np.real(ifft2(fft2(v) * np.exp(-0.2 * Phi.k2_grid()))))
    u = Phi.copy()
    u.values = Phi.values + 0.05 * ctx.eps * v / h2in_norm(Phi, v)
    res = project(u, ctx, p_init=target["p"])
    dec = decompose(u, res)
    # exact reconstruction
    assert dec.reconstruction_error(u) < 1e-10
    vperp = u.values - res.Phi.values
    vn = np.linalg.norm(vperp)
    n0 = res.basis.index_set.N0
    h2 = res.basis.h**2
    # the remainder has no meander component ...
    for Z in res.basis.Zstar[n0:]:
        assert abs(h2 * np.sum(vperp * Z)) < 1e-8 * vn
    # the coefficient leak is bounded by the Gram off-diagonals (O(eps^2))
    # times the pearling content, not by the projection tolerance
    assert dec.meander_leak < 10.0 * ctx.eps**2 * dec.q_norm + 1e-8 * vn
    # ... w is orthogonal to the whole slow span ...
    for Z in res.basis.Zstar:
        assert abs(h2 * np.sum(dec.w * Z)) < 1e-8 * np.linalg.norm(dec.w)
    # ... and the split is mass-free like u - Phi itself
    assert abs(h2 * np.sum(vperp)) < 1e-10
    assert dec.q_norm >= 0.0


def test_tube_check_thresholds(ctx, target):
    Phi = target["Phi"]
    p_in = MeanderVector(np.array(target["p"]))
    rep = tube_check(Phi, Phi, p_in, ctx.eps, delta=DELTA)
    assert rep["inside"] and rep["distance"] == 0.0
    # p0 = 1.2 delta: outside the delta-tube, inside the 2 delta one
    p_big = np.zeros(ctx.N1)
    p_big[0] = 1.2 * DELTA
    rep1 = tube_check(Phi, Phi, MeanderVector(p_big), ctx.eps, delta=DELTA)
    assert not rep1["v1_ok"] and not rep1["inside"]
    rep2 = tube_check(Phi, Phi, MeanderVector(p_big), ctx.eps, m=1.0,
                      delta=2.0 * DELTA)
    assert rep2["v1_ok"] and rep2["inside"]
    # distance condition
    far = Phi.copy()
    far.values = Phi.values + 2.0
    rep3 = tube_check(far, Phi, p_in, ctx.eps, R=1.0, delta=DELTA)
    assert not rep3["distance_ok"]


def test_nonlinear_term(ctx, target, well):
    Phi = target["Phi"]
    assert np.max(np.abs(nonlinear_term(np.zeros(Phi.values.shape), Phi,
                                        well, 1.0, 2.0))) == 0.0
    rng = np.random.default_rng(13)
    v = pi0(np.real(ifft2(fft2(rng.standard_normal(Phi.values.shape))
                          * np.exp(-0.3 * Phi.k2_grid()))))
    v *= 0.01 / np.max(np.abs(v))
    norms, slope, C = nonlinear_scaling(v, Phi, well, 1.0, 2.0)
    assert 1.8 <= slope <= 2.2
    assert np.isfinite(C) and C > 0.0


def test_modulation_series_csv(tmp_path):
    s = ModulationSeries()
    p = MeanderVector(np.array([0.1, 0.0, 0.0, 0.05]))
    s.append(0.0, p, 0.15, 1e-3, 2e-3, 5e-4)
    s.append(0.5, p, 0.14, 1e-3, 2e-3, 5e-4)
    path = str(tmp_path / "mod.csv")
    s.to_csv(path)
    lines = open(path).read().splitlines()
    assert lines[0] == ",".join(ModulationSeries.COLUMNS)
    assert len(lines) == 3
    row = dict(zip(ModulationSeries.COLUMNS,
                   map(float, lines[1].split(","))))
    assert row["p0"] == 0.1 and row["v2"] == pytest.approx(4 * 0.05)
