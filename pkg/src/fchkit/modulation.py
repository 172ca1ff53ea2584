"""Projection onto the bilayer manifold: T-matrix, quasi-Newton, splitting.

A field u near the manifold {Phi_p} is decomposed as

    u = Phi_p + Q + w,

with p fixed by orthogonality of u - Phi_p to the modified meander fields
Z*_{1k}, Q the pearling component of the remainder, and w the fast part.
The meander orthogonality is enforced by a quasi-Newton iteration on

    G_k(p) = <u - Phi_p, Z*_{1k}> = 0,

whose Jacobian is (minus) the transfer matrix T_{kj} = int dPhi/dp_j Z*_{1k}.
T is nearly diagonal: at p = 0 it equals

    -(m1^2 + eps (sigma m2 + eta_d m3^2)) eps^{-1/2} I

to leading order, so T^{-1} contracts like eps^{1/2} and a handful of
sweeps suffice inside the tube.

dPhi/dp_j is assembled analytically through the whisker chain rule: moving
p_j shifts each whisker foot by the normal velocity V_j(s) and perturbs the
local curvature by kappa_dot_j(s), both measured by centered differencing
of the curve construction; the field derivative is then the dressed
z-derivative profile weighted by -V_j/eps plus the dressed curvature
sensitivity eps^2 (P1 + 2 kappa P2) weighted by kappa_dot_j.  Cutoff-tail
terms (chi' x profile) are below 1e-5 of the leading entries and dropped.
"""

import numpy as np
from scipy.interpolate import CubicSpline

from .ansatz import AnsatzParams, assemble_Phi, cutoff_chi_prime, eval_F
from .errors import ContractionFailed, IllConditioned
from .geometry import MeanderVector, build_interface
from .slowspace import SlowIndexSet, apply_linearization, build_basis, \
    h2in_norm


# --- curve sensitivities -------------------------------------------------------

def curve_sensitivity(base, p, j, h=1e-6, delta=0.5):
    """(V_j, kappa_dot_j) sampled on the base parameter grid.

    Centered difference of the curve construction at p +/- h e_j: normal
    displacement rate and curvature rate at matched base parameter.
    """
    if not isinstance(p, MeanderVector):
        p = MeanderVector(p)
    pp = MeanderVector(p.p.copy())
    pm = MeanderVector(p.p.copy())
    pp.p[j] += h
    pm.p[j] -= h
    sp = build_interface(base, pp, delta=delta)
    sm = build_interface(base, pm, delta=delta)
    sc = build_interface(base, p, delta=delta)
    nrm = sc.normal_at(base.s)
    disp = (sp.gamma_p - sm.gamma_p) / (2.0 * h)
    V = disp[:, 0] * nrm[:, 0] + disp[:, 1] * nrm[:, 1]
    kd = (sp.kappa_at(base.s) - sm.kappa_at(base.s)) / (2.0 * h)
    return V, kd


def _periodic_eval(s_nodes, vals, period, s_query):
    s_ext = np.append(s_nodes, s_nodes[0] + period)
    v_ext = np.append(vals, vals[0])
    sp = CubicSpline(s_ext, v_ext, bc_type="periodic")
    return sp(np.mod(s_query, period))


def dPhi_dp(profiles, frame, eps, sigma, V, kd, base):
    """Analytic manifold tangent field for one parameter direction.

    V, kd: normal velocity and curvature rate on the base grid (from
    curve_sensitivity).  Returns the 2D field dPhi/dp_j.
    """
    g = profiles.grid
    kap = frame.kappa
    L0 = base.length
    zdot = -_periodic_eval(base.s, V, L0, frame.s_foot) / eps
    kapdot = _periodic_eval(base.s, kd, L0, frame.s_foot)

    Dfree = (profiles.dphi0 + eps * profiles.dphi1(sigma)
             + eps**2 * g.deriv(profiles.P0(sigma)))
    D1 = eps**2 * g.deriv(profiles.P1)
    D2 = eps**2 * g.deriv(profiles.P2)

    field = frame.dress(Dfree, g, f_inf=0.0, weight=zdot)
    field += frame.dress(D1, g, f_inf=0.0, weight=kap * zdot)
    field += frame.dress(D2, g, f_inf=0.0, weight=kap**2 * zdot)
    field += frame.dress(eps**2 * profiles.P1, g, f_inf=0.0, weight=kapdot)
    field += frame.dress(2.0 * eps**2 * profiles.P2, g, f_inf=0.0,
                         weight=kap * kapdot)

    # cutoff motion: moving p shifts |z_p| through chi(eps|z|/ell), adding
    # chi'(a) (eps/ell) sign(z) zdot times the far-field-free profile tail
    phi1_inf, phi2_inf = profiles.far_field_values(sigma)
    Ufree = ((profiles.phi0 - profiles.well.b_minus)
             + eps * (profiles.phi1(sigma) - phi1_inf)
             + eps**2 * (profiles.P0(sigma) - phi2_inf))
    a = frame.eps * np.abs(frame.z) / frame.ell
    dchi = (cutoff_chi_prime(a) * (frame.eps / frame.ell)
            * np.sign(frame.z) * zdot)
    tail = CubicSpline(g.z, Ufree)(frame.z)
    tail += kap * CubicSpline(g.z, eps**2 * profiles.P1)(frame.z)
    tail += kap**2 * CubicSpline(g.z, eps**2 * profiles.P2)(frame.z)
    field[frame.mask] += tail * dchi
    return field


# --- context -------------------------------------------------------------------

class ModulationContext:
    """Fixed data of a projection problem: profiles, base curve, grids.

    index_set is a template; its p0 is refreshed to the current parameter
    value whenever the basis is rebuilt (the retained mode lists are kept).
    """

    def __init__(self, profiles, base, index_set, M0, eps, ell=0.45,
                 L=2.0 * np.pi, n=256, delta=0.5, resolution_factor=4.0,
                 fd_step=1e-6):
        self.profiles = profiles
        self.base = base
        self.index_set = index_set
        self.M0 = M0
        self.eps = float(eps)
        self.ell = float(ell)
        self.L = float(L)
        self.n = int(n)
        self.delta = float(delta)
        self.resolution_factor = float(resolution_factor)
        self.fd_step = float(fd_step)

    @property
    def N1(self):
        return self.index_set.N1

    def index_set_at(self, p0):
        t = self.index_set
        return SlowIndexSet(t.eps, t.rho, t.lam0, t.lam1, p0, t.R0,
                            t.Sigma0, t.Sigma1)

    def zero_p(self):
        return MeanderVector(np.zeros(self.N1))

    def assemble(self, p, sigma=None):
        """(interface, Phi, sigma, frame) at parameter p."""
        if not isinstance(p, MeanderVector):
            p = MeanderVector(p)
        interface = build_interface(self.base, p, delta=self.delta)
        params = AnsatzParams(p, self.eps,
                              M0=None if sigma is not None else self.M0,
                              sigma=sigma, ell=self.ell, L=self.L, n=self.n,
                              resolution_factor=self.resolution_factor)
        Phi, sig, frame = assemble_Phi(params, self.profiles, interface)
        return interface, Phi, sig, frame

    def basis(self, interface, sigma, frame, p0=0.0):
        return build_basis(self.index_set_at(p0), self.profiles, interface,
                           self.eps, sigma=sigma, ell=self.ell, L=self.L,
                           n=self.n, frame=frame)


# --- transfer matrix -----------------------------------------------------------

def build_T(ctx, p, sigma, frame, basis, cond_limit=1e8):
    """T_{kj} = int dPhi/dp_j Z*_{1k} dx, N1 x N1.

    Rows: meander basis fields; columns: parameter directions.  Raises
    IllConditioned when cond(T) exceeds cond_limit.
    """
    if not isinstance(p, MeanderVector):
        p = MeanderVector(p)
    N1 = p.N1
    n0 = basis.index_set.N0
    Zm = basis.Zstar[n0:].reshape(N1, -1)
    h2 = basis.h**2
    T = np.empty((N1, N1))
    for j in range(N1):
        V, kd = curve_sensitivity(ctx.base, p, j, h=ctx.fd_step,
                                  delta=ctx.delta)
        dphi = dPhi_dp(ctx.profiles, frame, ctx.eps, sigma, V, kd, ctx.base)
        T[:, j] = h2 * (Zm @ dphi.ravel())
    c = np.linalg.cond(T)
    if c > cond_limit:
        raise IllConditioned(
            "transfer matrix condition %g exceeds %g" % (c, cond_limit))
    return T


def T_prediction(profiles, eps, sigma):
    """Leading-order diagonal value of T at p = 0 (meander columns).

    The meander fields carry the L2-normalized kernel mode phi0'/m1, so
    the classical -(m1^2 + eps (sigma m2 + eta_d m3^2)) eps^{-1/2} picks up
    a 1/m1; dilation and translation columns are further scaled by the
    factors of parameter_scales (their normal velocities are not unit
    tangential modes).
    """
    return -(profiles.m1**2
             + eps * (sigma * profiles.m2
                      + profiles.eta_d * profiles.m3**2)) \
        / (profiles.m1 * np.sqrt(eps))


def parameter_scales(R0, N1):
    """Per-column normalization of T's diagonal relative to T_prediction.

    <V_j, Theta_j>_{L2(Gamma)}: the dilation velocity is the constant R0
    (projection R0 sqrt(2 pi R0) on Theta_0) and each translation velocity
    is Theta_0 E_i . n (projection 1/sqrt(2)); meander modes are unit.
    """
    fac = np.ones(N1)
    fac[0] = R0 * np.sqrt(2.0 * np.pi * R0)
    fac[1] = fac[2] = 1.0 / np.sqrt(2.0)
    return fac


# --- projection ----------------------------------------------------------------

class ProjectResult:
    def __init__(self, p, sigma, Phi, interface, frame, basis, T,
                 sweeps, resid):
        self.p = p
        self.sigma = sigma
        self.Phi = Phi
        self.interface = interface
        self.frame = frame
        self.basis = basis
        self.T = T
        self.sweeps = sweeps
        self.resid = resid


def project(u, ctx, p_init=None, max_sweeps=50, tol=1e-10, refresh=5):
    """Meander parameters of u by quasi-Newton on the orthogonality system.

    Each sweep rebuilds Phi_p (with sigma re-slaved to the mass of u) and
    the meander fields at the current p; the transfer matrix is refreshed
    every `refresh` sweeps.  Converges when ||dp|| < tol; raises
    ContractionFailed after max_sweeps.
    """
    p = np.zeros(ctx.N1) if p_init is None else \
        np.array(p_init.p if isinstance(p_init, MeanderVector) else p_init,
                 dtype=float)
    T = None
    for sweep in range(max_sweeps):
        pv = MeanderVector(p.copy())
        interface, Phi, sigma, frame = ctx.assemble(pv)
        basis = ctx.basis(interface, sigma, frame, p0=pv.p0)
        if T is None or sweep % refresh == 0:
            T = build_T(ctx, pv, sigma, frame, basis)
        n0 = basis.index_set.N0
        v = (u.values - Phi.values).ravel()
        r = basis.h**2 * (basis.Zstar[n0:].reshape(ctx.N1, -1) @ v)
        dp = np.linalg.solve(T, r)
        p += dp
        if np.linalg.norm(dp) < tol:
            return ProjectResult(MeanderVector(p), sigma, Phi, interface,
                                 frame, basis, T, sweep + 1,
                                 float(np.linalg.norm(r)))
    raise ContractionFailed(
        "projection stalled after %d sweeps (last ||dp|| = %g)"
        % (max_sweeps, np.linalg.norm(dp)))


# --- splitting -----------------------------------------------------------------

class Decomposition:
    """u = Phi_p + Q + meander + w.

    Q: pearling component of the remainder (span of Z*_{0j}); meander: the
    residual meander component (vanishing at a converged projection); w:
    orthogonal to the whole slow span.  Reconstruction is exact by
    construction; reconstruction_error reports the round-off level.
    """

    def __init__(self, p, sigma, Phi, q, Q, c_meander, meander, w):
        self.p = p
        self.sigma = sigma
        self.Phi = Phi
        self.q = q
        self.Q = Q
        self.c_meander = c_meander
        self.meander = meander
        self.w = w

    def reconstruct(self):
        return self.Phi.values + self.Q + self.meander + self.w

    def reconstruction_error(self, u):
        return float(np.max(np.abs(u.values - self.reconstruct())))

    @property
    def q_norm(self):
        return float(np.linalg.norm(self.q))

    @property
    def meander_leak(self):
        return float(np.linalg.norm(self.c_meander))


def decompose(u, result):
    """Split u - Phi_p over the slow span by a full Gram projection.

    result: a ProjectResult (or anything with .p/.sigma/.Phi/.basis).
    """
    basis = result.basis
    Phi = result.Phi
    n0 = basis.index_set.N0
    N = basis.N
    v = u.values - Phi.values
    flat = basis.Zstar.reshape(N, -1)
    G = basis.gram()
    b = basis.h**2 * (flat @ v.ravel())
    c = np.linalg.solve(G, b)
    Q = np.tensordot(c[:n0], basis.Zstar[:n0], axes=(0, 0))
    mean = np.tensordot(c[n0:], basis.Zstar[n0:], axes=(0, 0))
    w = v - Q - mean
    return Decomposition(result.p, result.sigma, Phi, c[:n0], Q,
                         c[n0:], mean, w)


# --- tube membership -----------------------------------------------------------

def tube_check(u, Phi, p, eps, R=1.0, m=1.0, delta=0.5):
    """Membership in the tube around the manifold: distance and parameter
    smallness.  Returns the three conditions and their measured values."""
    diff = u.copy()
    dist = h2in_norm(diff, u.values - Phi.values)
    v1 = abs(p.p0) + p.vnorm(1)
    v2 = p.vnorm(2) + eps * p.vnorm(4, r=2)
    out = {
        "distance": dist, "distance_ok": bool(dist < R),
        "v1": v1, "v1_ok": bool(v1 < m * delta),
        "v2": v2, "v2_ok": bool(v2 < m),
    }
    out["inside"] = out["distance_ok"] and out["v1_ok"] and out["v2_ok"]
    return out


# --- nonlinearity --------------------------------------------------------------

def nonlinear_term(v, Phi, well, eta1, eta2):
    """N(v) = F(Phi + v) - F(Phi) - L v on the grid of Phi."""
    v = np.asarray(v, dtype=float)
    pert = Phi.copy()
    pert.values = Phi.values + v
    Fp = eval_F(pert, well, eta1, eta2)
    F0 = eval_F(Phi, well, eta1, eta2)
    Lv, _ = apply_linearization(v, Phi, well, eta1, eta2)
    return Fp - F0 - Lv


def nonlinear_scaling(v, Phi, well, eta1, eta2,
                      scales=(1.0, 0.5, 0.25, 0.125)):
    """||N(eta v)|| over amplitude scalings; quadratic slope fit and the
    constant C in ||N|| <= C eps^{-1} (||v|| + eps^2 ||Lap v||)^2."""
    eps = Phi.eps
    scales = np.asarray(scales, dtype=float)
    norms = np.array([Phi.norm_L2(nonlinear_term(s * v, Phi, well,
                                                 eta1, eta2))
                      for s in scales])
    slope = float(np.polyfit(np.log(scales), np.log(norms), 1)[0])
    gauge = Phi.norm_L2(v) + eps**2 * Phi.norm_L2(Phi.laplacian(v))
    C = float(norms[0] * eps / gauge**2)
    return norms, slope, C


# --- diagnostics time series ---------------------------------------------------

class ModulationSeries:
    """Per-sample projected-trajectory diagnostics, CSV-serializable."""

    COLUMNS = ("t", "p0", "v1", "v2", "sigma", "q_norm", "w_h2in",
               "lw_quad")

    def __init__(self):
        self.rows = []

    def append(self, t, p, sigma, q_norm, w_h2in, lw_quad):
        self.rows.append((t, p.p0, p.vnorm(1), p.vnorm(2), sigma,
                          q_norm, w_h2in, lw_quad))

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(",".join(self.COLUMNS) + "\n")
            for r in self.rows:
                fh.write(",".join("%.17g" % v for v in r) + "\n")
