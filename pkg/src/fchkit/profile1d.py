"""One-dimensional pulse profile, its linearization, and correction profiles.

Builds, on a uniform z-grid:

* the homoclinic pulse phi0 solving phi0'' = W'(phi0), phi0 -> b_minus as
  |z| -> infinity, via first-integral quadrature (z as a function of u,
  inverted by monotone interpolation);
* the Sturm-Liouville operator L0 = -d^2/dz^2 + W''(phi0) with its spectrum
  (ground state psi0 with lam0 < 0, kernel psi1 = phi0'/m1) and deflated
  inverses;
* the correction profiles phi1(sigma) and the three curvature-coefficient
  profiles P0(sigma), P1, P2 of the second correction, together with every
  scalar constant used downstream (m0..m3, sigma1*, S1, S2_k, far-field
  values of the B_k).

The grid holds closed-interval samples z in [-ell_z, ell_z] with z = 0 a
node; since every profile tends to the same constant at both ends (error
~ e^{-nu ell_z}, below the grid tolerance), the two endpoints are identified
and all operator work happens on the n_z - 1 periodic nodes with spectral
(FFT) differentiation.  This keeps discrete identities like L0 phi0' = 0 at
the 1e-8 level, which a low-order stencil cannot reach at this resolution.
"""

import numpy as np
from scipy import integrate
from scipy.fft import fft, ifft
from scipy.interpolate import PchipInterpolator
from scipy.linalg import circulant, eigh

from .errors import NotInRange, SolvabilityViolation, SpectralGapViolation
from .potential import eval_well, validate_well


class ZGrid:
    """Uniform z-grid on [-ell_z, ell_z] with an odd node count.

    n_z odd keeps z = 0 a node; the last node is the periodic image of the
    first, so operators act on the n_z - 1 interior-periodic nodes.
    """

    def __init__(self, ell_z=20.0, n_z=2049):
        if n_z % 2 == 0:
            raise ValueError("n_z must be odd so z = 0 is a node")
        self.ell_z = float(ell_z)
        self.n_z = int(n_z)
        self.h_z = 2.0 * self.ell_z / (self.n_z - 1)
        self.z = np.linspace(-self.ell_z, self.ell_z, self.n_z)

    @property
    def m(self):
        # periodic node count (even)
        return self.n_z - 1

    def wavenumbers(self):
        return 2.0 * np.pi * np.fft.fftfreq(self.m, d=self.h_z)

    def integrate(self, f):
        # trapezoid == periodic Riemann sum once endpoints are identified
        return self.h_z * np.sum(np.asarray(f)[:-1])

    def norm(self, f):
        return np.sqrt(self.integrate(np.asarray(f) ** 2))

    def inner(self, f, g):
        return self.integrate(np.asarray(f) * np.asarray(g))

    def deriv(self, f, order=1):
        """Spectral derivative of a closed-grid sample."""
        k = self.wavenumbers()
        sym = (1j * k) ** order
        if order % 2 == 1:
            sym[self.m // 2] = 0.0  # drop the odd-derivative Nyquist mode
        out = np.real(ifft(sym * fft(np.asarray(f)[:-1])))
        return np.append(out, out[0])


def solve_phi0(well, grid):
    """Tabulate the homoclinic pulse phi0 and phi0' on the grid.

    Uses the first integral (phi0')^2 = 2 W(phi0):
        z(u) = int_u^{u_max} ds / sqrt(2 W(s)),
    with the turning-point singularity removed by u = u_max - t^2 and the
    tail computed in w = log(u - b_minus), where z(w) is asymptotically
    linear with slope -1/nu, nu = sqrt(W''(b_minus)).  The map w(z) is then
    inverted by monotone cubic (PCHIP) interpolation.
    """
    rep = validate_well(well)
    u_max = rep["u_max"]
    bm = well.b_minus
    nu = np.sqrt(rep["Wpp_b_minus"])
    if grid.ell_z < 20.0 / nu:
        raise ValueError("ell_z too small for the pulse decay rate")

    # crossover between the turning-point and tail parameterizations
    u_c = bm + 0.5 * (u_max - bm)

    gx, gw = np.polynomial.legendre.leggauss(12)

    def cumulative_gauss(fun, nodes):
        # cumulative integral of fun along `nodes` (12-pt Gauss per segment)
        a, b = nodes[:-1], nodes[1:]
        mid, rad = 0.5 * (a + b), 0.5 * (b - a)
        pts = mid[:, None] + rad[:, None] * gx[None, :]
        seg = rad * (fun(pts.ravel()).reshape(pts.shape) @ gw)
        return np.concatenate([[0.0], np.cumsum(seg)])

    # region A: u = u_max - t^2, z(t) = int_0^t 2 tau / sqrt(2W(u_max-tau^2));
    # the integrand is smooth through t = 0 (sqrt(2W) ~ t there)
    t_c = np.sqrt(u_max - u_c)
    t_nodes = np.linspace(0.0, t_c, 401)
    z_a = cumulative_gauss(
        lambda t: 2.0 * t / np.sqrt(2.0 * eval_well(well, u_max - t * t)),
        t_nodes)
    w_a = np.log(u_max - bm - t_nodes**2)

    # region B: w = log(u - b_minus), dz/dw = -e^w / sqrt(2W(b_-+e^w)),
    # stopped where polynomial cancellation would corrupt W(b_-+e^w)
    w_c = np.log(u_c - bm)
    w_stop = np.log(1e-5)
    w_nodes = np.linspace(w_c, w_stop, 1201)
    # integrate in x = -w (increasing) so the cumulative helper applies
    z_b = z_a[-1] + cumulative_gauss(
        lambda x: np.exp(-x) / np.sqrt(2.0 * eval_well(well, bm + np.exp(-x))),
        -w_nodes)

    z_all = np.concatenate([z_a, z_b[1:]])
    w_all = np.concatenate([w_a, w_nodes[1:]])
    interp = PchipInterpolator(z_all, w_all)

    # analytic tail below u - b_minus = 1e-5:
    #   1/sqrt(2W(b_-+d)) = (1/(nu d)) (1 + c1 d + O(d^2))
    c1 = -eval_well(well, bm, 3) / (6.0 * rep["Wpp_b_minus"])
    z_stop, ew_stop = z_all[-1], np.exp(w_stop)

    def tail_w(zv):
        w = w_stop - nu * (zv - z_stop)
        for _ in range(3):
            w = w_stop - nu * (zv - z_stop) + c1 * (ew_stop - np.exp(w))
        return w

    zz = np.abs(grid.z)
    w_of_z = np.where(zz <= z_stop, interp(np.minimum(zz, z_stop)),
                      tail_w(np.maximum(zz, z_stop)))
    phi0 = bm + np.exp(w_of_z)

    # Newton polish on the discrete (spectral) pulse equation D2 phi = W'(phi)
    # so that downstream operator identities hold to near round-off; the
    # quadrature result above is accurate to ~1e-8, one or two steps suffice.
    k = grid.wavenumbers()
    d2 = -circulant(np.real(ifft(-k**2)))  # this is -D2; reuse sign below
    p = phi0[:-1].copy()
    m = grid.m
    for _ in range(4):
        res = -(d2 @ p) - eval_well(well, p, 1)
        if np.max(np.abs(res)) < 1e-12:
            break
        jac = -d2 - np.diag(eval_well(well, p, 2))
        p += np.linalg.solve(jac, -res)
        # the Jacobian is near-singular on the (odd) translation mode;
        # evenness of the pulse removes it
        p = 0.5 * (p + np.roll(p[::-1], 1))
    phi0 = np.append(p, p[0])

    # spectral derivative of the polished pulse: odd, satisfies the discrete
    # first integral (phi0')^2 = 2W(phi0) to ~1e-11 and L0 phi0' = 0 to ~1e-9
    # (the naive -sign(z)sqrt(2W) form has a sign seam at the periodic wrap
    # that the spectral operator would amplify)
    dphi0 = grid.deriv(phi0)
    return phi0, dphi0


class L0Operator:
    """Dense spectral representation of L0 = -d^2/dz^2 + W''(phi0).

    Periodic-spectral second derivative on the n_z - 1 identified nodes;
    exactly symmetric by construction.  The full eigendecomposition is
    computed once and reused for every (deflated) inverse.
    """

    def __init__(self, well, phi0, grid):
        self.grid = grid
        self.well = well
        k = grid.wavenumbers()
        d2_col = np.real(ifft(-k**2))
        mat = -circulant(d2_col)
        mat += np.diag(eval_well(well, phi0[:-1], 2))
        self.matrix = 0.5 * (mat + mat.T)
        self._evals = None
        self._evecs = None

    def _closed(self, f_p):
        return np.append(f_p, f_p[0])

    def apply(self, f):
        return self._closed(self.matrix @ np.asarray(f)[:-1])

    def eigendecomposition(self):
        if self._evals is None:
            vals, vecs = eigh(self.matrix)
            # L2-normalize on the grid measure
            vecs /= np.sqrt(self.grid.h_z)
            self._evals = vals
            self._evecs = vecs
        return self._evals, self._evecs

    # -- kernel bookkeeping ---------------------------------------------------

    def kernel_index(self):
        vals, _ = self.eigendecomposition()
        return int(np.argmin(np.abs(vals)))

    def solve(self, rhs, check_kernel=True, shift=0.0, tol=1e-8):
        """(L0 + shift)^{-1} rhs with the kernel mode deflated.

        Raises NotInRange when check_kernel is set and rhs has a kernel
        component above `tol` relative to ||rhs||.
        """
        vals, vecs = self.eigendecomposition()
        ki = self.kernel_index()
        r = np.asarray(rhs)[:-1]
        coef = (vecs.T @ r) * self.grid.h_z
        rnorm = np.sqrt(np.sum(r * r) * self.grid.h_z)
        if check_kernel and rnorm > 0 and abs(coef[ki]) > tol * rnorm:
            raise NotInRange(
                "rhs has kernel component %g (relative %g)"
                % (coef[ki], abs(coef[ki]) / rnorm))
        coef[ki] = 0.0
        denom = vals + shift
        denom_safe = np.where(np.arange(vals.size) == ki, 1.0, denom)
        sol = vecs @ (coef / denom_safe)
        return self._closed(sol)

    def solve2(self, rhs, **kw):
        return self.solve(self.solve(rhs, **kw), **kw)


def build_L0(well, phi0, grid):
    return L0Operator(well, phi0, grid)


def eigs_L0(L0):
    """Lowest eigenpairs of L0.

    Returns (lam0, psi0, lam1, psi1, lam2) with psi0 positive and even,
    psi1 the (numerically zero) kernel mode.  Raises SpectralGapViolation
    if the third eigenvalue is not separated from the kernel.
    """
    vals, vecs = L0.eigendecomposition()
    order = np.argsort(vals)
    i0, i1, i2 = order[0], order[1], order[2]
    lam0, lam1, lam2 = vals[i0], vals[i1], vals[i2]
    if lam2 < 10.0 * abs(lam1):
        raise SpectralGapViolation(
            "third eigenvalue %g not separated from kernel %g" % (lam2, lam1))
    psi0 = vecs[:, i0].copy()
    if psi0[psi0.size // 2] < 0:
        psi0 = -psi0
    psi1 = vecs[:, i1].copy()
    # orient psi1 like phi0' (negative for z slightly > 0)
    mid = psi1.size // 2
    if psi1[mid + mid // 8] > 0:
        psi1 = -psi1
    closed = L0._closed
    return lam0, closed(psi0), lam1, closed(psi1), lam2


def solve_L0_inverse(L0, rhs, check_kernel=True):
    """Deflated L0^{-1}; parity-preserving, solution orthogonal to psi1."""
    return L0.solve(rhs, check_kernel=check_kernel)


class Profile1D:
    """Container for the tabulated profiles and scalar constants."""

    def __init__(self, **kw):
        self.__dict__.update(kw)

    # phi1 and the sigma-dependent profiles are cheap closed forms in sigma

    def phi1(self, sigma):
        return sigma * self.B2 + 0.5 * self.eta_d * self.phi1_base

    def dphi1(self, sigma):
        return sigma * self.dB2 + 0.5 * self.eta_d * self.dphi1_base

    def P0(self, sigma):
        return self.P0_0 + sigma * self.P0_1 + sigma**2 * self.P0_2

    def phi2(self, sigma, kappa):
        """Second correction at curvature kappa (kappa may be an array)."""
        kap = np.asarray(kappa)
        if kap.ndim == 0:
            return self.P0(sigma) + kap * self.P1 + kap**2 * self.P2
        return (self.P0(sigma)[None, :] + kap[:, None] * self.P1[None, :]
                + (kap**2)[:, None] * self.P2[None, :])

    def S2(self, k, sigma):
        """Shape parameter S_{2,k}(sigma) = 2 int W''' phi1 psi_k^2 - eta1."""
        return (2.0 * (sigma * self._s2_B2[k]
                       + 0.5 * self.eta_d * self._s2_base[k]) - self.eta1)

    def far_field_values(self, sigma):
        """(phi1_inf, phi2_inf): far-field constants of the corrections."""
        phi1_inf = sigma * self.B2_infty
        phi2_inf = (self.P0_0[0] + sigma * self.P0_1[0]
                    + sigma**2 * self.P0_2[0])
        return phi1_inf, phi2_inf

    def pearling_margin(self, sigma):
        return pearling_condition(sigma, self.S1, self.eta_d, self.lam0)


def build_correction_profiles(well, phi0, dphi0, L0, eta1, eta2, sigma=0.0,
                              grid=None):
    """Assemble phi1, the curvature coefficients of phi2, and all constants.

    The second correction is used in the decomposed form
        phi2(z; sigma, kappa) = P0(z; sigma) + kappa P1(z) + kappa^2 P2(z),
    collecting powers of the (whisker-frozen) curvature.  The kappa-linear
    block P1 is frozen at sigma = sigma1*, where its odd right-hand side is
    orthogonal to phi0' (the solvability cancellation); the cancellation is
    verified and SolvabilityViolation raised if it fails numerically.
    """
    grid = grid or L0.grid
    z = grid.z
    eta_d = eta1 - eta2
    rep = validate_well(well)
    nu2 = rep["Wpp_b_minus"]

    lam0, psi0, lam1, psi1, lam2 = eigs_L0(L0)

    Wpp = eval_well(well, phi0, 2)
    Wppp = eval_well(well, phi0, 3)

    one = np.ones_like(z)
    B1 = L0.solve(one)
    B2 = L0.solve(B1)
    zdphi0 = z * dphi0
    phi1_base = L0.solve(zdphi0)

    # moments and critical bulk value
    m0 = grid.integrate(phi0 - well.b_minus)
    m1 = grid.norm(dphi0)
    m2 = 0.5 * grid.integrate(phi1_base)
    m3 = 0.5 * grid.norm(zdphi0)
    sigma1_star = -(eta1 + eta2) * m1**2 / (2.0 * m0)

    # shape parameters: S1 and the sigma-affine pieces of S2_k
    S1 = grid.integrate(Wppp * B1 * psi0**2)
    s2_B2 = (grid.integrate(Wppp * B2 * psi0**2),
             grid.integrate(Wppp * B2 * psi1**2))
    s2_base = (grid.integrate(Wppp * phi1_base * psi0**2),
               grid.integrate(Wppp * phi1_base * psi1**2))

    # ---- curvature-quadratic block -----------------------------------------
    # P2 = -L0^{-1}(z phi0') - L0^{-2}(phi0'')
    ddphi0 = eval_well(well, phi0, 1)  # phi0'' = W'(phi0) exactly
    P2 = -phi1_base - L0.solve2(ddphi0)

    # ---- curvature-linear block, frozen at sigma1* --------------------------
    phi1_star = sigma1_star * B2 + 0.5 * eta_d * phi1_base
    dphi1_star = grid.deriv(phi1_star)
    # L0 phi1' with phi1 = sigma B2 + (eta_d/2) L0^{-1}(z phi0'):
    # L0 phi1 = sigma B1 + (eta_d/2) z phi0' exactly, so take d/dz after
    # applying L0 via the commutator-free route: apply L0 to the derivative.
    L0_dphi1_star = L0.apply(dphi1_star)
    g1 = 2.0 * L0_dphi1_star + (-eta1 + 2.0 * Wppp * phi1_star) * dphi0
    proj = grid.inner(g1, dphi0)
    # reference magnitude: same projection with sigma = 0 profiles
    phi1_zero = 0.5 * eta_d * phi1_base
    g1_zero = (2.0 * L0.apply(grid.deriv(phi1_zero))
               + (-eta1 + 2.0 * Wppp * phi1_zero) * dphi0)
    proj_zero = grid.inner(g1_zero, dphi0)
    ref = max(abs(proj_zero), 1e-12)
    if abs(proj) > 1e-6 * ref:
        raise SolvabilityViolation(
            "kappa-linear solvability projection %g (reference %g)"
            % (proj, proj_zero))
    g1 = g1 - (proj / m1**2) * dphi0  # remove the numerical kernel residue
    P1 = -L0.solve2(g1)

    # ---- curvature-free block: quadratic polynomial in sigma ---------------
    c = 0.5 * eta_d
    # L0 phi1(sigma) = sigma B1 + c z phi0' exactly
    P0_2 = -L0.solve(0.5 * Wppp * B2**2) - L0.solve2(Wppp * B2 * B1)
    P0_1 = (-L0.solve(Wppp * c * B2 * phi1_base)
            - L0.solve2(-eta1 * B1 + c * Wppp * (B2 * zdphi0
                                                 + phi1_base * B1)
                        + eta_d * Wpp * B2))
    P0_0 = (-L0.solve(0.5 * Wppp * c**2 * phi1_base**2)
            - L0.solve2(-eta1 * c * zdphi0 + c**2 * Wppp * phi1_base * zdphi0
                        + eta_d * c * Wpp * phi1_base))

    prof = Profile1D(
        well=well, grid=grid, L0=L0, z=z,
        phi0=phi0, dphi0=dphi0, psi0=psi0, psi1=psi1,
        lam0=lam0, lam1=lam1, lam2=lam2,
        B1=B1, B2=B2, dB2=grid.deriv(B2),
        phi1_base=phi1_base, dphi1_base=grid.deriv(phi1_base),
        P0_0=P0_0, P0_1=P0_1, P0_2=P0_2, P1=P1, P2=P2,
        dP1=grid.deriv(P1), dP2=grid.deriv(P2),
        m0=m0, m1=m1, m2=m2, m3=m3,
        sigma1_star=sigma1_star, S1=S1,
        _s2_B2=s2_B2, _s2_base=s2_base,
        B1_infty=1.0 / nu2, B2_infty=1.0 / nu2**2,
        eta1=eta1, eta2=eta2, eta_d=eta_d,
        sigma=sigma, u_max=rep["u_max"], nu=np.sqrt(nu2),
        solvability_projection=proj,
    )
    return prof


def pearling_condition(sigma, S1, eta_d, lam0):
    """Signed pearling-stability margin sigma*S1 + eta_d*lam0 (> 0: stable)."""
    return sigma * S1 + eta_d * lam0


def build_profiles(well, grid=None, eta1=1.0, eta2=2.0, sigma=0.0):
    """Convenience: run the whole 1D pipeline with default settings."""
    grid = grid or ZGrid()
    phi0, dphi0 = solve_phi0(well, grid)
    L0 = build_L0(well, phi0, grid)
    return build_correction_profiles(well, phi0, dphi0, L0, eta1, eta2,
                                     sigma=sigma, grid=grid)
