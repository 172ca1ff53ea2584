"""Slow subspace of the linearized flow: pearling/meander modes and M*.

The linearization about the bilayer field has a cluster of small eigenvalues
whose eigenspaces are, to leading order, tensor products psi_k(z_p) *
Theta_j(s_p) of the 1D ground state / kernel mode with Laplace-Beltrami
modes of the interface.  This module builds

* the index sets Sigma_0 (pearling, k = 0) and Sigma_1 (meander, k = 1)
  selected by the spectral cutoff rho: j is kept when
  (lam_k + eps^2 beta_{p,j}^2)^2 <= rho;
* the basis fields Z_j = eps^{-1/2} psi_k(z_p) Theta_j(s_p) and their
  modified versions Z*_j carrying first-order 1D corrections that cancel
  the O(eps) off-diagonal action of the operator;
* the mode matrix M*_{ij} = <Pi0 L Z*_i, Z*_j> by full 2D pseudo-spectral
  application of the linearized operator (so the asymptotic diagonal
  formulas remain a genuine cross-check);
* coercivity diagnostics: the minimum eigenvalue of the pearling block
  against the (eps/4)(sigma S1 + eta_d lam0) margin, and a projected
  Rayleigh-quotient probe on the orthogonal complement of the basis.

The modified corrections are computed with the curvature frozen along each
whisker (exact for circles, first order in general); the tangential-
derivative block of the first-order operator then vanishes, so the
Theta'-correction profile is identically zero and only the Theta-aligned
correction phi_{1,j} is solved for.  That solve is a deflated fourth-order
problem in the 1D eigenbasis, linear in the frozen curvature, so it splits
into a curvature-unit part and a curvature-free part.
"""

import warnings

import numpy as np
from scipy.fft import fft2, ifft2
from scipy.sparse.linalg import LinearOperator, lobpcg

from .ansatz import DressingFrame, pi0
from .errors import NearResonance, SetsOverlap
from .geometry import beta_j, lb_modes
from .potential import eval_well


# --- norms ---------------------------------------------------------------------

def h2in_norm(field, f=None):
    """Interface-scaled H2 norm ||u||_{L2} + eps^2 ||u||_{H2}."""
    f = field.values if f is None else np.asarray(f)
    k2 = field.k2_grid()
    c = fft2(f)
    l2 = np.sqrt(field.h**2 * np.sum(f * f))
    h2 = np.sqrt(field.h**2 * np.sum((1.0 + k2 + k2**2) * np.abs(c) ** 2)
                 / f.size)
    return float(l2 + field.eps**2 * h2)


# --- index sets ----------------------------------------------------------------

class SlowIndexSet:
    """Pearling/meander mode indices selected by the spectral cutoff rho."""

    def __init__(self, eps, rho, lam0, lam1, p0, R0, Sigma0, Sigma1):
        self.eps = float(eps)
        self.rho = float(rho)
        self.lam0 = float(lam0)
        self.lam1 = float(lam1)
        self.p0 = float(p0)
        self.R0 = float(R0)
        self.Sigma0 = list(Sigma0)
        self.Sigma1 = list(Sigma1)

    @property
    def N0(self):
        return len(self.Sigma0)

    @property
    def N1(self):
        return len(self.Sigma1)

    @property
    def indices(self):
        """All retained j, pearling class first."""
        return self.Sigma0 + self.Sigma1

    def I(self, j):
        if j in self.Sigma0:
            return 0
        if j in self.Sigma1:
            return 1
        raise KeyError("mode %d not in either index set" % j)

    def beta_p(self, j):
        return beta_j(j) / ((1.0 + self.p0) * self.R0)

    def Lam(self, j):
        lam = self.lam0 if self.I(j) == 0 else self.lam1
        return lam + self.eps**2 * self.beta_p(j) ** 2

    def wavenumber_gap(self):
        """min |beta_i - beta_j| across classes, scaled by eps (~ O(1))."""
        if not self.Sigma0 or not self.Sigma1:
            return np.inf
        b0 = np.array([self.beta_p(j) for j in self.Sigma0])
        b1 = np.array([self.beta_p(j) for j in self.Sigma1])
        return float(self.eps * np.min(np.abs(b0[:, None] - b1[None, :])))


def build_index_sets(eps, rho, lam0, p0=0.0, R0=1.0, lam1=0.0,
                     check_disjoint=True):
    """Enumerate Sigma_k = {j : (lam_k + eps^2 beta_{p,j}^2)^2 <= rho}.

    Raises SetsOverlap when rho >= lam0^2 (cutoff above the 1D ground
    state) or when the two sets share an index.  The continuum overlap
    threshold is rho = lam0^2/4; mode-counting diagnostics near the upper
    cutoff can pass check_disjoint=False.
    """
    if not rho > 0.0:
        raise ValueError("rho must be positive")
    if rho >= lam0**2:
        raise SetsOverlap(
            "cutoff rho = %g >= lam0^2 = %g" % (rho, lam0**2))
    scale = (1.0 + p0) * R0
    sq = np.sqrt(rho)
    # largest admissible beta_p: eps^2 beta^2 <= -lam0 + sqrt(rho)
    bmax = np.sqrt((-lam0 + sq)) / eps
    jmax = int(np.ceil(2.0 * bmax * scale)) + 2
    Sigma0, Sigma1 = [], []
    for j in range(jmax + 1):
        x = (eps * beta_j(j) / scale) ** 2
        if (lam0 + x) ** 2 <= rho:
            Sigma0.append(j)
        if (lam1 + x) ** 2 <= rho:
            Sigma1.append(j)
    overlap = set(Sigma0) & set(Sigma1)
    if overlap and check_disjoint:
        raise SetsOverlap("indices %s lie in both sets (rho = %g too large)"
                          % (sorted(overlap), rho))
    return SlowIndexSet(eps, rho, lam0, lam1, p0, R0, Sigma0, Sigma1)


# --- linearized operator -------------------------------------------------------

def apply_linearization(v, Phi, well, eta1, eta2):
    """(L v, Pi0 L v) for the second variation L of the flow at Phi.

        L v = (eps^2 Lap - W''(Phi))(eps^2 Lap v - W''(Phi) v)
              - W'''(Phi)(eps^2 Lap Phi - W'(Phi)) v
              + eps (eta1 eps^2 Lap v - eta2 W''(Phi) v)

    applied pseudo-spectrally on the periodic grid of Phi.
    """
    v = np.asarray(v, dtype=float)
    u = Phi.values
    eps = Phi.eps
    Wpp = eval_well(well, u, 2)
    mu = eps**2 * Phi.laplacian(u) - eval_well(well, u, 1)
    muv = eps**2 * Phi.laplacian(v) - Wpp * v
    Lv = (eps**2 * Phi.laplacian(muv) - Wpp * muv
          - eval_well(well, u, 3) * mu * v
          + eps * (eta1 * eps**2 * Phi.laplacian(v) - eta2 * Wpp * v))
    return Lv, pi0(Lv)


# --- modified basis ------------------------------------------------------------

class SlowBasis:
    """Sampled basis fields and their 1D correction profiles.

    Z and Zstar are (N, n, n) stacks ordered like index_set.indices
    (pearling class first).  phi1_unit / phi1_free hold, per mode, the
    curvature-unit and curvature-free parts of the first correction
    profile: phi_{1,j}(z; s) = kappa(s) * phi1_unit + phi1_free.
    """

    def __init__(self, index_set, Z, Zstar, phi1_unit, phi1_free,
                 L, eps, sigma):
        self.index_set = index_set
        self.Z = Z
        self.Zstar = Zstar
        self.phi1_unit = phi1_unit
        self.phi1_free = phi1_free
        self.L = float(L)
        self.eps = float(eps)
        self.sigma = float(sigma)

    @property
    def N(self):
        return self.Zstar.shape[0]

    @property
    def h(self):
        return 2.0 * self.L / self.Zstar.shape[1]

    def gram(self, modified=True):
        F = self.Zstar if modified else self.Z
        flat = F.reshape(self.N, -1)
        return self.h**2 * (flat @ flat.T)

    def masses(self):
        """Vector of |int Z*_j dx|."""
        return np.abs(self.h**2 * self.Zstar.reshape(self.N, -1).sum(axis=1))

    def flat(self):
        """(n^2, N) column matrix of the modified basis."""
        return self.Zstar.reshape(self.N, -1).T


def _solve_deflated_quartic(L0, rhs, x, Lam, deflate_index,
                            cond_limit=1e10):
    """Solve ((L0 + x)^2 - Lam^2) phi = rhs with mode `deflate_index` removed.

    x = eps^2 beta_p^2.  Raises NearResonance if the retained denominators
    span more than `cond_limit` in magnitude.
    """
    vals, vecs = L0.eigendecomposition()
    denom = (vals + x) ** 2 - Lam**2
    keep = np.arange(vals.size) != deflate_index
    dmin = np.min(np.abs(denom[keep]))
    dmax = np.max(np.abs(denom[keep]))
    if dmin == 0.0 or dmax / dmin > cond_limit:
        raise NearResonance(
            "deflated solve conditioning %g exceeds %g (min denom %g)"
            % (dmax / max(dmin, 1e-300), cond_limit, dmin))
    coef = (vecs.T @ np.asarray(rhs)[:-1]) * L0.grid.h_z
    coef[deflate_index] = 0.0
    dsafe = np.where(keep, denom, 1.0)
    sol = vecs @ (coef / dsafe)
    return np.append(sol, sol[0])


def _correction_profiles(profiles, sigma, x, Lam, k):
    """Right-hand sides and solutions of the first-correction solve, mode
    class k, tangential eigenvalue x = eps^2 beta_p^2.

    Returns (phi1_unit, phi1_free, proj_check) where proj_check is the
    measured <g*, psi> to compare with (sigma S1 + eta_d lam0) delta_{k0}
    + S2_k Lam.
    """
    g = profiles.grid
    L0 = profiles.L0
    psi = profiles.psi0 if k == 0 else profiles.psi1
    Wppp = eval_well(profiles.well, profiles.phi0, 3)
    Wpp = eval_well(profiles.well, profiles.phi0, 2)
    phi1 = profiles.phi1(sigma)
    # L0 phi1 = sigma B1 + (eta_d/2) z phi0' holds exactly by construction
    L0phi1 = sigma * profiles.B1 + 0.5 * profiles.eta_d * g.z * profiles.dphi0

    # even-parity (Theta-aligned, curvature-free) part
    w1psi = Wppp * phi1 * psi
    gstar = (Lam * (w1psi - profiles.eta1 * psi)
             + L0.apply(w1psi) + x * w1psi
             + Wppp * L0phi1 * psi
             + profiles.eta_d * Wpp * psi)
    proj = g.inner(gstar, psi)
    gstar_perp = gstar - proj * psi

    # odd-parity part, linear in the frozen curvature (unit coefficient):
    # kappa d/dz acting through both operator factors plus the tangential
    # metric correction 2 z eps^2 beta^2 and the W''' phi0' block
    dpsi = g.deriv(psi)
    a = dpsi + 2.0 * g.z * x * psi
    godd = Lam * a + L0.apply(a) + x * a + Wppp * profiles.dphi0 * psi

    defl = 0 if k == 0 else L0.kernel_index()
    phi1_unit = _solve_deflated_quartic(L0, -godd, x, Lam, defl)
    phi1_free = _solve_deflated_quartic(L0, -gstar_perp, x, Lam, defl)
    return phi1_unit, phi1_free, proj


def build_basis(index_set, profiles, interface, eps, sigma=None,
                ell=0.9, L=2.0 * np.pi, n=256, modified=True, frame=None):
    """Assemble the (modified) slow basis fields on the 2D grid.

    Each retained mode j gives Z_j = eps^{-1/2} psi_{I(j)}(z_p)
    Theta_j(s_p / (1+p0)), dressed with the standard cutoff; with
    `modified` the first-order 1D correction (curvature-frozen) is added:

        Z*_j = eps^{-1/2} (psi + eps (kappa phi1_unit + phi1_free)) Theta_j.
    """
    if sigma is None:
        sigma = profiles.sigma1_star
    if frame is None:
        frame = DressingFrame(interface, eps, ell, L, n)
    g = profiles.grid
    p0 = index_set.p0
    R0 = index_set.R0
    # base arc-length angle argument of the unscaled modes
    s_base = frame.ts / (1.0 + p0)

    idx = index_set.indices
    N = len(idx)
    Z = np.empty((N, n, n))
    Zs = np.empty((N, n, n)) if modified else None
    phi1_unit = {}
    phi1_free = {}
    for a, j in enumerate(idx):
        k = index_set.I(j)
        psi = profiles.psi0 if k == 0 else profiles.psi1
        Theta, _ = lb_modes(R0, j)
        w = Theta(s_base)
        Z[a] = frame.dress(psi, g, f_inf=0.0, weight=w) / np.sqrt(eps)
        if modified:
            x = eps**2 * index_set.beta_p(j) ** 2
            Lam = index_set.Lam(j)
            q, r, _ = _correction_profiles(profiles, sigma, x, Lam, k)
            phi1_unit[j], phi1_free[j] = q, r
            core = frame.dress(psi + eps * r, g, f_inf=0.0, weight=w)
            core += eps * frame.dress(q, g, f_inf=0.0,
                                      weight=frame.kappa * w)
            Zs[a] = core / np.sqrt(eps)
    if not modified:
        Zs = Z
    return SlowBasis(index_set, Z, Zs, phi1_unit, phi1_free, L, eps, sigma)


# --- mode matrix ---------------------------------------------------------------

class ModeMatrix:
    """Dense matrix of the projected linearization on the slow basis."""

    def __init__(self, M, index_set):
        self.M = np.asarray(M)
        self.index_set = index_set

    def block(self, k, l):
        n0 = self.index_set.N0
        sl = [slice(0, n0), slice(n0, None)]
        return self.M[sl[k], sl[l]]

    def asymmetry(self):
        return float(np.max(np.abs(self.M - self.M.T))
                     / max(np.max(np.abs(self.M)), 1e-300))

    def save_csv(self, path):
        np.savetxt(path, self.M, delimiter=",")


def assemble_Mstar(basis, Phi, well, eta1, eta2):
    """M*_{ij} = <Pi0 L Z*_i, Z*_j> by 2D grid quadrature."""
    N = basis.N
    flat = basis.Zstar.reshape(N, -1)
    h2 = basis.h**2
    M = np.empty((N, N))
    for i in range(N):
        _, PLz = apply_linearization(basis.Zstar[i], Phi, well, eta1, eta2)
        M[i] = h2 * (flat @ PLz.ravel())
    return ModeMatrix(M, basis.index_set)


def mode_matrix_prediction(index_set, profiles, sigma):
    """Leading-order diagonal of M* per retained mode.

    Pearling:  (1+p0)(Lam^2 + eps (sigma S1 + eta_d lam0) + eps S2_0 Lam)
    Meander:   (1+p0)(Lam^2 + eps S2_1 Lam)
    """
    eps = index_set.eps
    fac = 1.0 + index_set.p0
    out = []
    for j in index_set.indices:
        k = index_set.I(j)
        Lam = index_set.Lam(j)
        d = Lam**2 + eps * profiles.S2(k, sigma) * Lam
        if k == 0:
            d += eps * (sigma * profiles.S1
                        + profiles.eta_d * profiles.lam0)
        out.append(fac * d)
    return np.array(out)


# --- coercivity diagnostics ----------------------------------------------------

def pearling_coercivity(Mstar, eps, margin):
    """Minimum eigenvalue of the symmetrized pearling block vs (eps/4) margin."""
    B = Mstar.block(0, 0)
    B = 0.5 * (B + B.T)
    evals = np.linalg.eigvalsh(B)
    min_eig = float(evals[0])
    threshold = 0.25 * eps * margin
    return {
        "min_eig": min_eig,
        "threshold": float(threshold),
        "margin": float(margin),
        "passed": bool(min_eig >= threshold),
        "eigenvalues": evals,
    }


def fast_coercivity_probe(Phi, basis, well, eta1, eta2, rho,
                          trials=3, iters=50, seed=0):
    """Probe inf <L w, w> / ||w||_{H2in}^2 over w orthogonal to the basis.

    Projected preconditioned iteration (LOBPCG with the basis fields and
    the constant as constraints, a constant-coefficient fourth-order
    Fourier preconditioner) from `trials` random starts; reports the
    lowest quotient and its ratio to rho^2.
    """
    n = Phi.n_x
    n2 = n * Phi.n_y
    eps = Phi.eps

    Y = np.column_stack([basis.flat(), np.ones(n2)])

    k2 = Phi.k2_grid()
    pre = 1.0 / ((eps**2 * k2 + 1.0) ** 2 + max(rho, 1e-6))

    def matvec(w):
        _, PLw = apply_linearization(w.reshape(n, n), Phi, well, eta1, eta2)
        return PLw.ravel()

    def precond(w):
        return np.real(ifft2(pre * fft2(w.reshape(n, n)))).ravel()

    A = LinearOperator((n2, n2), matvec=matvec, dtype=float)
    Mop = LinearOperator((n2, n2), matvec=precond, dtype=float)

    rng = np.random.default_rng(seed)
    best = None
    results = []
    for _ in range(trials):
        X = rng.standard_normal((n2, 1))
        with warnings.catch_warnings():
            # the iteration budget is deliberately small; partial
            # convergence is the intended behavior of the probe
            warnings.simplefilter("ignore", UserWarning)
            vals, vecs = lobpcg(A, X, M=Mop, Y=Y, maxiter=iters, tol=1e-10,
                                largest=False, verbosityLevel=0)
        w = vecs[:, 0].reshape(n, n)
        Lw, _ = apply_linearization(w, Phi, well, eta1, eta2)
        num = Phi.inner(Lw, w)
        den = h2in_norm(Phi, w) ** 2
        q = num / den
        results.append(q)
        if best is None or q < best:
            best = q
    return {
        "min_quotient": float(best),
        "rho2": float(rho**2),
        "ratio": float(best / rho**2),
        "trials": [float(q) for q in results],
    }
