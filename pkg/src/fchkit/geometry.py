"""Base curves, perturbed interfaces, curvature, and whiskered coordinates.

The interface Gamma_p is built from a closed base curve Gamma_0 by the
implicit normal-graph construction

    gamma_p(s) = ((1+p0)/A(p)) * (gamma_0(s) + pbar(ts(s)) n_0(s))
                 + p1 Theta_0 E1 + p2 Theta_0 E2,

where pbar is a combination of arc-length-scaled Laplace-Beltrami modes of
Gamma_p itself, ts(s) is the perturbed arc length solving dts/ds = |gamma_p'|,
and the normalization A(p) pins the length |Gamma_p| = (1+p0)|Gamma_0|
exactly, so the length responds to p0 alone.  Since |Gamma_p| is known a
priori, the perturbed modes are known up front and only the map ts(s)
iterates (global fixed-point sweeps).

Conventions: curves are parameterized counterclockwise; n is the OUTER
normal; curvature kappa = gamma''.n/|gamma'|^2, so a circle of radius R has
kappa = -1/R.
"""

import numpy as np
from scipy.fft import fft, ifft
from scipy.interpolate import CubicSpline
from scipy.spatial import cKDTree

from .errors import (ImplicitIterationDiverged, OutsideAdmissibleSet,
                     SelfIntersection)


# --- Laplace-Beltrami modes ---------------------------------------------------

def lb_modes(R0, j):
    """Mode j on the circle of radius R0: (callable Theta_j(s), beta_j).

    Theta_0 = 1/sqrt(2 pi R0); for k >= 1,
    Theta_{2k-1} = cos(k s/R0)/sqrt(pi R0), Theta_{2k} = sin(...)/sqrt(pi R0)
    (unit L2 norm on [0, 2 pi R0]); beta_{2k-1} = beta_{2k} = k.
    """
    if j == 0:
        c = 1.0 / np.sqrt(2.0 * np.pi * R0)
        return (lambda s: c * np.ones_like(np.asarray(s, dtype=float))), 0.0
    k = (j + 1) // 2
    c = 1.0 / np.sqrt(np.pi * R0)
    if j % 2 == 1:
        return (lambda s: c * np.cos(k * np.asarray(s) / R0)), float(k)
    return (lambda s: c * np.sin(k * np.asarray(s) / R0)), float(k)


def beta_j(j):
    """Wavenumber of mode j (0, 1, 1, 2, 2, ...)."""
    j = np.asarray(j)
    return np.where(j == 0, 0.0, (j + 1) // 2).astype(float)


# --- meander vectors -----------------------------------------------------------

class MeanderVector:
    """Perturbation parameters p = (p0, p1, p2, p3, ..., p_{N1-1}).

    p0 scales length, p1/p2 translate, the rest deform the shape.
    """

    def __init__(self, p):
        self.p = np.atleast_1d(np.asarray(p, dtype=float))
        if self.p.size < 3:
            self.p = np.concatenate([self.p, np.zeros(3 - self.p.size)])

    @classmethod
    def zeros(cls, N1):
        return cls(np.zeros(N1))

    @property
    def N1(self):
        return self.p.size

    @property
    def p0(self):
        return self.p[0]

    @property
    def hat(self):
        return self.p[3:]

    def vnorm(self, k, r=1, scaled_by=None):
        """Weighted norm of p-hat: (sum_{j>=3} b_j^{kr} |p_j|^r)^{1/r}.

        b_j = beta_j by default, or beta_j/((1+p0)R0) if `scaled_by` gives R0.
        """
        j = np.arange(3, self.N1)
        b = beta_j(j)
        if scaled_by is not None:
            b = b / ((1.0 + self.p0) * scaled_by)
        return float(np.sum(b ** (k * r) * np.abs(self.hat) ** r)
                     ** (1.0 / r))

    def in_admissible(self, delta, C=1.0):
        """Membership of the base admissible set: p-hat small, p0 > -1/2."""
        return (self.p0 > -0.5 and self.vnorm(2) <= C
                and self.vnorm(1) <= C * delta)


# --- base curves ---------------------------------------------------------------

class BaseCurve:
    """Closed base curve, arc-length parameterized, centered at the origin."""

    def __init__(self, gamma, length, kappa=None, n_s=None):
        # gamma: (n_s, 2) samples on the uniform s-grid over [0, length)
        self.gamma0 = np.asarray(gamma, dtype=float)
        self.n_s = self.gamma0.shape[0] if n_s is None else n_s
        self.length = float(length)
        self.R0 = self.length / (2.0 * np.pi)
        self.s = np.arange(self.n_s) * (self.length / self.n_s)
        d = _fourier_deriv(self.gamma0, self.length)
        speed = np.sqrt(np.sum(d**2, axis=1))
        if np.max(np.abs(speed - 1.0)) > 1e-8:
            raise ValueError("base curve must be arc-length parameterized")
        self.tangent0 = d
        self.normal0 = np.column_stack([d[:, 1], -d[:, 0]])  # outer
        if kappa is None:
            dd = _fourier_deriv(self.gamma0, self.length, order=2)
            kappa = np.sum(dd * self.normal0, axis=1)
        self.kappa0 = kappa

    @classmethod
    def circle(cls, R0=1.0, n_s=256):
        s = np.arange(n_s) * (2.0 * np.pi * R0 / n_s)
        th = s / R0
        gamma = R0 * np.column_stack([np.cos(th), np.sin(th)])
        return cls(gamma, 2.0 * np.pi * R0, kappa=-np.ones(n_s) / R0)

    @classmethod
    def from_samples(cls, pts, n_s=512, sweeps=4):
        """General closed curve from samples: Fourier-smoothed and
        re-parameterized by arc length with fixed-point resampling."""
        pts = np.asarray(pts, dtype=float)
        pts = pts - pts.mean(axis=0)
        cur = pts.copy()
        for _ in range(sweeps):
            seg = np.sqrt(np.sum(np.diff(np.vstack([cur, cur[:1]]),
                                         axis=0)**2, axis=1))
            arc = np.concatenate([[0.0], np.cumsum(seg)])
            L = arc[-1]
            sp = CubicSpline(arc, np.vstack([cur, cur[:1]]),
                             bc_type="periodic")
            cur = sp(np.arange(n_s) * (L / n_s))
        return cls(cur - cur.mean(axis=0), L)


def _fourier_deriv(f, period, order=1):
    f = np.asarray(f)
    n = f.shape[0]
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=period / n)
    sym = (1j * k) ** order
    if order % 2 == 1 and n % 2 == 0:
        sym[n // 2] = 0.0
    if f.ndim == 1:
        return np.real(ifft(sym * fft(f)))
    return np.column_stack([np.real(ifft(sym * fft(f[:, i])))
                            for i in range(f.shape[1])])


def _fourier_antideriv(f, period):
    """Antiderivative of a periodic sample with zero-mean part handled
    spectrally; returns F with F[0] = 0 (the mean contributes a ramp)."""
    f = np.asarray(f)
    n = f.size
    mean = f.mean()
    k = 2.0 * np.pi * np.fft.fftfreq(n, d=period / n)
    c = fft(f - mean)
    with np.errstate(divide="ignore", invalid="ignore"):
        ci = np.where(k != 0.0, c / (1j * k), 0.0)
    F = np.real(ifft(ci))
    x = np.arange(n) * (period / n)
    return mean * x + F - F[0]


# --- the perturbed interface ---------------------------------------------------

class InterfaceState:
    """Perturbed interface with tabulated geometry and point-query helpers."""

    def __init__(self, base, p, gamma_p, ts, length_p, A, n_fine=4):
        self.base = base
        self.p = p
        self.gamma_p = gamma_p      # samples on the base uniform s-grid
        self.ts = ts                # arc length ts(s) on the same grid
        self.length = length_p
        self.A = A
        self.N1 = p.N1

        n_s = base.n_s
        L0 = base.length
        d = _fourier_deriv(gamma_p, L0)
        self.speed = np.sqrt(np.sum(d**2, axis=1))
        self.tangent = d / self.speed[:, None]
        self.normal = np.column_stack([self.tangent[:, 1],
                                       -self.tangent[:, 0]])
        dd = _fourier_deriv(gamma_p, L0, order=2)
        self.kappa = np.sum(dd * self.normal, axis=1) / self.speed**2

        # fine periodic splines in s for point evaluation
        m = n_fine * n_s
        sf = np.arange(m + 1) * (L0 / m)
        self._s_fine = sf

        def up(f):
            # spectral upsampling then closed periodic spline
            c = fft(f)
            cu = np.zeros(m, dtype=complex)
            half = n_s // 2
            cu[:half] = c[:half]
            cu[-half:] = c[-half:]
            g = np.real(ifft(cu)) * (m / n_s)
            return CubicSpline(sf, np.append(g, g[0]), bc_type="periodic")

        self._gx = up(gamma_p[:, 0])
        self._gy = up(gamma_p[:, 1])
        ramp = ts - ts[0] - (length_p / L0) * base.s
        self._ts_fluct = up(ramp)
        self._kappa_sp = up(self.kappa)
        tree_pts = np.column_stack([self._gx(sf[:-1]), self._gy(sf[:-1])])
        self._tree = cKDTree(tree_pts)
        self._whisker_cache = {}

    # point evaluation ---------------------------------------------------------

    def point(self, s):
        return np.column_stack([self._gx(s), self._gy(s)])

    def ts_of_s(self, s):
        s = np.asarray(s, dtype=float) % self.base.length
        return (self.length / self.base.length) * s + self._ts_fluct(s)

    def s_of_ts(self, ts):
        """Invert the arc-length map by Newton (speed is bounded below)."""
        ts = np.asarray(ts, dtype=float) % self.length
        s = ts / (self.length / self.base.length)
        for _ in range(30):
            f = (self.ts_of_s(s) - ts + self.length / 2.0) % self.length \
                - self.length / 2.0
            sp = np.sqrt(self._gx(s % self.base.length, 1)**2
                         + self._gy(s % self.base.length, 1)**2)
            s = s - f / sp
            if np.max(np.abs(f)) < 1e-13 * self.length:
                break
        return s % self.base.length

    def normal_at(self, s):
        dx, dy = self._gx(s, 1), self._gy(s, 1)
        sp = np.sqrt(dx**2 + dy**2)
        return np.column_stack([dy / sp, -dx / sp])

    def kappa_at(self, s):
        return self._kappa_sp(np.asarray(s) % self.base.length)

    # uniform arc-length resampling --------------------------------------------

    def arclength_grid(self, n=None):
        n = n or self.base.n_s
        ts = np.arange(n) * (self.length / n)
        return ts, self.s_of_ts(ts)


def build_interface(base, p, delta=0.5, max_sweeps=100, tol=1e-12):
    """Construct Gamma_p by global fixed-point sweeps on ts(s).

    |Gamma_p| = (1+p0)|Gamma_0| is exact at every sweep by the length
    normalization A(p); only the arc-length map iterates.
    """
    if not isinstance(p, MeanderVector):
        p = MeanderVector(p)
    if not p.in_admissible(delta):
        raise OutsideAdmissibleSet(
            "p outside admissible set: p0=%g, V1=%g, V2=%g"
            % (p.p0, p.vnorm(1), p.vnorm(2)))

    n_s = base.n_s
    if n_s < 8 * p.N1:
        raise ValueError("base curve resolution below 8 points per mode")
    L0 = base.length
    Lp = (1.0 + p.p0) * L0
    R0 = base.R0
    s = base.s

    # perturbed modes are known up front: tTheta_j(ts) = Theta_j(ts/(1+p0))
    modes = []
    for j in range(3, p.N1):
        th, _ = lb_modes(R0, j)
        modes.append((p.p[j], th))

    th0 = 1.0 / np.sqrt(2.0 * np.pi * R0)
    shift = np.array([p.p[1] * th0, p.p[2] * th0])

    ts = (1.0 + p.p0) * s  # initial guess
    prev = None
    for sweep in range(max_sweeps):
        arg = ts / (1.0 + p.p0)
        pbar = np.zeros(n_s)
        for pj, th in modes:
            pbar += pj * th(arg)
        gamma_bar = base.gamma0 + pbar[:, None] * base.normal0
        dbar = _fourier_deriv(gamma_bar, L0)
        A = np.mean(np.sqrt(np.sum(dbar**2, axis=1)))
        gamma_p = ((1.0 + p.p0) / A) * gamma_bar + shift[None, :]
        speed = ((1.0 + p.p0) / A) * np.sqrt(np.sum(dbar**2, axis=1))
        ts_new = _fourier_antideriv(speed, L0)
        err = np.max(np.abs(ts_new - ts))
        ts = ts_new
        if prev is not None and err < tol * L0:
            break
        prev = err
    else:
        raise ImplicitIterationDiverged(
            "arc-length fixed point stalled at %g" % err)

    state = InterfaceState(base, p, gamma_p, ts, Lp, A)
    # cheap sanity: speed bounded away from zero (cusps)
    if np.min(state.speed) < 0.2 * np.mean(state.speed):
        raise SelfIntersection("near-cusp detected in |gamma_p'|")
    return state


def curvature(state, n=None):
    """kappa_p and its surface Laplacian on the uniform arc-length grid.

    Returns (ts_grid, kappa, lap_kappa); differentiation is Fourier in ts.
    """
    ts, s = state.arclength_grid(n)
    kap = state.kappa_at(s)
    lap = _fourier_deriv(kap, state.length, order=2)
    return ts, kap, lap


def closest_point(state, pts, reach):
    """Foot of the whisker through each point of `pts` (N x 2).

    Returns (s, dist, sel): base parameter of the closest curve point,
    signed distance (positive outward), and a mask of points within
    `reach` of the curve (entries outside carry s = 0, dist = inf).
    """
    pts = np.atleast_2d(np.asarray(pts, dtype=float))
    d0, idx = state._tree.query(pts)
    s = state._s_fine[idx]
    sel = d0 <= reach + 4.0 * (state._s_fine[1] - state._s_fine[0])
    s_sel = s[sel]
    x_sel = pts[sel]
    # Newton on (x - gamma(s)) . gamma'(s) = 0
    for _ in range(40):
        gx, gy = state._gx(s_sel), state._gy(s_sel)
        dx, dy = state._gx(s_sel, 1), state._gy(s_sel, 1)
        ddx, ddy = state._gx(s_sel, 2), state._gy(s_sel, 2)
        rx, ry = x_sel[:, 0] - gx, x_sel[:, 1] - gy
        f = rx * dx + ry * dy
        fp = -(dx**2 + dy**2) + rx * ddx + ry * ddy
        step = f / fp
        # keep Newton local: never step more than two fine segments
        cap = 2.0 * (state._s_fine[1] - state._s_fine[0])
        step = np.clip(step, -cap, cap)
        s_sel = (s_sel - step) % state.base.length
        if np.max(np.abs(step)) < 1e-13 * state.base.length:
            break
    gx, gy = state._gx(s_sel), state._gy(s_sel)
    rx, ry = x_sel[:, 0] - gx, x_sel[:, 1] - gy
    nrm = state.normal_at(s_sel)
    dist_sel = rx * nrm[:, 0] + ry * nrm[:, 1]

    s_out = np.zeros(pts.shape[0])
    dist = np.full(pts.shape[0], np.inf)
    s_out[sel] = s_sel
    dist[sel] = dist_sel
    sel = sel & (np.abs(dist) <= reach)
    return s_out, dist, sel


def local_coords(state, pts, eps, reach):
    """Closest-point whisker coordinates of points `pts` (N x 2).

    Returns (ts_p, z_p, inside): z_p = signed distance / eps (positive on
    the outward side); `inside` False where distance exceeds `reach` (such
    points carry no meaningful coordinates).
    """
    s, dist, inside = closest_point(state, pts, reach)
    z = dist / eps
    tsp = np.zeros(len(s))
    tsp[inside] = state.ts_of_s(s[inside])
    return tsp, z, inside


def whisker_test(state, ell, n_s_samples=256, n_z_samples=9, tol=1e-6):
    """Pass iff whiskers of length ell don't collide.

    Lays an (s, r) lattice of probe points x = gamma(ts_i) + r n(ts_i),
    |r| <= ell, and requires the closest-point map to round-trip to the
    whisker that generated each probe.
    """
    key = (round(ell, 12), n_s_samples, n_z_samples)
    if key in state._whisker_cache:
        return state._whisker_cache[key]
    ts, s = state.arclength_grid(n_s_samples)
    g = state.point(s)
    nrm = state.normal_at(s)
    rr = np.linspace(-ell, ell, n_z_samples)
    ok = True
    for r in rr:
        probes = g + r * nrm
        tsp, z, inside = local_coords(state, probes, 1.0, 2.0 * abs(ell)
                                      + 1e-9)
        if not np.all(inside):
            ok = False
            break
        if np.max(np.abs(z - r)) > max(tol, 1e-9 * state.length):
            ok = False
            break
        dts = (tsp - ts + 0.5 * state.length) % state.length \
            - 0.5 * state.length
        if np.max(np.abs(dts)) > max(tol, 1e-6 * state.length):
            ok = False
            break
    state._whisker_cache[key] = ok
    return ok
