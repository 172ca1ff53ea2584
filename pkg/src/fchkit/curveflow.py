"""Reduced interface dynamics: regularized curve lengthening with slaved bulk.

The interface moves with the eps-scaled normal velocity

    v_n = -[(sigma(t) - sigma1*) kappa + eps Lap_s kappa],

kappa signed so a circle has kappa = -1/R (outward normal); the leading
sign is fixed by the physical requirement that sigma > sigma1* lengthens
the curve, and the curvature-diffusion sign by linear stability of the
circle (meander modes k >= 2 decay, translations are neutral).  The bulk
density is slaved to the conserved mass at every step,

    sigma = (M0 - m0 |Gamma|) / (B2_inf |Omega|),

so the mass bookkeeping identity m0 d|Gamma| + B2_inf |Omega| d sigma = 0
holds exactly.  Circles obey the closed scalar ODE

    dR/dtau = c (sigma(R) - sigma1*) / R,

with equilibrium R* = (M0 - B2_inf |Omega| sigma1*) / (2 pi m0).

Curves are evolved as star-shaped radial graphs r(theta) about a fixed
center, spectrally in theta; the graph parameterization provides the
tangential redistribution (no Lagrangian drift), and the stiff fourth-order
linearization of eps Lap_s kappa is treated implicitly in Fourier.  The
map between the curve's rescaled time tau and PDE time t is a single
calibrated factor c_t, fitted against a full-PDE radius trace.
"""

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import CollapseDetected, SelfIntersection, StiffStepRejected


# --- parameters ----------------------------------------------------------------

class CurveParams:
    """Constants of the reduced flow: profile moments, mass, domain area."""

    def __init__(self, profiles, M0, omega, eps, c=1.0, c_t=1.0):
        self.m0 = profiles.m0
        self.B2_infty = profiles.B2_infty
        self.sigma1_star = profiles.sigma1_star
        self.M0 = float(M0)
        self.omega = float(omega)
        self.eps = float(eps)
        self.c = float(c)
        self.c_t = float(c_t)

    def slave_sigma(self, length):
        return (self.M0 - self.m0 * length) / (self.B2_infty * self.omega)

    def R_star(self):
        return (self.M0 - self.B2_infty * self.omega * self.sigma1_star) \
            / (2.0 * np.pi * self.m0)

    def dsigma_dR(self):
        return -2.0 * np.pi * self.m0 / (self.B2_infty * self.omega)


# --- circle ODE ----------------------------------------------------------------

def circle_rhs(R, params):
    sigma = params.slave_sigma(2.0 * np.pi * R)
    return params.c * (sigma - params.sigma1_star) / R


def circle_ode_step(R, params, dt):
    """Forward-Euler step of dR/dtau = c (sigma(R) - sigma1*)/R."""
    if R <= 0.0:
        raise CollapseDetected("nonpositive radius %g" % R)
    R_new = R + dt * circle_rhs(R, params)
    if R_new < params.eps:
        raise CollapseDetected("radius %g fell below eps" % R_new)
    return R_new


def circle_decay_rate(params):
    """Analytic linearization rate of the circle ODE at R*."""
    return params.c * params.dsigma_dR() / params.R_star()


def run_circle(R0, params, dt, T):
    """(tau, R, sigma) arrays of the circle ODE over [0, T]."""
    n = int(round(T / dt))
    tau = np.arange(n + 1) * dt
    R = np.empty(n + 1)
    R[0] = R0
    for i in range(n):
        R[i + 1] = circle_ode_step(R[i], params, dt)
    sigma = params.slave_sigma(2.0 * np.pi * R)
    return tau, R, sigma


# --- radial-graph curve state --------------------------------------------------

class CurveState:
    """Star-shaped curve r(theta) about a fixed center, uniform theta grid."""

    def __init__(self, r, params, center=(0.0, 0.0), tau=0.0):
        self.r = np.asarray(r, dtype=float)
        self.params = params
        self.center = np.asarray(center, dtype=float)
        self.tau = float(tau)
        self.n = self.r.size
        self.theta = 2.0 * np.pi * np.arange(self.n) / self.n

    @classmethod
    def circle(cls, R, params, n=256):
        return cls(np.full(n, float(R)), params)

    def _deriv(self, f, order=1):
        k = np.fft.fftfreq(self.n, d=1.0 / self.n)
        return np.real(np.fft.ifft((1j * k) ** order * np.fft.fft(f)))

    def speed(self):
        return np.sqrt(self.r**2 + self._deriv(self.r) ** 2)

    def length(self):
        return float(2.0 * np.pi * np.mean(self.speed()))

    def kappa(self):
        """Signed curvature, -1/R on circles (outward normal convention)."""
        r = self.r
        rp = self._deriv(r)
        rpp = self._deriv(r, 2)
        return -(r**2 + 2.0 * rp**2 - r * rpp) / (r**2 + rp**2) ** 1.5

    def lap_s(self, f):
        g = self.speed()
        return self._deriv(self._deriv(f) / g) / g

    def sigma(self):
        return self.params.slave_sigma(self.length())

    def R_equiv(self):
        return self.length() / (2.0 * np.pi)

    def points(self):
        x = self.center[0] + self.r * np.cos(self.theta)
        y = self.center[1] + self.r * np.sin(self.theta)
        return np.column_stack([x, y])

    def mode_amplitudes(self, kmax=None):
        """|r_hat_k| of the radial deviation, k = 1 .. kmax."""
        kmax = self.n // 4 if kmax is None else kmax
        c = np.fft.rfft(self.r - np.mean(self.r)) / self.n
        return 2.0 * np.abs(c[1:kmax + 1])

    def copy(self):
        return CurveState(self.r.copy(), self.params, self.center, self.tau)


def normal_velocity(state):
    """v_n = -[(sigma - sigma1*) kappa + eps Lap_s kappa], eps-scaled."""
    p = state.params
    kap = state.kappa()
    sig = state.sigma()
    return -p.c * ((sig - p.sigma1_star) * kap + p.eps * state.lap_s(kap))


def rcl_step(state, dt, max_move=0.2):
    """Semi-implicit step of the radial-graph flow.

    The fourth-order circle linearization of the curvature diffusion,
    (eps / R^4)(k^4 - k^2) in Fourier, is taken implicit; the full
    nonlinear right-hand side dr/dtau = v_n sqrt(r^2 + r'^2)/r explicit.
    """
    r = state.r
    if np.min(r) < state.params.eps:
        raise CollapseDetected("radius %g fell below eps" % np.min(r))
    v = normal_velocity(state)
    rhs = v * state.speed() / r
    Rbar = np.mean(r)
    k = np.abs(np.fft.fftfreq(state.n, d=1.0 / state.n))
    A = state.params.c * state.params.eps / Rbar**4 * (k**4 - k**2)
    A = np.maximum(A, 0.0)
    rh = np.fft.fft(r)
    new_h = (rh + dt * (np.fft.fft(rhs) + A * rh)) / (1.0 + dt * A)
    r_new = np.real(np.fft.ifft(new_h))
    if not np.all(np.isfinite(r_new)):
        raise StiffStepRejected("nonfinite update at dt = %g" % dt)
    if np.max(np.abs(r_new - r)) > max_move * Rbar:
        raise StiffStepRejected(
            "step moved %g of the mean radius" % (np.max(np.abs(r_new - r))
                                                  / Rbar))
    if np.min(r_new) <= 0.0:
        raise SelfIntersection("radial graph crossed the center")
    out = state.copy()
    out.r = r_new
    out.tau = state.tau + dt
    return out


class CurveTrajectory:
    """Curve-flow diagnostics time series, CSV-serializable."""

    def __init__(self, kmax=8):
        self.kmax = int(kmax)
        self.rows = []
        self.final = None

    def columns(self):
        return ("tau", "length", "sigma", "R_equiv") + tuple(
            "p%d" % k for k in range(1, self.kmax + 1))

    def sample(self, state):
        amps = state.mode_amplitudes(self.kmax)
        self.rows.append((state.tau, state.length(), state.sigma(),
                          state.R_equiv()) + tuple(amps))

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(",".join(self.columns()) + "\n")
            for r in self.rows:
                fh.write(",".join("%.17g" % v for v in r) + "\n")


def run_curve(state, dt, T, sample_every=None, kmax=8):
    """Advance the radial-graph flow to tau = T collecting diagnostics."""
    n = int(round(T / dt))
    cadence = sample_every or max(n // 256, 1)
    traj = CurveTrajectory(kmax=kmax)
    traj.sample(state)
    for i in range(n):
        state = rcl_step(state, dt)
        if (i + 1) % cadence == 0 or i == n - 1:
            traj.sample(state)
    traj.final = state
    return traj


# --- PDE calibration -----------------------------------------------------------

def compare_with_pde(t_pde, R_pde, tau_curve, R_curve):
    """Calibrate tau = c_t * t against a PDE radius trace.

    Least-squares fit of the single factor c_t so that the curve-flow
    radius, evaluated at c_t * t, matches R_pde; returns (c_t,
    max relative deviation after calibration, fitted residual).
    """
    t_pde = np.asarray(t_pde, dtype=float)
    R_pde = np.asarray(R_pde, dtype=float)
    tau_curve = np.asarray(tau_curve, dtype=float)
    R_curve = np.asarray(R_curve, dtype=float)

    def misfit(log_ct):
        ct = np.exp(log_ct)
        tq = ct * t_pde
        if tq[-1] > tau_curve[-1] * 1.000001:
            return 1e6 + tq[-1]
        Rq = np.interp(tq, tau_curve, R_curve)
        return float(np.sum((Rq - R_pde) ** 2))

    res = minimize_scalar(misfit, bounds=(-12.0, 12.0), method="bounded",
                          options={"xatol": 1e-10})
    c_t = float(np.exp(res.x))
    Rq = np.interp(c_t * t_pde, tau_curve, R_curve)
    dev = float(np.max(np.abs(Rq - R_pde) / np.abs(R_pde)))
    return c_t, dev, float(res.fun)
