"""Pseudo-spectral IMEX integrator for the mass-preserving gradient flow.

The flow  dt u = -Pi0 F(u)  is advanced with a first-order IMEX split: the
constant-coefficient operator (eps^2 Lap - alpha)^2 is treated implicitly
(diagonal in Fourier), the remainder F(u) - (eps^2 Lap - alpha)^2 u
explicitly.  The zero-mass projection is exact: the mean Fourier mode is
never updated, so mass is conserved to round-off.  The stabilization
constant alpha defaults to max |W''| over the state range the solution
visits, which keeps the explicit remainder dissipative at practical dt.

Energy is monitored; under adaptive control a step that increases the
energy beyond a relative tolerance raises StepRejected and the driver
retries with a halved dt.
"""

import json
import time

import numpy as np
from scipy.fft import fft2, ifft2

from . import __version__
from .ansatz import FieldState, energy, eval_F, pi0, write_snapshot
from .errors import StepRejected
from .potential import eval_well, validate_well


ENERGY_TOL = 1e-10


def default_alpha(well, pad=0.2):
    """max |W''| over [b_- - pad, u_max + pad], the visited state range."""
    rep = validate_well(well)
    uu = np.linspace(well.b_minus - pad, rep["u_max"] + pad, 2001)
    return float(np.max(np.abs(eval_well(well, uu, 2))))


class SolverConfig:
    """Time-stepping parameters.

    alpha = None defers to default_alpha(well) at validation time.
    """

    def __init__(self, dt, T, alpha=None, snap_every=None, adaptive=True,
                 max_retries=8, eta1=1.0, eta2=2.0, resolution_factor=4.0):
        if dt <= 0.0:
            raise ValueError("dt must be positive")
        self.dt = float(dt)
        self.T = float(T)
        self.alpha = alpha
        self.snap_every = snap_every
        self.adaptive = bool(adaptive)
        self.max_retries = int(max_retries)
        self.eta1 = float(eta1)
        self.eta2 = float(eta2)
        self.resolution_factor = float(resolution_factor)

    def resolve_alpha(self, well, u0=None):
        if self.alpha is None:
            self.alpha = default_alpha(well)
        if u0 is not None:
            need = float(np.max(np.abs(eval_well(well, u0.values, 2))))
            if self.alpha < need:
                raise ValueError(
                    "alpha = %g below max |W''(u0)| = %g"
                    % (self.alpha, need))
        return self.alpha

    def as_dict(self):
        return {"dt": self.dt, "T": self.T, "alpha": self.alpha,
                "snap_every": self.snap_every, "adaptive": self.adaptive,
                "max_retries": self.max_retries,
                "eta1": self.eta1, "eta2": self.eta2,
                "resolution_factor": self.resolution_factor}


def _implicit_symbol(field, alpha):
    # (eps^2 Lap - alpha)^2 in Fourier
    return (field.eps**2 * field.k2_grid() + alpha) ** 2


def step(u, cfg, well, dt=None, energy_old=None):
    """One IMEX step; returns (u_new, energy_new).

    Solves (1 + dt A) u_{n+1} = u_n - dt (F(u_n) - A u_n) mode-wise with
    A = (eps^2 Lap - alpha)^2, except the mean mode which is left exactly
    unchanged (the zero-mass projection).  Under adaptive control raises
    StepRejected when the energy increases beyond ENERGY_TOL relative.
    """
    dt = cfg.dt if dt is None else dt
    alpha = cfg.resolve_alpha(well)
    A = _implicit_symbol(u, alpha)
    F = eval_F(u, well, cfg.eta1, cfg.eta2)
    uh = fft2(u.values)
    rh = uh - dt * (fft2(F) - A * uh)
    new_h = rh / (1.0 + dt * A)
    new_h[0, 0] = uh[0, 0]
    u_new = FieldState(np.real(ifft2(new_h)), u.L, u.eps, t=u.t + dt)
    e_new = energy(u_new, well, cfg.eta1, cfg.eta2)
    if cfg.adaptive:
        e_old = energy(u, well, cfg.eta1, cfg.eta2) \
            if energy_old is None else energy_old
        if e_new > e_old + ENERGY_TOL * abs(e_old):
            raise StepRejected(
                "energy rose %g -> %g at dt = %g" % (e_old, e_new, dt))
    return u_new, e_new


class Trajectory:
    """Diagnostics time series and snapshot bookkeeping of a run."""

    COLUMNS = ("t", "mass", "energy", "res_norm", "dt")

    def __init__(self, cfg):
        self.cfg = cfg
        self.rows = []
        self.snapshots = []     # (t, path or FieldState)
        self.final = None

    def to_csv(self, path):
        with open(path, "w") as fh:
            fh.write(",".join(self.COLUMNS) + "\n")
            for r in self.rows:
                fh.write(",".join("%.17g" % v for v in r) + "\n")

    def metadata(self, extra=None):
        meta = {"version": __version__, "config": self.cfg.as_dict(),
                "written": time.strftime("%Y-%m-%dT%H:%M:%S")}
        if extra:
            meta.update(extra)
        return meta

    def save_metadata(self, path, extra=None):
        with open(path, "w") as fh:
            json.dump(self.metadata(extra), fh, indent=2)
            fh.write("\n")


def run(u0, cfg, well, hooks=None, snapshot_dir=None):
    """Advance u0 to time T collecting diagnostics.

    hooks: optional callables f(field, row_dict) invoked at every
    diagnostic sample (same cadence as snapshots; every step if no
    cadence given).  On StepRejected the step is retried with halved dt
    up to max_retries times (the configured dt is restored afterwards);
    the exception propagates if all retries fail.
    """
    cfg.resolve_alpha(well, u0)
    u0.check_resolution(cfg.resolution_factor)
    traj = Trajectory(cfg)
    u = u0.copy()
    e = energy(u, well, cfg.eta1, cfg.eta2)
    nsteps = int(round(cfg.T / cfg.dt))
    cadence = cfg.snap_every or max(nsteps // 64, 1)

    def sample(u, e, dt_used):
        _, rn = _residual_norm(u, well, cfg)
        row = (u.t, u.mean(), e, rn, dt_used)
        traj.rows.append(row)
        if snapshot_dir is not None:
            path = "%s/snap_%08.3f.fchb" % (snapshot_dir, u.t)
            write_snapshot(path, u)
            traj.snapshots.append((u.t, path))
        else:
            traj.snapshots.append((u.t, u.copy()))
        if hooks:
            row_d = dict(zip(Trajectory.COLUMNS, row))
            for h in hooks:
                h(u, row_d)

    sample(u, e, cfg.dt)
    for i in range(nsteps):
        dt_try = cfg.dt
        for attempt in range(cfg.max_retries + 1):
            try:
                u_new, e_new = step(u, cfg, well, dt=dt_try, energy_old=e)
                break
            except StepRejected:
                if attempt == cfg.max_retries:
                    raise
                dt_try *= 0.5
        u, e = u_new, e_new
        if (i + 1) % cadence == 0 or i == nsteps - 1:
            sample(u, e, dt_try)
    traj.final = u
    return traj


def _residual_norm(u, well, cfg):
    F = pi0(eval_F(u, well, cfg.eta1, cfg.eta2))
    return F, u.norm_L2(F)


def dt_convergence(u0, cfg, well, refinements=3):
    """||u_dt(T) - u_ref(T)|| over dt halvings; first-order slope fit.

    The reference uses dt/2^(refinements+1).  Returns (dts, errors, slope).
    """
    base = cfg.as_dict()
    del base["dt"]
    del base["T"]

    def final(dt):
        c = SolverConfig(dt=dt, T=cfg.T, **base)
        c.adaptive = False
        return run(u0, c, well).final

    dts = [cfg.dt / 2**k for k in range(refinements)]
    ref = final(cfg.dt / 2**(refinements + 1))
    errs = [u0.norm_L2(final(d).values - ref.values) for d in dts]
    slope = np.polyfit(np.log(dts), np.log(errs), 1)[0]
    return np.array(dts), np.array(errs), float(slope)
