import csv
import json

import numpy as np
import pytest
from scipy.fft import fft2, ifft2

from fchkit.ansatz import FieldState, energy, eval_F, pi0
from fchkit.errors import ResolutionTooCoarse, StepRejected
from fchkit.pdesolver import SolverConfig, Trajectory, default_alpha, \
    dt_convergence, run, step
from fchkit.potential import eval_well


def smooth_state(seed=0, n=64, L=np.pi, eps=0.5, amp=0.2):
    rng = np.random.default_rng(seed)
    f = FieldState(np.zeros((n, n)), L, eps)
    v = rng.standard_normal((n, n))
    v = np.real(ifft2(fft2(v) * np.exp(-0.5 * f.k2_grid())))
    f.values = -1.0 + amp * v / np.max(np.abs(v))
    return f


def test_default_alpha_dominates(well):
    alpha = default_alpha(well)
    uu = np.linspace(-1.2, 0.35, 500)
    assert alpha >= np.max(np.abs(eval_well(well, uu, 2)))


def test_config_validation(well):
    with pytest.raises(ValueError):
        SolverConfig(dt=-1.0, T=1.0)
    cfg = SolverConfig(dt=1e-3, T=1.0)
    assert cfg.resolve_alpha(well) == pytest.approx(default_alpha(well))
    # alpha below max |W''(u0)| on a wild state is rejected
    u0 = FieldState(3.0 * np.ones((16, 16)), np.pi, 0.5)
    cfg2 = SolverConfig(dt=1e-3, T=1.0, alpha=0.1)
    with pytest.raises(ValueError):
        cfg2.resolve_alpha(well, u0)
    d = cfg.as_dict()
    assert d["dt"] == 1e-3 and "alpha" in d and "eta1" in d


def test_constant_state_is_stationary(well):
    """Spatial constants are fixed points: Pi0 F(const) = 0 exactly."""
    u = FieldState.constant(-1.0, 32, np.pi, 0.5)
    cfg = SolverConfig(dt=1e-2, T=0.1, resolution_factor=0.1)
    traj = run(u, cfg, well)
    assert np.max(np.abs(traj.final.values + 1.0)) < 1e-13


def test_mass_conservation_and_energy_decay(well):
    u0 = smooth_state()
    cfg = SolverConfig(dt=1e-4, T=0.1, resolution_factor=0.1)
    traj = run(u0, cfg, well)
    rows = np.array(traj.rows)
    mass = rows[:, 1]
    # the mean Fourier mode is frozen: conservation to round-off
    assert np.max(np.abs(mass - mass[0])) < 1e-12
    e = rows[:, 2]
    assert np.all(np.diff(e) <= 1e-10 * np.abs(e[:-1]))
    assert e[-1] < e[0]


def test_dissipation_identity(well):
    """dE/dt = -eps^-3 ||Pi0 F||^2 along the flow, within a few percent
    at moderate dt."""
    u0 = smooth_state(seed=4)
    cfg = SolverConfig(dt=2e-5, T=2e-5, adaptive=False,
                       resolution_factor=0.1)
    u1, e1 = step(u0, cfg, well)
    e0 = energy(u0, well, cfg.eta1, cfg.eta2)
    F = pi0(eval_F(u0, well, cfg.eta1, cfg.eta2))
    pred = -u0.norm_L2(F) ** 2 / u0.eps**3
    rate = (e1 - e0) / cfg.dt
    assert rate == pytest.approx(pred, rel=0.03)


def test_step_rejected_recipe(well):
    """A large-amplitude state with deliberately small alpha is rejected."""
    rng = np.random.default_rng(0)
    u = FieldState(3.0 * rng.standard_normal((32, 32)), np.pi, 0.5)
    cfg = SolverConfig(dt=2.0, T=2.0, alpha=0.02, resolution_factor=0.1)
    with pytest.raises(StepRejected):
        step(u, cfg, well)


def test_alpha_validation_blocks_wild_state(well):
    """run() refuses a state outside the stabilized range."""
    rng = np.random.default_rng(0)
    u = FieldState(3.0 * rng.standard_normal((32, 32)), np.pi, 0.5)
    cfg = SolverConfig(dt=2.0, T=2.0, alpha=0.02, resolution_factor=0.1)
    with pytest.raises(ValueError):
        run(u, cfg, well)


def test_retry_halves_dt_then_recovers(well, monkeypatch):
    """The driver halves dt on rejection and restores the configured dt."""
    import fchkit.pdesolver as pde
    orig_step = pde.step
    attempts = []

    def flaky(u, cfg, well_, dt=None, energy_old=None):
        dt = cfg.dt if dt is None else dt
        attempts.append(dt)
        if dt > 0.6e-4:        # reject until two halvings of dt = 2e-4
            raise StepRejected("forced")
        return orig_step(u, cfg, well_, dt=dt, energy_old=energy_old)

    monkeypatch.setattr(pde, "step", flaky)
    u0 = smooth_state(seed=5, n=32)
    cfg = SolverConfig(dt=2e-4, T=6e-4, max_retries=4,
                       resolution_factor=0.1)
    traj = pde.run(u0, cfg, well)
    # every macro step retried at the full dt first: the configured dt
    # is restored between steps
    assert attempts.count(2e-4) == 3
    assert attempts.count(1e-4) == 3
    assert attempts.count(0.5e-4) == 3
    assert traj.final.t == pytest.approx(3 * 0.5e-4)


def test_retry_exhaustion_propagates(well, monkeypatch):
    import fchkit.pdesolver as pde

    def always_reject(*a, **kw):
        raise StepRejected("forced")

    monkeypatch.setattr(pde, "step", always_reject)
    u0 = smooth_state(seed=5, n=32)
    cfg = SolverConfig(dt=1e-4, T=1e-3, max_retries=2,
                       resolution_factor=0.1)
    with pytest.raises(StepRejected):
        pde.run(u0, cfg, well)


def test_resolution_guard(well):
    u = FieldState.constant(-1.0, 16, np.pi, 0.05)
    cfg = SolverConfig(dt=1e-3, T=1e-2)
    with pytest.raises(ResolutionTooCoarse):
        run(u, cfg, well)


def test_dt_convergence_first_order(well):
    u0 = smooth_state(seed=7, n=32)
    cfg = SolverConfig(dt=4e-4, T=4e-2, resolution_factor=0.1)
    dts, errs, slope = dt_convergence(u0, cfg, well)
    assert np.all(np.diff(errs) < 0.0)   # errors shrink with dt
    assert 0.8 <= slope <= 1.2


def test_trajectory_csv_and_metadata(well, tmp_path):
    u0 = smooth_state(seed=2, n=32)
    cfg = SolverConfig(dt=1e-4, T=5e-3, snap_every=10,
                       resolution_factor=0.1)
    snap_dir = tmp_path / "snaps"
    snap_dir.mkdir()
    traj = run(u0, cfg, well, snapshot_dir=str(snap_dir))
    csv_path = tmp_path / "traj.csv"
    traj.to_csv(str(csv_path))
    with open(csv_path) as fh:
        rows = list(csv.reader(fh))
    assert rows[0] == list(Trajectory.COLUMNS)
    assert len(rows) - 1 == len(traj.rows)
    # full precision round-trip
    assert float(rows[1][2]) == traj.rows[0][2]
    meta_path = tmp_path / "meta.json"
    traj.save_metadata(str(meta_path), extra={"note": "x"})
    meta = json.loads(meta_path.read_text())
    assert meta["config"]["dt"] == 1e-4
    assert meta["note"] == "x"
    assert len(list(snap_dir.glob("snap_*.fchb"))) == len(traj.snapshots)


def test_hooks_called_each_sample(well):
    u0 = smooth_state(seed=3, n=32)
    cfg = SolverConfig(dt=1e-4, T=2e-3, snap_every=5,
                       resolution_factor=0.1)
    seen = []
    run(u0, cfg, well, hooks=[lambda u, row: seen.append(row["t"])])
    assert len(seen) >= 3
    assert seen == sorted(seen)
