"""Config-driven experiment runner.

One experiment per invocation; a plain `key = value` config file supplies
parameters, command-line flags override file values, and every run writes
a summary.json with all measured constants and pass/fail flags next to its
CSV / snapshot artifacts.  All randomness goes through one seeded
generator recorded in the summary, so reruns with the same seed produce
bit-identical CSV diagnostics.

Exit codes: 0 success, 2 configuration error (including an inadmissible
spectral cutoff, reported as SetsOverlap), 1 any other toolkit error
(machine-readable error.json emitted either way).
"""

import argparse
import ast
import json
import os
import sys
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from . import __version__
from .ansatz import AnsatzParams, assemble_Phi, pi0, read_snapshot, \
    residual, write_snapshot
from .curveflow import CurveParams, CurveState, compare_with_pde, \
    run_circle, run_curve
from .errors import FchkitError, SetsOverlap
from .geometry import BaseCurve, MeanderVector, build_interface
from .modulation import ModulationContext, ModulationSeries, decompose, \
    project
from .pdesolver import SolverConfig, run
from .potential import WellSpec
from .profile1d import build_profiles
from .slowspace import apply_linearization, assemble_Mstar, build_basis, \
    build_index_sets, fast_coercivity_probe, h2in_norm, \
    mode_matrix_prediction, pearling_coercivity


class ConfigError(FchkitError):
    pass


# --- configuration -------------------------------------------------------------

DEFAULTS = {
    "experiment": None,
    "gamma": 0.3,
    "eta1": 1.0,
    "eta2": 2.0,
    "epsilon": [0.2, 0.141, 0.1],
    "rho_factor": 0.1,          # rho = rho_factor * lam0^2
    "sigma": 0.15,
    "sigma_offset": 0.0,        # sigma = sigma1* + offset where applicable
    "sigma_lift": 0.15,         # initial bulk lift for pde-vs-curve
    "M0": None,
    "R0": 2.0,
    "n": None,                  # grid size; None = from epsilon
    "L": 2.0 * np.pi,
    "ell": 0.9,
    "dt": 2e-4,
    "T": 1.0,
    "seed": 0,
    "out": "out",
    "threads": 1,
    "p_modes": "",              # e.g. "3:0.04,6:0.03"
    "amplitude": 0.0,           # initial perturbation amplitude (pde-run)
    "snap_every": None,
    "kmax": 8,
    "resolution_factor": 2.0,
}

_CASTS = {
    "experiment": str, "out": str, "p_modes": str,
    "seed": int, "threads": int, "kmax": int,
}


def _cast(key, value):
    if key not in DEFAULTS:
        raise ConfigError("unknown config key %r" % key)
    if value is None or (isinstance(value, str) and value == "None"):
        return None
    if key == "epsilon":
        if isinstance(value, str):
            value = [float(v) for v in value.split(",") if v]
        elif np.isscalar(value):
            value = [float(value)]
        return [float(v) for v in value]
    if key in _CASTS:
        return _CASTS[key](value)
    if key in ("n", "snap_every"):
        return int(value)
    return float(value)


def load_config(path):
    cfg = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError("%s:%d: expected key = value" %
                                  (path, lineno))
            key, _, raw = line.partition("=")
            key = key.strip()
            raw = raw.strip()
            try:
                value = ast.literal_eval(raw)
            except (ValueError, SyntaxError):
                value = raw
            cfg[key] = _cast(key, value)
    return cfg


def merge_config(file_cfg, args):
    cfg = dict(DEFAULTS)
    cfg.update(file_cfg)
    for key in ("experiment", "out", "seed", "epsilon", "threads"):
        v = getattr(args, key.replace("-", "_"), None)
        if v is not None:
            cfg[key] = _cast(key, v)
    if cfg["experiment"] not in EXPERIMENTS:
        raise ConfigError("unknown experiment %r (choose from %s)"
                          % (cfg["experiment"],
                             ", ".join(sorted(EXPERIMENTS))))
    return cfg


def _grid_n(cfg, eps):
    if cfg["n"] is not None:
        return cfg["n"]
    n = 64
    while 2.0 * cfg["L"] / n > eps / cfg["resolution_factor"]:
        n *= 2
    return n


def _setup(cfg):
    well = WellSpec(gamma=cfg["gamma"])
    profiles = build_profiles(well, eta1=cfg["eta1"], eta2=cfg["eta2"])
    # validate the cutoff once, at the largest epsilon (SetsOverlap -> exit 2)
    rho = cfg["rho_factor"] * profiles.lam0**2
    build_index_sets(max(cfg["epsilon"]), rho, profiles.lam0, R0=cfg["R0"])
    return well, profiles, rho


def _parse_p(cfg, N1):
    p = np.zeros(N1)
    if cfg["p_modes"]:
        for item in cfg["p_modes"].split(","):
            j, _, val = item.partition(":")
            p[int(j)] = float(val)
    return MeanderVector(p)


def _circle_Phi(cfg, profiles, eps, sigma=None, M0=None, p=None):
    n = _grid_n(cfg, eps)
    base = BaseCurve.circle(cfg["R0"], 512)
    iset = build_index_sets(eps, cfg["rho_factor"] * profiles.lam0**2,
                            profiles.lam0, R0=cfg["R0"])
    pvec = p if p is not None else MeanderVector(np.zeros(iset.N1))
    interface = build_interface(base, pvec)
    params = AnsatzParams(pvec, eps, M0=M0, sigma=sigma, ell=cfg["ell"],
                          L=cfg["L"], n=n,
                          resolution_factor=cfg["resolution_factor"])
    Phi, sig, frame = assemble_Phi(params, profiles, interface)
    return base, iset, interface, Phi, sig, frame


def _write_csv(path, columns, rows):
    with open(path, "w") as fh:
        fh.write(",".join(columns) + "\n")
        for r in rows:
            fh.write(",".join("%.17g" % v for v in r) + "\n")


# --- experiments ---------------------------------------------------------------

def exp_residual_scaling(cfg, out):
    well, profiles, rho = _setup(cfg)
    sigma = profiles.sigma1_star + cfg["sigma_offset"]

    def one(eps):
        _, _, _, Phi, sig, _ = _circle_Phi(cfg, profiles, eps, sigma=sigma)
        _, rn = residual(Phi, well, cfg["eta1"], cfg["eta2"])
        return rn

    eps_list = cfg["epsilon"]
    with ThreadPoolExecutor(max_workers=max(cfg["threads"], 1)) as pool:
        norms = list(pool.map(one, eps_list))
    slope = float(np.polyfit(np.log(eps_list), np.log(norms), 1)[0])
    _write_csv(os.path.join(out, "residual_scaling.csv"),
               ("epsilon", "res_norm"), list(zip(eps_list, norms)))
    return {"epsilon": eps_list, "res_norm": [float(v) for v in norms],
            "slope": slope, "sigma": float(sigma),
            "sigma_offset": cfg["sigma_offset"]}


def exp_pearling_spectrum(cfg, out):
    well, profiles, rho = _setup(cfg)
    eps = cfg["epsilon"][0]
    base, iset, interface, Phi, sig, frame = _circle_Phi(
        cfg, profiles, eps, sigma=cfg["sigma"])
    basis = build_basis(iset, profiles, interface, eps, sigma=sig,
                        ell=cfg["ell"], L=cfg["L"], n=Phi.n_x, frame=frame)
    M = assemble_Mstar(basis, Phi, well, cfg["eta1"], cfg["eta2"])
    pred = mode_matrix_prediction(iset, profiles, sig)
    margin = profiles.pearling_margin(sig)
    co = pearling_coercivity(M, eps, margin)
    M.save_csv(os.path.join(out, "mode_matrix.csv"))
    _write_csv(os.path.join(out, "pearling_eigenvalues.csv"),
               ("index", "eigenvalue"),
               list(enumerate(co["eigenvalues"])))
    # class-wise l2 relative error (single meander entries can have
    # Lam ~ 0, so per-entry relative errors are not meaningful there)
    d = np.diag(M.M)
    n0 = iset.N0
    err0 = np.linalg.norm(d[:n0] - pred[:n0]) / np.linalg.norm(pred[:n0])
    err1 = np.linalg.norm(d[n0:] - pred[n0:]) / np.linalg.norm(pred[n0:])
    return {"epsilon": eps, "sigma": float(sig), "N0": iset.N0,
            "N1": iset.N1, "min_eig": co["min_eig"],
            "threshold": co["threshold"], "passed": co["passed"],
            "margin": float(margin), "asymmetry": M.asymmetry(),
            "diag_rel_err_pearling": float(err0),
            "diag_rel_err_meander": float(err1)}


def exp_coupling_decay(cfg, out):
    well, profiles, rho = _setup(cfg)
    p_modes = cfg["p_modes"] or "3:0.04,6:0.03"

    def one(eps):
        n = _grid_n(cfg, eps)
        base = BaseCurve.circle(cfg["R0"], 512)
        iset = build_index_sets(eps, rho, profiles.lam0, R0=cfg["R0"])
        p = np.zeros(iset.N1)
        for item in p_modes.split(","):
            j, _, val = item.partition(":")
            p[int(j)] = float(val)
        interface = build_interface(base, MeanderVector(p))
        params = AnsatzParams(MeanderVector(p), eps, sigma=cfg["sigma"],
                              ell=cfg["ell"], L=cfg["L"], n=n,
                              resolution_factor=cfg["resolution_factor"])
        Phi, sig, frame = assemble_Phi(params, profiles, interface)
        basis = build_basis(iset, profiles, interface, eps, sigma=sig,
                            ell=cfg["ell"], L=cfg["L"], n=n, frame=frame)
        M = assemble_Mstar(basis, Phi, well, cfg["eta1"], cfg["eta2"])
        G = basis.gram()
        n0 = iset.N0
        return (float(np.linalg.norm(M.block(0, 1), 2)),
                float(np.linalg.norm(G[:n0, n0:], 2)))

    eps_list = cfg["epsilon"]
    with ThreadPoolExecutor(max_workers=max(cfg["threads"], 1)) as pool:
        res = list(pool.map(one, eps_list))
    cross_M = [r[0] for r in res]
    cross_G = [r[1] for r in res]
    slope_M = float(np.polyfit(np.log(eps_list), np.log(cross_M), 1)[0])
    slope_G = float(np.polyfit(np.log(eps_list), np.log(cross_G), 1)[0])
    _write_csv(os.path.join(out, "coupling_decay.csv"),
               ("epsilon", "cross_M", "cross_gram"),
               [(e, m, g) for e, m, g in zip(eps_list, cross_M, cross_G)])
    return {"epsilon": eps_list, "cross_M": cross_M,
            "cross_gram": cross_G, "slope_M": slope_M,
            "slope_gram": slope_G, "p_modes": p_modes}


def exp_coercivity_probe(cfg, out):
    well, profiles, rho = _setup(cfg)
    eps = cfg["epsilon"][0]
    base, iset, interface, Phi, sig, frame = _circle_Phi(
        cfg, profiles, eps, sigma=cfg["sigma"])
    basis = build_basis(iset, profiles, interface, eps, sigma=sig,
                        ell=cfg["ell"], L=cfg["L"], n=Phi.n_x, frame=frame)
    rep = fast_coercivity_probe(Phi, basis, well, cfg["eta1"], cfg["eta2"],
                                rho, seed=cfg["seed"])
    rep.update({"epsilon": eps, "sigma": float(sig), "rho": float(rho)})
    return rep


def _initial_field(cfg, profiles, eps, rng):
    from scipy.fft import fft2, ifft2
    sigma = None if cfg["M0"] is not None else cfg["sigma"]
    base, iset, interface, Phi, sig, frame = _circle_Phi(
        cfg, profiles, eps, sigma=sigma, M0=cfg["M0"],
        p=_parse_p(cfg, build_index_sets(
            eps, cfg["rho_factor"] * profiles.lam0**2, profiles.lam0,
            R0=cfg["R0"]).N1))
    u0 = Phi.copy()
    if cfg["amplitude"] > 0.0:
        noise = rng.standard_normal(Phi.values.shape)
        noise = np.real(ifft2(fft2(noise) * np.exp(-0.5 * Phi.k2_grid())))
        noise = pi0(noise)
        u0.values = Phi.values + cfg["amplitude"] * noise \
            / h2in_norm(Phi, noise)
    return base, iset, interface, Phi, sig, frame, u0


def exp_pde_run(cfg, out):
    well, profiles, rho = _setup(cfg)
    eps = cfg["epsilon"][0]
    rng = np.random.default_rng(cfg["seed"])
    _, _, _, Phi, sig, _, u0 = _initial_field(cfg, profiles, eps, rng)
    scfg = SolverConfig(dt=cfg["dt"], T=cfg["T"], eta1=cfg["eta1"],
                        eta2=cfg["eta2"], snap_every=cfg["snap_every"],
                        resolution_factor=cfg["resolution_factor"])
    snapdir = os.path.join(out, "snapshots")
    os.makedirs(snapdir, exist_ok=True)
    traj = run(u0, scfg, well, snapshot_dir=snapdir)
    traj.to_csv(os.path.join(out, "trajectory.csv"))
    traj.save_metadata(os.path.join(out, "run_meta.json"),
                       extra={"epsilon": eps, "sigma": float(sig)})
    rows = np.array(traj.rows)
    return {"epsilon": eps, "sigma": float(sig), "steps": len(rows),
            "mass_drift": float(np.max(np.abs(rows[:, 1] - rows[0, 1]))),
            "energy_initial": float(rows[0, 2]),
            "energy_final": float(rows[-1, 2]),
            "energy_monotone": bool(np.all(np.diff(rows[:, 2])
                                           <= 1e-10 * np.abs(rows[:-1, 2]))),
            "snapshots": len(traj.snapshots)}


def exp_project_trajectory(cfg, out):
    well, profiles, rho = _setup(cfg)
    eps = cfg["epsilon"][0]
    rng = np.random.default_rng(cfg["seed"])
    base, iset, interface, Phi, sig, frame, u0 = _initial_field(
        cfg, profiles, eps, rng)
    M0 = Phi.integrate(Phi.values - well.b_minus) / eps
    scfg = SolverConfig(dt=cfg["dt"], T=cfg["T"], eta1=cfg["eta1"],
                        eta2=cfg["eta2"], snap_every=cfg["snap_every"],
                        resolution_factor=cfg["resolution_factor"])
    traj = run(u0, scfg, well)
    ctx = ModulationContext(profiles, base, iset, M0, eps, ell=cfg["ell"],
                            L=cfg["L"], n=Phi.n_x, fd_step=1e-6,
                            resolution_factor=cfg["resolution_factor"])
    series = ModulationSeries()
    p_guess = None
    budget0 = None
    peak_q = peak_lw = 0.0
    for t, snap in traj.snapshots:
        res = project(snap, ctx, p_init=p_guess)
        p_guess = res.p
        dec = decompose(snap, res)
        Lw, _ = apply_linearization(dec.w, res.Phi, well, cfg["eta1"],
                                    cfg["eta2"])
        lww = res.Phi.inner(Lw, dec.w)
        w_n = h2in_norm(res.Phi, dec.w)
        series.append(t, res.p, res.sigma, dec.q_norm, w_n, lww)
        if budget0 is None:
            budget0 = {"q": dec.q_norm, "lww": abs(lww)}
        peak_q = max(peak_q, dec.q_norm)
        peak_lw = max(peak_lw, abs(lww))
    series.to_csv(os.path.join(out, "modulation.csv"))
    shape = eps**2.5 / rho**2
    return {"epsilon": eps, "samples": len(series.rows),
            "initial_q": budget0["q"], "peak_q": peak_q,
            "initial_lww": budget0["lww"], "peak_lww": peak_lw,
            "budget_q": 10.0 * (budget0["q"] + shape),
            "budget_lww": 10.0 * (budget0["lww"] + shape),
            "within_budget": bool(peak_q <= 10.0 * (budget0["q"] + shape)
                                  and peak_lw <= 10.0 * (budget0["lww"]
                                                         + shape))}


def exp_curve_flow(cfg, out):
    well, profiles, rho = _setup(cfg)
    eps = cfg["epsilon"][0]
    omega = (2.0 * cfg["L"]) ** 2
    M0 = cfg["M0"]
    if M0 is None:
        sig0 = profiles.sigma1_star + cfg["sigma_lift"]
        M0 = 2.0 * np.pi * profiles.m0 * cfg["R0"] \
            + profiles.B2_infty * omega * sig0
    par = CurveParams(profiles, M0, omega, eps)
    tau, R, sig = run_circle(cfg["R0"], par, cfg["dt"], cfg["T"])
    _write_csv(os.path.join(out, "circle_ode.csv"),
               ("tau", "R", "sigma"), list(zip(tau, R, sig)))
    state = CurveState.circle(cfg["R0"], par, n=256)
    p = _parse_p(cfg, cfg["kmax"] + 1)
    for j in range(3, p.N1):
        if p.p[j]:
            k = (j + 1) // 2
            state.r += p.p[j] * np.cos(k * state.theta)
    traj = run_curve(state, cfg["dt"], cfg["T"], kmax=cfg["kmax"])
    traj.to_csv(os.path.join(out, "curve_flow.csv"))
    return {"epsilon": eps, "M0": float(M0), "R_star": par.R_star(),
            "R_final_ode": float(R[-1]),
            "R_final_curve": traj.final.R_equiv(),
            "sigma_final": float(sig[-1])}


def radius_trace(traj):
    """Interface radius per snapshot of a centered, star-shaped state.

    Along the four axis rays from the grid center the interface shows as a
    ridge; the midpoint level is crossed once inside and once outside of the
    ridge peak, and the average of the two crossings locates the bilayer
    midline without the O(eps) offset a single crossing (or a first-moment
    estimate) would carry.
    """
    ts, Rs = [], []
    for t, snap in traj.snapshots:
        if isinstance(snap, str):
            snap = read_snapshot(snap)
        u = snap.values
        x, _ = snap.axes()
        c = snap.n_x // 2
        mid = 0.5 * (u.max() + u.min())
        r = x[c:] - x[c]
        rays = (u[c:, c], u[:c + 1, c][::-1], u[c, c:], u[c, :c + 1][::-1])
        vals = []
        for row in rays:
            i = np.argmax(row)
            j = i + np.argmax(row[i:] < mid)
            ro = r[j - 1] + (mid - row[j - 1]) / (row[j] - row[j - 1]) \
                * (r[j] - r[j - 1])
            k = i - np.argmax(row[:i + 1][::-1] < mid)
            ri = r[k] + (mid - row[k]) / (row[k + 1] - row[k]) \
                * (r[k + 1] - r[k])
            vals.append(0.5 * (ri + ro))
        Rs.append(float(np.mean(vals)))
        ts.append(t)
    return np.array(ts), np.array(Rs)


def exp_pde_vs_curve(cfg, out):
    well, profiles, rho = _setup(cfg)
    eps = cfg["epsilon"][0]
    omega = (2.0 * cfg["L"]) ** 2
    sig0 = profiles.sigma1_star + cfg["sigma_lift"]
    M0 = 2.0 * np.pi * profiles.m0 * cfg["R0"] \
        + profiles.B2_infty * omega * sig0
    base, iset, interface, Phi, sig, frame = _circle_Phi(
        cfg, profiles, eps, M0=M0)
    scfg = SolverConfig(dt=cfg["dt"], T=cfg["T"], eta1=cfg["eta1"],
                        eta2=cfg["eta2"], snap_every=cfg["snap_every"],
                        resolution_factor=cfg["resolution_factor"])
    snap_dir = os.path.join(out, "snapshots")
    os.makedirs(snap_dir, exist_ok=True)
    traj = run(Phi, scfg, well, snapshot_dir=snap_dir)
    traj.to_csv(os.path.join(out, "pde_trajectory.csv"))
    t_pde, R_pde = radius_trace(traj)

    par = CurveParams(profiles, M0, omega, eps)
    # curve flow in tau, long enough to cover any calibration
    tau_end = 50.0 * max(abs(par.R_star() - cfg["R0"]), 0.1) \
        / max(abs(sig0 - profiles.sigma1_star), 1e-3)
    tau, R_curve, _ = run_circle(R_pde[0], par, 1e-3, tau_end)
    c_t, dev, _ = compare_with_pde(t_pde, R_pde, tau, R_curve)
    _write_csv(os.path.join(out, "radius_comparison.csv"),
               ("t", "R_pde", "R_curve"),
               [(t, rp, np.interp(c_t * t, tau, R_curve))
                for t, rp in zip(t_pde, R_pde)])
    return {"epsilon": eps, "M0": float(M0), "sigma_initial": float(sig0),
            "R_star": par.R_star(), "c_t": c_t,
            "max_rel_deviation": dev,
            "R_pde_final": float(R_pde[-1]),
            "R_curve_final": float(R_curve[-1])}


EXPERIMENTS = {
    "residual-scaling": exp_residual_scaling,
    "pearling-spectrum": exp_pearling_spectrum,
    "coupling-decay": exp_coupling_decay,
    "coercivity-probe": exp_coercivity_probe,
    "pde-run": exp_pde_run,
    "project-trajectory": exp_project_trajectory,
    "curve-flow": exp_curve_flow,
    "pde-vs-curve": exp_pde_vs_curve,
}


# --- entry point ---------------------------------------------------------------

def run_experiment(cfg):
    out = cfg["out"]
    os.makedirs(out, exist_ok=True)
    fn = EXPERIMENTS[cfg["experiment"]]
    summary = fn(cfg, out)
    summary["experiment"] = cfg["experiment"]
    summary["seed"] = cfg["seed"]
    summary["version"] = __version__
    summary["config"] = {k: v for k, v in cfg.items() if v is not None}
    with open(os.path.join(out, "summary.json"), "w") as fh:
        json.dump(summary, fh, indent=2, default=float)
        fh.write("\n")
    return summary


def main(argv=None):
    ap = argparse.ArgumentParser(
        prog="fchkit", description="bilayer-interface experiment runner")
    ap.add_argument("--config", help="key = value parameter file")
    ap.add_argument("--experiment", help="experiment name")
    ap.add_argument("--out", help="output directory")
    ap.add_argument("--seed", type=int, help="RNG seed")
    ap.add_argument("--epsilon", help="comma-separated epsilon list")
    ap.add_argument("--threads", type=int, help="parallel workers")
    args = ap.parse_args(argv)

    try:
        file_cfg = load_config(args.config) if args.config else {}
        cfg = merge_config(file_cfg, args)
    except (ConfigError, SetsOverlap, OSError) as exc:
        _emit_error(None, exc)
        return 2

    try:
        run_experiment(cfg)
    except (ConfigError, SetsOverlap) as exc:
        _emit_error(cfg, exc)
        return 2
    except FchkitError as exc:
        _emit_error(cfg, exc)
        return 1
    return 0


def _emit_error(cfg, exc):
    payload = {"error": type(exc).__name__, "message": str(exc)}
    sys.stderr.write(json.dumps(payload) + "\n")
    if cfg and cfg.get("out"):
        try:
            os.makedirs(cfg["out"], exist_ok=True)
            with open(os.path.join(cfg["out"], "error.json"), "w") as fh:
                json.dump(payload, fh, indent=2)
                fh.write("\n")
        except OSError:
            pass


if __name__ == "__main__":
    sys.exit(main())
