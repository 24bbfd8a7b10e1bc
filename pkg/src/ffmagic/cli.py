"""Command-line runner: quench / monitor / noclick / gge / analyze / oracle.

Each simulation command consumes one JSON configuration file, writes its
outputs under ``<out>/<run-id>/`` (run-id = timestamp + config hash) and
records a manifest sufficient to reproduce the run.  Exit codes: 0 success,
2 configuration error, 3 input-schema error, 4 numerical failure.
"""

from __future__ import annotations

import argparse
import glob
import math
import os
import re
import sys
import time

import numpy as np

from .config import RunConfig, WindowSpec, config_from_manifest, load_config, write_manifest
from .errors import ConfigError, FfmagicError, SchemaError
from .gaussian import CLAMP_EVENTS
from .gge import GgeSpec, gge_sre
from .monitoring import (
    TrajectoryParams,
    read_ensemble_csv,
    run_ensemble,
    snapshot_schedule,
    write_ensemble_csv,
    write_trajectory_jsonl,
)
from .scaling import (
    StationaryValue,
    fit_scaling,
    log_coefficient_curve,
    relaxation_profile,
    time_average,
)

_ENSEMBLE_RE = re.compile(r"ensemble_L(\d+)_g([0-9.eE+-]+)\.csv$")


def _fmt(x: float) -> str:
    return f"{x:.17g}"


# ---------------------------------------------------------------------------
# Simulation commands
# ---------------------------------------------------------------------------

def _run_suite(cfg: RunConfig, command: str) -> str:
    run_id = cfg.run_id()
    outdir = os.path.join(cfg.output_root(), run_id)
    os.makedirs(outdir, exist_ok=True)
    traj_dir = os.path.join(outdir, "trajectories")
    CLAMP_EVENTS.reset()
    t0 = time.time()
    outputs: list[str] = []
    seeds: dict[str, list[int]] = {}
    excluded = 0
    for L in cfg.L:
        occ = cfg.initial_occupation(L)
        window = cfg.resolved_window(L)
        t_max = cfg.resolved_t_max(L)
        times = snapshot_schedule(t_max, cfg.dt, window=window,
                                  n_ramp=cfg.n_ramp_snapshots,
                                  n_window=cfg.n_window_snapshots)
        for g in cfg.gamma:
            params = TrajectoryParams(
                L=L, gamma=g, dt=cfg.dt, snapshot_times=times, initial_occ=occ,
                alphas=tuple(cfg.alpha), samples=cfg.samples, h=cfg.h, J=cfg.J,
                recompute_every=cfg.recompute_every, subsystem=cfg.subsystem)
            series, records = run_ensemble(cfg.protocol, params, cfg.n_traj,
                                           cfg.master_seed, n_workers=cfg.threads)
            name = f"ensemble_L{L}_g{g:g}.csv"
            write_ensemble_csv(os.path.join(outdir, name), series)
            outputs.append(name)
            seeds[f"L{L}_g{g:g}"] = [int(s) for s in series.trajectory_seeds]
            excluded += series.excluded
            if cfg.save_trajectories:
                os.makedirs(traj_dir, exist_ok=True)
                for rec in records:
                    write_trajectory_jsonl(
                        os.path.join(traj_dir, f"L{L}_g{g:g}_{rec.trajectory_id}.jsonl"), rec)
    warnings = {"clamp_events": CLAMP_EVENTS.reset(),
                "excluded_trajectories": excluded}
    write_manifest(os.path.join(outdir, "manifest.json"), cfg, command=command,
                   run_id=run_id, trajectory_seeds=seeds,
                   wall_clock=time.time() - t0, warnings=warnings, outputs=outputs)
    print(outdir)
    return outdir


def cmd_quench(cfg: RunConfig) -> str:
    if any(g != 0.0 for g in cfg.gamma):
        raise ConfigError("quench requires gamma = [0]; use 'monitor' for gamma > 0")
    if cfg.protocol == "ising-noclick":
        raise ConfigError("use the 'noclick' command for the no-click protocol")
    cfg.gamma = [0.0]
    cfg.n_traj = 1
    return _run_suite(cfg, "quench")


def cmd_monitor(cfg: RunConfig) -> str:
    if not any(g > 0.0 for g in cfg.gamma):
        raise ConfigError("monitor requires at least one gamma > 0")
    if cfg.protocol == "ising-noclick":
        raise ConfigError("use the 'noclick' command for the no-click protocol")
    return _run_suite(cfg, "monitor")


def cmd_noclick(cfg: RunConfig) -> str:
    if cfg.protocol != "ising-noclick":
        raise ConfigError("noclick requires protocol = 'ising-noclick'")
    return _run_suite(cfg, "noclick")


def cmd_gge(cfg: RunConfig) -> str:
    spec = cfg.gge or {}
    unknown = sorted(set(spec) - {"n", "ell", "alpha"})
    if unknown:
        raise ConfigError(f"unknown gge keys: {', '.join(unknown)}")
    ns = [float(v) for v in spec.get("n", [0.0, 0.25, 0.5])]
    ells = [int(v) for v in spec.get("ell", list(range(1, 33)))]
    alphas = [float(v) for v in spec.get("alpha", [1.0, 2.0])]
    run_id = cfg.run_id()
    outdir = os.path.join(cfg.output_root(), run_id)
    os.makedirs(outdir, exist_ok=True)
    path = os.path.join(outdir, "gge.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("n,ell,alpha,value\n")
        for n in ns:
            for ell in ells:
                for a in alphas:
                    val = gge_sre(GgeSpec(n=n, ell=ell), a)
                    fh.write(f"{_fmt(n)},{ell},{_fmt(a)},{_fmt(val)}\n")
    write_manifest(os.path.join(outdir, "manifest.json"), cfg, command="gge",
                   run_id=run_id, trajectory_seeds={}, wall_clock=0.0,
                   warnings={}, outputs=["gge.csv"])
    print(outdir)
    return outdir


# ---------------------------------------------------------------------------
# Analysis
# ---------------------------------------------------------------------------

def _load_run(run_dir: str):
    paths = sorted(glob.glob(os.path.join(run_dir, "ensemble_L*_g*.csv")))
    if not paths:
        raise ConfigError(f"no ensemble CSVs found in {run_dir}")
    data = {}
    for p in paths:
        m = _ENSEMBLE_RE.search(os.path.basename(p))
        if not m:
            raise SchemaError(f"cannot parse L and gamma from file name {p}")
        data[(int(m.group(1)), float(m.group(2)))] = read_ensemble_csv(p)
    return data


def cmd_analyze(cfg: RunConfig) -> str:
    spec = cfg.analyze or {}
    unknown = sorted(set(spec) - {"run_dir", "window", "include_inverse", "out", "relaxation"})
    if unknown:
        raise ConfigError(f"unknown analyze keys: {', '.join(unknown)}")
    run_dir = spec.get("run_dir")
    if not run_dir:
        raise ConfigError("analyze.run_dir is required")
    data = _load_run(run_dir)

    if "window" in spec and spec["window"] is not None:
        w = spec["window"]
        window_spec = WindowSpec(kind=w.get("kind", "fraction"),
                                 lo=float(w["lo"]), hi=float(w["hi"]))
        window_spec.validate()
        window_of = window_spec.resolve
    else:
        manifest_path = os.path.join(run_dir, "manifest.json")
        if not os.path.exists(manifest_path):
            raise ConfigError("analyze.window is required when the run has no manifest")
        run_cfg = config_from_manifest(manifest_path)
        window_of = run_cfg.resolved_window

    outdir = spec.get("out", run_dir)
    os.makedirs(outdir, exist_ok=True)
    include_inverse = bool(spec.get("include_inverse", False))

    stationary: list[StationaryValue] = []
    for (L, g), series in sorted(data.items()):
        window = window_of(L)
        for a in series.alphas:
            stationary.append(time_average(series.times, series.mean[a],
                                           series.stderr[a], window,
                                           L=L, alpha=a, gamma=g))
    outputs = []
    path = os.path.join(outdir, "stationary.csv")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("L,alpha,gamma,mean,error,window_lo,window_hi\n")
        for v in stationary:
            fh.write(f"{v.L},{_fmt(v.alpha)},{_fmt(v.gamma)},{_fmt(v.mean)},"
                     f"{_fmt(v.error)},{_fmt(v.window[0])},{_fmt(v.window[1])}\n")
    outputs.append("stationary.csv")

    groups: dict[tuple[float, float], list[StationaryValue]] = {}
    for v in stationary:
        groups.setdefault((v.alpha, v.gamma), []).append(v)
    fit_rows = []
    for (a, g), vals in sorted(groups.items()):
        if len({v.L for v in vals}) >= 4:
            fit_rows.append(fit_scaling(sorted(vals, key=lambda v: v.L),
                                        include_inverse=include_inverse))
    if fit_rows:
        path = os.path.join(outdir, "fits.csv")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("alpha,gamma,a,b,c,sigma_a,sigma_b,sigma_c,L_min,L_max\n")
            for f in fit_rows:
                fh.write(f"{_fmt(f.alpha)},{_fmt(f.gamma)},{_fmt(f.a)},{_fmt(f.b)},"
                         f"{_fmt(f.c)},{_fmt(f.sigma_a)},{_fmt(f.sigma_b)},{_fmt(f.sigma_c)},"
                         f"{min(f.L_values)},{max(f.L_values)}\n")
        outputs.append("fits.csv")

    by_alpha: dict[float, dict[float, list[StationaryValue]]] = {}
    for v in stationary:
        by_alpha.setdefault(v.alpha, {}).setdefault(v.gamma, []).append(v)
    brows = []
    for a, per_gamma in sorted(by_alpha.items()):
        usable = {g: vals for g, vals in per_gamma.items()
                  if len([L for L in {v.L for v in vals}
                          if 2 * L in {v.L for v in vals}]) >= 2}
        if usable:
            brows.extend(log_coefficient_curve(usable))
    if brows:
        path = os.path.join(outdir, "bcurve.csv")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("alpha,gamma,b,sigma_b,zero_compatible,n_pairs\n")
            for r in brows:
                fh.write(f"{_fmt(r.alpha)},{_fmt(r.gamma)},{_fmt(r.b)},{_fmt(r.sigma_b)},"
                         f"{int(r.zero_compatible)},{r.n_pairs}\n")
        outputs.append("bcurve.csv")

    relax = spec.get("relaxation")
    if relax:
        L = int(relax["L"])
        g = float(relax.get("gamma", 0.0))
        a = float(relax.get("alpha", 1.0))
        series = data[(L, g)]
        key = [v for v in stationary if v.L == L and v.alpha == a and v.gamma == g]
        if "stationary" in relax:
            stat = StationaryValue(L=L, alpha=a, gamma=g,
                                   mean=float(relax["stationary"]), error=0.0,
                                   window=window_of(L))
        else:
            stat = key[0]
        size = int(relax.get("size", L))
        prof = relaxation_profile(
            series.times, series.mean[a], stat, size,
            loglinear_window=tuple(relax["loglinear_window"]) if "loglinear_window" in relax else None,
            loglog_window=tuple(relax["loglog_window"]) if "loglog_window" in relax else None)
        path = os.path.join(outdir, "relaxation.csv")
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            fh.write("L,alpha,gamma,loglinear_slope,loglinear_stderr,"
                     "loglog_slope,loglog_stderr,excluded,flipped\n")
            fh.write(f"{L},{_fmt(a)},{_fmt(g)},{_fmt(prof.loglinear_slope)},"
                     f"{_fmt(prof.loglinear_stderr)},{_fmt(prof.loglog_slope)},"
                     f"{_fmt(prof.loglog_stderr)},{prof.excluded},{int(prof.flipped)}\n")
        outputs.append("relaxation.csv")

    print(outdir)
    return outdir


# ---------------------------------------------------------------------------
# Dense validation suite
# ---------------------------------------------------------------------------

def cmd_oracle() -> int:
    """Fast dense cross-checks; prints one pass/fail line per check."""
    from . import gaussian as G, models as M, monitoring as MO, oracle as O, sampler as SA
    from .rng import philox

    failures = 0

    def check(name: str, ok: bool) -> None:
        nonlocal failures
        print(f"[{'PASS' if ok else 'FAIL'}] {name}")
        failures += 0 if ok else 1

    est = SA.estimate_sre(G.build_vacuum(16), 2, 64, philox(1))
    check("vacuum has zero magic and zero variance",
          abs(est.value) < 1e-9 and est.std_error < 1e-9)

    rng = np.random.default_rng(0)
    L = 3
    seq = O.random_givens_sequence(L, 12, rng)
    psi = O.basis_state([1, 0, 0])
    st = G.build_occupation_product([1, 0, 0])
    for (a, b, th) in seq:
        psi = O.givens_unitary(L, a, b, th) @ psi
        st = G.rotate(st, O.givens_rotation_matrix(2 * L, a, b, th))
    rho = O.density_matrix(psi)
    probs = SA.enumerate_string_probabilities(st)
    check("string distribution normalized", abs(probs.sum() - 1.0) < 1e-9)
    ok = all(abs(SA.exact_sre_enumeration(st, a) - O.sre_exact(rho, L, a)) < 1e-8
             for a in (1, 2))
    check("enumerated SREs match dense Hilbert space", ok)

    model = M.HoppingModel(4)
    st4 = model.evolve(G.build_occupation_product([1, 0, 1, 0]), 0.7)
    psi4 = O.evolve(O.basis_state([1, 0, 1, 0]), O.hopping_hamiltonian(4), 0.7)
    gd = O.covariance_of(O.density_matrix(psi4), 4)
    check("hopping propagation matches dense", np.max(np.abs(st4.gamma - gd)) < 1e-8)

    ising = M.IsingModel(3, h=0.5)
    sti = ising.evolve(G.build_occupation_product([0, 1, 0]), 0.2, parity=-1)
    psi3 = O.evolve(O.basis_state([0, 1, 0]), O.tfim_hamiltonian(3, 0.5), 0.2)
    gd3 = O.covariance_of(O.density_matrix(psi3), 3)
    check("Ising propagation matches dense", np.max(np.abs(sti.gamma - gd3)) < 1e-8)

    ok = True
    for outcome in (0, 1):
        g_new = MO._conditioned_update(st4.gamma, 1, outcome)
        psi_p = O.project_occupation(psi4, 4, 1, outcome)
        gd = O.covariance_of(O.density_matrix(psi_p), 4)
        ok = ok and np.max(np.abs(g_new - gd)) < 1e-8
    check("projective measurement matches dense", ok)

    gen = M.noclick_generator(M.IsingModel(3, h=0.0, boundary="open"), 1.0)
    U = M.occupation_mode_matrix([0, 0, 0])
    for _ in range(40):
        U = M.evolve_noclick(U, gen, 0.01)
    psi_nc = O.evolve(O.basis_state([0, 0, 0]), O.noclick_hamiltonian(3, 1.0, 1.0),
                      0.4, normalize=True)
    gd_nc = O.covariance_of(O.density_matrix(psi_nc), 3)
    check("no-click evolution matches dense",
          np.max(np.abs(M.covariance_from_modes(U) - gd_nc)) < 1e-7)

    return failures


# ---------------------------------------------------------------------------
# Entry point
# ---------------------------------------------------------------------------

def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="ffmagic",
                                     description="Monitored free-fermion magic simulator")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_config in (("quench", True), ("monitor", True), ("noclick", True),
                               ("gge", False), ("analyze", True), ("oracle", False)):
        p = sub.add_parser(name)
        p.add_argument("--config", required=needs_config, help="path to the JSON run configuration")
        if name != "oracle":
            p.add_argument("--seed", type=int, default=None, help="override master_seed")
            p.add_argument("--threads", type=int, default=None, help="worker pool size")
            p.add_argument("--out", default=None, help="output root directory")
    return parser


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "oracle":
            return 4 if cmd_oracle() else 0
        cfg = load_config(args.config) if args.config else RunConfig()
        if getattr(args, "seed", None) is not None:
            cfg.master_seed = args.seed
        if getattr(args, "threads", None) is not None:
            cfg.threads = args.threads
        if getattr(args, "out", None) is not None:
            cfg.out_dir = args.out
        cfg.validate()
        dispatch = {"quench": cmd_quench, "monitor": cmd_monitor,
                    "noclick": cmd_noclick, "gge": cmd_gge, "analyze": cmd_analyze}
        dispatch[args.command](cfg)
        return 0
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except SchemaError as exc:
        print(f"input schema error: {exc}", file=sys.stderr)
        return 3
    except FfmagicError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
