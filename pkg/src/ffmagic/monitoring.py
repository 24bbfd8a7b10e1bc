"""Projective measurements, quantum-trajectory engine, ensemble averaging.

Measurement model: local occupation measurements (hopping chain) and
sigma^z measurements (Ising chain) are both quadratic in Majoranas, so a
projective outcome conditions the Gaussian state on its site pair
``(2k, 2k+1)``.  With ``g = Gamma[2k, 2k+1]`` the Born rule reads
``p(n=1) = <n_k> = (1 - g)/2``, and the post-measurement covariance is the
rank-two update

    Gamma' = Gamma + eps (u v^T - v u^T) / (1 - eps g),   eps = 2n - 1,
    u = Gamma[:, 2k],  v = Gamma[:, 2k+1],

with the measured pair decoupled afterwards (rows/columns zeroed,
``Gamma'[2k, 2k+1] = -eps``).  Correctness is established against the dense
projection oracle rather than against printed formulas.

Scheduling: every step of length dt, each site is measured independently
with probability gamma*dt, measured sites processed in ascending order.
Trajectories draw all randomness from Philox streams keyed by
(master_seed, trajectory, purpose), so ensembles are reproducible under any
worker schedule.
"""

from __future__ import annotations

import json
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigError, FfmagicError
from .gaussian import GaussianState, log_purity
from .models import (
    HoppingModel,
    IsingModel,
    evolve_noclick,
    noclick_generator,
    occupation_mode_matrix,
    state_from_modes,
    state_parity,
)
from .rng import TAG_EVENTS, TAG_RETRY, TAG_SAMPLER, philox, stream_seed
from .sampler import SreEstimate, sre_from_log_probs, sample_strings

PROTOCOLS = ("hopping-projective", "ising-projective", "ising-noclick")
_EIGEN_EPS = 1e-12
_RETRY_OFFSET = 1_000_000


@dataclass(frozen=True)
class MeasurementEvent:
    time: float
    site: int
    outcome: int
    born_probability: float


@dataclass(frozen=True)
class Snapshot:
    t: float
    estimates: dict[float, SreEstimate]
    purity_defect: float = 0.0


@dataclass(frozen=True)
class TrajectoryRecord:
    seed: int
    trajectory_id: int
    protocol: str
    gamma: float
    snapshots: tuple[Snapshot, ...]
    events: tuple[MeasurementEvent, ...]


@dataclass(frozen=True)
class EnsembleSeries:
    """Per-snapshot ensemble means.

    ``stderr`` is the standard error across trajectories (NaN when only one
    trajectory exists); ``sampling_stderr`` propagates the per-snapshot
    string-sampling error of the mean.  The CSV writer coalesces the two so
    downstream analysis always has a usable error column.
    """

    times: tuple[float, ...]
    alphas: tuple[float, ...]
    mean: dict[float, np.ndarray]
    stderr: dict[float, np.ndarray]
    n_traj: int
    excluded: int = 0
    trajectory_seeds: tuple[int, ...] = ()
    sampling_stderr: dict[float, np.ndarray] = field(default_factory=dict)

    def error(self, alpha: float) -> np.ndarray:
        err = self.stderr[alpha]
        if alpha in self.sampling_stderr:
            return np.where(np.isnan(err), self.sampling_stderr[alpha], err)
        return err


def _conditioned_update(gamma_mat: np.ndarray, site: int, outcome: int) -> np.ndarray:
    a, b = 2 * site, 2 * site + 1
    g = gamma_mat[a, b]
    eps = 2 * outcome - 1
    denom = 1.0 - eps * g
    u = gamma_mat[:, a].copy()
    v = gamma_mat[:, b].copy()
    out = gamma_mat + (eps / denom) * (np.outer(u, v) - np.outer(v, u))
    out[a, :] = 0.0
    out[b, :] = 0.0
    out[:, a] = 0.0
    out[:, b] = 0.0
    out[a, b] = -float(eps)
    out[b, a] = float(eps)
    return 0.5 * (out - out.T)


def apply_measurement(state: GaussianState, site: int, outcome: int) -> GaussianState:
    """Condition the state on a fixed measurement outcome (no randomness).

    Used for replaying recorded event logs; the Born weight of the outcome
    must be nonzero.
    """
    if not 0 <= site < state.L:
        raise ValueError(f"site {site} out of range for L={state.L}")
    g = state.gamma[2 * site, 2 * site + 1]
    if abs(g - (1.0 - 2.0 * outcome)) < _EIGEN_EPS:
        return state
    born = (1.0 - (2.0 * outcome - 1.0) * g) / 2.0
    if born < _EIGEN_EPS:
        raise ValueError(f"outcome {outcome} at site {site} has zero Born weight")
    return GaussianState(gamma=_conditioned_update(state.gamma, site, outcome),
                         L=state.L, pure=state.pure,
                         number_conserving=state.number_conserving)


def measure_occupation(state: GaussianState, site: int, rng) -> tuple[int, GaussianState, MeasurementEvent]:
    """Projectively measure n_site; returns (outcome, post-state, event)."""
    if not 0 <= site < state.L:
        raise ValueError(f"site {site} out of range for L={state.L}")
    g = state.gamma[2 * site, 2 * site + 1]
    p_one = min(1.0, max(0.0, (1.0 - g) / 2.0))
    u = float(rng.random())
    if p_one < _EIGEN_EPS:
        outcome = 0
    elif p_one > 1.0 - _EIGEN_EPS:
        outcome = 1
    else:
        outcome = 1 if u < p_one else 0
    born = p_one if outcome == 1 else 1.0 - p_one
    event = MeasurementEvent(time=0.0, site=site, outcome=outcome, born_probability=born)
    if abs(g - (1.0 - 2.0 * outcome)) < _EIGEN_EPS:
        return outcome, state, event  # already an eigenstate of n_site
    new_gamma = _conditioned_update(state.gamma, site, outcome)
    post = GaussianState(gamma=new_gamma, L=state.L, pure=state.pure,
                        number_conserving=state.number_conserving)
    return outcome, post, event


def measure_z(state: GaussianState, site: int, rng) -> tuple[int, GaussianState, MeasurementEvent]:
    """Projectively measure sigma^z_site = 1 - 2 n_site.

    Identical Gaussian conditioning on the Majorana pair; the recorded
    outcome is the occupation bit (0 = spin up).
    """
    return measure_occupation(state, site, rng)


def measurement_sweep(state: GaussianState, gamma: float, dt: float, t: float, rng,
                      ) -> tuple[GaussianState, list[MeasurementEvent]]:
    """One Bernoulli(gamma*dt) trial per site; fired sites measured in order."""
    if gamma * dt > 0.5:
        raise ConfigError(
            f"gamma*dt = {gamma * dt} > 0.5; decrease dt for a valid measurement schedule")
    events: list[MeasurementEvent] = []
    if gamma <= 0.0:
        return state, events
    trials = rng.random(state.L)
    for site in np.flatnonzero(trials < gamma * dt):
        outcome, state, ev = measure_occupation(state, int(site), rng)
        events.append(replace(ev, time=t))
    return state, events


# ---------------------------------------------------------------------------
# Trajectories
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrajectoryParams:
    """Everything one trajectory needs besides the protocol name and seed."""

    L: int
    gamma: float
    dt: float
    snapshot_times: tuple[float, ...]
    initial_occ: tuple[int, ...]
    alphas: tuple[float, ...] = (1.0, 2.0)
    samples: int = 1000
    h: float = 0.5
    J: float = 1.0
    recompute_every: int = 32
    subsystem: int | None = None  # sample SREs on the leading sites only

    def __post_init__(self):
        if len(self.initial_occ) != self.L:
            raise ConfigError("initial occupation length must equal L")
        times = tuple(float(t) for t in self.snapshot_times)
        if any(t2 <= t1 for t1, t2 in zip(times, times[1:])):
            raise ConfigError("snapshot times must be strictly increasing")
        object.__setattr__(self, "snapshot_times", times)


def snapshot_schedule(t_max: float, dt: float, window: tuple[float, float] | None = None,
                      n_ramp: int = 12, n_window: int = 8, include_zero: bool = True,
                      ) -> tuple[float, ...]:
    """Log-spaced ramp plus a linear grid over the stationary window, on the dt grid."""
    pts: set[float] = set()
    if include_zero:
        pts.add(0.0)
    if t_max > 0:
        ramp = np.geomspace(max(dt, t_max / 64.0), t_max, n_ramp)
        pts.update(ramp.tolist())
    if window is not None:
        lo, hi = window
        pts.update(np.linspace(lo, hi, n_window).tolist())
    aligned = sorted({round(round(t / dt) * dt, 10) for t in pts if t <= t_max + 1e-9})
    return tuple(t for t in aligned if t >= 0.0)


def _snapshot(state: GaussianState, t: float, params: TrajectoryParams,
              rng) -> Snapshot:
    from .gaussian import subsystem_restrict

    target = state
    if params.subsystem is not None:
        target = subsystem_restrict(state, params.subsystem)
    batch = sample_strings(target, params.samples, rng,
                           recompute_every=params.recompute_every)
    ests = {float(a): sre_from_log_probs(batch.log_probs, a, target.L)
            for a in params.alphas}
    defect = abs(np.expm1(log_purity(state))) if state.pure else 0.0
    return Snapshot(t=t, estimates=ests, purity_defect=float(defect))


def run_trajectory(protocol: str, params: TrajectoryParams, master_seed: int,
                   trajectory_id: int = 0) -> TrajectoryRecord:
    """One monitored (or plain / no-click) trajectory with SRE snapshots."""
    if protocol not in PROTOCOLS:
        raise ConfigError(f"unknown protocol {protocol!r}; expected one of {PROTOCOLS}")
    occ = np.asarray(params.initial_occ, dtype=int)
    event_rng = philox(master_seed, trajectory_id, TAG_EVENTS)
    events: list[MeasurementEvent] = []
    snapshots: list[Snapshot] = []
    snap_times = list(params.snapshot_times)

    def take_snapshot(state_like: GaussianState, t: float, index: int) -> None:
        rng = philox(master_seed, trajectory_id, index, TAG_SAMPLER)
        snapshots.append(_snapshot(state_like, t, params, rng))

    if protocol == "ising-noclick":
        gen = noclick_generator(IsingModel(params.L, h=0.0, J=params.J, boundary="open"),
                                params.gamma)
        modes = occupation_mode_matrix(occ)
        t = 0.0
        for i, ts in enumerate(snap_times):
            n_steps = int(round((ts - t) / params.dt))
            for _ in range(n_steps):
                modes = evolve_noclick(modes, gen, params.dt)
            t = round(t + n_steps * params.dt, 10)
            take_snapshot(state_from_modes(modes), ts, i)
    else:
        if protocol == "hopping-projective":
            model = HoppingModel(params.L, dt=params.dt)
            step = model.majorana_propagator(params.dt)
            jump = model.majorana_propagator
        else:
            model = IsingModel(params.L, h=params.h, J=params.J, boundary="periodic",
                               dt=params.dt)
            parity = state_parity(occ)
            step = model.propagator(params.dt, parity)
            jump = lambda s: model.propagator(s, parity)
        from .gaussian import build_occupation_product, rotate

        state = build_occupation_product(occ)
        t = 0.0
        for i, ts in enumerate(snap_times):
            if params.gamma <= 0.0:
                # plain dynamics: exact propagator jump straight to the snapshot
                if ts > t:
                    state = rotate(state, jump(ts - t), check=False)
                    t = ts
            else:
                n_steps = int(round((ts - t) / params.dt))
                for _ in range(n_steps):
                    state = rotate(state, step, check=False)
                    t = round(t + params.dt, 10)
                    state, evs = measurement_sweep(state, params.gamma, params.dt,
                                                   t, event_rng)
                    events.extend(evs)
            take_snapshot(state, ts, i)

    return TrajectoryRecord(
        seed=stream_seed(master_seed, trajectory_id, TAG_EVENTS),
        trajectory_id=trajectory_id,
        protocol=protocol,
        gamma=params.gamma,
        snapshots=tuple(snapshots),
        events=tuple(events),
    )


# ---------------------------------------------------------------------------
# Ensembles
# ---------------------------------------------------------------------------

def _trajectory_task(args):
    protocol, params, master_seed, traj_id = args
    try:
        return run_trajectory(protocol, params, master_seed, traj_id)
    except FfmagicError as exc:
        return (traj_id, str(exc))


def run_ensemble(protocol: str, params: TrajectoryParams, n_traj: int,
                 master_seed: int, n_workers: int = 1,
                 ) -> tuple[EnsembleSeries, list[TrajectoryRecord]]:
    """Independent trajectories, averaged per snapshot time and Renyi index.

    A failed trajectory is retried once with a perturbed derived seed and
    excluded (with a warning counted in the series) if it fails again.
    Deterministic dynamics (no-click, or projective protocols at gamma = 0)
    produce identical trajectories, so only one is computed; the series then
    carries the string-sampling error instead of a cross-trajectory one.
    """
    if n_traj < 1:
        raise ConfigError("n_traj must be >= 1")
    deterministic = protocol == "ising-noclick" or params.gamma <= 0.0
    if deterministic:
        n_traj = 1
    tasks = [(protocol, params, master_seed, i) for i in range(n_traj)]
    records: list[TrajectoryRecord] = []
    failures: list[tuple[int, str]] = []
    if n_workers > 1 and n_traj > 1:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            results = list(pool.map(_trajectory_task, tasks))
    else:
        results = [_trajectory_task(task) for task in tasks]
    for res in results:
        if isinstance(res, TrajectoryRecord):
            records.append(res)
            continue
        traj_id, msg = res
        try:
            retry = run_trajectory(protocol, params, master_seed,
                                   traj_id + _RETRY_OFFSET + TAG_RETRY)
            records.append(retry)
        except FfmagicError as exc:
            failures.append((traj_id, f"{msg}; retry failed: {exc}"))
    excluded = len(failures)
    if not records:
        raise FfmagicError("all trajectories failed")

    times = params.snapshot_times
    alphas = tuple(float(a) for a in params.alphas)
    mean: dict[float, np.ndarray] = {}
    stderr: dict[float, np.ndarray] = {}
    sampling: dict[float, np.ndarray] = {}
    for a in alphas:
        vals = np.array([[rec.snapshots[i].estimates[a].value for i in range(len(times))]
                         for rec in records])
        errs = np.array([[rec.snapshots[i].estimates[a].std_error for i in range(len(times))]
                         for rec in records])
        mean[a] = vals.mean(axis=0)
        sampling[a] = np.sqrt((errs**2).sum(axis=0)) / len(records)
        if len(records) > 1:
            stderr[a] = vals.std(axis=0, ddof=1) / np.sqrt(len(records))
        else:
            stderr[a] = np.full(len(times), np.nan)
    series = EnsembleSeries(times=times, alphas=alphas, mean=mean, stderr=stderr,
                            n_traj=len(records), excluded=excluded,
                            trajectory_seeds=tuple(rec.seed for rec in records),
                            sampling_stderr=sampling)
    return series, records


# ---------------------------------------------------------------------------
# Persistence
# ---------------------------------------------------------------------------

def write_trajectory_jsonl(path, record: TrajectoryRecord) -> None:
    """One snapshot per line: t, alpha, value, std_error, trajectory_id."""
    with open(path, "a", encoding="utf-8", newline="\n") as fh:
        for snap in record.snapshots:
            for a, est in sorted(snap.estimates.items()):
                fh.write(json.dumps({
                    "t": snap.t, "alpha": a, "value": est.value,
                    "std_error": est.std_error, "trajectory_id": record.trajectory_id,
                }) + "\n")


def write_ensemble_csv(path, series: EnsembleSeries) -> None:
    """CSV with columns (t, alpha, mean, stderr, n_traj), 17 significant digits."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("t,alpha,mean,stderr,n_traj\n")
        for a in series.alphas:
            err = series.error(a)
            for i, t in enumerate(series.times):
                fh.write(f"{t:.17g},{a:.17g},{series.mean[a][i]:.17g},"
                         f"{err[i]:.17g},{series.n_traj}\n")


def read_ensemble_csv(path) -> EnsembleSeries:
    """Inverse of :func:`write_ensemble_csv` (schema-checked)."""
    from .errors import SchemaError

    with open(path, encoding="utf-8") as fh:
        header = fh.readline().strip().split(",")
        expected = ["t", "alpha", "mean", "stderr", "n_traj"]
        if header != expected:
            missing = [c for c in expected if c not in header]
            raise SchemaError(f"bad ensemble CSV columns {header}; missing {missing}")
        rows = [line.strip().split(",") for line in fh if line.strip()]
    times = sorted({float(r[0]) for r in rows})
    alphas = sorted({float(r[1]) for r in rows})
    t_index = {t: i for i, t in enumerate(times)}
    mean = {a: np.full(len(times), np.nan) for a in alphas}
    stderr = {a: np.full(len(times), np.nan) for a in alphas}
    n_traj = 1
    for r in rows:
        t, a = float(r[0]), float(r[1])
        mean[a][t_index[t]] = float(r[2])
        stderr[a][t_index[t]] = float(r[3])
        n_traj = int(r[4])
    return EnsembleSeries(times=tuple(times), alphas=tuple(alphas), mean=mean,
                          stderr=stderr, n_traj=n_traj)
