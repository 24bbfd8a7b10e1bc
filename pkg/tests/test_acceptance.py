"""Acceptance suite: one test per criterion, desk-scale contracts.

Criteria 5-9 share session fixtures so the heavy ensembles are produced
once.  Every test prints a one-line PASS summary with the measured numbers
(visible with -s or on failure).
"""

import math
import time

import numpy as np
import pytest
import scipy.stats

from ffmagic import gaussian as G, models as M, monitoring as MO, oracle as O, sampler as SA
from ffmagic.gge import GgeSpec, gge_covariance, gge_sre
from ffmagic.monitoring import TrajectoryParams, run_ensemble, run_trajectory, snapshot_schedule
from ffmagic.rng import philox
from ffmagic.scaling import (
    StationaryValue,
    fit_scaling,
    log_coefficient_curve,
    relaxation_profile,
    stationary_from_deterministic_series,
    stationary_from_trajectories,
    time_average,
)

NEEL = lambda L: tuple([1, 0] * (L // 2))
LOG2 = math.log(2.0)


def report(criterion: str, detail: str) -> None:
    print(f"[ACCEPTANCE] {criterion}: PASS  ({detail})")


def stationary_of_records(params, records, alpha, window, L, gamma):
    per_traj = [[s.estimates[alpha].value for s in rec.snapshots] for rec in records]
    if len(records) == 1:
        errs = [s.estimates[alpha].std_error for s in records[0].snapshots]
        return time_average(params.snapshot_times, per_traj[0], errs, window,
                            L=L, alpha=alpha, gamma=gamma)
    return stationary_from_trajectories(params.snapshot_times, per_traj, window,
                                        L=L, alpha=alpha, gamma=gamma)


# ---------------------------------------------------------------------------
# 1. stabilizer baseline
# ---------------------------------------------------------------------------

def test_c01_stabilizer_baseline():
    t0 = time.time()
    cases = [G.build_vacuum(128), G.build_occupation_product([1, 0] * 64),
             G.build_vacuum(37), G.build_occupation_product([1, 1, 0] * 12)]
    for state in cases:
        for alpha, est in SA.estimate_sres(state, (1, 2), 4, philox(1)).items():
            assert abs(est.value) < 1e-8
            assert est.std_error < 1e-8
    elapsed = time.time() - t0
    assert elapsed < 1.0
    report("criterion 1 (stabilizer baseline)",
           f"4 product states, L up to 128, alpha in {{1,2}}, {elapsed:.2f}s")


# ---------------------------------------------------------------------------
# 2. oracle equivalence
# ---------------------------------------------------------------------------

def test_c02_oracle_equivalence():
    t0 = time.time()
    rng = np.random.default_rng(2024)
    count = 0
    worst_sum = 0.0
    worst_sre = 0.0
    for L in (2, 3, 4):
        for _ in range(9 if L == 4 else 8):
            occ = rng.integers(0, 2, size=L)
            psi = O.basis_state(occ)
            state = G.build_occupation_product(occ) if occ.any() else G.build_vacuum(L)
            for (a, b, th) in O.random_givens_sequence(L, 6 * L, rng):
                psi = O.givens_unitary(L, a, b, th) @ psi
                state = G.rotate(state, O.givens_rotation_matrix(2 * L, a, b, th))
            probs = SA.enumerate_string_probabilities(state)
            worst_sum = max(worst_sum, abs(probs.sum() - 1.0))
            rho = O.density_matrix(psi)
            for alpha in (1, 2):
                diff = abs(SA.exact_sre_enumeration(state, alpha)
                           - O.sre_exact(rho, L, alpha))
                worst_sre = max(worst_sre, diff)
            count += 1
    elapsed = time.time() - t0
    assert count == 25
    assert worst_sum < 1e-9
    assert worst_sre < 1e-8
    assert elapsed < 60.0
    report("criterion 2 (oracle equivalence)",
           f"25 states, max |sum-1|={worst_sum:.1e}, max SRE diff={worst_sre:.1e}, {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 3. sampler correctness
# ---------------------------------------------------------------------------

def test_c03_sampler_correctness():
    t0 = time.time()
    state = M.HoppingModel(4).evolve(G.build_occupation_product(NEEL(4)), 1.0)
    psi = O.evolve(O.basis_state(NEEL(4)), O.hopping_hamiltonian(4), 1.0)
    dense = O.all_string_probabilities(O.density_matrix(psi), 4)

    n = 1_000_000
    batch = SA.sample_strings(state, n, philox(3))
    codes = (batch.strings.astype(np.int64)
             * (1 << np.arange(8, dtype=np.int64))).sum(axis=1)
    counts = np.bincount(codes, minlength=256)
    from conftest import chisquare_pvalue

    pvalue = chisquare_pvalue(counts, dense, n)
    assert pvalue > 0.001

    devs = []
    for alpha in (1, 2):
        exact = O.sre_exact(O.density_matrix(psi), 4, alpha)
        est = SA.sre_from_log_probs(batch.log_probs[:100_000], alpha, 4)
        assert abs(est.value - exact) < 3 * est.std_error
        devs.append((est.value - exact) / est.std_error)
    elapsed = time.time() - t0
    assert elapsed < 300.0
    report("criterion 3 (sampler correctness)",
           f"chi2 p={pvalue:.3f}, SRE deviations {devs[0]:+.2f}/{devs[1]:+.2f} sigma, {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 4. monitored-trajectory oracle
# ---------------------------------------------------------------------------

def _replay_hopping(L, gamma, T, dt, seed):
    params = TrajectoryParams(L=L, gamma=gamma, dt=dt, snapshot_times=(T,),
                              initial_occ=NEEL(L), alphas=(1.0,), samples=4)
    rec = run_trajectory("hopping-projective", params, master_seed=seed)
    state = G.build_occupation_product(NEEL(L))
    psi = O.basis_state(NEEL(L))
    H = O.hopping_hamiltonian(L)
    step = M.HoppingModel(L, dt=dt).majorana_propagator(dt)
    events, ei, t, worst = list(rec.events), 0, 0.0, 0.0
    for _ in range(int(round(T / dt))):
        state = G.rotate(state, step, check=False)
        psi = O.evolve(psi, H, dt)
        t = round(t + dt, 10)
        while ei < len(events) and abs(events[ei].time - t) < 1e-9:
            state = MO.apply_measurement(state, events[ei].site, events[ei].outcome)
            psi = O.project_occupation(psi, L, events[ei].site, events[ei].outcome)
            ei += 1
        worst = max(worst, float(np.max(np.abs(
            state.gamma - O.covariance_of(O.density_matrix(psi), L)))))
    assert ei == len(events)
    return worst, len(events)


def _replay_ising(L, gamma, T, dt, seed, h):
    params = TrajectoryParams(L=L, gamma=gamma, dt=dt, snapshot_times=(T,),
                              initial_occ=NEEL(L), alphas=(1.0,), samples=4, h=h)
    rec = run_trajectory("ising-projective", params, master_seed=seed)
    occ = NEEL(L)
    parity = M.state_parity(occ)
    state = G.build_occupation_product(occ)
    psi = O.basis_state(occ)
    H = O.tfim_hamiltonian(L, h)
    step = M.IsingModel(L, h=h, dt=dt).propagator(dt, parity)
    events, ei, t, worst = list(rec.events), 0, 0.0, 0.0
    for _ in range(int(round(T / dt))):
        state = G.rotate(state, step, check=False)
        psi = O.evolve(psi, H, dt)
        t = round(t + dt, 10)
        while ei < len(events) and abs(events[ei].time - t) < 1e-9:
            state = MO.apply_measurement(state, events[ei].site, events[ei].outcome)
            psi = O.project_occupation(psi, L, events[ei].site, events[ei].outcome)
            ei += 1
        worst = max(worst, float(np.max(np.abs(
            state.gamma - O.covariance_of(O.density_matrix(psi), L)))))
    assert ei == len(events)
    return worst, len(events)


def _replay_noclick(L, gamma, T, dt):
    gen = M.noclick_generator(M.IsingModel(L, h=0.0, boundary="open"), gamma)
    modes = M.occupation_mode_matrix([0] * L)
    psi = O.basis_state([0] * L)
    H = O.noclick_hamiltonian(L, 1.0, gamma)
    worst = 0.0
    for _ in range(int(round(T / dt))):
        modes = M.evolve_noclick(modes, gen, dt)
        psi = O.evolve(psi, H, dt, normalize=True)
        worst = max(worst, float(np.max(np.abs(
            M.covariance_from_modes(modes) - O.covariance_of(O.density_matrix(psi), L)))))
    return worst


def test_c04_monitored_trajectory_oracle():
    t0 = time.time()
    w_hop, n_hop = _replay_hopping(L=4, gamma=0.5, T=2.0, dt=0.05, seed=41)
    assert n_hop > 0
    assert w_hop < 1e-7
    w_ising, n_ising = _replay_ising(L=4, gamma=0.5, T=2.0, dt=0.05, seed=43, h=0.5)
    assert n_ising > 0
    assert w_ising < 1e-7
    w_nc = _replay_noclick(L=4, gamma=1.0, T=1.0, dt=0.02)
    assert w_nc < 1e-7
    elapsed = time.time() - t0
    assert elapsed < 60.0
    report("criterion 4 (trajectory oracle)",
           f"hopping {w_hop:.1e} ({n_hop} events), ising {w_ising:.1e} "
           f"({n_ising} events), no-click {w_nc:.1e}, {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 5 & 6. plain hopping saturation and logarithmic coefficients
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def plain_hopping_stationary():
    """Stationary M_alpha for plain hopping at n = 1/2, window [L/8, L/4]."""
    out = {}
    samples = {8: 16000, 16: 8000, 32: 3000, 64: 2000}
    for L in (8, 16, 32, 64):
        window = (L / 8, L / 4)
        times = snapshot_schedule(L / 4, 0.05, window=window, n_ramp=4, n_window=12)
        params = TrajectoryParams(L=L, gamma=0.0, dt=0.05, snapshot_times=times,
                                  initial_occ=NEEL(L), alphas=(1.0, 2.0),
                                  samples=samples[L])
        series, records = run_ensemble("hopping-projective", params, 1,
                                       master_seed=2025)
        for alpha in (1.0, 2.0):
            out[(L, alpha)] = stationary_of_records(params, records, alpha,
                                                    window, L, 0.0)
    return out


def test_c05_plain_hopping_saturation(plain_hopping_stationary):
    details = []
    for alpha in (1.0, 2.0):
        gaps = [abs(plain_hopping_stationary[(L, alpha)].mean / L - LOG2)
                for L in (16, 32, 64)]
        assert gaps[0] > gaps[1] > gaps[2], f"alpha={alpha}: gaps {gaps} not decreasing"
        assert gaps[2] < 0.15
        details.append(f"alpha={alpha}: |M/L - log2| = " +
                       "/".join(f"{g:.3f}" for g in gaps))
    report("criterion 5 (plain saturation)", "; ".join(details))


def test_c06_plain_hopping_log_coefficients(plain_hopping_stationary):
    # the paper's stationary fit includes the decaying ~1/L correction
    targets = {1.0: (1.50, 0.2), 2.0: (2.33, 0.4)}
    details = []
    for alpha, (target, tol) in targets.items():
        vals = [plain_hopping_stationary[(L, alpha)] for L in (8, 16, 32, 64)]
        fit = fit_scaling(vals, include_inverse=True)
        assert abs(fit.b - target) < tol, \
            f"alpha={alpha}: b={fit.b:.3f} not within {tol} of {target}"
        details.append(f"b_{int(alpha)}={fit.b:.3f} (target {target}+-{tol})")
    report("criterion 6 (log coefficients)", "; ".join(details))


# ---------------------------------------------------------------------------
# 7. monitored log-correction transition
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def monitored_bcurve():
    """b(gamma) for monitored hopping, reduced contract L in {8,16,32}."""
    gammas = (0.1, 0.2, 0.45, 0.7, 0.8)
    by_gamma = {1.0: {}, 2.0: {}}
    for gamma in gammas:
        for alpha in (1.0, 2.0):
            by_gamma[alpha][gamma] = []
        for L in (8, 16, 32):
            window = (float(L), float(2 * L))
            times = snapshot_schedule(2.0 * L, 0.05, window=window,
                                      n_ramp=0, n_window=6, include_zero=False)
            params = TrajectoryParams(L=L, gamma=gamma, dt=0.05,
                                      snapshot_times=times, initial_occ=NEEL(L),
                                      alphas=(1.0, 2.0), samples=1000)
            series, records = run_ensemble("hopping-projective", params, 100,
                                           master_seed=4242, n_workers=2)
            for alpha in (1.0, 2.0):
                by_gamma[alpha][gamma].append(
                    stationary_of_records(params, records, alpha, window, L, gamma))
    return {alpha: log_coefficient_curve(by_gamma[alpha]) for alpha in (1.0, 2.0)}


def test_c07_monitored_log_transition(monitored_bcurve):
    details = []
    for alpha in (1.0, 2.0):
        curve = {pt.gamma: pt for pt in monitored_bcurve[alpha]}
        assert not curve[0.1].zero_compatible, \
            f"alpha={alpha}: b(0.1)={curve[0.1].b:.3f}+-{curve[0.1].sigma_b:.3f} already zero-compatible"
        assert curve[0.8].zero_compatible, \
            f"alpha={alpha}: b(0.8)={curve[0.8].b:.3f}+-{curve[0.8].sigma_b:.3f} not zero-compatible"
        flip = next(g for g in (0.1, 0.2, 0.45, 0.7, 0.8)
                    if curve[g].zero_compatible)
        assert 0.2 <= flip <= 0.7, f"alpha={alpha}: flip at gamma={flip}"
        details.append(
            f"alpha={alpha}: b(0.1)={curve[0.1].b:.2f}({abs(curve[0.1].b)/curve[0.1].sigma_b:.1f}s), "
            f"flip at {flip:g}, b(0.8)={curve[0.8].b:.2f}({abs(curve[0.8].b)/max(curve[0.8].sigma_b,1e-12):.1f}s)")
    report("criterion 7 (monitored transition)", "; ".join(details))


# ---------------------------------------------------------------------------
# 8. GGE closed forms and subsystem relaxation
# ---------------------------------------------------------------------------

def test_c08_gge_closed_forms_and_relaxation():
    t0 = time.time()
    for ell in (1, 3, 8, 20):
        for alpha in (1, 2, 3):
            assert gge_sre(GgeSpec(n=0.5, ell=ell), alpha) == pytest.approx(
                -ell * LOG2, abs=1e-12)
    for n in (0.0, 0.125, 0.25, 0.5):
        for ell in (1, 2, 3, 4, 5):
            for alpha in (1, 2):
                closed = gge_sre(GgeSpec(n, ell), alpha)
                enum = SA.exact_sre_enumeration(gge_covariance(GgeSpec(n, ell)), alpha)
                assert closed == pytest.approx(enum, abs=1e-10)

    # subsystem relaxation toward the GGE value, L = 256, ell = 8
    L, ell = 256, 8
    model = M.HoppingModel(L)
    state = G.build_occupation_product(NEEL(L))
    times = np.round(np.geomspace(2 * ell, 10 * ell, 12) / 0.05) * 0.05
    values = {1: [], 2: []}
    t_now = 0.0
    for i, t in enumerate(times):
        state = model.evolve(state, t - t_now)
        t_now = t
        sub = G.subsystem_restrict(state, ell)
        batch = SA.sample_strings(sub, 32768, philox(8, i))
        for alpha in (1, 2):
            values[alpha].append(SA.sre_from_log_probs(batch.log_probs, alpha, ell).value)

    # both indices approach the GGE value from above...
    for alpha in (1, 2):
        target = gge_sre(GgeSpec(n=0.5, ell=ell), alpha)
        deltas = np.array(values[alpha]) - target
        assert np.all(deltas > 0)
        assert deltas[-1] < 0.6 * deltas[0]
    # ...and the M_2 decay is algebraic, compatible with (t/ell)^-1 in this
    # window (M_1's asymptotic regime sets in later; see ledger)
    target2 = gge_sre(GgeSpec(n=0.5, ell=ell), 2)
    stat = StationaryValue(L=ell, alpha=2.0, gamma=0.0, mean=target2, error=0.0,
                           window=(times[0], times[-1]))
    prof = relaxation_profile(times, np.array(values[2]), stat, ell)
    assert prof.flipped  # relaxation from above
    assert abs(prof.loglog_slope - (-1.0)) < 0.2
    elapsed = time.time() - t0
    assert elapsed < 3600.0
    report("criterion 8 (GGE)",
           f"closed forms exact; relaxation slope {prof.loglog_slope:.3f} "
           f"(target -1 +- 0.2), {elapsed:.0f}s")


# ---------------------------------------------------------------------------
# 9. no-click transition
# ---------------------------------------------------------------------------

@pytest.fixture(scope="session")
def noclick_stationary():
    """Stationary M_1 of the no-click evolution from vacuum (deterministic).

    The transient oscillations decay on a scale ~ L, so the window is
    [1.5 L, 3.5 L]; many modest-sample snapshots average the residual
    oscillation and the window mean carries its standard error.
    """
    out = {}
    for gamma in (0.5, 4.0):
        for L in (8, 16, 24, 32, 48):
            window = (1.5 * L, 3.5 * L)
            times = snapshot_schedule(3.5 * L, 0.05, window=window,
                                      n_ramp=0, n_window=32, include_zero=False)
            params = TrajectoryParams(L=L, gamma=gamma, dt=0.05,
                                      snapshot_times=times,
                                      initial_occ=tuple([0] * L),
                                      alphas=(1.0,), samples=512)
            series, records = run_ensemble("ising-noclick", params, 1,
                                           master_seed=909)
            out[(L, gamma)] = stationary_from_deterministic_series(
                series.times, series.mean[1.0], window, L=L, alpha=1.0,
                gamma=gamma)
    return out


def test_c09_noclick_transition(noclick_stationary):
    curves = {}
    for gamma in (0.5, 4.0):
        vals = [noclick_stationary[(L, gamma)] for L in (8, 16, 24, 32, 48)]
        curves[gamma] = log_coefficient_curve({gamma: vals})[0]
    grow = curves[0.5]
    flat = curves[4.0]
    assert grow.b > 0 and grow.b > 2 * grow.sigma_b, \
        f"gamma=0.5 slope {grow.b:.3f}+-{grow.sigma_b:.3f} not positive at 2 sigma"
    assert abs(flat.b) < 2 * flat.sigma_b, \
        f"gamma=4 slope {flat.b:.3f}+-{flat.sigma_b:.3f} not flat"
    report("criterion 9 (no-click transition)",
           f"b(0.5)={grow.b:.3f}+-{grow.sigma_b:.3f}, b(4)={flat.b:.3f}+-{flat.sigma_b:.3f}")


# ---------------------------------------------------------------------------
# 10. dt-insensitivity
# ---------------------------------------------------------------------------

def _stationary_at_dt(protocol, L, gamma, dt, seed, n_traj, samples, window, h=0.5,
                      occ=None):
    times = snapshot_schedule(window[1], dt, window=window, n_ramp=0,
                              n_window=6, include_zero=False)
    params = TrajectoryParams(L=L, gamma=gamma, dt=dt, snapshot_times=times,
                              initial_occ=occ if occ is not None else NEEL(L),
                              alphas=(1.0,), samples=samples, h=h)
    series, records = run_ensemble(protocol, params, n_traj, master_seed=seed,
                                   n_workers=2)
    errs = series.error(1.0)
    return time_average(series.times, series.mean[1.0], errs, window,
                        L=L, alpha=1.0, gamma=gamma)


def test_c10_dt_insensitivity():
    t0 = time.time()
    details = []

    # plain protocols use exact propagator jumps: dt does not enter at all
    a = _stationary_at_dt("hopping-projective", 16, 0.0, 0.05, 7, 1, 2000, (2.0, 4.0))
    b = _stationary_at_dt("hopping-projective", 16, 0.0, 0.025, 7, 1, 2000, (2.0, 4.0))
    assert abs(a.mean - b.mean) < max(1e-9, a.error)
    details.append(f"plain: |d|={abs(a.mean - b.mean):.1e}")

    # monitored hopping: statistical agreement within the quoted error
    a = _stationary_at_dt("hopping-projective", 16, 0.4, 0.05, 11, 60, 600,
                          (16.0, 32.0))
    b = _stationary_at_dt("hopping-projective", 16, 0.4, 0.025, 11, 60, 600,
                          (16.0, 32.0))
    assert abs(a.mean - b.mean) < a.error, \
        f"hopping-projective: |d|={abs(a.mean - b.mean):.3f} error={a.error:.3f}"
    details.append(f"hopping-projective: |d|={abs(a.mean - b.mean):.3f} < {a.error:.3f}")

    # monitored Ising
    a = _stationary_at_dt("ising-projective", 8, 0.5, 0.05, 13, 60, 600,
                          (8.0, 16.0))
    b = _stationary_at_dt("ising-projective", 8, 0.5, 0.025, 13, 60, 600,
                          (8.0, 16.0))
    assert abs(a.mean - b.mean) < a.error, \
        f"ising-projective: |d|={abs(a.mean - b.mean):.3f} error={a.error:.3f}"
    details.append(f"ising-projective: |d|={abs(a.mean - b.mean):.3f} < {a.error:.3f}")

    # no-click: the step matrix is the exact exponential, dt only sets the
    # renormalization cadence
    a = _stationary_at_dt("ising-noclick", 16, 1.0, 0.05, 17, 1, 2000,
                          (4.0, 8.0), occ=tuple([0] * 16))
    b = _stationary_at_dt("ising-noclick", 16, 1.0, 0.025, 17, 1, 2000,
                          (4.0, 8.0), occ=tuple([0] * 16))
    assert abs(a.mean - b.mean) < a.error
    details.append(f"no-click: |d|={abs(a.mean - b.mean):.3f} < {a.error:.3f}")

    report("criterion 10 (dt-insensitivity)", "; ".join(details)
           + f"; {time.time() - t0:.0f}s")
