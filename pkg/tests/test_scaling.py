import math

import numpy as np
import pytest

from ffmagic.errors import FfmagicError
from ffmagic.scaling import (
    LogCoefficient,
    ScalingFit,
    StationaryValue,
    finite_size_difference,
    fit_scaling,
    log_coefficient_curve,
    relaxation_profile,
    time_average,
)


def make_values(Ls, a, b, c, err=0.0, noise=None, gamma=0.0, alpha=1.0):
    out = []
    for L in Ls:
        mean = a * L - b * math.log(L) - c
        if noise is not None:
            mean += noise.normal(0.0, err)
        out.append(StationaryValue(L=L, alpha=alpha, gamma=gamma, mean=mean,
                                   error=err, window=(L / 8, L / 4)))
    return out


# ---------------------------------------------------------------------------
# time averaging
# ---------------------------------------------------------------------------

def test_time_average_constant_series():
    sv = time_average([1, 2, 3], [0.7, 0.7, 0.7], [0.0, 0.0, 0.0], (0.5, 3.5))
    assert sv.mean == pytest.approx(0.7)
    assert sv.error < 1e-15  # time-fluctuation error vanishes
    assert sv.window == (0.5, 3.5)


def test_time_average_two_snapshots():
    sv = time_average([1.0, 2.0], [1.1, 0.9], [0.0, 0.0], (0.0, 2.0))
    assert sv.mean == pytest.approx(1.0)
    assert sv.error > 0


def test_time_average_combines_sampling_error():
    sv = time_average([1.0, 2.0], [1.0, 1.0], [0.2, 0.4], (0.0, 2.0))
    assert sv.error == pytest.approx(0.3)  # zero scatter, mean sampling error


def test_time_average_empty_window():
    with pytest.raises(FfmagicError):
        time_average([1.0], [0.5], [0.0], (2.0, 3.0))


def test_time_average_window_selection():
    sv = time_average([0.5, 1.0, 5.0], [10.0, 1.0, 2.0], [0.0] * 3, (0.9, 6.0))
    assert sv.mean == pytest.approx(1.5)


# ---------------------------------------------------------------------------
# finite-size difference
# ---------------------------------------------------------------------------

def test_difference_on_synthetic_form():
    m = lambda L: 0.693 * L - 1.5 * math.log(L) - 0.2
    got = finite_size_difference(m(16), m(32))
    assert got == pytest.approx(1.5 * math.log(16) + 0.2 - 1.5 * math.log(2))
    assert got == pytest.approx(3.3192, abs=1e-4)


def test_difference_cancels_pure_extensive():
    for L in (4, 16, 64):
        assert finite_size_difference(0.31 * L, 0.31 * 2 * L) == pytest.approx(0.0)


# ---------------------------------------------------------------------------
# scaling fits
# ---------------------------------------------------------------------------

def test_fit_noiseless_recovery():
    vals = make_values([8, 16, 32, 64], math.log(2.0), 1.5, 0.2)
    fit = fit_scaling(vals)
    assert fit.a == pytest.approx(math.log(2.0), abs=1e-9)
    assert fit.b == pytest.approx(1.5, abs=1e-9)
    assert fit.c == pytest.approx(0.2, abs=1e-9)
    assert max(abs(r) for r in fit.residuals) < 1e-9


def test_fit_idempotence():
    fit = fit_scaling(make_values([8, 16, 32, 64], 0.6, 1.1, -0.4))
    regenerated = make_values([8, 16, 32, 64], fit.a, fit.b, fit.c)
    fit2 = fit_scaling(regenerated)
    assert fit2.b == pytest.approx(fit.b, abs=1e-9)


def test_fit_with_inverse_term():
    Ls = [8, 16, 32, 64, 128]
    vals = []
    for L in Ls:
        mean = 0.7 * L - 1.5 * math.log(L) - 0.2 + 3.0 / L
        vals.append(StationaryValue(L=L, alpha=1, gamma=0, mean=mean, error=0.0,
                                    window=(1, 2)))
    fit = fit_scaling(vals, include_inverse=True)
    assert fit.b == pytest.approx(1.5, abs=1e-8)
    assert fit.d == pytest.approx(3.0, abs=1e-7)


def test_fit_requires_four_sizes():
    with pytest.raises(FfmagicError):
        fit_scaling(make_values([8, 16, 32], 0.7, 1.5, 0.2))


def test_fit_noise_calibration():
    # with known gaussian errors the WLS z-scores are standard normal, so
    # ~95% of resamples land within 2 quoted sigmas of the truth
    rng = np.random.default_rng(1234)
    a, b, c = math.log(2.0), 1.5, 0.2
    Ls = [8, 16, 32, 64]
    hits = {k: 0 for k in "abc"}
    n_resample = 200
    for _ in range(n_resample):
        errs = [0.01 * (a * L) for L in Ls]  # 1% of the extensive value
        vals = [StationaryValue(L=L, alpha=1, gamma=0,
                                mean=a * L - b * math.log(L) - c + rng.normal(0, e),
                                error=e, window=(1, 2))
                for L, e in zip(Ls, errs)]
        fit = fit_scaling(vals)
        hits["a"] += abs(fit.a - a) < 2 * fit.sigma_a
        hits["b"] += abs(fit.b - b) < 2 * fit.sigma_b
        hits["c"] += abs(fit.c - c) < 2 * fit.sigma_c
    for k, n_hit in hits.items():
        coverage = n_hit / n_resample
        assert coverage >= 0.93, f"coefficient {k} coverage {coverage}"


# ---------------------------------------------------------------------------
# b(gamma) curve
# ---------------------------------------------------------------------------

def test_curve_recovers_planted_slopes():
    data = {}
    for gamma, b in ((0.1, 1.5), (0.5, 0.7), (0.9, 0.0)):
        data[gamma] = make_values([8, 16, 32, 64], 0.7, b, 0.1, err=0.01)
    curve = log_coefficient_curve(data)
    assert [pt.gamma for pt in curve] == [0.1, 0.5, 0.9]
    for pt, b in zip(curve, (1.5, 0.7, 0.0)):
        assert pt.b == pytest.approx(b, abs=5e-2)
    assert not curve[0].zero_compatible
    assert curve[2].zero_compatible


def test_curve_zero_everywhere_is_compatible():
    data = {g: make_values([8, 16, 32], 0.7, 0.0, 0.3, err=0.05)
            for g in (0.2, 0.4)}
    for pt in log_coefficient_curve(data):
        assert pt.zero_compatible


def test_curve_step_function_flips_at_step():
    noise = np.random.default_rng(7)
    data = {}
    for gamma in (0.1, 0.2, 0.3, 0.4):
        b = 1.5 if gamma < 0.25 else 0.0
        data[gamma] = make_values([8, 16, 32, 64], 0.7, b, 0.1,
                                  err=0.01, noise=noise)
    flags = [pt.zero_compatible for pt in log_coefficient_curve(data)]
    assert flags == [False, False, True, True]


def test_curve_needs_two_pairs():
    with pytest.raises(FfmagicError):
        log_coefficient_curve({0.1: make_values([8, 16], 0.7, 1.0, 0.0, err=0.1)})


def test_curve_consistent_with_fit():
    noise = np.random.default_rng(3)
    vals = make_values([8, 16, 32, 64, 128], 0.69, 1.2, 0.3, err=0.02, noise=noise)
    fit = fit_scaling(vals)
    pt = log_coefficient_curve({0.0: vals})[0]
    assert abs(pt.b - fit.b) < 2 * math.hypot(pt.sigma_b, fit.sigma_b)


# ---------------------------------------------------------------------------
# relaxation profiles
# ---------------------------------------------------------------------------

def test_relaxation_exponential_slope():
    t = np.linspace(1.0, 20.0, 80)
    stat = StationaryValue(L=8, alpha=1, gamma=0, mean=5.0, error=0.0, window=(0, 1))
    prof = relaxation_profile(t, 5.0 - 8.0 * np.exp(-0.7 * t), stat, 8)
    assert prof.loglinear_slope == pytest.approx(-0.7, abs=1e-6)
    assert prof.excluded == 0
    assert not prof.flipped


def test_relaxation_algebraic_slope():
    t = np.linspace(1.0, 50.0, 120)
    stat = StationaryValue(L=8, alpha=1, gamma=0, mean=3.0, error=0.0, window=(0, 1))
    prof = relaxation_profile(t, 3.0 - 8.0 / t, stat, 8)
    assert prof.loglog_slope == pytest.approx(-1.0, abs=1e-6)


def test_relaxation_orientation_flip():
    # approach from above (GGE style): stationary below the data
    t = np.linspace(1.0, 30.0, 60)
    stat = StationaryValue(L=4, alpha=1, gamma=0, mean=-2.0, error=0.0, window=(0, 1))
    prof = relaxation_profile(t, -2.0 + 4.0 / t, stat, 4)
    assert prof.flipped
    assert prof.loglog_slope == pytest.approx(-1.0, abs=1e-6)


def test_relaxation_excludes_nonpositive():
    t = np.array([1.0, 2.0, 3.0, 4.0])
    vals = np.array([4.0, 5.2, 4.5, 4.9])  # two samples overshoot the target
    stat = StationaryValue(L=2, alpha=1, gamma=0, mean=5.0, error=0.0, window=(0, 1))
    prof = relaxation_profile(t, vals, stat, 2)
    assert prof.excluded == 1
    assert prof.flipped is False


def test_relaxation_window_selection():
    t = np.linspace(1.0, 40.0, 100)
    vals = 2.0 - (6.0 / t + 0.2 * np.exp(-t))
    stat = StationaryValue(L=4, alpha=1, gamma=0, mean=2.0, error=0.0, window=(0, 1))
    prof = relaxation_profile(t, vals, stat, 4, loglog_window=(10.0, 40.0))
    assert prof.loglog_slope == pytest.approx(-1.0, abs=0.02)
