"""Stationary averaging and finite-size scaling of the SRE data.

The stationary magic obeys ``M(L) = a L - b log L - c (+ d/L)``; the
coefficient of interest is ``b``, which the finite-size difference
``M(2L) - 2 M(L) = b log L + (c - b log 2)`` isolates without assuming the
extensive coefficient.  ``log_coefficient_curve`` extracts ``b`` per
measurement rate as the slope of that difference against ``log L`` and flags
values statistically compatible with zero at 2 sigma.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import FfmagicError


@dataclass(frozen=True)
class StationaryValue:
    """Time-averaged SRE at one (L, alpha, gamma)."""

    L: int
    alpha: float
    gamma: float
    mean: float
    error: float
    window: tuple[float, float]


@dataclass(frozen=True)
class ScalingFit:
    """Weighted least-squares coefficients of a L - b log L - c (+ d/L)."""

    alpha: float
    gamma: float
    a: float
    b: float
    c: float
    sigma_a: float
    sigma_b: float
    sigma_c: float
    d: float | None
    sigma_d: float | None
    residuals: tuple[float, ...]
    L_values: tuple[int, ...]


@dataclass(frozen=True)
class LogCoefficient:
    """Slope of the finite-size difference against log L at one gamma."""

    gamma: float
    alpha: float
    b: float
    sigma_b: float
    zero_compatible: bool
    n_pairs: int


@dataclass(frozen=True)
class RelaxationProfile:
    """Windowed decay slopes of Delta(t) = (stationary - M(t)) / size."""

    loglinear_slope: float
    loglinear_stderr: float
    loglog_slope: float
    loglog_stderr: float
    excluded: int
    flipped: bool


def time_average(times, values, errors, window: tuple[float, float],
                 *, L: int = 0, alpha: float = 0.0, gamma: float = 0.0) -> StationaryValue:
    """Mean over snapshots inside ``window``.

    The quoted error combines the cross-snapshot standard deviation and the
    mean per-snapshot sampling error in quadrature (deliberately without a
    1/sqrt(n) reduction: successive snapshots of one run are correlated).
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    errors = np.asarray(errors, dtype=float)
    lo, hi = window
    mask = (times >= lo - 1e-9) & (times <= hi + 1e-9)
    if not np.any(mask):
        raise FfmagicError(f"no snapshots inside window [{lo}, {hi}]")
    vals = values[mask]
    errs = errors[mask]
    sd_time = float(vals.std(ddof=1)) if vals.size > 1 else 0.0
    mean_err = float(np.nanmean(errs)) if errs.size else 0.0
    if math.isnan(mean_err):
        mean_err = 0.0
    return StationaryValue(L=L, alpha=alpha, gamma=gamma,
                           mean=float(vals.mean()),
                           error=math.hypot(sd_time, mean_err),
                           window=(float(lo), float(hi)))


def stationary_from_trajectories(snapshot_times, per_trajectory_values,
                                 window: tuple[float, float],
                                 *, L: int = 0, alpha: float = 0.0,
                                 gamma: float = 0.0) -> StationaryValue:
    """Stationary value of an ensemble: window-average each trajectory first.

    Independent trajectories give independent window averages, so the error
    is their standard error; it absorbs both string-sampling noise and the
    trajectory-to-trajectory spread.  Use :func:`time_average` for single
    deterministic series.
    """
    times = np.asarray(snapshot_times, dtype=float)
    vals = np.atleast_2d(np.asarray(per_trajectory_values, dtype=float))
    lo, hi = window
    mask = (times >= lo - 1e-9) & (times <= hi + 1e-9)
    if not np.any(mask):
        raise FfmagicError(f"no snapshots inside window [{lo}, {hi}]")
    avgs = vals[:, mask].mean(axis=1)
    n = avgs.size
    if n < 2:
        raise FfmagicError("need at least 2 trajectories; use time_average instead")
    return StationaryValue(L=L, alpha=alpha, gamma=gamma,
                           mean=float(avgs.mean()),
                           error=float(avgs.std(ddof=1) / math.sqrt(n)),
                           window=(float(lo), float(hi)))


def stationary_from_deterministic_series(times, values, window: tuple[float, float],
                                         *, L: int = 0, alpha: float = 0.0,
                                         gamma: float = 0.0) -> StationaryValue:
    """Stationary value of a deterministic (single-trajectory) series.

    For deterministic dynamics the only noise on each snapshot is the
    string-sampling error, independent between snapshots, so the window mean
    carries the standard error of the mean rather than the conservative
    cross-snapshot spread of :func:`time_average`.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    lo, hi = window
    mask = (times >= lo - 1e-9) & (times <= hi + 1e-9)
    n = int(np.count_nonzero(mask))
    if n < 2:
        raise FfmagicError(f"need >= 2 snapshots inside window [{lo}, {hi}]")
    vals = values[mask]
    return StationaryValue(L=L, alpha=alpha, gamma=gamma,
                           mean=float(vals.mean()),
                           error=float(vals.std(ddof=1) / math.sqrt(n)),
                           window=(float(lo), float(hi)))


def finite_size_difference(m_at_L: float, m_at_2L: float) -> float:
    """M(2L) - 2 M(L): cancels the extensive part, keeps b log L + const."""
    return m_at_2L - 2.0 * m_at_L


def _weighted_lstsq(X: np.ndarray, y: np.ndarray, errors: np.ndarray):
    """WLS solve; returns (beta, covariance, residuals).

    If any error vanishes the fit falls back to ordinary least squares with
    residual-scaled covariance; with positive errors the covariance is the
    exact (X^T W X)^-1 of known-noise WLS.
    """
    if np.all(errors > 0):
        w = 1.0 / errors
        Xw = X * w[:, None]
        yw = y * w
        known_noise = True
    else:
        Xw, yw = X, y
        known_noise = False
    beta, _, rank, _ = np.linalg.lstsq(Xw, yw, rcond=None)
    if rank < X.shape[1]:
        raise FfmagicError("rank-deficient design matrix: too few distinct sizes")
    cov = np.linalg.inv(Xw.T @ Xw)
    resid = y - X @ beta
    dof = X.shape[0] - X.shape[1]
    if not known_noise and dof > 0:
        cov = cov * float((yw - Xw @ beta) @ (yw - Xw @ beta)) / dof
    return beta, cov, resid


def fit_scaling(values: list[StationaryValue], include_inverse: bool = False) -> ScalingFit:
    """Fit M(L) = a L - b log L - c (+ d/L) with weights 1/error^2."""
    Ls = np.array([v.L for v in values], dtype=float)
    if len(set(v.L for v in values)) < 4:
        raise FfmagicError("need at least 4 distinct system sizes for the scaling fit")
    y = np.array([v.mean for v in values])
    errors = np.array([v.error for v in values])
    cols = [Ls, -np.log(Ls), -np.ones_like(Ls)]
    if include_inverse:
        cols.append(1.0 / Ls)
    X = np.stack(cols, axis=1)
    beta, cov, resid = _weighted_lstsq(X, y, errors)
    sig = np.sqrt(np.maximum(np.diag(cov), 0.0))
    return ScalingFit(
        alpha=values[0].alpha, gamma=values[0].gamma,
        a=float(beta[0]), b=float(beta[1]), c=float(beta[2]),
        sigma_a=float(sig[0]), sigma_b=float(sig[1]), sigma_c=float(sig[2]),
        d=float(beta[3]) if include_inverse else None,
        sigma_d=float(sig[3]) if include_inverse else None,
        residuals=tuple(float(r) for r in resid),
        L_values=tuple(int(v.L) for v in values),
    )


def log_coefficient_curve(stationary_by_gamma: dict[float, list[StationaryValue]],
                          ) -> list[LogCoefficient]:
    """b(gamma) with uncertainties and 2-sigma zero-compatibility flags.

    For each gamma, every (L, 2L) pair present among the stationary values
    yields one finite-size difference; the weighted slope of those
    differences against log L is b.
    """
    out = []
    for gamma, values in sorted(stationary_by_gamma.items()):
        by_L = {v.L: v for v in values}
        pairs = sorted(L for L in by_L if 2 * L in by_L)
        if len(pairs) < 2:
            raise FfmagicError(
                f"gamma={gamma}: need >= 2 (L, 2L) pairs, have {len(pairs)}")
        diffs = np.array([by_L[2 * L].mean - 2.0 * by_L[L].mean for L in pairs])
        errs = np.array([math.hypot(by_L[2 * L].error, 2.0 * by_L[L].error)
                         for L in pairs])
        X = np.stack([np.log(np.array(pairs, dtype=float)),
                      np.ones(len(pairs))], axis=1)
        beta, cov, _ = _weighted_lstsq(X, diffs, errs)
        b = float(beta[0])
        sigma_b = float(math.sqrt(max(cov[0, 0], 0.0)))
        out.append(LogCoefficient(
            gamma=float(gamma), alpha=values[0].alpha, b=b, sigma_b=sigma_b,
            zero_compatible=abs(b) < 2.0 * sigma_b, n_pairs=len(pairs)))
    return out


def _slope_fit(x: np.ndarray, y: np.ndarray) -> tuple[float, float]:
    X = np.stack([x, np.ones_like(x)], axis=1)
    beta, cov, _ = _weighted_lstsq(X, y, np.zeros_like(y))
    return float(beta[0]), float(math.sqrt(max(cov[0, 0], 0.0)))


def relaxation_profile(times, values, stationary: StationaryValue, size: int,
                       loglinear_window: tuple[float, float] | None = None,
                       loglog_window: tuple[float, float] | None = None,
                       orientation: str = "auto") -> RelaxationProfile:
    """Windowed decay slopes of the approach to the stationary value.

    Computes Delta(t) = (stationary - M(t)) / size; the log-linear slope
    targets the late-time finite-size exponential and the log-log slope the
    intermediate algebraic regime.  No regime classification is attempted.
    With ``orientation="auto"`` a predominantly negative Delta is flipped in
    sign (relaxation from below), recorded in the result.
    """
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    delta = (stationary.mean - values) / size
    flipped = False
    if orientation == "auto" and np.median(delta[times > 0]) < 0:
        delta = -delta
        flipped = True
    keep = (delta > 0) & (times > 0)
    excluded = int(np.count_nonzero(~keep & (times > 0)))
    t = times[keep]
    d = delta[keep]
    if t.size < 2:
        raise FfmagicError("fewer than two positive relaxation samples")

    def in_window(window):
        if window is None:
            return np.ones(t.size, dtype=bool)
        return (t >= window[0] - 1e-9) & (t <= window[1] + 1e-9)

    m1 = in_window(loglinear_window)
    m2 = in_window(loglog_window)
    if np.count_nonzero(m1) < 2 or np.count_nonzero(m2) < 2:
        raise FfmagicError("relaxation window contains fewer than two samples")
    lin_slope, lin_err = _slope_fit(t[m1], np.log(d[m1]))
    log_slope, log_err = _slope_fit(np.log(t[m2]), np.log(d[m2]))
    return RelaxationProfile(
        loglinear_slope=lin_slope, loglinear_stderr=lin_err,
        loglog_slope=log_slope, loglog_stderr=log_err,
        excluded=excluded, flipped=flipped)
