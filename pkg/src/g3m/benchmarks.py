"""Benchmark wealth processes and the impermanent loss factor.

For a price path S and weights w:

* constant-mix P: rebalanced to w at every grid step, P_0 = 1;
* geometric mean V = prod S_i ** w_i (the zero-fee pool value per unit);
* HODL H = sum w_i S_i (buy and hold the initial w);
* impermanent loss I_t = exp(0.5 * int_0^t f(w) ds) with
  f(w) = w' Sigma w - sum w_i sigma_i ** 2 <= 0 on the simplex.

V = P * I holds exactly in continuous time.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass

import numpy as np

from .market import CovarianceSpec, iter_log_increments, time_grid, validate_spec


def check_weights(w, allow_corners: bool = True) -> np.ndarray:
    w = np.atleast_1d(np.asarray(w, dtype=float))
    if w.ndim != 1 or np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
        raise ValueError(f"weights must lie on the simplex, got {w.tolist()}")
    if not allow_corners and np.any(w == 0):
        raise ValueError("weights must be strictly positive")
    return w


def _log_mix_increments(dlog: np.ndarray, w: np.ndarray) -> np.ndarray:
    """log(sum_i w_i exp(dlog_i)) along the last axis; exact for corner weights."""
    # column loop: reductions over a tiny trailing axis are slow in numpy
    with np.errstate(divide="ignore"):
        cols = [np.log(wi) + dlog[..., i] for i, wi in enumerate(w)]
    m = cols[0].copy()
    for c in cols[1:]:
        np.maximum(m, c, out=m)
    total = np.zeros_like(m)
    for c in cols:
        total += np.exp(c - m)
    return m + np.log(total)


def constant_mix_path(path, w) -> np.ndarray:
    """Wealth of the portfolio rebalanced to ``w`` at every grid step.

    ``path`` is a (T, n) price matrix (or a (P, T, n) stack).
    """
    S = np.asarray(path, dtype=float)
    w = check_weights(w)
    dlog = np.diff(np.log(S), axis=-2)
    inc = _log_mix_increments(dlog, w)
    zero = np.zeros(inc.shape[:-1] + (1,))
    return np.exp(np.concatenate([zero, np.cumsum(inc, axis=-1)], axis=-1))


def geometric_mean_path(path, w) -> np.ndarray:
    S = np.asarray(path, dtype=float)
    w = check_weights(w)
    return np.exp(np.log(S) @ w)


def hodl_path(path, w) -> np.ndarray:
    """Buy-and-hold of w_i / S_i(0) units of each asset."""
    S = np.asarray(path, dtype=float)
    w = check_weights(w)
    return (S / S[..., :1, :]) @ w


def excess_growth_rate(w, spec_or_cov) -> float:
    """f(w) = w' Sigma w - w' diag(Sigma), per year.

    Accepts a :class:`CovarianceSpec` or a covariance matrix.
    """
    cov = spec_or_cov.cov if isinstance(spec_or_cov, CovarianceSpec) else np.asarray(spec_or_cov, dtype=float)
    w = check_weights(w)
    if cov.shape != (w.size, w.size):
        raise ValueError(f"covariance shape {cov.shape} does not match {w.size} weights")
    f = float(w @ cov @ w - w @ np.diag(cov))
    scale = float(w @ np.diag(cov))
    assert f <= 1e-12 * max(scale, 1.0), f"excess growth rate positive on the simplex: {f}"
    return f


def impermanent_loss_path(times, w, spec_or_covs) -> np.ndarray:
    """I_t by trapezoid integration of 0.5 f(w) over the grid.

    ``spec_or_covs`` is a spec (constant covariance) or a (T, n, n) stack of
    covariance estimates, one per grid time.
    """
    times = np.asarray(times, dtype=float)
    if isinstance(spec_or_covs, CovarianceSpec) or np.ndim(spec_or_covs) == 2:
        f = excess_growth_rate(w, spec_or_covs)
        rates = np.full(times.size, f)
    else:
        rates = np.array([excess_growth_rate(w, c) for c in spec_or_covs])
    area = np.concatenate([[0.0], np.cumsum(0.5 * (rates[1:] + rates[:-1]) * np.diff(times))])
    return np.exp(0.5 * area)


def realized_il_path(path, w) -> np.ndarray:
    """I_t from the path's own realized covariance, step by step.

    Uses the per-step quadratic form 0.5 * (w'(x x')w - sum w_i x_i^2) of the
    log-increments x.  Unlike the model-covariance factor this tracks V/P to
    O(dt) pathwise.
    """
    S = np.asarray(path, dtype=float)
    w = check_weights(w)
    x = np.diff(np.log(S), axis=-2)
    q = 0.5 * ((x @ w) ** 2 - (x**2) @ w)
    zero = np.zeros(q.shape[:-1] + (1,))
    return np.exp(np.concatenate([zero, np.cumsum(q, axis=-1)], axis=-1))


@dataclass(frozen=True)
class ILDecomposition:
    times: np.ndarray
    P: np.ndarray
    V: np.ndarray
    H: np.ndarray
    I: np.ndarray
    f_path: np.ndarray

    def write_csv(self, fh, header_comment: str | None = None) -> None:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["time", "P", "V", "H", "I"])
        for row in zip(self.times, self.P, self.V, self.H, self.I):
            writer.writerow([repr(float(x)) for x in row])


def decompose(times, path, w, spec: CovarianceSpec) -> ILDecomposition:
    w = check_weights(w)
    return ILDecomposition(
        times=np.asarray(times, dtype=float),
        P=constant_mix_path(path, w),
        V=geometric_mean_path(path, w),
        H=hodl_path(path, w),
        I=impermanent_loss_path(times, w, spec),
        f_path=np.full(len(times), excess_growth_rate(w, spec)),
    )


@dataclass(frozen=True)
class ILReport:
    mean_log_ratio: float
    analytic: float
    std_error: float
    n_paths: int
    frac_v_le_h: float
    passed: bool
    z_score: float

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def mc_verify_il(
    spec: CovarianceSpec,
    w,
    horizon: float,
    dt: float,
    n_paths: int,
    seed: int = 0,
    n_se: float = 4.0,
    chunk: int = 2000,
) -> ILReport:
    """Monte Carlo check that E[log(V_T / P_T)] = 0.5 f(w) T.

    Paths are streamed in chunks; only per-path terminal quantities are kept.
    """
    spec = validate_spec(spec)
    w = check_weights(w)
    times = time_grid(horizon, dt)
    logs = []
    v_le_h = 0
    for inc in iter_log_increments(spec, times, seed, n_paths, chunk=chunk):
        log_v = (inc @ w).sum(axis=1)
        log_p = _log_mix_increments(inc, w).sum(axis=1)
        logs.append(log_v - log_p)
        log_s = inc.sum(axis=1)
        h = np.exp(log_s) @ w
        v_le_h += int(np.count_nonzero(np.exp(log_v) <= h * (1 + 1e-12)))
    x = np.concatenate(logs)
    analytic = 0.5 * excess_growth_rate(w, spec) * horizon
    mean = float(x.mean())
    se = float(x.std(ddof=1) / np.sqrt(x.size)) if x.size > 1 else float("nan")
    if se > 0:
        z = (mean - analytic) / se
        passed = abs(z) <= n_se
    else:
        z = 0.0 if mean == analytic else float("inf")
        passed = abs(mean - analytic) <= 1e-12
    return ILReport(mean, analytic, se, int(x.size), v_le_h / x.size, bool(passed), float(z))
