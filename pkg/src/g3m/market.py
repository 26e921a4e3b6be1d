"""Correlated geometric Brownian motion price paths.

Prices follow dS/S = mu dt + dW with Cov(dW) = Sigma dt, where
Sigma_ij = rho_ij sigma_i sigma_j.  Time is measured in years and
volatilities are quoted per sqrt(year).  Every path starts at (1, ..., 1).

Each path owns its RNG stream, keyed by ``(seed, path_id)``, so any subset
of paths can be regenerated (or produced by a different worker) and comes
out bit-identical.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Iterator, Sequence, Union

import numpy as np

from .errors import NotPSDError, SpecError

Drift = Union[np.ndarray, Callable[[float], np.ndarray]]

PSD_RTOL = 1e-10


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class CovarianceSpec:
    """Volatility, correlation and drift of the risky assets.

    ``mu`` is either a length-n vector or a callable ``t -> vector``; a
    callable drift is held constant over each grid step (left endpoint).
    The Sigma factor is computed once at construction.
    """

    sigma: np.ndarray
    rho: np.ndarray
    mu: Drift = None
    factor: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        sigma = np.atleast_1d(np.array(self.sigma, dtype=float))
        if sigma.ndim != 1:
            raise SpecError("sigma must be a vector")
        n = sigma.size
        rho = np.array(self.rho, dtype=float)
        if rho.ndim == 0 and n == 1:
            rho = rho.reshape(1, 1)
        if rho.shape != (n, n):
            raise SpecError(f"rho has shape {rho.shape}, expected {(n, n)}")
        if np.any(~np.isfinite(sigma)) or np.any(sigma < 0):
            raise SpecError(f"volatilities must be finite and >= 0, got {sigma.tolist()}")
        if not np.all(np.isfinite(rho)):
            raise SpecError("rho contains non-finite entries")
        if not np.allclose(rho, rho.T, atol=1e-12, rtol=0):
            raise SpecError("rho is not symmetric")
        if not np.allclose(np.diag(rho), 1.0, atol=1e-12, rtol=0):
            raise SpecError("rho must have unit diagonal")

        mu = self.mu
        if mu is None:
            mu = np.zeros(n)
        if not callable(mu):
            mu = np.atleast_1d(np.array(mu, dtype=float))
            if mu.shape != (n,):
                raise SpecError(f"mu has shape {mu.shape}, expected {(n,)}")
            mu = _frozen(mu)

        object.__setattr__(self, "sigma", _frozen(sigma))
        object.__setattr__(self, "rho", _frozen(rho))
        object.__setattr__(self, "mu", mu)
        object.__setattr__(self, "factor", _frozen(_sigma_factor(sigma, rho)))

    @property
    def n(self) -> int:
        return self.sigma.size

    @property
    def cov(self) -> np.ndarray:
        """Annualized covariance matrix Sigma."""
        return self.rho * np.outer(self.sigma, self.sigma)

    def drift(self, t: float) -> np.ndarray:
        if callable(self.mu):
            m = np.atleast_1d(np.asarray(self.mu(t), dtype=float))
            if m.shape != (self.n,):
                raise SpecError(f"mu({t}) has shape {m.shape}, expected {(self.n,)}")
            return m
        return self.mu

    def to_dict(self) -> dict:
        if callable(self.mu):
            raise SpecError("a callable drift cannot be serialized")
        return {"sigma": self.sigma.tolist(), "rho": self.rho.tolist(), "mu": self.mu.tolist()}


def _sigma_factor(sigma: np.ndarray, rho: np.ndarray) -> np.ndarray:
    """Return F with F F^T = Sigma; lower-triangular whenever rho is PD."""
    eig = np.linalg.eigvalsh(rho)
    if eig[0] < -PSD_RTOL * max(eig[-1], 1.0):
        raise NotPSDError(float(eig[0]))
    try:
        chol = np.linalg.cholesky(rho)
    except np.linalg.LinAlgError:
        # singular but PSD: clip the tiny negative eigenvalues
        vals, vecs = np.linalg.eigh(rho)
        chol = vecs * np.sqrt(np.clip(vals, 0.0, None))
    return sigma[:, None] * chol


def validate_spec(spec: CovarianceSpec | dict) -> CovarianceSpec:
    """Check a spec (or build one from a mapping) and return it with its factor cached."""
    if isinstance(spec, CovarianceSpec):
        return spec
    try:
        return CovarianceSpec(**spec)
    except TypeError as exc:
        raise SpecError(str(exc)) from exc


def time_grid(horizon: float, dt: float) -> np.ndarray:
    """Uniform grid 0, dt, 2dt, ... ending exactly at ``horizon``."""
    if not horizon > 0:
        raise SpecError("horizon must be > 0")
    if not 0 < dt <= horizon:
        raise SpecError("dt must satisfy 0 < dt <= horizon")
    steps = horizon / dt
    n_steps = int(round(steps)) if abs(steps - round(steps)) < 1e-9 * max(steps, 1) else int(np.ceil(steps))
    times = np.arange(n_steps + 1, dtype=float) * dt
    times[-1] = horizon
    return times


def path_rng(seed: int, path_id: int, stream: int = 0) -> np.random.Generator:
    """Independent generator for one path; ``stream`` separates auxiliary uses."""
    key = (int(path_id),) if stream == 0 else (int(path_id), int(stream))
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


def _check_grid(times) -> np.ndarray:
    times = np.asarray(times, dtype=float)
    if times.ndim != 1 or times.size < 2 or times[0] != 0.0 or np.any(np.diff(times) <= 0):
        raise SpecError("time grid must start at 0 and be strictly increasing")
    return times


def _drift_terms(spec: CovarianceSpec, times: np.ndarray) -> np.ndarray:
    dts = np.diff(times)
    half_var = 0.5 * spec.sigma**2
    if callable(spec.mu):
        mus = np.stack([spec.drift(t) for t in times[:-1]])
    else:
        mus = np.broadcast_to(spec.mu, (dts.size, spec.n))
    return (mus - half_var) * dts[:, None]


def log_increments(spec: CovarianceSpec, times, seed: int, path_ids: Sequence[int]) -> np.ndarray:
    """Log-price increments, shape (len(path_ids), len(times) - 1, n).

    Exact lognormal transition for a drift/covariance held constant over
    each step.
    """
    times = _check_grid(times)
    drift = _drift_terms(spec, times)
    sqdt = np.sqrt(np.diff(times))[:, None]
    out = np.empty((len(path_ids), times.size - 1, spec.n))
    for row, pid in enumerate(path_ids):
        z = path_rng(seed, pid).standard_normal((times.size - 1, spec.n))
        out[row] = drift + (z @ spec.factor.T) * sqdt
    return out


def iter_log_increments(
    spec: CovarianceSpec, times, seed: int, n_paths: int, chunk: int = 1000
) -> Iterator[np.ndarray]:
    """Yield increments for paths 0..n_paths-1 in chunks of ``chunk`` paths."""
    for start in range(0, n_paths, chunk):
        yield log_increments(spec, times, seed, range(start, min(start + chunk, n_paths)))


@dataclass(frozen=True)
class PricePathSet:
    times: np.ndarray
    paths: np.ndarray  # (n_paths, n_times, n_assets)
    spec: CovarianceSpec
    seed: int
    path_ids: np.ndarray

    @property
    def n_paths(self) -> int:
        return self.paths.shape[0]

    @property
    def n_assets(self) -> int:
        return self.paths.shape[2]

    def write_csv(self, fh, header_comment: str | None = None, column_names: bool = True) -> None:
        """Write ``path_id,time,asset_0,...`` rows to an open text stream."""
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        if column_names:
            writer.writerow(["path_id", "time"] + [f"asset_{i}" for i in range(self.n_assets)])
        for pid, path in zip(self.path_ids, self.paths):
            for t, row in zip(self.times, path):
                writer.writerow([int(pid), repr(float(t))] + [repr(float(v)) for v in row])


def sample_paths(
    spec: CovarianceSpec,
    horizon: float | None = None,
    dt: float | None = None,
    n_paths: int = 1,
    seed: int = 0,
    *,
    times=None,
    path_ids: Sequence[int] | None = None,
) -> PricePathSet:
    """Simulate price paths on ``time_grid(horizon, dt)`` (or an explicit ``times``).

    ``path_ids`` selects a subset of the seed's path streams; the default is
    ``range(n_paths)``.
    """
    spec = validate_spec(spec)
    if times is None:
        if horizon is None or dt is None:
            raise SpecError("give either (horizon, dt) or times")
        times = time_grid(horizon, dt)
    times = _check_grid(times)
    ids = np.arange(n_paths) if path_ids is None else np.asarray(path_ids, dtype=int)
    inc = log_increments(spec, times, seed, ids)
    logs = np.concatenate([np.zeros((ids.size, 1, spec.n)), np.cumsum(inc, axis=1)], axis=1)
    paths = np.exp(logs)
    ids = ids.copy()
    ids.setflags(write=False)
    return PricePathSet(times=_frozen(times), paths=_frozen(paths), spec=spec, seed=seed, path_ids=ids)
