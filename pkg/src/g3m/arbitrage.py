"""Arbitrageur agent and the pool simulation harness.

The agent trades a pool back inside its no-arbitrage bands at the current
external prices.  For a pair (i, j) where the pool is short of token i,
paying ``d_i`` in returns

    d_j = theta_j * (1 - (theta_i / (theta_i + (1 - phi) d_i)) ** (w_i / w_j))

and the profit ``d_j S_j - d_i S_i`` is maximized where the fee-adjusted
ratio ``(theta_i + (1 - phi) d_i) / (theta_j - d_j)`` equals the lower band
edge.  That equation has a closed-form solution, so no root search is
needed.  Because the full ``d_i`` is credited to the pool, the post-trade
ratio ends slightly inside the band when ``phi > 0`` and exactly on it
when ``phi == 0``.

With more than two tokens the agent repeats the pairwise trade on the most
violated pair until every pair is inside its band.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field

import numpy as np

from .errors import ArbitrageError, BoundViolation
from .market import CovarianceSpec, PricePathSet, path_rng, sample_paths, time_grid
from .pool import (
    DEFAULT_TOL,
    PoolState,
    TradeBatch,
    apply_batch,
    log_invariant,
    no_arb_band,
    wealth_constant,
)


@dataclass(frozen=True)
class ArbResult:
    """``batch`` holds the atomic trades in execution order; replay it with
    ``mode="sequential"``."""

    batch: TradeBatch
    profit: float
    post_state: PoolState
    fees: float = 0.0
    iterations: int = 0


def _pair_trade(theta, prices, w, phi, i, j, violation):
    """Profit-maximizing (d_i in, d_j out) for rows already known to be short of i.

    All arguments are row-aligned arrays; ``violation`` is the log distance
    of theta_i/theta_j below the lower band edge.
    """
    rows = np.arange(theta.shape[0])
    th_i, th_j = theta[rows, i], theta[rows, j]
    r = w[i] / w[j]
    d_in = th_i * np.expm1(violation / (1.0 + r)) / (1.0 - phi)
    d_out = -th_j * np.expm1(-r * np.log1p((1.0 - phi) * d_in / th_i))
    if not (np.all(np.isfinite(d_in)) and np.all(np.isfinite(d_out))):
        raise ArbitrageError(f"non-finite arbitrage trade (violation={violation!r})")
    s_i, s_j = prices[rows, i], prices[rows, j]
    return d_in, d_out, d_out * s_j - d_in * s_i, phi * d_in * s_i


def _scaled_logs(theta, prices, logw):
    # u_i = log(theta_i S_i / w_i); the pair (i, j) is in band iff |u_i - u_j| <= -log(1 - phi)
    return np.log(theta) + np.log(prices) - logw


def arbitrage_arrays(theta, prices, weights, fee, tol=DEFAULT_TOL, max_iter=None, record=False):
    """Vectorized arbitrage over a batch of pools sharing weights and fee.

    ``theta`` and ``prices`` have shape (P, n).  Returns
    ``(theta_post, profit, fees, iterations, trades)`` where ``trades`` is a
    per-row list of atomic trade vectors when ``record`` is set.
    """
    theta = np.array(theta, dtype=float, copy=True)
    prices = np.asarray(prices, dtype=float)
    w = np.asarray(weights, dtype=float)
    P, n = theta.shape
    if max_iter is None:
        max_iter = 64 * n * n
    logw = np.log(w)
    half_width = -np.log1p(-fee)
    profit = np.zeros(P)
    fees = np.zeros(P)
    trades = [[] for _ in range(P)] if record else None
    active = np.arange(P)
    it = 0
    while active.size:
        u = _scaled_logs(theta[active], prices[active], logw)
        i = np.argmin(u, axis=1)
        j = np.argmax(u, axis=1)
        gap = u[np.arange(active.size), j] - u[np.arange(active.size), i] - half_width
        hot = gap > tol
        if not np.any(hot):
            break
        if it >= max_iter:
            raise ArbitrageError(f"arbitrage did not converge within {max_iter} pair trades (max gap {gap.max():.3e})")
        rows = active[hot]
        i, j, gap = i[hot], j[hot], gap[hot]
        d_in, d_out, pnl, fee_value = _pair_trade(theta[rows], prices[rows], w, fee, i, j, gap)
        theta[rows, i] += d_in
        theta[rows, j] -= d_out
        profit[rows] += pnl
        fees[rows] += fee_value
        if record:
            for r, a, b, x, y in zip(rows, i, j, d_in, d_out):
                tau = np.zeros(n)
                tau[a], tau[b] = x, -y
                trades[r].append(tau)
        active = rows
        it += 1
    return theta, profit, fees, it, trades


def _result(pool, profit, fees, it, trades) -> ArbResult:
    batch = TradeBatch(np.array(trades).reshape(len(trades), pool.n))
    post = apply_batch(pool, batch, mode="sequential") if len(batch) else pool
    return ArbResult(batch=batch, profit=float(profit), post_state=post, fees=float(fees), iterations=it)


def pairwise_arb(pool: PoolState, i: int, j: int, prices, tol: float = DEFAULT_TOL) -> ArbResult:
    """Restore the (i, j) band with a single profit-maximizing swap."""
    prices = np.asarray(prices, dtype=float)
    if i == j:
        raise ValueError("pairwise_arb needs two distinct assets")
    ratio = pool.inventory[i] / pool.inventory[j]
    lo, hi = no_arb_band(pool, i, j, prices)
    if ratio < lo * (1 - tol):
        src, dst, viol = i, j, np.log(lo / ratio)
    elif ratio > hi * (1 + tol):
        src, dst, viol = j, i, np.log(ratio / hi)
    else:
        return ArbResult(TradeBatch(np.zeros((0, pool.n))), 0.0, pool)
    theta = pool.inventory[None, :]
    d_in, d_out, pnl, fee_value = _pair_trade(
        theta, prices[None, :], pool.weights, pool.fee, np.array([src]), np.array([dst]), np.array([viol])
    )
    tau = np.zeros(pool.n)
    tau[src], tau[dst] = d_in[0], -d_out[0]
    return _result(pool, pnl[0], fee_value[0], 1, [tau])


def arbitrage_to_band(pool: PoolState, prices, tol: float = DEFAULT_TOL, max_iter: int | None = None) -> ArbResult:
    """Greedy most-violated-pair arbitrage until all pairs are in band."""
    prices = np.asarray(prices, dtype=float)
    theta, profit, fees, it, trades = arbitrage_arrays(
        pool.inventory[None, :], prices[None, :], pool.weights, pool.fee, tol=tol, max_iter=max_iter, record=True
    )
    return _result(pool, profit[0], fees[0], it, trades[0])


def swap_out_amount(theta, weights, fee, i, j, amount_in):
    """Tokens j released for ``amount_in`` of token i (vectorized over rows)."""
    theta = np.asarray(theta, dtype=float)
    w = np.asarray(weights, dtype=float)
    r = w[i] / w[j]
    th_i = np.take_along_axis(theta, np.atleast_1d(i)[:, None], 1)[:, 0] if theta.ndim == 2 else theta[i]
    th_j = np.take_along_axis(theta, np.atleast_1d(j)[:, None], 1)[:, 0] if theta.ndim == 2 else theta[j]
    return -th_j * np.expm1(-r * np.log1p((1.0 - fee) * amount_in / th_i))


@dataclass(frozen=True)
class NoiseTrader:
    """Uninformed order flow: Poisson arrivals, exponential sizes.

    ``rate`` is the expected number of swaps per year; each swap pays in a
    uniformly chosen token an amount that is an exponential fraction (mean
    ``mean_fraction``) of the current reserve.  No calibration is implied.
    """

    rate: float
    mean_fraction: float = 0.001

    def schedule(self, seed: int, path_id: int, dts: np.ndarray, n: int):
        rng = path_rng(seed, path_id, stream=1)
        counts = rng.poisson(self.rate * dts)
        total = int(counts.sum())
        src = rng.integers(0, n, size=total)
        dst = (src + rng.integers(1, n, size=total)) % n
        frac = rng.exponential(self.mean_fraction, size=total)
        return counts, src, dst, frac


@dataclass
class SimulationTrace:
    times: np.ndarray
    inventory: np.ndarray  # (P, T, n) after arbitrage
    prices: np.ndarray  # (P, T, n)
    K: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    k: np.ndarray
    v: np.ndarray
    profit: np.ndarray
    fees: np.ndarray
    weights: np.ndarray
    fee: float
    seed: int
    diagnostics: dict = field(default_factory=dict)

    @property
    def cumulative_fees(self) -> np.ndarray:
        return np.cumsum(self.fees, axis=1)

    @property
    def n_paths(self) -> int:
        return self.K.shape[0]

    def to_frame(self, path: int = 0):
        import pandas as pd

        return pd.DataFrame(
            {
                "time": self.times,
                "K": self.K[path],
                "lower_bound": self.lower[path],
                "upper_bound": self.upper[path],
                "k": self.k[path],
                "v": self.v[path],
                "step_profit": self.profit[path],
                "cumulative_fees": self.cumulative_fees[path],
            }
        )

    def write_csv(self, fh, path: int = 0, header_comment: str | None = None) -> None:
        if header_comment:
            fh.write(f"# {header_comment}\n")
        writer = csv.writer(fh, lineterminator="\n")
        cols = ["time", "K", "lower_bound", "upper_bound", "k", "v", "step_profit", "cumulative_fees"]
        writer.writerow(cols)
        arrays = [self.times, self.K[path], self.lower[path], self.upper[path], self.k[path], self.v[path],
                  self.profit[path], self.cumulative_fees[path]]
        for row in zip(*arrays):
            writer.writerow([repr(float(x)) for x in row])


def run_simulation(
    source: CovarianceSpec | PricePathSet,
    pool: PoolState,
    grid=None,
    *,
    horizon: float | None = None,
    dt: float | None = None,
    n_paths: int = 1,
    seed: int = 0,
    tol: float = DEFAULT_TOL,
    bound_rtol: float = 1e-12,
    strict: bool = True,
    noise: NoiseTrader | None = None,
) -> SimulationTrace:
    """Arbitrage ``pool`` at every grid time of every path and record the trace.

    ``source`` is either pre-generated paths or a spec, in which case paths
    are sampled on ``grid`` (or ``time_grid(horizon, dt)``).  Band, wealth
    bound, profit and invariant checks run at every step.  With
    ``strict=True`` the first failure raises :class:`BoundViolation`;
    otherwise failures are counted in ``trace.diagnostics``.
    """
    if isinstance(source, PricePathSet):
        paths = source
        if pool.n != paths.n_assets:
            raise ValueError(f"pool has {pool.n} assets, paths have {paths.n_assets}")
    else:
        if grid is None:
            grid = time_grid(horizon, dt)
        paths = sample_paths(source, times=grid, n_paths=n_paths, seed=seed)
    times = paths.times
    S = paths.paths
    P, T, n = S.shape
    w, phi = pool.weights, pool.fee
    logw = np.log(w)
    half_width = -np.log1p(-phi)
    c = wealth_constant(w)

    theta = np.tile(pool.inventory, (P, 1))
    inv = np.empty((P, T, n))
    K, lower, upper, kk, vv, profit, fees = (np.empty((P, T)) for _ in range(7))
    diag = {
        "band_violations": 0,
        "bound_violations": 0,
        "negative_profit_steps": 0,
        "invariant_decreases": 0,
        "max_zero_fee_gap": 0.0,
        "max_band_gap": float("-inf"),
        "min_bound_ratio": float("inf"),
        "max_bound_ratio": float("-inf"),
        "trades": 0,
    }

    sched = None
    if noise is not None:
        sched = [noise.schedule(paths.seed, pid, np.diff(times, prepend=0.0), n) for pid in paths.path_ids]
        cursors = np.zeros(P, dtype=int)

    def fail(msg):
        if strict:
            raise BoundViolation(msg)

    log_k_prev = np.full(P, log_invariant(w, pool.inventory))
    for t in range(T):
        s = S[:, t, :]
        noise_fees = np.zeros(P)
        if sched is not None:
            for p, (counts, src, dst, frac) in enumerate(sched):
                for _ in range(counts[t]):
                    a, b, f = src[cursors[p]], dst[cursors[p]], frac[cursors[p]]
                    cursors[p] += 1
                    d_in = f * theta[p, a]
                    d_out = swap_out_amount(theta[p], w, phi, a, b, d_in)
                    theta[p, a] += d_in
                    theta[p, b] -= d_out
                    noise_fees[p] += phi * d_in * s[p, a]
        theta, pnl, fee_value, it, _ = arbitrage_arrays(theta, s, w, phi, tol=tol)
        diag["trades"] += it
        inv[:, t] = theta

        u = _scaled_logs(theta, s, logw)
        band_gap = u.max(axis=1) - u.min(axis=1) - half_width
        diag["max_band_gap"] = max(diag["max_band_gap"], float(band_gap.max()))
        bad = band_gap > tol
        if np.any(bad):
            diag["band_violations"] += int(bad.sum())
            fail(f"band violated at t={times[t]} on {int(bad.sum())} paths (gap {band_gap.max():.3e})")
        if np.any(pnl < 0):
            diag["negative_profit_steps"] += int((pnl < 0).sum())
            fail(f"negative arbitrage profit at t={times[t]}: {pnl.min()!r}")

        log_k = np.log(theta) @ w
        dk = log_k - log_k_prev
        shrink = dk < -1e-12 if phi > 0 else np.abs(dk) > 1e-12
        if np.any(shrink):
            diag["invariant_decreases"] += int(shrink.sum())
            fail(f"invariant moved unexpectedly at t={times[t]}: {dk[shrink][0]!r}")
        log_k_prev = log_k

        k = np.exp(log_k)
        v = np.exp(np.log(s) @ w)
        wealth = np.einsum("pi,pi->p", theta, s)
        ratio = wealth / (c * k * v)
        diag["min_bound_ratio"] = min(diag["min_bound_ratio"], float(ratio.min()))
        diag["max_bound_ratio"] = max(diag["max_bound_ratio"], float(ratio.max()))
        if phi == 0:
            diag["max_zero_fee_gap"] = max(diag["max_zero_fee_gap"], float(np.abs(ratio - 1).max()))
        lo, hi = (1 - phi) * c * k * v, c * k * v / (1 - phi)
        out = (wealth < lo * (1 - bound_rtol)) | (wealth > hi * (1 + bound_rtol))
        if np.any(out):
            diag["bound_violations"] += int(out.sum())
            fail(f"wealth bound violated at t={times[t]} on {int(out.sum())} paths")

        K[:, t], lower[:, t], upper[:, t], kk[:, t], vv[:, t] = wealth, lo, hi, k, v
        profit[:, t] = pnl
        fees[:, t] = fee_value + noise_fees

    return SimulationTrace(
        times=times, inventory=inv, prices=S, K=K, lower=lower, upper=upper, k=kk, v=vv,
        profit=profit, fees=fees, weights=w, fee=phi, seed=paths.seed, diagnostics=diag,
    )
