"""Synthetic pool panels with planted structure, for validating the analytics.

Every builder returns ``{pool_id: frame}`` in the panel input schema (hourly
UTC index) and is deterministic given its seed.
"""

from __future__ import annotations

import numpy as np
import pandas as pd

from .analytics import HOURS_PER_YEAR

START = "2021-01-04T00:00:00Z"


def pool_frame(log_prices: np.ndarray, fee_rates: np.ndarray, k: float = 500_000.0, start: str = START) -> pd.DataFrame:
    """50/50 zero-IL-fee bookkeeping for a zero-fee-invariant pool.

    ``log_prices`` is (T, 2); ``fee_rates`` (T,) are annualized fee rates
    applied to each hour's TVL (the first entry is ignored).
    """
    s = np.exp(log_prices)
    tvl = 2.0 * k * np.sqrt(s[:, 0] * s[:, 1])
    earned = np.concatenate([[0.0], fee_rates[1:] * tvl[1:] / HOURS_PER_YEAR])
    idx = pd.date_range(start, periods=s.shape[0], freq="h", tz="UTC")
    return pd.DataFrame(
        {
            "reserve0": 0.5 * tvl / s[:, 0],
            "reserve1": 0.5 * tvl / s[:, 1],
            "price0": s[:, 0],
            "price1": s[:, 1],
            "cum_fees": np.cumsum(earned),
            "tvl": tvl,
        },
        index=pd.DatetimeIndex(idx, name="timestamp"),
    )


def gbm_log_prices(rng, hours: int, sigma0: float, sigma1: float, rho: float) -> np.ndarray:
    dt = 1.0 / HOURS_PER_YEAR
    z = rng.standard_normal((hours - 1, 2))
    z[:, 1] = rho * z[:, 0] + np.sqrt(1 - rho**2) * z[:, 1]
    sig = np.array([sigma0, sigma1])
    inc = -0.5 * sig**2 * dt + z * sig * np.sqrt(dt)
    return np.vstack([np.zeros((1, 2)), np.cumsum(inc, axis=0)])


def expected_il_apy(sigma0: float, sigma1: float, rho: float) -> float:
    return float(np.expm1(-(sigma0**2 + sigma1**2 - 2 * rho * sigma0 * sigma1) / 8))


def iqr_panel(n_pools: int = 61, target_iqr: float = 0.26, median: float = 0.01, hours: int = 24 * 60, seed: int = 0):
    """Pools whose net APR targets have a cross-sectional IQR of exactly ``target_iqr``.

    Each pool gets its own volatility; its fee rate is the target minus the
    pool's expected impermanent loss, so measured net APR scatters around the
    target only through IL estimation noise.  Returns ``(frames, targets)``.
    """
    rng = np.random.default_rng(seed)
    from scipy.stats import norm

    scores = norm.ppf((np.arange(n_pools) + 0.5) / n_pools)
    q1, q3 = np.percentile(scores, [25, 75])
    targets = median + (scores - np.median(scores)) * target_iqr / (q3 - q1)
    rng.shuffle(targets)
    frames = {}
    for i, tgt in enumerate(targets):
        s0, s1, rho = rng.uniform(0.3, 0.9), rng.uniform(0.05, 0.3), rng.uniform(-0.2, 0.5)
        fee = tgt - expected_il_apy(s0, s1, rho)
        frames[f"pool{i:03d}"] = pool_frame(gbm_log_prices(rng, hours, s0, s1, rho), np.full(hours, fee))
    return frames, targets


def correlated_fee_panel(n_pools: int = 147, corr: float = 0.24, hours: int = 24 * 219, vol: float = 0.8, seed: int = 0):
    """Fee income driven partly by the hourly variance that drives IL.

    Token 0 moves by +-s_t each hour (random sign) against a constant token 1,
    so its squared return is exactly the planted variance v_t = s_t^2.  The
    hourly fee rate is ``base + scale * (corr * z(v_t) + sqrt(1 - corr^2) * e_t)``
    with z the standardized driver and e independent noise, so fee income and
    IL magnitude share correlation ``corr`` hour by hour and therefore over
    any common rolling window.
    """
    rng = np.random.default_rng(seed)
    half_width = np.sqrt(3.0)
    frames = {}
    for i in range(n_pools):
        u = rng.uniform(-half_width, half_width, size=hours)
        v = (vol**2 / HOURS_PER_YEAR) * (1.0 + 0.75 * u / half_width)
        steps = np.sqrt(v) * rng.choice([-1.0, 1.0], size=hours)
        steps[0] = 0.0
        logp = np.column_stack([np.cumsum(steps), np.zeros(hours)])
        e = rng.uniform(-half_width, half_width, size=hours)
        rates = 0.3 + 0.05 * (corr * u + np.sqrt(1 - corr**2) * e)
        frames[f"pool{i:03d}"] = pool_frame(logp, rates)
    return frames


def persistent_rank_panel(n_pools: int = 40, hours: int = 24 * 56, offset_sd: float = 0.20, noise_sd: float = 1.0, seed: int = 0):
    """Pools with persistent fee-level offsets plus i.i.d. hourly fee noise.

    The weekly fee window smooths the noise, so centered per-pool values lose
    their autocorrelation once the lag exceeds the window, while the ranking
    stays anchored by the offsets.
    """
    rng = np.random.default_rng(seed)
    offsets = rng.normal(0.0, offset_sd, size=n_pools)
    frames = {}
    for i in range(n_pools):
        s0 = rng.uniform(0.3, 0.6)
        logp = gbm_log_prices(rng, hours, s0, 0.05, 0.0)
        rates = 0.2 + offsets[i] + noise_sd * rng.standard_normal(hours)
        frames[f"pool{i:03d}"] = pool_frame(logp, rates)
    return frames
