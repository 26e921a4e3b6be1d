"""Pool profitability metrics on hourly multi-pool panels.

Per pool and hour, over a trailing window (168 hours by default):

* ``il_apy``: realized (uncentered) covariance of hourly log-returns of
  the two token prices gives the excess growth rate f(w); the annualized drift f/2 is
  reported exp-compounded (APY) by default;
* ``fee_apr``: fee income over the window divided by the window's average
  TVL, simple-annualized (APR) by default;
* ``net_apr = fee_apr + il_apy``.

Metrics stay undefined (NaN) until a full window of data is available.
Gaps of at most ``max_ffill_hours`` are forward-filled and flagged; longer
gaps restart the rolling window.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Literal, Mapping

import numpy as np
import pandas as pd
from scipy.stats import rankdata

from .errors import PanelError

log = logging.getLogger(__name__)

HOURS_PER_YEAR = 8760
DEFAULT_WINDOW = 168
DEFAULT_TVL_FLOOR = 200_000.0
COLUMNS = ["timestamp", "reserve0", "reserve1", "price0", "price1", "cum_fees", "tvl"]
NUMERIC = COLUMNS[1:]

Convention = Literal["apy", "apr"]


@dataclass
class PoolPanel:
    """Regularized hourly records per pool.

    Each frame is indexed by an hourly UTC ``DatetimeIndex`` and carries the
    numeric schema columns plus ``filled`` (forward-filled row) and
    ``segment`` (rolling windows never cross segment boundaries).
    """

    frames: dict[str, pd.DataFrame] = field(default_factory=dict)
    weights: dict[str, np.ndarray] = field(default_factory=dict)
    excluded: list[str] = field(default_factory=list)
    gaps: list[dict] = field(default_factory=list)

    @property
    def pools(self) -> list[str]:
        return sorted(self.frames)

    def __len__(self) -> int:
        return len(self.frames)

    def pool_weights(self, pool: str) -> np.ndarray:
        return self.weights.get(pool, np.array([0.5, 0.5]))

    @classmethod
    def from_frames(
        cls,
        frames: Mapping[str, pd.DataFrame],
        tvl_floor: float = DEFAULT_TVL_FLOOR,
        max_ffill_hours: int = 6,
        weights: Mapping[str, Iterable[float]] | None = None,
    ) -> "PoolPanel":
        panel = cls(weights={k: np.asarray(v, dtype=float) for k, v in (weights or {}).items()})
        for pool in sorted(frames):
            df = _validate(pool, frames[pool])
            low = df["tvl"] < tvl_floor
            if low.any():
                log.info("pool %s: dropping %d records below TVL floor %g", pool, int(low.sum()), tvl_floor)
                df = df[~low]
            if df.empty:
                log.info("pool %s excluded: no records above TVL floor", pool)
                panel.excluded.append(pool)
                continue
            frame, gaps = _regularize(df, max_ffill_hours)
            panel.frames[pool] = frame
            panel.gaps.extend({"pool": pool, **g} for g in gaps)
        return panel


def _validate(pool: str, df: pd.DataFrame) -> pd.DataFrame:
    df = df.copy()
    if "timestamp" not in df.columns and isinstance(df.index, pd.DatetimeIndex):
        df = df.rename_axis("timestamp").reset_index()
    if "cum_fees" not in df.columns:
        df["cum_fees"] = np.nan
    missing = [c for c in COLUMNS if c not in df.columns]
    if missing:
        raise PanelError(f"pool {pool}: missing columns {missing}")
    extra = [c for c in df.columns if c not in COLUMNS]
    if extra:
        raise PanelError(f"pool {pool}: unexpected columns {extra}")
    try:
        df["timestamp"] = pd.to_datetime(df["timestamp"], utc=True, format="ISO8601")
    except (ValueError, TypeError) as exc:
        raise PanelError(f"pool {pool}: bad timestamp ({exc})") from exc
    for c in NUMERIC:
        try:
            df[c] = pd.to_numeric(df[c], errors="raise").astype(float)
        except (ValueError, TypeError) as exc:
            raise PanelError(f"pool {pool}: column {c} is not numeric ({exc})") from exc
    if df.empty:
        return df.set_index("timestamp")
    if not df["timestamp"].is_monotonic_increasing or df["timestamp"].duplicated().any():
        raise PanelError(f"pool {pool}: timestamps are not strictly increasing")
    for c in ("reserve0", "reserve1", "price0", "price1"):
        if (df[c] <= 0).any() or df[c].isna().any():
            raise PanelError(f"pool {pool}: non-positive or missing values in {c}")
    return df.set_index("timestamp")[NUMERIC]


def _regularize(df: pd.DataFrame, max_ffill_hours: int):
    idx = df.index
    if (idx != idx.floor("h")).any():
        raise PanelError("timestamps must fall on whole hours")
    hours = np.diff(idx.asi8) // (3600 * 10**9)
    gaps = []
    segment_of_obs = np.zeros(len(idx), dtype=int)
    seg = 0
    for k, h in enumerate(hours, start=1):
        if h > 1:
            broke = bool(h > max_ffill_hours)
            gaps.append({"start": idx[k - 1].isoformat(), "end": idx[k].isoformat(), "hours": int(h), "restart": broke})
            if broke:
                seg += 1
        segment_of_obs[k] = seg
    pieces = []
    for s in range(seg + 1):
        part = df[segment_of_obs == s]
        grid = pd.date_range(part.index[0], part.index[-1], freq="h")
        full = part.reindex(grid)
        filled = full["tvl"].isna()
        full = full.ffill()
        full["filled"] = filled.to_numpy()
        full["segment"] = s
        pieces.append(full)
    return pd.concat(pieces), gaps


def load_panel(
    sources: Iterable[str | Path],
    tvl_floor: float = DEFAULT_TVL_FLOOR,
    max_ffill_hours: int = 6,
) -> PoolPanel:
    """Read one CSV per pool (pool id = file stem) and validate it."""
    frames = {}
    for src in sources:
        path = Path(src)
        try:
            df = pd.read_csv(path, comment="#", dtype={"timestamp": str}, float_precision="round_trip")
        except pd.errors.EmptyDataError:
            df = pd.DataFrame(columns=COLUMNS)
        except pd.errors.ParserError as exc:
            raise PanelError(f"{path}: {exc}") from exc
        frames[path.stem] = df
    return PoolPanel.from_frames(frames, tvl_floor=tvl_floor, max_ffill_hours=max_ffill_hours)


def write_pool_csv(frame: pd.DataFrame, fh) -> None:
    """Write a pool frame in the input schema (ISO-8601 UTC timestamps)."""
    out = frame[NUMERIC].copy()
    out.insert(0, "timestamp", out.index.strftime("%Y-%m-%dT%H:%M:%SZ"))
    out.to_csv(fh, index=False, lineterminator="\n", float_format="%.17g")


def _hourly_index(panel: PoolPanel) -> pd.DatetimeIndex:
    if not panel.frames:
        return pd.DatetimeIndex([], tz="UTC")
    start = min(f.index[0] for f in panel.frames.values())
    end = max(f.index[-1] for f in panel.frames.values())
    return pd.date_range(start, end, freq="h")


def _per_segment(frame: pd.DataFrame, fn) -> pd.Series:
    return pd.concat([fn(part) for _, part in frame.groupby("segment", sort=True)])


def _il_one(part: pd.DataFrame, w: np.ndarray, window: int) -> pd.Series:
    r0 = np.log(part["price0"]).diff()
    r1 = np.log(part["price1"]).diff()
    # uncentered realized covariance: per-hour drift is negligible at this frequency
    v0, v1, c01 = ((a * b).rolling(window, min_periods=window).mean() for a, b in ((r0, r0), (r1, r1), (r0, r1)))
    quad = w[0] ** 2 * v0 + w[1] ** 2 * v1 + 2 * w[0] * w[1] * c01
    f = quad - (w[0] * v0 + w[1] * v1)
    return 0.5 * f * HOURS_PER_YEAR


def _fee_one(part: pd.DataFrame, window: int) -> pd.Series:
    earned = part["cum_fees"].diff(window)
    avg_tvl = part["tvl"].rolling(window, min_periods=window).mean()
    return earned / avg_tvl


def il_apy(panel: PoolPanel, window: int = DEFAULT_WINDOW, convention: Convention = "apy") -> pd.DataFrame:
    """Annualized impermanent loss per pool (columns) and hour (rows)."""
    if window < 2:
        raise ValueError("window must be >= 2")
    idx = _hourly_index(panel)
    cols = {}
    for pool in panel.pools:
        w = panel.pool_weights(pool)
        drift = _per_segment(panel.frames[pool], lambda p: _il_one(p, w, window))
        # clip estimator round-off: f is a negative semi-definite form
        drift = drift.clip(upper=0.0)
        cols[pool] = np.expm1(drift) if convention == "apy" else drift
    return pd.DataFrame(cols, index=idx, columns=panel.pools, dtype=float)


def fee_apr(panel: PoolPanel, window: int = DEFAULT_WINDOW, convention: Convention = "apr") -> pd.DataFrame:
    """Annualized fee income over average TVL per pool and hour."""
    if window < 1:
        raise ValueError("window must be >= 1")
    idx = _hourly_index(panel)
    periods = HOURS_PER_YEAR / window
    cols = {}
    for pool in panel.pools:
        rate = _per_segment(panel.frames[pool], lambda p: _fee_one(p, window))
        cols[pool] = rate * periods if convention == "apr" else (1 + rate) ** periods - 1
    return pd.DataFrame(cols, index=idx, columns=panel.pools, dtype=float)


@dataclass
class MetricSeries:
    il_apy: pd.DataFrame
    fee_apr: pd.DataFrame
    net_apr: pd.DataFrame

    def long(self) -> pd.DataFrame:
        parts = []
        for name in ("il_apy", "fee_apr", "net_apr"):
            s = getattr(self, name).stack(future_stack=True).rename(name)
            parts.append(s)
        out = pd.concat(parts, axis=1)
        out.index.names = ["time", "pool"]
        return out.dropna(how="all")


def net_apr(il: pd.DataFrame, fee: pd.DataFrame) -> pd.DataFrame:
    return fee + il


def metric_series(
    panel: PoolPanel,
    window: int = DEFAULT_WINDOW,
    il_convention: Convention = "apy",
    fee_convention: Convention = "apr",
) -> MetricSeries:
    il = il_apy(panel, window, il_convention)
    fee = fee_apr(panel, window, fee_convention)
    return MetricSeries(il_apy=il, fee_apr=fee, net_apr=net_apr(il, fee))


def cross_section_quartiles(series: pd.DataFrame, min_pools: int = 4) -> pd.DataFrame:
    """Per-timestamp (q1, median, q3) across pools, linear interpolation."""
    values = series.to_numpy(dtype=float)
    counts = np.isfinite(values).sum(axis=1)
    out = np.full((values.shape[0], 3), np.nan)
    ok = counts >= min_pools
    if ok.any():
        out[ok] = np.nanpercentile(values[ok], [25, 50, 75], axis=1).T
    return pd.DataFrame(out, index=series.index, columns=["q1", "median", "q3"])


def _pearson_rows(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    a = a - a.mean(axis=1, keepdims=True)
    b = b - b.mean(axis=1, keepdims=True)
    den = np.sqrt((a * a).sum(axis=1) * (b * b).sum(axis=1))
    with np.errstate(invalid="ignore", divide="ignore"):
        r = (a * b).sum(axis=1) / den
    return np.where(den > 1e-300, r, np.nan)


def _pearson(a: np.ndarray, b: np.ndarray) -> float:
    ok = np.isfinite(a) & np.isfinite(b)
    if ok.sum() < 3:
        return float("nan")
    return float(_pearson_rows(a[ok][None, :], b[ok][None, :])[0])


def fee_il_correlation(
    metrics: MetricSeries,
    mode: Literal["temporal", "cross_sectional"] = "temporal",
    il_magnitude: bool = True,
) -> pd.Series:
    """Pearson coefficients between fee APR and IL, one per pool or per timestamp.

    With ``il_magnitude`` the fee series is correlated against the size of
    the loss ``-il_apy``, so that pools earning more fees when volatility is
    high show a positive coefficient.  Undefined coefficients (constant or
    too-short series) are dropped; their count is in ``result.attrs``.
    """
    fee = metrics.fee_apr.to_numpy(dtype=float)
    il = metrics.il_apy.to_numpy(dtype=float)
    if il_magnitude:
        il = -il
    if mode == "temporal":
        keys = list(metrics.fee_apr.columns)
        coefs = [_pearson(fee[:, k], il[:, k]) for k in range(fee.shape[1])]
    elif mode == "cross_sectional":
        keys = list(metrics.fee_apr.index)
        coefs = [_pearson(fee[t], il[t]) for t in range(fee.shape[0])]
    else:
        raise ValueError(f"unknown mode {mode!r}")
    s = pd.Series(coefs, index=pd.Index(keys, name="pool_or_time"), name="coefficient", dtype=float)
    undefined = int(s.isna().sum())
    s = s.dropna()
    s.attrs["undefined"] = undefined
    return s


def rank_autocorrelation(series: pd.DataFrame, lag: int, min_pools: int = 4) -> float:
    """Mean over t of the Spearman correlation of pool values at t and t + lag."""
    a = series.to_numpy(dtype=float)
    if lag < 0:
        raise ValueError("lag must be >= 0")
    if lag >= a.shape[0]:
        return float("nan")
    x, y = a[: a.shape[0] - lag], a[lag:]
    mask = np.isfinite(x) & np.isfinite(y)
    coefs = []
    full = mask.all(axis=1) & (x.shape[1] >= min_pools)
    if full.any():
        rx = rankdata(x[full], axis=1)
        ry = rankdata(y[full], axis=1)
        coefs.append(_pearson_rows(rx, ry))
    for t in np.flatnonzero(~full & (mask.sum(axis=1) >= min_pools)):
        m = mask[t]
        coefs.append(_pearson_rows(rankdata(x[t, m])[None, :], rankdata(y[t, m])[None, :]))
    if not coefs:
        return float("nan")
    c = np.concatenate(coefs)
    c = c[np.isfinite(c)]
    return float(c.mean()) if c.size else float("nan")


def center_cross_section(series: pd.DataFrame, freq: str | None = "D") -> pd.DataFrame:
    """Subtract the cross-sectional mean per calendar day (``freq=None``: per timestamp)."""
    if freq is None:
        return series.sub(series.mean(axis=1), axis=0)
    day = series.index.floor(freq)
    values = series.to_numpy(dtype=float)
    sums = pd.DataFrame(np.nan_to_num(values)).groupby(day).sum().sum(axis=1)
    counts = pd.DataFrame(np.isfinite(values)).groupby(day).sum().sum(axis=1)
    daily = (sums / counts.where(counts > 0)).reindex(day).to_numpy()
    return series - daily[:, None]


def relative_autocorrelation(series: pd.DataFrame, lag: int, center: str | None = "D", min_obs: int = 10) -> float:
    """Average over pools of the Pearson autocorrelation of centered values at ``lag``."""
    if lag < 0:
        raise ValueError("lag must be >= 0")
    d = center_cross_section(series, center).to_numpy(dtype=float)
    if lag >= d.shape[0]:
        return float("nan")
    x, y = d[: d.shape[0] - lag], d[lag:]
    coefs = []
    for k in range(d.shape[1]):
        ok = np.isfinite(x[:, k]) & np.isfinite(y[:, k])
        if ok.sum() >= min_obs:
            coefs.append(_pearson(x[ok, k], y[ok, k]))
    c = np.array(coefs, dtype=float)
    c = c[np.isfinite(c)]
    return float(c.mean()) if c.size else float("nan")


def autocorrelation_table(series: pd.DataFrame, lags: Iterable[int], center: str | None = "D") -> pd.DataFrame:
    rows = [(int(l), rank_autocorrelation(series, l), relative_autocorrelation(series, l, center)) for l in lags]
    return pd.DataFrame(rows, columns=["lag_hours", "spearman", "pearson"])


def quartiles_long(metrics: MetricSeries, min_pools: int = 4) -> pd.DataFrame:
    parts = []
    for name in ("il_apy", "fee_apr", "net_apr"):
        q = cross_section_quartiles(getattr(metrics, name), min_pools).dropna()
        q.insert(0, "metric", name)
        parts.append(q)
    if not parts or all(p.empty for p in parts):
        return pd.DataFrame(columns=["time", "metric", "q1", "median", "q3"])
    out = pd.concat(parts)
    out.index.name = "time"
    return out.reset_index()


def frame_from_trace(trace, path: int = 0, start: str = "2021-01-01T00:00:00Z") -> pd.DataFrame:
    """Pool frame (input schema) from an hourly two-asset simulation trace."""
    hours = np.rint(np.asarray(trace.times) * HOURS_PER_YEAR).astype(int)
    if np.any(np.diff(hours) != 1):
        raise PanelError("trace is not on an hourly grid")
    idx = pd.Timestamp(start) + pd.to_timedelta(hours, unit="h")
    inv, px = trace.inventory[path], trace.prices[path]
    return pd.DataFrame(
        {
            "reserve0": inv[:, 0],
            "reserve1": inv[:, 1],
            "price0": px[:, 0],
            "price1": px[:, 1],
            "cum_fees": trace.cumulative_fees[path],
            "tvl": trace.K[path],
        },
        index=pd.DatetimeIndex(idx, name="timestamp"),
    )
