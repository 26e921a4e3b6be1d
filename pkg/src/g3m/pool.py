"""Geometric mean market maker pool state.

A pool holds inventories ``theta`` of n tokens with weights ``w`` on the
open simplex and a proportional fee ``phi``.  A batch of atomic trades is
admissible when the weighted geometric mean of the reserves, counting each
positive inflow at ``(1 - phi)`` of its size, does not fall.  The full
inflow is then credited to the reserves, so the invariant ``k`` grows with
every fee-paying trade.

Sign convention for trade vectors: positive entries are paid into the
pool, negative entries are withdrawn from it.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Iterable, Literal

import numpy as np

from .errors import InvariantDecrease, PoolError, ReserveExhausted

MIN_WEIGHT = 1e-6
DEFAULT_TOL = 1e-9

BatchMode = Literal["simultaneous", "sequential"]


def _frozen(a) -> np.ndarray:
    a = np.array(a, dtype=float)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class PoolState:
    weights: np.ndarray
    fee: float
    inventory: np.ndarray

    def __post_init__(self):
        w = np.atleast_1d(np.array(self.weights, dtype=float))
        theta = np.atleast_1d(np.array(self.inventory, dtype=float))
        if w.ndim != 1 or theta.shape != w.shape:
            raise PoolError(f"weights {w.shape} and inventory {theta.shape} must be equal-length vectors")
        if np.any(w < MIN_WEIGHT):
            raise PoolError(f"weights must be >= {MIN_WEIGHT}, got {w.tolist()}")
        if abs(w.sum() - 1.0) > 1e-12:
            raise PoolError(f"weights must sum to 1, got {w.sum()!r}")
        if np.any(~np.isfinite(theta)) or np.any(theta <= 0):
            raise PoolError(f"inventory must be strictly positive, got {theta.tolist()}")
        fee = float(self.fee)
        if not 0.0 <= fee < 1.0:
            raise PoolError(f"fee must lie in [0, 1), got {fee}")
        object.__setattr__(self, "weights", _frozen(w))
        object.__setattr__(self, "inventory", _frozen(theta))
        object.__setattr__(self, "fee", fee)

    @property
    def n(self) -> int:
        return self.weights.size

    def with_inventory(self, inventory) -> "PoolState":
        return PoolState(self.weights, self.fee, inventory)

    def to_json(self, timestamp=None) -> str:
        return json.dumps(
            {
                "weights": self.weights.tolist(),
                "fee": self.fee,
                "inventory": self.inventory.tolist(),
                "invariant": invariant_value(self),
                "timestamp": timestamp,
            }
        )

    @classmethod
    def from_json(cls, text: str) -> "PoolState":
        d = json.loads(text)
        return cls(weights=d["weights"], fee=d["fee"], inventory=d["inventory"])


@dataclass(frozen=True)
class TradeBatch:
    """Atomic trades applied at one instant, shape (n_trades, n)."""

    trades: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))

    def __post_init__(self):
        t = np.array(self.trades, dtype=float)
        if t.size == 0:
            t = t.reshape(0, t.shape[-1] if t.ndim == 2 else 0)
        elif t.ndim == 1:
            t = t[None, :]
        if t.ndim != 2 or not np.all(np.isfinite(t)):
            raise PoolError("trades must be a finite (n_trades, n) array")
        t.setflags(write=False)
        object.__setattr__(self, "trades", t)

    @classmethod
    def of(cls, *trades: Iterable[float]) -> "TradeBatch":
        return cls(np.array([list(t) for t in trades], dtype=float))

    def __len__(self) -> int:
        return self.trades.shape[0]

    @property
    def net(self) -> np.ndarray:
        """Net reserve change Delta = sum of the atomic trades."""
        return self.trades.sum(axis=0)

    def value(self, prices) -> float:
        """Numeraire value paid into the pool (negative when the trader gains)."""
        return float(self.net @ np.asarray(prices, dtype=float))


def invariant_value(pool: PoolState) -> float:
    """k = prod theta_i ** w_i."""
    return float(np.exp(log_invariant(pool.weights, pool.inventory)))


def log_invariant(weights, inventory) -> float:
    return float(np.dot(weights, np.log(inventory)))


def effective_inflows(trades: np.ndarray, fee: float) -> np.ndarray:
    """Trades with each positive component haircut by (1 - fee)."""
    return np.where(trades > 0, trades * (1.0 - fee), trades)


@dataclass(frozen=True)
class TradeCheck:
    accepted: bool
    log_k_change: float
    reason: str = ""

    def __bool__(self) -> bool:
        return self.accepted


def _check_one(w, theta, eff_net, tol) -> TradeCheck:
    post = theta + eff_net
    if np.any(post <= 0):
        bad = int(np.argmax(post <= 0))
        return TradeCheck(False, float("-inf"), f"reserve exhausted: effective reserve {bad} would be {post[bad]!r}")
    change = float(np.dot(w, np.log(post)) - np.dot(w, np.log(theta)))
    if change < -tol:
        return TradeCheck(False, change, f"invariant decreases: log k changes by {change:.3e}")
    return TradeCheck(True, change)


def validate_trade(
    pool: PoolState, batch: TradeBatch, tol: float = DEFAULT_TOL, mode: BatchMode = "simultaneous"
) -> TradeCheck:
    """Check a batch against the fee-adjusted invariant.

    In ``simultaneous`` mode every atomic trade is measured against the
    pre-trade reserves, as one combined step.  In ``sequential`` mode
    trades are checked one at a time, each against the reserves left by
    the previous ones (fees included).  Batches that raise k are always
    accepted.
    """
    if len(batch) == 0:
        return TradeCheck(True, 0.0)
    trades = batch.trades
    if trades.shape[1] != pool.n:
        return TradeCheck(False, float("nan"), f"trade width {trades.shape[1]} != pool size {pool.n}")
    w, theta = pool.weights, pool.inventory
    if mode == "simultaneous":
        return _check_one(w, theta, effective_inflows(trades, pool.fee).sum(axis=0), tol)
    if mode != "sequential":
        raise ValueError(f"unknown batch mode {mode!r}")
    total = 0.0
    for k, tau in enumerate(trades):
        chk = _check_one(w, theta, effective_inflows(tau, pool.fee), tol)
        if not chk:
            return TradeCheck(False, chk.log_k_change, f"trade {k}: {chk.reason}")
        total += chk.log_k_change
        theta = theta + tau
        if np.any(theta <= 0):
            return TradeCheck(False, float("-inf"), f"trade {k}: reserves exhausted")
    return TradeCheck(True, total)


def apply_batch(
    pool: PoolState, batch: TradeBatch, tol: float = DEFAULT_TOL, mode: BatchMode = "simultaneous"
) -> PoolState:
    """Validate ``batch`` and return the pool with the full inflows credited."""
    chk = validate_trade(pool, batch, tol=tol, mode=mode)
    if not chk:
        cls = ReserveExhausted if "exhausted" in chk.reason else InvariantDecrease
        raise cls(chk.reason)
    if len(batch) == 0:
        return pool
    theta = pool.inventory + batch.net
    if np.any(theta <= 0):
        raise ReserveExhausted(f"post-trade reserves not positive: {theta.tolist()}")
    return pool.with_inventory(theta)


def no_arb_band(pool: PoolState, i: int, j: int, prices) -> tuple[float, float]:
    """Admissible interval for theta_i / theta_j given external prices."""
    if i == j:
        raise ValueError("band needs two distinct assets")
    s = np.asarray(prices, dtype=float)
    if np.any(s <= 0):
        raise ValueError("prices must be positive")
    w = pool.weights
    center = w[i] * s[j] / (w[j] * s[i])
    return (1.0 - pool.fee) * center, center / (1.0 - pool.fee)


def in_band(pool: PoolState, prices, tol: float = DEFAULT_TOL) -> bool:
    """True when every pairwise ratio lies inside its band times (1 +- tol)."""
    theta = pool.inventory
    for i in range(pool.n):
        for j in range(i + 1, pool.n):
            lo, hi = no_arb_band(pool, i, j, prices)
            r = theta[i] / theta[j]
            if r < lo * (1 - tol) or r > hi * (1 + tol):
                return False
    return True


@dataclass(frozen=True)
class WealthBounds:
    lower: float
    upper: float
    c: float
    k: float
    v: float

    def contains(self, wealth: float, rtol: float = 0.0) -> bool:
        return self.lower * (1 - rtol) <= wealth <= self.upper * (1 + rtol)


def wealth(pool: PoolState, prices) -> float:
    """Market value K = sum_i theta_i S_i."""
    return float(np.dot(pool.inventory, np.asarray(prices, dtype=float)))


def wealth_constant(weights) -> float:
    """c = prod w_i ** -w_i."""
    w = np.asarray(weights, dtype=float)
    return float(np.exp(-np.dot(w, np.log(w))))


def wealth_bounds(pool: PoolState, prices) -> WealthBounds:
    s = np.asarray(prices, dtype=float)
    c = wealth_constant(pool.weights)
    k = invariant_value(pool)
    v = float(np.exp(np.dot(pool.weights, np.log(s))))
    mid = c * k * v
    return WealthBounds(lower=(1 - pool.fee) * mid, upper=mid / (1 - pool.fee), c=c, k=k, v=v)
