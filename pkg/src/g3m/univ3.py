"""Concentrated-liquidity (UniswapV3-style) positions.

Orientation: ``p = S0 / S1`` is the price of token 0 in units of token 1,
``x`` is the token-0 reserve and ``y`` the token-1 reserve.  A position of
liquidity ``L`` on ``[p_a, p_b]`` holds, for p inside the range,

    x = L (1/sqrt(p) - 1/sqrt(p_b)),    y = L (sqrt(p) - sqrt(p_a))

and outside the range it is entirely in one token.  ``p_a = 0`` and
``p_b = inf`` give the full-range (constant product) position.

In range, the position is worth

    K = 2 L sqrt(S0 S1) - (L / sqrt(p_b)) S0 - L sqrt(p_a) S1

i.e. a 50/50 geometric-mean position carrying two short token legs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass

import numpy as np

from .benchmarks import _log_mix_increments, excess_growth_rate
from .errors import LeverageSaturation, PositionError
from .market import CovarianceSpec, iter_log_increments, time_grid, validate_spec

LEVERAGE_CAP = 1e6


def _inv_sqrt(p):
    return 0.0 if math.isinf(p) else 1.0 / math.sqrt(p)


@dataclass(frozen=True)
class RangePosition:
    L: float
    p_a: float
    p_b: float
    p0: float | None = None

    def __post_init__(self):
        if not (self.L > 0 and math.isfinite(self.L)):
            raise PositionError(f"liquidity must be positive and finite, got {self.L}")
        if not (0 <= self.p_a < self.p_b):
            raise PositionError(f"need 0 <= p_a < p_b, got [{self.p_a}, {self.p_b}]")
        if math.isinf(self.p_a) or math.isnan(self.p_b):
            raise PositionError("invalid price bounds")

    @property
    def sqrt_pa(self) -> float:
        return math.sqrt(self.p_a)

    @property
    def inv_sqrt_pb(self) -> float:
        return _inv_sqrt(self.p_b)

    @property
    def full_range(self) -> bool:
        return self.p_a == 0 and math.isinf(self.p_b)

    def in_range(self, p):
        p = np.asarray(p, dtype=float)
        return (p >= self.p_a) & (p <= self.p_b)


def liquidity_from_deposit(p0, p_a, p_b, x0=None, y0=None, rtol: float = 1e-9) -> float:
    """Liquidity implied by a deposit at price ``p0``.

    With a single token the other side is implied; with both they must imply
    the same L to ``rtol``.
    """
    if x0 is None and y0 is None:
        raise PositionError("deposit needs x0 or y0")
    if not (0 <= p_a < p_b) or not p0 > 0:
        raise PositionError(f"invalid range/price: p0={p0}, [{p_a}, {p_b}]")
    sp, spa, ispb = math.sqrt(p0), math.sqrt(p_a), _inv_sqrt(p_b)
    sp_clamped = min(max(sp, spa), 1.0 / ispb if ispb > 0 else math.inf)
    L_x = L_y = None
    if x0 is not None:
        denom = 1.0 / sp_clamped - ispb
        if denom <= 0:
            if x0 != 0:
                raise PositionError(f"price {p0} >= p_b: position holds no token 0, got x0={x0}")
        else:
            L_x = x0 / denom
    if y0 is not None:
        denom = sp_clamped - spa
        if denom <= 0:
            if y0 != 0:
                raise PositionError(f"price {p0} <= p_a: position holds no token 1, got y0={y0}")
        else:
            L_y = y0 / denom
    if L_x is not None and L_y is not None:
        if not math.isclose(L_x, L_y, rel_tol=rtol):
            raise PositionError(f"inconsistent deposit: x0 implies L={L_x!r}, y0 implies L={L_y!r}")
        return L_y
    L = L_x if L_x is not None else L_y
    if L is None or L <= 0:
        raise PositionError("deposit implies no liquidity")
    return L


def reserves(pos: RangePosition, p):
    """Token reserves (x, y) at price p, clamped outside the range."""
    sp = np.sqrt(np.clip(np.asarray(p, dtype=float), pos.p_a, pos.p_b))
    x = pos.L * (1.0 / sp - pos.inv_sqrt_pb)
    y = pos.L * (sp - pos.sqrt_pa)
    return np.maximum(x, 0.0), np.maximum(y, 0.0)


def virtual_reserves(pos: RangePosition, p):
    """(x*, y*) = (x + L/sqrt(p_b), y + L sqrt(p_a)); x* y* = L^2 in range."""
    x, y = reserves(pos, p)
    return x + pos.L * pos.inv_sqrt_pb, y + pos.L * pos.sqrt_pa


def position_wealth(pos: RangePosition, S0, S1):
    """(p x + y) S1 at prices (S0, S1), valid in every regime."""
    S0 = np.asarray(S0, dtype=float)
    S1 = np.asarray(S1, dtype=float)
    x, y = reserves(pos, S0 / S1)
    return x * S0 + y * S1


def closed_form_wealth(pos: RangePosition, S0, S1):
    """Geometric-mean-minus-shorts valuation; only meaningful in range."""
    S0 = np.asarray(S0, dtype=float)
    S1 = np.asarray(S1, dtype=float)
    return 2 * pos.L * np.sqrt(S0 * S1) - pos.L * pos.inv_sqrt_pb * S0 - pos.L * pos.sqrt_pa * S1


def _leverage_raw(alpha, beta):
    return 1.0 / (1.0 - 0.5 * (1.0 / np.sqrt(alpha) + 1.0 / np.sqrt(beta)))


def leverage(p, p_a, p_b, cap: float = LEVERAGE_CAP) -> float:
    """l = 1 / (1 - (1/sqrt(alpha) + 1/sqrt(beta)) / 2), alpha = p/p_a, beta = p_b/p."""
    if not (p_a <= p <= p_b) or p <= 0:
        raise PositionError(f"price {p} outside [{p_a}, {p_b}]")
    inv_sa = 0.0 if p_a == 0 else math.sqrt(p_a / p)
    inv_sb = 0.0 if math.isinf(p_b) else math.sqrt(p / p_b)
    denom = 1.0 - 0.5 * (inv_sa + inv_sb)
    if denom <= 1.0 / cap:
        raise LeverageSaturation(f"leverage exceeds {cap:g} (range [{p_a}, {p_b}] at p={p})")
    return 1.0 / denom


@dataclass(frozen=True)
class ReplicationPortfolio:
    """Long ``v2_units`` of sqrt(S0 S1), short ``short0`` token 0 and ``short1`` token 1."""

    v2_units: float
    short0: float
    short1: float

    @classmethod
    def from_position(cls, pos: RangePosition) -> "ReplicationPortfolio":
        return cls(2 * pos.L, pos.L * pos.inv_sqrt_pb, pos.L * pos.sqrt_pa)

    def value(self, S0, S1):
        S0 = np.asarray(S0, dtype=float)
        S1 = np.asarray(S1, dtype=float)
        return self.v2_units * np.sqrt(S0 * S1) - self.short0 * S0 - self.short1 * S1


@dataclass(frozen=True)
class ReplicationReport:
    max_gap_in_range: float
    max_gap_out_of_range: float
    first_exit_time: float | None
    n_in_range: int
    n_points: int

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def replication_check(pos: RangePosition, S0, S1, times=None) -> ReplicationReport:
    """Relative gap between the position and its replicating portfolio along a path."""
    S0 = np.asarray(S0, dtype=float)
    S1 = np.asarray(S1, dtype=float)
    times = np.arange(S0.size, dtype=float) if times is None else np.asarray(times, dtype=float)
    k_pos = position_wealth(pos, S0, S1)
    k_rep = ReplicationPortfolio.from_position(pos).value(S0, S1)
    gap = np.abs(k_pos - k_rep) / np.abs(k_pos)
    inside = pos.in_range(S0 / S1)
    exits = np.flatnonzero(~inside)
    return ReplicationReport(
        max_gap_in_range=float(gap[inside].max()) if inside.any() else 0.0,
        max_gap_out_of_range=float(gap[~inside].max()) if exits.size else 0.0,
        first_exit_time=float(times[exits[0]]) if exits.size else None,
        n_in_range=int(inside.sum()),
        n_points=int(S0.size),
    )


@dataclass(frozen=True)
class ConcentratedDrift:
    drift: float
    delta0: float
    delta1: float
    leverage: float


def concentrated_il_drift(sigma0, sigma1, rho, lam=None, alpha=None, beta=None) -> ConcentratedDrift:
    """Drift of log(K / P) for a concentrated position, P the 50/50 constant mix.

    ``drift = l * f / 2`` where f is the 50/50 excess growth rate
    ``-(sigma0^2 + sigma1^2 - 2 rho sigma0 sigma1) / 4``: the full-range
    impermanent-loss drift scaled by the leverage.  Price exposures are
    ``(l/2)(1 - 1/sqrt(beta))`` to S0 and ``(l/2)(1 - 1/sqrt(alpha))`` to S1.
    Give ``lam`` for a range centered on the current price
    (alpha = beta = lam).
    """
    if lam is not None:
        alpha = beta = lam
    if alpha is None or beta is None:
        raise ValueError("give lam or both alpha and beta")
    if alpha < 1 or beta < 1 or (alpha == 1 and beta == 1):
        raise ValueError(f"need alpha, beta >= 1 and not both 1, got {alpha}, {beta}")
    lev = float(_leverage_raw(alpha, beta))
    rel_var = sigma0**2 + sigma1**2 - 2 * rho * sigma0 * sigma1
    drift = -lev * rel_var / 8.0
    return ConcentratedDrift(
        drift=drift,
        delta0=0.5 * lev * (1 - 1 / math.sqrt(beta)),
        delta1=0.5 * lev * (1 - 1 / math.sqrt(alpha)),
        leverage=lev,
    )


def simulate_recentered_position(S0, S1, lam: float, L0: float = 1.0, rebalance_every: int = 1, slippage: float = 0.0):
    """Wealth of a position recentered on ``[p/lam, p*lam]`` every ``rebalance_every`` steps.

    ``S0`` and ``S1`` have shape (..., T).  At each rebalance the position is
    closed at its current value and reopened, centered, with the proceeds
    (less a ``slippage`` fraction, zero by default).
    """
    if not lam > 1:
        raise ValueError("lam must be > 1")
    S0 = np.asarray(S0, dtype=float)
    S1 = np.asarray(S1, dtype=float)
    T = S0.shape[-1]
    isl = 1.0 / math.sqrt(lam)
    out = np.empty(S0.shape)
    L = np.full(S0.shape[:-1], float(L0))
    sp_a = np.sqrt(S0[..., 0] / S1[..., 0] / lam)
    sp_b = np.sqrt(S0[..., 0] / S1[..., 0] * lam)
    for t in range(T):
        s0, s1 = S0[..., t], S1[..., t]
        sp = np.clip(np.sqrt(s0 / s1), sp_a, sp_b)
        k = L * (1.0 / sp - 1.0 / sp_b) * s0 + L * (sp - sp_a) * s1
        out[..., t] = k
        if t % rebalance_every == 0 and t < T - 1:
            k = k * (1.0 - slippage)
            root = np.sqrt(s0 / s1)
            sp_a, sp_b = root * isl, root / isl
            # centered value is 2 L sqrt(S0 S1) (1 - 1/sqrt(lam))
            L = k / (2.0 * np.sqrt(s0 * s1) * (1.0 - isl))
    return out


@dataclass(frozen=True)
class DriftReport:
    mean_drift: float
    analytic: float
    std_error: float
    n_paths: int
    z_score: float
    passed: bool

    def to_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


def mc_recentered_drift(
    spec: CovarianceSpec,
    lam: float,
    horizon: float,
    dt: float,
    n_paths: int,
    seed: int = 0,
    rebalance_every: int = 1,
    n_se: float = 4.0,
    chunk: int = 1000,
) -> DriftReport:
    """Monte Carlo drift of log(K_T / K_0) - log(P_T), per year, vs ``concentrated_il_drift``."""
    spec = validate_spec(spec)
    if spec.n != 2:
        raise ValueError("concentrated positions need exactly two assets")
    times = time_grid(horizon, dt)
    w = np.array([0.5, 0.5])
    samples = []
    for inc in iter_log_increments(spec, times, seed, n_paths, chunk=chunk):
        logs = np.concatenate([np.zeros(inc.shape[:1] + (1, 2)), np.cumsum(inc, axis=1)], axis=1)
        S = np.exp(logs)
        K = simulate_recentered_position(S[..., 0], S[..., 1], lam, rebalance_every=rebalance_every)
        log_p = _log_mix_increments(inc, w).sum(axis=1)
        samples.append((np.log(K[:, -1] / K[:, 0]) - log_p) / horizon)
    x = np.concatenate(samples)
    rho = float(spec.rho[0, 1])
    analytic = concentrated_il_drift(spec.sigma[0], spec.sigma[1], rho, lam=lam).drift
    mean = float(x.mean())
    se = float(x.std(ddof=1) / math.sqrt(x.size)) if x.size > 1 else float("nan")
    if se > 0:
        z = (mean - analytic) / se
    else:
        z = 0.0 if abs(mean - analytic) < 1e-12 else float("inf")
    return DriftReport(mean, analytic, se, int(x.size), float(z), bool(abs(z) <= n_se))


def position_report(pos: RangePosition, p: float, S1: float = 1.0) -> dict:
    x, y = reserves(pos, p)
    xs, ys = virtual_reserves(pos, p)
    try:
        lev = leverage(p, pos.p_a, pos.p_b)
    except PositionError:
        lev = None
    return {
        "L": pos.L,
        "p_a": pos.p_a,
        "p_b": pos.p_b if math.isfinite(pos.p_b) else None,
        "p": float(p),
        "x": float(x),
        "y": float(y),
        "x_star": float(xs),
        "y_star": float(ys),
        "leverage": lev,
        "wealth": float(position_wealth(pos, p * S1, S1)),
    }


def position_report_json(pos: RangePosition, p: float, S1: float = 1.0) -> str:
    return json.dumps(position_report(pos, p, S1))
