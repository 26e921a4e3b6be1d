import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from g3m.arbitrage import run_simulation
from g3m.benchmarks import excess_growth_rate
from g3m.errors import LeverageSaturation, PositionError
from g3m.market import CovarianceSpec, sample_paths
from g3m.pool import PoolState
from g3m.univ3 import (
    RangePosition,
    ReplicationPortfolio,
    closed_form_wealth,
    concentrated_il_drift,
    leverage,
    liquidity_from_deposit,
    mc_recentered_drift,
    position_report_json,
    position_wealth,
    replication_check,
    reserves,
    simulate_recentered_position,
    virtual_reserves,
)

SYM = RangePosition(2.0, 0.25, 4.0)


def test_symmetric_deposit():
    assert liquidity_from_deposit(1.0, 0.25, 4.0, y0=1.0) == pytest.approx(2.0)
    assert liquidity_from_deposit(1.0, 0.25, 4.0, x0=1.0) == pytest.approx(2.0)
    assert liquidity_from_deposit(1.0, 0.25, 4.0, x0=1.0, y0=1.0) == pytest.approx(2.0)
    with pytest.raises(PositionError):
        liquidity_from_deposit(1.0, 0.25, 4.0, x0=1.0, y0=2.0)


def test_full_range_deposit_is_v2():
    L = liquidity_from_deposit(2.25, 0.0, math.inf, y0=3.0)
    assert L == pytest.approx(3.0 / 1.5)
    pos = RangePosition(L, 0.0, math.inf)
    x, y = reserves(pos, 2.25)
    assert x * y == pytest.approx(L**2) and y / x == pytest.approx(2.25)


def test_deposit_at_lower_edge():
    with pytest.raises(PositionError):
        liquidity_from_deposit(0.25, 0.25, 4.0, y0=1.0)
    assert liquidity_from_deposit(0.25, 0.25, 4.0, x0=1.5, y0=0.0) == pytest.approx(1.5 / 1.5)


def test_symmetric_reserves():
    assert reserves(SYM, 1.0) == pytest.approx((1.0, 1.0))
    xs, ys = virtual_reserves(SYM, 1.0)
    assert (xs, ys) == pytest.approx((2.0, 2.0)) and xs * ys == pytest.approx(4.0)
    assert reserves(SYM, 4.0) == pytest.approx((0.0, 3.0))
    assert reserves(SYM, 9.0) == pytest.approx((0.0, 3.0))
    assert reserves(SYM, 0.1) == pytest.approx((3.0, 0.0))


def test_symmetric_wealth_and_leverage():
    assert position_wealth(SYM, 1.0, 1.0) == pytest.approx(2.0)
    assert closed_form_wealth(SYM, 1.0, 1.0) == pytest.approx(2.0)
    assert leverage(1.0, 0.25, 4.0) == 2.0
    # centered: K = 2 L sqrt(S0 S1) / l
    assert position_wealth(SYM, 1.0, 1.0) == pytest.approx(2 * 2.0 / 2.0)


def test_full_range_leverage_and_wealth():
    pos = RangePosition(3.0, 0.0, math.inf)
    assert leverage(1.7, 0.0, math.inf) == 1.0
    assert position_wealth(pos, 1.7, 0.4) == pytest.approx(2 * 3.0 * math.sqrt(1.7 * 0.4))
    rep = ReplicationPortfolio.from_position(pos)
    assert rep.short0 == 0.0 and rep.short1 == 0.0


def test_narrow_range_leverage():
    lam = 1.0201  # sqrt = 1.01
    l = leverage(1.0, 1 / lam, lam)
    assert l == pytest.approx(1 / (1 - 1 / 1.01), rel=1e-12)
    assert l == pytest.approx(101.0, rel=1e-10)
    with pytest.raises(LeverageSaturation):
        leverage(1.0, 1 / (1 + 1e-14), 1 + 1e-14)
    with pytest.raises(PositionError):
        leverage(5.0, 0.25, 4.0)


def test_invalid_positions():
    for args in ((0.0, 1.0, 2.0), (1.0, 2.0, 1.0), (1.0, -1.0, 2.0), (math.inf, 1.0, 2.0)):
        with pytest.raises(PositionError):
            RangePosition(*args)


def test_replication_in_and_out_of_range():
    t = np.linspace(0, 1, 5)
    S0 = np.array([1.0, 2.0, 3.0, 6.0, 8.0])
    rep = replication_check(SYM, S0, np.ones(5), t)
    assert rep.max_gap_in_range < 1e-14
    assert rep.max_gap_out_of_range > 0
    assert rep.first_exit_time == 0.75 and rep.n_in_range == 3


def test_report_json():
    d = json.loads(position_report_json(SYM, 1.0))
    assert d["leverage"] == 2.0 and d["x"] == pytest.approx(1.0) and d["x_star"] == pytest.approx(2.0)


@settings(max_examples=300, deadline=None)
@given(
    st.floats(1e-3, 1e3),
    st.floats(-5, 5),
    st.floats(1e-3, 4.0),
    st.floats(1e-3, 4.0),
    st.floats(0.0, 1.0),
    st.floats(0.1, 10),
)
def test_in_range_identities(L, log_p, lo_gap, hi_gap, u, S1):
    p_a, p_b = math.exp(log_p - lo_gap), math.exp(log_p + hi_gap)
    p = math.exp(log_p - lo_gap + u * (lo_gap + hi_gap))
    pos = RangePosition(L, p_a, p_b)
    xs, ys = virtual_reserves(pos, p)
    assert xs * ys == pytest.approx(L**2, rel=1e-10)
    assert p * xs == pytest.approx(ys, rel=1e-10)
    k = position_wealth(pos, p * S1, S1)
    assert closed_form_wealth(pos, p * S1, S1) == pytest.approx(k, rel=1e-9, abs=1e-12 * L * S1)


def test_drift_examples():
    d = concentrated_il_drift(0.8, 0.0, 0.0, lam=4.0)
    assert d.leverage == 2.0
    assert d.drift == pytest.approx(-0.16)
    assert d.delta0 + d.delta1 == pytest.approx(1.0)
    assert concentrated_il_drift(0.5, 0.5, 1.0, lam=3.0).drift == pytest.approx(0.0, abs=1e-15)
    # wide range: the full-range 50/50 drift f/2
    spec = CovarianceSpec([0.8, 0.3], [[1.0, 0.2], [0.2, 1.0]])
    wide = concentrated_il_drift(0.8, 0.3, 0.2, lam=1e16)
    assert wide.drift == pytest.approx(0.5 * excess_growth_rate([0.5, 0.5], spec), rel=1e-6)


@settings(max_examples=200, deadline=None)
@given(st.floats(1.0001, 1e4), st.floats(1.0001, 1e4))
def test_deltas_sum_to_one(alpha, beta):
    d = concentrated_il_drift(0.5, 0.2, 0.1, alpha=alpha, beta=beta)
    assert d.delta0 + d.delta1 == pytest.approx(1.0, rel=1e-12)


def test_recentered_constant_prices():
    K = simulate_recentered_position(np.ones(10), np.ones(10), lam=4.0, L0=2.0)
    np.testing.assert_allclose(K, K[0], rtol=1e-14)


def test_recentered_wide_range_matches_zero_fee_pool():
    spec = CovarianceSpec([0.8, 0.4], [[1.0, 0.3], [0.3, 1.0]])
    paths = sample_paths(spec, 0.1, 1 / 8760, n_paths=2, seed=4)
    S = paths.paths
    K = simulate_recentered_position(S[..., 0], S[..., 1], lam=1e14)
    tr = run_simulation(paths, PoolState([0.5, 0.5], 0.0, [1.0, 1.0]))
    np.testing.assert_allclose(K / K[:, :1], tr.K / tr.K[:, :1], rtol=1e-5)


def test_recentered_drift_short_run():
    spec = CovarianceSpec([0.8, 0.0], np.eye(2))
    rep = mc_recentered_drift(spec, 4.0, 0.05, 1 / 8760, 300, seed=3)
    assert rep.analytic == pytest.approx(-0.16)
    assert rep.passed
