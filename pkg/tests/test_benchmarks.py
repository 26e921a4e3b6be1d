import io
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from g3m.benchmarks import (
    constant_mix_path,
    decompose,
    excess_growth_rate,
    geometric_mean_path,
    hodl_path,
    impermanent_loss_path,
    mc_verify_il,
    realized_il_path,
)
from g3m.market import CovarianceSpec, sample_paths, time_grid

ONE_STEP = np.array([[1.0, 1.0], [1.1, 0.9]])


def random_spec(rng, n):
    a = rng.standard_normal((n, n + 2))
    c = a @ a.T
    d = np.sqrt(np.diag(c))
    rho = c / np.outer(d, d)
    rho = 0.5 * (rho + rho.T)
    np.fill_diagonal(rho, 1.0)
    return CovarianceSpec(rng.uniform(0.05, 1.5, n), rho)


def test_single_asset_mix_is_the_asset():
    S = np.array([[1.0], [1.3], [0.7], [2.0]])
    np.testing.assert_allclose(constant_mix_path(S, [1.0]), S[:, 0], rtol=1e-15)


def test_constant_prices():
    S = np.ones((5, 3))
    for f in (constant_mix_path, geometric_mean_path, hodl_path):
        np.testing.assert_allclose(f(S, [0.2, 0.3, 0.5]), 1.0)


def test_one_step_example():
    w = [0.5, 0.5]
    assert constant_mix_path(ONE_STEP, w)[-1] == pytest.approx(1.0, rel=1e-15)
    assert geometric_mean_path(ONE_STEP, w)[-1] == pytest.approx(math.sqrt(0.99), rel=1e-15)
    assert hodl_path(ONE_STEP, w)[-1] == pytest.approx(1.0, rel=1e-15)


def test_corner_weight_collapses_benchmarks():
    S = sample_paths(CovarianceSpec([0.8, 0.6], np.eye(2)), 1.0, 0.01, seed=0).paths[0]
    w = [1.0, 0.0]
    for f in (constant_mix_path, geometric_mean_path, hodl_path):
        np.testing.assert_allclose(f(S, w), S[:, 0], rtol=1e-12)


def test_excess_growth_rate_examples():
    for rho in (-0.5, 0.0, 0.7):
        spec = CovarianceSpec([0.8, 0.0], [[1, rho], [rho, 1]])
        assert excess_growth_rate([0.5, 0.5], spec) == pytest.approx(-0.16, rel=1e-14)
    assert excess_growth_rate([0.5, 0.5], CovarianceSpec([0.4, 0.4], np.ones((2, 2)))) == pytest.approx(0.0, abs=1e-15)
    assert excess_growth_rate([0.0, 1.0], CovarianceSpec([0.8, 0.6], np.eye(2))) == 0.0


def test_il_factor_examples():
    times = time_grid(1.0, 0.01)
    spec = CovarianceSpec([0.8, 0.0], np.eye(2))
    I = impermanent_loss_path(times, [0.5, 0.5], spec)
    assert I[-1] == pytest.approx(math.exp(-0.08), rel=1e-12)
    assert round(I[-1], 5) == 0.92312
    np.testing.assert_array_equal(impermanent_loss_path(times, [1.0, 0.0], spec), 1.0)
    covs = np.broadcast_to(spec.cov, (times.size, 2, 2))
    np.testing.assert_allclose(impermanent_loss_path(times, [0.5, 0.5], covs), I, rtol=1e-12)


def test_weights_off_simplex_rejected():
    with pytest.raises(ValueError):
        hodl_path(ONE_STEP, [0.6, 0.6])
    with pytest.raises(ValueError):
        excess_growth_rate([1.2, -0.2], np.eye(2))


@pytest.mark.parametrize("dt", [1 / 365, 1 / 3650])
def test_pathwise_identity_converges_in_dt(dt):
    spec = CovarianceSpec([0.8, 0.6], [[1.0, 0.3], [0.3, 1.0]])
    S = sample_paths(spec, 1.0, dt, n_paths=20, seed=5).paths
    w = [0.4, 0.6]
    V, P, I = geometric_mean_path(S, w), constant_mix_path(S, w), realized_il_path(S, w)
    err = np.abs(V / (P * I) - 1).max()
    # error is third order per step: O(dt) overall with a modest constant
    assert err < 0.5 * dt


def test_decomposition_csv():
    times = time_grid(1.0, 0.25)
    spec = CovarianceSpec([0.8, 0.0], np.eye(2))
    S = sample_paths(spec, times=times, seed=0).paths[0]
    dec = decompose(times, S, [0.5, 0.5], spec)
    fh = io.StringIO()
    dec.write_csv(fh, "seed=0")
    lines = fh.getvalue().splitlines()
    assert lines[:2] == ["# seed=0", "time,P,V,H,I"]
    assert len(lines) == 2 + times.size
    assert np.all(dec.V <= dec.H + 1e-15)


def test_mc_il_drift_short_run():
    spec = CovarianceSpec([0.8, 0.0], np.eye(2))
    rep = mc_verify_il(spec, [0.5, 0.5], 1.0, 1 / 365, 4000, seed=1)
    assert rep.analytic == pytest.approx(-0.08)
    assert rep.passed and abs(rep.z_score) < 4
    assert rep.frac_v_le_h == 1.0


def test_mc_il_corner_is_exact():
    spec = CovarianceSpec([0.8, 0.6], np.eye(2))
    rep = mc_verify_il(spec, [1.0, 0.0], 1.0, 1 / 52, 500, seed=1)
    assert rep.mean_log_ratio == 0.0 and rep.std_error == 0.0 and rep.passed


def test_mc_il_equicorrelated_three_assets():
    rho = np.full((3, 3), 0.5)
    np.fill_diagonal(rho, 1.0)
    spec = CovarianceSpec([0.5] * 3, rho)
    w = np.full(3, 1 / 3)
    # w'Sigma w = 0.25 (1 + 2 * 0.5) / 3, w'sigma^2 = 0.25
    f = 0.25 * 2 / 3 - 0.25
    assert excess_growth_rate(w, spec) == pytest.approx(f, rel=1e-12)
    rep = mc_verify_il(spec, w, 1.0, 1 / 365, 4000, seed=2)
    assert rep.analytic == pytest.approx(0.5 * f)
    assert rep.passed


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 6), st.integers(0, 2**31))
def test_excess_growth_rate_nonpositive(n, seed):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, n)
    w = rng.dirichlet(np.full(n, 0.5))
    assert excess_growth_rate(w, spec) <= 1e-12


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 4), st.integers(0, 2**31))
def test_geometric_mean_below_hodl(n, seed):
    rng = np.random.default_rng(seed)
    spec = random_spec(rng, n)
    w = rng.dirichlet(np.ones(n))
    S = sample_paths(spec, 1.0, 1 / 52, n_paths=5, seed=int(seed)).paths
    assert np.all(geometric_mean_path(S, w) <= hodl_path(S, w) * (1 + 1e-12))
