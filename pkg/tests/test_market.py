import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from g3m.errors import NotPSDError, SpecError
from g3m.market import CovarianceSpec, log_increments, path_rng, sample_paths, time_grid, validate_spec


def test_identity_correlation_factor_is_diagonal():
    spec = validate_spec({"sigma": [0.5, 0.5], "rho": np.eye(2)})
    np.testing.assert_allclose(spec.factor, np.diag([0.5, 0.5]))
    np.testing.assert_allclose(spec.factor @ spec.factor.T, spec.cov)


def test_correlation_above_one_rejected():
    with pytest.raises(NotPSDError):
        CovarianceSpec([0.5, 0.5], [[1.0, 1.2], [1.2, 1.0]])


def test_equicorrelated_negative_rejected():
    rho = np.full((3, 3), -0.9)
    np.fill_diagonal(rho, 1.0)
    with pytest.raises(NotPSDError) as exc:
        CovarianceSpec([0.3] * 3, rho)
    assert exc.value.smallest_eigenvalue == pytest.approx(-0.8)


@pytest.mark.parametrize(
    "sigma, rho",
    [
        ([0.5, -0.1], np.eye(2)),
        ([0.5, 0.5], [[1.0, 0.3], [0.2, 1.0]]),
        ([0.5, 0.5], [[0.9, 0.0], [0.0, 1.0]]),
        ([0.5, 0.5], np.eye(3)),
        ([0.5, np.nan], np.eye(2)),
    ],
)
def test_malformed_specs_rejected(sigma, rho):
    with pytest.raises(SpecError):
        CovarianceSpec(sigma, rho)


def test_singular_psd_correlation_accepted():
    spec = CovarianceSpec([0.4, 0.4], np.ones((2, 2)))
    np.testing.assert_allclose(spec.factor @ spec.factor.T, spec.cov, atol=1e-14)
    S = sample_paths(spec, 1.0, 0.1, n_paths=3, seed=1).paths
    np.testing.assert_allclose(S[..., 0], S[..., 1], rtol=1e-12)


def test_zero_volatility_is_deterministic_growth():
    spec = CovarianceSpec([0.0, 0.0], np.eye(2), mu=[0.1, 0.1])
    ps = sample_paths(spec, 1.0, 0.5, n_paths=4, seed=0)
    expected = np.exp(0.1 * ps.times)
    for p in ps.paths:
        np.testing.assert_allclose(p, np.column_stack([expected, expected]), rtol=1e-14)


def test_time_varying_drift():
    spec = CovarianceSpec([0.0], [[1.0]], mu=lambda t: [0.2 if t < 0.5 else 0.0])
    ps = sample_paths(spec, 1.0, 0.25, seed=0)
    np.testing.assert_allclose(ps.paths[0, :, 0], np.exp(0.2 * np.minimum(ps.times, 0.5)), rtol=1e-14)


def test_paths_start_at_one_and_stay_positive():
    spec = CovarianceSpec([2.0, 1.5, 0.1], [[1, 0.2, 0.1], [0.2, 1, -0.4], [0.1, -0.4, 1]])
    ps = sample_paths(spec, 1.0, 1 / 52, n_paths=50, seed=3)
    assert ps.paths.shape == (50, 53, 3)
    np.testing.assert_array_equal(ps.paths[:, 0, :], 1.0)
    assert np.all(ps.paths > 0)


def test_martingale_under_zero_drift():
    spec = CovarianceSpec([0.8, 0.0], np.eye(2))
    S = sample_paths(spec, 1.0, 1.0, n_paths=100_000, seed=11).paths[:, -1, 0]
    se = S.std(ddof=1) / np.sqrt(S.size)
    assert abs(S.mean() - 1.0) < 3 * se


def test_increment_covariance_matches_spec():
    spec = CovarianceSpec([0.8, 0.6], [[1.0, 0.3], [0.3, 1.0]])
    dt = 1 / 365
    inc = log_increments(spec, time_grid(20.0, dt), seed=2, path_ids=[0]).reshape(-1, 2)
    emp = np.cov(inc.T) / dt
    np.testing.assert_allclose(emp, spec.cov, rtol=0.05, atol=0.01)


def test_path_streams_are_independent_of_batch_layout():
    spec = CovarianceSpec([0.8, 0.6], [[1.0, 0.3], [0.3, 1.0]])
    full = sample_paths(spec, 1.0, 1 / 100, n_paths=10, seed=7)
    part = sample_paths(spec, 1.0, 1 / 100, seed=7, path_ids=[3, 8])
    np.testing.assert_array_equal(full.paths[[3, 8]], part.paths)
    again = sample_paths(spec, 1.0, 1 / 100, n_paths=10, seed=7)
    np.testing.assert_array_equal(full.paths, again.paths)
    other = sample_paths(spec, 1.0, 1 / 100, n_paths=10, seed=8)
    assert not np.array_equal(full.paths, other.paths)


def test_auxiliary_stream_differs_from_price_stream():
    a = path_rng(0, 1).standard_normal(4)
    b = path_rng(0, 1, stream=1).standard_normal(4)
    assert not np.array_equal(a, b)


def test_time_grid():
    g = time_grid(1.0, 1 / 8760)
    assert g.size == 8761 and g[-1] == 1.0
    g = time_grid(1.0, 0.3)
    np.testing.assert_allclose(g, [0, 0.3, 0.6, 0.9, 1.0])
    with pytest.raises(SpecError):
        time_grid(1.0, 0.0)


def test_write_csv():
    spec = CovarianceSpec([0.1, 0.2], np.eye(2))
    ps = sample_paths(spec, 1.0, 0.5, n_paths=2, seed=0)
    fh = io.StringIO()
    ps.write_csv(fh, header_comment="seed=0")
    lines = fh.getvalue().splitlines()
    assert lines[0] == "# seed=0"
    assert lines[1] == "path_id,time,asset_0,asset_1"
    assert len(lines) == 2 + 2 * 3
    assert lines[2] == "0,0.0,1.0,1.0"


@settings(max_examples=40, deadline=None)
@given(
    st.lists(st.floats(0.0, 2.0), min_size=2, max_size=4),
    st.integers(0, 2**31),
)
def test_random_psd_specs_factorize(sigma, seed):
    rng = np.random.default_rng(seed)
    n = len(sigma)
    a = rng.standard_normal((n, n + 1))
    c = a @ a.T
    d = np.sqrt(np.diag(c))
    rho = c / np.outer(d, d)
    rho = 0.5 * (rho + rho.T)
    np.fill_diagonal(rho, 1.0)
    spec = CovarianceSpec(sigma, rho)
    np.testing.assert_allclose(spec.factor @ spec.factor.T, spec.cov, atol=1e-12)
