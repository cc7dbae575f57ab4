import numpy as np
import pytest

from wienershift.drift import (
    deterministic_drift,
    drift_path,
    linear_drift,
    linear_inverse_drift,
    tsirelson_drift,
    zero_drift,
)
from wienershift.entropy import entropy_via_filter, entropy_via_inverse
from wienershift.girsanov import log_rho_minus
from wienershift.grid import InvalidArgument, TimeGrid, WienerPath, sample_paths
from wienershift.innovation import (
    FilterInverseDrift,
    FilteredDrift,
    analytic_filter,
    brownianity_report,
    conditional_girsanov,
    gaussian_filter,
    innovation_path,
    make_filter,
    measure_preservation_test,
    regression_filter,
)
from wienershift.solver import apply_shift, as_map, inverse_residuals, solve_inverse_sde


def _gaussian_oracle(theta, n, du):
    """E[w(t_i) | dU_0..dU_{i-1}] by a dense covariance solve on the increments."""
    dt = 1.0 / n
    # w(t_j) = L @ dw with L lower-triangular ones (strictly below the row)
    lw = np.tril(np.ones((n + 1, n)), k=-1)
    # dU_j = dw_j - theta * w(t_j) dt
    lu = np.eye(n) - theta * dt * lw[:n]
    cov_dw = dt * np.eye(n)
    out = np.zeros(n)
    for i in range(1, n):
        a, b = lw[i], lu[:i]
        s_yy = b @ cov_dw @ b.T
        s_xy = a @ cov_dw @ b.T
        out[i] = -theta * s_xy @ np.linalg.solve(s_yy, du[:i])
    return out


@pytest.mark.parametrize("theta,n", [(1.0, 2), (0.7, 5), (-1.5, 8)])
def test_gaussian_filter_matches_dense_conditioning(theta, n):
    g = TimeGrid(n)
    w = sample_paths(g, 1, 17)[0]
    u_path = apply_shift(linear_drift(theta), w).output
    got = gaussian_filter(theta, u_path).values
    np.testing.assert_allclose(got, _gaussian_oracle(theta, n, u_path.increments), atol=1e-12)


def test_gaussian_filter_trivial_cases(batch64):
    assert np.all(gaussian_filter(0.0, batch64.stack).values == 0)
    f = gaussian_filter(1.0, batch64.stack)
    assert np.all(f.values[:, 0] == 0) and f.method == "gaussian"


def test_gaussian_filter_is_minus_inverse_drift(batch64):
    observed = apply_shift(linear_drift(1.0), batch64.stack).output
    f = gaussian_filter(1.0, observed)
    v = linear_inverse_drift(1.0)
    assert np.max(np.abs(f.values + drift_path(v, observed).values)) < 1e-10


def test_gaussian_filtered_energy_matches_inverse_entropy():
    batch = sample_paths(TimeGrid(64), 10_000, 4)
    observed = apply_shift(linear_drift(1.0), batch.stack).output
    a = entropy_via_filter(gaussian_filter(1.0, observed))
    b = entropy_via_inverse(linear_drift(1.0), linear_inverse_drift(1.0), batch)
    assert abs(a.mean - b.mean) <= a.half_width + b.half_width
    assert b.trusted


def test_analytic_filter():
    g = TimeGrid(8)
    obs = sample_paths(g, 3, 0).stack
    np.testing.assert_array_equal(analytic_filter(deterministic_drift(2.0), obs).values, np.full((3, 8), 2.0))
    assert np.all(analytic_filter(zero_drift(), obs).values == 0)
    with pytest.raises(InvalidArgument):
        analytic_filter(linear_drift(1.0), obs)


def test_regression_filter_deterministic_and_zero():
    g = TimeGrid(16)
    train = sample_paths(g, 500, 1)
    obs = sample_paths(g, 50, 2).stack
    h = lambda t: 1.0 + t  # noqa: E731
    f = regression_filter(deterministic_drift(h), None, train, obs)
    np.testing.assert_allclose(f.values, np.broadcast_to(h(g.times[:-1]), (50, 16)))
    assert np.all(regression_filter(zero_drift(), None, train, obs).values == 0)


def test_regression_filter_rejects_bad_input():
    g = TimeGrid(8)
    obs = sample_paths(g, 2, 0).stack
    with pytest.raises(InvalidArgument):
        regression_filter(zero_drift(), None, None, obs)
    with pytest.raises(InvalidArgument):
        regression_filter(zero_drift(), None, sample_paths(TimeGrid(16), 5, 0), obs)
    bad = lambda grid, i, x: np.full(x.shape[:-1] + (1,), np.nan)  # noqa: E731
    with pytest.raises(InvalidArgument):
        regression_filter(linear_drift(1.0), bad, sample_paths(g, 5, 0), obs)


def test_regression_filter_linear_close_to_exact():
    g = TimeGrid(32)
    train = sample_paths(g, 20_000, 3)
    batch = sample_paths(g, 500, 4)
    obs = apply_shift(linear_drift(1.0), batch.stack).output
    est = regression_filter(linear_drift(1.0), None, train, obs)
    exact = gaussian_filter(1.0, obs)
    # the features (current value, running integral) pin the state down well
    assert np.sqrt(np.mean((est.values - exact.values) ** 2)) < 0.1


def test_regression_filter_tsirelson_cell_means():
    k = 6
    g = TimeGrid(256)
    u = tsirelson_drift(k)
    train = sample_paths(g, 20_000, 5)
    batch = sample_paths(g, 5_000, 6)
    obs = apply_shift(u, batch.stack).output
    f = regression_filter(u, None, train, obs)
    active = g.times[:-1] >= 2.0**-k
    means = f.values.mean(axis=0)
    assert np.all(np.abs(means[active] - 0.5) < 0.05)
    assert np.all(means[~active] == 0)


def test_make_filter_dispatch():
    g = TimeGrid(8)
    obs = sample_paths(g, 2, 0).stack
    assert make_filter(linear_drift(1.0), "gaussian")(obs).method == "gaussian"
    assert make_filter(zero_drift(), "analytic")(obs).method == "analytic"
    for args in ((tsirelson_drift(2), "gaussian"), (linear_drift(1.0), "analytic"), (zero_drift(), "regression"),
                 (zero_drift(), "psychic")):
        with pytest.raises(InvalidArgument):
            make_filter(*args)


def test_innovation_path_examples(batch64):
    g = batch64.grid
    obs = batch64.stack
    zero = FilteredDrift(g, np.zeros((len(batch64), g.n_steps)), "analytic")
    np.testing.assert_array_equal(innovation_path(obs, zero).values, obs.values)
    u = deterministic_drift(lambda t: np.cos(2 * t))
    shifted = apply_shift(u, obs).output
    z = innovation_path(shifted, analytic_filter(u, shifted))
    np.testing.assert_allclose(z.values, obs.values, atol=1e-14)
    with pytest.raises(InvalidArgument):
        innovation_path(sample_paths(TimeGrid(8), 2, 0).stack, zero)


def test_linear_innovation_is_brownian():
    batch = sample_paths(TimeGrid(64), 10_000, 7)
    obs = apply_shift(linear_drift(1.0), batch.stack).output
    z = innovation_path(obs, gaussian_filter(1.0, obs))
    report = brownianity_report(z)
    assert report["passed"], report


def test_brownianity_rejects_a_drifted_process():
    batch = sample_paths(TimeGrid(64), 10_000, 7)
    obs = apply_shift(deterministic_drift(0.5), batch.stack).output
    assert not brownianity_report(obs)["passed"]


def test_conditional_girsanov_examples(batch64):
    g = batch64.grid
    obs = batch64.stack
    zero = FilteredDrift(g, np.zeros((len(batch64), g.n_steps)), "analytic")
    assert np.all(conditional_girsanov(zero, obs, g.n_steps) == 0)
    f = gaussian_filter(1.0, obs)
    assert np.all(conditional_girsanov(f, obs, 0) == 0)
    u = deterministic_drift(1.0)
    shifted = apply_shift(u, obs).output
    fd = analytic_filter(u, shifted)
    z = innovation_path(shifted, fd)
    np.testing.assert_allclose(conditional_girsanov(fd, z, g.n_steps), log_rho_minus(u, obs), atol=1e-13)
    with pytest.raises(InvalidArgument):
        conditional_girsanov(fd, z, g.n_steps + 1)


def test_measure_preservation_null_case():
    batch = sample_paths(TimeGrid(64), 10_000, 0)
    rep = measure_preservation_test(batch.stack)
    assert min(rep["marginal_pvalues"]) > 1e-3
    assert rep["covariance_residual"] < 5 / np.sqrt(10_000)
    assert rep["passed"]


def test_measure_preservation_of_u_after_v():
    batch = sample_paths(TimeGrid(64), 10_000, 0)
    u = linear_drift(1.0)
    a = as_map(u)(solve_inverse_sde(u, batch.stack).output)
    np.testing.assert_allclose(a.values, batch.values, atol=1e-12)
    assert measure_preservation_test(a)["passed"]


def test_measure_preservation_detects_shift():
    batch = sample_paths(TimeGrid(64), 10_000, 0)
    shifted = apply_shift(linear_drift(1.0), batch.stack).output
    assert not measure_preservation_test(shifted)["passed"]
    with pytest.raises(InvalidArgument):
        measure_preservation_test(batch[0])


def test_filter_inverse_drift_recovers_linear_input(batch64):
    u = linear_drift(1.0)
    v = FilterInverseDrift(make_filter(u, "gaussian"))
    r = inverse_residuals(u, v, batch64)
    assert r.left < 1e-10
    # eval only looks at the prefix
    obs = apply_shift(u, batch64.stack).output
    x = np.array(obs.values)
    x[:, 11:] = 0.0
    np.testing.assert_array_equal(v.eval(obs.grid, 10, obs.values), v.eval(obs.grid, 10, x))
