import numpy as np
import pytest

from wienershift.drift import deterministic_drift, drift_path, linear_drift, zero_drift
from wienershift.estimate import Z99
from wienershift.girsanov import (
    density_identity_residual,
    log_rho_minus,
    log_rho_minus_terms,
    log_rho_plus,
    novikov_check,
)
from wienershift.grid import NumericError, TimeGrid, WienerPath, cm_norm_sq, sample_paths


def test_log_rho_minus_closed_forms(path_with_end):
    w = path_with_end(n=4, end=0.3)
    assert log_rho_minus(zero_drift(), w) == 0.0
    # -w(1) - 1/2
    assert log_rho_minus(deterministic_drift(1.0), w) == pytest.approx(-0.8, abs=1e-14)


@pytest.mark.parametrize("theta", [0.3, 1.0, -2.0])
def test_log_rho_minus_linear_unrolled(theta):
    g = TimeGrid(16)
    w = sample_paths(g, 1, 5)[0]
    x = w.values
    # explicit loop over the definition, independent of the vectorised sums
    expected = 0.0
    for i in range(g.n_steps):
        expected += theta * x[i] * (x[i + 1] - x[i]) - 0.5 * theta**2 * x[i] ** 2 * g.dt
    assert log_rho_minus(linear_drift(theta), w) == pytest.approx(expected, rel=1e-12, abs=1e-14)


def test_sign_identity(batch64):
    for u in (deterministic_drift(lambda t: np.cos(3 * t)), linear_drift(1.5)):
        lhs = log_rho_minus(u, batch64.stack) + log_rho_plus(u, batch64.stack)
        rhs = -cm_norm_sq(drift_path(u, batch64.stack))
        np.testing.assert_allclose(lhs, rhs, rtol=1e-12, atol=1e-12)


def test_terms_sum_to_total(batch64):
    u = linear_drift(0.5)
    terms = log_rho_minus_terms(drift_path(u, batch64.stack), batch64.stack)
    np.testing.assert_allclose(terms.sum(axis=-1), log_rho_minus(u, batch64.stack), rtol=1e-12)


def test_overflow_reports_step():
    g = TimeGrid(4)
    h = np.array([0.0, 0.0, 1e200, 0.0])
    w = WienerPath(g, np.zeros(5))
    with pytest.raises(NumericError) as err:
        log_rho_minus(deterministic_drift(lambda t: h[np.round(t * 4).astype(int)]), w)
    assert err.value.step == 2


def test_novikov_zero_is_exact(batch64):
    est = novikov_check(zero_drift(), batch64)
    assert (est.mean, est.half_width) == (1.0, 0.0)


def test_novikov_deterministic_band():
    batch = sample_paths(TimeGrid(16), 10_000, seed=2)
    est = novikov_check(deterministic_drift(1.0), batch)
    assert est.contains(1.0)
    # weight variance is e - 1
    assert est.half_width == pytest.approx(Z99 * np.sqrt(np.e - 1) / 100, rel=0.15)


@pytest.mark.parametrize("n", [64, 256])
def test_novikov_linear_stable_under_refinement(n):
    batch = sample_paths(TimeGrid(n), 10_000, seed=3)
    assert novikov_check(linear_drift(1.0), batch).contains(1.0)


def test_density_identity_exact_pairs(batch64):
    assert np.all(density_identity_residual(zero_drift(), zero_drift(), batch64.stack) == 0)
    for h in (1.0, lambda t: np.sin(5 * t) + t):
        u = deterministic_drift(h)
        r = density_identity_residual(u, u.negated(), batch64.stack)
        assert np.max(np.abs(r)) <= 1e-12


def test_density_identity_flags_wrong_pair(batch64):
    r = density_identity_residual(deterministic_drift(1.0), zero_drift(), batch64.stack)
    assert np.max(np.abs(r)) > 0.1
