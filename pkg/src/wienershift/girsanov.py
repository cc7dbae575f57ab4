"""Girsanov exponentials in log space and the density identity.

``log_rho_minus(u, w) = -sum u_i dw_i - 1/2 sum u_i**2 dt`` is the log of
the density that removes the drift ``u`` from the law of ``w + u(w)``.
"""
from __future__ import annotations

import numpy as np

from .drift import drift_path
from .estimate import Estimate, Z99
from .grid import InvalidArgument, NumericError, cm_norm_sq, ito_sum

__all__ = [
    "log_rho_minus",
    "log_rho_plus",
    "log_rho_minus_terms",
    "novikov_check",
    "density_identity_residual",
]


def _check_finite(terms, total):
    """Raise with the first overflowing step; ``terms`` is only built on failure."""
    if np.all(np.isfinite(total)):
        return
    running = np.cumsum(terms(), axis=-1)
    bad = (~np.isfinite(running)).reshape(-1, running.shape[-1]).any(axis=0)
    raise NumericError("Girsanov exponent overflowed", step=int(np.argmax(bad)))


def log_rho_minus_terms(density, path):
    """Per-step contributions ``-u_i dw_i - u_i**2 dt / 2``."""
    return -density.values * path.increments - 0.5 * density.values**2 * path.grid.dt


def log_rho_minus(drift, path):
    """``log rho(-delta u)`` for one path or a stack of paths."""
    u = drift_path(drift, path)
    with np.errstate(over="ignore", invalid="ignore"):
        total = -ito_sum(u, path) - 0.5 * cm_norm_sq(u)
        _check_finite(lambda: log_rho_minus_terms(u, path), total)
    return total


def log_rho_plus(drift, path):
    u = drift_path(drift, path)
    with np.errstate(over="ignore", invalid="ignore"):
        total = ito_sum(u, path) - 0.5 * cm_norm_sq(u)
        _check_finite(lambda: -log_rho_minus_terms(u, path), total)
    return total


def novikov_check(drift, batch):
    """Mean of ``rho(-delta u)`` with a 99% half-width.

    Weights are exponentiated after subtracting the largest log-weight, so
    heavy tails do not overflow before the rescaling.
    """
    if len(batch) < 1:
        raise InvalidArgument("empty batch")
    logw = np.atleast_1d(log_rho_minus(drift, batch.stack))
    top = float(np.max(logw))
    scaled = np.exp(logw - top)
    n = logw.size
    mean = float(np.exp(top) * np.mean(scaled))
    if n == 1 or np.all(logw == logw[0]):
        hw = 0.0
    else:
        hw = float(np.exp(top) * Z99 * np.std(scaled, ddof=1) / np.sqrt(n))
    return Estimate("novikov", mean, hw, n, batch.seed)


def density_identity_residual(u, v, path, solver_apply=None):
    """``log rho(-delta v)(U w) + log rho(-delta u)(w)``; zero for inverse pairs.

    ``solver_apply(u, path)`` must return an object with an ``output`` path;
    it defaults to ``apply_shift``.
    """
    if solver_apply is None:
        from .solver import apply_shift as solver_apply
    shifted = solver_apply(u, path).output
    return log_rho_minus(v, shifted) + log_rho_minus(u, path)
