"""Filtered drift ``E[u_t | U_s, s <= t]``, the innovation process, and
Brownianity / measure-preservation diagnostics.

Three filters are shipped:

* ``gaussian_filter``: Kalman recursion for ``linear_drift``.  The state
  noise and the observation noise are the same Brownian increment, so the
  gain uses their cross-covariance; the result is exact on the grid.
* ``regression_filter``: k-nearest-neighbour regression of ``u_i(w)`` on
  declared features of the observed prefix ``U(w)[:i+1]``, trained on an
  independent batch.  Biased, with the bias set by the features.
* ``analytic_filter``: closed forms (zero and deterministic drifts).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import stats
from scipy.spatial import cKDTree

from .drift import AdaptedDrift, DeterministicDrift, LinearDrift, ZeroDrift
from .grid import DensityPath, InvalidArgument, NumericError, WienerPath
from .solver import apply_shift

__all__ = [
    "FilteredDrift",
    "gaussian_filter",
    "regression_filter",
    "analytic_filter",
    "make_filter",
    "innovation_path",
    "conditional_girsanov",
    "brownianity_report",
    "measure_preservation_test",
    "FilterInverseDrift",
    "METHODS",
]

METHODS = ("gaussian", "regression", "analytic")
_QUERY_CHUNK = 20000


@dataclass(frozen=True, eq=False)
class FilteredDrift:
    grid: object
    values: np.ndarray
    method: str

    def __post_init__(self):
        arr = np.array(self.values, dtype=np.float64)
        if arr.shape[-1] != self.grid.n_steps:
            raise InvalidArgument(f"filtered drift needs {self.grid.n_steps} values, got {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise NumericError("non-finite filtered drift")
        arr.flags.writeable = False
        object.__setattr__(self, "values", arr)

    @property
    def density(self):
        return DensityPath(self.grid, self.values)

    def __len__(self):
        return self.values.shape[0] if self.values.ndim == 2 else 1

    def __getitem__(self, j):
        return FilteredDrift(self.grid, self.values[j], self.method)


def gaussian_filter(theta, observed):
    """``-theta * E[w(t_i) | U(t_1), ..., U(t_i)]`` for ``u = linear_drift(theta)``.

    Discrete model: ``dU_j = -theta w(t_j) dt + dw_j`` and ``w(t_{j+1}) =
    w(t_j) + dw_j``.  The conditional law of ``w(t_i)`` stays Gaussian; its
    mean and variance are propagated one observation at a time.
    """
    grid = observed.grid
    dt = grid.dt
    du = observed.increments
    mean = np.zeros(du.shape[:-1])
    var = 0.0
    out = np.empty(du.shape)
    for i in range(grid.n_steps):
        out[..., i] = -theta * mean
        # joint law of (w(t_{i+1}), dU_i) given the past observations
        s_y = theta**2 * dt**2 * var + dt
        if s_y <= 0:
            raise NumericError("singular observation variance", step=i)
        s_xy = dt - theta * dt * var
        gain = s_xy / s_y
        mean = mean + gain * (du[..., i] + theta * dt * mean)
        var = max(var + dt - gain * s_xy, 0.0)
    return FilteredDrift(grid, out, "gaussian")


def analytic_filter(u, observed):
    """Closed-form filters: the drift itself when it is not random."""
    grid = observed.grid
    shape = observed.values.shape[:-1] + (grid.n_steps,)
    if isinstance(u, ZeroDrift):
        return FilteredDrift(grid, np.zeros(shape), "analytic")
    if isinstance(u, DeterministicDrift):
        return FilteredDrift(grid, np.broadcast_to(u.density(grid), shape), "analytic")
    raise InvalidArgument(f"no analytic filter for {u.label!r}")


def _standardize(train, query):
    scale = train.std(axis=0)
    scale[~(scale > 0)] = 1.0
    return train / scale, query / scale


def regression_filter(u, features=None, train=None, observed=None, k=None):
    """k-NN estimate of ``E[u_i | features(U prefix)]``, ``k = ceil(sqrt(N))``.

    ``features(grid, i, x)`` defaults to ``u.features``.  Steps whose training
    features, targets and query features coincide with the previous step's
    reuse its estimate.
    """
    if train is None or len(train) < 1:
        raise InvalidArgument("regression filter needs a nonempty training batch")
    if observed is None:
        raise InvalidArgument("regression filter needs an observed path")
    if observed.grid.n_steps != train.grid.n_steps:
        raise InvalidArgument("training and observed paths live on different grids")
    grid = train.grid
    features = features or u.features
    n_train = len(train)
    k = int(np.ceil(np.sqrt(n_train))) if k is None else int(k)
    k = min(k, n_train)
    shifted = apply_shift(u, train.stack)
    targets = shifted.drift_trace.values
    u_train = shifted.output.values
    del shifted
    obs = observed.values
    single = obs.ndim == 1
    obs2 = obs[None, :] if single else obs
    out = np.empty((obs2.shape[0], grid.n_steps))
    prev = None
    for i in range(grid.n_steps):
        f_train = np.asarray(features(grid, i, u_train), dtype=np.float64).reshape(n_train, -1)
        f_query = np.asarray(features(grid, i, obs2), dtype=np.float64).reshape(obs2.shape[0], -1)
        t_i = targets[:, i]
        if not (np.all(np.isfinite(f_train)) and np.all(np.isfinite(f_query))):
            raise InvalidArgument(f"non-finite regression features at step {i}")
        if prev is not None and all(np.array_equal(a, b) for a, b in zip(prev, (f_train, f_query, t_i))):
            out[:, i] = out[:, i - 1]
            continue
        prev = (f_train, f_query, t_i)
        if np.all(t_i == t_i[0]):
            out[:, i] = t_i[0]
            continue
        a, b = _standardize(f_train, f_query)
        tree = cKDTree(a)
        for s in range(0, b.shape[0], _QUERY_CHUNK):
            _, idx = tree.query(b[s : s + _QUERY_CHUNK], k=k)
            idx = idx.reshape(idx.shape[0], -1)
            out[s : s + _QUERY_CHUNK, i] = t_i[idx].mean(axis=1)
    return FilteredDrift(grid, out[0] if single else out, "regression")


def make_filter(u, method, train=None, k=None):
    """Return ``observed -> FilteredDrift`` for the chosen method."""
    if method == "gaussian":
        if isinstance(u, LinearDrift):
            theta = u.theta
        elif isinstance(u, ZeroDrift):
            theta = 0.0
        else:
            raise InvalidArgument(f"gaussian filter applies to linear drifts, not {u.label!r}")
        return lambda observed: gaussian_filter(theta, observed)
    if method == "analytic":
        if not isinstance(u, (ZeroDrift, DeterministicDrift)):
            raise InvalidArgument(f"no analytic filter for {u.label!r}")
        return lambda observed: analytic_filter(u, observed)
    if method == "regression":
        if train is None:
            raise InvalidArgument("regression filter needs a training batch")
        return lambda observed: regression_filter(u, None, train, observed, k)
    raise InvalidArgument(f"unknown filter method {method!r}")


def innovation_path(observed, filtered):
    """``Z(t_i) = U(t_i) - sum_{j<i} filtered_j dt``."""
    if observed.grid.n_steps != filtered.grid.n_steps:
        raise InvalidArgument("grid mismatch between observation and filter")
    return WienerPath(observed.grid, observed.values - filtered.density.primitive().values)


def conditional_girsanov(filtered, z, t_index):
    """Log of ``E[rho(-delta u) | U up to t]`` through the innovation ``z``."""
    if filtered.grid.n_steps != z.grid.n_steps:
        raise InvalidArgument("grid mismatch between filter and innovation")
    if not 0 <= t_index <= z.grid.n_steps:
        raise InvalidArgument(f"t_index {t_index} outside the grid")
    f = filtered.values[..., :t_index]
    dz = z.increments[..., :t_index]
    return -np.sum(f * dz, axis=-1) - 0.5 * np.sum(f**2, axis=-1) * z.grid.dt


def brownianity_report(paths, lags=(1, 2, 3), band=4.0):
    """Checks that the increments of a stack of paths look like Brownian ones.

    Standardized increments ``xi = dZ / sqrt(dt)`` should have mean 0 and
    variance 1 at every step and be uncorrelated across lags.  Each statistic
    is compared with ``band`` standard errors.
    """
    if not paths.batched or len(paths) < 2:
        raise InvalidArgument("brownianity needs a stack of at least two paths")
    xi = paths.increments / np.sqrt(paths.grid.dt)
    n_paths, n = xi.shape
    step_mean = xi.mean(axis=0)
    step_var = xi.var(axis=0, ddof=1)
    pooled_var = float(np.mean(xi**2))
    report = {
        "n_paths": int(n_paths),
        "band_sigmas": float(band),
        "max_abs_step_mean": float(np.max(np.abs(step_mean))),
        "step_mean_band": band / np.sqrt(n_paths),
        "max_abs_step_var_dev": float(np.max(np.abs(step_var - 1.0))),
        "step_var_band": band * np.sqrt(2.0 / n_paths),
        "pooled_var": pooled_var,
        "pooled_var_band": band * np.sqrt(2.0 / xi.size),
        "autocorrelation": {},
    }
    ok = (
        report["max_abs_step_mean"] <= report["step_mean_band"]
        and report["max_abs_step_var_dev"] <= report["step_var_band"]
        and abs(pooled_var - 1.0) <= report["pooled_var_band"]
    )
    for lag in lags:
        if lag >= n:
            continue
        prod = xi[:, lag:] * xi[:, :-lag]
        rho = float(np.mean(prod))
        width = band / np.sqrt(prod.size)
        report["autocorrelation"][str(lag)] = {"value": rho, "band": width}
        ok = ok and abs(rho) <= width
    report["passed"] = bool(ok)
    return report


def measure_preservation_test(paths, n_times=8, p_threshold=1e-3):
    """Kolmogorov-Smirnov and covariance checks that ``paths`` are Brownian.

    Marginals ``A(t)/sqrt(t)`` at ``t = k/8`` are tested against N(0, 1);
    the covariance residual is ``max |Cov(A_s, A_t) - min(s, t)|`` over the
    same times.
    """
    if not paths.batched or len(paths) < 2:
        raise InvalidArgument("measure preservation needs a stack of at least two paths")
    grid = paths.grid
    if grid.n_steps % n_times:
        raise InvalidArgument(f"grid of {grid.n_steps} steps cannot host {n_times} test times")
    idx = np.arange(1, n_times + 1) * (grid.n_steps // n_times)
    t = grid.times[idx]
    a = paths.values[:, idx]
    pvalues = [float(stats.kstest(a[:, j] / np.sqrt(t[j]), "norm").pvalue) for j in range(n_times)]
    cov = np.cov(a, rowvar=False)
    resid = float(np.max(np.abs(cov - np.minimum.outer(t, t))))
    n = len(paths)
    return {
        "times": [float(x) for x in t],
        "marginal_pvalues": pvalues,
        "covariance_residual": resid,
        "p_threshold": p_threshold,
        "covariance_threshold": 5.0 / np.sqrt(n),
        "passed": bool(min(pvalues) > p_threshold and resid < 5.0 / np.sqrt(n)),
    }


class FilterInverseDrift(AdaptedDrift):
    """``v(x) = -filter(x)``: the inverse drift implied by a filter.

    If ``U`` is invertible its inverse is ``I + v`` with ``v(U) = -E[u | U]``,
    so ``(I + v)(U w)`` is the innovation path and equals ``w`` exactly when
    the filter recovers ``u``.
    """

    def __init__(self, filter_fn, label="filter-inverse"):
        self.filter_fn = filter_fn
        self.label = label

    def trace(self, grid, values):
        return -np.asarray(self.filter_fn(WienerPath(grid, values)).values)

    def eval(self, grid, i, x):
        # filters read the observation only up to index i
        return self.trace(grid, x)[..., i]
