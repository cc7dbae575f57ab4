"""Time grids, sampled Wiener paths and the elementary sums on them.

Paths are stored as numpy arrays whose last axis is time.  A ``WienerPath``
may hold a single path (shape ``(n_steps + 1,)``) or a stack of paths
(shape ``(count, n_steps + 1)``); every operation in the package broadcasts
over the leading axis.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

__all__ = [
    "InvalidArgument",
    "NumericError",
    "TimeGrid",
    "WienerPath",
    "DensityPath",
    "SampleBatch",
    "sample_paths",
    "ito_sum",
    "cm_norm_sq",
    "sup_distance",
]

_SEED_MASK = (1 << 64) - 1


class InvalidArgument(ValueError):
    """Raised for malformed inputs: empty batches, grid mismatches, bad sizes."""


class NumericError(ArithmeticError):
    """Raised when an accumulation leaves the finite floats."""

    def __init__(self, message, step=None):
        super().__init__(message if step is None else f"{message} (step {step})")
        self.step = step


@dataclass(frozen=True)
class TimeGrid:
    """Uniform partition of [0, 1] into ``n_steps`` cells."""

    n_steps: int
    horizon: float = field(default=1.0, init=False)

    def __post_init__(self):
        if int(self.n_steps) != self.n_steps or self.n_steps < 1:
            raise InvalidArgument(f"n_steps must be a positive integer, got {self.n_steps!r}")
        object.__setattr__(self, "n_steps", int(self.n_steps))

    @property
    def dt(self):
        return self.horizon / self.n_steps

    @cached_property
    def times(self):
        t = np.arange(self.n_steps + 1, dtype=np.float64) * self.dt
        t[-1] = self.horizon
        t.flags.writeable = False
        return t

    @property
    def is_dyadic(self):
        return self.n_steps & (self.n_steps - 1) == 0

    def index_of(self, t):
        """Smallest grid index whose time is >= ``t`` (clipped to the grid)."""
        k = int(np.ceil(t * self.n_steps - 1e-9))
        return min(max(k, 0), self.n_steps)


def _read_only(arr):
    while isinstance(arr, np.ndarray):
        if arr.flags.writeable:
            return False
        arr = arr.base
    return True


def _frozen(values):
    """Read-only float64 copy; arrays that are read-only all the way down are shared."""
    if isinstance(values, np.ndarray) and values.dtype == np.float64 and _read_only(values):
        return values
    arr = np.array(values, dtype=np.float64)
    arr.flags.writeable = False
    return arr


def _adopt(arr):
    """Freeze a freshly computed array so path constructors can share it."""
    arr.flags.writeable = False
    return arr


@dataclass(frozen=True, eq=False)
class WienerPath:
    """Path values ``w(t_i)`` on a grid; the last axis has length ``n_steps + 1``."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.values)
        if arr.ndim not in (1, 2) or arr.shape[-1] != self.grid.n_steps + 1:
            raise InvalidArgument(
                f"path values must end in an axis of length {self.grid.n_steps + 1}, got {arr.shape}"
            )
        object.__setattr__(self, "values", arr)

    @property
    def increments(self):
        return np.diff(self.values, axis=-1)

    @property
    def batched(self):
        return self.values.ndim == 2

    def __len__(self):
        return self.values.shape[0] if self.batched else 1

    def __getitem__(self, j):
        if not self.batched:
            raise TypeError("a single path is not indexable")
        return WienerPath(self.grid, self.values[j])

    @classmethod
    def from_increments(cls, grid, increments):
        inc = np.asarray(increments, dtype=np.float64)
        values = np.zeros(inc.shape[:-1] + (inc.shape[-1] + 1,))
        np.cumsum(inc, axis=-1, out=values[..., 1:])
        return cls(grid, _adopt(values))

    def coarsen(self, factor):
        """Subsample onto the grid with ``n_steps / factor`` cells."""
        if factor < 1 or self.grid.n_steps % factor:
            raise InvalidArgument(f"cannot coarsen {self.grid.n_steps} steps by {factor}")
        return WienerPath(TimeGrid(self.grid.n_steps // factor), self.values[..., ::factor])


@dataclass(frozen=True, eq=False)
class DensityPath:
    """Piecewise-constant drift density; ``values[..., i]`` lives on ``[t_i, t_{i+1})``."""

    grid: TimeGrid
    values: np.ndarray

    def __post_init__(self):
        arr = _frozen(self.values)
        if arr.ndim not in (1, 2) or arr.shape[-1] != self.grid.n_steps:
            raise InvalidArgument(
                f"density values must end in an axis of length {self.grid.n_steps}, got {arr.shape}"
            )
        if not np.all(np.isfinite(arr)):
            bad = np.argwhere(~np.isfinite(arr))[0][-1]
            raise NumericError("non-finite drift density", step=int(bad))
        object.__setattr__(self, "values", arr)

    @classmethod
    def constant(cls, grid, c):
        return cls(grid, np.full(grid.n_steps, float(c)))

    def primitive(self):
        """The path ``t_i -> sum_{j<i} values[j] dt``."""
        out = np.zeros(self.values.shape[:-1] + (self.grid.n_steps + 1,))
        np.cumsum(self.values * self.grid.dt, axis=-1, out=out[..., 1:])
        return WienerPath(self.grid, _adopt(out))


@dataclass(frozen=True, eq=False)
class SampleBatch:
    """``count`` Brownian paths regenerated bit-for-bit from ``(seed, count, grid)``."""

    seed: int
    count: int
    stack: WienerPath

    @property
    def grid(self):
        return self.stack.grid

    @property
    def values(self):
        return self.stack.values

    @property
    def paths(self):
        return [self.stack[j] for j in range(self.count)]

    def __len__(self):
        return self.count

    def __getitem__(self, j):
        return self.stack[j]

    def coarsen(self, factor):
        return SampleBatch(self.seed, self.count, self.stack.coarsen(factor))


def path_stream(seed, index):
    """Counter-based generator for path ``index`` of the batch keyed by ``seed``."""
    return np.random.Generator(np.random.Philox(key=[int(seed) & _SEED_MASK, int(index)]))


def _fill(out, grid, seed, start):
    scale = np.sqrt(grid.dt)
    for j in range(out.shape[0]):
        out[j, 1:] = path_stream(seed, start + j).standard_normal(grid.n_steps)
    out[:, 1:] *= scale
    np.cumsum(out[:, 1:], axis=1, out=out[:, 1:])


def sample_paths(grid, count, seed, workers=1):
    """Sample ``count`` Brownian paths on ``grid``.

    Path ``j`` is drawn from its own Philox stream keyed by ``(seed, j)``, so
    the batch does not depend on ``workers`` or on traversal order.
    """
    if int(count) != count or count < 1:
        raise InvalidArgument(f"count must be a positive integer, got {count!r}")
    if not isinstance(grid, TimeGrid):
        grid = TimeGrid(grid)
    count = int(count)
    values = np.zeros((count, grid.n_steps + 1))
    if workers <= 1 or count < 2 * workers:
        _fill(values, grid, seed, 0)
    else:
        bounds = np.linspace(0, count, workers + 1).astype(int)
        with ThreadPoolExecutor(max_workers=workers) as pool:
            jobs = [
                pool.submit(_fill, values[a:b], grid, seed, a)
                for a, b in zip(bounds[:-1], bounds[1:])
                if b > a
            ]
            for job in jobs:
                job.result()
    return SampleBatch(int(seed), count, WienerPath(grid, _adopt(values)))


def _same_grid(a, b):
    if a.grid.n_steps != b.grid.n_steps:
        raise InvalidArgument(f"grid mismatch: {a.grid.n_steps} vs {b.grid.n_steps} steps")


def ito_sum(density, path):
    """Left-point Ito sum ``sum_i density[i] * (w(t_{i+1}) - w(t_i))``."""
    _same_grid(density, path)
    return np.sum(density.values * path.increments, axis=-1)


def cm_norm_sq(density):
    """Discrete Cameron-Martin norm ``sum_i density[i]**2 * dt``."""
    return np.sum(density.values**2, axis=-1) * density.grid.dt


def sup_distance(a, b):
    _same_grid(a, b)
    return np.max(np.abs(a.values - b.values), axis=-1)
