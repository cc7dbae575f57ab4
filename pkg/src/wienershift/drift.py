"""Causal drifts ``u`` and stopping times on discretized path space.

A drift is evaluated one grid step at a time: ``drift.eval(grid, i, x)``
returns the density on ``[t_i, t_{i+1})`` and may read ``x[..., :i+1]`` only.
``x`` is usually longer than that (solvers pass their whole working array),
which is what ``causality_check`` exploits: corrupting ``x[..., i+1:]`` must
not change the output.

All evaluation rules broadcast over leading axes, so a stack of paths is
evaluated in one call per step.
"""
from __future__ import annotations

import re
from functools import lru_cache

import numpy as np

from .grid import DensityPath, InvalidArgument, TimeGrid, WienerPath

__all__ = [
    "AdaptedDrift",
    "ZeroDrift",
    "DeterministicDrift",
    "LinearDrift",
    "LinearInverseDrift",
    "TsirelsonDrift",
    "StoppedDrift",
    "AnticipatingDrift",
    "StoppingTime",
    "ConstantTime",
    "FirstHitting",
    "zero_drift",
    "deterministic_drift",
    "linear_drift",
    "linear_inverse_drift",
    "tsirelson_drift",
    "stopped_drift",
    "constant_time",
    "first_hitting",
    "drift_path",
    "stopping_index",
    "causality_check",
    "stopping_causality_check",
    "parse_drift",
    "parse_stopping",
]


class AdaptedDrift:
    """Base class for causal drift densities."""

    label = "drift"

    def eval(self, grid, i, x):
        raise NotImplementedError

    def stepper(self, grid):
        """Evaluator for sequential use (``i = 0, 1, ...`` on one growing array).

        Subclasses may keep running state here; the result must agree with
        ``eval`` bit for bit.
        """
        return lambda i, x: self.eval(grid, i, x)

    def trace(self, grid, values):
        """Densities along fully known paths, shape ``values.shape[:-1] + (n,)``."""
        values = np.asarray(values, dtype=np.float64)
        out = np.empty(values.shape[:-1] + (grid.n_steps,))
        for i in range(grid.n_steps):
            out[..., i] = self.eval(grid, i, values)
        return out

    def features(self, grid, i, x):
        """Causal regression features of an observed prefix, shape ``(..., d)``."""
        return np.asarray(x[..., i], dtype=np.float64)[..., None]

    def __repr__(self):
        return f"<{type(self).__name__} {self.label}>"


def _broadcast(value, x):
    return np.broadcast_to(np.float64(value), np.shape(x)[:-1]).copy() if np.ndim(x) > 1 else np.float64(value)


class ZeroDrift(AdaptedDrift):
    label = "zero"

    def eval(self, grid, i, x):
        return _broadcast(0.0, x)

    def trace(self, grid, values):
        return np.zeros(np.shape(values)[:-1] + (grid.n_steps,))


class DeterministicDrift(AdaptedDrift):
    """``u_t(w) = h'(t)``, independent of the path.

    ``hdot`` is a constant, a callable of the left endpoint ``t_i``, or a
    ``DensityPath`` on a fixed grid.
    """

    def __init__(self, hdot, label=None):
        self.hdot = hdot
        if label is None:
            label = f"constant c={hdot!r}" if np.isscalar(hdot) else "deterministic"
        self.label = label

    def density(self, grid):
        h = self.hdot
        if isinstance(h, DensityPath):
            if h.grid.n_steps != grid.n_steps:
                raise InvalidArgument("deterministic drift defined on a different grid")
            return np.asarray(h.values, dtype=np.float64)
        if callable(h):
            return np.asarray(h(grid.times[:-1]), dtype=np.float64) * np.ones(grid.n_steps)
        return np.full(grid.n_steps, float(h))

    def eval(self, grid, i, x):
        return _broadcast(self.density(grid)[i], x)

    def stepper(self, grid):
        h = self.density(grid)
        return lambda i, x: _broadcast(h[i], x)

    def trace(self, grid, values):
        return np.broadcast_to(self.density(grid), np.shape(values)[:-1] + (grid.n_steps,)).copy()

    def scaled(self, c):
        if isinstance(self.hdot, DensityPath):
            h = DensityPath(self.hdot.grid, c * self.hdot.values)
        elif callable(self.hdot):
            f = self.hdot
            h = lambda t: c * f(t)  # noqa: E731
        else:
            h = c * float(self.hdot)
        return DeterministicDrift(h)

    def negated(self):
        return self.scaled(-1.0)


class LinearDrift(AdaptedDrift):
    """``u_t(w) = -theta * w(t_i)``: the Gaussian case with an exact filter."""

    def __init__(self, theta):
        self.theta = float(theta)
        self.label = f"linear theta={self.theta!r}"

    def eval(self, grid, i, x):
        return -self.theta * x[..., i]

    def trace(self, grid, values):
        return -self.theta * np.asarray(values)[..., :-1]

    def features(self, grid, i, x):
        # observed value and its running integral
        area = np.sum(x[..., :i], axis=-1) * grid.dt
        return np.stack([x[..., i], area], axis=-1)


class LinearInverseDrift(AdaptedDrift):
    """Inverse drift of ``LinearDrift(theta)``: ``v_t(x) = theta * Y_t(x)``.

    ``Y`` solves ``dY = theta Y dt + dx``.  With ``kernel="euler"`` ``Y`` is the
    explicit-Euler recursion, which inverts the discrete shift exactly; with
    ``kernel="exp"`` it is the left-point sum of the continuous kernel
    ``exp(theta (t - s))``, an independent discretization whose mismatch with
    the shift shrinks as the grid is refined.
    """

    def __init__(self, theta, kernel="euler"):
        if kernel not in ("euler", "exp"):
            raise InvalidArgument(f"unknown kernel {kernel!r}")
        self.theta = float(theta)
        self.kernel = kernel
        self.label = f"linear-inverse theta={self.theta!r} kernel={kernel}"

    def _growth(self, grid):
        if self.kernel == "euler":
            return 1.0 + self.theta * grid.dt
        return float(np.exp(self.theta * grid.dt))

    def _weights(self, grid, i):
        g = self._growth(grid)
        lag = np.arange(i - 1, -1, -1, dtype=np.float64)
        if self.kernel == "exp":
            lag = lag + 1.0
        return g**lag

    def eval(self, grid, i, x):
        dx = np.diff(x[..., : i + 1], axis=-1)
        return self.theta * (dx @ self._weights(grid, i))

    def _scan(self, grid, values):
        g = self._growth(grid)
        dx = np.diff(values, axis=-1)
        y = np.zeros(values.shape[:-1] + (grid.n_steps,))
        acc = np.zeros(values.shape[:-1])
        for i in range(1, grid.n_steps):
            if self.kernel == "euler":
                acc = g * acc + dx[..., i - 1]
            else:
                acc = g * (acc + dx[..., i - 1])
            y[..., i] = acc
        return self.theta * y

    def trace(self, grid, values):
        return self._scan(grid, np.asarray(values, dtype=np.float64))

    def stepper(self, grid):
        g = self._growth(grid)
        state = {"i": 0, "acc": 0.0}

        def step(i, x):
            if i != state["i"]:
                return self.eval(grid, i, x)
            if i > 0:
                dx = x[..., i] - x[..., i - 1]
                if self.kernel == "euler":
                    state["acc"] = g * state["acc"] + dx
                else:
                    state["acc"] = g * (state["acc"] + dx)
            state["i"] = i + 1
            return self.theta * (state["acc"] + np.zeros(np.shape(x)[:-1]))

        return step


@lru_cache(maxsize=64)
def _tsirelson_table(n_steps, depth):
    """Per step: (cell index, left index of previous cell, right index) or -1."""
    if n_steps & (n_steps - 1) or n_steps < 2**depth:
        raise InvalidArgument(
            f"tsirelson depth {depth} needs a dyadic grid with at least {2**depth} steps, got {n_steps}"
        )
    # partition points 0 < 2^-K < ... < 1/2 < 1 as grid indices
    points = [0] + [n_steps >> (depth - m) for m in range(depth + 1)]
    cell = np.empty(n_steps, dtype=np.int64)
    left = np.full(n_steps, -1, dtype=np.int64)
    right = np.full(n_steps, -1, dtype=np.int64)
    for c in range(depth + 1):
        lo, hi = points[c], points[c + 1]
        cell[lo:hi] = c
        if c >= 1:
            left[lo:hi] = points[c - 1]
            right[lo:hi] = points[c]
    for arr in (cell, left, right):
        arr.flags.writeable = False
    return cell, left, right


def _frac(r):
    f = r - np.floor(r)
    return np.where(f >= 1.0, 0.0, f)


class TsirelsonDrift(AdaptedDrift):
    """Tsirelson's drift truncated at depth ``K``.

    Partition points ``0 < 2^-K < 2^-K+1 < ... < 1/2 < 1``.  On the cell
    ``(p_c, p_{c+1}]`` the density is the fractional part of the slope of
    the path over the previous cell ``[p_{c-1}, p_c]``; it vanishes on the
    first cell ``(0, 2^-K]``, which has no predecessor.
    """

    def __init__(self, depth):
        if int(depth) != depth or depth < 1:
            raise InvalidArgument(f"depth must be a positive integer, got {depth!r}")
        self.depth = int(depth)
        self.label = f"tsirelson K={self.depth}"

    def active_length(self):
        return 1.0 - 2.0**-self.depth

    def table(self, grid):
        return _tsirelson_table(grid.n_steps, self.depth)

    def _slope(self, grid, i, x):
        _, left, right = self.table(grid)
        a, b = left[i], right[i]
        return (x[..., b] - x[..., a]) / ((b - a) * grid.dt)

    def eval(self, grid, i, x):
        _, left, _ = self.table(grid)
        if left[i] < 0:
            return _broadcast(0.0, x)
        return _frac(self._slope(grid, i, x))

    def trace(self, grid, values):
        values = np.asarray(values, dtype=np.float64)
        _, left, right = self.table(grid)
        on = left >= 0
        out = np.zeros(values.shape[:-1] + (grid.n_steps,))
        span = (right[on] - left[on]) * grid.dt
        out[..., on] = _frac((values[..., right[on]] - values[..., left[on]]) / span)
        return out

    def features(self, grid, i, x):
        cell, left, _ = self.table(grid)
        slope = self._slope(grid, i, x) if left[i] >= 0 else np.zeros(np.shape(x)[:-1])
        return np.stack([np.broadcast_to(np.float64(cell[i]), np.shape(slope)), slope], axis=-1)


class AnticipatingDrift(AdaptedDrift):
    """Reads the terminal value ``w(1)``; violates adaptedness on purpose."""

    label = "anticipating"

    def eval(self, grid, i, x):
        return np.asarray(x[..., grid.n_steps], dtype=np.float64)


class StoppingTime:
    """Base class for stopping times taking grid values.

    ``event_at(grid, i, x)`` says whether the path witnesses ``tau <= t_i`` at
    index ``i``; once true it is treated as true forever.
    """

    label = "tau"

    def event_at(self, grid, i, x):
        raise NotImplementedError

    def stopped_by(self, grid, i, x):
        """Whether ``tau <= t_i``, from ``x[..., :i+1]`` only."""
        if i >= grid.n_steps:
            return np.ones(np.shape(x)[:-1], dtype=bool)
        hit = np.zeros(np.shape(x)[:-1], dtype=bool)
        for j in range(i + 1):
            hit |= self.event_at(grid, j, x)
        return hit

    def index(self, grid, values):
        values = np.asarray(values, dtype=np.float64)
        out = np.full(values.shape[:-1], grid.n_steps, dtype=np.int64)
        for i in range(grid.n_steps, -1, -1):
            out = np.where(self.event_at(grid, i, values), i, out)
        return out

    def __repr__(self):
        return f"<{type(self).__name__} {self.label}>"


class ConstantTime(StoppingTime):
    """``tau = a``, rounded up to the grid."""

    def __init__(self, a):
        if not 0.0 <= a <= 1.0:
            raise InvalidArgument(f"constant stopping time must lie in [0, 1], got {a!r}")
        self.a = float(a)
        self.label = f"const a={self.a!r}"

    def event_at(self, grid, i, x):
        return np.broadcast_to(i >= grid.index_of(self.a), np.shape(x)[:-1]).copy()

    def stopped_by(self, grid, i, x):
        return self.event_at(grid, i, x)

    def index(self, grid, values):
        return np.full(np.shape(values)[:-1], grid.index_of(self.a), dtype=np.int64)


class FirstHitting(StoppingTime):
    """First grid time with ``|w(t_k)| >= b``, capped at 1."""

    def __init__(self, b):
        self.b = float(b)
        self.label = f"hit b={self.b!r}"

    def event_at(self, grid, i, x):
        return np.abs(x[..., i]) >= self.b

    def stopped_by(self, grid, i, x):
        if i >= grid.n_steps:
            return np.ones(np.shape(x)[:-1], dtype=bool)
        return np.max(np.abs(x[..., : i + 1]), axis=-1) >= self.b

    def index(self, grid, values):
        values = np.asarray(values, dtype=np.float64)
        hit = np.abs(values) >= self.b
        return np.where(hit.any(axis=-1), hit.argmax(axis=-1), grid.n_steps).astype(np.int64)


class StoppedDrift(AdaptedDrift):
    """``inner`` switched off from the stopping time on.

    At step ``i`` the drift is active iff ``tau > t_i``, i.e. the stopping
    event has not been witnessed at any index ``<= i``.
    """

    def __init__(self, inner, tau):
        self.inner = inner
        self.tau = tau
        self.label = f"stopped inner={inner.label} tau={tau.label}"

    def eval(self, grid, i, x):
        on = ~self.tau.stopped_by(grid, i, x)
        return np.where(on, self.inner.eval(grid, i, x), 0.0)

    def stepper(self, grid):
        inner = self.inner.stepper(grid)
        state = {"i": 0, "hit": False}

        def step(i, x):
            if i != state["i"]:
                return self.eval(grid, i, x)
            state["hit"] = state["hit"] | self.tau.event_at(grid, i, x)
            state["i"] = i + 1
            return np.where(state["hit"], 0.0, inner(i, x))

        return step

    def trace(self, grid, values):
        values = np.asarray(values, dtype=np.float64)
        k = self.tau.index(grid, values)
        active = np.arange(grid.n_steps) < k[..., None]
        return np.where(active, self.inner.trace(grid, values), 0.0)

    def features(self, grid, i, x):
        flag = self.tau.stopped_by(grid, i, x).astype(np.float64)
        return np.concatenate([self.inner.features(grid, i, x), flag[..., None]], axis=-1)


def zero_drift():
    return ZeroDrift()


def deterministic_drift(hdot):
    return DeterministicDrift(hdot)


def linear_drift(theta):
    return LinearDrift(theta)


def linear_inverse_drift(theta, kernel="euler"):
    return LinearInverseDrift(theta, kernel)


def tsirelson_drift(depth):
    return TsirelsonDrift(depth)


def stopped_drift(inner, tau):
    return StoppedDrift(inner, tau)


def constant_time(a):
    return ConstantTime(a)


def first_hitting(b):
    return FirstHitting(b)


def drift_path(drift, path):
    """Materialize ``u(w)`` along ``path`` (single or stacked)."""
    return DensityPath(path.grid, drift.trace(path.grid, path.values))


def stopping_index(tau, path):
    k = tau.index(path.grid, path.values)
    return int(k) if np.ndim(k) == 0 else k


def _garbage(rng, shape):
    g = rng.standard_normal(shape) * 10.0 ** rng.integers(-3, 6, size=shape)
    return np.where(rng.random(shape) < 0.1, 0.0, g)


def causality_check(drift, path, trials=3, seed=0):
    """True iff no evaluation changes when the path beyond step ``i`` is corrupted."""
    grid = path.grid
    base = np.array(path.values, dtype=np.float64)
    rng = np.random.default_rng(seed)
    for i in range(grid.n_steps):
        ref = np.asarray(drift.eval(grid, i, base))
        for _ in range(trials):
            x = base.copy()
            x[..., i + 1 :] = _garbage(rng, x[..., i + 1 :].shape)
            got = np.asarray(drift.eval(grid, i, x))
            if not np.array_equal(ref, got, equal_nan=True):
                return False
    return True


def stopping_causality_check(tau, path, trials=3, seed=0):
    """True iff ``{tau <= t_k}`` never depends on values after ``t_k``."""
    grid = path.grid
    base = np.array(path.values, dtype=np.float64)
    rng = np.random.default_rng(seed)
    k_ref = np.asarray(tau.index(grid, base))
    if np.any(k_ref < 0) or np.any(k_ref > grid.n_steps):
        return False
    for k in range(grid.n_steps + 1):
        ref = tau.stopped_by(grid, k, base)
        if not np.array_equal(ref, k_ref <= k):
            return False
        for _ in range(trials):
            x = base.copy()
            x[..., k + 1 :] = _garbage(rng, x[..., k + 1 :].shape)
            if not np.array_equal(ref, tau.stopped_by(grid, k, x)):
                return False
            if not np.array_equal(ref, np.asarray(tau.index(grid, x)) <= k):
                return False
    return True


# --- registry -------------------------------------------------------------

_PARAM = re.compile(r"^([^\s=]+)=(\S+)$")
_ALIASES = {"θ": "theta", "c": "c", "K": "K", "k": "K", "depth": "K"}


def _params(tokens):
    out = {}
    for tok in tokens:
        m = _PARAM.match(tok)
        if not m:
            raise InvalidArgument(f"expected key=value, got {tok!r}")
        key = _ALIASES.get(m.group(1), m.group(1))
        out[key] = m.group(2)
    return out


def _number(params, key, label, default=None):
    if key not in params:
        if default is None:
            raise InvalidArgument(f"{label} needs parameter {key}=...")
        return default
    try:
        return float(params.pop(key))
    except ValueError:
        raise InvalidArgument(f"{label}: {key} must be a number") from None


def _done(params, label):
    if params:
        raise InvalidArgument(f"{label}: unknown parameters {sorted(params)}")


def parse_stopping(spec):
    """``"const a=0.5"`` or ``"hit b=0.5"``."""
    tokens = spec.split()
    if not tokens:
        raise InvalidArgument("empty stopping-time spec")
    name, params = tokens[0], _params(tokens[1:])
    if name in ("const", "constant"):
        tau = ConstantTime(_number(params, "a", name))
    elif name in ("hit", "first_hitting"):
        tau = FirstHitting(_number(params, "b", name))
    else:
        raise InvalidArgument(f"unknown stopping time {name!r}")
    _done(params, name)
    return tau


def parse_drift(spec):
    """Build a drift from a label such as ``"linear θ=1.0"`` or
    ``"stopped inner=linear θ=1.0 tau=hit b=0.5"``."""
    tokens = spec.split()
    if not tokens:
        raise InvalidArgument("empty drift spec")
    name, rest = tokens[0], tokens[1:]
    if name == "stopped":
        inner, tau, cur = [], [], None
        for tok in rest:
            if tok.startswith("inner="):
                cur = inner
                tok = tok[len("inner=") :]
            elif tok.startswith("tau="):
                cur = tau
                tok = tok[len("tau=") :]
            if cur is None:
                raise InvalidArgument("stopped drift needs inner=... and tau=...")
            cur.append(tok)
        if not inner or not tau:
            raise InvalidArgument("stopped drift needs inner=... and tau=...")
        return StoppedDrift(parse_drift(" ".join(inner)), parse_stopping(" ".join(tau)))
    params = _params(rest)
    if name == "zero":
        drift = ZeroDrift()
    elif name in ("constant", "deterministic"):
        drift = DeterministicDrift(_number(params, "c", name, default=1.0))
    elif name == "linear":
        drift = LinearDrift(_number(params, "theta", name))
    elif name == "linear-inverse":
        theta = _number(params, "theta", name)
        drift = LinearInverseDrift(theta, params.pop("kernel", "euler"))
    elif name == "tsirelson":
        k = _number(params, "K", name)
        if k != int(k):
            raise InvalidArgument("tsirelson: K must be an integer")
        drift = TsirelsonDrift(int(k))
    elif name == "anticipating":
        drift = AnticipatingDrift()
    else:
        raise InvalidArgument(f"unknown drift {name!r}")
    _done(params, name)
    return drift
