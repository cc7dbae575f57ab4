"""Monte Carlo estimates with two-sided 99% CLT half-widths."""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import norm

__all__ = ["Z99", "Estimate", "mc_estimate"]

Z99 = float(norm.ppf(0.995))


@dataclass(frozen=True)
class Estimate:
    name: str
    mean: float
    half_width: float
    n: int
    seed: int | None = None

    @property
    def low(self):
        return self.mean - self.half_width

    @property
    def high(self):
        return self.mean + self.half_width

    def contains(self, value, slack=0.0):
        return abs(self.mean - value) <= self.half_width + slack

    def to_json(self):
        return asdict(self)


def mc_estimate(samples, name="estimate", seed=None):
    """Sample mean with a 99% CLT half-width; constant samples give width 0."""
    x = np.asarray(samples, dtype=np.float64).ravel()
    if x.size == 0:
        raise ValueError("no samples")
    mean = float(np.mean(x))
    if x.size == 1 or np.all(x == x[0]):
        hw = 0.0
    else:
        hw = Z99 * float(np.std(x, ddof=1)) / np.sqrt(x.size)
    return Estimate(name, mean, hw, int(x.size), seed)
