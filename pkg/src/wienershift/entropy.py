"""Energy, relative entropy, and the invertibility-gap certificate.

For ``U = I + u`` with ``E[rho(-delta u)] = 1`` the entropy of the image
measure is ``1/2 E int |E[u_s | U up to s]|^2 ds`` and never exceeds the
energy ``1/2 E|u|_H^2``; equality holds exactly when ``U`` is invertible.
``certify`` estimates both sides on one batch and turns the paired gap into
a verdict.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .drift import drift_path
from .estimate import Estimate, mc_estimate
from .girsanov import log_rho_minus, novikov_check
from .grid import InvalidArgument, cm_norm_sq, sample_paths
from .innovation import FilteredDrift, make_filter
from .solver import apply_shift, inverse_residuals, residual_verdict

__all__ = [
    "INVERTIBLE",
    "NON_INVERTIBLE",
    "INCONCLUSIVE",
    "REGRESSION_ALLOWANCE",
    "ROUNDOFF",
    "GapReport",
    "InverseEntropy",
    "energy",
    "entropy_via_filter",
    "entropy_via_inverse",
    "certify",
    "training_seed",
]

INVERTIBLE = "invertible-consistent"
NON_INVERTIBLE = "non-invertible"
INCONCLUSIVE = "inconclusive"

# fraction of the entropy estimate granted to a regression filter's bias
REGRESSION_ALLOWANCE = 0.10
# absolute slack for quantities that agree exactly up to float rounding
ROUNDOFF = 1e-10


@dataclass(frozen=True)
class InverseEntropy(Estimate):
    trusted: bool = True


def energy(u, batch):
    """``1/2 E|u|_H^2`` with a 99% half-width."""
    if len(batch) < 1:
        raise InvalidArgument("empty batch")
    per_path = 0.5 * np.atleast_1d(cm_norm_sq(drift_path(u, batch.stack)))
    return mc_estimate(per_path, "energy", batch.seed)


def _filter_values(filtered):
    if isinstance(filtered, FilteredDrift):
        return filtered.grid, np.atleast_2d(filtered.values)
    filtered = list(filtered)
    if not filtered:
        raise InvalidArgument("no filtered drifts")
    grid = filtered[0].grid
    if any(f.grid.n_steps != grid.n_steps for f in filtered):
        raise InvalidArgument("filtered drifts live on different grids")
    return grid, np.vstack([np.atleast_2d(f.values) for f in filtered])


def entropy_via_filter(filtered, seed=None):
    """``1/2 E sum_i filtered_i^2 dt``; valid whether or not ``U`` is invertible."""
    grid, values = _filter_values(filtered)
    per_path = 0.5 * np.sum(values**2, axis=-1) * grid.dt
    return mc_estimate(per_path, "entropy_via_filter", seed)


def entropy_via_inverse(u, v, batch, check=True):
    """``E[log rho(-delta v)(U w)]``, the entropy when ``I + v`` inverts ``U``.

    With ``check`` the pair's inverse residuals are compared against the
    solver's heuristic threshold and ``trusted`` records the outcome.
    """
    shifted = apply_shift(u, batch.stack).output
    per_path = np.atleast_1d(log_rho_minus(v, shifted))
    est = mc_estimate(per_path, "entropy_via_inverse", batch.seed)
    trusted = True
    if check:
        res = inverse_residuals(u, v, batch)
        trusted = residual_verdict(max(res.left, res.right), batch.grid.dt)
    return InverseEntropy(est.name, est.mean, est.half_width, est.n, est.seed, trusted)


def training_seed(seed):
    """Seed of the independent batch the regression filter is trained on."""
    return int(np.random.SeedSequence([int(seed) & (2**64 - 1), 1]).generate_state(1, np.uint64)[0])


@dataclass
class GapReport:
    energy: Estimate
    entropy: Estimate
    gap: Estimate
    entropy_method: str
    verdict: str
    reason: str
    allowance: float
    n_steps: int
    n_paths: int
    seed: int
    novikov: Estimate
    entropy_inverse: Estimate | None = None
    estimators_agree: bool | None = None
    energy_paths: np.ndarray = field(default=None, repr=False)
    entropy_paths: np.ndarray = field(default=None, repr=False)
    filtered: FilteredDrift = field(default=None, repr=False)

    def to_json(self):
        out = {
            "energy": self.energy.to_json(),
            "entropy": self.entropy.to_json(),
            "gap": self.gap.to_json(),
            "entropy_method": self.entropy_method,
            "verdict": self.verdict,
            "reason": self.reason,
            "thresholds": {
                "confidence": 0.99,
                "allowance": self.allowance,
                "roundoff": ROUNDOFF,
                "regression_allowance_fraction": REGRESSION_ALLOWANCE,
            },
            "novikov": self.novikov.to_json(),
            "n_steps": self.n_steps,
            "n_paths": self.n_paths,
            "seed": self.seed,
        }
        if self.entropy_inverse is not None:
            out["entropy_inverse"] = self.entropy_inverse.to_json()
            out["estimators_agree"] = self.estimators_agree
        return out


def _verdict(gap, allowance):
    if abs(gap.mean) <= gap.half_width + allowance + ROUNDOFF:
        return INVERTIBLE
    if gap.mean - gap.half_width - allowance > ROUNDOFF:
        return NON_INVERTIBLE
    return INCONCLUSIVE


def certify(u, filter_method, batch, train=None, allowance=None, v=None, k=None):
    """Energy versus filtered entropy on ``batch``, with a verdict.

    ``allowance`` defaults to 0 for exact filters and to
    ``REGRESSION_ALLOWANCE * entropy`` for the regression filter.  A
    regression filter without ``train`` is trained on a fresh batch of the
    same size drawn from ``training_seed(batch.seed)``.  When an inverse
    candidate ``v`` is given, the inverse-based entropy is reported too.
    """
    if len(batch) < 1:
        raise InvalidArgument("empty batch")
    grid = batch.grid
    if filter_method == "regression" and train is None:
        train = sample_paths(grid, len(batch), training_seed(batch.seed))
    filt = make_filter(u, filter_method, train=train, k=k)
    nov = novikov_check(u, batch)

    shifted = apply_shift(u, batch.stack)
    e_paths = 0.5 * np.atleast_1d(cm_norm_sq(shifted.drift_trace))
    filtered = filt(shifted.output)
    del shifted
    h_paths = 0.5 * np.sum(np.atleast_2d(filtered.values) ** 2, axis=-1) * grid.dt
    en = mc_estimate(e_paths, "energy", batch.seed)
    ent = mc_estimate(h_paths, "entropy_via_filter", batch.seed)
    gap = mc_estimate(e_paths - h_paths, "gap", batch.seed)

    if allowance is None:
        allowance = REGRESSION_ALLOWANCE * ent.mean if filter_method == "regression" else 0.0
    allowance = float(allowance)

    if abs(nov.mean - 1.0) > nov.half_width + ROUNDOFF:
        verdict, reason = INCONCLUSIVE, "E[rho(-delta u)] = 1 rejected at 99%"
    else:
        verdict = _verdict(gap, allowance)
        reason = {
            INVERTIBLE: "gap interval contains 0",
            NON_INVERTIBLE: "gap exceeds its half-width plus allowance",
            INCONCLUSIVE: "gap below zero beyond its half-width",
        }[verdict]

    ent_inv, agree = None, None
    if v is not None:
        ent_inv = entropy_via_inverse(u, v, batch)
        agree = bool(
            abs(ent_inv.mean - ent.mean) <= ent_inv.half_width + ent.half_width + allowance + ROUNDOFF
        )
        if not agree:
            reason += "; entropy estimators disagree"

    return GapReport(
        energy=en,
        entropy=ent,
        gap=gap,
        entropy_method=filter_method,
        verdict=verdict,
        reason=reason,
        allowance=allowance,
        n_steps=grid.n_steps,
        n_paths=len(batch),
        seed=batch.seed,
        novikov=nov,
        entropy_inverse=ent_inv,
        estimators_agree=agree,
        energy_paths=e_paths,
        entropy_paths=h_paths,
        filtered=filtered,
    )
