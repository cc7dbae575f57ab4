"""Command-line experiment runner.

    wienershift SUBCOMMAND [--config PATH] [--drift SPEC] [--steps N] ...

Subcommands: sample, invert, entropy, filter, stopped, preserve, certify-all.
Each run writes ``summary.json`` (fixed key order, no timestamps) and one or
more CSV files into ``--out``; timestamps go to ``run.log``.  Verdicts are
data: a completed run exits 0 whatever it concludes, configuration errors
exit 2.
"""
from __future__ import annotations

import argparse
import csv
import dataclasses
import json
import logging
import os
import sys
import time
from dataclasses import dataclass

import numpy as np

from . import __version__
from .drift import (
    DeterministicDrift,
    LinearDrift,
    StoppedDrift,
    TsirelsonDrift,
    ZeroDrift,
    drift_path,
    parse_drift,
    parse_stopping,
)
from .entropy import INCONCLUSIVE, INVERTIBLE, NON_INVERTIBLE, ROUNDOFF, certify, training_seed
from .girsanov import density_identity_residual
from .grid import InvalidArgument, TimeGrid, sample_paths
from .innovation import (
    FilterInverseDrift,
    brownianity_report,
    innovation_path,
    make_filter,
    measure_preservation_test,
)
from .solver import (
    INVERSE_RESIDUAL_C,
    INVERSE_RESIDUAL_EXPONENT,
    alpha_identity_residual,
    apply_shift,
    inverse_residuals,
    picard_inverse,
    residual_verdict,
    solve_inverse_sde,
    stopped_inverse,
)

log = logging.getLogger("wienershift")

SCHEMA_VERSION = 1
SUBCOMMANDS = ("sample", "invert", "entropy", "filter", "stopped", "preserve", "certify-all")


class ConfigError(Exception):
    pass


@dataclass
class ExperimentConfig:
    drift: str = "zero"
    steps: int = 256
    paths: int = 1000
    seed: int = 0
    filter: str = "auto"
    tau: str = ""
    inverse: str = ""
    out: str = "."
    workers: int = 1
    allowance: str = "default"
    export_paths: int = 10

    def echo(self):
        """Fields that determine the results; ``out`` and ``workers`` do not."""
        return {k: v for k, v in dataclasses.asdict(self).items() if k not in _EXECUTION_KEYS}

    def line(self):
        return " ".join(f"{k}={v}" for k, v in self.echo().items())


_EXECUTION_KEYS = ("out", "workers")
_INT_KEYS = {"steps", "paths", "seed", "workers", "export_paths"}


def read_config_file(path):
    """Flat ``key=value`` lines; ``#`` starts a comment."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    for n, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{path}:{n}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        out[key] = value
    return out


def build_config(file_values, overrides):
    fields = {f.name for f in dataclasses.fields(ExperimentConfig)}
    merged = {}
    for key, value in list(file_values.items()) + [(k, v) for k, v in overrides.items() if v is not None]:
        if key not in fields:
            raise ConfigError(f"unknown config key {key!r}")
        merged[key] = value
    for key in _INT_KEYS & merged.keys():
        try:
            merged[key] = int(merged[key])
        except (TypeError, ValueError):
            raise ConfigError(f"{key} must be an integer, got {merged[key]!r}") from None
    cfg = ExperimentConfig(**merged)
    if cfg.steps < 1 or cfg.steps & (cfg.steps - 1):
        raise ConfigError(f"steps must be a power of two, got {cfg.steps}")
    if cfg.paths < 1:
        raise ConfigError("paths must be positive")
    if cfg.filter not in ("auto", "gaussian", "regression", "analytic"):
        raise ConfigError(f"unknown filter {cfg.filter!r}")
    return cfg


def resolve_filter(cfg, u):
    if cfg.filter != "auto":
        return cfg.filter
    if isinstance(u, LinearDrift):
        return "gaussian"
    if isinstance(u, (ZeroDrift, DeterministicDrift)):
        return "analytic"
    return "regression"


def _allowance(cfg):
    if cfg.allowance == "default":
        return None
    try:
        return float(cfg.allowance)
    except ValueError:
        raise ConfigError(f"allowance must be a number or 'default', got {cfg.allowance!r}") from None


# --- output ----------------------------------------------------------------


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        x = float(obj)
        return x if np.isfinite(x) else repr(x)
    return obj


def write_summary(cfg, command, body):
    doc = {"schema_version": SCHEMA_VERSION, "command": command, "version": __version__, "config": cfg.echo()}
    doc.update(body)
    path = os.path.join(cfg.out, "summary.json")
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(_clean(doc), fh, indent=2, ensure_ascii=False)
        fh.write("\n")
    return path


def write_csv(cfg, name, header, rows):
    path = os.path.join(cfg.out, name)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# {cfg.line()}\n")
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([repr(float(x)) if isinstance(x, (float, np.floating)) else x for x in row])
    return path


# --- subcommands -----------------------------------------------------------


def _setup(cfg):
    grid = TimeGrid(cfg.steps)
    try:
        u = parse_drift(cfg.drift)
    except InvalidArgument as exc:
        raise ConfigError(str(exc)) from None
    batch = sample_paths(grid, cfg.paths, cfg.seed, workers=cfg.workers)
    return grid, u, batch


def _inverse_rule(cfg, u):
    if cfg.inverse:
        try:
            return parse_drift(cfg.inverse), cfg.inverse
        except InvalidArgument as exc:
            raise ConfigError(str(exc)) from None
    return (lambda path: solve_inverse_sde(u, path)), "euler"


def run_sample(cfg):
    grid, _, batch = _setup(cfg)
    w = batch.values
    rep = brownianity_report(batch.stack) if cfg.paths > 1 else None
    write_csv(
        cfg,
        "paths.csv",
        ["path_index", "w_end", "max_abs"],
        ((j, w[j, -1], np.max(np.abs(w[j]))) for j in range(cfg.paths)),
    )
    return {"n_steps": grid.n_steps, "dt": grid.dt, "w_end_mean": float(w[:, -1].mean()),
            "w_end_var": float(w[:, -1].var(ddof=1)) if cfg.paths > 1 else 0.0,
            "increments": rep}


def run_invert(cfg):
    grid, u, batch = _setup(cfg)
    rule, name = _inverse_rule(cfg, u)
    res = inverse_residuals(u, rule, batch)
    euler = solve_inverse_sde(u, batch.stack)
    picard = picard_inverse(u, batch.stack)
    write_csv(
        cfg,
        "residuals.csv",
        ["path_index", "left_residual", "right_residual"],
        ((j, res.left_paths[j], res.right_paths[j]) for j in range(cfg.paths)),
    )
    worst = max(res.left, res.right)
    return {
        "inverse": name,
        "left": res.left,
        "right": res.right,
        "mean_left": float(res.left_paths.mean()),
        "mean_right": float(res.right_paths.mean()),
        "threshold": {"C": INVERSE_RESIDUAL_C, "exponent": INVERSE_RESIDUAL_EXPONENT,
                      "value": INVERSE_RESIDUAL_C * grid.dt**INVERSE_RESIDUAL_EXPONENT},
        "residual_verdict": INVERTIBLE if residual_verdict(worst, grid.dt) else NON_INVERTIBLE,
        "picard": {"converged": picard.converged, "iterations": picard.iterations,
                   "max_diff_from_euler": float(np.max(np.abs(picard.output.values - euler.output.values)))},
    }


def run_entropy(cfg):
    grid, u, batch = _setup(cfg)
    method = resolve_filter(cfg, u)
    v = _inverse_rule(cfg, u)[0] if cfg.inverse else None
    rep = certify(u, method, batch, allowance=_allowance(cfg), v=v)
    write_csv(
        cfg,
        "contributions.csv",
        ["path_index", "energy", "entropy", "gap"],
        ((j, rep.energy_paths[j], rep.entropy_paths[j], rep.energy_paths[j] - rep.entropy_paths[j])
         for j in range(cfg.paths)),
    )
    body = rep.to_json()
    if method == "regression":
        body["training_seed"] = training_seed(cfg.seed)
    return body


def _filtered(cfg, u, batch, method):
    train = sample_paths(batch.grid, cfg.paths, training_seed(cfg.seed), workers=cfg.workers) \
        if method == "regression" else None
    filt = make_filter(u, method, train=train)
    observed = apply_shift(u, batch.stack).output
    return observed, filt(observed)


def run_filter(cfg):
    grid, u, batch = _setup(cfg)
    method = resolve_filter(cfg, u)
    observed, filtered = _filtered(cfg, u, batch, method)
    z = innovation_path(observed, filtered)
    m = min(cfg.export_paths, cfg.paths)
    t = grid.times[:-1]
    vals = np.atleast_2d(filtered.values)
    write_csv(
        cfg,
        "filtered.csv",
        ["path_index", "t", "filtered_value"],
        ((j, t[i], vals[j, i]) for j in range(m) for i in range(grid.n_steps)),
    )
    truth = drift_path(u, batch.stack).values
    return {
        "method": method,
        "exported_paths": m,
        "max_abs_filter_error": float(np.max(np.abs(vals - truth))),
        "innovation_minus_input_sup": float(np.max(np.abs(z.values - batch.values))),
        "innovation": brownianity_report(z) if cfg.paths > 1 else None,
    }


def run_stopped(cfg):
    grid, u, batch = _setup(cfg)
    if not cfg.tau:
        raise ConfigError("stopped needs --tau")
    try:
        tau = parse_stopping(cfg.tau)
    except InvalidArgument as exc:
        raise ConfigError(str(exc)) from None
    stopped = StoppedDrift(u, tau)
    s_solver = lambda path: stopped_inverse(u, tau, path)  # noqa: E731
    res = inverse_residuals(stopped, s_solver, batch)
    plain = inverse_residuals(u, None, batch)
    s = stopped_inverse(u, tau, batch.stack)
    body = {
        "tau": tau.label,
        "left": res.left,
        "right": res.right,
        "unstopped_left": plain.left,
        "unstopped_right": plain.right,
        "mean_stop_time": float(np.mean(s.stop_index) * grid.dt),
    }
    if cfg.inverse:
        v = _inverse_rule(cfg, u)[0]
        body["alpha_identity_residual"] = float(np.max(alpha_identity_residual(u, v, tau, batch.stack)))
    write_csv(
        cfg,
        "residuals.csv",
        ["path_index", "stop_index", "left_residual", "right_residual"],
        ((j, int(s.stop_index[j]), res.left_paths[j], res.right_paths[j]) for j in range(cfg.paths)),
    )
    return body


def run_preserve(cfg):
    grid, u, batch = _setup(cfg)
    method = resolve_filter(cfg, u)
    observed, filtered = _filtered(cfg, u, batch, method)
    a = innovation_path(observed, filtered)
    rep = measure_preservation_test(a)
    write_csv(
        cfg,
        "marginals.csv",
        ["t", "ks_pvalue"],
        zip(rep["times"], rep["marginal_pvalues"]),
    )
    return {"method": method, "map": "V_hat o U (innovation)", "label": "experiment", **rep}


def _item2_4(cfg, u, method, grid):
    rows = {}
    for n in (grid.n_steps // 4, grid.n_steps):
        g = TimeGrid(n)
        b = sample_paths(g, cfg.paths, cfg.seed, workers=cfg.workers)
        if cfg.inverse:
            v = parse_drift(cfg.inverse)
        else:
            train = sample_paths(g, cfg.paths, training_seed(cfg.seed), workers=cfg.workers) \
                if method == "regression" else None
            v = FilterInverseDrift(make_filter(u, method, train=train))
        res = inverse_residuals(u, v, b)
        dens = np.abs(np.atleast_1d(density_identity_residual(u, v, b.stack)))
        rows[n] = (max(res.left, res.right), float(dens.mean()))
    return rows


def _trend(coarse, fine, dt):
    if fine <= ROUNDOFF and coarse <= ROUNDOFF:
        return "exact", INVERTIBLE
    decaying = fine <= coarse * 4.0**-0.25
    if decaying and residual_verdict(fine, dt):
        return "decaying", INVERTIBLE
    return "not decaying", NON_INVERTIBLE


def run_certify_all(cfg):
    grid, u, batch = _setup(cfg)
    if grid.n_steps < 4:
        raise ConfigError("certify-all needs at least 4 steps")
    method = resolve_filter(cfg, u)
    rep = certify(u, method, batch, allowance=_allowance(cfg))
    del batch
    levels = _item2_4(cfg, u, method, grid)
    (nc, (r2c, r4c)), (nf, (r2f, r4f)) = sorted(levels.items())
    t2, v2 = _trend(r2c, r2f, grid.dt)
    t4, v4 = _trend(r4c, r4f, grid.dt)
    verdicts = [v2, rep.verdict, v4]
    if rep.verdict == INCONCLUSIVE:
        combined = INCONCLUSIVE
    else:
        combined = verdicts[0] if len(set(verdicts)) == 1 else "disagree"
    table = [
        {"item": "2", "criterion": "inverse residuals under refinement",
         "values": {str(nc): r2c, str(nf): r2f}, "trend": t2, "verdict": v2},
        {"item": "3", "criterion": "energy = entropy",
         "values": {"energy": rep.energy.mean, "entropy": rep.entropy.mean, "gap": rep.gap.mean,
                    "gap_half_width": rep.gap.half_width, "allowance": rep.allowance},
         "verdict": rep.verdict},
        {"item": "4", "criterion": "density identity residual (mean |.|)",
         "values": {str(nc): r4c, str(nf): r4f}, "trend": t4, "verdict": v4},
    ]
    body = {"filter": method,
            "inverse": cfg.inverse or f"filter-implied ({method})",
            "table": table, "combined_verdict": combined, "gap_report": rep.to_json()}
    if isinstance(u, TsirelsonDrift):
        body["heuristic_gap"] = u.active_length() / 24.0
    write_csv(
        cfg,
        "certificate.csv",
        ["item", "verdict"],
        ((row["item"], row["verdict"]) for row in table),
    )
    print_table(table, combined)
    return body


def print_table(table, combined, stream=None):
    stream = stream or sys.stdout
    stream.write(f"{'item':<5} {'criterion':<40} {'verdict':<22}\n")
    for row in table:
        stream.write(f"{row['item']:<5} {row['criterion']:<40} {row['verdict']:<22}\n")
    stream.write(f"combined: {combined}\n")


RUNNERS = {
    "sample": run_sample,
    "invert": run_invert,
    "entropy": run_entropy,
    "filter": run_filter,
    "stopped": run_stopped,
    "preserve": run_preserve,
    "certify-all": run_certify_all,
}


def make_parser():
    p = argparse.ArgumentParser(prog="wienershift", description=__doc__.splitlines()[0])
    p.add_argument("command", choices=SUBCOMMANDS)
    p.add_argument("--config", help="key=value config file")
    p.add_argument("--seed", type=int)
    p.add_argument("--steps", type=int)
    p.add_argument("--paths", type=int)
    p.add_argument("--drift")
    p.add_argument("--tau")
    p.add_argument("--inverse", help="drift spec of an explicit inverse candidate")
    p.add_argument("--filter", choices=("auto", "gaussian", "regression", "analytic"))
    p.add_argument("--allowance")
    p.add_argument("--workers", type=int)
    p.add_argument("--export-paths", dest="export_paths", type=int)
    p.add_argument("--out")
    return p


def run(argv=None):
    args = make_parser().parse_args(argv)
    overrides = {k: v for k, v in vars(args).items() if k not in ("command", "config")}
    try:
        file_values = read_config_file(args.config) if args.config else {}
        cfg = build_config(file_values, overrides)
        os.makedirs(cfg.out, exist_ok=True)
        if not os.access(cfg.out, os.W_OK):
            raise ConfigError(f"output directory {cfg.out} is not writable")
        handler = logging.FileHandler(os.path.join(cfg.out, "run.log"), mode="w", encoding="utf-8")
    except (ConfigError, OSError) as exc:
        print(f"wienershift: error: {exc}", file=sys.stderr)
        return 2
    handler.setFormatter(logging.Formatter("%(asctime)s %(levelname)s %(message)s"))
    log.addHandler(handler)
    log.setLevel(logging.INFO)
    try:
        start = time.time()
        log.info("start %s %s out=%s workers=%d", args.command, cfg.line(), cfg.out, cfg.workers)
        body = RUNNERS[args.command](cfg)
        write_summary(cfg, args.command, body)
        log.info("done in %.3fs", time.time() - start)
    except (ConfigError, InvalidArgument) as exc:
        print(f"wienershift: error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"wienershift: error: {exc}", file=sys.stderr)
        return 2
    finally:
        log.removeHandler(handler)
        handler.close()
    return 0


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
