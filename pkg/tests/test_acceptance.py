"""Acceptance criteria 1-8, one PASS/FAIL line per criterion.

Run ``pytest tests/test_acceptance.py -v`` (add ``-s`` to see the lines when
output capture is on; they are also printed through the terminal writer).
Tolerances are pinned below and never loosened to make a run pass.
"""
import json
import time

import numpy as np
import pytest

from wienershift.cli import run
from wienershift.drift import (
    AnticipatingDrift,
    StoppedDrift,
    causality_check,
    constant_time,
    deterministic_drift,
    first_hitting,
    linear_drift,
    linear_inverse_drift,
    stopped_drift,
    stopping_causality_check,
    tsirelson_drift,
    zero_drift,
)
from wienershift.entropy import (
    INVERTIBLE,
    NON_INVERTIBLE,
    REGRESSION_ALLOWANCE,
    certify,
    energy,
    entropy_via_filter,
    entropy_via_inverse,
)
from wienershift.girsanov import density_identity_residual, novikov_check
from wienershift.grid import TimeGrid, sample_paths
from wienershift.innovation import (
    analytic_filter,
    brownianity_report,
    gaussian_filter,
    innovation_path,
)
from wienershift.solver import (
    alpha_identity_residual,
    apply_shift,
    empirical_order,
    inverse_residuals,
    stopped_candidate_inverse,
    stopped_inverse,
)

EXACT_TOL = 1e-12
ORDER_RANGE = (0.4, 1.1)
STOP_FACTOR = 2.0
# two numbers that are both round-off cannot be compared by ratio
ROUNDOFF_FLOOR = 1e-12
RUNTIME = {1: 1.0, 2: 120.0, 3: 600.0, 4: 120.0, 6: 10.0}


@pytest.fixture
def say(request):
    writer = request.config.pluginmanager.get_plugin("terminalreporter")

    def emit(criterion, ok, detail):
        line = f"[criterion {criterion}] {'PASS' if ok else 'FAIL'}: {detail}"
        if writer is not None:
            writer.write_line(line)
        else:
            print(line)

    def info(criterion, detail):
        line = f"[criterion {criterion}] INFO: {detail}"
        if writer is not None:
            writer.write_line(line)
        else:
            print(line)

    emit.info = info
    return emit


def test_criterion_1_deterministic_shift_exact(say):
    start = time.perf_counter()
    batch = sample_paths(TimeGrid(256), 10_000, 1)
    u = deterministic_drift(1.0)
    v = u.negated()
    res_euler = inverse_residuals(u, batch=batch)
    res_v = inverse_residuals(u, v, batch)
    en = energy(u, batch)
    observed = apply_shift(u, batch.stack).output
    ent_f = entropy_via_filter(analytic_filter(u, observed))
    ent_i = entropy_via_inverse(u, v, batch)
    dens = float(np.max(np.abs(density_identity_residual(u, v, batch.stack))))
    elapsed = time.perf_counter() - start
    checks = {
        "residuals": max(res_euler.left, res_euler.right, res_v.left, res_v.right) <= EXACT_TOL,
        "energy": abs(en.mean - 0.5) <= EXACT_TOL and en.half_width == 0.0,
        "entropy_filter": abs(ent_f.mean - 0.5) <= EXACT_TOL and ent_f.half_width == 0.0,
        # log rho(-delta v)(U w) = w(1) + 1/2: mean 0.5, CLT width only
        "entropy_inverse": ent_i.contains(0.5) and ent_i.trusted,
        "density_identity": dens <= EXACT_TOL,
        "runtime": elapsed < RUNTIME[1],
    }
    ok = all(checks.values())
    say(1, ok, f"residuals=({res_v.left:.1e},{res_v.right:.1e}) energy={en.mean} "
               f"entropy_filter={ent_f.mean} entropy_inverse={ent_i.mean:.4f}±{ent_i.half_width:.4f} "
               f"density={dens:.1e} time={elapsed:.2f}s failed={[k for k, c in checks.items() if not c]}")
    assert ok


def test_criterion_2_linear_invertibility(say):
    start = time.perf_counter()
    ns = [64, 256, 1024]
    fine = sample_paths(TimeGrid(1024), 10_000, 2)
    u = linear_drift(1.0)
    v = linear_inverse_drift(1.0, kernel="exp")
    left, right, dens, cis, brown = [], [], [], {}, {}
    for n in ns:
        batch = fine.coarsen(1024 // n)
        r = inverse_residuals(u, v, batch)
        left.append(r.left)
        right.append(r.right)
        dens.append(float(np.mean(np.abs(density_identity_residual(u, v, batch.stack)))))
        observed = apply_shift(u, batch.stack).output
        filt = gaussian_filter(1.0, observed)
        cis[n] = (energy(u, batch), entropy_via_filter(filt, seed=batch.seed), entropy_via_inverse(u, v, batch))
        brown[n] = brownianity_report(innovation_path(observed, filt))["passed"]
        del observed, filt
    order_l, order_r = empirical_order(ns, left), empirical_order(ns, right)
    elapsed = time.perf_counter() - start
    checks = {
        "a_decay": left[0] > left[1] > left[2] and right[0] > right[1] > right[2],
        "a_order": all(ORDER_RANGE[0] <= o <= ORDER_RANGE[1] for o in (order_l, order_r)),
        "b_cis": all(e.contains(0.25) for trio in cis.values() for e in trio),
        "c_density_decay": dens[0] > dens[1] > dens[2],
        "d_brownian": all(brown.values()),
        "runtime": elapsed < RUNTIME[2],
    }
    ok = all(checks.values())
    means = {n: tuple(round(e.mean, 4) for e in trio) for n, trio in cis.items()}
    say(2, ok, f"orders=({order_l:.3f},{order_r:.3f}) left={[f'{x:.2e}' for x in left]} "
               f"density={[f'{x:.2e}' for x in dens]} (energy,filter,inverse)={means} "
               f"brownian={brown} time={elapsed:.1f}s failed={[k for k, c in checks.items() if not c]}")
    assert ok


@pytest.mark.slow
def test_criterion_3_tsirelson_non_invertible(say):
    start = time.perf_counter()
    k, n = 6, 256
    u = tsirelson_drift(k)
    batch = sample_paths(TimeGrid(n), 100_000, 3)
    rep = certify(u, "regression", batch)
    elapsed = time.perf_counter() - start
    active = 1 - 2.0**-k
    expected_energy = active / 6
    margin = rep.gap.mean - rep.gap.half_width - rep.allowance
    checks = {
        "energy_ci": rep.energy.contains(expected_energy),
        "entropy_below": rep.entropy.mean < rep.energy.mean,
        "gap_margin": margin > 0,
        "verdict": rep.verdict == NON_INVERTIBLE,
        "allowance_default": rep.allowance == pytest.approx(REGRESSION_ALLOWANCE * rep.entropy.mean),
        "runtime": elapsed < RUNTIME[3],
    }
    ok = all(checks.values())
    say(3, ok, f"energy={rep.energy.mean:.5f}±{rep.energy.half_width:.5f} (expected {expected_energy:.5f}) "
               f"entropy={rep.entropy.mean:.5f}±{rep.entropy.half_width:.5f} "
               f"gap={rep.gap.mean:.5f}±{rep.gap.half_width:.5f} allowance={rep.allowance:.5f} "
               f"margin={margin:.5f} verdict={rep.verdict} time={elapsed:.1f}s "
               f"failed={[k for k, c in checks.items() if not c]}")
    cells = np.asarray(rep.filtered.values).mean(axis=0)[int(n * 2.0**-k):]
    say.info(3, f"heuristic gap active/24={active / 24:.5f} (not asserted); "
                f"heuristic entropy active/8={active / 8:.5f}; "
                f"filtered mean on active cells in [{cells.min():.3f}, {cells.max():.3f}]")
    assert ok


def test_criterion_4_stopping_persistence(say):
    start = time.perf_counter()
    n = 1024
    batch = sample_paths(TimeGrid(n), 10_000, 4)
    tau = first_hitting(0.5)
    pairs = {
        "deterministic": (deterministic_drift(1.0), deterministic_drift(-1.0)),
        "linear": (linear_drift(1.0), linear_inverse_drift(1.0, kernel="exp")),
    }
    lines, ok = [], True
    for name, (u, v) in pairs.items():
        unstopped = inverse_residuals(u, v, batch)
        tol = STOP_FACTOR * max(unstopped.left, unstopped.right, ROUNDOFF_FLOOR)
        s_solver = lambda path, u=u: stopped_inverse(u, tau, path)  # noqa: E731
        stopped = inverse_residuals(StoppedDrift(u, tau), s_solver, batch)
        alpha = float(np.max(alpha_identity_residual(u, v, tau, batch.stack)))
        good = max(stopped.left, stopped.right) <= tol and alpha <= tol
        ok = ok and good
        lines.append(f"{name}: unstopped=({unstopped.left:.2e},{unstopped.right:.2e}) "
                     f"stopped=({stopped.left:.2e},{stopped.right:.2e}) alpha={alpha:.2e} tol={tol:.2e}")
        # the same construction from the explicit candidate drift instead of the Euler solve
        c_solver = lambda path, v=v: stopped_candidate_inverse(v, tau, path)  # noqa: E731
        cand = inverse_residuals(StoppedDrift(u, tau), c_solver, batch)
        say.info(4, f"{name} candidate S from v: left max={cand.left:.2e} "
                    f"(median {np.median(cand.left_paths):.2e}) right max={cand.right:.2e}")
    elapsed = time.perf_counter() - start
    ok = ok and elapsed < RUNTIME[4]
    say(4, ok, "; ".join(lines) + f" time={elapsed:.1f}s")
    assert ok


SHIPPED = [
    zero_drift(),
    deterministic_drift(1.0),
    deterministic_drift(lambda t: np.sin(6 * t)),
    linear_drift(1.0),
    linear_inverse_drift(1.0),
    linear_inverse_drift(1.0, kernel="exp"),
    tsirelson_drift(4),
    stopped_drift(linear_drift(1.0), first_hitting(0.5)),
    stopped_drift(tsirelson_drift(4), constant_time(0.5)),
]

FILTERS = {
    "ZeroDrift": ("analytic", "gaussian", "regression"),
    "DeterministicDrift": ("analytic", "regression"),
    "LinearDrift": ("gaussian", "regression"),
}


def test_criterion_5_jensen_contraction(say):
    failures, runs = [], 0
    for seed in (0, 1, 2):
        batch = sample_paths(TimeGrid(64), 2_000, seed)
        for u in SHIPPED:
            for method in FILTERS.get(type(u).__name__, ("regression",)):
                rep = certify(u, method, batch)
                runs += 1
                slack = rep.energy.half_width + rep.entropy.half_width + 1e-12
                if rep.entropy.mean > rep.energy.mean + slack:
                    failures.append(f"{u.label}/{method}/seed{seed}")
    ok = not failures
    say(5, ok, f"{runs} drift x filter x seed runs, violations={failures}")
    assert ok


def test_criterion_6_causality(say):
    start = time.perf_counter()
    batch = sample_paths(TimeGrid(64), 100, 6)
    results = {u.label: causality_check(u, batch.stack, trials=3, seed=0) for u in SHIPPED}
    taus = [constant_time(0.0), constant_time(0.3), constant_time(1.0), first_hitting(0.0),
            first_hitting(0.5), first_hitting(10.0)]
    stops = {t.label: stopping_causality_check(t, batch.stack, trials=3, seed=0) for t in taus}
    planted = causality_check(AnticipatingDrift(), batch.stack, trials=3, seed=0)
    elapsed = time.perf_counter() - start
    ok = all(results.values()) and all(stops.values()) and not planted and elapsed < RUNTIME[6]
    say(6, ok, f"drifts={sum(results.values())}/{len(results)} stopping times={sum(stops.values())}/{len(stops)} "
               f"anticipating detected={not planted} time={elapsed:.2f}s")
    assert ok


def test_criterion_7_novikov(say):
    drifts = [zero_drift(), deterministic_drift(1.0), linear_drift(1.0), tsirelson_drift(6)]
    batch = sample_paths(TimeGrid(256), 10_000, 7)
    ests = {u.label: novikov_check(u, batch) for u in drifts}
    ok = all(e.contains(1.0) for e in ests.values())
    say(7, ok, " ".join(f"{k}={e.mean:.4f}±{e.half_width:.4f}" for k, e in ests.items()))
    assert ok


DETERMINISM = [
    ("sample", ["--drift", "zero"]),
    ("invert", ["--drift", "linear theta=1", "--inverse", "linear-inverse theta=1 kernel=exp"]),
    ("entropy", ["--drift", "tsirelson K=4"]),
    ("filter", ["--drift", "tsirelson K=4"]),
    ("stopped", ["--drift", "linear theta=1", "--tau", "hit b=0.5", "--inverse", "linear-inverse theta=1"]),
    ("preserve", ["--drift", "linear theta=1"]),
    ("certify-all", ["--drift", "tsirelson K=4"]),
]


def test_criterion_8_determinism(say, tmp_path, capsys):
    base = ["--steps", "64", "--paths", "1000", "--seed", "8"]
    differing = []
    for command, extra in DETERMINISM:
        blobs = []
        for workers in ("1", "3", "1"):
            out = tmp_path / f"{command}-{workers}-{len(blobs)}"
            assert run([command, *base, *extra, "--workers", workers, "--out", str(out)]) == 0
            blobs.append((out / "summary.json").read_bytes())
        json.loads(blobs[0])
        if len(set(blobs)) != 1:
            differing.append(command)
    capsys.readouterr()
    ok = not differing
    say(8, ok, f"{len(DETERMINISM)} subcommands x 3 runs (workers 1/3/1), differing={differing}")
    assert ok
