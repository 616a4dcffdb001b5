"""Built-in verification suites.

Each suite re-derives a quantity along an independent path (dense grids,
finite differences, quadratic-time scans) and compares it against the
closed-form implementation over seeded random instances. The CLI surfaces
these as the `check` subcommand; the fault-injection hook exists so the
harness itself can be shown to catch a broken conjugate.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .cascade import select_threshold
from .data import WeightedDataset
from .learner import surrogate_gradient, surrogate_loss
from .significance import (
    AMS2,
    AMS3,
    U_MAX,
    ConfusionSummary,
    dual_risk,
    fenchel_young_gap,
    optimal_u,
    significance,
)

FY_TOLERANCE = 1e-9
DUALITY_RTOL = 1e-9
GRADIENT_RTOL = 1e-6
GRID_POINTS = 2_000_000


@dataclass(frozen=True)
class CheckResult:
    """Outcome of one verification suite."""

    name: str
    passed: bool
    instances: int
    worst: float
    detail: str = ""


def _spawn_seed(seed, index):
    return int(np.random.SeedSequence([seed, index]).generate_state(1)[0])


def perturbed_conjugate_measure(measure, offset=1e-3):
    """Copy of `measure` whose conjugate is shifted by a constant.

    Test hook: a wrong conjugate must be caught by the Fenchel-Young suite.
    """
    broken = measure.f_conjugate
    return replace(
        measure,
        f_conjugate=lambda u, _f=broken: _f(u) + offset,
        name=measure.name + "-faulted",
    )


def check_fenchel_young(seed=0, instances=1000, measures=(AMS2, AMS3)):
    """Conjugacy identity: the linearization gap vanishes at u = f'(c/a).

    Ranges keep both sides of the identity small enough that float
    cancellation stays well under the 1e-9 budget.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    detail = ""
    for measure in measures:
        a = rng.uniform(0.5, 1e4, instances)
        c = rng.uniform(1e-6, 1e3, instances)
        for i in range(instances):
            gap = float(abs(fenchel_young_gap(measure, a[i], c[i])))
            if gap > worst:
                worst = gap
                if gap > FY_TOLERANCE:
                    detail = (
                        f"measure={measure.name} a={float(a[i])!r} "
                        f"c={float(c[i])!r} gap={gap:.3e}"
                    )
    return CheckResult(
        name="fenchel-young",
        passed=bool(worst <= FY_TOLERANCE),
        instances=instances * len(measures),
        worst=worst,
        detail=detail,
    )


def check_duality(seed=0, instances=200, measures=(AMS2, AMS3)):
    """Risk at the closed-form optimum equals -significance^2/2.

    Draws keep s/b inside the open dual domain for every seed so the
    comparison never touches the clamp boundaries.
    """
    rng = np.random.default_rng(seed)
    worst = 0.0
    detail = ""
    count = 0
    for measure in measures:
        for _ in range(instances):
            ratio = float(10.0 ** rng.uniform(-4.0, 1.0))
            b_reg = float(rng.choice([0.0, 10.0]))
            background = float(10.0 ** rng.uniform(1.0, 6.0))
            s = ratio * (background + b_reg)
            p = s * (1.0 + rng.uniform(0.0, 1.0))
            summary = ConfusionSummary.from_counts(
                s=s, background=background, p=p, b_reg=b_reg
            )
            sig = significance(summary, measure)
            target = -0.5 * sig * sig
            risk = dual_risk(summary, optimal_u(summary, measure), measure)
            rel = abs(risk - target) / abs(target)
            count += 1
            if rel > worst:
                worst = rel
                if rel > DUALITY_RTOL:
                    detail = (
                        f"measure={measure.name} s={s!r} background={background!r} "
                        f"b_reg={b_reg!r} rel={rel:.3e}"
                    )
    return CheckResult(
        name="duality-identity",
        passed=bool(worst <= DUALITY_RTOL),
        instances=count,
        worst=worst,
        detail=detail,
    )


def check_grid_optimum(
    seed=0, instances=100, measures=(AMS2, AMS3), grid_points=GRID_POINTS
):
    """Closed-form optimal_u against argmin over a dense dual grid."""
    rng = np.random.default_rng(seed)
    grid = np.linspace(0.0, U_MAX, grid_points)
    step = U_MAX / (grid_points - 1)
    worst = 0.0
    detail = ""
    count = 0
    for measure in measures:
        for _ in range(instances):
            s = float(rng.uniform(1.0, 1e4))
            background = float(rng.uniform(10.0, 1e6))
            b_reg = float(rng.choice([0.0, 10.0]))
            p = s * (1.0 + rng.uniform(0.0, 1.0))
            summary = ConfusionSummary.from_counts(
                s=s, background=background, p=p, b_reg=b_reg
            )
            closed = optimal_u(summary, measure)
            gridded = float(grid[int(np.argmin(dual_risk(summary, grid, measure)))])
            diff = abs(closed - gridded)
            count += 1
            if diff > worst:
                worst = diff
                if diff > step * (1.0 + 1e-9) + 1e-12:
                    detail = (
                        f"measure={measure.name} s={s!r} background={background!r} "
                        f"b_reg={b_reg!r} closed={closed!r} grid={gridded!r}"
                    )
    return CheckResult(
        name="grid-optimum",
        passed=bool(worst <= step * (1.0 + 1e-9) + 1e-12),
        instances=count,
        worst=worst,
        detail=detail,
    )


def check_gradient(seed=0, instances=100, n_events=50):
    """Analytic surrogate gradient against central finite differences.

    Scores are kept in [-2, 2] so no gradient entry underflows; that keeps
    the finite-difference roundoff floor far below the relative tolerance.
    """
    rng = np.random.default_rng(seed)
    eps = 1e-5
    worst = 0.0
    detail = ""
    for k in range(instances):
        labels = rng.choice([-1.0, 1.0], n_events)
        costs = rng.uniform(0.1, 5.0, n_events)
        scores = rng.uniform(-2.0, 2.0, n_events)
        grad = surrogate_gradient(costs, labels, scores)
        fd = np.empty(n_events)
        for j in range(n_events):
            bumped = scores.copy()
            bumped[j] = scores[j] + eps
            hi = surrogate_loss(costs, labels, bumped)
            bumped[j] = scores[j] - eps
            lo = surrogate_loss(costs, labels, bumped)
            fd[j] = (hi - lo) / (2.0 * eps)
        rel = float(np.max(np.abs(fd - grad) / np.maximum(np.abs(grad), 1e-300)))
        if rel > worst:
            worst = rel
            if rel > GRADIENT_RTOL:
                detail = f"instance={k} rel={rel:.3e}"
    return CheckResult(
        name="gradient-fd",
        passed=bool(worst <= GRADIENT_RTOL),
        instances=instances,
        worst=worst,
        detail=detail,
    )


def _brute_force_threshold(scores, dataset, measure, b_reg):
    """Quadratic-time reference: recompute the summary at every cut."""
    sorted_desc = np.sort(scores)[::-1]
    candidates = [sorted_desc[0]]
    for k in range(1, scores.size):
        if sorted_desc[k - 1] > sorted_desc[k]:
            candidates.append(sorted_desc[k])
    candidates.append(-math.inf)
    best_sig = -1.0
    best_cut = None
    signal_mask = dataset.labels == 1
    for cut in candidates:
        selected = scores > cut
        s = float(dataset.weights[selected & signal_mask].sum())
        b = float(dataset.weights[selected & ~signal_mask].sum()) + b_reg
        if s == 0.0:
            sig = 0.0
        elif b <= 0.0:
            sig = math.inf
        else:
            sig = significance(
                ConfusionSummary.from_counts(s=s, background=b, p=s), measure
            )
        if sig > best_sig:
            best_sig = sig
            best_cut = cut
    return best_cut


def check_threshold_scan(seed=0, instances=50, n_events=1000):
    """Incremental threshold scan against the O(n^2) brute-force oracle."""
    rng = np.random.default_rng(seed)
    mismatches = 0
    detail = ""
    for k in range(instances):
        labels = rng.choice([-1, 1], n_events)
        if not (np.any(labels == 1) and np.any(labels == -1)):
            labels[0], labels[1] = 1, -1
        dataset = WeightedDataset(
            features=np.zeros((n_events, 1)),
            labels=labels,
            weights=rng.uniform(0.05, 2.0, n_events),
            event_ids=np.arange(n_events),
            column_names=("x0",),
        )
        scores = rng.standard_normal(n_events)
        measure = AMS2 if k % 2 == 0 else AMS3
        b_reg = 10.0 if k % 4 < 2 else 0.0
        fast = select_threshold(scores, dataset, measure, b_reg=b_reg)
        brute = _brute_force_threshold(scores, dataset, measure, b_reg)
        if fast != brute:
            mismatches += 1
            if not detail:
                detail = (
                    f"instance={k} measure={measure.name} b_reg={b_reg!r} "
                    f"fast={fast!r} brute={brute!r}"
                )
    return CheckResult(
        name="threshold-scan",
        passed=mismatches == 0,
        instances=instances,
        worst=float(mismatches),
        detail=detail,
    )


def run_all_checks(seed=0, instances=None, inject_fault=False):
    """Run every suite with seeds derived from one master seed.

    `instances` overrides the per-pair counts of the cheap suites; the grid
    and brute-force suites cap at their defaults to bound runtime. With
    `inject_fault` the Fenchel-Young suite runs against a measure whose
    conjugate is off by 1e-3 and must report failure.
    """
    fy_n = 1000 if instances is None else instances
    dual_n = 200 if instances is None else instances
    grad_n = 100 if instances is None else min(instances, 100)
    grid_n = 100 if instances is None else min(instances, 100)
    scan_n = 50 if instances is None else min(instances, 50)

    fy_measures = (AMS2, AMS3)
    if inject_fault:
        fy_measures = (perturbed_conjugate_measure(AMS2), AMS3)

    return [
        check_fenchel_young(_spawn_seed(seed, 1), fy_n, measures=fy_measures),
        check_grid_optimum(_spawn_seed(seed, 2), grid_n),
        check_duality(_spawn_seed(seed, 3), dual_n),
        check_gradient(_spawn_seed(seed, 4), grad_n),
        check_threshold_scan(_spawn_seed(seed, 5), scan_n),
    ]
