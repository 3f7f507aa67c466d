"""Statistical pipeline for per-seed noise response.

Per seed: the best noisy test R^2 over the nonzero noise levels is compared to
the zero-noise baseline; the relative change in percent classifies the seed as
beneficial (> +2%), detrimental (< -2%), or marginal. Cohort statistics cover
the category split, the optimal-noise histogram, baseline-vs-change
correlation, a Welch t-test between category baselines, a within-seed
permutation test on the response spread, dose-response curves, and a
baseline-threshold analysis.

The t-distribution tail needed for p-values is computed from the regularized
incomplete beta function, so results are bit-reproducible with no statistics
dependency.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from itertools import permutations as _iter_permutations
from itertools import product as _iter_product

import numpy as np

BENEFIT_THRESHOLD_PERCENT = 2.0


class Category(str, Enum):
    BENEFICIAL = "beneficial"
    DETRIMENTAL = "detrimental"
    MARGINAL = "marginal"


class AnalysisError(ValueError):
    """Raised for malformed analysis inputs."""


# --- scalar metrics ----------------------------------------------------------

def r2_score(y_true, y_pred) -> float:
    """Coefficient of determination, 1 - SS_res / SS_tot."""
    y_true = np.asarray(y_true, dtype=np.float64)
    y_pred = np.asarray(y_pred, dtype=np.float64)
    if y_true.shape != y_pred.shape or y_true.ndim != 1 or y_true.size < 2:
        raise AnalysisError("r2_score needs two equal-length vectors of size >= 2")
    ss_tot = float(np.sum((y_true - y_true.mean()) ** 2))
    if ss_tot == 0.0:
        raise AnalysisError("r2_score undefined for constant y_true")
    ss_res = float(np.sum((y_true - y_pred) ** 2))
    return 1.0 - ss_res / ss_tot


def delta_r2(noisy: float, baseline: float) -> float:
    """Relative performance change in percent: (noisy - baseline) / baseline * 100."""
    if not baseline > 0.0:
        raise AnalysisError(f"baseline R^2 must be positive, got {baseline}")
    return (noisy - baseline) / baseline * 100.0


def classify(delta_r2_percent: float) -> Category:
    """Strict +-2% thresholds; the boundary values themselves are marginal."""
    if not math.isfinite(delta_r2_percent):
        raise AnalysisError(f"delta must be finite, got {delta_r2_percent!r}")
    if delta_r2_percent > BENEFIT_THRESHOLD_PERCENT:
        return Category.BENEFICIAL
    if delta_r2_percent < -BENEFIT_THRESHOLD_PERCENT:
        return Category.DETRIMENTAL
    return Category.MARGINAL


# --- per-seed summary --------------------------------------------------------

@dataclass(frozen=True)
class ResponseSummary:
    init_seed: int
    baseline_r2: float
    best_epsilon: float
    best_noisy_r2: float
    delta_r2_percent: float
    category: Category


def summarize_seed(records) -> ResponseSummary:
    """Collapse one seed's runs (one per noise level, zero included) to a summary.

    best_noisy_r2 and the reported change always come from the nonzero noise
    levels, so a seed whose baseline beats every noisy run keeps best_epsilon 0
    while still reporting its (negative) best-noisy change. Ties among noisy
    runs resolve to the smallest epsilon.
    """
    records = list(records)
    if len(records) < 2:
        raise AnalysisError("need runs for at least two noise levels")
    seeds = {r.init_seed for r in records}
    if len(seeds) != 1:
        raise AnalysisError(f"records mix init seeds {sorted(seeds)}")
    by_eps = {}
    for r in records:
        if r.epsilon in by_eps:
            raise AnalysisError(f"duplicate records for epsilon {r.epsilon}")
        by_eps[r.epsilon] = r
    if 0.0 not in by_eps:
        raise AnalysisError("missing the zero-noise baseline run")
    baseline = by_eps[0.0].r2_test
    noisy = sorted((eps, r.r2_test) for eps, r in by_eps.items() if eps != 0.0)
    best_eps, best_r2 = max(noisy, key=lambda item: item[1])
    for eps, r2 in noisy:  # smallest epsilon wins ties
        if r2 == best_r2:
            best_eps, best_r2 = eps, r2
            break
    change = delta_r2(best_r2, baseline)
    reported_eps = 0.0 if baseline > best_r2 else best_eps
    return ResponseSummary(
        init_seed=records[0].init_seed,
        baseline_r2=baseline,
        best_epsilon=reported_eps,
        best_noisy_r2=best_r2,
        delta_r2_percent=change,
        category=classify(change),
    )


# --- t-distribution machinery ------------------------------------------------

def _betacf(a: float, b: float, x: float) -> float:
    # Continued fraction for the incomplete beta function (Lentz's method).
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, 300):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < 1e-14:
            return h
    return h


def betainc_regularized(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta function I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise AnalysisError(f"x must be in [0, 1], got {x}")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def t_sf_two_sided(t: float, df: float) -> float:
    """Two-sided tail probability of Student's t with df degrees of freedom."""
    if df <= 0:
        raise AnalysisError(f"degrees of freedom must be positive, got {df}")
    if t == 0.0:
        return 1.0
    x = df / (df + t * t)
    return betainc_regularized(0.5 * df, 0.5, x)


# --- correlation and group tests ----------------------------------------------

def pearson(x, y) -> tuple[float, float]:
    """Sample Pearson correlation and its two-sided t-distribution p-value."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1 or x.size < 3:
        raise AnalysisError("pearson needs two equal-length vectors of size >= 3")
    dx = x - x.mean()
    dy = y - y.mean()
    sx = float(np.sum(dx * dx))
    sy = float(np.sum(dy * dy))
    if sx == 0.0 or sy == 0.0:
        raise AnalysisError("pearson undefined for a constant input")
    r = float(np.sum(dx * dy)) / math.sqrt(sx * sy)
    r = max(-1.0, min(1.0, r))
    n = x.size
    if abs(r) == 1.0:
        return r, 0.0
    t = r * math.sqrt((n - 2) / (1.0 - r * r))
    return r, t_sf_two_sided(t, n - 2)


def welch_t_test(a, b) -> tuple[float, float]:
    """Welch's unequal-variance t statistic with Welch-Satterthwaite df; two-sided p."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.size < 2 or b.size < 2:
        raise AnalysisError("welch_t_test needs at least two samples per group")
    va = float(np.var(a, ddof=1)) / a.size
    vb = float(np.var(b, ddof=1)) / b.size
    diff = float(a.mean() - b.mean())
    if va + vb == 0.0:
        # Degenerate zero-variance groups: identical means -> no evidence.
        return (0.0, 1.0) if diff == 0.0 else (math.copysign(math.inf, diff), 0.0)
    t = diff / math.sqrt(va + vb)
    df = (va + vb) ** 2 / (va**2 / (a.size - 1) + vb**2 / (b.size - 1))
    return t, t_sf_two_sided(t, df)


# --- permutation test ----------------------------------------------------------

def _seed_delta(values: np.ndarray, zero_slot: int) -> float:
    baseline = values[zero_slot]
    best = max(v for k, v in enumerate(values) if k != zero_slot)
    return delta_r2(float(best), float(baseline))


def _spread(deltas) -> float:
    return max(deltas) - min(deltas)


def permutation_test(per_seed_r2: dict, n_perm: int = 1000, seed: int = 0,
                     exhaustive: bool | None = None) -> float:
    """Permutation test on the cross-seed spread of the noise response.

    The observed statistic is max - min of the per-seed best-noisy-vs-baseline
    changes. Null draws permute each seed's R^2 values across its noise slots
    (re-assigning which value counts as the baseline) and recompute the spread.
    Sampled p uses add-one smoothing; when the total number of within-seed
    assignments is small (or exhaustive=True) the null is enumerated exactly.
    """
    if len(per_seed_r2) < 2:
        raise AnalysisError("permutation test needs at least two seeds")
    if n_perm < 99:
        raise AnalysisError("n_perm must be >= 99")
    eps_grid = None
    table = []
    for s in sorted(per_seed_r2):
        eps_map = per_seed_r2[s]
        grid = tuple(sorted(eps_map))
        if 0.0 not in grid or len(grid) < 2:
            raise AnalysisError(f"seed {s} is missing the zero-noise entry")
        if eps_grid is None:
            eps_grid = grid
        elif grid != eps_grid:
            raise AnalysisError(f"seed {s} has a mismatched epsilon grid {grid}")
        table.append(np.array([eps_map[e] for e in grid], dtype=np.float64))
    zero_slot = eps_grid.index(0.0)
    m = len(eps_grid)
    observed = _spread([_seed_delta(row, zero_slot) for row in table])

    per_seed_perms = math.factorial(m)
    total = per_seed_perms ** len(table)
    if exhaustive is None:
        exhaustive = total <= n_perm
    if exhaustive:
        slot_orders = list(_iter_permutations(range(m)))
        deltas_by_seed = [
            [_seed_delta(row[list(order)], zero_slot) for order in slot_orders]
            for row in table
        ]
        count = 0
        for combo in _iter_product(*deltas_by_seed):
            if _spread(combo) >= observed:
                count += 1
        return count / total

    rng = np.random.default_rng(seed)
    hits = 0
    for _ in range(n_perm):
        deltas = []
        for row in table:
            order = rng.permutation(m)
            deltas.append(_seed_delta(row[order], zero_slot))
        if _spread(deltas) >= observed:
            hits += 1
    return (1 + hits) / (1 + n_perm)


# --- cohort aggregation ---------------------------------------------------------

def threshold_analysis(summaries, threshold: float) -> tuple[float | None, float | None]:
    """(P[beneficial | baseline < threshold], P[detrimental | baseline >= threshold]).

    An empty stratum yields None rather than a misleading zero.
    """
    summaries = list(summaries)
    if not summaries:
        raise AnalysisError("threshold_analysis needs at least one summary")
    below = [s for s in summaries if s.baseline_r2 < threshold]
    above = [s for s in summaries if s.baseline_r2 >= threshold]
    p_benefit = (
        sum(s.category is Category.BENEFICIAL for s in below) / len(below) if below else None
    )
    p_degrade = (
        sum(s.category is Category.DETRIMENTAL for s in above) / len(above) if above else None
    )
    return p_benefit, p_degrade


def dose_response(summaries, per_seed_r2: dict) -> dict:
    """Per-category mean change at each nonzero noise level.

    Categories with no members map to an empty curve.
    """
    by_seed = {s.init_seed: s for s in summaries}
    eps_grid = None
    for eps_map in per_seed_r2.values():
        grid = tuple(e for e in sorted(eps_map) if e != 0.0)
        if eps_grid is None:
            eps_grid = grid
        elif grid != eps_grid:
            raise AnalysisError("seeds disagree on the epsilon grid")
    curves: dict[Category, dict[float, float]] = {}
    for category in Category:
        members = [s for s in by_seed.values() if s.category is category]
        curve = {}
        for eps in eps_grid or ():
            values = [
                delta_r2(per_seed_r2[s.init_seed][eps], s.baseline_r2) for s in members
            ]
            if values:
                curve[eps] = float(np.mean(values))
        curves[category] = curve if members else {}
    return curves


@dataclass(frozen=True)
class CohortReport:
    summaries: list
    category_fractions: dict
    optimal_epsilon_histogram: dict
    pearson_r: float | None
    pearson_p: float | None
    welch_t: float | None
    welch_p: float | None
    permutation_p: float
    dose_response: dict
    threshold_value: float
    p_benefit_below: float | None
    p_degrade_above: float | None
    mean_delta_r2: float
    spread_points: float
    any_degradation_fraction: float


def build_cohort_report(per_seed_records: dict, threshold: float = 0.71,
                        n_perm: int = 1000, perm_seed: int = 0) -> CohortReport:
    """Full cohort statistics from {seed: [RunRecord per epsilon]}."""
    if not per_seed_records:
        raise AnalysisError("no seeds to analyze")
    summaries = []
    for seed, records in sorted(per_seed_records.items()):
        try:
            summaries.append(summarize_seed(records))
        except AnalysisError as exc:
            raise AnalysisError(f"seed {seed}: {exc}") from exc
    n = len(summaries)
    fractions = {
        category.value: sum(s.category is category for s in summaries) / n
        for category in Category
    }
    histogram: dict[float, float] = {}
    for s in summaries:
        histogram[s.best_epsilon] = histogram.get(s.best_epsilon, 0.0) + 1.0 / n
    per_seed_r2 = {
        seed: {r.epsilon: r.r2_test for r in records}
        for seed, records in per_seed_records.items()
    }
    baselines = [s.baseline_r2 for s in summaries]
    deltas = [s.delta_r2_percent for s in summaries]
    pearson_r = pearson_p = None
    if n >= 3 and len(set(baselines)) > 1 and len(set(deltas)) > 1:
        pearson_r, pearson_p = pearson(baselines, deltas)
    benefit_base = [s.baseline_r2 for s in summaries if s.category is Category.BENEFICIAL]
    detriment_base = [s.baseline_r2 for s in summaries if s.category is Category.DETRIMENTAL]
    welch_t = welch_p = None
    if len(benefit_base) >= 2 and len(detriment_base) >= 2:
        welch_t, welch_p = welch_t_test(benefit_base, detriment_base)
    permutation_p = permutation_test(per_seed_r2, n_perm=n_perm, seed=perm_seed)
    p_benefit, p_degrade = threshold_analysis(summaries, threshold)
    return CohortReport(
        summaries=summaries,
        category_fractions=fractions,
        optimal_epsilon_histogram=dict(sorted(histogram.items())),
        pearson_r=pearson_r,
        pearson_p=pearson_p,
        welch_t=welch_t,
        welch_p=welch_p,
        permutation_p=permutation_p,
        dose_response=dose_response(summaries, per_seed_r2),
        threshold_value=threshold,
        p_benefit_below=p_benefit,
        p_degrade_above=p_degrade,
        mean_delta_r2=float(np.mean(deltas)),
        spread_points=float(max(deltas) - min(deltas)),
        any_degradation_fraction=sum(d < 0.0 for d in deltas) / n,
    )
