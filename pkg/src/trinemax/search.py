"""Outer minimax optimization over estimator parameters.

For the weighted mean estimator the objective is

    g(beta) = max over physical states of MSE(state; mean estimator, beta),

computed exactly by the risk module; the minimax beta minimizes g.  The
corrected estimator is optimized the same way over its admixture fraction
lambda, restricted to the physical window [lambda_min(N), 1].

The minimum of g is flat (moving ~0.2 in beta changes g by ~1%), so the
refinement stops on the relative change of g, not on the width of the
beta bracket; reporting beta to more digits than the data justify would
be noise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

from .estimators import EstimatorSpec, build_estimate_table, lambda_min
from .moments import MomentEngine
from .risk import DEFAULT_GRID, StateGrid, mse_profile

INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0

COARSE_STEP = 0.25
FLATNESS_FACTOR = 1.01


class RangeError(ValueError):
    """The scan minimum sits on the upper range edge; enlarge the range."""


@dataclass
class MinimaxResult:
    total: int
    param_name: str
    param_opt: float
    minimax_mse: float
    min_mse_at_opt: float
    samples: list = field(default_factory=list)  # (param, max MSE) scan points
    flat_low: float = math.nan
    flat_high: float = math.nan
    evaluations: int = 0
    converged: bool = True


def _flat_interval(samples, opt, g_opt):
    """Parameter interval whose max-MSE stays within 1% of the minimum."""
    threshold = FLATNESS_FACTOR * g_opt
    xs = [p for p, _ in samples]
    ys = [g for _, g in samples]
    lo, hi = opt, opt
    for i in range(len(xs) - 1):
        inside_r = ys[i + 1] <= threshold
        inside_l = ys[i] <= threshold
        if inside_l:
            lo = min(lo, xs[i])
            hi = max(hi, xs[i])
        if inside_l != inside_r:
            # Linear crossing between the two samples.
            t = (threshold - ys[i]) / (ys[i + 1] - ys[i])
            x = xs[i] + t * (xs[i + 1] - xs[i])
            lo = min(lo, x)
            hi = max(hi, x)
    if ys[-1] <= threshold:
        hi = max(hi, xs[-1])
    return lo, hi


def _golden_refine(g, lo, hi, rtol, max_iter=60):
    """Golden-section minimization stopping on the relative change of g."""
    x1 = hi - INV_GOLDEN * (hi - lo)
    x2 = lo + INV_GOLDEN * (hi - lo)
    f1, f2 = g(x1), g(x2)
    best_x, best_f = (x1, f1) if f1 <= f2 else (x2, f2)
    for _ in range(max_iter):
        if f1 <= f2:
            hi, x2, f2 = x2, x1, f1
            x1 = hi - INV_GOLDEN * (hi - lo)
            f1 = g(x1)
        else:
            lo, x1, f1 = x1, x2, f2
            x2 = lo + INV_GOLDEN * (hi - lo)
            f2 = g(x2)
        if f1 <= best_f:
            best_x, best_f = x1, f1
        if f2 < best_f:
            best_x, best_f = x2, f2
        if abs(f1 - f2) <= rtol * best_f and abs(hi - lo) < 0.5:
            break
    return best_x, best_f


def _scan_and_refine(g, params, rtol):
    """Coarse scan, then golden refinement around every scan-local minimum."""
    values = [g(p) for p in params]
    order = min(range(len(params)), key=lambda i: values[i])
    if order == len(params) - 1 and len(params) > 1:
        raise RangeError(
            f"scan minimum at the upper edge {params[-1]}; enlarge the range"
        )
    local_minima = [
        i
        for i in range(len(params))
        if (i == 0 or values[i] <= values[i - 1])
        and (i == len(params) - 1 or values[i] <= values[i + 1])
    ]
    best_x, best_f = params[order], values[order]
    for i in local_minima:
        lo = params[max(i - 1, 0)]
        hi = params[min(i + 1, len(params) - 1)]
        if hi <= lo:
            continue
        x, f = _golden_refine(g, lo, hi, rtol)
        if f < best_f:
            best_x, best_f = x, f
    return best_x, best_f, list(zip(params, values))


def optimal_beta(
    total: int,
    engine: MomentEngine,
    grid: StateGrid = DEFAULT_GRID,
    beta_range: tuple[float, float] | None = None,
    rtol: float = 1e-4,
    workers: int = 1,
) -> MinimaxResult:
    """Minimax weight exponent for the mean estimator at one N."""
    if total < 1:
        raise ValueError("need at least one measured copy")
    lo, hi = beta_range if beta_range else (0.0, math.sqrt(total) / 3.0 + 1.0)
    cache = {}
    profiles = {}
    evals = 0

    def g(beta):
        nonlocal evals
        key = round(beta, 9)
        if key not in cache:
            table = build_estimate_table(total, EstimatorSpec("mean-trine", beta=beta), engine)
            prof = mse_profile(grid, table, workers)
            cache[key] = prof.max_mse
            profiles[key] = prof
            evals += 1
        return cache[key]

    steps = int(math.floor((hi - lo) / COARSE_STEP)) + 1
    params = [lo + i * COARSE_STEP for i in range(steps)]
    if params[-1] < hi - 1e-12:
        params.append(hi)
    best_x, best_f, samples = _scan_and_refine(g, params, rtol)
    flat_lo, flat_hi = _flat_interval(samples, best_x, best_f)
    return MinimaxResult(
        total=total,
        param_name="beta",
        param_opt=best_x,
        minimax_mse=best_f,
        min_mse_at_opt=profiles[round(best_x, 9)].min_mse,
        samples=samples,
        flat_low=flat_lo,
        flat_high=flat_hi,
        evaluations=evals,
    )


def optimal_lambda(
    total: int,
    grid: StateGrid = DEFAULT_GRID,
    rtol: float = 1e-4,
    workers: int = 1,
    scan_points: int = 21,
) -> MinimaxResult:
    """Minimax admixture for the corrected estimator.

    The per-data correction already keeps every estimate physical, so the
    whole range [0, 1] is feasible; lambda = 0 is the bare pull-to-rim
    correction and values at or above lambda_min(N) shrink all data
    uniformly.
    """
    if total < 1:
        raise ValueError("need at least one measured copy")
    lo, hi = 0.0, 1.0
    cache = {}
    profiles = {}
    evals = 0

    def g(lam):
        nonlocal evals
        key = round(lam, 12)
        if key not in cache:
            table = build_estimate_table(
                total, EstimatorSpec("corrected-minimax", lam=min(max(lam, lo), 1.0))
            )
            prof = mse_profile(grid, table, workers)
            cache[key] = prof.max_mse
            profiles[key] = prof
            evals += 1
        return cache[key]

    params = [lo + (hi - lo) * i / (scan_points - 1) for i in range(scan_points)]
    best_x, best_f, samples = _scan_and_refine(g, params, rtol)
    flat_lo, flat_hi = _flat_interval(samples, best_x, best_f)
    return MinimaxResult(
        total=total,
        param_name="lambda",
        param_opt=best_x,
        minimax_mse=best_f,
        min_mse_at_opt=profiles[round(best_x, 12)].min_mse,
        samples=samples,
        flat_low=flat_lo,
        flat_high=flat_hi,
        evaluations=evals,
    )


SWEEP_KINDS = ("mean-trine", "corrected-minimax", "ml-trine")


def sweep(
    totals,
    kinds=SWEEP_KINDS,
    engine: MomentEngine | None = None,
    grid: StateGrid = DEFAULT_GRID,
    rtol: float = 1e-4,
    workers: int = 1,
) -> list[dict]:
    """Optimal parameters and risk extremes for each N and estimator kind."""
    for kind in kinds:
        if kind not in SWEEP_KINDS:
            raise ValueError(f"sweep does not support kind {kind!r}")
    engine = engine or MomentEngine()
    records = []
    for total in totals:
        if "mean-trine" in kinds:
            res = optimal_beta(total, engine, grid, rtol=rtol, workers=workers)
            records.append(
                {
                    "N": total,
                    "estimator": "mean-trine",
                    "param": res.param_opt,
                    "max_mse": res.minimax_mse,
                    "min_mse": res.min_mse_at_opt,
                    "flat_low": res.flat_low,
                    "flat_high": res.flat_high,
                    "beta_classical": math.sqrt(total) / 3.0,
                }
            )
        if "corrected-minimax" in kinds:
            res = optimal_lambda(total, grid, rtol=rtol, workers=workers)
            records.append(
                {
                    "N": total,
                    "estimator": "corrected-minimax",
                    "param": res.param_opt,
                    "max_mse": res.minimax_mse,
                    "min_mse": res.min_mse_at_opt,
                    "lambda_min": lambda_min(total),
                }
            )
        if "ml-trine" in kinds:
            table = build_estimate_table(total, EstimatorSpec("ml-trine"))
            prof = mse_profile(grid, table, workers)
            records.append(
                {
                    "N": total,
                    "estimator": "ml-trine",
                    "param": math.nan,
                    "max_mse": prof.max_mse,
                    "min_mse": prof.min_mse,
                }
            )
    return records
