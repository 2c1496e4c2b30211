"""Monte-Carlo cross-validation of the exact risk evaluator.

Simulates trine click data from a known state and averages the squared
estimation error, to be compared against the exact enumeration in risk.py.
Sampling uses sequential conditional binomials (n1 from Binomial(N, p1),
n2 from the remainder), which is exact for the multinomial distribution.

Reproducibility contract: the PCG64 generator (period 2^128) is seeded
from the run seed, and trials are partitioned into fixed-size blocks, one
independent child stream per block (numpy SeedSequence spawning).  Worker
threads only distribute whole blocks, so results are bit-identical for
any worker count.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .estimators import EstimateTable, EstimatorSpec
from .geometry import BlochState, CountVector, ProbTriple, is_physical, probs_from_state

BLOCK = 1 << 14


@dataclass(frozen=True)
class SimConfig:
    """One simulation run: true state, copies per experiment, trials, seed."""

    state: BlochState
    total: int
    trials: int
    seed: int
    spec: EstimatorSpec | None = None

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("need at least one trial")
        if self.total < 1:
            raise ValueError("need at least one copy per experiment")
        if not self.state.is_physical:
            raise ValueError("true state must be physical")


def sample_counts(probs: ProbTriple, total: int, rng: np.random.Generator) -> CountVector:
    """One multinomial draw of ``total`` trine outcomes."""
    n1 = int(rng.binomial(total, probs.p1))
    rest = total - n1
    if rest == 0:
        return CountVector(n1, 0, 0)
    p2_cond = probs.p2 / (1.0 - probs.p1) if probs.p1 < 1.0 else 0.0
    n2 = int(rng.binomial(rest, min(1.0, max(0.0, p2_cond))))
    return CountVector(n1, n2, total - n1 - n2)


def _sample_block(probs, total, rng, size):
    n1 = rng.binomial(total, probs.p1, size=size)
    rest = total - n1
    p2_cond = probs.p2 / (1.0 - probs.p1) if probs.p1 < 1.0 else 0.0
    n2 = rng.binomial(rest, min(1.0, max(0.0, p2_cond)))
    return n1, n2


def empirical_mse(
    config: SimConfig, table: EstimateTable, workers: int = 1
) -> tuple[float, float]:
    """Sample-average squared error and its standard error.

    With a single trial the spread is undefined and the standard error is
    returned as NaN.
    """
    if table.total != config.total:
        raise ValueError("estimate table does not match the experiment size")
    total = config.total
    probs = probs_from_state(config.state)
    if not is_physical(probs):
        raise ValueError("true state must be physical")
    p_true = probs.as_array()

    n_blocks = (config.trials + BLOCK - 1) // BLOCK
    seeds = np.random.SeedSequence(config.seed).spawn(n_blocks)
    sums = np.zeros(n_blocks)
    sq_sums = np.zeros(n_blocks)

    def run_block(b):
        size = min(BLOCK, config.trials - b * BLOCK)
        rng = np.random.default_rng(seeds[b])
        n1, n2 = _sample_block(probs, total, rng, size)
        idx = n1 * (total + 1) - n1 * (n1 - 1) // 2 + n2
        err = table.probs[idx] - p_true
        sq = (err * err).sum(axis=1)
        sums[b] = sq.sum()
        sq_sums[b] = (sq * sq).sum()

    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_block, range(n_blocks)))
    else:
        for b in range(n_blocks):
            run_block(b)

    n = config.trials
    mean = float(sums.sum() / n)
    if n == 1:
        return mean, math.nan
    var = max(0.0, (float(sq_sums.sum()) - n * mean * mean) / (n - 1))
    return mean, math.sqrt(var / n)
