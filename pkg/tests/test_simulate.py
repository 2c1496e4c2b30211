import math

import numpy as np
import pytest

from trinemax.estimators import EstimatorSpec, build_estimate_table
from trinemax.geometry import BlochState, CountVector, ProbTriple, probs_from_state
from trinemax.moments import MomentEngine
from trinemax.risk import mse_at_state
from trinemax.simulate import SimConfig, empirical_mse, sample_counts


@pytest.fixture(scope="module")
def engine():
    return MomentEngine()


def test_deterministic_distribution():
    rng = np.random.default_rng(0)
    c = sample_counts(ProbTriple(1.0, 0.0, 0.0), 9, rng)
    assert c.as_tuple() == (9, 0, 0)


def test_reproducible_under_seed():
    a = sample_counts(probs_from_state(BlochState(0.6, 1.0)), 50, np.random.default_rng(42))
    b = sample_counts(probs_from_state(BlochState(0.6, 1.0)), 50, np.random.default_rng(42))
    assert a.as_tuple() == b.as_tuple()


def test_concentration_at_uniform():
    rng = np.random.default_rng(123)
    total = 300000
    c = sample_counts(ProbTriple(1 / 3, 1 / 3, 1 / 3), total, rng)
    sigma = math.sqrt((1 / 3) * (2 / 3) / total)
    for nk in c.as_tuple():
        assert abs(nk / total - 1 / 3) < 5 * sigma


def test_oracle_estimator_zero_error():
    table = build_estimate_table(5, EstimatorSpec("corrected-minimax", lam=1.0))
    cfg = SimConfig(BlochState(0.0, 0.0), 5, trials=200, seed=1)
    mean, stderr = empirical_mse(cfg, table)
    assert mean == 0.0
    assert stderr == 0.0


def test_center_spot_value(engine):
    # Exact MSE of the weighted-mean estimator at the centre, N=1, is 1/96.
    table = build_estimate_table(1, EstimatorSpec("mean-trine", beta=1.0), engine)
    cfg = SimConfig(BlochState(0.0, 0.0), 1, trials=10**6, seed=7)
    mean, stderr = empirical_mse(cfg, table)
    assert abs(mean - 1 / 96) <= 3 * stderr
    assert stderr < 1e-4


def test_empirical_matches_exact_at_general_state(engine):
    table = build_estimate_table(10, EstimatorSpec("ml-trine"), engine)
    state = BlochState(0.7, 0.4)
    exact = mse_at_state(state, table)
    cfg = SimConfig(state, 10, trials=10**5, seed=77)
    mean, stderr = empirical_mse(cfg, table)
    assert abs(mean - exact) <= 3 * stderr


def test_single_trial_reports_nan_spread(engine):
    table = build_estimate_table(3, EstimatorSpec("ml-trine"), engine)
    cfg = SimConfig(BlochState(0.5, 0.2), 3, trials=1, seed=5)
    mean, stderr = empirical_mse(cfg, table)
    assert mean >= 0.0
    assert math.isnan(stderr)


def test_worker_count_does_not_change_results(engine):
    table = build_estimate_table(7, EstimatorSpec("mean-trine", beta=1.0), engine)
    cfg = SimConfig(BlochState(0.3, 0.9), 7, trials=100000, seed=31)
    a = empirical_mse(cfg, table, workers=1)
    b = empirical_mse(cfg, table, workers=8)
    assert a == b


def test_statistical_contract_across_seeds(engine):
    # |empirical - exact| <= 3 stderr should hold in almost all reruns.
    table = build_estimate_table(4, EstimatorSpec("mean-trine", beta=2.0), engine)
    state = BlochState(0.9, 0.1)
    exact = mse_at_state(state, table)
    misses = 0
    for seed in range(60):
        mean, stderr = empirical_mse(
            SimConfig(state, 4, trials=4000, seed=seed), table
        )
        if abs(mean - exact) > 3 * stderr:
            misses += 1
    assert misses <= 1


def test_config_validation():
    with pytest.raises(ValueError):
        SimConfig(BlochState(0.5, 0.0), 5, trials=0, seed=1)
    with pytest.raises(ValueError):
        SimConfig(BlochState(1.2, 0.0), 5, trials=10, seed=1)
    with pytest.raises(ValueError):
        SimConfig(BlochState(0.5, 0.0), 0, trials=10, seed=1)
