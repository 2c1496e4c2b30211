import math

import numpy as np
import pytest

from trinemax.estimators import (
    EstimateTable,
    EstimatorSpec,
    build_estimate_table,
    lambda_min,
)
from trinemax.geometry import (
    BlochState,
    CountVector,
    ProbTriple,
    count_arrays,
    enumerate_counts,
    probs_from_state,
)
from trinemax.moments import MomentEngine
from trinemax.risk import (
    StateGrid,
    classical_mse_closed_form,
    die_state_lattice,
    mse_at_probs,
    mse_at_state,
    mse_over_die_states,
    mse_profile,
    _batch_mse_wedge,
    _wedge_probs,
)

CENTER = BlochState(0.0, 0.0)


@pytest.fixture(scope="module")
def engine():
    return MomentEngine()


def oracle_table(total):
    """Estimator that reports the truth is a zero-risk oracle; here the
    truth is fixed to the centre so only the centre state has zero MSE."""
    spec = EstimatorSpec("corrected-minimax", lam=1.0)
    return build_estimate_table(total, spec)


def test_center_spot_value_n1(engine):
    # Hand value: each outcome has weight 1/3 and squared error
    # (1/12)^2 + 2 (1/24)^2 = 1/96.
    table = build_estimate_table(1, EstimatorSpec("mean-trine", beta=1.0), engine)
    v = mse_at_state(CENTER, table)
    assert v == pytest.approx(1 / 96, abs=1e-15)


def test_oracle_estimator_zero_risk():
    table = oracle_table(4)
    assert mse_at_state(CENTER, table) == pytest.approx(0.0, abs=1e-16)


def test_classical_constant_risk_closed_form():
    # At beta = sqrt(N)/K the closed form loses its p^2 dependence.
    for total in (1, 4, 9):
        beta = math.sqrt(total) / 3
        vals = {classical_mse_closed_form(beta, p2, total) for p2 in (1 / 3, 0.5, 0.9)}
        expected = 2 / (3 * (1 + math.sqrt(total)) ** 2)
        for v in vals:
            assert v == pytest.approx(expected, rel=1e-14)
    assert classical_mse_closed_form(2 / 3, 0.77, 4) == pytest.approx(2 / 27, rel=1e-14)


def test_classical_enumeration_matches_closed_form():
    rng = np.random.default_rng(7)
    for total in (1, 2, 5):
        table = build_estimate_table(total, EstimatorSpec("classical-minimax"))
        beta = math.sqrt(total) / 3
        expected = classical_mse_closed_form(beta, 0.0, total)
        for _ in range(20):
            p = rng.dirichlet([1.0, 1.0, 1.0])
            v = mse_at_probs(ProbTriple(*p), table)
            assert v == pytest.approx(expected, abs=1e-13)


def test_mse_symmetry_under_trine_rotation_and_reflection(engine):
    table = build_estimate_table(6, EstimatorSpec("mean-trine", beta=1.0), engine)
    rng = np.random.default_rng(3)
    for _ in range(12):
        r = rng.uniform(0, 1)
        phi = rng.uniform(0, 2 * math.pi)
        base = mse_at_state(BlochState(r, phi), table)
        rot = mse_at_state(BlochState(r, phi + 2 * math.pi / 3), table)
        refl = mse_at_state(BlochState(r, -phi), table)
        assert rot == pytest.approx(base, rel=1e-12)
        assert refl == pytest.approx(base, rel=1e-12)


def test_batch_wedge_matches_scalar(engine):
    table = build_estimate_table(9, EstimatorSpec("mean-trine", beta=2.0), engine)
    r = np.linspace(0, 1, 7)
    phi = np.linspace(0, math.pi / 3, 5)
    rr, pp = np.meshgrid(r, phi, indexing="ij")
    probs = _wedge_probs(rr.ravel(), pp.ravel())
    batch = _batch_mse_wedge(probs, table)
    for i, (rv, pv) in enumerate(zip(rr.ravel(), pp.ravel())):
        scalar = mse_at_state(BlochState(rv, pv), table)
        assert batch[i] == pytest.approx(scalar, rel=1e-11)


def test_batch_deterministic_across_workers(engine):
    table = build_estimate_table(12, EstimatorSpec("ml-trine"), engine)
    probs = _wedge_probs(
        np.linspace(0, 1, 400), np.linspace(0, math.pi / 3, 400)
    )
    a = _batch_mse_wedge(probs, table, workers=1)
    b = _batch_mse_wedge(probs, table, workers=8)
    assert np.array_equal(a, b)


def test_profile_refinement_monotone(engine):
    table = build_estimate_table(8, EstimatorSpec("mean-trine", beta=1.0), engine)
    grid = StateGrid(n_radial=16, n_angular=12, refine_levels=2)
    prof = mse_profile(grid, table)
    assert prof.max_mse >= prof.values.max() - 1e-18
    assert prof.min_mse <= prof.values.min() + 1e-18
    assert prof.min_mse <= prof.max_mse
    assert prof.evaluations > prof.values.size


def test_profile_of_center_oracle():
    # The all-centre estimator has zero risk exactly at the centre state.
    prof = mse_profile(StateGrid(n_radial=9, n_angular=7), oracle_table(3))
    assert prof.min_mse == pytest.approx(0.0, abs=1e-16)
    assert prof.argmin[0] == pytest.approx(0.0, abs=1e-12)


def test_die_lattice_constant_risk():
    total = 4
    table = build_estimate_table(total, EstimatorSpec("classical-minimax"))
    states = die_state_lattice(12)
    vals = mse_over_die_states(states, table)
    assert vals.max() - vals.min() < 1e-12
    assert vals[0] == pytest.approx(2 / 27, rel=1e-12)


def test_hilbert_schmidt_proportionality(engine):
    # tr[(rho - rhohat)^2] against the probability-space squared distance:
    # the ratio is a constant (3, from the trine reconstruction operators).
    rng = np.random.default_rng(11)
    ratios = []
    for _ in range(30):
        p = probs_from_state(BlochState(rng.uniform(0, 1), rng.uniform(0, 2 * math.pi)))
        q = probs_from_state(BlochState(rng.uniform(0, 1), rng.uniform(0, 2 * math.pi)))
        dp = np.array(p.as_tuple()) - np.array(q.as_tuple())
        sq = float((dp * dp).sum())
        angles = [0.0, 2 * math.pi / 3, 4 * math.pi / 3]
        az = 2 * sum(d * math.cos(a) for d, a in zip(dp, angles))
        ax = 2 * sum(d * math.sin(a) for d, a in zip(dp, angles))
        hs = (az * az + ax * ax) / 2.0
        ratios.append(hs / sq)
    assert np.ptp(ratios) < 1e-10
    assert ratios[0] == pytest.approx(3.0, rel=1e-12)


def test_closed_form_validation():
    with pytest.raises(ValueError):
        classical_mse_closed_form(0.0, 0.5, 4)
