import math
from fractions import Fraction

import numpy as np
import pytest

from trinemax.estimators import (
    EstimateConsistencyError,
    EstimatorSpec,
    build_estimate_table,
    classical_minimax_estimate,
    corrected_minimax_estimate,
    det_weight_mean_estimate,
    estimate,
    lambda_min,
    mean_estimate,
    mean_estimate_exact,
    ml_estimate,
)
from trinemax.geometry import (
    BlochState,
    CountVector,
    ProbTriple,
    enumerate_counts,
    log_multinomial_weight,
    probs_from_state,
    purity,
    state_from_probs,
)
from trinemax.moments import MomentEngine


@pytest.fixture(scope="module")
def engine():
    return MomentEngine()


def perms(t):
    a, b, c = t
    return {(a, b, c), (a, c, b), (b, a, c), (b, c, a), (c, a, b), (c, b, a)}


class TestMeanTrine:
    def test_center_for_no_data(self, engine):
        for beta in (0.0, 0.5, 1.0, 2.0, 3.7):
            p = mean_estimate(CountVector(0, 0, 0), beta, engine)
            assert p.as_tuple() == pytest.approx((1 / 3, 1 / 3, 1 / 3), abs=1e-9)

    def test_hand_value_one_click(self, engine):
        p = mean_estimate(CountVector(1, 0, 0), 1.0, engine)
        assert p.as_tuple() == pytest.approx((5 / 12, 7 / 24, 7 / 24), abs=1e-14)
        assert purity(p) == pytest.approx(11 / 32, abs=1e-14)

    def test_exact_rational_path(self, engine):
        p = mean_estimate_exact(CountVector(1, 0, 0), 1, engine)
        assert p == (Fraction(5, 12), Fraction(7, 24), Fraction(7, 24))
        assert sum(p) == 1

    def test_integer_beta_sums_exactly(self, engine):
        for beta in (1, 2, 3):
            for total in (1, 3, 6):
                for c in enumerate_counts(total):
                    assert sum(mean_estimate_exact(c, beta, engine)) == 1

    def test_quantum_pull_toward_center(self, engine):
        # Classical posterior mean at (1,0,0), beta=1 is 1/2; the disk
        # constraint pulls the trine value below it.
        p = mean_estimate(CountVector(1, 0, 0), 1.0, engine)
        assert p.p1 < 0.5

    def test_interpolated_beta_renormalized(self, engine):
        p = mean_estimate(CountVector(3, 1, 0), 1.5, engine)
        assert sum(p.as_tuple()) == pytest.approx(1.0, abs=1e-14)
        assert purity(p) <= 0.5 + 1e-9

    def test_beta0_estimates(self, engine):
        p = mean_estimate(CountVector(2, 1, 0), 0.0, engine)
        assert sum(p.as_tuple()) == pytest.approx(1.0, abs=1e-12)
        assert purity(p) <= 0.5 + 1e-9

    def test_shrinkage_ordering_in_beta(self, engine):
        # Larger integer beta weights the centre more strongly.
        for c in [(5, 0, 0), (8, 2, 0), (4, 3, 3), (10, 5, 5)]:
            radii = [
                state_from_probs(mean_estimate(CountVector(*c), float(b), engine)).r
                for b in (1, 2, 3, 4)
            ]
            assert all(r2 <= r1 + 1e-12 for r1, r2 in zip(radii, radii[1:])), c

    def test_permutation_covariance(self, engine):
        p = mean_estimate(CountVector(3, 2, 1), 1.0, engine).as_tuple()
        q = mean_estimate(CountVector(2, 1, 3), 1.0, engine).as_tuple()
        assert q == pytest.approx((p[1], p[2], p[0]), abs=1e-15)


class TestClassicalAndCorrected:
    def test_die_estimator_values(self):
        p = classical_minimax_estimate(CountVector(4, 0, 0))
        assert p.as_tuple() == pytest.approx((7 / 9, 1 / 9, 1 / 9), abs=1e-14)
        p = classical_minimax_estimate(CountVector(2, 1, 1))
        assert p.as_tuple() == pytest.approx((4 / 9, 5 / 18, 5 / 18), abs=1e-14)

    def test_center_fixed_point(self):
        for total in (3, 9, 30):
            t = total // 3
            p = classical_minimax_estimate(CountVector(t, t, t))
            assert p.as_tuple() == pytest.approx((1 / 3, 1 / 3, 1 / 3), abs=1e-14)

    def test_corrected_endpoints(self):
        c = CountVector(3, 1, 0)
        p0 = corrected_minimax_estimate(c, 0.0)
        assert p0.as_tuple() == classical_minimax_estimate(c).as_tuple()
        p1 = corrected_minimax_estimate(c, 1.0)
        assert p1.as_tuple() == pytest.approx((1 / 3, 1 / 3, 1 / 3), abs=1e-15)

    def test_corrected_lands_on_rim_at_lambda_min(self):
        # (4,0,0) has Bloch radius 4/3; lambda = 1/4 scales it onto the rim.
        p = corrected_minimax_estimate(CountVector(4, 0, 0), 0.25)
        assert p.as_tuple() == pytest.approx((2 / 3, 1 / 6, 1 / 6), abs=1e-14)

    def test_lambda_min_values(self):
        assert lambda_min(4) == pytest.approx(0.25, abs=1e-14)
        assert lambda_min(0) == 0.0
        assert lambda_min(1) == 0.0  # single-click estimates stay on the disk
        # The binding data is always (N,0,0), whose estimate approaches the
        # simplex vertex (Bloch radius 2), so lambda_min rises toward 1/2.
        lams = [lambda_min(n) for n in (4, 25, 100, 400)]
        assert all(l2 > l1 for l1, l2 in zip(lams, lams[1:]))
        assert all(l < 0.5 for l in lams)

    def test_corrected_physical_at_lambda_min(self):
        for total in (1, 2, 5, 17, 60):
            lam = lambda_min(total)
            for c in enumerate_counts(total):
                p = corrected_minimax_estimate(c, lam)
                assert purity(p) <= 0.5 + 1e-9, (total, c)


class TestML:
    def test_interior_case(self):
        p = ml_estimate(CountVector(2, 1, 1))
        assert p.as_tuple() == pytest.approx((0.5, 0.25, 0.25), abs=1e-15)
        assert purity(p) == pytest.approx(3 / 8, abs=1e-15)

    def test_boundary_case(self):
        p = ml_estimate(CountVector(4, 0, 0))
        assert p.as_tuple() == pytest.approx((2 / 3, 1 / 6, 1 / 6), abs=1e-9)

    def test_center(self):
        assert ml_estimate(CountVector(1, 1, 1)).as_tuple() == (1 / 3, 1 / 3, 1 / 3)
        assert ml_estimate(CountVector(0, 0, 0)).as_tuple() == (1 / 3, 1 / 3, 1 / 3)

    def test_dominates_reference_grid(self, engine):
        # The claimed optimum must beat a dense reference grid everywhere.
        rs = np.linspace(0, 1, 200)
        phis = np.linspace(0, 2 * math.pi, 300, endpoint=False)
        for c in [(4, 0, 0), (7, 1, 0), (10, 3, 1), (5, 5, 0), (17, 2, 1)]:
            counts = CountVector(*c)
            best = -math.inf
            for r in rs:
                cosd = np.cos(phis)[None, :]
                p1 = (1 + r * np.cos(phis)) / 3
                p2 = (1 + r * np.cos(phis - 2 * math.pi / 3)) / 3
                p3 = (1 + r * np.cos(phis - 4 * math.pi / 3)) / 3
                with np.errstate(divide="ignore", invalid="ignore"):
                    ll = sum(
                        np.where(nk > 0, nk * np.log(pk), 0.0)
                        for nk, pk in zip(c, (p1, p2, p3))
                    )
                best = max(best, float(np.max(ll)))
            p = ml_estimate(counts)
            ll_hat = sum(
                nk * math.log(pk) for nk, pk in zip(c, p.as_tuple()) if nk > 0
            )
            assert ll_hat >= best - 1e-9, c

    def test_permutation_covariance(self):
        p = ml_estimate(CountVector(9, 1, 0)).as_tuple()
        q = ml_estimate(CountVector(0, 9, 1)).as_tuple()
        assert q == pytest.approx((p[2], p[0], p[1]), abs=1e-9)


class TestDetWeight:
    def test_center_for_no_data(self):
        p = estimate(CountVector(0, 0, 0), EstimatorSpec("mean-det-weight", beta=2.0))
        assert p.as_tuple() == (1 / 3, 1 / 3, 1 / 3)

    def test_beta1_matches_p_product(self, engine):
        for c in [(1, 0, 0), (2, 1, 0), (3, 1, 1)]:
            det = det_weight_mean_estimate(CountVector(*c), 1.0)
            mean = mean_estimate(CountVector(*c), 1.0, engine)
            assert det.as_tuple() == pytest.approx(mean.as_tuple(), abs=1e-10)

    def test_larger_beta_pulls_to_center(self):
        p1 = det_weight_mean_estimate(CountVector(1, 0, 0), 1.0)
        p2 = det_weight_mean_estimate(CountVector(1, 0, 0), 2.0)
        assert state_from_probs(p2).r < state_from_probs(p1).r

    def test_sum_rule_by_construction(self):
        p = det_weight_mean_estimate(CountVector(5, 2, 0), 1.7)
        assert sum(p.as_tuple()) == pytest.approx(1.0, abs=1e-13)


class TestTables:
    def test_mean_table_n1(self, engine):
        table = build_estimate_table(1, EstimatorSpec("mean-trine", beta=1.0), engine)
        rows = {tuple(c.as_tuple()): tuple(table.probs[i]) for i, c in enumerate(enumerate_counts(1))}
        assert rows[(1, 0, 0)] == pytest.approx((5 / 12, 7 / 24, 7 / 24), abs=1e-14)
        assert rows[(0, 1, 0)] == pytest.approx((7 / 24, 5 / 12, 7 / 24), abs=1e-14)
        assert rows[(0, 0, 1)] == pytest.approx((7 / 24, 7 / 24, 5 / 12), abs=1e-14)

    def test_ml_table_all_physical(self):
        table = build_estimate_table(2, EstimatorSpec("ml-trine"))
        assert table.probs.shape == (6, 3)
        assert np.all((table.probs ** 2).sum(axis=1) <= 0.5 + 1e-9)

    def test_table_n0(self, engine):
        for spec in [
            EstimatorSpec("mean-trine", beta=2.0),
            EstimatorSpec("ml-trine"),
            EstimatorSpec("corrected-minimax", lam=0.3),
        ]:
            table = build_estimate_table(0, spec, engine)
            assert table.probs[0] == pytest.approx((1 / 3, 1 / 3, 1 / 3), abs=1e-12)

    def test_lookup_matches_scalar_paths(self, engine):
        total = 7
        for spec in [
            EstimatorSpec("mean-trine", beta=1.0),
            EstimatorSpec("mean-trine", beta=2.5),
            EstimatorSpec("classical-minimax"),
            EstimatorSpec("corrected-minimax", lam=0.35),
            EstimatorSpec("ml-trine"),
        ]:
            table = build_estimate_table(total, spec, engine)
            for c in enumerate_counts(total):
                single = estimate(c, spec, engine)
                assert table.lookup(c).as_tuple() == pytest.approx(
                    single.as_tuple(), abs=1e-12
                ), (spec.label(), c)

    def test_physicality_sweep_moderate(self, engine):
        for total in (1, 5, 20, 60):
            for spec in [
                EstimatorSpec("mean-trine", beta=1.0),
                EstimatorSpec("mean-trine", beta=2.5),
                EstimatorSpec("corrected-minimax", lam=lambda_min(total)),
                EstimatorSpec("ml-trine"),
            ]:
                table = build_estimate_table(total, spec, engine)
                pur = (table.probs ** 2).sum(axis=1)
                assert np.all(pur <= 0.5 + 1e-9), (spec.label(), total)

    def test_corrected_small_lambda_clips_to_rim(self, engine):
        # Below the worst-case threshold the admixture is per data point:
        # outside estimates land exactly on the rim, inside ones shrink by
        # the uniform fraction.
        assert lambda_min(7) > 0.2
        table = build_estimate_table(7, EstimatorSpec("corrected-minimax", lam=0.2), engine)
        pur = (table.probs ** 2).sum(axis=1)
        assert np.all(pur <= 0.5 + 1e-12)
        clipped = table.lookup(CountVector(7, 0, 0))
        assert purity(clipped) == pytest.approx(0.5, abs=1e-12)
        # Bare minimal correction: physical entries untouched.
        zero = build_estimate_table(7, EstimatorSpec("corrected-minimax", lam=0.0), engine)
        inner = zero.lookup(CountVector(3, 2, 2))
        assert inner.as_tuple() == pytest.approx(
            classical_minimax_estimate(CountVector(3, 2, 2)).as_tuple(), abs=1e-15
        )

    def test_spec_validation(self):
        with pytest.raises(ValueError):
            EstimatorSpec("mean-trine")
        with pytest.raises(ValueError):
            EstimatorSpec("mean-trine", beta=-0.5)
        with pytest.raises(ValueError):
            EstimatorSpec("mean-det-weight", beta=0.0)
        with pytest.raises(ValueError):
            EstimatorSpec("corrected-minimax", lam=1.5)
        with pytest.raises(ValueError):
            EstimatorSpec("no-such-kind")
