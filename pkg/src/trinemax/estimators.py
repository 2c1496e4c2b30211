"""Point estimators mapping click counts to trine outcome probabilities.

Five families:

* ``mean-trine``        ratio of adjacent weighted moments, weight
                        (p1 p2 p3)^(beta-1) restricted to the qubit disk
* ``classical-minimax`` the constant-risk die estimator (may leave the disk)
* ``corrected-minimax`` the die estimator admixed with the centre by a
                        fraction lambda, enough to restore physicality
* ``ml-trine``          likelihood maximizer constrained to the disk
* ``mean-det-weight``   moment ratios with weight det(rho)^(beta-1)
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import (
    DEFAULT_TRINE,
    BlochState,
    CountVector,
    ProbTriple,
    TrineConfig,
    count_arrays,
    count_index,
    is_physical,
    probs_from_state,
    purity,
    state_from_probs,
)
from .moments import MomentEngine
from .quadrature import (
    DEFAULT_QUAD,
    QuadratureSpec,
    det_weight_level_estimates,
    det_weight_ratios,
)

logger = logging.getLogger(__name__)

KINDS = ("mean-trine", "classical-minimax", "corrected-minimax", "ml-trine", "mean-det-weight")

# Interpolated moment ratios may miss sum 1 by a few percent at worst; a
# deviation beyond this is an internal inconsistency, not interpolation error.
SUM_CONSISTENCY_LIMIT = 0.05

PHYS_TOL = 1e-9


class EstimateConsistencyError(RuntimeError):
    """Moment ratios violated the probability sum beyond interpolation error."""


class PhysicalityError(RuntimeError):
    """An estimator that must stay on the disk produced an outside point."""


@dataclass(frozen=True)
class EstimatorSpec:
    """Which estimator to run and with what parameters."""

    kind: str
    beta: float | None = None
    lam: float | None = None
    quad: QuadratureSpec = field(default=DEFAULT_QUAD)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown estimator kind {self.kind!r}")
        if self.kind == "mean-trine":
            if self.beta is None or self.beta < 0:
                raise ValueError("mean-trine requires beta >= 0")
        if self.kind == "mean-det-weight":
            if self.beta is None or self.beta <= 0:
                raise ValueError("mean-det-weight requires beta > 0")
        if self.kind == "corrected-minimax":
            if self.lam is None or not 0.0 <= self.lam <= 1.0:
                raise ValueError("corrected-minimax requires lambda in [0, 1]")

    def label(self) -> str:
        if self.beta is not None:
            return f"{self.kind}(beta={self.beta:g})"
        if self.lam is not None:
            return f"{self.kind}(lambda={self.lam:g})"
        return self.kind


CENTER = ProbTriple(1 / 3, 1 / 3, 1 / 3)


def _shrink_to_disk(p: ProbTriple) -> ProbTriple:
    state = state_from_probs(p)
    return probs_from_state(BlochState(1.0, state.phi))


def mean_estimate(counts: CountVector, beta: float, engine: MomentEngine) -> ProbTriple:
    """Mean estimator: hat p_k = M_beta(n + e_k) / M_beta(n).

    Integer beta >= 1 is exact (sum rule holds identically, nothing to
    renormalize).  For other beta the interpolated ratios get renormalized;
    a sum defect beyond SUM_CONSISTENCY_LIMIT raises.
    """
    total = counts.total
    num = engine.m_beta_level(beta, total + 1)
    den = engine.m_beta_level(beta, total)[count_index(counts.n1, counts.n2, total)]
    p = (
        num[count_index(counts.n1 + 1, counts.n2, total + 1)] / den,
        num[count_index(counts.n1, counts.n2 + 1, total + 1)] / den,
        num[count_index(counts.n1, counts.n2, total + 1)] / den,
    )
    if beta != int(beta) or beta == 0:
        s = p[0] + p[1] + p[2]
        if abs(s - 1.0) > SUM_CONSISTENCY_LIMIT:
            raise EstimateConsistencyError(
                f"ratio sum {s} for counts {counts.as_tuple()} at beta={beta}"
            )
        p = (p[0] / s, p[1] / s, p[2] / s)
    out = ProbTriple(*p)
    if purity(out) > 0.5 + 1e-12:
        logger.warning(
            "mean estimate at %s, beta=%s left the disk (purity %.3g); radius clipped",
            counts.as_tuple(),
            beta,
            purity(out),
        )
        out = _shrink_to_disk(out)
    return out


def mean_estimate_exact(counts: CountVector, beta: int, engine: MomentEngine):
    """Exact rational mean estimate for integer beta >= 1."""
    den = engine.moment_exact(beta, counts)
    n1, n2, n3 = counts.as_tuple()
    return (
        engine.moment_exact(beta, CountVector(n1 + 1, n2, n3)) / den,
        engine.moment_exact(beta, CountVector(n1, n2 + 1, n3)) / den,
        engine.moment_exact(beta, CountVector(n1, n2, n3 + 1)) / den,
    )


def classical_minimax_estimate(counts: CountVector, sides: int = 3) -> ProbTriple:
    """Constant-risk die estimator (1/K) a_N + (n_k/N) b_N; can leave the disk."""
    total = counts.total
    if total == 0:
        return CENTER
    root = math.sqrt(total)
    a = 1.0 / (1.0 + root)
    b = 1.0 / (1.0 + 1.0 / root)
    return ProbTriple(
        a / sides + b * counts.n1 / total,
        a / sides + b * counts.n2 / total,
        a / sides + b * counts.n3 / total,
    )


def corrected_minimax_estimate(counts: CountVector, lam: float) -> ProbTriple:
    """Die estimator admixed with the centre by max(lam, minimal correction).

    Data whose die estimate already lies in the disk is shrunk by the
    uniform fraction ``lam``; data outside the disk is pulled in at least
    far enough to land on the rim.  ``lam = 0`` is therefore the bare
    minimal correction, and for ``lam`` at or above the worst-case
    threshold (see :func:`lambda_min`) the admixture is uniform across all
    data.  Equivalent Bloch form: the radius is scaled by (1 - lambda),
    clipped to the disk.
    """
    if not 0.0 <= lam <= 1.0:
        raise ValueError("lambda must lie in [0, 1]")
    p = classical_minimax_estimate(counts)
    r = state_from_probs(p).r
    lam_c = lam
    if r > 1.0 and (1.0 - lam) * r > 1.0:
        lam_c = 1.0 - 1.0 / r
    w = 1.0 - lam_c
    return ProbTriple(
        w * p.p1 + lam_c / 3.0, w * p.p2 + lam_c / 3.0, w * p.p3 + lam_c / 3.0
    )


def lambda_min(total: int) -> float:
    """Smallest admixture making the corrected estimator physical for all data.

    The extremal data is (N,0,0) by symmetry; scaling its Bloch radius
    r_max down to the disk boundary needs lambda = 1 - 1/r_max.
    """
    if total < 1:
        return 0.0
    r_max = state_from_probs(classical_minimax_estimate(CountVector(total, 0, 0))).r
    if r_max <= 1.0:
        return 0.0
    return 1.0 - 1.0 / r_max


_ARCS = None


def _boundary_arcs(config: TrineConfig):
    """The three arcs between rim zeros of the outcome probabilities."""
    sing = sorted((a + math.pi) % (2 * math.pi) for a in config.angles)
    return [
        (sing[0], sing[1]),
        (sing[1], sing[2]),
        (sing[2], sing[0] + 2 * math.pi),
    ]


INV_GOLDEN = (math.sqrt(5.0) - 1.0) / 2.0


def _boundary_loglike(phi, n1, n2, n3, angles):
    out = 0.0 * phi
    for nk, ak in zip((n1, n2, n3), angles):
        vals = np.log1p(np.cos(phi - ak))
        out = out + np.where(nk > 0, nk * vals, 0.0)
    return out


def _boundary_slope(phi, n1, n2, n3, angles):
    out = 0.0 * phi
    for nk, ak in zip((n1, n2, n3), angles):
        out = out - np.where(nk > 0, nk * np.tan((phi - ak) / 2.0), 0.0)
    return out


def _ml_boundary_phi(n1, n2, n3, config: TrineConfig, tol: float) -> np.ndarray:
    """Rim angle maximizing the log-likelihood, vectorized over counts.

    On each arc between rim zeros the derivative -sum n_k tan((phi-phi_k)/2)
    is strictly decreasing, so the log-likelihood is concave there and a
    golden-section search is safe; the best of the three arcs wins, ties
    resolved toward the smaller angle by strict improvement.  Comparison
    noise flattens the log-likelihood near its peak well before the target
    width, so the golden bracket is polished by bisecting the derivative,
    which localizes the root to near machine precision.
    """
    angles = config.angles
    # Stop the value-comparison stage while the bracket is still wide enough
    # for the log-likelihood differences to dominate rounding noise; the
    # slope bisection below supplies the remaining precision.
    golden_width = max(1e-5, min(tol, 1e-2))
    iters = max(
        1, int(math.ceil(math.log(golden_width / (2 * math.pi / 3)) / math.log(INV_GOLDEN)))
    )
    best_phi = np.zeros(n1.shape)
    best_val = np.full(n1.shape, -np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        for lo_v, hi_v in _boundary_arcs(config):
            lo = np.full(n1.shape, lo_v)
            hi = np.full(n1.shape, hi_v)
            x1 = hi - INV_GOLDEN * (hi - lo)
            x2 = lo + INV_GOLDEN * (hi - lo)
            f1 = _boundary_loglike(x1, n1, n2, n3, angles)
            f2 = _boundary_loglike(x2, n1, n2, n3, angles)
            for _ in range(iters):
                take_left = f1 >= f2
                hi = np.where(take_left, x2, hi)
                lo = np.where(take_left, lo, x1)
                x1_new = np.where(take_left, hi - INV_GOLDEN * (hi - lo), x2)
                x2_new = np.where(take_left, x1, lo + INV_GOLDEN * (hi - lo))
                f1_keep = np.where(take_left, np.nan, f2)
                f2_keep = np.where(take_left, f1, np.nan)
                x1, x2 = x1_new, x2_new
                f1 = np.where(take_left, _boundary_loglike(x1, n1, n2, n3, angles), f1_keep)
                f2 = np.where(take_left, f2_keep, _boundary_loglike(x2, n1, n2, n3, angles))
            # Bisect the (strictly decreasing) slope inside the bracket.
            g_lo = _boundary_slope(lo, n1, n2, n3, angles)
            g_hi = _boundary_slope(hi, n1, n2, n3, angles)
            can_polish = (g_lo > 0.0) & (g_hi < 0.0)
            blo, bhi = lo.copy(), hi.copy()
            for _ in range(60):
                mid = 0.5 * (blo + bhi)
                positive = _boundary_slope(mid, n1, n2, n3, angles) > 0.0
                blo = np.where(can_polish & positive, mid, blo)
                bhi = np.where(can_polish & ~positive, mid, bhi)
            phi = 0.5 * (blo + bhi)
            val = _boundary_loglike(phi, n1, n2, n3, angles)
            better = val > best_val
            best_phi = np.where(better, phi, best_phi)
            best_val = np.where(better, val, best_val)
    return best_phi % (2 * math.pi)


def ml_estimate(
    counts: CountVector, config: TrineConfig = DEFAULT_TRINE, tol: float = 1e-10
) -> ProbTriple:
    """Likelihood maximizer over the disk.

    Physical relative frequencies are the unconstrained optimum of a
    concave function and are returned directly; otherwise the optimum sits
    on the rim and a per-arc golden-section search finds it.  N = 0 returns
    the centre by convention.
    """
    total = counts.total
    if total == 0:
        return CENTER
    freq = ProbTriple(counts.n1 / total, counts.n2 / total, counts.n3 / total)
    if is_physical(freq, tol=PHYS_TOL):
        return freq
    phi = _ml_boundary_phi(
        np.array([counts.n1]), np.array([counts.n2]), np.array([counts.n3]), config, tol
    )[0]
    return probs_from_state(BlochState(1.0, float(phi)), config)


def det_weight_mean_estimate(
    counts: CountVector, beta: float, quad: QuadratureSpec = DEFAULT_QUAD
) -> ProbTriple:
    """Mean estimator with the det(rho)^(beta-1) weight, by shared-grid quadrature."""
    return ProbTriple(*det_weight_ratios(counts, beta, quad))


@dataclass
class EstimateTable:
    """Estimates for every count vector of one total N, enumeration order."""

    total: int
    spec: EstimatorSpec
    probs: np.ndarray  # (C, 3)

    def lookup(self, counts: CountVector) -> ProbTriple:
        if counts.total != self.total:
            raise ValueError(f"table is for N={self.total}, got N={counts.total}")
        row = self.probs[count_index(counts.n1, counts.n2, self.total)]
        return ProbTriple(*row)


def _flat_index(n1, n2, total):
    return n1 * (total + 1) - n1 * (n1 - 1) // 2 + n2


def _mean_level_estimates(total: int, beta: float, engine: MomentEngine) -> np.ndarray:
    num = engine.m_beta_level(beta, total + 1)
    den = engine.m_beta_level(beta, total)
    n1, n2, _ = count_arrays(total)
    flat_num = np.stack(
        [
            num[_flat_index(n1 + 1, n2, total + 1)],
            num[_flat_index(n1, n2 + 1, total + 1)],
            num[_flat_index(n1, n2, total + 1)],
        ],
        axis=1,
    )
    flat_den = den[_flat_index(n1, n2, total)]
    p = flat_num / flat_den[:, None]
    if beta != int(beta) or beta == 0:
        p /= p.sum(axis=1, keepdims=True)
    # Interpolation may nudge a rim estimate just outside; clip the radius.
    pur = (p * p).sum(axis=1)
    bad = pur > 0.5 + 1e-12
    if np.any(bad):
        logger.warning(
            "%d mean estimates at N=%d, beta=%g clipped to the disk rim",
            int(bad.sum()),
            total,
            beta,
        )
        radius = np.sqrt(np.maximum(6.0 * pur[bad] - 2.0, 0.0))
        p[bad] = 1.0 / 3.0 + (p[bad] - 1.0 / 3.0) / radius[:, None]
    return p


def _classical_level_estimates(total: int) -> np.ndarray:
    n1, n2, n3 = count_arrays(total)
    if total == 0:
        return np.full((1, 3), 1.0 / 3.0)
    root = math.sqrt(total)
    a = 1.0 / (1.0 + root)
    b = 1.0 / (1.0 + 1.0 / root)
    return a / 3.0 + b * np.stack([n1, n2, n3], axis=1) / total


def _ml_level_estimates(total: int, config: TrineConfig, tol: float) -> np.ndarray:
    n1, n2, n3 = count_arrays(total)
    if total == 0:
        return np.full((1, 3), 1.0 / 3.0)
    freq = np.stack([n1, n2, n3], axis=1) / total
    pur = (freq * freq).sum(axis=1)
    out = freq.copy()
    boundary = pur > 0.5 + PHYS_TOL
    if np.any(boundary):
        phi = _ml_boundary_phi(n1[boundary], n2[boundary], n3[boundary], config, tol)
        for k, ak in enumerate(config.angles):
            out[boundary, k] = (1.0 + np.cos(phi - ak)) / 3.0
    return out


def build_estimate_table(
    total: int,
    spec: EstimatorSpec,
    engine: MomentEngine | None = None,
    config: TrineConfig = DEFAULT_TRINE,
    ml_tol: float = 1e-10,
) -> EstimateTable:
    """Estimates for all count vectors of sum ``total`` under one spec.

    Every entry except the uncorrected classical estimator is checked to be
    physical (tolerance 1e-9); a violation is a bug, not data.
    """
    if spec.kind == "mean-trine":
        if engine is None:
            raise ValueError("mean-trine tables need a MomentEngine")
        probs = _mean_level_estimates(total, spec.beta, engine)
    elif spec.kind == "classical-minimax":
        probs = _classical_level_estimates(total)
    elif spec.kind == "corrected-minimax":
        probs = _classical_level_estimates(total)
        pur = (probs * probs).sum(axis=1)
        radius = np.sqrt(np.maximum(6.0 * pur - 2.0, 0.0))
        safe = np.maximum(radius, 1.0)
        lam_c = np.where(
            (1.0 - spec.lam) * radius > 1.0, 1.0 - 1.0 / safe, spec.lam
        )[:, None]
        probs = (1.0 - lam_c) * probs + lam_c / 3.0
    elif spec.kind == "ml-trine":
        probs = _ml_level_estimates(total, config, ml_tol)
    elif spec.kind == "mean-det-weight":
        probs = det_weight_level_estimates(total, spec.beta)
    else:  # pragma: no cover
        raise AssertionError(spec.kind)

    if spec.kind != "classical-minimax":
        pur = (probs * probs).sum(axis=1)
        sums = probs.sum(axis=1)
        if (
            np.any(pur > 0.5 + PHYS_TOL)
            or np.any(np.abs(sums - 1.0) > PHYS_TOL)
            or np.any(probs < -PHYS_TOL)
        ):
            raise PhysicalityError(
                f"{spec.label()} produced non-physical entries at N={total}"
            )
    return EstimateTable(total, spec, probs)


def estimate(
    counts: CountVector,
    spec: EstimatorSpec,
    engine: MomentEngine | None = None,
    config: TrineConfig = DEFAULT_TRINE,
) -> ProbTriple:
    """Single-count dispatch across all estimator kinds."""
    if spec.kind == "mean-trine":
        if engine is None:
            raise ValueError("mean-trine needs a MomentEngine")
        return mean_estimate(counts, spec.beta, engine)
    if spec.kind == "classical-minimax":
        return classical_minimax_estimate(counts)
    if spec.kind == "corrected-minimax":
        return corrected_minimax_estimate(counts, spec.lam)
    if spec.kind == "ml-trine":
        return ml_estimate(counts, config)
    if spec.kind == "mean-det-weight":
        if counts.total == 0:
            return CENTER
        return det_weight_mean_estimate(counts, spec.beta, spec.quad)
    raise AssertionError(spec.kind)  # pragma: no cover
