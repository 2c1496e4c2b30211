"""Exact mean-squared-error evaluation of estimators over the state space.

The MSE at a state with outcome probabilities p is the exact average over
all count vectors of the squared Euclidean distance between p and the
estimate:

    MSE(p) = sum_n  N!/(n1! n2! n3!) p1^n1 p2^n2 p3^n3  * |p - phat(n)|^2.

Everything here enumerates; sampling lives in simulate.py.  Profiles over
the physical disk exploit the trine symmetry: the wedge phi in [0, pi/3]
(with reflection) generates the full circle, and on that wedge p1 is the
largest probability, so the multinomial weight factorizes as
p1^N x^(n2) y^(n3) with x = p2/p1 <= 1, y = p3/p1 <= 1.  That turns the
per-state sum over counts into two Vandermonde contractions, i.e. matrix
products, which is what makes the minimax sweeps affordable.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np
from scipy.special import gammaln

from .estimators import EstimateTable
from .geometry import (
    DEFAULT_TRINE,
    BlochState,
    ProbTriple,
    TrineConfig,
    count_arrays,
    probs_from_state,
)

FUNDAMENTAL_WEDGE = math.pi / 3.0

# Fixed batch size so the evaluation order (and hence every rounding) is
# identical no matter how many workers run the chunks.
CHUNK = 2048


@dataclass(frozen=True)
class StateGrid:
    """Evaluation grid on the fundamental wedge, plus local refinement."""

    n_radial: int = 64
    n_angular: int = 96
    refine_levels: int = 2
    refine_points: int = 11

    def nodes(self):
        r = np.linspace(0.0, 1.0, self.n_radial)
        phi = np.linspace(0.0, FUNDAMENTAL_WEDGE, self.n_angular)
        return r, phi


DEFAULT_GRID = StateGrid()


@dataclass
class RiskProfile:
    """MSE over a state grid with refined extremes."""

    total: int
    estimator_label: str
    r_nodes: np.ndarray
    phi_nodes: np.ndarray
    values: np.ndarray  # (n_radial, n_angular)
    max_mse: float
    argmax: tuple[float, float]  # (r, phi)
    min_mse: float
    argmin: tuple[float, float]
    evaluations: int

    def summary_dict(self) -> dict:
        return {
            "N": self.total,
            "estimator": self.estimator_label,
            "max": self.max_mse,
            "argmax_r": self.argmax[0],
            "argmax_phi": self.argmax[1],
            "min": self.min_mse,
            "argmin_r": self.argmin[0],
            "argmin_phi": self.argmin[1],
        }


def _log_multinomial_coeffs(total: int) -> np.ndarray:
    n1, n2, n3 = count_arrays(total)
    return (
        gammaln(total + 1)
        - gammaln(n1 + 1.0)
        - gammaln(n2 + 1.0)
        - gammaln(n3 + 1.0)
    )


def mse_at_probs(probs: ProbTriple, table: EstimateTable) -> float:
    """Exact MSE at an arbitrary probability triple (disk or die state)."""
    total = table.total
    n1, n2, n3 = count_arrays(total)
    logw = _log_multinomial_coeffs(total)
    p = probs.as_tuple()
    with np.errstate(divide="ignore", invalid="ignore"):
        for nk, pk in zip((n1, n2, n3), p):
            logw = logw + np.where(nk > 0, nk * np.log(pk), 0.0)
    w = np.exp(logw)
    assert abs(w.sum() - 1.0) < 1e-10, "multinomial weights must sum to 1"
    err = table.probs - np.array(p)
    return float(w @ (err * err).sum(axis=1))


def mse_at_state(
    state: BlochState, table: EstimateTable, config: TrineConfig = DEFAULT_TRINE
) -> float:
    return mse_at_probs(probs_from_state(state, config), table)


def classical_mse_closed_form(beta: float, p_sq: float, total: int, sides: int = 3) -> float:
    """MSE of the die mean estimator: [(b^2 K^2 - N) p^2 + (N - b^2 K)] / (N + K b)^2."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    k = sides
    return ((beta**2 * k**2 - total) * p_sq + (total - beta**2 * k)) / (
        total + k * beta
    ) ** 2


def _estimator_count_functions(table: EstimateTable):
    """Per-count data entering the MSE: the three estimates and their norm."""
    phat = table.probs
    return np.concatenate([phat, (phat * phat).sum(axis=1, keepdims=True)], axis=1)


def _batch_mse_wedge(p_states: np.ndarray, table: EstimateTable, workers: int = 1):
    """MSE at states where p1 is the largest probability, vectorized.

    p_states has shape (S, 3).  Factorizes the multinomial weight through
    x = p2/p1 and y = p3/p1 and contracts with Vandermonde matrices; one
    BLAS product per fixed-size chunk of states.
    """
    total = table.total
    n1, n2, n3 = count_arrays(total)
    coeff = np.exp(_log_multinomial_coeffs(total))
    f = _estimator_count_functions(table)  # (C, 4)

    # A[b, c, j] = multinomial(n) f_j(n) at n2 = b, n3 = c.
    a = np.zeros((total + 1, total + 1, 4))
    a[n2, n3] = coeff[:, None] * f

    out = np.empty(len(p_states))
    powers = np.arange(total + 1)

    def run_chunk(start):
        stop = min(start + CHUNK, len(p_states))
        p1 = p_states[start:stop, 0]
        x = p_states[start:stop, 1] / p1
        y = p_states[start:stop, 2] / p1
        xv = x[:, None] ** powers
        yv = y[:, None] ** powers
        # g[b, j, s] = sum_c A[b, c, j] y_s^c ; e[s, j] = sum_b x_s^b g[b, j, s]
        g = np.tensordot(a, yv, axes=([1], [1]))
        e = np.einsum("sb,bjs->sj", xv, g) * (p1 ** total)[:, None]
        p = p_states[start:stop]
        out[start:stop] = (
            (p * p).sum(axis=1) - 2.0 * (p * e[:, :3]).sum(axis=1) + e[:, 3]
        )
        return None

    starts = range(0, len(p_states), CHUNK)
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            list(pool.map(run_chunk, starts))
    else:
        for s in starts:
            run_chunk(s)
    return out


def _wedge_probs(r: np.ndarray, phi: np.ndarray) -> np.ndarray:
    """Outcome probabilities for flattened (r, phi) wedge coordinates."""
    out = np.empty((len(r), 3))
    out[:, 0] = (1.0 + r * np.cos(phi)) / 3.0
    out[:, 1] = (1.0 + r * np.cos(phi - 2.0 * math.pi / 3.0)) / 3.0
    out[:, 2] = (1.0 + r * np.cos(phi - 4.0 * math.pi / 3.0)) / 3.0
    return out


def _refine(table, r0, phi0, dr, dphi, points, workers):
    """Evaluate a local window around a provisional extreme; returns nodes+values."""
    r_lo, r_hi = max(0.0, r0 - dr), min(1.0, r0 + dr)
    p_lo, p_hi = max(0.0, phi0 - dphi), min(FUNDAMENTAL_WEDGE, phi0 + dphi)
    r = np.linspace(r_lo, r_hi, points)
    phi = np.linspace(p_lo, p_hi, points)
    rr, pp = np.meshgrid(r, phi, indexing="ij")
    flat_r, flat_p = rr.ravel(), pp.ravel()
    vals = _batch_mse_wedge(_wedge_probs(flat_r, flat_p), table, workers)
    return flat_r, flat_p, vals


def mse_profile(
    grid: StateGrid, table: EstimateTable, workers: int = 1
) -> RiskProfile:
    """Exact MSE over the fundamental wedge with refined extremes.

    Trine covariance and reflection symmetry make the wedge profile
    determine the full circle.  The reported extremes are the best found
    after ``refine_levels`` local passes and are never worse than the
    coarse-grid extremes.
    """
    r_nodes, phi_nodes = grid.nodes()
    rr, pp = np.meshgrid(r_nodes, phi_nodes, indexing="ij")
    flat_r, flat_p = rr.ravel(), pp.ravel()
    values = _batch_mse_wedge(_wedge_probs(flat_r, flat_p), table, workers)
    evaluations = len(values)

    def refined_extreme(sign):
        idx = int(np.argmax(sign * values))
        best = (values[idx], flat_r[idx], flat_p[idx])
        dr = (r_nodes[1] - r_nodes[0]) if len(r_nodes) > 1 else 0.5
        dphi = (phi_nodes[1] - phi_nodes[0]) if len(phi_nodes) > 1 else 0.1
        nonlocal evaluations
        for _ in range(grid.refine_levels):
            fr, fp, fv = _refine(
                table, best[1], best[2], dr, dphi, grid.refine_points, workers
            )
            evaluations += len(fv)
            j = int(np.argmax(sign * fv))
            if sign * fv[j] > sign * best[0]:
                best = (fv[j], fr[j], fp[j])
            dr /= grid.refine_points - 1
            dphi /= grid.refine_points - 1
        return best

    vmax, rmax, pmax = refined_extreme(+1.0)
    vmin, rmin, pmin = refined_extreme(-1.0)
    return RiskProfile(
        total=table.total,
        estimator_label=table.spec.label(),
        r_nodes=r_nodes,
        phi_nodes=phi_nodes,
        values=values.reshape(len(r_nodes), len(phi_nodes)),
        max_mse=float(vmax),
        argmax=(float(rmax), float(pmax)),
        min_mse=float(vmin),
        argmin=(float(rmin), float(pmin)),
        evaluations=evaluations,
    )


def die_state_lattice(resolution: int) -> np.ndarray:
    """Barycentric lattice over the whole probability simplex, (S, 3)."""
    pts = [
        (i / resolution, j / resolution, (resolution - i - j) / resolution)
        for i in range(resolution + 1)
        for j in range(resolution + 1 - i)
    ]
    return np.array(pts)


def mse_over_die_states(states: np.ndarray, table: EstimateTable) -> np.ndarray:
    """Exact MSE at arbitrary simplex states (no disk constraint assumed)."""
    return np.array([mse_at_probs(ProbTriple(*s), table) for s in states])


def write_profile_csv(path, profile: RiskProfile, param: float | None = None):
    """CSV schema: N, estimator, beta_or_lambda, r, phi, mse."""
    with open(path, "w") as fh:
        fh.write("N,estimator,beta_or_lambda,r,phi,mse\n")
        param_s = "" if param is None else f"{param:.9g}"
        for i, r in enumerate(profile.r_nodes):
            for j, phi in enumerate(profile.phi_nodes):
                fh.write(
                    f"{profile.total},{profile.estimator_label},{param_s},"
                    f"{r:.9g},{phi:.9g},{profile.values[i, j]:.12g}\n"
                )


def write_profile_summary(path, profile: RiskProfile):
    with open(path, "w") as fh:
        json.dump(profile.summary_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
