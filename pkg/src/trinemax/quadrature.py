"""Numerical integration of trine moment integrals over the unit disk.

Two routes are provided.

``beta0_moment`` evaluates the weight-exponent-zero moments

    M_0(n) = 2 * int_0^1 dr r int (dphi/2pi) prod_k p_k(r, phi)^(n_k - 1)

by writing prod p_k^(n_k-1) = 27 * prod p_k^(n_k) / (A + B cos 3phi) with
A = 1 - (3/4) r^2, B = (1/4) r^3, doing the angular integral exactly
through the Fourier coefficients of the trigonometric polynomial
prod p_k^(n_k) (computed by FFT), and integrating the remaining smooth
radial profile with Gauss-Legendre after the substitution r = 1 - s^2.
The substitution removes the 1/sqrt(1 - r) behaviour of the angular
average at the rim, so the radial integrand is analytic.

``moment_oracle`` is a direct two-dimensional product quadrature of the
defining integral, deliberately independent of both the recurrence tables
and the Fourier reduction.  It doubles as the computational path for
determinant-weighted moments.  Integrands with negative exponents are
singular at the three rim points where one p_k vanishes; those runs use
panels graded geometrically toward the singular angles and toward the rim.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi as _roots_jacobi
from scipy.special import roots_legendre as _roots_legendre

from .geometry import CountVector


@lru_cache(maxsize=256)
def roots_legendre(n):
    return _roots_legendre(n)


@lru_cache(maxsize=256)
def roots_jacobi(n, alpha, beta):
    return _roots_jacobi(n, alpha, beta)

TWO_PI = 2.0 * math.pi
# Rim angles where p_1, p_2, p_3 vanish (orientation phi0 = 0).
SINGULAR_ANGLES = (math.pi, 5.0 * math.pi / 3.0, math.pi / 3.0)
TRINE_ANGLES = (0.0, TWO_PI / 3.0, 2.0 * TWO_PI / 3.0)


class ConvergenceError(RuntimeError):
    """Raised when a quadrature fails to meet its tolerance."""


@dataclass(frozen=True)
class QuadratureSpec:
    """Tolerance and refinement budget for the numerical moment routes."""

    method: str = "auto"
    rtol: float = 1e-10
    max_rounds: int = 6

    def __post_init__(self):
        if self.rtol <= 0:
            raise ValueError("rtol must be positive")


DEFAULT_QUAD = QuadratureSpec()


def _power_product(r, phi, exponents):
    """prod_k p_k(r, phi)^(g_k) on the outer grid r x phi; needs p_k > 0."""
    acc = None
    for gk, ak in zip(exponents, TRINE_ANGLES):
        if gk == 0:
            continue
        pk = (1.0 + np.multiply.outer(r, np.cos(phi - ak))) / 3.0
        term = gk * np.log(pk)
        acc = term if acc is None else acc + term
    if acc is None:
        return np.ones((np.size(r), np.size(phi)))
    return np.exp(acc)


def _beta0_pass(counts, n_radial):
    n = counts.as_tuple()
    total = counts.total
    n_phi = max(16, 2 * total + 4)
    j_max = total // 3

    x, w = roots_legendre(n_radial)
    s = 0.5 * (x + 1.0)
    ws = 0.5 * w
    r = 1.0 - s * s
    r2 = r * r
    # 1 - r^2 written via s to stay accurate at the rim.
    one_minus_r2 = s * s * (2.0 - s * s)

    a = 1.0 - 0.75 * r2
    b = 0.25 * r2 * r
    root = np.sqrt(one_minus_r2) * (1.0 - 0.25 * r2)  # sqrt(A^2 - B^2)
    q = -b / (a + root)

    phi = TWO_PI * np.arange(n_phi) / n_phi
    coeff = np.fft.rfft(_power_product(r, phi, n), axis=1) / n_phi

    # Angular integral: [f0 + 2 sum_j Re(f_{3j}) q^j] / sqrt(A^2 - B^2).
    series = np.zeros_like(r)
    for j in range(j_max, 0, -1):
        series = (series + 2.0 * coeff[:, 3 * j].real) * q
    series += coeff[:, 0].real

    # dr = -2s ds; the 1/s of 1/sqrt(A^2-B^2) cancels against the Jacobian.
    integrand = 2.0 * r * series / (np.sqrt(2.0 - s * s) * (1.0 - 0.25 * r2))
    return 54.0 * float(np.dot(ws, integrand))


def beta0_moment(counts: CountVector, spec: QuadratureSpec = DEFAULT_QUAD) -> float:
    """M_0(n) by exact angular reduction plus adaptive radial quadrature."""
    n_radial = max(48, counts.total // 2 + 24)
    prev = _beta0_pass(counts, n_radial)
    for _ in range(spec.max_rounds):
        n_radial = 2 * n_radial
        cur = _beta0_pass(counts, n_radial)
        if abs(cur - prev) <= spec.rtol * abs(cur):
            return cur
        prev = cur
    raise ConvergenceError(
        f"radial quadrature did not reach rtol={spec.rtol} for M_0{counts.as_tuple()}"
    )


def _beta0_edge_pass(total, n_radial):
    """M_0(a, total-a, 0) for a = 0..total in one batch.

    Same reduction as _beta0_pass; the whole one-sided edge of the count
    lattice shares its radial grid, and successive integrands differ by the
    factor p1/p2, so the batch costs one running product plus one FFT per a.
    """
    n_phi = max(16, 2 * total + 4)
    j_max = total // 3

    x, w = roots_legendre(n_radial)
    s = 0.5 * (x + 1.0)
    ws = 0.5 * w
    r = 1.0 - s * s
    r2 = r * r
    one_minus_r2 = s * s * (2.0 - s * s)
    a_coef = 1.0 - 0.75 * r2
    b_coef = 0.25 * r2 * r
    root = np.sqrt(one_minus_r2) * (1.0 - 0.25 * r2)
    q = -b_coef / (a_coef + root)
    radial = 2.0 * r / (np.sqrt(2.0 - s * s) * (1.0 - 0.25 * r2))

    phi = TWO_PI * np.arange(n_phi) / n_phi
    logp1 = np.log((1.0 + np.multiply.outer(r, np.cos(phi))) / 3.0)
    logp2 = np.log(
        (1.0 + np.multiply.outer(r, np.cos(phi - TRINE_ANGLES[1]))) / 3.0
    )

    qpow = q[:, None] ** np.arange(1, j_max + 1) if j_max else None
    out = np.empty(total + 1)
    for a in range(total // 2, total + 1):
        # Direct exponentiation per count: a running product p1/p2 would
        # pass through p2^total, which underflows near the p2 rim zero.
        values = np.exp(a * logp1 + (total - a) * logp2)
        coeff = np.fft.rfft(values, axis=1) / n_phi
        series = coeff[:, 0].real.copy()
        if j_max:
            series += 2.0 * np.einsum("ij,ij->i", coeff[:, 3 : 3 * j_max + 1 : 3].real, qpow)
        out[a] = 54.0 * float(np.dot(ws, radial * series))
    out[: total // 2] = out[total : total - total // 2 : -1]
    return out


def beta0_edge_values(total: int, spec: QuadratureSpec = DEFAULT_QUAD) -> np.ndarray:
    """M_0(a, total-a, 0) for all a, with the adaptive radial refinement.

    Permutation symmetry makes this one edge cover every boundary count
    vector of the total.
    """
    n_radial = max(48, total // 2 + 24)
    prev = _beta0_edge_pass(total, n_radial)
    for _ in range(spec.max_rounds):
        n_radial = 2 * n_radial
        cur = _beta0_edge_pass(total, n_radial)
        if np.all(np.abs(cur - prev) <= spec.rtol * np.abs(cur)):
            return cur
        prev = cur
    raise ConvergenceError(
        f"edge quadrature did not reach rtol={spec.rtol} at total {total}"
    )


def _graded_edges(lo, hi, depth):
    """Panel edges on [lo, hi] graded geometrically toward both endpoints."""
    half = 0.5 * (hi - lo)
    left = lo + half * 0.5 ** np.arange(depth, 0, -1)
    right = hi - half * 0.5 ** np.arange(2, depth + 1)
    return np.concatenate(([lo], left, right, [hi]))


def _panel_rule(edges, order):
    x, w = roots_legendre(order)
    lo = edges[:-1]
    width = np.diff(edges)
    nodes = (lo[:, None] + 0.5 * width[:, None] * (x + 1.0)).ravel()
    weights = (0.5 * width[:, None] * w).ravel()
    return nodes, weights


GRADING_DEPTH = 40


def _power_product_stable(s, phi, exponents):
    """Same product with r = 1 - s^2 and the cancellation-free rim form

        3 p_k = (1 - r) + r (1 + cos d) = s^2 + 2 (1 - s^2) cos^2(d/2),

    a sum of non-negative terms, so p_k stays positive arbitrarily close to
    the rim zeros and fractional negative powers remain finite.
    """
    s2 = s * s
    acc = None
    for gk, ak in zip(exponents, TRINE_ANGLES):
        if gk == 0:
            continue
        half_sq = np.cos((phi - ak) / 2.0) ** 2
        pk = (s2[:, None] + 2.0 * np.multiply.outer(1.0 - s2, half_sq)) / 3.0
        term = gk * np.log(pk)
        acc = term if acc is None else acc + term
    if acc is None:
        return np.ones((np.size(s), np.size(phi)))
    return np.exp(acc)


def _singular_pass(exponents, depth, order):
    # Radial direction: r = 1 - s^2 with panels graded toward the rim s = 0.
    s_edges = np.concatenate(([0.0], 0.5 ** np.arange(depth, -1.0, -1.0)))
    s_nodes, s_w = _panel_rule(s_edges, order)
    r = 1.0 - s_nodes * s_nodes

    # Angular direction: panels between singular angles, graded toward them.
    base = sorted(SINGULAR_ANGLES)
    spans = list(zip(base, base[1:] + [base[0] + TWO_PI]))
    phi_nodes = []
    phi_w = []
    for lo, hi in spans:
        nodes, w = _panel_rule(_graded_edges(lo, hi, depth), order)
        phi_nodes.append(nodes)
        phi_w.append(w)
    phi = np.concatenate(phi_nodes)
    wphi = np.concatenate(phi_w) / TWO_PI

    values = _power_product_stable(s_nodes, phi, exponents)
    radial_factor = 2.0 * (2.0 * s_nodes * r) * s_w  # dr = 2 s ds, prefactor 2
    return float(radial_factor @ values @ wphi)


def _poly_pass(exponents, n_radial, n_phi):
    x, w = roots_legendre(n_radial)
    r = 0.5 * (x + 1.0)
    phi = TWO_PI * (np.arange(n_phi) + 0.5) / n_phi
    values = _power_product(r, phi, exponents)
    return float((2.0 * r * 0.5 * w) @ values.mean(axis=1))


def _det_rho_pass(counts, beta, n_radial, n_phi):
    # Fold (1 - r)^(beta-1) into a Gauss-Jacobi rule on [0, 1].
    x, w = roots_jacobi(n_radial, beta - 1.0, 0.0)
    r = 0.5 * (x + 1.0)
    wr = w * 0.5 ** beta  # dr = dx/2 and (1 - x)^(b-1) = (2(1-r))^(b-1)
    phi = TWO_PI * (np.arange(n_phi) + 0.5) / n_phi
    values = _power_product(r, phi, counts.as_tuple())
    rest = ((1.0 + r) / 4.0) ** (beta - 1.0)
    return float((2.0 * r * rest * wr) @ values.mean(axis=1))


def moment_oracle(
    beta: float,
    counts: CountVector,
    weight: str = "p-product",
    spec: QuadratureSpec = DEFAULT_QUAD,
) -> float:
    """Direct 2D quadrature of 2 int r dr int (dphi/2pi) f * prod p_k^(n_k).

    ``weight="p-product"`` uses f = (p1 p2 p3)^(beta-1), so the integrand
    carries exponents n_k + beta - 1; ``weight="det-rho"`` uses
    f = [(1 - r^2)/4]^(beta-1), the qubit determinant expressed through the
    Bloch radius.
    """
    if weight == "det-rho":
        if beta <= 0:
            raise ValueError("det-rho weight requires beta > 0")
        total = counts.total
        n_radial = total // 2 + 16
        n_phi = 2 * total + 16
        prev = _det_rho_pass(counts, beta, n_radial, n_phi)
        for _ in range(spec.max_rounds):
            n_radial, n_phi = 2 * n_radial, 2 * n_phi
            cur = _det_rho_pass(counts, beta, n_radial, n_phi)
            if abs(cur - prev) <= spec.rtol * abs(cur):
                return cur
            prev = cur
        raise ConvergenceError(f"det-rho quadrature stalled for {counts.as_tuple()}")
    if weight != "p-product":
        raise ValueError(f"unknown weight {weight!r}")

    if beta < 0:
        raise ValueError("p-product weight requires beta >= 0")
    exponents = tuple(nk + beta - 1.0 for nk in counts.as_tuple())
    if all(g == round(g) for g in exponents) and min(exponents) >= 0:
        exponents = tuple(int(round(g)) for g in exponents)
        deg = sum(exponents)
        n_radial, n_phi = deg // 2 + 8, deg + 8
        prev = _poly_pass(exponents, n_radial, n_phi)
        cur = _poly_pass(exponents, 2 * n_radial, 2 * n_phi)
        if abs(cur - prev) <= spec.rtol * abs(cur):
            return cur
        raise ConvergenceError(f"polynomial quadrature inconsistent for {counts.as_tuple()}")

    order = 8
    prev = _singular_pass(exponents, GRADING_DEPTH, order)
    for _ in range(spec.max_rounds):
        order += 6
        cur = _singular_pass(exponents, GRADING_DEPTH, order)
        if abs(cur - prev) <= spec.rtol * max(abs(cur), 1e-300):
            return cur
        prev = cur
    raise ConvergenceError(
        f"graded quadrature did not reach rtol={spec.rtol} for exponents {exponents}"
    )


def det_weight_grid(total: int, beta: float, pad: int = 8):
    """Shared (r, phi) rule for determinant-weighted moment ratios at one N."""
    n_radial = total // 2 + 16 + pad
    n_phi = 2 * total + 16 + 2 * pad
    x, w = roots_jacobi(n_radial, beta - 1.0, 0.0)
    r = 0.5 * (x + 1.0)
    wr = w * 0.5 ** beta * 2.0 * r * ((1.0 + r) / 4.0) ** (beta - 1.0)
    phi = TWO_PI * (np.arange(n_phi) + 0.5) / n_phi
    p = np.stack(
        [(1.0 + np.multiply.outer(r, np.cos(phi - ak))) / 3.0 for ak in TRINE_ANGLES]
    )
    cell_w = np.multiply.outer(wr, np.full(n_phi, 1.0 / n_phi))
    return p, cell_w


def det_weight_ratios(
    counts: CountVector, beta: float, spec: QuadratureSpec = DEFAULT_QUAD
) -> np.ndarray:
    """Estimated probabilities as ratios of determinant-weighted moments.

    Numerators and denominator share one grid, so the three ratios sum to 1
    up to rounding regardless of the quadrature resolution.
    """
    if beta <= 0:
        raise ValueError("det-rho weight requires beta > 0")
    n = counts.as_tuple()

    def ratios(pad):
        p, cell_w = det_weight_grid(counts.total, beta, pad)
        prod = cell_w.copy()
        for nk, pk in zip(n, p):
            if nk:
                prod *= pk ** nk
        denom = float(prod.sum())
        return np.array([float((prod * p[k]).sum()) / denom for k in range(3)])

    prev = ratios(8)
    for round_ in range(spec.max_rounds):
        cur = ratios(8 + 12 * (round_ + 1))
        if np.max(np.abs(cur - prev)) <= max(spec.rtol, 1e-12):
            return cur
        prev = cur
    raise ConvergenceError(f"det-weight ratios stalled for {counts.as_tuple()}")


def det_weight_level_estimates(total: int, beta: float, pad: int = 20) -> np.ndarray:
    """det-weight estimates for every count vector of one total, shape (C, 3).

    Walks the count lattice in enumeration order keeping running products of
    p-powers, so each count costs a handful of grid-sized multiplies.
    """
    p, cell_w = det_weight_grid(total + 1, beta, pad)
    p1, p2, p3 = p
    w = cell_w
    wp = [cell_w * pk for pk in p]
    ratio23 = p2 / p3

    out = np.empty(((total + 1) * (total + 2) // 2, 3))
    pow1 = np.ones_like(p1)
    idx = 0
    for n1 in range(total + 1):
        if n1 > 0:
            pow1 = pow1 * p1
        rest = pow1 * p3 ** (total - n1)
        for n2 in range(total - n1 + 1):
            if n2 > 0:
                rest = rest * ratio23
            denom = float((w * rest).sum())
            for k in range(3):
                out[idx, k] = float((wp[k] * rest).sum()) / denom
            idx += 1
    return out
