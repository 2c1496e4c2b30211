"""Trine measurement geometry for a qubit confined to the x-z plane.

The trine is a symmetric three-outcome measurement whose outcome
probabilities for a planar qubit state with polar Bloch coordinates
(r, phi) are

    p_k = (1/3) * [1 + r*cos(phi - phi_k)],   phi_k = phi0 + (k-1)*2*pi/3.

Physical qubit states fill the disk r <= 1, equivalently the purity
constraint sum_k p_k^2 <= 1/2.  Points of the probability simplex outside
that disk are valid classical (3-sided die) states but not qubit states.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

TWO_PI = 2.0 * math.pi

DEFAULT_PHYS_TOL = 1e-9
# Below this radius the angle is meaningless; report phi = 0.
RADIUS_ANGLE_CUTOFF = 1e-14


@dataclass(frozen=True)
class TrineConfig:
    """Orientation of the trine in the plane (angle of the first outcome)."""

    phi0: float = 0.0

    @property
    def angles(self) -> tuple[float, float, float]:
        return (self.phi0, self.phi0 + TWO_PI / 3.0, self.phi0 + 2.0 * TWO_PI / 3.0)


DEFAULT_TRINE = TrineConfig()


@dataclass(frozen=True)
class BlochState:
    """Polar coordinates of a planar qubit state.

    Physical states have 0 <= r <= 1.  Radii above 1 are representable on
    purpose: probability triples outside the disk map to r > 1 and the
    estimator-correction logic needs that radius.
    """

    r: float
    phi: float

    def __post_init__(self):
        if not (self.r >= 0.0):
            raise ValueError(f"radius must be >= 0, got {self.r}")
        object.__setattr__(self, "phi", self.phi % TWO_PI)

    @property
    def is_physical(self) -> bool:
        return self.r <= 1.0 + DEFAULT_PHYS_TOL


@dataclass(frozen=True)
class ProbTriple:
    """A point of the probability simplex p1 + p2 + p3 = 1."""

    p1: float
    p2: float
    p3: float

    def as_tuple(self) -> tuple[float, float, float]:
        return (self.p1, self.p2, self.p3)

    def as_array(self) -> np.ndarray:
        return np.array([self.p1, self.p2, self.p3])


@dataclass(frozen=True)
class CountVector:
    """Click tallies (n1, n2, n3) from repeated trine measurements."""

    n1: int
    n2: int
    n3: int

    def __post_init__(self):
        for n in (self.n1, self.n2, self.n3):
            if n < 0 or n != int(n):
                raise ValueError(f"counts must be non-negative integers, got {self}")

    @property
    def total(self) -> int:
        return self.n1 + self.n2 + self.n3

    def as_tuple(self) -> tuple[int, int, int]:
        return (self.n1, self.n2, self.n3)


def probs_from_state(state: BlochState, config: TrineConfig = DEFAULT_TRINE) -> ProbTriple:
    """Outcome probabilities p_k = (1/3)[1 + r cos(phi - phi_k)]."""
    a1, a2, a3 = config.angles
    r, phi = state.r, state.phi
    return ProbTriple(
        (1.0 + r * math.cos(phi - a1)) / 3.0,
        (1.0 + r * math.cos(phi - a2)) / 3.0,
        (1.0 + r * math.cos(phi - a3)) / 3.0,
    )


def state_from_probs(probs: ProbTriple, config: TrineConfig = DEFAULT_TRINE) -> BlochState:
    """Invert the probability map: r cos(phi) = 2 sum_k p_k cos(phi_k), likewise sin.

    Unphysical inputs (outside the disk) come back with r > 1; the caller
    decides whether that is an error.
    """
    angles = config.angles
    p = probs.as_tuple()
    x = 2.0 * sum(pk * math.cos(ak) for pk, ak in zip(p, angles))
    y = 2.0 * sum(pk * math.sin(ak) for pk, ak in zip(p, angles))
    r = math.hypot(x, y)
    if r < RADIUS_ANGLE_CUTOFF:
        return BlochState(0.0, 0.0)
    return BlochState(r, math.atan2(y, x) % TWO_PI)


def purity(probs: ProbTriple) -> float:
    """sum_k p_k^2; between 1/3 (center) and 1 (simplex vertex)."""
    return probs.p1 ** 2 + probs.p2 ** 2 + probs.p3 ** 2


def is_physical(probs: ProbTriple, tol: float = DEFAULT_PHYS_TOL) -> bool:
    """True iff probs is a normalized distribution inside the qubit disk."""
    p = probs.as_tuple()
    if any(pk < -tol for pk in p):
        return False
    if abs(sum(p) - 1.0) > tol:
        return False
    return purity(probs) <= 0.5 + tol


def enumerate_counts(total: int) -> list[CountVector]:
    """All count vectors with the given total, lexicographic in (n1, n2)."""
    if total < 0:
        raise ValueError("total must be >= 0")
    return [
        CountVector(n1, n2, total - n1 - n2)
        for n1 in range(total + 1)
        for n2 in range(total - n1 + 1)
    ]


def count_arrays(total: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(n1, n2, n3) arrays in the same order as enumerate_counts."""
    n1 = np.repeat(np.arange(total + 1), np.arange(total + 1, 0, -1))
    n2 = np.concatenate([np.arange(total - a + 1) for a in range(total + 1)])
    return n1, n2, total - n1 - n2


def count_index(n1: int, n2: int, total: int) -> int:
    """Position of (n1, n2, total-n1-n2) in enumerate_counts(total)."""
    return n1 * (total + 1) - (n1 * (n1 - 1)) // 2 + n2


def log_multinomial_weight(counts: CountVector, probs: ProbTriple) -> float:
    """ln[ N!/(n1! n2! n3!) * p1^n1 p2^n2 p3^n3 ].

    Returns -inf when some p_k = 0 has n_k > 0; outcomes with p_k = 0 and
    n_k = 0 contribute nothing.
    """
    n = counts.as_tuple()
    total = counts.total
    out = math.lgamma(total + 1) - sum(math.lgamma(nk + 1) for nk in n)
    for nk, pk in zip(n, probs.as_tuple()):
        if nk == 0:
            continue
        if pk <= 0.0:
            return -math.inf
        out += nk * math.log(pk)
    return out
