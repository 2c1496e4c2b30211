"""Exact and floating-point moment tables for the trine weight integrals.

The central objects are the disk moments and rim (surface) moments

    M(n1,n2,n3) = 2 int_0^1 dr r int (dphi/2pi) p1^n1 p2^n2 p3^n3,
    L(n1,n2,n3) =              int (dphi/2pi) p1^n1 p2^n2 p3^n3 | r=1,

with p_k = (1/3)[1 + r cos(phi - phi_k)] and phi0 = 0.  Both obey linear
recurrences in the total click number T = n1+n2+n3:

    3(T+1) L(n1+1,n2,n3) = (T+1+n1) L(n) + n2 L(n1+1,n2-1,n3)
                           + n3 L(n1+1,n2,n3-1)
                           - (1/2) n2 L(n1,n2-1,n3) - (1/2) n3 L(n1,n2,n3-1)
    (T+2) M(n) - 2 L(n)  = (1/3) sum_k n_k M(n - e_k)

seeded by M(0,0,0) = L(0,0,0) = 1.  Scaling by c_T = 6^T T! (for L) and
d_T = 6^T (T+2)!/2 (for M) clears every denominator, so the tables are
built in plain integer arithmetic and exactness costs nothing but bigint
adds.  Mean-estimator weights with integer exponent offsets beta >= 1
reduce to these tables through M_beta(n) = M_1(n + beta - 1); beta = 0
needs quadrature on the boundary of the count lattice (see quadrature.py)
and non-integer beta is filled in by geometric interpolation between the
neighbouring integer tables.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

from .geometry import CountVector, count_arrays, count_index, enumerate_counts
from .quadrature import DEFAULT_QUAD, QuadratureSpec, beta0_edge_values, beta0_moment


class CapacityError(RuntimeError):
    """Requested table size exceeds the configured memory budget."""


def level_size(total: int) -> int:
    return (total + 1) * (total + 2) // 2


def _ratio_to_float(num: int, den: int) -> float:
    """Correctly-rounded-to-~0.5ulp float of num/den without overflow."""
    if num == 0:
        return 0.0
    shift = den.bit_length() - num.bit_length() + 64
    if shift >= 0:
        q = (num << shift) // den
    else:
        q = num // (den << -shift)
    return math.ldexp(q, -shift)


def _next_scaled_l(total, lt, lt1):
    """Scaled-integer rim moments at total+1 from levels total and total-1."""
    out = []
    append = out.append
    six_t = 6 * total
    # Row n1 = 0; the (0,0,T+1) seed uses the third-coordinate recurrence.
    append(2 * (2 * total + 1) * lt[0])
    for j in range(1, total + 2):
        k = total + 1 - j
        v = 2 * (total + j) * lt[j - 1]
        if k:
            v += 2 * k * lt[j] - six_t * k * lt1[j - 1]
        append(v)
    # Rows n1 >= 1 use the first-coordinate recurrence.
    for i in range(1, total + 2):
        off_im1 = count_index(i - 1, 0, total)
        off_i = count_index(i, 0, total) if i <= total else 0
        off1_im1 = count_index(i - 1, 0, total - 1) if total else 0
        for j in range(total + 2 - i):
            k = total + 1 - i - j
            v = 2 * (total + i) * lt[off_im1 + j]
            if j:
                v += 2 * j * lt[off_i + j - 1] - six_t * j * lt1[off1_im1 + j - 1]
            if k:
                v += 2 * k * lt[off_i + j] - six_t * k * lt1[off1_im1 + j]
            append(v)
    return out


def _scaled_m_level(total, lt, mt1):
    """Scaled-integer disk moments at one total from L there and M below."""
    if total == 0:
        return [1]
    out = []
    append = out.append
    idx = 0
    for i in range(total + 1):
        off_im1 = count_index(i - 1, 0, total - 1) if i else 0
        off_i = count_index(i, 0, total - 1) if i <= total - 1 else 0
        for j in range(total + 1 - i):
            k = total - i - j
            acc = 0
            if i:
                acc += i * mt1[off_im1 + j]
            if j:
                acc += j * mt1[off_i + j - 1]
            if k:
                acc += k * mt1[off_i + j]
            append((total + 1) * lt[idx] + 2 * acc)
            idx += 1
    return out


def iter_scaled_levels(n_max: int):
    """Yield (total, scaled_L_level, scaled_M_level) for totals 0..n_max.

    Levels are flat lists in enumerate_counts order; the scalings are
    c_T = 6^T T! for L and d_T = 6^T (T+2)!/2 for M.
    """
    lt, lt1 = [1], None
    mt = [1]
    yield 0, lt, mt
    for total in range(n_max):
        nxt = _next_scaled_l(total, lt, lt1 if lt1 is not None else [])
        lt1, lt = lt, nxt
        mt = _scaled_m_level(total + 1, lt, mt)
        yield total + 1, lt, mt


def l_denominator(total: int) -> int:
    return 6 ** total * math.factorial(total)

def m_denominator(total: int) -> int:
    return 6 ** total * math.factorial(total + 2) // 2


# Closed forms for special moment families, exact.

def special_m_n00(n: int) -> Fraction:
    acc = 1 + sum(
        Fraction(math.comb(2 * k, k) * (k + 1), 2 ** k) for k in range(1, n + 1)
    )
    return 2 * Fraction(1, 3) ** n * Fraction(1, (n + 1) * (n + 2)) * acc

def special_l_n00(n: int) -> Fraction:
    return Fraction(math.comb(2 * n, n), 6 ** n)

def special_l_n10(n: int) -> Fraction:
    return Fraction(math.comb(2 * n, n) * (n + 2), 6 ** (n + 1) * (n + 1))

def special_l_n20(n: int) -> Fraction:
    bracket = 1 + Fraction(2 * (4 * n + 5), (n + 1) * (n + 2))
    return Fraction(math.comb(2 * n, n), 6 ** (n + 2)) * bracket

def special_l_nnn(n: int) -> Fraction:
    if n == 0:
        return Fraction(1)
    return 2 * Fraction(
        math.factorial(2 * n - 1), 216 ** n * math.factorial(n - 1) * math.factorial(n)
    )


_SPECIAL_FORMS = {
    "M(n,0,0)": (special_m_n00, lambda n: (n, 0, 0), "m"),
    "L(n,0,0)": (special_l_n00, lambda n: (n, 0, 0), "l"),
    "L(n,1,0)": (special_l_n10, lambda n: (n, 1, 0), "l"),
    "L(n,2,0)": (special_l_n20, lambda n: (n, 2, 0), "l"),
    "L(n,n,n)": (special_l_nnn, lambda n: (n, n, n), "l"),
}


def special_closed_form(kind: str, n: int) -> Fraction:
    """Evaluate one of the five special-case closed forms exactly."""
    if kind not in _SPECIAL_FORMS:
        raise ValueError(f"unsupported special form {kind!r}")
    if n < 0:
        raise ValueError("n must be >= 0")
    return _SPECIAL_FORMS[kind][0](n)


def classical_moment(beta: float, counts: CountVector, sides: int = 3) -> float:
    """Moments of the flat-simplex (K-sided die) problem.

    2 * prod_k Gamma(n_k + beta) / Gamma(N + K beta); the denominator makes
    the adjacent-moment ratio equal (n_k + beta)/(N + K beta).
    """
    if beta <= 0:
        raise ValueError("classical moments need beta > 0")
    n = counts.as_tuple()
    if sides != len(n):
        raise ValueError("counts length must match the number of sides")
    log = sum(math.lgamma(nk + beta) for nk in n)
    log -= math.lgamma(counts.total + sides * beta)
    return 2.0 * math.exp(log)


@dataclass
class StructureReport:
    """Outcome of the exact zero-tolerance structure verification."""

    n_max: int
    entries_checked: int
    sum_rule_checked: int
    specials_checked: int
    failures: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def verify_exact_structure(n_max: int, specials_to: int = 50) -> StructureReport:
    """Stream the exact integer tables and check their algebraic structure.

    Checks, all in exact integer arithmetic with zero tolerance:
      * permutation symmetry of every L and M level up to n_max,
      * the sum rule  sum_k M(n + e_k) = M(n)  for totals < n_max,
      * the five special-case closed forms against table entries.
    Only a three-level window is held in memory.
    """
    report = StructureReport(n_max, 0, 0, 0)
    specials = {}
    for kind, (form, coords, which) in _SPECIAL_FORMS.items():
        for n in range(specials_to + 1):
            c = coords(n)
            if sum(c) <= n_max:
                specials.setdefault((which, c), []).append((kind, n))

    prev_m = None
    prev_total = -1
    for total, lt, mt in iter_scaled_levels(n_max):
        # Permutation symmetry: the transpositions (n1 n2) and (n2 n3)
        # generate the full group.
        for i in range(total + 1):
            for j in range(total + 1 - i):
                k = total - i - j
                idx = count_index(i, j, total)
                for arr in (lt, mt):
                    if arr[idx] != arr[count_index(j, i, total)] or arr[idx] != arr[
                        count_index(i, k, total)
                    ]:
                        report.failures.append(("symmetry", (i, j, k)))
                report.entries_checked += 1
        # Sum rule against the previous level, as an integer identity:
        # sum of scaled M(n+e_k) equals 6(T+3) * scaled M(n).
        if prev_m is not None:
            t = prev_total
            factor = 6 * (t + 3)
            idx = 0
            for i in range(t + 1):
                row_up = count_index(i + 1, 0, t + 1)
                row_same = count_index(i, 0, t + 1)
                for j in range(t + 1 - i):
                    lhs = mt[row_up + j] + mt[row_same + j + 1] + mt[row_same + j]
                    if lhs != factor * prev_m[idx]:
                        report.failures.append(("sum-rule", (i, j, t - i - j)))
                    report.sum_rule_checked += 1
                    idx += 1
        # Special closed forms at this level.
        lden = mden = None
        for (which, c), kinds in specials.items():
            if sum(c) != total:
                continue
            arr = lt if which == "l" else mt
            if which == "l":
                lden = lden or l_denominator(total)
                value = Fraction(arr[count_index(c[0], c[1], total)], lden)
            else:
                mden = mden or m_denominator(total)
                value = Fraction(arr[count_index(c[0], c[1], total)], mden)
            for kind, n in kinds:
                if value != special_closed_form(kind, n):
                    report.failures.append(("special", kind, n))
                report.specials_checked += 1
        prev_m = mt
        prev_total = total
    return report


def _top64(x: int) -> tuple[int, int]:
    """Leading 64 bits of a positive int and the dropped exponent."""
    b = x.bit_length()
    if b <= 64:
        return x, 0
    return x >> (b - 64), b - 64


def _level_to_float(ints, den, total) -> np.ndarray:
    """Padded (total+1)^2 float array of a scaled-integer level / denominator.

    Running the level recurrences directly in float64 is numerically
    useless (the rim recurrence subtracts nearly equal terms and the error
    grows by orders of magnitude per level), so every float level is a
    rounded view of the exact integers: the ratio of the leading 64 bits,
    rescaled by the exact exponent difference (relative error ~3e-16).
    """
    den_top, den_exp = _top64(den)
    den_top_f = float(den_top)
    out = np.zeros((total + 1, total + 1))
    idx = 0
    ldexp = math.ldexp
    for i in range(total + 1):
        row = out[i]
        for j in range(total + 1 - i):
            v = ints[idx]
            if v:
                num_top, num_exp = _top64(v)
                row[j] = ldexp(num_top / den_top_f, num_exp - den_exp)
            idx += 1
    return out


DEFAULT_EXACT_CAP = 140
DEFAULT_FLOAT_CAP = 420


class MomentEngine:
    """Lazy provider of exact and float moment tables plus the beta paths.

    ``exact_cap`` and ``float_cap`` bound the totals that may be
    materialized; requests beyond them raise :class:`CapacityError` rather
    than silently eating memory.
    """

    def __init__(
        self,
        exact_cap: int = DEFAULT_EXACT_CAP,
        float_cap: int = DEFAULT_FLOAT_CAP,
        quad: QuadratureSpec = DEFAULT_QUAD,
    ):
        self.exact_cap = exact_cap
        self.float_cap = float_cap
        self.quad = quad
        self._l_int = [[1]]
        self._m_int = [[1]]
        self._m_float = [np.array([[1.0]])]
        self._l_float = [np.array([[1.0]])]
        self._beta0 = {}
        self._beta_levels = {}
        # Rolling integer window for float levels beyond the exact cap.
        self._win_total = 0
        self._win_l = [1]
        self._win_l_prev = []
        self._win_m = [1]

    # -- exact integer tables ------------------------------------------------

    def ensure_exact(self, n_max: int):
        if n_max > self.exact_cap:
            raise CapacityError(
                f"exact tables requested to total {n_max}, cap is {self.exact_cap}"
            )
        while len(self._l_int) <= n_max:
            total = len(self._l_int) - 1
            lt1 = self._l_int[total - 1] if total else []
            nxt = _next_scaled_l(total, self._l_int[total], lt1)
            self._l_int.append(nxt)
            self._m_int.append(_scaled_m_level(total + 1, nxt, self._m_int[total]))

    def l_exact(self, n1: int, n2: int, n3: int) -> Fraction:
        total = n1 + n2 + n3
        self.ensure_exact(total)
        return Fraction(
            self._l_int[total][count_index(n1, n2, total)], l_denominator(total)
        )

    def m_exact(self, n1: int, n2: int, n3: int) -> Fraction:
        total = n1 + n2 + n3
        self.ensure_exact(total)
        return Fraction(
            self._m_int[total][count_index(n1, n2, total)], m_denominator(total)
        )

    def moment_exact(self, beta: int, counts: CountVector) -> Fraction:
        """M_beta(n) = M_1(n + beta - 1) as an exact rational, integer beta >= 1."""
        if beta < 1 or beta != int(beta):
            raise ValueError("exact moments exist for integer beta >= 1 only")
        b = int(beta) - 1
        return self.m_exact(counts.n1 + b, counts.n2 + b, counts.n3 + b)

    # -- float tables ----------------------------------------------------------

    def ensure_float(self, n_max: int):
        """Extend the float tables, advancing the rolling integer window."""
        if n_max > self.float_cap:
            raise CapacityError(
                f"float tables requested to total {n_max}, cap is {self.float_cap}"
            )
        while len(self._m_float) <= n_max:
            total = self._win_total
            nxt = _next_scaled_l(total, self._win_l, self._win_l_prev)
            self._win_l_prev, self._win_l = self._win_l, nxt
            self._win_m = _scaled_m_level(total + 1, nxt, self._win_m)
            self._win_total = total + 1
            self._l_float.append(
                _level_to_float(nxt, l_denominator(total + 1), total + 1)
            )
            self._m_float.append(
                _level_to_float(self._win_m, m_denominator(total + 1), total + 1)
            )

    def m_level_float(self, total: int) -> np.ndarray:
        """Padded (total+1)^2 array of M values for one total; [n1, n2]."""
        self.ensure_float(total)
        return self._m_float[total]

    def l_level_float(self, total: int) -> np.ndarray:
        self.ensure_float(total)
        return self._l_float[total]

    # -- beta = 0 and interpolation ---------------------------------------------

    def moment_beta0(self, counts: CountVector, force_quadrature: bool = False) -> float:
        """M_0(n); exact shift M_1(n - 1) inside the lattice, quadrature on edges."""
        n = counts.as_tuple()
        if min(n) >= 1 and not force_quadrature:
            lvl = self.m_level_float(counts.total - 3)
            return float(lvl[n[0] - 1, n[1] - 1])
        return beta0_moment(counts, self.quad)

    def beta0_level(self, total: int) -> np.ndarray:
        """M_0 for every count vector of one total, enumeration order.

        Interior counts come from the exact shift; boundary counts are all
        permutations of one lattice edge, quadratured in a single batch.
        """
        if total in self._beta0:
            return self._beta0[total]
        n1, n2, n3 = count_arrays(total)
        out = np.empty(n1.shape)
        interior = (n1 >= 1) & (n2 >= 1) & (n3 >= 1)
        if total >= 3:
            lvl = self.m_level_float(total - 3)
            out[interior] = lvl[n1[interior] - 1, n2[interior] - 1]
        if not np.all(interior):
            edge = beta0_edge_values(total, self.quad)
            boundary = ~interior
            largest = np.maximum(np.maximum(n1, n2), n3)
            out[boundary] = edge[largest[boundary]]
        self._beta0[total] = out
        return out

    def m_beta_level(self, beta: float, total: int) -> np.ndarray:
        """M_beta for every count vector of one total, enumeration order.

        Integer beta slices the exact-backed float tables; non-integer beta
        interpolates geometrically between the neighbouring integers, the
        rounding of beta to 1e-6 keying a per-(beta, total) cache.
        """
        if beta < 0:
            raise ValueError("beta must be >= 0")
        key = (round(beta * 1e6), total)
        if key in self._beta_levels:
            return self._beta_levels[key]
        if beta == int(beta):
            b = int(beta)
            if b == 0:
                out = self.beta0_level(total)
            else:
                n1, n2, _ = count_arrays(total)
                lvl = self.m_level_float(total + 3 * (b - 1))
                out = lvl[n1 + (b - 1), n2 + (b - 1)]
        else:
            lo = math.floor(beta)
            frac = beta - lo
            vlo = self.m_beta_level(float(lo), total)
            vhi = self.m_beta_level(float(lo + 1), total)
            out = np.exp((1.0 - frac) * np.log(vlo) + frac * np.log(vhi))
        self._beta_levels[key] = out
        return out

    def moment(self, beta: float, counts: CountVector) -> float:
        """Scalar moment for any beta >= 0 (exact, shift, or interpolated)."""
        level = self.m_beta_level(beta, counts.total)
        return float(level[count_index(counts.n1, counts.n2, counts.total)])


@dataclass
class MomentTable:
    """Materialized exact tables up to a total-click cap."""

    n_max: int
    engine: MomentEngine

    def m(self, counts: CountVector) -> Fraction:
        if counts.total > self.n_max:
            raise ValueError(f"total {counts.total} outside table range {self.n_max}")
        return self.engine.m_exact(*counts.as_tuple())

    def l(self, counts: CountVector) -> Fraction:
        if counts.total > self.n_max:
            raise ValueError(f"total {counts.total} outside table range {self.n_max}")
        return self.engine.l_exact(*counts.as_tuple())

    def m_values(self) -> dict:
        return {
            c.as_tuple(): self.m(c)
            for t in range(self.n_max + 1)
            for c in enumerate_counts(t)
        }

    def l_values(self) -> dict:
        return {
            c.as_tuple(): self.l(c)
            for t in range(self.n_max + 1)
            for c in enumerate_counts(t)
        }


def build_tables(n_max: int, engine: MomentEngine | None = None) -> MomentTable:
    """Populate exact rational tables for all count vectors with total <= n_max."""
    if n_max < 0:
        raise ValueError("n_max must be >= 0")
    engine = engine or MomentEngine(exact_cap=max(n_max, DEFAULT_EXACT_CAP))
    engine.ensure_exact(n_max)
    return MomentTable(n_max, engine)


def moment_integer_beta(table: MomentTable, beta: int, counts: CountVector) -> Fraction:
    """Exact M_beta(n) from the table via the shift identity."""
    shifted_total = counts.total + 3 * (beta - 1)
    if shifted_total > table.n_max:
        raise ValueError(
            f"need totals up to {shifted_total}, table holds {table.n_max}"
        )
    return table.engine.moment_exact(beta, counts)


TABLE_FORMAT_HEADER = "trinemax-moment-table v1"


def dump_table(path, n_max: int, engine: MomentEngine | None = None):
    """Write exact tables as text: 'M|L n1 n2 n3 numerator/denominator'."""
    table = build_tables(n_max, engine)
    with open(path, "w") as fh:
        fh.write(f"{TABLE_FORMAT_HEADER}\n")
        fh.write(f"n_max {n_max}\n")
        for total in range(n_max + 1):
            for c in enumerate_counts(total):
                m = table.m(c)
                l = table.l(c)
                fh.write(
                    f"M {c.n1} {c.n2} {c.n3} {m.numerator}/{m.denominator}\n"
                    f"L {c.n1} {c.n2} {c.n3} {l.numerator}/{l.denominator}\n"
                )


def load_table(path) -> tuple[dict, dict]:
    """Read a dumped table; returns ({counts: M}, {counts: L}) Fraction maps."""
    m_map, l_map = {}, {}
    with open(path) as fh:
        header = fh.readline().strip()
        if header != TABLE_FORMAT_HEADER:
            raise ValueError(f"unrecognized table header {header!r}")
        fh.readline()  # n_max line, informational
        for line in fh:
            which, a, b, c, frac = line.split()
            num, den = frac.split("/")
            target = m_map if which == "M" else l_map
            target[(int(a), int(b), int(c))] = Fraction(int(num), int(den))
    return m_map, l_map
