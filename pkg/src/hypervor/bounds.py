"""Closed-form rank and volume bounds.

Every combinatorial formula is evaluated in exact rational arithmetic;
real inputs given as decimals are converted through their decimal string
so that, for example, 0.93 means exactly 93/100.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction

import numpy as np

EPS_LOG3 = math.log(3)
R_COROLLARY = 2 * math.log(3) + 0.15
C_COROLLARY = Fraction("0.496")
FLOOR_WINDOW = (Fraction("314.62"), Fraction("314.63"))

# Published constants, kept as exact decimals and never recomputed from b.
FIVE_FREE = Fraction("157.497")
NINE_SEMIFREE = Fraction("157.766")
CLOSED_HOMOLOGY = Fraction("157.763")
CUSPED_HOMOLOGY = Fraction("158.12")
COROLLARY_BASE = Fraction("146.1875")
VOLUME_FLOOR = Fraction("0.94")          # lower bound for every such volume
FIVE_FREE_VOLUME = Fraction("3.77")      # volume lower bound under 5-freeness
CUSPED_VOLUME = Fraction("2.848")        # volume lower bound for the cusped case
SMALL_DIMENSION = 10


class DomainError(ValueError):
    pass


class RankDeficientError(ValueError):
    pass


def exact(x) -> Fraction:
    if isinstance(x, Fraction):
        return x
    if isinstance(x, int):
        return Fraction(x)
    if isinstance(x, str):
        return Fraction(x.strip())
    return Fraction(repr(float(x)))


def ball_volume(r: float) -> float:
    """Volume pi (sinh 2r - 2r) of a hyperbolic ball of radius r."""
    if not r > 0:
        raise DomainError("radius must be positive")
    return math.pi * (math.sinh(2 * r) - 2 * r)


@dataclass(frozen=True)
class GraphBoundInputs:
    E: int
    L: int
    s: int
    loop_group_ranks: tuple = ()

    def __post_init__(self):
        if min(self.E, self.L, self.s) < 0 or self.L > self.E:
            raise ValueError("need 0 <= L <= E and s >= 0")
        if self.loop_group_ranks and len(self.loop_group_ranks) != self.s:
            raise ValueError("one loop-group rank per vertex")


def betti_bound(g: GraphBoundInputs) -> Fraction:
    return Fraction(15, 16) * (g.E - g.L) - g.s + 1


def rank_bound_graph(g: GraphBoundInputs) -> Fraction:
    return Fraction(15, 16) * g.E - g.s + 1 + Fraction(sum(g.loop_group_ranks), 16)


@dataclass(frozen=True)
class BoundInputs:
    V: float
    epsilon: float
    R: float
    c: object
    rho: int
    b_half_epsilon: object

    def __post_init__(self):
        if not self.V > 0 or not exact(self.b_half_epsilon) > 0:
            raise DomainError("volume and b must be positive")
        if self.rho < 0:
            raise DomainError("rho must be nonnegative")


@dataclass
class VolumeBoundReport:
    volume_floor: int
    inner_floor: int
    inner_argument: float
    inner_term: Fraction
    bound: Fraction


def rank_volume_report(inp: BoundInputs) -> VolumeBoundReport:
    if not 2 * inp.epsilon < inp.R < 2.5 * inp.epsilon:
        raise DomainError("the radius must satisfy 2 eps < R < 5 eps / 2")
    b, c = exact(inp.b_half_epsilon), exact(inp.c)
    vfloor = math.floor(exact(inp.V) / b)
    arg = (ball_volume(inp.R) - float(b)) / float(c)
    inner = math.floor(arg)
    term = max(Fraction(0), Fraction(15, 32) * inner - 1 + Fraction(inp.rho, 16))
    return VolumeBoundReport(vfloor, inner, arg, term, 1 + vfloor * term)


def rank_volume_bound(inp: BoundInputs) -> Fraction:
    """1 + floor(V/b) * max(0, 15/32 floor((B(R) - b)/c) - 1 + rho/16).

    The caller is responsible for the admissibility conditions on ``c``.
    """
    return rank_volume_report(inp).bound


def corollary_coefficient(rho: int) -> Fraction:
    return COROLLARY_BASE + Fraction(rho, 16)


def corollary_bound(V, rho: int, b) -> Fraction:
    b = exact(b)
    if not (exact(V) > 0 and b > 0):
        raise DomainError("volume and b must be positive")
    return 1 + math.floor(exact(V) / b) * corollary_coefficient(rho)


def b_interval() -> tuple[float, float]:
    """Open lower / closed upper limits on b(eps/2) for eps = log 3.

    They are forced by the floor argument landing in [314.62, 314.63) and
    by the two headline constants dominating the corollary coefficients.
    """
    B = ball_volume(R_COROLLARY)
    c = float(C_COROLLARY)
    lo_window = B - float(FLOOR_WINDOW[1]) * c
    hi_window = B - float(FLOOR_WINDOW[0]) * c
    lo = max(lo_window,
             float(corollary_coefficient(4) / FIVE_FREE),
             float(corollary_coefficient(8) / NINE_SEMIFREE))
    return lo, hi_window


def b_in_interval(b) -> bool:
    lo, hi = b_interval()
    return lo < float(b) <= hi


@dataclass
class Log2k1Report:
    total: float
    verdict: str
    k: int
    threshold: float
    max_displacement: float


def log2k1_check(displacements) -> Log2k1Report:
    """Sum of 1/(1+e^d); above 1/2 the elements cannot be independent."""
    d = np.asarray(list(displacements), dtype=float)
    if np.any(d < 0):
        raise ValueError("displacements must be nonnegative")
    k = len(d)
    # 1/(1+e^d) = e^{-d}/(1+e^{-d}) avoids overflow for large d
    total = float(np.sum(np.exp(-d) / (1 + np.exp(-d)))) if k else 0.0
    verdict = "violates" if total > 0.5 + 1e-15 else "consistent"
    thr = math.log(2 * k - 1) if k else float("nan")
    return Log2k1Report(total, verdict, k, thr, float(d.max()) if k else float("nan"))


def log2k1_equality_sum(k: int) -> Fraction:
    """Exact value of the sum at d_i = log(2k - 1): k / (1 + (2k - 1)) = 1/2."""
    return Fraction(k, 1 + (2 * k - 1))


def select_independent(vectors, r: int) -> list[int]:
    """Indices of the first r rows independent over the rationals (pivot order)."""
    basis: list[list[Fraction]] = []
    pivots: list[int] = []
    chosen: list[int] = []
    for idx, v in enumerate(vectors):
        row = [Fraction(int(x)) for x in v]
        for b, p in zip(basis, pivots):
            if row[p] != 0:
                f = row[p] / b[p]
                row = [x - f * y for x, y in zip(row, b)]
        nz = [i for i, x in enumerate(row) if x != 0]
        if nz:
            basis.append(row)
            pivots.append(nz[0])
            chosen.append(idx)
            if len(chosen) == r:
                return chosen
    raise RankDeficientError(f"span has rank {len(chosen)} < {r}")


@dataclass
class RhoReport:
    rho: int
    mode: str
    k: int
    independent_needed: int
    check: Log2k1Report | None = None

    @property
    def supports_rank_bound(self) -> bool:
        """No subset of the loops can be independent of the needed size."""
        return self.check is None or self.check.verdict == "violates"


def rho_from_mode(mode: str, k: int, loop_displacements=()) -> RhoReport:
    """rho for the k-free (rank < k) and k-semifree (rank <= k - 1) hypotheses.

    Either hypothesis leaves only the alternative of ``m`` independent short
    loops (m = k for k-free, m = (k + 1) / 2 for k-semifree).  The
    inequality test runs on the m longest displacements, the subset most
    favourable to independence.
    """
    d = sorted(float(x) for x in loop_displacements)
    if any(x >= 2 * EPS_LOG3 for x in d):
        raise DomainError("loop displacements must be below log 9")
    if mode == "k_free":
        m = k
    elif mode == "semifree":
        if k % 2 == 0:
            raise DomainError("semifree mode takes an odd k = 2m - 1")
        m = (k + 1) // 2
    else:
        raise ValueError(f"unknown mode {mode!r}")
    check = log2k1_check(d[-m:]) if len(d) >= m else None
    return RhoReport(k - 1, mode, k, m, check)


@dataclass
class HeadlineReport:
    case: str
    V: float
    b: Fraction
    bound: Fraction
    checks: dict = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(self.checks.values())


def headline_bounds(V, case: str, b=Fraction("0.93")) -> HeadlineReport:
    """Evaluate the published bound for one case with its supporting inequalities."""
    V = exact(V)
    if not V > 0:
        raise DomainError("volume must be positive")
    b = exact(b)
    checks: dict = {}
    if case == "five_free":
        bound = 1 + FIVE_FREE * V
        checks["coefficient/b < 157.497"] = corollary_coefficient(4) / b < FIVE_FREE
        checks["146.1875 = 15/32*314 - 1"] = Fraction(15, 32) * 314 - 1 == COROLLARY_BASE
    elif case == "nine_semifree":
        bound = 1 + NINE_SEMIFREE * V
        checks["coefficient/b < 157.766"] = corollary_coefficient(8) / b < NINE_SEMIFREE
        checks["146.1875 = 15/32*314 - 1"] = Fraction(15, 32) * 314 - 1 == COROLLARY_BASE
    elif case == "closed_homology":
        bound = CLOSED_HOMOLOGY * V
        checks["small dimension: 11 * 0.94 > 10"] = (SMALL_DIMENSION + 1) * VOLUME_FLOOR > SMALL_DIMENSION
        checks["1/3.77 + 157.497 < 157.763"] = 1 / FIVE_FREE_VOLUME + FIVE_FREE < CLOSED_HOMOLOGY
        checks["coefficient/b < 157.497"] = corollary_coefficient(4) / b < FIVE_FREE
    elif case == "cusped_homology":
        bound = CUSPED_HOMOLOGY * V
        checks["small dimension: 11 * 0.94 > 10"] = (SMALL_DIMENSION + 1) * VOLUME_FLOOR > SMALL_DIMENSION
        checks["1/2.848 + 157.766 < 158.12"] = 1 / CUSPED_VOLUME + NINE_SEMIFREE < CUSPED_HOMOLOGY
        checks["coefficient/b < 157.766"] = corollary_coefficient(8) / b < NINE_SEMIFREE
    else:
        raise ValueError(f"unknown case {case!r}")
    return HeadlineReport(case, float(V), b, bound, checks)
