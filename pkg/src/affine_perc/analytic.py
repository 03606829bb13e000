"""Closed-form and fixed-point quantities for the n x m fractal percolation model."""
from __future__ import annotations

import functools
import logging
import math
from dataclasses import asdict, dataclass
from typing import Optional

import numpy as np
from numba import njit

from .errors import DomainError, UnsupportedError

log = logging.getLogger(__name__)

FIXED_POINT_TOL = 1e-12
MAX_ITER = 100_000
POSITIVE_LIMIT = 1e-6
MAX_ENUM_CELLS = 25


def _check_nm(n, m):
    if not (m > n >= 2):
        raise DomainError(f"requires integers m > n >= 2, got n={n}, m={m}")


def _check_p(p):
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"probability must lie in [0, 1], got {p}")


def extinction_prob(n: int, m: int, p: float) -> tuple[float, float]:
    """Probability ``t`` that the carpet is empty, and ``1 - t``.

    ``t`` is the least root in [0, 1] of ``t = (p t + 1 - p)**(m n)``,
    reached by iterating the (monotone) generating function from 0.
    """
    _check_nm(n, m)
    _check_p(p)
    nm = n * m
    if p * nm <= 1.0:
        # subcritical or critical: extinction is certain and 1 is the least root
        return 1.0, 0.0
    t = 0.0
    for i in range(MAX_ITER):
        nxt = (p * t + 1.0 - p) ** nm
        if abs(nxt - t) < FIXED_POINT_TOL:
            t = nxt
            break
        t = nxt
    else:
        log.warning("extinction iteration near-critical: cap reached at p=%g", p)
    return t, 1.0 - t


def dimensions(n: int, m: int, p: float) -> tuple[float, float]:
    """Almost-sure (Hausdorff = box, Assouad) dimensions given non-extinction."""
    _check_nm(n, m)
    _check_p(p)
    if p * n * m <= 1.0:
        raise DomainError(f"p={p} <= 1/(mn): the carpet is empty almost surely")
    if p <= 1.0 / m:
        d = math.log(p * n * m) / math.log(n)
    else:
        d = math.log(p * m * m) / math.log(m)
    return d, 2.0


def jfull_map(n: int, m: int, p: float, t: float) -> float:
    """Probability that at least mn-1 of mn independent trials succeed, each with
    success probability ``p t``."""
    if not 0.0 <= t <= 1.0:
        raise DomainError(f"t must lie in [0, 1], got {t}")
    k = n * m
    return k * p ** (k - 1) * t ** (k - 1) - (k - 1) * p ** k * t ** k


def jfull_derivative(n: int, m: int, p: float, t: float) -> float:
    k = n * m
    return k * (k - 1) * p ** (k - 1) * t ** (k - 2) * (1.0 - p * t)


def jfull_sequence(n: int, m: int, p: float, steps: int) -> list[float]:
    """``[p_1, ..., p_steps]`` with ``p_0 = 1`` and ``p_j = f_p(p_{j-1})``."""
    out, t = [], 1.0
    for _ in range(steps):
        t = jfull_map(n, m, p, t)
        out.append(t)
    return out


def _require_jfull(n, m):
    _check_nm(n, m)
    if n < 3:
        raise UnsupportedError(
            "j-full recursion needs n >= 3; for n = 2 no definition of 'full' is available"
        )


def jfull_limit(n: int, m: int, p: float) -> tuple[float, int]:
    """Limit of p_j = f_p(p_{j-1}) from p_0 = 1, and the number of steps taken."""
    _require_jfull(n, m)
    _check_p(p)
    t = 1.0
    for i in range(1, MAX_ITER + 1):
        nxt = jfull_map(n, m, p, t)
        if abs(nxt - t) < FIXED_POINT_TOL:
            return nxt, i
        t = nxt
    return t, MAX_ITER


def crossing_upper_bound(n: int, m: int, tol: float = 1e-9) -> float:
    """Smallest p (to within ``tol``, upper bracket end) for which the j-full
    limit stays positive; crossings then occur with positive probability."""
    _require_jfull(n, m)
    if tol <= 0:
        raise DomainError("tol must be positive")
    lo, hi = 0.0, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if jfull_limit(n, m, mid)[0] > POSITIVE_LIMIT:
            hi = mid
        else:
            lo = mid
    return hi


def full_row_prob(n: int, m: int, p: float, q: int, j: int) -> float:
    """Probability that some row of level-q rectangles inside a column of width
    n**-j is entirely selected: ``1 - (1 - p**(n**(q-j)))**(m**q)``."""
    if not q >= j >= 0:
        raise DomainError(f"requires q >= j >= 0, got q={q}, j={j}")
    _check_p(p)
    if p == 1.0:
        return 1.0
    if p == 0.0:
        return 0.0
    row = math.exp(n ** (q - j) * math.log(p))
    return -math.expm1(m ** q * math.log1p(-row))


def tau_lower_bound(n: int, m: int) -> tuple[float, float]:
    """Lower bounds on the doubled-domain crossing probabilities when positive."""
    _check_nm(n, m)
    return (4 * m) ** (-n / (n - 1)), (4 * n) ** (-m / (m - 1))


# ---------------------------------------------------------------- exact level 1


@njit(cache=True)
def _crossing_subset_counts(n, m, direction, corner):
    """Number of crossing subsets of the n x m grid by size.  Bit r*n + c is cell (c, r)."""
    cells = n * m
    full = (np.int64(1) << cells) - 1
    left = np.int64(0)
    right = np.int64(0)
    bottom = (np.int64(1) << n) - 1
    top = bottom << (n * (m - 1))
    for r in range(m):
        left |= np.int64(1) << (r * n)
        right |= np.int64(1) << (r * n + n - 1)
    if direction == 0:
        start_mask, end_mask = left, right
    else:
        start_mask, end_mask = bottom, top
    not_left = full & ~left
    not_right = full & ~right
    counts = np.zeros(cells + 1, np.int64)
    for s in range(np.int64(1) << cells):
        reach = s & start_mask
        if reach == 0 or (s & end_mask) == 0:
            continue
        while True:
            grow = reach | ((reach << 1) & not_left) | ((reach >> 1) & not_right)
            grow |= ((reach << n) & full) | (reach >> n)
            if corner:
                grow |= ((reach << (n + 1)) & not_left & full) | ((reach << (n - 1)) & not_right & full)
                grow |= ((reach >> (n - 1)) & not_left) | ((reach >> (n + 1)) & not_right)
            grow &= s
            if grow == reach:
                break
            reach = grow
        if reach & end_mask:
            pop = 0
            x = s
            while x:
                x &= x - 1
                pop += 1
            counts[pop] += 1
    return counts


@functools.lru_cache(maxsize=None)
def level1_crossing_counts(n: int, m: int, direction: str = "H", adjacency: str = "corner") -> tuple:
    """Coefficients c_s: the number of size-s subsets of the level-1 grid that cross."""
    if n < 1 or m < 1:
        raise DomainError("grid sides must be positive")
    if n * m > MAX_ENUM_CELLS:
        raise DomainError(f"exact enumeration limited to nm <= {MAX_ENUM_CELLS}, got {n * m}")
    d = str(direction).upper()
    if d not in ("H", "V"):
        raise DomainError(f"unknown direction {direction!r}")
    corner = str(adjacency).lower() in ("corner", "edge+corner")
    return tuple(int(c) for c in _crossing_subset_counts(n, m, 0 if d == "H" else 1, corner))


def exact_level1_crossing(n: int, m: int, p: float, direction: str = "H",
                          adjacency: str = "corner") -> float:
    """Exact probability that E_1 crosses, as a polynomial in p."""
    _check_p(p)
    counts = level1_crossing_counts(n, m, str(getattr(direction, "value", direction)),
                                    str(getattr(adjacency, "value", adjacency)))
    total = n * m
    return float(sum(c * p ** s * (1.0 - p) ** (total - s) for s, c in enumerate(counts)))


# ---------------------------------------------------------------- report


@dataclass(frozen=True)
class AnalyticReport:
    n: int
    m: int
    p: float
    extinction_t: float
    survival: float
    dim_hb: Optional[float]
    dim_assouad: Optional[float]
    jfull_limit: Optional[float]
    p_A: Optional[float]
    tau_h_bound: float
    tau_v_bound: float

    def to_dict(self) -> dict:
        return asdict(self)


def analytic_report(n: int, m: int, p: float, tol: float = 1e-9) -> AnalyticReport:
    t, surv = extinction_prob(n, m, p)
    try:
        dim_hb, dim_a = dimensions(n, m, p)
    except DomainError:
        dim_hb = dim_a = None
    if n >= 3:
        jl = jfull_limit(n, m, p)[0]
        pa = crossing_upper_bound(n, m, tol)
    else:
        jl = pa = None
    th, tv = tau_lower_bound(n, m)
    return AnalyticReport(n, m, float(p), t, surv, dim_hb, dim_a, jl, pa, th, tv)
