"""Seedable generation of the random self-affine carpet approximants E_1 ⊇ E_2 ⊇ ...

Every rectangle owns one uniform variate, computed by hashing its address
``(seed, copy, level, col, row)``.  A rectangle is selected iff its uniform is
below ``p``, so realizations are nested in ``p`` and in depth for a fixed seed.
Only descendants of selected rectangles are ever enumerated.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numba import njit

from .errors import CapExceededError, DomainError

DEFAULT_CAP = 50_000_000
MASK64 = (1 << 64) - 1

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_S30 = np.uint64(30)
_S27 = np.uint64(27)
_S31 = np.uint64(31)
_S11 = np.uint64(11)
_LEVEL_SALT = np.uint64(0xD1B54A32D192ED03)
_INV53 = 1.0 / 9007199254740992.0


@njit(cache=True, nogil=True)
def mix64(x):
    """splitmix64 finalizer; a bijection on uint64 with full avalanche."""
    x = (x + _GOLDEN)
    x = (x ^ (x >> _S30)) * _M1
    x = (x ^ (x >> _S27)) * _M2
    return x ^ (x >> _S31)


@njit(cache=True, nogil=True)
def level_key(seed, copy, level):
    h = mix64(np.uint64(seed))
    h = mix64(h ^ (np.uint64(copy) * _LEVEL_SALT))
    return mix64(h ^ np.uint64(level))


@njit(cache=True, nogil=True)
def cell_uniform(key, col, row):
    h = mix64(key ^ np.uint64(col))
    h = mix64(h ^ np.uint64(row))
    return np.float64(h >> _S11) * _INV53


def _u64(x: int) -> np.uint64:
    return np.uint64(int(x) & MASK64)


@dataclass(frozen=True)
class GridParams:
    """Subdivision shape: ``n`` columns by ``m`` rows, with ``m > n >= 2``."""

    n: int
    m: int

    def __post_init__(self):
        if not (isinstance(self.n, (int, np.integer)) and isinstance(self.m, (int, np.integer))):
            raise DomainError("n and m must be integers")
        if not (self.m > self.n >= 2):
            raise DomainError(f"grid requires integers m > n >= 2, got n={self.n}, m={self.m}")

    def width(self, k: int) -> int:
        return self.n ** k

    def height(self, k: int) -> int:
        return self.m ** k

    def max_depth(self) -> int:
        # keeps col * height + row inside int64
        k = 1
        while (self.n * self.m) ** (k + 1) < 2 ** 62:
            k += 1
        return k


@dataclass(frozen=True)
class RectAddr:
    level: int
    col: int
    row: int
    copy: int = 0

    def children(self, params: GridParams):
        n, m = params.n, params.m
        return [
            RectAddr(self.level + 1, self.col * n + i, self.row * m + j, self.copy)
            for i in range(n)
            for j in range(m)
        ]

    def footprint(self, params: GridParams):
        """(x0, x1, y0, y1) of the closed rectangle in the unit square."""
        w = params.n ** -self.level
        h = params.m ** -self.level
        return (self.col * w, (self.col + 1) * w, self.row * h, (self.row + 1) * h)


def rect_uniform(seed: int, addr: RectAddr) -> float:
    """The uniform variate in [0, 1) attached to one rectangle."""
    key = np.uint64(level_key(_u64(seed), _u64(addr.copy), _u64(addr.level)))
    return float(cell_uniform(key, _u64(addr.col), _u64(addr.row)))


def derive_seed(master: int, *indices: int) -> int:
    """Deterministic child seed of ``master`` for a tuple of non-negative indices."""
    h = np.uint64(mix64(_u64(master)))
    for i in indices:
        h = np.uint64(mix64(h ^ np.uint64(mix64(_u64(i)))))
    return int(h)


@njit(cache=True, nogil=True)
def expand(cols, rows, thr, n, m, key, pmax):
    """Children of the given cells whose own uniform is below ``pmax``.

    ``thr`` carries, per cell, the largest uniform along its ancestor chain;
    a cell belongs to E_k at probability p iff its chain maximum is below p.
    """
    nm = n * m
    k = cols.shape[0]
    out_c = np.empty(k * nm, np.int64)
    out_r = np.empty(k * nm, np.int64)
    out_t = np.empty(k * nm, np.float64)
    cnt = 0
    for idx in range(k):
        c0 = cols[idx] * n
        r0 = rows[idx] * m
        t0 = thr[idx]
        for i in range(n):
            for j in range(m):
                u = cell_uniform(key, np.uint64(c0 + i), np.uint64(r0 + j))
                if u < pmax:
                    out_c[cnt] = c0 + i
                    out_r[cnt] = r0 + j
                    out_t[cnt] = u if u > t0 else t0
                    cnt += 1
    return out_c[:cnt], out_r[:cnt], out_t[:cnt]


@njit(cache=True, nogil=True)
def sort_cells(cols, rows, thr, height):
    order = np.argsort(cols * height + rows, kind="mergesort")
    return cols[order], rows[order], thr[order]


def _freeze(a: np.ndarray) -> np.ndarray:
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class Realization:
    """One sampled carpet.  ``levels[k-1]`` is an (N, 2) int array of (col, row)
    pairs of E_k, sorted lexicographically."""

    params: GridParams
    p: float
    depth: int
    seed: int
    copy: int
    levels: tuple
    prefix: int = 1
    thresholds: tuple = field(default=(), repr=False)

    @property
    def n(self):
        return self.params.n

    @property
    def m(self):
        return self.params.m

    def cells(self, k: int) -> np.ndarray:
        if not 1 <= k <= self.depth:
            raise DomainError(f"level {k} outside 1..{self.depth}")
        return self.levels[k - 1]

    def counts(self) -> list[int]:
        """Number of selected rectangles per level (the branching process N_p(k))."""
        return [len(a) for a in self.levels]

    def __eq__(self, other):
        if not isinstance(other, Realization):
            return NotImplemented
        return (
            self.params == other.params
            and self.p == other.p
            and self.depth == other.depth
            and self.seed == other.seed
            and self.copy == other.copy
            and self.prefix == other.prefix
            and len(self.levels) == len(other.levels)
            and all(np.array_equal(a, b) for a, b in zip(self.levels, other.levels))
        )

    __hash__ = None


def check_probability(p: float) -> float:
    p = float(p)
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"probability must lie in [0, 1], got {p}")
    return p


def projected_counts(params: GridParams, p: float, depth: int, k0: int = 1) -> list[float]:
    nm = params.n * params.m
    out = []
    x = 1.0
    for k in range(1, depth + 1):
        x *= nm if k < k0 else p * nm
        out.append(x)
    return out


def check_cap(params, p, depth, cap, k0=1):
    for k, x in enumerate(projected_counts(params, p, depth, k0), start=1):
        if x > cap:
            raise CapExceededError(k, x, cap)


def _validate(params, p, depth, k0):
    p = check_probability(p)
    if int(depth) != depth or depth < 1:
        raise DomainError(f"depth must be a positive integer, got {depth}")
    if depth > params.max_depth():
        raise DomainError(f"depth {depth} exceeds {params.max_depth()} for addressable grids")
    if not 1 <= k0 <= depth:
        raise DomainError(f"prefix level must satisfy 1 <= k0 <= depth, got {k0}")
    return p


def _build(params, p, depth, seed, copy, k0, cap):
    p = _validate(params, p, depth, k0)
    check_cap(params, p, depth, cap, k0)
    n, m = params.n, params.m
    s, c = _u64(seed), _u64(copy)
    cols = np.zeros(1, np.int64)
    rows = np.zeros(1, np.int64)
    thr = np.zeros(1, np.float64)
    levels, thresholds = [], []
    for k in range(1, depth + 1):
        key = np.uint64(level_key(s, c, np.uint64(k)))
        pmax = 2.0 if k < k0 else p
        cols, rows, thr = expand(cols, rows, thr, n, m, key, pmax)
        if k < k0:
            thr = np.zeros_like(thr)
        if len(cols) > cap:
            raise CapExceededError(k, len(cols), cap)
        cols, rows, thr = sort_cells(cols, rows, thr, m ** k)
        levels.append(_freeze(np.stack([cols, rows], axis=1)))
        thresholds.append(_freeze(thr))
    return Realization(
        params=params,
        p=p,
        depth=int(depth),
        seed=int(seed),
        copy=int(copy),
        levels=tuple(levels),
        prefix=int(k0),
        thresholds=tuple(thresholds),
    )


def generate(params: GridParams, p: float, depth: int, seed: int, copy: int = 0,
             cap: int = DEFAULT_CAP) -> Realization:
    """Sample E_1, ..., E_depth.

    Raises CapExceededError if the expected cell count ``(p*n*m)**k`` at some
    level exceeds ``cap``.
    """
    return _build(params, p, depth, seed, copy, 1, cap)


def force_prefix(params: GridParams, p: float, depth: int, seed: int, k0: int,
                 copy: int = 0, cap: int = DEFAULT_CAP) -> Realization:
    """Like :func:`generate` but with every rectangle of levels ``< k0`` selected
    (the approximants of F_k0)."""
    return _build(params, p, depth, seed, copy, k0, cap)


def survives(r: Realization) -> bool:
    return len(r.levels[-1]) > 0
