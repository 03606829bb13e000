"""Monte Carlo estimation of crossing and survival probabilities.

Trial ``i`` of a run with master seed ``s`` uses the carpet seed
``derive_seed(s, i)``; a doubled domain uses copy indices 0 and 1 of that
seed.  Every trial is a pure function of its seed, so hit counts do not
depend on how trials are split across worker threads.
"""
from __future__ import annotations

import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from typing import Optional

import numpy as np
from numba import njit

from .carpet import (
    DEFAULT_CAP,
    GridParams,
    _u64,
    cell_uniform,
    check_cap,
    check_probability,
    expand,
    level_key,
    mix64,
    sort_cells,
)
from .connectivity import Adjacency, Direction, Layout, crossing_kernel, is_dense
from .errors import CapExceededError, DomainError

THREADS_ENV = "AFFINE_PERC_THREADS"
Z95 = 1.96

# tags separating seed streams of different experiment kinds
_TAG_SWEEP = 1
_TAG_BISECT = 2


def resolve_threads(threads: Optional[int] = None) -> int:
    if threads is None:
        threads = int(os.environ.get(THREADS_ENV, "1") or 1)
    if threads < 1:
        raise DomainError(f"threads must be >= 1, got {threads}")
    return threads


def wilson_interval(hits: int, trials: int, z: float = Z95) -> tuple[float, float]:
    if trials <= 0:
        return 0.0, 1.0
    phat = hits / trials
    z2 = z * z
    denom = 1.0 + z2 / trials
    centre = (phat + z2 / (2 * trials)) / denom
    half = z / denom * math.sqrt(phat * (1 - phat) / trials + z2 / (4 * trials * trials))
    return max(0.0, min(centre - half, phat)), min(1.0, max(centre + half, phat))


def paired_difference_interval(both: int, first_only: int, second_only: int, neither: int,
                               z: float = Z95) -> tuple[float, float, float]:
    """Difference of two paired proportions and its Wald interval.

    The variance uses only the discordant cells of the 2x2 table.
    """
    total = both + first_only + second_only + neither
    if total == 0:
        raise DomainError("no trials")
    diff = (first_only - second_only) / total
    var = (first_only + second_only - (first_only - second_only) ** 2 / total) / total ** 2
    half = z * math.sqrt(max(var, 0.0))
    return diff, diff - half, diff + half


# ---------------------------------------------------------------- kernels


@njit(cache=True, nogil=True)
def _trial_seeds(master, tag, step, start, count):
    base = mix64(np.uint64(master))
    if tag != 0:
        base = mix64(base ^ mix64(np.uint64(tag)))
        base = mix64(base ^ mix64(np.uint64(step)))
    out = np.empty(count, np.uint64)
    for i in range(count):
        out[i] = mix64(base ^ mix64(np.uint64(start + i)))
    return out


@njit(cache=True, nogil=True)
def _crossing_batch(seeds, n, m, ps, levels, dirs, layout, corner, cap):
    """Crossing indicators, shape (trials, len(ps), len(levels), len(dirs)).

    ``ps`` must be ascending.  Cells are generated once at ``ps[-1]``; the set
    at a smaller p is the subset whose ancestor-chain maximum lies below it.
    Returns (indicators, offending level or 0).
    """
    T = seeds.shape[0]
    P = ps.shape[0]
    L = levels.shape[0]
    D = dirs.shape[0]
    out = np.zeros((T, P, L, D), np.uint8)
    pmax = ps[P - 1]
    ncopy = 1 if layout == 0 else 2
    depth = 0
    for li in range(L):
        if levels[li] > depth:
            depth = levels[li]
    for t in range(T):
        kc = [np.empty(0, np.int64) for _ in range(ncopy * L)]
        kr = [np.empty(0, np.int64) for _ in range(ncopy * L)]
        kt = [np.empty(0, np.float64) for _ in range(ncopy * L)]
        for c in range(ncopy):
            cols = np.zeros(1, np.int64)
            rows = np.zeros(1, np.int64)
            thr = np.zeros(1, np.float64)
            for k in range(1, depth + 1):
                key = level_key(seeds[t], np.uint64(c), np.uint64(k))
                cols, rows, thr = expand(cols, rows, thr, n, m, key, pmax)
                if cols.shape[0] > cap:
                    return out, k
                for li in range(L):
                    if levels[li] == k:
                        kc[c * L + li] = cols
                        kr[c * L + li] = rows
                        kt[c * L + li] = thr
        for li in range(L):
            k = levels[li]
            w = n ** k
            h = m ** k
            if ncopy == 1:
                cols = kc[li]
                rows = kr[li]
                thr = kt[li]
            else:
                c1 = kc[L + li]
                r1 = kr[L + li]
                if layout == 1:
                    r1 = r1 + h
                else:
                    c1 = c1 + w
                cols = np.concatenate((kc[li], c1))
                rows = np.concatenate((kr[li], r1))
                thr = np.concatenate((kt[li], kt[L + li]))
            gw = 2 * w if layout == 2 else w
            gh = 2 * h if layout == 1 else h
            if not is_dense(gw, gh):
                cols, rows, thr = sort_cells(cols, rows, thr, gh)
            for pi in range(P):
                keep = thr < ps[pi]
                sc = cols[keep]
                sr = rows[keep]
                for di in range(D):
                    if crossing_kernel(sc, sr, gw, gh, dirs[di], corner):
                        out[t, pi, li, di] = 1
    return out, 0


@njit(cache=True, nogil=True)
def survives_dfs(seed, copy, n, m, p, depth):
    """Whether E_depth is non-empty, by depth-first search for one surviving
    lineage.  Agrees exactly with building every level and testing the last."""
    keys = np.empty(depth + 1, np.uint64)
    for k in range(1, depth + 1):
        keys[k] = level_key(np.uint64(seed), np.uint64(copy), np.uint64(k))
    cap = depth * n * m + 1
    sk = np.empty(cap, np.int64)
    sc = np.empty(cap, np.int64)
    sr = np.empty(cap, np.int64)
    top = 1
    sk[0] = 0
    sc[0] = 0
    sr[0] = 0
    while top > 0:
        top -= 1
        k = sk[top]
        if k == depth:
            return True
        c0 = sc[top] * n
        r0 = sr[top] * m
        for i in range(n):
            for j in range(m):
                if cell_uniform(keys[k + 1], np.uint64(c0 + i), np.uint64(r0 + j)) < p:
                    sk[top] = k + 1
                    sc[top] = c0 + i
                    sr[top] = r0 + j
                    top += 1
    return False


@njit(cache=True, nogil=True)
def _survival_batch(seeds, n, m, p, depth):
    out = np.zeros(seeds.shape[0], np.uint8)
    for t in range(seeds.shape[0]):
        if survives_dfs(seeds[t], 0, n, m, p, depth):
            out[t] = 1
    return out


@njit(cache=True, nogil=True)
def _full_row_batch(seeds, n, m, p, q, j):
    """Whether some row of level-q rectangles in the leftmost width-n**-j column
    has every rectangle's own selection variate below p."""
    out = np.zeros(seeds.shape[0], np.uint8)
    width = n ** (q - j)
    height = m ** q
    for t in range(seeds.shape[0]):
        key = level_key(seeds[t], np.uint64(0), np.uint64(q))
        for b in range(height):
            full = True
            for c in range(width):
                if cell_uniform(key, np.uint64(c), np.uint64(b)) >= p:
                    full = False
                    break
            if full:
                out[t] = 1
                break
    return out


def _run_chunked(kernel, seeds: np.ndarray, threads: int, *args):
    """Apply ``kernel(seed_chunk, *args)`` over contiguous chunks and stitch in order."""
    if threads <= 1 or len(seeds) < 2 * threads:
        return [kernel(seeds, *args)]
    bounds = np.linspace(0, len(seeds), 4 * threads + 1).astype(int)
    chunks = [seeds[a:b] for a, b in zip(bounds[:-1], bounds[1:]) if b > a]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda s: kernel(s, *args), chunks))


def trial_seeds(master_seed: int, trials: int, tag: int = 0, step: int = 0) -> np.ndarray:
    return _trial_seeds(_u64(master_seed), tag, step, 0, trials)


def crossing_outcomes(params: GridParams, ps, levels, directions, trials: int,
                      domain="unit", adjacency="corner", master_seed: int = 0,
                      threads: Optional[int] = None, cap: int = DEFAULT_CAP,
                      seeds: Optional[np.ndarray] = None) -> np.ndarray:
    """Per-trial crossing indicators under common random numbers.

    Returns a bool array of shape (trials, len(ps), len(levels), len(directions)).
    """
    ps = np.asarray([check_probability(p) for p in np.atleast_1d(ps)], dtype=np.float64)
    if np.any(np.diff(ps) < 0):
        raise DomainError("p values must be sorted ascending")
    levels = np.asarray(np.atleast_1d(levels), dtype=np.int64)
    if levels.min() < 1:
        raise DomainError("levels must be >= 1")
    dirs = np.asarray([Direction.parse(d).code for d in np.atleast_1d(directions)], dtype=np.int64)
    layout = Layout.parse(domain)
    corner = Adjacency.parse(adjacency) is Adjacency.CORNER
    if trials < 1:
        raise DomainError("trials must be >= 1")
    check_cap(params, float(ps[-1]), int(levels.max()), cap)
    if seeds is None:
        seeds = trial_seeds(master_seed, trials)
    parts = _run_chunked(
        lambda s: _crossing_batch(s, params.n, params.m, ps, levels, dirs, layout.code, corner, cap),
        seeds, resolve_threads(threads),
    )
    for _, bad in parts:
        if bad:
            raise CapExceededError(int(bad), float("nan"), cap)
    return np.concatenate([o for o, _ in parts]).astype(bool)


# ---------------------------------------------------------------- results


@dataclass(frozen=True)
class CrossingEstimate:
    n: int
    m: int
    p: float
    level: int
    domain: str
    direction: Optional[str]
    trials: int
    hits: int
    p_hat: float
    ci_low: float
    ci_high: float
    master_seed: int
    adjacency: str = "corner"
    event: str = "crossing"

    @classmethod
    def from_counts(cls, params, p, level, domain, direction, trials, hits, master_seed,
                    adjacency="corner", event="crossing", z=Z95):
        lo, hi = wilson_interval(hits, trials, z)
        return cls(params.n, params.m, float(p), int(level), domain, direction, int(trials),
                   int(hits), hits / trials, lo, hi, int(master_seed), adjacency, event)

    @property
    def sigma(self) -> float:
        return math.sqrt(self.p_hat * (1 - self.p_hat) / self.trials)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class SweepResult:
    p_grid: tuple
    estimates: tuple
    coupled: bool

    @property
    def p_hats(self) -> list[float]:
        return [e.p_hat for e in self.estimates]


@dataclass
class CriticalBracket:
    direction: str
    level: int
    threshold: float
    lo: float
    hi: float
    trials_per_step: int
    history: list = field(default_factory=list)

    @property
    def midpoint(self) -> float:
        return 0.5 * (self.lo + self.hi)

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass(frozen=True)
class HVComparison:
    n: int
    m: int
    p: float
    level: int
    trials: int
    both: int
    h_only: int
    v_only: int
    neither: int
    p_hat_h: float
    p_hat_v: float
    diff: float
    ci_low: float
    ci_high: float
    master_seed: int

    def to_dict(self) -> dict:
        return asdict(self)


# ---------------------------------------------------------------- operations


def estimate_crossing(params: GridParams, p: float, level: int, trials: int,
                      direction="H", domain="unit", adjacency="corner",
                      master_seed: int = 0, threads: Optional[int] = None,
                      cap: int = DEFAULT_CAP) -> CrossingEstimate:
    hits = crossing_outcomes(params, [p], [level], [direction], trials, domain, adjacency,
                             master_seed, threads, cap)
    return CrossingEstimate.from_counts(
        params, p, level, Layout.parse(domain).value, Direction.parse(direction).value,
        trials, int(hits.sum()), master_seed, Adjacency.parse(adjacency).value,
    )


def sweep(params: GridParams, p_grid, level: int, trials: int, direction="H",
          domain="unit", coupled: bool = True, master_seed: int = 0,
          adjacency="corner", threads: Optional[int] = None,
          cap: int = DEFAULT_CAP) -> SweepResult:
    """Estimates over a p grid.  With ``coupled`` every p reuses the same
    per-rectangle variates, so the hit counts are non-decreasing in p."""
    grid = [float(p) for p in p_grid]
    if any(b < a for a, b in zip(grid, grid[1:])):
        raise DomainError("p_grid must be sorted ascending")
    dname = Layout.parse(domain).value
    dirname = Direction.parse(direction).value
    adj = Adjacency.parse(adjacency).value
    if coupled:
        out = crossing_outcomes(params, grid, [level], [direction], trials, domain, adjacency,
                                master_seed, threads, cap)
        hits = out[:, :, 0, 0].sum(axis=0)
    else:
        hits = []
        for i, p in enumerate(grid):
            seeds = trial_seeds(master_seed, trials, _TAG_SWEEP, i)
            out = crossing_outcomes(params, [p], [level], [direction], trials, domain,
                                    adjacency, master_seed, threads, cap, seeds=seeds)
            hits.append(int(out.sum()))
    ests = tuple(
        CrossingEstimate.from_counts(params, p, level, dname, dirname, trials, int(h),
                                     master_seed, adj)
        for p, h in zip(grid, hits)
    )
    return SweepResult(tuple(grid), ests, coupled)


def find_critical(params: GridParams, level: int, trials_per_step: int, direction="H",
                  domain="unit", threshold: float = 0.5, tol: float = 0.01,
                  master_seed: int = 0, adjacency="corner",
                  threads: Optional[int] = None, cap: int = DEFAULT_CAP) -> CriticalBracket:
    """Bisect on p for where the level-k crossing frequency passes ``threshold``.

    Each step draws fresh trials; ``history`` records every (p, p_hat).
    """
    if not 0.0 < threshold < 1.0:
        raise DomainError("threshold must lie in (0, 1)")
    if tol <= 0:
        raise DomainError("tol must be positive")
    dirname = Direction.parse(direction).value
    lo, hi = 0.0, 1.0
    history = []
    step = 0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        seeds = trial_seeds(master_seed, trials_per_step, _TAG_BISECT, step)
        out = crossing_outcomes(params, [mid], [level], [direction], trials_per_step, domain,
                                adjacency, master_seed, threads, cap, seeds=seeds)
        phat = float(out.mean())
        history.append((mid, phat))
        if phat >= threshold:
            hi = mid
        else:
            lo = mid
        step += 1
    return CriticalBracket(dirname, int(level), float(threshold), lo, hi, int(trials_per_step),
                           history)


def compare_hv(params: GridParams, p: float, level: int, trials: int, master_seed: int = 0,
               adjacency="corner", threads: Optional[int] = None, z: float = Z95,
               cap: int = DEFAULT_CAP) -> HVComparison:
    """Paired H vs V crossing frequencies evaluated on the same realizations."""
    out = crossing_outcomes(params, [p], [level], ["H", "V"], trials, "unit", adjacency,
                            master_seed, threads, cap)
    h = out[:, 0, 0, 0]
    v = out[:, 0, 0, 1]
    both = int(np.sum(h & v))
    h_only = int(np.sum(h & ~v))
    v_only = int(np.sum(~h & v))
    neither = trials - both - h_only - v_only
    diff, lo, hi = paired_difference_interval(both, h_only, v_only, neither, z)
    return HVComparison(params.n, params.m, float(p), int(level), int(trials), both, h_only,
                        v_only, neither, float(h.mean()), float(v.mean()), diff, lo, hi,
                        int(master_seed))


def estimate_survival(params: GridParams, p: float, level: int, trials: int,
                      master_seed: int = 0, threads: Optional[int] = None) -> CrossingEstimate:
    """Frequency of a non-empty E_level.  Trial i uses the same seed as in
    :func:`estimate_crossing`."""
    p = check_probability(p)
    # the search never forms col * height keys, so only m**level must fit in 63 bits
    if level < 1 or params.m ** level >= 2 ** 63:
        raise DomainError(f"level {level} out of range")
    if trials < 1:
        raise DomainError("trials must be >= 1")
    seeds = trial_seeds(master_seed, trials)
    parts = _run_chunked(
        lambda s: _survival_batch(s, params.n, params.m, p, level), seeds, resolve_threads(threads)
    )
    hits = int(sum(int(x.sum()) for x in parts))
    return CrossingEstimate.from_counts(params, p, level, "unit", None, trials, hits,
                                        master_seed, event="survival")


def estimate_full_row(params: GridParams, p: float, q: int, j: int, trials: int,
                      master_seed: int = 0, threads: Optional[int] = None) -> CrossingEstimate:
    """Frequency with which some row of level-q rectangles in a width-n**-j
    column is fully selected, each rectangle judged on its own variate."""
    p = check_probability(p)
    if not q >= j >= 0:
        raise DomainError("requires q >= j >= 0")
    seeds = trial_seeds(master_seed, trials)
    parts = _run_chunked(
        lambda s: _full_row_batch(s, params.n, params.m, p, q, j), seeds, resolve_threads(threads)
    )
    hits = int(sum(int(x.sum()) for x in parts))
    return CrossingEstimate.from_counts(params, p, q, "unit", None, trials, hits, master_seed,
                                        event="full-row")
