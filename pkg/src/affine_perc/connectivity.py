"""Cluster labeling, crossings and component census on level-k cell sets.

Cells are closed rectangles, so two distinct cells meet iff they share an
edge or a corner.  ``corner`` adjacency (the default) therefore matches
connectivity of the union of closed cells exactly; ``edge`` adjacency is the
stricter 4-neighbour rule.
"""
from __future__ import annotations

import enum
from dataclasses import asdict, dataclass

import numpy as np
from numba import njit

from .carpet import Realization
from .errors import DomainError

DENSE_LIMIT = 1 << 23


class Adjacency(str, enum.Enum):
    EDGE = "edge"
    CORNER = "corner"

    @classmethod
    def parse(cls, value) -> "Adjacency":
        if isinstance(value, cls):
            return value
        v = str(value).lower()
        if v in ("corner", "edge+corner", "8"):
            return cls.CORNER
        if v in ("edge", "4"):
            return cls.EDGE
        raise DomainError(f"unknown adjacency mode {value!r}")


class Direction(str, enum.Enum):
    H = "H"
    V = "V"

    @classmethod
    def parse(cls, value) -> "Direction":
        if isinstance(value, cls):
            return value
        v = str(value).upper()
        if v in ("H", "V"):
            return cls(v)
        raise DomainError(f"unknown direction {value!r}")

    @property
    def code(self) -> int:
        return 0 if self is Direction.H else 1


class Layout(str, enum.Enum):
    UNIT = "unit"
    TWO_TALL = "two-tall"
    TWO_WIDE = "two-wide"

    @classmethod
    def parse(cls, value) -> "Layout":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            raise DomainError(f"unknown domain layout {value!r}") from None

    @property
    def copies(self) -> int:
        return 1 if self is Layout.UNIT else 2

    @property
    def code(self) -> int:
        return {Layout.UNIT: 0, Layout.TWO_TALL: 1, Layout.TWO_WIDE: 2}[self]


# ---------------------------------------------------------------- kernels


@njit(cache=True, nogil=True, inline="always")
def _find(parent, x):
    while parent[x] != x:
        parent[x] = parent[parent[x]]
        x = parent[x]
    return x


@njit(cache=True, nogil=True, inline="always")
def _union(parent, a, b):
    # linking to the smaller root keeps every root the minimum index of its set
    ra = _find(parent, a)
    rb = _find(parent, b)
    if ra < rb:
        parent[rb] = ra
    elif rb < ra:
        parent[ra] = rb


@njit(cache=True, nogil=True)
def is_dense(width, height):
    return width * height <= DENSE_LIMIT


@njit(cache=True, nogil=True)
def _union_neighbours(cols, rows, width, height, corner, parent):
    """Union every pair of adjacent cells.

    Grids above DENSE_LIMIT cells use binary search instead of an index
    array, and then require cells sorted by ``col * height + row``.
    """
    n = cols.shape[0]
    keys = cols * height + rows
    dense = is_dense(width, height)
    if dense:
        index = np.full(width * height, -1, np.int32)
        for i in range(n):
            index[keys[i]] = i
    else:
        index = np.empty(0, np.int32)
    nd = 4 if corner else 2
    for i in range(n):
        c = cols[i]
        r = rows[i]
        for d in range(nd):
            # right, up, up-right, down-right; the other four are covered from the far side
            if d == 0:
                c2, r2 = c + 1, r
            elif d == 1:
                c2, r2 = c, r + 1
            elif d == 2:
                c2, r2 = c + 1, r + 1
            else:
                c2, r2 = c + 1, r - 1
            if c2 >= width or r2 < 0 or r2 >= height:
                continue
            key = c2 * height + r2
            if dense:
                j = index[key]
            else:
                j = np.searchsorted(keys, key)
                if j >= n or keys[j] != key:
                    j = -1
            if j >= 0:
                _union(parent, i, j)


@njit(cache=True, nogil=True)
def crossing_kernel(cols, rows, width, height, direction, corner):
    """True iff one cluster touches both opposite sides (0 = left/right, 1 = bottom/top)."""
    n = cols.shape[0]
    if n == 0:
        return False
    parent = np.arange(n + 2).astype(np.int32)
    src = n
    dst = n + 1
    _union_neighbours(cols, rows, width, height, corner, parent)
    top = width - 1 if direction == 0 else height - 1
    for i in range(n):
        x = cols[i] if direction == 0 else rows[i]
        if x == 0:
            _union(parent, i, src)
        if x == top:
            _union(parent, i, dst)
    return _find(parent, src) == _find(parent, dst)


@njit(cache=True, nogil=True)
def label_kernel(cols, rows, width, height, corner):
    """Per-cell component id: the smallest cell index in the component."""
    n = cols.shape[0]
    parent = np.arange(n).astype(np.int32)
    _union_neighbours(cols, rows, width, height, corner, parent)
    out = np.empty(n, np.int64)
    for i in range(n):
        out[i] = _find(parent, i)
    return out


# ---------------------------------------------------------------- public API


def _sorted_cells(cells, width, height):
    a = np.asarray(cells, dtype=np.int64).reshape(-1, 2)
    if len(a):
        if a[:, 0].min() < 0 or a[:, 1].min() < 0 or a[:, 0].max() >= width or a[:, 1].max() >= height:
            raise DomainError(f"cell outside the {width}x{height} grid")
    keys = a[:, 0] * height + a[:, 1]
    order = np.argsort(keys, kind="mergesort")
    a = a[order]
    if len(a) > 1 and np.any(np.diff(keys[order]) == 0):
        a = np.unique(a, axis=0)
    return np.ascontiguousarray(a[:, 0]), np.ascontiguousarray(a[:, 1])


def label_components(cells, grid, adjacency="corner") -> dict:
    """Map each cell ``(col, row)`` to its component id.

    The id of a component is its lexicographically smallest cell.
    """
    width, height = grid
    mode = Adjacency.parse(adjacency)
    cols, rows = _sorted_cells(cells, width, height)
    lab = label_kernel(cols, rows, width, height, mode is Adjacency.CORNER)
    return {
        (int(c), int(r)): (int(cols[j]), int(rows[j]))
        for c, r, j in zip(cols, rows, lab)
    }


def crossing_cells(cells, grid, direction="H", adjacency="corner") -> bool:
    width, height = grid
    cols, rows = _sorted_cells(cells, width, height)
    return bool(crossing_kernel(cols, rows, width, height, Direction.parse(direction).code,
                                Adjacency.parse(adjacency) is Adjacency.CORNER))


def _level_grid(r: Realization, k: int):
    if not 1 <= k <= r.depth:
        raise DomainError(f"level {k} outside 1..{r.depth}")
    return r.levels[k - 1], r.n ** k, r.m ** k


def crossing(r: Realization, k: int, direction="H", adjacency="corner") -> bool:
    """Whether E_k crosses the unit square left-right (H) or bottom-top (V)."""
    cells, width, height = _level_grid(r, k)
    return bool(crossing_kernel(
        np.ascontiguousarray(cells[:, 0]), np.ascontiguousarray(cells[:, 1]),
        width, height, Direction.parse(direction).code,
        Adjacency.parse(adjacency) is Adjacency.CORNER,
    ))


def merge_domain(realizations, layout, k):
    """Stack copies into one grid; returns (cells, width, height).

    ``two-tall`` places copy 1 above copy 0 ([0,1] x [0,2]); ``two-wide``
    places it to the right ([0,2] x [0,1]).
    """
    layout = Layout.parse(layout)
    rs = list(realizations)
    if len(rs) != layout.copies:
        raise DomainError(f"layout {layout.value} needs {layout.copies} realizations, got {len(rs)}")
    if len(rs) == 2:
        if rs[0].copy == rs[1].copy and rs[0].seed == rs[1].seed:
            raise DomainError("doubled domains need independent copies (distinct copy index)")
        if rs[0].params != rs[1].params:
            raise DomainError("copies must share grid parameters")
    base, width, height = _level_grid(rs[0], k)
    if layout is Layout.UNIT:
        return base, width, height
    other, _, _ = _level_grid(rs[1], k)
    if layout is Layout.TWO_TALL:
        shifted = other + np.array([0, height])
        return np.concatenate([base, shifted]), width, 2 * height
    shifted = other + np.array([width, 0])
    return np.concatenate([base, shifted]), 2 * width, height


def crossing_domain(realizations, layout, k, direction="H", adjacency="corner") -> bool:
    cells, width, height = merge_domain(realizations, layout, k)
    return crossing_cells(cells, (width, height), direction, adjacency)


@dataclass(frozen=True)
class ComponentCensus:
    level: int
    num_components: int
    num_nontrivial: int
    num_touching_boundary: int
    num_islands: int
    largest_size: int
    crossing_h: bool
    crossing_v: bool

    def to_dict(self) -> dict:
        return asdict(self)


def census(r: Realization, k: int, adjacency="corner") -> ComponentCensus:
    """Component statistics of E_k.

    A component is an island when none of its cells lies in the outermost
    column or row of the level-k grid.
    """
    cells, width, height = _level_grid(r, k)
    if len(cells) == 0:
        return ComponentCensus(k, 0, 0, 0, 0, 0, False, False)
    cols = np.ascontiguousarray(cells[:, 0])
    rows = np.ascontiguousarray(cells[:, 1])
    lab = label_kernel(cols, rows, width, height, Adjacency.parse(adjacency) is Adjacency.CORNER)
    ids, sizes = np.unique(lab, return_counts=True)
    on_edge = (cols == 0) | (cols == width - 1) | (rows == 0) | (rows == height - 1)
    touching = np.unique(lab[on_edge])

    def spans(a, b):
        return len(np.intersect1d(lab[a], lab[b])) > 0

    return ComponentCensus(
        level=k,
        num_components=len(ids),
        num_nontrivial=int(np.sum(sizes >= 2)),
        num_touching_boundary=len(touching),
        num_islands=len(ids) - len(touching),
        largest_size=int(sizes.max()),
        crossing_h=spans(cols == 0, cols == width - 1),
        crossing_v=spans(rows == 0, rows == height - 1),
    )
