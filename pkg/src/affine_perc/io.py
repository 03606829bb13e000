"""Serialization of realizations and reports, and SVG/PGM rendering."""
from __future__ import annotations

import csv
import io
import json
import os
import tempfile
from dataclasses import dataclass
from fractions import Fraction
from pathlib import Path

import numpy as np

from .carpet import GridParams, Realization
from .errors import DomainError, ParseError

SWEEP_COLUMNS = ["p", "level", "direction", "domain", "trials", "hits", "p_hat", "ci_low", "ci_high"]


def atomic_write(path, data) -> Path:
    """Write bytes or text to ``path`` via a temporary file and rename."""
    path = Path(path)
    mode = "wb" if isinstance(data, (bytes, bytearray)) else "w"
    fd, tmp = tempfile.mkstemp(dir=path.parent or ".", prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, mode) as fh:
            fh.write(data)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    return path


# ---------------------------------------------------------------- realizations


def realization_to_json(r: Realization) -> str:
    doc = {
        "n": r.n,
        "m": r.m,
        "p": r.p,
        "depth": r.depth,
        "seed": r.seed,
        "copy": r.copy,
    }
    if r.prefix != 1:
        doc["prefix"] = r.prefix
    doc["levels"] = [[[int(c), int(w)] for c, w in lvl] for lvl in r.levels]
    return json.dumps(doc, separators=(",", ":")) + "\n"


def realization_from_json(text: str) -> Realization:
    try:
        doc = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ParseError(f"malformed realization JSON: {exc.msg}", exc.lineno, exc.colno) from None
    if not isinstance(doc, dict):
        raise ParseError("realization JSON must be an object")
    missing = {"n", "m", "p", "depth", "seed", "copy", "levels"} - doc.keys()
    if missing:
        raise ParseError(f"realization JSON missing fields: {sorted(missing)}")
    n, m = doc["n"], doc["m"]
    if not (isinstance(n, int) and isinstance(m, int) and m > n >= 2):
        raise DomainError(f"invalid grid n={n}, m={m}: requires integers m > n >= 2")
    params = GridParams(n, m)
    depth = doc["depth"]
    levels = doc["levels"]
    if not isinstance(depth, int) or depth < 1 or not isinstance(levels, list) or len(levels) != depth:
        raise DomainError("levels must be a list with one entry per level")
    p = float(doc["p"])
    if not 0.0 <= p <= 1.0:
        raise DomainError(f"probability out of range: {p}")
    arrays = []
    prev = None
    for k, lvl in enumerate(levels, start=1):
        a = np.asarray(lvl, dtype=np.int64).reshape(-1, 2)
        w, h = n ** k, m ** k
        if len(a) and (a.min() < 0 or a[:, 0].max() >= w or a[:, 1].max() >= h):
            raise DomainError(f"level {k}: cell outside the {w}x{h} grid")
        keys = a[:, 0] * h + a[:, 1]
        if np.any(np.diff(keys) <= 0):
            raise DomainError(f"level {k}: cells must be unique and sorted")
        if prev is not None and len(a):
            parents = (a[:, 0] // n) * (m ** (k - 1)) + a[:, 1] // m
            if not np.all(np.isin(parents, prev)):
                raise DomainError(f"level {k}: cell without a selected parent")
        prev = keys
        a.setflags(write=False)
        arrays.append(a)
    return Realization(params, p, depth, int(doc["seed"]), int(doc["copy"]), tuple(arrays),
                       int(doc.get("prefix", 1)))


def save_realization(r: Realization, path) -> Path:
    return atomic_write(path, realization_to_json(r))


def load_realization(path) -> Realization:
    return realization_from_json(Path(path).read_text())


# ---------------------------------------------------------------- reports


def to_json(obj) -> str:
    d = obj.to_dict() if hasattr(obj, "to_dict") else obj
    return json.dumps(d, indent=2) + "\n"


def sweep_csv(estimates) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(SWEEP_COLUMNS)
    for e in estimates:
        w.writerow([repr(e.p), e.level, e.direction or "", e.domain, e.trials, e.hits,
                    repr(e.p_hat), repr(e.ci_low), repr(e.ci_high)])
    return buf.getvalue()


def read_sweep_csv(text: str) -> list[dict]:
    rows = list(csv.DictReader(io.StringIO(text)))
    out = []
    for i, row in enumerate(rows, start=2):
        try:
            out.append({
                "p": float(row["p"]), "level": int(row["level"]), "direction": row["direction"],
                "domain": row["domain"], "trials": int(row["trials"]), "hits": int(row["hits"]),
                "p_hat": float(row["p_hat"]), "ci_low": float(row["ci_low"]),
                "ci_high": float(row["ci_high"]),
            })
        except (KeyError, TypeError, ValueError) as exc:
            raise ParseError(f"bad sweep row: {exc}", i, 0) from None
    return out


def census_csv(censuses) -> str:
    buf = io.StringIO()
    rows = [c.to_dict() for c in censuses]
    if not rows:
        return ""
    w = csv.DictWriter(buf, fieldnames=list(rows[0]), lineterminator="\n")
    w.writeheader()
    w.writerows(rows)
    return buf.getvalue()


# ---------------------------------------------------------------- rendering


@dataclass(frozen=True)
class RenderSpec:
    """How to draw one level.  Row 0 is drawn at the bottom."""

    level: int
    format: str = "svg"
    width_px: int = 600
    height_px: int | None = None
    fill: str = "#1f1f1f"
    empty: str = "#ffffff"
    draw_gridlines: bool = False

    @property
    def height(self) -> int:
        return self.height_px or self.width_px


def _fmt(x: Fraction) -> str:
    if x.denominator == 1:
        return str(x.numerator)
    return format(float(x), ".15g")


def _grey(colour: str) -> int:
    c = colour.lstrip("#")
    if len(c) != 6:
        raise DomainError(f"colour must be #rrggbb, got {colour!r}")
    r, g, b = (int(c[i:i + 2], 16) for i in (0, 2, 4))
    return round(0.299 * r + 0.587 * g + 0.114 * b)


def render_svg(r: Realization, spec: RenderSpec) -> str:
    k = spec.level
    n, m = r.n, r.m
    w = Fraction(1, n ** k)
    h = Fraction(1, m ** k)
    stroke = ' stroke="#808080" stroke-width="0.001"' if spec.draw_gridlines else ""
    lines = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{spec.width_px}" '
        f'height="{spec.height}" viewBox="0 0 1 1" preserveAspectRatio="none" '
        'shape-rendering="crispEdges">',
        f'<rect x="0" y="0" width="1" height="1" fill="{spec.empty}"/>',
        f'<g fill="{spec.fill}"{stroke}>',
    ]
    ws, hs = _fmt(w), _fmt(h)
    for c, row in r.cells(k):
        x = c * w
        y = 1 - (row + 1) * h
        lines.append(f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{ws}" height="{hs}"/>')
    lines.append("</g>")
    lines.append("</svg>")
    return "\n".join(lines) + "\n"


def render_pgm(r: Realization, spec: RenderSpec) -> bytes:
    k = spec.level
    gw, gh = r.n ** k, r.m ** k
    W, H = spec.width_px, spec.height
    if W < gw or H < gh:
        raise DomainError(f"{W}x{H} px cannot show a {gw}x{gh} grid without dropping cells")
    img = np.full((H, W), _grey(spec.empty), np.uint8)
    # pixel x belongs to column floor(x * gw / W); pixel rows run top-down
    col_of = (np.arange(W) * gw) // W
    row_of = gh - 1 - (np.arange(H) * gh) // H
    grid = np.zeros((gh, gw), bool)
    cells = r.cells(k)
    if len(cells):
        grid[cells[:, 1], cells[:, 0]] = True
    img[grid[row_of][:, col_of]] = _grey(spec.fill)
    return f"P5\n{W} {H}\n255\n".encode() + img.tobytes()


def render(r: Realization, spec: RenderSpec, out) -> Path:
    if not 1 <= spec.level <= r.depth:
        raise DomainError(f"render level {spec.level} outside 1..{r.depth}")
    if spec.width_px < r.n ** spec.level:
        raise DomainError(f"width_px {spec.width_px} < {r.n ** spec.level} columns")
    fmt = spec.format.lower()
    if fmt == "svg":
        data = render_svg(r, spec)
    elif fmt == "pgm":
        data = render_pgm(r, spec)
    else:
        raise DomainError(f"unknown render format {spec.format!r}")
    return atomic_write(out, data)
