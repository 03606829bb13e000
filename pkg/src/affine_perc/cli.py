"""Command-line interface.

Exit status: 0 on success, 2 on invalid arguments, 1 on runtime failure.
The resolved configuration (including any generated seed) is echoed as one
JSON line on stderr so that every run can be repeated.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import secrets
import sys
from pathlib import Path

from . import analytic, connectivity, estimator
from . import io as aio
from .carpet import GridParams, force_prefix, generate
from .errors import DomainError, ParseError

log = logging.getLogger("affine_perc")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def parse_p_grid(text: str) -> list[float]:
    """``lo:hi:step`` (inclusive of hi when it falls on the grid) or a comma list."""
    if ":" not in text:
        return [float(x) for x in text.split(",") if x.strip()]
    try:
        lo, hi, step = (float(x) for x in text.split(":"))
    except ValueError:
        raise DomainError(f"bad p-grid {text!r}; expected lo:hi:step") from None
    if step <= 0 or hi < lo:
        raise DomainError(f"bad p-grid {text!r}; need step > 0 and hi >= lo")
    count = int(math.floor((hi - lo) / step + 1e-9)) + 1
    return [round(lo + i * step, 12) for i in range(count)]


def _common(sp, *, p=True, level=True, trials=False, seed=True):
    sp.add_argument("--n", type=int, required=True)
    sp.add_argument("--m", type=int, required=True)
    if p:
        sp.add_argument("--p", type=float, required=True)
    if level:
        sp.add_argument("--level", type=int, required=True)
    if trials:
        sp.add_argument("--trials", type=int, default=1000)
        sp.add_argument("--threads", type=int, default=None,
                        help=f"worker threads (default ${estimator.THREADS_ENV} or 1)")
    if seed:
        sp.add_argument("--seed", type=int, default=None,
                        help="master seed; a random one is chosen and echoed if omitted")
    sp.add_argument("--out", type=Path, default=None)


def _crossing_flags(sp, *, direction=True, domain=True):
    sp.add_argument("--adjacency", choices=["edge", "corner"], default="corner")
    if domain:
        sp.add_argument("--domain", choices=["unit", "two-tall", "two-wide"], default="unit")
    if direction:
        sp.add_argument("--direction", choices=["h", "v", "H", "V"], default="h")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="affine-perc", description="Self-affine fractal percolation toolkit")
    ap.add_argument("-v", "--verbose", action="store_true")
    sub = ap.add_subparsers(dest="command", required=True, parser_class=_Parser)

    sp = sub.add_parser("generate", help="sample one realization and write it as JSON")
    _common(sp)
    sp.add_argument("--copy", type=int, default=0)
    sp.add_argument("--k0", type=int, default=1, help="force all levels below k0 selected")

    sp = sub.add_parser("render", help="draw one level of a realization")
    sp.add_argument("--input", type=Path, default=None, help="realization JSON (else generate)")
    sp.add_argument("--n", type=int)
    sp.add_argument("--m", type=int)
    sp.add_argument("--p", type=float)
    sp.add_argument("--depth", type=int, default=None)
    sp.add_argument("--level", type=int, required=True)
    sp.add_argument("--seed", type=int, default=None)
    sp.add_argument("--format", choices=["svg", "pgm"], default="svg")
    sp.add_argument("--width", type=int, default=600)
    sp.add_argument("--height", type=int, default=None)
    sp.add_argument("--gridlines", action="store_true")
    sp.add_argument("--out", type=Path, required=True)

    sp = sub.add_parser("estimate", help="Monte Carlo crossing probability")
    _common(sp, trials=True)
    _crossing_flags(sp)

    sp = sub.add_parser("sweep", help="crossing probability over a grid of p")
    _common(sp, p=False, trials=True)
    sp.add_argument("--p-grid", required=True, help="lo:hi:step or comma list")
    sp.add_argument("--coupled", dest="coupled", action="store_true", default=True)
    sp.add_argument("--independent", dest="coupled", action="store_false")
    _crossing_flags(sp)

    sp = sub.add_parser("critical", help="bisection bracket for the crossing threshold")
    _common(sp, p=False, trials=True)
    _crossing_flags(sp)
    sp.add_argument("--threshold", type=float, default=0.5)
    sp.add_argument("--tol", type=float, default=0.01)

    sp = sub.add_parser("census", help="component census of one realization")
    _common(sp)
    sp.add_argument("--depth", type=int, default=None)
    _crossing_flags(sp, direction=False, domain=False)

    sp = sub.add_parser("analytic", help="closed-form quantities for (n, m, p)")
    _common(sp, level=False, seed=False)
    sp.add_argument("--tol", type=float, default=1e-9, help="bisection width for p_A")

    sp = sub.add_parser("compare-hv", help="paired H vs V crossing comparison")
    _common(sp, trials=True)
    _crossing_flags(sp, direction=False, domain=False)

    sp = sub.add_parser("survival", help="Monte Carlo probability that E_level is non-empty")
    _common(sp, trials=True)
    return ap


def _emit(args, text: str, binary: bool = False):
    if args.out is None:
        sys.stdout.write(text)
    else:
        aio.atomic_write(args.out, text)
        print(f"wrote {args.out}", file=sys.stderr)


def _params(args) -> GridParams:
    if args.n is None or args.m is None:
        raise DomainError("--n and --m are required")
    return GridParams(args.n, args.m)


def _check_p(p):
    if p is None or not 0.0 <= p <= 1.0:
        raise DomainError(f"--p must lie in [0, 1], got {p}")


def run(args) -> None:
    cmd = args.command
    if cmd == "analytic":
        _params(args)
        _check_p(args.p)
        rep = analytic.analytic_report(args.n, args.m, args.p, args.tol)
        _emit(args, aio.to_json(rep))
        return

    params = _params(args) if cmd != "render" or args.input is None else None
    if getattr(args, "p", None) is not None or cmd in ("generate", "estimate", "census",
                                                       "compare-hv", "survival"):
        if cmd != "render" or args.input is None:
            _check_p(args.p)
    if getattr(args, "trials", 1) < 1:
        raise DomainError("--trials must be >= 1")
    threads = estimator.resolve_threads(getattr(args, "threads", None))

    if cmd == "generate":
        r = force_prefix(params, args.p, args.level, args.seed, args.k0, copy=args.copy)
        _emit(args, aio.realization_to_json(r))
    elif cmd == "render":
        if args.input is not None:
            r = aio.load_realization(args.input)
        else:
            _check_p(args.p)
            r = generate(params, args.p, args.depth or args.level, args.seed)
        spec = aio.RenderSpec(args.level, args.format, args.width, args.height,
                              draw_gridlines=args.gridlines)
        aio.render(r, spec, args.out)
        print(f"wrote {args.out} ({len(r.cells(args.level))} cells)", file=sys.stderr)
    elif cmd == "estimate":
        est = estimator.estimate_crossing(params, args.p, args.level, args.trials, args.direction,
                                          args.domain, args.adjacency, args.seed, threads)
        _emit(args, aio.to_json(est))
    elif cmd == "sweep":
        grid = parse_p_grid(args.p_grid)
        res = estimator.sweep(params, grid, args.level, args.trials, args.direction, args.domain,
                              args.coupled, args.seed, args.adjacency, threads)
        _emit(args, aio.sweep_csv(res.estimates))
    elif cmd == "critical":
        br = estimator.find_critical(params, args.level, args.trials, args.direction, args.domain,
                                     args.threshold, args.tol, args.seed, args.adjacency, threads)
        _emit(args, aio.to_json(br))
    elif cmd == "census":
        r = generate(params, args.p, args.depth or args.level, args.seed)
        c = connectivity.census(r, args.level, args.adjacency)
        _emit(args, aio.to_json(c))
    elif cmd == "compare-hv":
        rep = estimator.compare_hv(params, args.p, args.level, args.trials, args.seed,
                                   args.adjacency, threads)
        _emit(args, aio.to_json(rep))
    elif cmd == "survival":
        est = estimator.estimate_survival(params, args.p, args.level, args.trials, args.seed,
                                          threads)
        _emit(args, aio.to_json(est))


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 2
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if hasattr(args, "seed") and args.seed is None:
        args.seed = secrets.randbits(63)
    if hasattr(args, "direction"):
        args.direction = args.direction.upper()
    if getattr(args, "threads", None) is None and hasattr(args, "threads"):
        args.threads = estimator.resolve_threads(None)
    config = {k: (str(v) if isinstance(v, Path) else v) for k, v in vars(args).items()}
    print("config " + json.dumps(config, sort_keys=True), file=sys.stderr)
    try:
        run(args)
    except (DomainError, ParseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:
        log.debug("runtime failure", exc_info=True)
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
