"""Command line entry point: ``rbfcontrol {solve,sweep,bench,nodes}``.

Settings may come from a flat ``key = value`` file (``--config``); flags given
on the command line override the file.
"""

from __future__ import annotations

import argparse
import dataclasses
import logging
import sys

from .geometry import generate_nodes
from .runner import (
    RunConfig,
    SolveReport,
    bench_timing,
    best_by_beta,
    markdown_table,
    mmss,
    reports_to_csv,
    run,
    sweep,
    timing_csv,
    timing_markdown,
)

log = logging.getLogger("rbfcontrol")

# flag name -> (RunConfig field, parser)
_FIELDS = {
    "problem": ("problem", int),
    "method": ("method", str),
    "n": ("n", int),
    "nk": ("n_local", int),
    "c": ("c", float),
    "beta": ("beta", float),
    "precision": ("precision", str),
    "precond": ("precond", lambda s: _onoff(s)),
    "layout": ("layout", str),
    "seed": ("seed", int),
    "poly": ("poly_degree", int),
    "bc_pattern": ("bc_pattern", str),
    "dq_neighbors": ("dq_neighbors", str),
}


def _onoff(s) -> bool:
    if isinstance(s, bool):
        return s
    v = str(s).strip().lower()
    if v in ("on", "1", "true", "yes"):
        return True
    if v in ("off", "0", "false", "no"):
        return False
    raise argparse.ArgumentTypeError(f"expected on/off, got {s!r}")


def _floats(s: str) -> list:
    return [float(t) for t in s.split(",") if t.strip()]


def _ints(s: str) -> list:
    return [int(t) for t in s.split(",") if t.strip()]


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment; keys use the flag names."""
    out = {}
    with open(path) as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key = value")
            k, v = (t.strip() for t in line.split("=", 1))
            k = k.replace("-", "_")
            out[k] = v
    return out


def _common(p: argparse.ArgumentParser, multi: bool = False):
    p.add_argument("--config", help="key = value settings file (flags override it)")
    p.add_argument("--problem", help="1, 2 or 3")
    p.add_argument("--method", help="ac | lam-dq | lam-lam")
    p.add_argument("--n", help="total number of nodes")
    p.add_argument("--nk", help="local stencil size (default 50)")
    p.add_argument("--c", help="shape parameter" + (" (comma list)" if multi else ""))
    p.add_argument("--beta", help="penalty" + (" (comma list)" if multi else ""))
    p.add_argument("--precision", help="double | extended")
    p.add_argument("--precond", help="on | off")
    p.add_argument("--layout", help="halton | grid")
    p.add_argument("--seed", help="node generator seed")
    p.add_argument("--poly", help="polynomial augmentation degree (0 or 1)")
    p.add_argument("--bc-pattern", dest="bc_pattern", help="boundary tag pattern, e.g. DE")
    p.add_argument("--dq-neighbors", dest="dq_neighbors", help="all | interior")
    p.add_argument("--out", help="output path (default stdout)")
    p.add_argument("-v", "--verbose", action="store_true")


def _settings(args) -> dict:
    raw = read_config_file(args.config) if args.config else {}
    for k in _FIELDS:
        v = getattr(args, k, None)
        if v is not None:
            raw[k] = v
    unknown = set(raw) - set(_FIELDS)
    if unknown:
        raise SystemExit(f"unknown config keys: {', '.join(sorted(unknown))}")
    return raw


def _config(raw: dict, skip=()) -> RunConfig:
    kw = {}
    for k, v in raw.items():
        if k in skip:
            continue
        name, conv = _FIELDS[k]
        kw[name] = conv(v)
    return RunConfig(**kw)


def _emit(text: str, out):
    if out:
        with open(out, "w", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _summary(r: SolveReport) -> str:
    if not r.ok:
        return f"FAILED: {r.error}\n"
    m = r.metrics
    lines = [f"{k} = {v}" for k, v in dataclasses.asdict(r.config).items()]
    lines += [
        f"||y - y_hat|| = {m.norm_y_minus_target:.6e}",
        f"||u|| = {m.norm_u:.6e}",
        f"Cost = {m.cost:.6e}",
    ]
    if m.re_y is not None:
        lines += [f"RE_y = {m.re_y:.6e}", f"RE_u = {m.re_u:.6e}"]
    lines += [f"kappa = {r.kappa:.3e}" + (" (estimate)" if r.kappa_estimated and r.config.method == "ac" else "")]
    if r.config.method != "ac":
        lines.append(f"kappa(S) = {r.kappa_S:.3e}")
    lines.append(f"reliable = {r.reliable}")
    t = r.timings
    lines.append("time: " + ", ".join(f"{k} {v:.3f}s" for k, v in t.items())
                 + f" ({mmss(t.get('total', 0.0))})")
    return "\n".join(lines) + "\n"


def cmd_solve(args) -> int:
    cfg = _config(_settings(args))
    try:
        rep = run(cfg)
    except Exception as exc:
        log.error("solve failed: %s: %s", type(exc).__name__, exc)
        return 1
    if args.format == "csv":
        _emit(reports_to_csv([rep]), args.out)
    elif args.format == "md":
        _emit(markdown_table([rep]), args.out)
    else:
        _emit(_summary(rep), args.out)
    return 0


def cmd_sweep(args) -> int:
    raw = _settings(args)
    cs = _floats(str(raw.get("c", "1.0")))
    betas = _floats(str(raw.get("beta", "1e-6")))
    template = _config(raw, skip=("c", "beta"))
    reports = sweep(template, cs, betas, workers=args.workers)
    _emit(reports_to_csv(reports), args.out)
    best = best_by_beta(reports)
    if args.md:
        _emit(markdown_table(list(best.values())), args.md)
    for beta, r in best.items():
        err = r.metrics.re_y if r.metrics.re_y is not None else r.metrics.norm_y_minus_target
        log.info("beta=%g: best c=%g (state error %.3e, kappa %.2e)", beta, r.config.c, err, r.kappa)
    failed = sum(not r.ok for r in reports)
    if failed:
        log.warning("%d of %d grid points failed", failed, len(reports))
    return 0


def cmd_bench(args) -> int:
    raw = _settings(args)
    ns = _ints(str(raw.pop("n", "500")))
    template = _config(raw, skip=("method",))
    rows = bench_timing(args.methods.split(","), ns, template)
    _emit(timing_csv(rows), args.out)
    if args.md:
        _emit(timing_markdown(rows), args.md)
    return 0


def cmd_nodes(args) -> int:
    cfg = _config(_settings(args))
    nodes = generate_nodes(cfg.n, layout=cfg.layout, bc_pattern=cfg.bc_pattern, seed=cfg.seed)
    nodes.to_csv(args.out or sys.stdout)
    return 0


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rbfcontrol", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run one configuration")
    _common(p)
    p.add_argument("--format", choices=("text", "csv", "md"), default="text")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("sweep", help="grid over c and beta; CSV of every point")
    _common(p, multi=True)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--md", help="write the best-c-per-beta markdown table here")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("bench", help="wall-clock time per method and n")
    _common(p)
    p.add_argument("--methods", default="ac,lam-dq")
    p.add_argument("--md", help="also write a markdown table here")
    p.set_defaults(func=cmd_bench)

    p = sub.add_parser("nodes", help="write the node set as CSV")
    _common(p)
    p.set_defaults(func=cmd_nodes)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ValueError, OSError) as exc:
        log.error("%s", exc)
        return 2


if __name__ == "__main__":
    sys.exit(main())
