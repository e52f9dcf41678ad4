"""Experiment driver: single runs, (c, beta) sweeps, timing benchmarks and table output."""

from __future__ import annotations

import csv
import dataclasses
import io
import logging
import math
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional

from . import ac, dq, lam
from .errors import ConditionOverflow
from .geometry import DIRICHLET, fill_distance, generate_nodes
from .kernels import Kernel, PolyBasis
from .linalg import Precision
from .problems import Metrics, compute_metrics, get_problem

logger = logging.getLogger(__name__)

METHODS = ("ac", "lam-dq", "lam-lam")


@dataclass(frozen=True)
class RunConfig:
    problem: int = 1
    method: str = "lam-dq"
    n: int = 622
    n_local: int = 50
    c: float = 1.0
    beta: float = 1e-6
    precision: str = "extended"
    precond: bool = False
    layout: str = "halton"
    seed: int = 0
    poly_degree: int = 1
    bc_pattern: str = "DE"
    dq_neighbors: str = "all"

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}, got {self.method!r}")
        if self.problem not in (1, 2, 3):
            raise ValueError("problem must be 1, 2 or 3")
        if self.n < 9 or self.n_local < 1:
            raise ValueError("n must be at least 9 and n_local positive")
        if not self.c > 0 or not self.beta > 0:
            raise ValueError("c and beta must be positive")
        if self.seed < 0:
            raise ValueError("seed must be non-negative")
        if self.precond and self.method == "ac":
            raise ValueError("the local-matrix preconditioner applies to the local methods only")
        Precision.parse(self.precision)

    def replace(self, **kw) -> RunConfig:
        return dataclasses.replace(self, **kw)


@dataclass
class SolveReport:
    config: RunConfig
    metrics: Optional[Metrics]
    kappa: float = float("nan")
    kappa_S: float = float("nan")
    kappa_estimated: bool = False
    reliable: bool = False
    timings: dict = field(default_factory=dict)
    fill_distance: float = float("nan")
    error: Optional[str] = None

    @property
    def ok(self) -> bool:
        return self.error is None

    @property
    def total_time(self) -> float:
        return float(self.timings.get("total", float("nan")))

    def numbers(self) -> dict:
        """Every reproducible quantity (timings excluded)."""
        m = self.metrics
        return {
            "norm_y": m.norm_y_minus_target if m else None,
            "norm_u": m.norm_u if m else None,
            "cost": m.cost if m else None,
            "re_y": m.re_y if m else None,
            "re_u": m.re_u if m else None,
            "kappa": self.kappa,
            "kappa_S": self.kappa_S,
            "reliable": self.reliable,
            "fill_distance": self.fill_distance,
            "error": self.error,
        }


def _nodes_for(cfg: RunConfig):
    return generate_nodes(cfg.n, layout=cfg.layout, bc_pattern=cfg.bc_pattern, seed=cfg.seed)


def run(cfg: RunConfig, nodes=None) -> SolveReport:
    """Full pipeline for one configuration; timings exclude node generation."""
    prec = Precision.parse(cfg.precision)
    problem = get_problem(cfg.problem)
    nodes = _nodes_for(cfg) if nodes is None else nodes
    kernel, poly = Kernel(cfg.c), PolyBasis(cfg.poly_degree)
    spec = problem.spec(cfg.beta)
    timings = {}
    kappa_s, estimated = float("nan"), False
    t0 = time.perf_counter()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ConditionOverflow)
        if cfg.method == "ac":
            sys_ = ac.assemble_ac(nodes.with_tags(DIRICHLET), kernel, poly, spec, problem, prec)
            t1 = time.perf_counter()
            sol = ac.solve_ac_schur(sys_)
            y, u = ac.nodal_fields(sol)
            timings.update(weights=0.0, assembly=t1 - t0, solve=time.perf_counter() - t1)
            kappa, estimated = sol.kappa.value, sol.kappa.estimated
        else:
            state = lam.solve_state(nodes, kernel, poly, spec, problem, cfg.n_local, prec, cfg.precond)
            y = state.values
            kappa = state.kappa
            kappa_s, estimated = state.kappa_S.value, state.kappa_S.estimated
            if cfg.method == "lam-dq":
                u, t_dq = dq.control_dq(nodes, kernel, poly, spec, y, cfg.n_local, prec, cfg.dq_neighbors)
                extra = {"weights": t_dq}
            else:
                ctrl = lam.solve_control_lam(nodes, kernel, poly, spec, y, problem, cfg.n_local, prec, cfg.precond)
                u = ctrl.values
                kappa = max(kappa, ctrl.kappa)
                extra = ctrl.timings
            timings["weights"] = state.timings["weights"] + extra.get("weights", 0.0)
            timings["assembly"] = state.timings["assembly"] + extra.get("assembly", 0.0)
            timings["solve"] = state.timings["solve"] + extra.get("solve", 0.0)
    timings["total"] = time.perf_counter() - t0
    metrics = compute_metrics(nodes, y, u, problem, cfg.beta)
    return SolveReport(
        cfg, metrics, float(kappa), float(kappa_s), bool(estimated),
        reliable=bool(kappa * prec.unit_roundoff < 1.0),
        timings=timings, fill_distance=fill_distance(nodes),
    )


def _safe_run(cfg: RunConfig) -> SolveReport:
    try:
        return run(cfg)
    except Exception as exc:  # recorded, the sweep goes on
        logger.warning("run %s failed: %s", cfg, exc)
        return SolveReport(cfg, None, error=f"{type(exc).__name__}: {exc}")


def sweep(template: RunConfig, cs: Iterable[float], betas: Iterable[float], workers: int = 1) -> list:
    """One report per (beta, c) grid point, beta-major, in the given order."""
    cs, betas = list(cs), list(betas)
    if not cs or not betas:
        raise ValueError("sweep needs at least one c and one beta")
    grid = [template.replace(c=float(c), beta=float(b)) for b in betas for c in cs]
    if workers <= 1:
        return [_safe_run(cfg) for cfg in grid]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_safe_run, grid))


def best_by_beta(reports: list, reliable_only: bool = True) -> dict:
    """Per beta, the report with the smallest state error among admissible runs.

    The error is RE_y when an exact solution exists and ``||y - y_hat||`` otherwise;
    runs whose condition number exceeds the precision are skipped unless nothing
    else is left.
    """
    out = {}
    for beta in dict.fromkeys(r.config.beta for r in reports):
        group = [r for r in reports if r.config.beta == beta and r.ok]
        if reliable_only and any(r.reliable for r in group):
            group = [r for r in group if r.reliable]
        if not group:
            continue
        out[beta] = min(group, key=_state_error)
    return out


def _state_error(r: SolveReport) -> float:
    m = r.metrics
    v = m.re_y if m.re_y is not None else m.norm_y_minus_target
    return v if math.isfinite(v) else math.inf


def bench_timing(methods: Iterable[str], ns: Iterable[int], template: RunConfig = RunConfig()) -> list:
    """Rows ``(n, method, seconds)``; node generation is excluded from the timing."""
    ns = list(ns)
    if ns != sorted(ns):
        raise ValueError("n values must be ascending")
    rows = []
    for n in ns:
        cfg = template.replace(n=int(n))
        nodes = _nodes_for(cfg)
        for m in methods:
            t0 = time.perf_counter()
            rep = run(cfg.replace(method=m), nodes=nodes)
            rows.append({"n": int(n), "method": m, "seconds": time.perf_counter() - t0,
                         "reliable": rep.reliable})
    return rows


# ------------------------------------------------------------------ output

CSV_FIELDS = [
    "problem", "method", "n", "n_local", "c", "beta", "precision", "precond", "layout", "seed",
    "poly_degree", "bc_pattern", "dq_neighbors",
    "norm_y", "norm_u", "cost", "re_y", "re_u", "kappa", "kappa_S", "kappa_estimated",
    "reliable", "fill_distance", "t_weights", "t_assembly", "t_solve", "t_total", "error",
]


def _fmt(v) -> str:
    if v is None:
        return ""
    if isinstance(v, bool):
        return str(int(v))
    if isinstance(v, float):
        return repr(v)
    return str(v)


def report_row(r: SolveReport) -> dict:
    c = dataclasses.asdict(r.config)
    nums = r.numbers()
    row = {k: c[k] for k in c}
    row.update({k: nums[k] for k in ("norm_y", "norm_u", "cost", "re_y", "re_u", "kappa", "kappa_S",
                                     "reliable", "fill_distance", "error")})
    row["kappa_estimated"] = r.kappa_estimated
    for ph in ("weights", "assembly", "solve", "total"):
        row[f"t_{ph}"] = r.timings.get(ph)
    return {k: _fmt(row[k]) for k in CSV_FIELDS}


def write_reports_csv(reports: list, fh) -> None:
    w = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
    w.writeheader()
    for r in reports:
        w.writerow(report_row(r))


def reports_to_csv(reports: list) -> str:
    buf = io.StringIO()
    write_reports_csv(reports, buf)
    return buf.getvalue()


def _opt_float(s):
    return None if s == "" else float(s)


def read_reports_csv(fh) -> list:
    out = []
    for row in csv.DictReader(fh):
        cfg = RunConfig(
            problem=int(row["problem"]), method=row["method"], n=int(row["n"]), n_local=int(row["n_local"]),
            c=float(row["c"]), beta=float(row["beta"]), precision=row["precision"],
            precond=row["precond"] == "1", layout=row["layout"], seed=int(row["seed"]),
            poly_degree=int(row["poly_degree"]), bc_pattern=row["bc_pattern"], dq_neighbors=row["dq_neighbors"],
        )
        metrics = None
        if row["norm_y"] != "":
            metrics = Metrics(float(row["norm_y"]), float(row["norm_u"]), float(row["cost"]),
                              _opt_float(row["re_y"]), _opt_float(row["re_u"]))
        timings = {ph: float(row[f"t_{ph}"]) for ph in ("weights", "assembly", "solve", "total")
                   if row[f"t_{ph}"] != ""}
        out.append(SolveReport(
            cfg, metrics, float(row["kappa"]), float(row["kappa_S"]), row["kappa_estimated"] == "1",
            row["reliable"] == "1", timings, float(row["fill_distance"]), row["error"] or None,
        ))
    return out


def mmss(seconds: float) -> str:
    m, s = divmod(int(round(seconds)), 60)
    return f"{m:02d}:{s:02d}"


def _sci(v) -> str:
    if v is None or (isinstance(v, float) and not math.isfinite(v)):
        return "-"
    return f"{v:.2e}"


def markdown_table(reports: list) -> str:
    """Quantities down, one column per (method, beta) run."""
    heads = [f"{r.config.method} b={r.config.beta:g}" for r in reports]
    rows = [
        ("c", [f"{r.config.c:g}" for r in reports]),
        ("RE_y", [_sci(r.metrics.re_y) if r.ok else "-" for r in reports]),
        ("RE_u", [_sci(r.metrics.re_u) if r.ok else "-" for r in reports]),
        ("y", [_sci(r.metrics.norm_y_minus_target) if r.ok else "-" for r in reports]),
        ("u", [_sci(r.metrics.norm_u) if r.ok else "-" for r in reports]),
        ("Cost", [_sci(r.metrics.cost) if r.ok else "-" for r in reports]),
        ("kappa", [_sci(r.kappa) for r in reports]),
        ("kappa(S)", [_sci(r.kappa_S) for r in reports]),
        ("Time", [f"{r.total_time:.3f}s ({mmss(r.total_time)})" if r.ok else (r.error or "-") for r in reports]),
    ]
    lines = ["| | " + " | ".join(heads) + " |", "|---" * (len(heads) + 1) + "|"]
    lines += [f"| {name} | " + " | ".join(vals) + " |" for name, vals in rows]
    return "\n".join(lines) + "\n"


def timing_csv(rows: list) -> str:
    buf = io.StringIO()
    w = csv.writer(buf)
    w.writerow(["n", "method", "seconds", "mmss"])
    for r in rows:
        w.writerow([r["n"], r["method"], f"{r['seconds']:.3f}", mmss(r["seconds"])])
    return buf.getvalue()


def timing_markdown(rows: list) -> str:
    methods = list(dict.fromkeys(r["method"] for r in rows))
    ns = list(dict.fromkeys(r["n"] for r in rows))
    cell = {(r["n"], r["method"]): r["seconds"] for r in rows}
    lines = ["| n | " + " | ".join(methods) + " |", "|---" * (len(methods) + 1) + "|"]
    for n in ns:
        vals = [f"{cell[(n, m)]:.3f}s ({mmss(cell[(n, m)])})" if (n, m) in cell else "-" for m in methods]
        lines.append(f"| {n} | " + " | ".join(vals) + " |")
    return "\n".join(lines) + "\n"


__all__ = [
    "CSV_FIELDS",
    "METHODS",
    "RunConfig",
    "SolveReport",
    "bench_timing",
    "best_by_beta",
    "markdown_table",
    "read_reports_csv",
    "reports_to_csv",
    "run",
    "sweep",
    "timing_csv",
    "timing_markdown",
    "write_reports_csv",
]
