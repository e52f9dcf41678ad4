"""Acceptance suite: one PASS/FAIL line per criterion, echoed in the terminal summary.

Each test records its line before asserting, so failing criteria still report
their measured values.  Shared runs are cached per module.
"""

import time
from fractions import Fraction

import numpy as np
import pytest

from conftest import ACCEPTANCE_LINES
from rbfcontrol import dq, lam
from rbfcontrol.ac import assemble_ac, solve_ac_monolithic, solve_ac_schur
from rbfcontrol.dq import dq_system, dq_weights
from rbfcontrol.geometry import build_stencils, generate_nodes
from rbfcontrol.kernels import Kernel, OperatorSpec, OpTag, PolyBasis, eval_kernel_op, reconstruction_row
from rbfcontrol.lam import STATE, local_systems, weight_rows
from rbfcontrol.linalg import Precision, as_float, batch_matmul, concatenate
from rbfcontrol.problems import compute_metrics, get_problem, verify_exact_solution
from rbfcontrol.runner import RunConfig, bench_timing, best_by_beta, run, sweep

pytestmark = pytest.mark.slow

EXT = Precision.EXTENDED
DBL = Precision.DOUBLE

P1_LAM = RunConfig(problem=1, method="lam-dq", n=622, n_local=50, precision="extended")
P1_AC = P1_LAM.replace(method="ac")
AC_CS = [round(0.1 * k, 1) for k in range(1, 11)]
LAM_CS = [0.5, 1.0, 2.0, 5.0]
# problems 2 and 3 are convection dominated; their useful shape parameters are small
CONV_CS = [1e-4, 4e-4, 1e-3, 3e-3, 7e-3, 2e-2]


def record(name, ok, detail):
    line = f"{'PASS' if ok else 'FAIL'}  {name}: {detail}"
    ACCEPTANCE_LINES.append(line)
    print(line)
    return ok


_cache = {}


def cached(key, fn):
    if key not in _cache:
        _cache[key] = fn()
    return _cache[key]


def lam_sweep():
    return cached("lam", lambda: sweep(P1_LAM, LAM_CS, [1e-6]))


def lam_tuned():
    return best_by_beta(lam_sweep())[1e-6]


# ---------------------------------------------------------------- criteria


def test_exact_solution_oracle():
    pts = np.random.default_rng(7).uniform(size=(100, 2))
    t0 = time.perf_counter()
    res = {b: verify_exact_solution(b, pts, EXT) for b in ("1e-4", "1e-6", "1e-10")}
    dt = time.perf_counter() - t0
    worst = max(res.values())
    ok = worst <= 1e-25 and dt < 1.0
    record("exact-solution oracle", ok,
           f"max residual {worst:.2e} (<= 1e-25) over beta 1e-4/1e-6/1e-10, {dt:.3f} s (< 1 s)")
    assert ok


def test_ac_accuracy_problem1():
    reps = sweep(P1_AC, AC_CS, [1e-6, 1e-10])
    best = best_by_beta(reps)
    r6, r10 = best[1e-6], best[1e-10]
    ok = r6.metrics.re_y <= 1e-7 and r10.metrics.re_y <= 1e-9
    record("AC accuracy (problem 1, n=622, extended)", ok,
           f"RE_y {r6.metrics.re_y:.2e} at beta=1e-6 (c={r6.config.c:g}, <= 1e-7); "
           f"RE_y {r10.metrics.re_y:.2e} at beta=1e-10 (c={r10.config.c:g}, <= 1e-9)")
    assert ok


def test_lam_dq_accuracy_problem1():
    r = lam_tuned()
    m = r.metrics
    ok = m.re_y <= 1e-5 and m.re_u <= 1e-3 and r.total_time < 60
    record("LAM-DQ accuracy (problem 1, n=622, nk=50, extended)", ok,
           f"c={r.config.c:g}: RE_y {m.re_y:.2e} (<= 1e-5), RE_u {m.re_u:.2e} (<= 1e-3), "
           f"{r.total_time:.1f} s (< 60 s)")
    assert ok


def test_global_stability_trend():
    c = lam_tuned().config.c
    k4 = run(P1_LAM.replace(c=c, beta=1e-4)).kappa_S
    k10 = run(P1_LAM.replace(c=c, beta=1e-10)).kappa_S
    ok = k10 <= 10 and k10 < k4
    record("kappa(S) trend", ok, f"c={c:g}: kappa(S) {k4:.3g} at beta=1e-4, {k10:.3g} at beta=1e-10 (<= 10)")
    assert ok


def test_preconditioner_effect():
    assert Kernel(5).perturbed().c == Fraction("5.001")
    plain = run(P1_LAM.replace(c=5.0))
    pre = run(P1_LAM.replace(c=5.0, precond=True))
    tuned = lam_tuned()
    ratio = pre.kappa / plain.kappa
    ok = ratio <= 1e-3 and pre.metrics.re_y <= 10 * tuned.metrics.re_y
    record("preconditioner (c=5, c+=5.001, beta=1e-6)", ok,
           f"kappa(PA) {pre.kappa:.2e} vs kappa(A) {plain.kappa:.2e} (ratio {ratio:.1e} <= 1e-3); "
           f"RE_y {pre.metrics.re_y:.2e} vs tuned {tuned.metrics.re_y:.2e} (<= 10x)")
    assert ok


def test_timing_ratio_n2000():
    rows = bench_timing(["ac", "lam-dq"], [2000], P1_LAM.replace(c=0.4))
    t = {r["method"]: r["seconds"] for r in rows}
    ratio = t["ac"] / t["lam-dq"]
    ok = ratio >= 10
    record("timing n=2000 (extended)", ok,
           f"AC {t['ac']:.1f} s, LAM-DQ {t['lam-dq']:.1f} s, ratio {ratio:.1f} (>= 10)")
    assert ok


def _conv_scaling(problem):
    reps = sweep(P1_LAM.replace(problem=problem), CONV_CS, [1e-2, 1e-6, 1e-10])
    best = best_by_beta(reps)
    cost = {b: best[b].metrics.cost for b in best}
    err = {b: best[b].metrics.norm_y_minus_target for b in best}
    return best, cost[1e-10] / cost[1e-6], err[1e-10] / err[1e-2]


def test_cost_beta_scaling_problems_2_3():
    parts, oks = [], []
    for p in (2, 3):
        best, cost_ratio, err_ratio = _conv_scaling(p)
        ok = 1e-5 <= cost_ratio <= 1e-3 and err_ratio <= 1e-3
        oks.append(ok)
        cs = "/".join(f"{best[b].config.c:g}" for b in (1e-2, 1e-6, 1e-10))
        part = (f"problem {p} {'ok' if ok else 'fails'} (c={cs}): Cost ratio {cost_ratio:.2e} in [1e-5, 1e-3], "
                f"||y-yh|| ratio {err_ratio:.2e} <= 1e-3")
        if p == 2:
            # the boundary rows carry g = 1 with target 0; the interior-only norm isolates the control effect
            nodes = generate_nodes(622)
            inner = {b: _interior_metrics(best[b].config, nodes) for b in (1e-2, 1e-6, 1e-10)}
            yi = {b: m.norm_y_minus_target for b, m in inner.items()}
            ci = {b: m.cost for b, m in inner.items()}
            part += (f" [info, interior nodes and interior DQ stencils: Cost ratio {ci[1e-10] / ci[1e-6]:.2e}, "
                     f"||y-yh|| ratio {yi[1e-10] / yi[1e-2]:.2e}]")
        parts.append(part)
    ok = all(oks)
    record("Cost-beta scaling (LAM-DQ)", ok, "; ".join(parts))
    assert ok


def _interior_metrics(cfg, nodes):
    """Metrics over interior nodes only, with DQ stencils drawn from interior nodes."""
    problem = get_problem(cfg.problem)
    spec = problem.spec(cfg.beta)
    kernel, poly = Kernel(cfg.c), PolyBasis(cfg.poly_degree)
    y = lam.solve_state(nodes, kernel, poly, spec, problem, cfg.n_local, EXT).values
    u, _ = dq.control_dq(nodes, kernel, poly, spec, y, cfg.n_local, EXT, "interior")
    return compute_metrics(nodes, y, u, problem, cfg.beta, over="interior")


# ---------------------------------------------------------------- property suites


def _kernel_fd_worst():
    import mpmath

    spec = OperatorSpec.convection(Fraction(1, 200), Fraction("2.4"), "1e-4")
    x, xj = np.array([0.31, 0.62]), np.array([0.5, 0.45])
    worst = 0.0
    with mpmath.workdps(40):
        w1, w2 = (mpmath.mpf(w) for w in spec.omega)
        eps = mpmath.mpf(1) / 200

        def phi(s, t):
            return mpmath.sqrt(1 + (s - 0.5) ** 2 + (t - 0.45) ** 2)

        p = (mpmath.mpf(0.31), mpmath.mpf(0.62))
        d = {k: mpmath.diff(phi, p, k) for k in [(1, 0), (0, 1), (2, 0), (0, 2), (1, 1), (4, 0), (2, 2), (0, 4)]}
        lap = d[(2, 0)] + d[(0, 2)]
        conv = w1 * d[(1, 0)] + w2 * d[(0, 1)]
        conv2 = w1 * w1 * d[(2, 0)] + 2 * w1 * w2 * d[(1, 1)] + w2 * w2 * d[(0, 2)]
        bilap = d[(4, 0)] + 2 * d[(2, 2)] + d[(0, 4)]
        ref = {OpTag.E: -eps * lap + conv, OpTag.ESTAR: -eps * lap - conv,
               OpTag.ESTAR_E: eps * eps * bilap - conv2, OpTag.LAPLACIAN: lap}
    for op, want in ref.items():
        got = float(eval_kernel_op(op, spec, Kernel(1), x, xj))
        worst = max(worst, abs(got - float(want)) / abs(float(want)))
    return worst


def _dq_checks(nodes):
    spec = OperatorSpec.convection(Fraction(1, 200), Fraction("2.4"), "1e-6")
    w = dq_weights(nodes, Kernel("0.01"), PolyBasis(1), spec, n_k=50)
    x = nodes.points
    exact = np.max(np.abs(as_float(w.apply(1.0 + x[:, 0] - x[:, 1])) - (float(spec.omega[0]) - float(spec.omega[1]))))
    rows = np.random.default_rng(3).choice(np.arange(nodes.n_boundary, nodes.n), 100, replace=False)
    we = dq_weights(nodes, Kernel(1), PolyBasis(1), spec, rows=rows, n_k=50, precision=EXT)
    A = dq_system(nodes, Kernel(1), PolyBasis(1), we.neighbors, EXT)
    rhs = reconstruction_row(OpTag.E, spec, Kernel(1), PolyBasis(1), x[rows], x[we.neighbors], EXT)
    sol = concatenate([we.weights, we.multipliers], axis=1)
    r = as_float(batch_matmul(A, sol[:, :, None])[:, :, 0] - rhs)
    resid = float(np.max(np.max(np.abs(r), axis=1) / np.max(np.abs(as_float(rhs)), axis=1)))
    return exact, resid


def _schur_check():
    nodes = generate_nodes(100).with_tags("D")
    sys = assemble_ac(nodes, Kernel("0.05"), PolyBasis(1), OperatorSpec.poisson("1e-6"), get_problem(1), DBL)
    a, b = solve_ac_schur(sys), solve_ac_monolithic(sys)
    return float(np.max(np.abs(a.lam - b.lam)) / np.max(np.abs(b.lam))), a.kappa.value


def _lam_linear_check(nodes):
    spec = OperatorSpec.convection(Fraction(1, 200), Fraction("2.4"), "1e-6")
    batch = local_systems(nodes, build_stencils(nodes, 50), Kernel(1), PolyBasis(1), spec, STATE, DBL)
    pts = nodes.points[batch.members]
    f = 0.5 + pts[..., 0] - 3.0 * pts[..., 1]
    d = np.concatenate([f, np.zeros((batch.n_centers, 3))], axis=1)
    e_rows = np.concatenate([batch.kinds[:, :50] == 2, np.zeros((batch.n_centers, 3), bool)], axis=1)
    d[e_rows] = float(spec.omega[0]) - 3.0 * float(spec.omega[1])
    w = weight_rows(batch, condition=False).weights
    return float(np.max(np.abs((w * d).sum(axis=1) - f[:, 0])))


def test_property_suites(nodes622):
    fd = _kernel_fd_worst()
    dq_exact, dq_resid = _dq_checks(nodes622)
    schur, kappa_g = _schur_check()
    lam_lin = _lam_linear_check(nodes622)
    tuned = lam_tuned().config
    u_dq = _control_field(tuned)
    u_ll = _control_field(tuned.replace(method="lam-lam"))
    agree = float(np.linalg.norm(u_dq - u_ll) / np.linalg.norm(u_ll))
    small = RunConfig(n=100, n_local=20)
    ser = sweep(small, [0.5, 1.0], [1e-4, 1e-6], workers=1)
    par = sweep(small, [0.5, 1.0], [1e-4, 1e-6], workers=2)
    determ = [r.numbers() for r in ser] == [r.numbers() for r in par]
    checks = {
        f"kernel FD rel err {fd:.1e} <= 1e-6": fd <= 1e-6,
        f"DQ linear exactness {dq_exact:.1e} <= 1e-8": dq_exact <= 1e-8,
        f"DQ defining residual {dq_resid:.1e} <= 1e-10 (extended)": dq_resid <= 1e-10,
        f"Schur vs monolithic {schur:.1e} <= 1e-8 (kappa(G) {kappa_g:.1e})": schur <= 1e-8,
        f"LAM linear reproduction {lam_lin:.1e} <= 1e-8": lam_lin <= 1e-8,
        f"LAM-DQ vs LAM-LAM control {agree:.1e} <= 1e-2": agree <= 1e-2,
        f"parallel sweep deterministic {determ}": determ,
    }
    ok = all(checks.values())
    record("property suites", ok, "; ".join(checks))
    assert ok


def _control_field(cfg):
    nodes = generate_nodes(cfg.n)
    problem = get_problem(cfg.problem)
    spec = problem.spec(cfg.beta)
    kernel, poly = Kernel(cfg.c), PolyBasis(cfg.poly_degree)
    y = lam.solve_state(nodes, kernel, poly, spec, problem, cfg.n_local, EXT).values
    if cfg.method == "lam-dq":
        u, _ = dq.control_dq(nodes, kernel, poly, spec, y, cfg.n_local, EXT)
    else:
        u = lam.solve_control_lam(nodes, kernel, poly, spec, y, problem, cfg.n_local, EXT).values
    return as_float(u)


def test_large_smoke_problem2():
    cfg = RunConfig(problem=2, n=5000, c=1e-3, beta=1e-6)
    t0 = time.perf_counter()
    nodes = generate_nodes(cfg.n)
    problem = get_problem(2)
    spec = problem.spec(cfg.beta)
    y = lam.solve_state(nodes, Kernel(cfg.c), PolyBasis(1), spec, problem, 50, EXT).values
    u, _ = dq.control_dq(nodes, Kernel(cfg.c), PolyBasis(1), spec, y, 50, EXT)
    dt = time.perf_counter() - t0
    uf = as_float(u)
    finite = bool(np.all(np.isfinite(uf)) and np.all(np.isfinite(as_float(y))))
    zero_bc = not uf[: nodes.n_boundary].any()
    ok = finite and zero_bc
    record("smoke run (problem 2, n=5000)", ok,
           f"completed in {dt:.1f} s, finite fields {finite}, u = 0 on all {nodes.n_boundary} boundary nodes {zero_bc}")
    assert ok
