"""Command line front end: solve problems, run diagnostics, reproduce studies.

Every behavior here is a thin shell over the library; artifacts are
plot-ready CSV plus JSON summaries, and each output directory receives
exactly one manifest describing the run.

Exit codes: 0 success/converged, 1 usage or data error, 2 non-convergent
termination or failed reproduction verdict, 3 enumeration refusal.
"""

import argparse
import json
import secrets
import shlex
import sys
import time
from dataclasses import asdict
from pathlib import Path

import numpy as np

from .diagnostics import EnumerationTooLarge, diagnostic_report, dr_fixed_point_set
from .instances import GeneratorSpec, ap_stuck_start, build, dr_cycle_start, perturb_start
from .problem import (
    FeasibilityProblem,
    SparsityConstraint,
    fingerprint,
    load_problem,
)
from .projections import sparse_margin
from .solvers import (
    QuantityHitZero,
    RateEstimateError,
    SolverConfig,
    douglas_rachford_step,
    estimate_rate,
    log_linear_fit,
    predict_rates,
    run_alternating_projections,
    run_douglas_rachford,
    run_projected_gradient,
    trace_to_csv,
)
from .validation import as_vector

_FIXED_BUILTINS = ("hadamard7x8", "pathological")
_GENERATED_BUILTINS = ("gaussian", "row_orthonormal", "fourier_like")

_RUNNERS = {
    "ap": run_alternating_projections,
    "dr": run_douglas_rachford,
    "pg": run_projected_gradient,
}

# identical-input reruns must hash identically; keep all knobs explicit
_ROW_ORTHONORMAL_TOL = 1e-12


class _Parser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; the contract reserves 2
    for non-convergence, so remap usage errors to 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        print(f"{self.prog}: error: {message}", file=sys.stderr)
        raise SystemExit(1)


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="spaf", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)

    def add_problem_flags(p):
        p.add_argument("--builtin", choices=_FIXED_BUILTINS + _GENERATED_BUILTINS,
                       help="named instance or generator kind")
        p.add_argument("--problem", help="path to a problem JSON file")
        p.add_argument("--m", type=int, help="rows for generated kinds")
        p.add_argument("--n", type=int, help="columns for generated kinds")
        p.add_argument("--s", type=int, help="sparsity for generated kinds")
        p.add_argument("--solution-scale", type=float, default=10.0,
                       help="planted magnitudes drawn from [1, scale)")
        p.add_argument("--seed", type=int, default=None,
                       help="seed for generation and perturbation")
        p.add_argument("--out", default=".", help="output directory")

    solve = sub.add_parser("solve", help="run a solver and emit trace artifacts")
    add_problem_flags(solve)
    solve.add_argument("--alg", choices=sorted(_RUNNERS), required=True)
    solve.add_argument("--tau", type=float, default=1.0,
                       help="inverse step size for pg")
    solve.add_argument("--max-iters", type=int, default=10000)
    solve.add_argument("--gap-tol", type=float, default=1e-10)
    solve.add_argument("--perturb", type=float, default=None,
                       help="start at known solution plus uniform noise of this amplitude")
    solve.add_argument("--x0-file", default=None,
                       help="JSON file holding the start vector")
    solve.add_argument("--store-iterates", action="store_true")
    solve.set_defaults(func=cmd_solve)

    diagnose = sub.add_parser("diagnose", help="enumerate regularity diagnostics")
    add_problem_flags(diagnose)
    diagnose.add_argument("--order", type=int, default=None,
                          help="support order; defaults to 2s capped at n")
    diagnose.add_argument("--cap", type=int, default=2_000_000,
                          help="refuse enumerations larger than this")
    diagnose.add_argument("--tau", type=float, default=1.0,
                          help="step parameter used in the rate predictions")
    diagnose.set_defaults(func=cmd_diagnose)

    reproduce = sub.add_parser("reproduce", help="rerun a recorded study protocol")
    reproduce.add_argument("tag", choices=sorted(_REPRODUCE_TAGS))
    reproduce.add_argument("--seed", type=int, required=True,
                           help="base seed; reproduce runs must be deterministic")
    reproduce.add_argument("--out", default=".", help="output directory")
    reproduce.set_defaults(func=cmd_reproduce)
    return parser


def _resolve_problem(args):
    """Build the problem from --problem or --builtin; returns (problem, seed)."""
    if args.problem and args.builtin:
        raise ValueError("--problem and --builtin are mutually exclusive")
    seed = args.seed
    if args.problem:
        problem = load_problem(Path(args.problem).read_text())
    elif args.builtin in _FIXED_BUILTINS:
        problem = build(GeneratorSpec(kind=args.builtin))
    elif args.builtin in _GENERATED_BUILTINS:
        if args.m is None or args.n is None or args.s is None:
            raise ValueError(f"--builtin {args.builtin} needs --m, --n and --s")
        if seed is None:
            seed = secrets.randbits(32)
        problem = build(GeneratorSpec(kind=args.builtin, m=args.m, n=args.n,
                                      s=args.s, seed=seed,
                                      solution_scale=args.solution_scale))
    else:
        raise ValueError("no problem given; use --problem or --builtin")
    return problem, seed


def _resolve_start(args, problem, seed):
    """Start vector plus the seed actually consumed (None when untouched)."""
    if args.x0_file and args.perturb is not None:
        raise ValueError("--x0-file and --perturb are mutually exclusive")
    if args.x0_file:
        payload = json.loads(Path(args.x0_file).read_text())
        if isinstance(payload, dict):
            payload = payload.get("x0")
        return as_vector(payload, length=problem.n, name="x0"), seed
    if args.perturb is not None:
        if seed is None:
            seed = secrets.randbits(32)
        # keep the perturbation stream disjoint from the generator stream
        start = perturb_start(problem, args.perturb, seed=seed + 1)
        return start.point, seed
    return np.zeros(problem.n), seed


def _write_json(path: Path, payload):
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def _write_manifest(out_dir: Path, args, resolved, problem, artifacts, started):
    manifest = {
        "command_line": "spaf " + " ".join(shlex.quote(a) for a in args.argv),
        "resolved_config": resolved,
        "problem_fingerprint": fingerprint(problem),
        "artifact_paths": sorted(artifacts),
        "duration_seconds": round(time.perf_counter() - started, 6),
    }
    _write_json(out_dir / "manifest.json", manifest)


def _safe_rate(trace, quantity="gap"):
    try:
        return estimate_rate(trace, quantity)
    except (RateEstimateError, QuantityHitZero):
        return None


def _tail_fit(series):
    """Log-linear fit over the tail half of the positive prefix."""
    positive = []
    for v in series:
        if v <= 0.0:
            break
        positive.append(v)
    tail = positive[len(positive) // 2:]
    if len(tail) < 5:
        return None, None
    return log_linear_fit(tail)


def cmd_solve(args) -> int:
    started = time.perf_counter()
    problem, seed = _resolve_problem(args)
    x0, seed = _resolve_start(args, problem, seed)
    config = SolverConfig(max_iterations=args.max_iters, gap_tol=args.gap_tol,
                          tau=args.tau, store_iterates=args.store_iterates)
    trace = _RUNNERS[args.alg](problem, x0, config)

    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    artifacts = ["trace.csv", "summary.json"]
    trace_to_csv(trace, out_dir / "trace.csv")
    summary = {
        "algorithm": args.alg,
        "termination": trace.termination,
        "iterations": trace.iterations,
        "final_gap": trace.per_iteration[-1].gap,
        "empirical_rate": _safe_rate(trace),
        "ambiguity_count": trace.ambiguity_count,
        "cycle_period": trace.cycle_period,
    }
    _write_json(out_dir / "summary.json", summary)
    if args.store_iterates:
        stacked = np.column_stack(
            [np.arange(len(trace.iterates)), np.vstack(trace.iterates)]
        )
        header = "k," + ",".join(f"x{j}" for j in range(problem.n))
        np.savetxt(out_dir / "iterates.csv", stacked, delimiter=",",
                   header=header, comments="")
        artifacts.append("iterates.csv")
    resolved = {
        "algorithm": args.alg,
        "builtin": args.builtin,
        "problem": args.problem,
        "tau": args.tau,
        "max_iterations": args.max_iters,
        "gap_tol": args.gap_tol,
        "perturb": args.perturb,
        "x0_file": args.x0_file,
        "store_iterates": args.store_iterates,
        "seed": seed,
    }
    _write_manifest(out_dir, args, resolved, problem, artifacts, started)
    print(json.dumps(summary, sort_keys=True))
    return 0 if trace.termination == "converged" else 2


def cmd_diagnose(args) -> int:
    started = time.perf_counter()
    problem, seed = _resolve_problem(args)
    aset = problem.affine
    order = args.order
    if order is None:
        order = min(2 * problem.s, problem.n)
    report = diagnostic_report(aset, order, cap=args.cap)

    gram = aset.M @ aset.M.T
    row_orthonormal = bool(
        np.max(np.abs(gram - np.eye(aset.m))) <= _ROW_ORTHONORMAL_TOL
    )
    try:
        rates = asdict(predict_rates(
            _NuMu(report["nu"], report["mu"]), report["uprip_delta"],
            tau=args.tau, row_orthonormal=row_orthonormal,
        ))
    except ValueError:
        rates = None
    payload = {
        "report": report,
        "rates": rates,
        "tau": args.tau,
        "row_orthonormal": row_orthonormal,
    }
    print(json.dumps(payload, sort_keys=True))
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    _write_json(out_dir / "diagnostics.json", payload)
    resolved = {"order": order, "cap": args.cap, "tau": args.tau,
                "builtin": args.builtin, "problem": args.problem, "seed": seed}
    _write_manifest(out_dir, args, resolved, problem, ["diagnostics.json"], started)
    return 0


class _NuMu:
    def __init__(self, nu, mu):
        self.nu = nu
        self.mu = mu


class _Check:
    def __init__(self, name, passed, detail=""):
        self.name = name
        self.passed = bool(passed)
        self.detail = detail

    def as_dict(self):
        return {"name": self.name, "passed": self.passed, "detail": self.detail}


def _run_batch(problem, runner, amplitudes_seed_pairs, config=None):
    traces = []
    for amplitude, seed in amplitudes_seed_pairs:
        start = perturb_start(problem, amplitude, seed=seed).point
        traces.append(runner(problem, start, config or SolverConfig()))
    return traces


def _fig_rip(tag_letter, seed, out_dir):
    alg, amplitude = {
        "a": ("ap", 1.0), "b": ("ap", 100.0),
        "c": ("dr", 1.0), "d": ("dr", 100.0),
    }[tag_letter]
    problem = build(GeneratorSpec(kind="hadamard7x8"))
    traces = _run_batch(problem, _RUNNERS[alg],
                        [(amplitude, seed + i) for i in range(10)])
    artifacts = []
    runs = []
    for i, trace in enumerate(traces):
        name = f"trace_seed{i}.csv"
        trace_to_csv(trace, out_dir / name)
        artifacts.append(name)
        runs.append({
            "seed": seed + i,
            "termination": trace.termination,
            "iterations": trace.iterations,
            "final_gap": trace.per_iteration[-1].gap,
            "final_distance": trace.per_iteration[-1].dist_to_solution,
        })
    converged = [t for t in traces if t.termination == "converged"]
    checks = []
    if alg == "ap":
        checks.append(_Check("all runs converged", len(converged) == len(traces),
                             f"{len(converged)}/{len(traces)}"))
        worst = max(t.per_iteration[-1].dist_to_solution for t in traces)
        checks.append(_Check("final distance to solution <= 1e-8",
                             worst <= 1e-8, f"worst {worst:.3e}"))
        if tag_letter == "b":
            rates = [_safe_rate(t, "distance") for t in traces]
            bound = 1.0 / 3.0 + 0.05
            ok = all(r is None or r <= bound for r in rates)
            shown = max((r for r in rates if r is not None), default=0.0)
            checks.append(_Check("tail distance contraction <= 1/3 + 0.05",
                                 ok, f"worst {shown:.4f}"))
    elif tag_letter == "c":
        checks.append(_Check("all shadow sequences converged",
                             len(converged) == len(traces),
                             f"{len(converged)}/{len(traces)}"))
        sol_support = tuple(np.flatnonzero(problem.known_solution))
        desc = dr_fixed_point_set(problem.affine, sol_support)
        basis = np.hstack([desc.basis_intersection, desc.basis_orthogonal])
        fix_dists = []
        far_count = 0
        for trace in traces:
            d = trace.final_point - desc.anchor
            fix_dists.append(float(np.linalg.norm(d - basis @ (basis.T @ d))))
            gap_to_solution = np.linalg.norm(
                trace.final_point - problem.known_solution)
            if gap_to_solution > 1e-2:
                far_count += 1
        checks.append(_Check("final iterates within 1e-8 of the fixed-point set",
                             max(fix_dists) <= 1e-8,
                             f"worst {max(fix_dists):.3e}"))
        checks.append(_Check("some final iterate stays > 1e-2 from the intersection",
                             far_count >= 1, f"{far_count} of {len(traces)}"))
    else:
        checks.append(_Check("at least 9 of 10 runs converged",
                             len(converged) >= 9,
                             f"{len(converged)}/{len(traces)}"))
    return problem, checks, runs, artifacts


def _fig_fourier(tag_letter, seed, out_dir):
    alg = "ap" if tag_letter in ("a", "b") else "dr"
    exact = tag_letter in ("a", "c")
    problem = build(GeneratorSpec(kind="fourier_like", m=128, n=1024, s=5,
                                  seed=seed))
    if not exact:
        # sparsity overestimated by roughly 7 percent, at least one
        problem = FeasibilityProblem(
            affine=problem.affine,
            sparsity=SparsityConstraint(n=problem.n,
                                        s=max(problem.s + 1, round(1.07 * problem.s))),
            known_solution=problem.known_solution,
        )
    radius = sparse_margin(problem.known_solution) / 64.0
    traces = _run_batch(problem, _RUNNERS[alg],
                        [(radius, seed + 1 + i) for i in range(3)])
    artifacts = []
    runs = []
    fits = []
    for i, trace in enumerate(traces):
        name = f"trace_seed{i}.csv"
        trace_to_csv(trace, out_dir / name)
        artifacts.append(name)
        rate, r2 = _tail_fit(trace.series("gap"))
        fits.append((rate, r2))
        runs.append({
            "seed": seed + 1 + i,
            "termination": trace.termination,
            "iterations": trace.iterations,
            "final_gap": trace.per_iteration[-1].gap,
            "tail_rate": rate,
            "tail_r_squared": r2,
        })
    converged = sum(t.termination == "converged" for t in traces)
    checks = [_Check("all runs converged", converged == len(traces),
                     f"{converged}/{len(traces)}")]
    if alg == "ap" and exact:
        worst = min((r2 for _, r2 in fits if r2 is not None), default=0.0)
        checks.append(_Check("tail gap decay is log-linear (R^2 >= 0.95)",
                             all(r2 is not None and r2 >= 0.95 for _, r2 in fits),
                             f"worst R^2 {worst:.4f}"))
    if alg == "dr" and not exact:
        ok = all(rate is not None and rate < 1.0 for rate, _ in fits)
        checks.append(_Check("tail rate below 1 despite overestimated sparsity",
                             ok, str([None if r is None else round(r, 5)
                                      for r, _ in fits])))
    return problem, checks, runs, artifacts


def _example_cycle(seed, out_dir):
    problem = build(GeneratorSpec(kind="pathological"))
    ap_trace = run_alternating_projections(
        problem, ap_stuck_start(), SolverConfig(store_iterates=True))
    dr_trace = run_douglas_rachford(problem, dr_cycle_start())
    trace_to_csv(ap_trace, out_dir / "trace_ap.csv")
    trace_to_csv(dr_trace, out_dir / "trace_dr.csv")

    gaps = [abs(r.gap - np.sqrt(20.0)) for r in ap_trace.per_iteration]
    points = {tuple(np.round(x, 8)) for x in ap_trace.iterates}
    x0 = dr_cycle_start()
    scale = np.linalg.norm(x0)
    x1, _, _ = douglas_rachford_step(problem, x0)
    x2, _, _ = douglas_rachford_step(problem, x1)
    step_err = np.linalg.norm(x1 - (x0 + np.array([-5.0, 0.0, 5.0])))
    loop_err = np.linalg.norm(x2 - x0)

    checks = [
        _Check("ap reports a period-2 cycle",
               ap_trace.termination == "cycle_detected" and ap_trace.cycle_period == 2,
               f"{ap_trace.termination}, period {ap_trace.cycle_period}"),
        _Check("ap cycle visits the stuck pair",
               points == {(-4.0, 0.0, 0.0), (0.0, 0.0, -4.0)}, str(sorted(points))),
        _Check("ap flags every iteration ambiguous",
               all(r.ambiguous for r in ap_trace.per_iteration),
               f"{ap_trace.ambiguity_count}/{ap_trace.iterations}"),
        _Check("ap gap constant at sqrt(20) within 1e-10",
               max(gaps) <= 1e-10, f"worst {max(gaps):.3e}"),
        _Check("dr reports a period-2 cycle",
               dr_trace.termination == "cycle_detected" and dr_trace.cycle_period == 2,
               f"{dr_trace.termination}, period {dr_trace.cycle_period}"),
        _Check("dr cycle step is (-5,0,5) within 1e-6 relative",
               step_err <= 1e-6 * scale, f"{step_err:.3e}"),
        _Check("dr returns to the start within 1e-6 relative",
               loop_err <= 1e-6 * scale, f"{loop_err:.3e}"),
    ]
    runs = [
        {"algorithm": "ap", "termination": ap_trace.termination,
         "cycle_period": ap_trace.cycle_period},
        {"algorithm": "dr", "termination": dr_trace.termination,
         "cycle_period": dr_trace.cycle_period},
    ]
    return problem, checks, runs, ["trace_ap.csv", "trace_dr.csv"]


def _example_ninja(seed, out_dir):
    problem = build(GeneratorSpec(kind="hadamard7x8"))
    report = diagnostic_report(problem.affine, 2)
    rates = asdict(predict_rates(_NuMu(report["nu"], report["mu"]),
                                 report["uprip_delta"], tau=1.0,
                                 row_orthonormal=True))
    _write_json(out_dir / "diagnostics.json", {"report": report, "rates": rates})
    checks = [
        _Check("nu = 0.75 within 1e-12", abs(report["nu"] - 0.75) <= 1e-12,
               f"nu {report['nu']!r}"),
        _Check("mu = 1.0 within 1e-12", abs(report["mu"] - 1.0) <= 1e-12,
               f"mu {report['mu']!r}"),
        _Check("all 28 supports enumerated", report["supports_enumerated"] == 28,
               str(report["supports_enumerated"])),
        _Check("uprip delta below 1/2", report["uprip_delta"] < 0.5,
               f"{report['uprip_delta']!r}"),
    ]
    return problem, checks, [report], ["diagnostics.json"]


_REPRODUCE_TAGS = {
    "fig_rip_a": lambda seed, out: _fig_rip("a", seed, out),
    "fig_rip_b": lambda seed, out: _fig_rip("b", seed, out),
    "fig_rip_c": lambda seed, out: _fig_rip("c", seed, out),
    "fig_rip_d": lambda seed, out: _fig_rip("d", seed, out),
    "fig_sparse_fourier_a": lambda seed, out: _fig_fourier("a", seed, out),
    "fig_sparse_fourier_b": lambda seed, out: _fig_fourier("b", seed, out),
    "fig_sparse_fourier_c": lambda seed, out: _fig_fourier("c", seed, out),
    "fig_sparse_fourier_d": lambda seed, out: _fig_fourier("d", seed, out),
    "example_cycle": _example_cycle,
    "example_ninja": _example_ninja,
}


def cmd_reproduce(args) -> int:
    started = time.perf_counter()
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    problem, checks, runs, artifacts = _REPRODUCE_TAGS[args.tag](args.seed, out_dir)

    passed = all(c.passed for c in checks)
    verdict_lines = ["PASS" if passed else "FAIL"]
    for c in checks:
        verdict_lines.append(
            f"{'ok  ' if c.passed else 'FAIL'} {c.name}: {c.detail}")
    (out_dir / "verdict.txt").write_text("\n".join(verdict_lines) + "\n")
    _write_json(out_dir / "summary.json", {
        "tag": args.tag,
        "verdict": "PASS" if passed else "FAIL",
        "checks": [c.as_dict() for c in checks],
        "runs": runs,
    })
    artifacts = list(artifacts) + ["summary.json", "verdict.txt"]
    resolved = {"tag": args.tag, "seed": args.seed}
    _write_manifest(out_dir, args, resolved, problem, artifacts, started)
    print(verdict_lines[0])
    return 0 if passed else 2


def main(argv=None) -> int:
    if argv is None:
        argv = sys.argv[1:]
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code or 0)
    args.argv = list(argv)
    try:
        return args.func(args)
    except EnumerationTooLarge as exc:
        print(f"spaf: refused: {exc}", file=sys.stderr)
        return 3
    except (ValueError, OSError) as exc:
        print(f"spaf: error: {exc}", file=sys.stderr)
        return 1


def entry_point():
    sys.exit(main())


if __name__ == "__main__":
    entry_point()
