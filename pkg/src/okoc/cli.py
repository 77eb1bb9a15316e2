"""Command-line entry point: ``okoc solve|validate|oracle <problem.json>``.

stdout carries only the path of the file written; diagnostics go to stderr and
pass/fail is reported through the exit code.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import exprlang, kernels, oracle, problemfile
from .assembly import AssemblyError, assemble, generate_centers
from .occupation import TrajectoryError, adjoint_identity_residuals, occupation_norm_sq
from .problemfile import ProblemFileError
from .solver import SolverInputError, Status, solve

log = logging.getLogger("okoc")

EXIT_OK = 0
EXIT_FAIL = 2
EXIT_INFEASIBLE = 3
EXIT_USAGE = 64
EXIT_EXPR = 65
EXIT_NUMERIC = 70

STATUS_EXIT = {Status.OPTIMAL: EXIT_OK, Status.TOLERANCE_NOT_MET: EXIT_FAIL, Status.INFEASIBLE: EXIT_INFEASIBLE}


def _write_csv(path: Path, header, rows) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh)
        wr.writerow(header)
        for row in rows:
            wr.writerow([repr(float(v)) if isinstance(v, (float, np.floating)) else v for v in row])


def _write_json(path: Path, doc: dict) -> None:
    problemfile.finite_json(doc)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(doc, indent=2, sort_keys=False) + "\n", encoding="utf-8")


def _default_out(problem: Path, suffix: str) -> Path:
    return Path.cwd() / f"{problem.stem}{suffix}"


def _point_rows(points):
    return [list(map(float, p)) for p in np.atleast_2d(points)]


# -- solve --------------------------------------------------------------------


def run_solve(cfg: problemfile.RunConfig, emit_weights: bool = False):
    """Centers, assembly and solve for a loaded problem; returns (report, centers, result)."""
    start = time.perf_counter()
    centers = generate_centers(cfg.spec, cfg.M_S, cfg.M_D, cfg.M_b, cfg.strategy, cfg.seed)
    program = assemble(cfg.spec, centers)
    res = solve(program, cfg.solver)
    report = {
        "config": cfg.resolved,
        "objective": float(res.objective),
        "eq_residual_inf": float(res.eq_residual_inf),
        "ball_S_used": float(res.ball_S_used),
        "ball_D_used": float(res.ball_D_used),
        "stationarity": float(res.stationarity),
        "complementarity": float(res.complementarity),
        "status": res.status.value,
        "iterations": int(res.iterations),
        "dropped_rows": list(res.dropped_rows),
        "diagnostics": list(program.diagnostics),
    }
    if emit_weights:
        report["weights"] = {"w": res.w.tolist(), "v": res.v.tolist()}
    report["wall_clock_seconds"] = time.perf_counter() - start
    return report, centers, res


def cmd_solve(args) -> int:
    cfg = problemfile.load(args.problem, seed=args.seed)
    report, centers, res = run_solve(cfg, args.emit_weights)
    out = Path(args.out) if args.out else _default_out(Path(args.problem), "_report.json")
    _write_json(out, report)
    if args.emit_plot_data:
        d = Path(args.emit_plot_data)
        n = cfg.spec.n
        s_head = ["t", *(f"x{i + 1}" for i in range(n)), *(f"u{j + 1}" for j in range(cfg.spec.m)), "w"]
        _write_csv(d / "s_centers.csv", s_head, [r + [float(wi)] for r, wi in zip(_point_rows(centers.s_centers), res.w)])
        _write_csv(d / "d_centers.csv", [*(f"x{i + 1}" for i in range(n)), "v"], [r + [float(vi)] for r, vi in zip(_point_rows(centers.d_centers), res.v)])
        _write_csv(d / "sigma_centers.csv", ["t", *(f"x{i + 1}" for i in range(n))], _point_rows(centers.sigma_centers))
    print(out)
    if res.status is not Status.OPTIMAL:
        log.warning("solver status %s (eq residual %.3g, stationarity %.3g)", res.status.value, res.eq_residual_inf, res.stationarity)
    return STATUS_EXIT[res.status]


# -- validate -----------------------------------------------------------------


def validation_table(cfg: problemfile.RunConfig, n_controls: int = 20, n_centers: int = 50, segments: int = 4, N: int = 400, seed: int = 0):
    """Adjoint-identity residuals and occupation-norm ratios for random piecewise-constant controls.

    Returns ``(rows, norm_ratios)``: one row ``(k, j, center..., residual)``
    per control/center pair, and ``|Gamma_k|^2 / (T^2 Phi_S(0))`` per control.
    """
    spec = cfg.spec
    rng = np.random.default_rng(seed)
    if spec.m == 0:
        n_controls = 1
    box = spec.Sigma_box
    bound = spec.T**2 * kernels.phi0(spec.kernel_S)
    rows, ratios = [], []
    for k in range(n_controls):
        if spec.m:
            vals = spec.U.scale(rng.random((segments, spec.m)))
            u = oracle.PiecewiseControl.uniform(vals, spec.T)
        else:
            u = None
        traj = oracle.simulate(spec.f, spec.x0, u, spec.T, N)
        sig = box.scale(rng.random((n_centers, box.dim)))
        res = adjoint_identity_residuals(spec.kernel_Sigma, spec.f, traj, sig)
        rows += [(k, j, *map(float, c), float(r)) for j, (c, r) in enumerate(zip(sig, res))]
        ratios.append(occupation_norm_sq(spec.kernel_S, traj) / bound)
    return rows, ratios


def cmd_validate(args) -> int:
    cfg = problemfile.load(args.problem, seed=args.seed)
    seed = cfg.seed
    rows, ratios = validation_table(cfg, args.controls, args.centers, args.segments, args.steps, seed)
    out = Path(args.out) if args.out else _default_out(Path(args.problem), "_residuals.csv")
    header = ["control", "center", "t", *(f"x{i + 1}" for i in range(cfg.spec.n)), "residual"]
    _write_csv(out, header, rows)
    res = np.array([r[-1] for r in rows])
    worst = float(res.max())
    norm_ok = max(ratios) <= 1.0 + 1e-8
    if args.emit_plot_data:
        d = Path(args.emit_plot_data)
        logs = np.log10(np.maximum(res, 1e-300))
        counts, edges = np.histogram(logs, bins=20)
        _write_csv(d / "residual_histogram.csv", ["log10_lo", "log10_hi", "count"], [(float(a), float(b), int(c)) for a, b, c in zip(edges[:-1], edges[1:], counts)])
        _write_csv(d / "occupation_norm_ratio.csv", ["control", "ratio"], [(k, float(r)) for k, r in enumerate(ratios)])
    print(out)
    print(f"max adjoint residual {worst:.3e} (threshold {args.threshold:.1e}); max norm ratio {max(ratios):.6f}", file=sys.stderr)
    return EXIT_OK if worst <= args.threshold and norm_ok else EXIT_FAIL


# -- oracle -------------------------------------------------------------------


def _kv(items, names, what):
    out = {}
    for item in items:
        key, sep, val = item.partition("=")
        if not sep or key not in names:
            raise ProblemFileError(f"{what}: expected key=value with key in {sorted(names)}, got '{item}'")
        out[key] = val
    return out


def cmd_oracle(args) -> int:
    cfg = problemfile.load(args.problem, seed=args.seed)
    spec = cfg.spec
    out = Path(args.out) if args.out else _default_out(Path(args.problem), "_oracle.json")
    if args.riccati is not None:
        kv = {"a": "0", "b": "1", "q": "1", "r": "1", **_kv(args.riccati, {"a", "b", "q", "r"}, "--riccati")}
        if spec.n != 1:
            raise ProblemFileError("--riccati needs a scalar state (n = 1)")
        try:
            a, bb, q, r = (float(kv[k]) for k in "abqr")
            cost = oracle.riccati_lq_cost(a, bb, q, r, spec.T, spec.x0[0])
        except ValueError as exc:
            raise ProblemFileError(f"--riccati: {exc}") from None
        doc = {"oracle": "riccati", "coefficients": {"a": a, "b": bb, "q": q, "r": r}, "cost": cost}
    else:
        kv = {"levels": "-1,0,1", "segments": "2", "steps": "100", **_kv(args.brute, {"levels", "segments", "steps"}, "--brute")}
        try:
            levels = [float(v) for v in kv["levels"].split(",")]
            segments, steps = int(kv["segments"]), int(kv["steps"])
            best = oracle.brute_force_cost(spec, levels, segments, steps)
        except ValueError as exc:
            raise ProblemFileError(f"--brute: {exc}") from None
        ctrl_path = out.with_name(out.stem + "_control.csv")
        bp = best.best_control.breakpoints
        _write_csv(ctrl_path, ["t_start", "t_end", *(f"u{j + 1}" for j in range(spec.m))], [(bp[i], bp[i + 1], *row) for i, row in enumerate(best.best_control.values)])
        doc = {
            "oracle": "brute",
            "levels": sorted(set(levels)),
            "segments": segments,
            "steps_per_segment": steps,
            "candidates": best.candidates,
            "cost": best.best_cost,
            "control": [list(v) for v in best.best_control.values],
            "control_csv": str(ctrl_path),
        }
    doc["config"] = cfg.resolved
    _write_json(out, doc)
    print(out)
    print(f"oracle cost {doc['cost']:.6f}", file=sys.stderr)
    return EXIT_OK


# -- entry --------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="okoc", description="Kernel occupation-measure relaxations of optimal control problems.")
    ap.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("problem", help="problem file (JSON)")
        p.add_argument("--out", help="output path (default: in the working directory)")
        p.add_argument("--seed", type=int, help="override centers.seed")
        p.add_argument("--emit-plot-data", metavar="DIR", help="write CSV series for plotting into DIR")

    p = sub.add_parser("solve", help="assemble and solve the finite program")
    common(p)
    p.add_argument("--emit-weights", action="store_true", help="include w and v in the report")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("validate", help="check the adjoint identity on simulated trajectories")
    common(p)
    p.add_argument("--threshold", type=float, default=1e-4, help="max admissible residual (default 1e-4)")
    p.add_argument("--controls", type=int, default=20, help="number of random controls K")
    p.add_argument("--centers", type=int, default=50, help="sigma centers per control")
    p.add_argument("--segments", type=int, default=4, help="constant pieces per random control")
    p.add_argument("--steps", type=int, default=400, help="RK4/Simpson steps N")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("oracle", help="ground-truth cost by Riccati or enumeration")
    common(p)
    g = p.add_mutually_exclusive_group(required=True)
    g.add_argument("--riccati", nargs="*", metavar="K=V", help="coefficients a, b, q, r")
    g.add_argument("--brute", nargs="*", metavar="K=V", help="levels=-1,0,1 segments=2 steps=100")
    p.set_defaults(func=cmd_oracle)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="okoc: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except (ProblemFileError, FileNotFoundError, IsADirectoryError) as exc:
        print(f"okoc: problem file error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except exprlang.ExprError as exc:
        print(f"okoc: expression error: {exc}", file=sys.stderr)
        return EXIT_EXPR
    except AssemblyError as exc:
        code = EXIT_EXPR if isinstance(exc.__cause__, exprlang.ExprError) else EXIT_NUMERIC
        print(f"okoc: assembly failed: {exc}", file=sys.stderr)
        return code
    except (SolverInputError, TrajectoryError, oracle.SimulationError, kernels.KernelError, np.linalg.LinAlgError, ValueError, FloatingPointError) as exc:
        print(f"okoc: numeric failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
