"""Command-line front end.

Four subcommands cover the full workflow: ``run-opf`` solves one
deterministic network model and reports exact-equation feasibility gaps,
``gen-scenarios`` turns speed measurements (or synthetic draws) into a
scenario file, ``solve`` runs the stochastic dispatch by any of the three
methods, and ``vss`` prices the value of the stochastic solution.

Every run writes a ``manifest.json`` next to its outputs recording the
command, input digests, seed and solver configuration; with a fixed seed,
reruns are byte-identical apart from wall-clock fields.  Exit codes:
0 success, 2 bad input, 3 solver failure, 4 decomposition did not converge.
"""

from __future__ import annotations

import argparse
import csv
import hashlib
import json
import math
import subprocess
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, acopf, conic, grid, mbda, stochastic, wind

EXIT_OK = 0
EXIT_INPUT = 2
EXIT_SOLVER = 3
EXIT_NO_CONVERGENCE = 4


class CommandError(Exception):
    """Failure carrying a process exit code; the message names the stage."""

    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


# ---------------------------------------------------------------------------
# plumbing
# ---------------------------------------------------------------------------

def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def _build_stamp() -> str:
    try:
        out = subprocess.run(["git", "describe", "--always", "--dirty"],
                             cwd=Path(__file__).resolve().parent,
                             capture_output=True, text=True, timeout=10)
        if out.returncode == 0:
            return out.stdout.strip()
    except OSError:
        pass
    return f"windflow-{__version__}"


def _write_json(path: Path, doc) -> None:
    path.write_text(json.dumps(doc, indent=2) + "\n")


def _write_manifest(out_dir: Path, command: str, inputs, seed,
                    solver: conic.SolverOptions | None, wall_s: float) -> None:
    doc = {
        "command": command,
        "inputs": [{"path": str(p), "sha256": _sha256(Path(p))}
                   for p in inputs],
        "seed": seed,
        "solver": (None if solver is None else
                   {"backend": solver.resolved_backend(),
                    "feas_tol": solver.feas_tol,
                    "gap_tol": solver.gap_tol}),
        "build": _build_stamp(),
        "wall_time_s": round(wall_s, 3),
    }
    _write_json(out_dir / "manifest.json", doc)


def _out_dir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _load_case(path) -> grid.GridCase:
    p = Path(path)
    try:
        case = grid.load_case_file(p)
    except OSError as exc:
        raise CommandError(EXIT_INPUT, f"case {p}: {exc}") from exc
    except ValueError as exc:        # covers JSON and schema errors
        raise CommandError(EXIT_INPUT, f"case {p}: {exc}") from exc
    report = grid.validate(case)
    if not report.ok:
        detail = "\n  ".join(report.issues)
        raise CommandError(EXIT_INPUT, f"case {p} failed validation:\n  {detail}")
    return case


def _load_scenarios(path, case: grid.GridCase) -> wind.ScenarioSet:
    p = Path(path)
    try:
        scn = wind.load_scenarios(p.read_text())
    except OSError as exc:
        raise CommandError(EXIT_INPUT, f"scenarios {p}: {exc}") from exc
    except ValueError as exc:
        raise CommandError(EXIT_INPUT, f"scenarios {p}: {exc}") from exc
    have, want = set(scn.farm_ids), {f.id for f in case.wind_farms}
    if have != want:
        raise CommandError(
            EXIT_INPUT, f"scenarios {p}: farms {sorted(have)} do not match "
                        f"the case's {sorted(want)}")
    return scn


def _rated_limits(case: grid.GridCase) -> dict[str, acopf.WindLimit]:
    """Every farm at wake-derated nameplate output, for deterministic runs."""
    curves = wind.resolve_curves(case)
    lims = {}
    for f in case.wind_farms:
        mw = sum(cnt * curves[m].rated_mw for m, cnt in f.turbines)
        p = (1.0 - f.wake_loss) * mw / case.s_base_mva
        q = p * math.tan(math.acos(f.power_factor_min))
        lims[f.id] = acopf.WindLimit(p, -q, q)
    return lims


def _read_measurements(path) -> np.ndarray:
    """One wind speed per line; '#' comments, blanks and a header allowed."""
    p = Path(path)
    try:
        text = p.read_text()
    except OSError as exc:
        raise CommandError(EXIT_INPUT, f"measurements {p}: {exc}") from exc
    vals = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        tok = raw.split("#", 1)[0].strip()
        if not tok:
            continue
        tok = tok.split(",")[0].strip()
        try:
            vals.append(float(tok))
        except ValueError:
            if lineno == 1:          # header row
                continue
            raise CommandError(EXIT_INPUT,
                               f"measurements {p}:{lineno}: bad value {tok!r}")
    if not vals:
        raise CommandError(EXIT_INPUT, f"measurements {p}: no samples")
    return np.asarray(vals)


# ---------------------------------------------------------------------------
# subcommands
# ---------------------------------------------------------------------------

def cmd_run_opf(args) -> int:
    t0 = time.perf_counter()
    out = _out_dir(args)
    case = _load_case(args.case)
    opts = conic.SolverOptions()
    if args.model == "soc":
        prog = acopf.build_soc_acopf(case, wind_limits=_rated_limits(case))
    else:
        prog = acopf.build_dc_opf(case)
    sol = conic.solve(prog, opts)
    if not sol.optimal:
        raise CommandError(EXIT_SOLVER,
                           f"solver: {args.model} solve ended {sol.status}")
    pt = acopf.recover_physical(case, sol)
    gaps = acopf.feasibility_gap(case, pt, args.model)

    _write_json(out / "solution.json", {
        "model": args.model,
        "status": sol.status,
        "objective": sol.objective,
        "backend": sol.backend,
        "iterations": sol.iterations,
    })
    _write_json(out / "point.json", pt.to_dict())
    with (out / "gaps.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["family", "max_abs_residual", "worst"])
        for fam in acopf.GAP_FAMILIES:
            w.writerow([fam, repr(float(gaps.residual[fam])),
                        gaps.worst.get(fam, "")])
    _write_manifest(out, "run-opf", [args.case], None, opts,
                    time.perf_counter() - t0)
    print(f"{args.model} objective {sol.objective:.6f}  "
          f"worst gap {max(gaps.residual.values()):.3e}")
    return EXIT_OK


def cmd_gen_scenarios(args) -> int:
    t0 = time.perf_counter()
    out = _out_dir(args)
    case = _load_case(args.case)
    if (args.measurements is None) == (args.synthetic is None):
        raise CommandError(EXIT_INPUT, "scenario source: give a measurements "
                                       "file or --synthetic, not both or neither")
    inputs = [args.case]
    if args.measurements is not None:
        speeds = _read_measurements(args.measurements)
        inputs.append(args.measurements)
    else:
        k, lam, n = args.synthetic
        if k <= 0 or lam <= 0 or n < 1 or n != int(n):
            raise CommandError(EXIT_INPUT,
                               "--synthetic: needs shape > 0, scale > 0 and "
                               "a positive integer sample count")
        speeds = wind.synthetic_speeds(k, lam, int(n), args.seed)
    try:
        scn = wind.generate_scenarios(case, speeds, args.per_farm,
                                      args.seed, args.family)
    except wind.WindError as exc:
        raise CommandError(EXIT_INPUT, f"scenario generation: {exc}") from exc

    (out / "scenarios.json").write_text(wind.scenarios_to_json(scn) + "\n")
    with (out / "scenarios.csv").open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["j", "probability"]
                   + [f"{fid}_p_max_mw" for fid in scn.farm_ids])
        for j in range(scn.card):
            w.writerow([j + 1, repr(float(scn.probabilities[j]))]
                       + [repr(float(v * case.s_base_mva))
                          for v in scn.p_max[j]])
    _write_manifest(out, "gen-scenarios", inputs, args.seed, None,
                    time.perf_counter() - t0)
    print(scn.card)
    return EXIT_OK


def cmd_solve(args) -> int:
    t0 = time.perf_counter()
    out = _out_dir(args)
    case = _load_case(args.case)
    scn = _load_scenarios(args.scenarios, case)
    if args.workers < 1:
        raise CommandError(EXIT_INPUT, "--workers: must be >= 1")
    if not 0 < args.gap < 1:
        raise CommandError(EXIT_INPUT, "--gap: must lie in (0, 1)")
    opts = conic.SolverOptions()

    model = stochastic.build_two_stage(case, scn)
    _write_json(out / "sizes.json", stochastic.model_size(model).to_dict())

    code = EXIT_OK
    if args.method == "single":
        sol = stochastic.solve_single_stage(model, opts)
        print(f"single-stage objective {sol.objective:.6f} "
              f"over {scn.card} scenarios")
    else:
        mode = "serial" if args.method == "serial-bda" else "parallel"
        mopts = mbda.MbdaOptions(gap=args.gap, solver=opts)
        sol, state = mbda.run_mbda(case, scn, workers=args.workers,
                                   mode=mode, opts=mopts)
        with (out / "trace.csv").open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["iteration", "lower_bound", "upper_bound",
                        "gap", "wall_ms"])
            for row in state.trace:
                w.writerow([row.iteration, repr(row.lower_bound),
                            repr(row.upper_bound), repr(row.gap),
                            f"{row.wall_ms:.3f}"])
        _write_json(out / "cuts.json", [c.to_dict() for c in state.cuts])
        print(f"{args.method}: {state.iteration} iterations, "
              f"UB {sol.upper_bound:.6f} LB {sol.lower_bound:.6f} "
              f"gap {state.gap():.4%}")
        if not sol.converged:
            print(f"did not reach gap {args.gap:.2%} within "
                  f"{mopts.max_iter} iterations", file=sys.stderr)
            code = EXIT_NO_CONVERGENCE

    (out / "solution.json").write_text(sol.to_json() + "\n")
    _write_manifest(out, "solve", [args.case, args.scenarios], None, opts,
                    time.perf_counter() - t0)
    return code


def cmd_vss(args) -> int:
    t0 = time.perf_counter()
    out = _out_dir(args)
    case = _load_case(args.case)
    scn = _load_scenarios(args.scenarios, case)
    opts = conic.SolverOptions()
    result = stochastic.compute_vss(case, scn, opts)
    (out / "vss.json").write_text(result.to_json() + "\n")
    _write_manifest(out, "vss", [args.case, args.scenarios], None, opts,
                    time.perf_counter() - t0)
    print(f"deterministic-plan cost {result.cost_deterministic:.6f}  "
          f"stochastic cost {result.cost_stochastic:.6f}  "
          f"vss {result.vss:.6f}")
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="windflow",
        description="Stochastic conic dispatch for hybrid AC/DC grids "
                    "under wind uncertainty.")
    p.add_argument("--version", action="version",
                   version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    r = sub.add_parser(
        "run-opf", help="solve one deterministic dispatch and report "
                        "exact-equation feasibility gaps")
    r.add_argument("case", help="case JSON file")
    r.add_argument("--model", choices=("soc", "dc"), default="soc",
                   help="conic relaxation or lossless angle approximation")
    r.add_argument("--out", default="out", help="output directory")
    r.set_defaults(func=cmd_run_opf)

    g = sub.add_parser(
        "gen-scenarios", help="fit a speed distribution and emit the "
                              "combined wind scenario file")
    g.add_argument("case", help="case JSON file (supplies the farm fleet)")
    g.add_argument("measurements", nargs="?",
                   help="speed samples, one per line (m/s)")
    g.add_argument("--synthetic", nargs=3, type=float,
                   metavar=("K", "LAMBDA", "N"),
                   help="draw N samples from Weibull(K, LAMBDA) instead")
    g.add_argument("--per-farm", nargs="+", type=int, default=[3],
                   metavar="N", help="output levels per farm (one value "
                                     "broadcasts to all farms)")
    g.add_argument("--family", choices=("weibull", "rayleigh"),
                   default="weibull", help="distribution family to fit")
    g.add_argument("--seed", type=int, default=0,
                   help="seed for every random draw in this command")
    g.add_argument("--out", default="out", help="output directory")
    g.set_defaults(func=cmd_gen_scenarios)

    s = sub.add_parser(
        "solve", help="solve the two-stage stochastic dispatch")
    s.add_argument("case", help="case JSON file")
    s.add_argument("scenarios", help="scenario JSON file")
    s.add_argument("--method", default="single",
                   choices=("single", "serial-bda", "parallel-bda"))
    s.add_argument("--workers", type=int, default=1,
                   help="subproblem block count / concurrency cap")
    s.add_argument("--gap", type=float, default=0.02,
                   help="relative bound gap that stops the decomposition")
    s.add_argument("--out", default="out", help="output directory")
    s.set_defaults(func=cmd_solve)

    v = sub.add_parser(
        "vss", help="price the value of the stochastic solution")
    v.add_argument("case", help="case JSON file")
    v.add_argument("scenarios", help="scenario JSON file")
    v.add_argument("--out", default="out", help="output directory")
    v.set_defaults(func=cmd_vss)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except (grid.CaseError, wind.WindError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except conic.SolverError as exc:
        print(f"error: solver: {exc}", file=sys.stderr)
        return EXIT_SOLVER


if __name__ == "__main__":
    sys.exit(main())
