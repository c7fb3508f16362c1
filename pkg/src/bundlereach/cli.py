"""Command-line driver: ``bundlereach reach`` and ``bundlereach synth``.

Exit codes: 0 success (an empty synthesis result is a success), 1 input
error, 2 numerical divergence.
"""
from __future__ import annotations

import argparse
import logging
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import __version__
from .bernstein import BernsteinCache
from .expr import ParseError
from .geometry import EmptySetError, LinearSystemSet
from .modelio import (ProblemSpec, load_model_file, read_projection, write_flowpipe, write_param_sets,
                      write_projection)
from .reachability import DivergenceError, Flowpipe, compute_flowpipe, simulate_many
from .sampling import sample_bundle, sample_system, sample_system_set
from .stl import horizon, monitor, parse_formula
from .synthesis import Synthesizer

EXIT_OK = 0
EXIT_INPUT = 1
EXIT_DIVERGENCE = 2

# Bernstein grids beyond this many coefficients per direction get slow
GRID_WARN = 20000
VALIDATION_SLACK = 1e-7
STATES_PER_PARAM = 20

log = logging.getLogger("bundlereach")


class InputError(Exception):
    pass


@dataclass
class RunReport:
    mode: str
    model: str = ""
    timings: dict[str, float] = field(default_factory=dict)
    steps: int | None = None
    members: int | None = None
    outputs: list[str] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    branches: list[str] = field(default_factory=list)
    validation: list[str] = field(default_factory=list)

    def render(self) -> str:
        lines = [f"mode: {self.mode}", f"model: {self.model}"]
        if self.steps is not None:
            lines.append(f"steps: {self.steps}")
        for phase, secs in self.timings.items():
            lines.append(f"time {phase}: {secs:.3f} s")
        lines.append(f"time total: {sum(self.timings.values()):.3f} s")
        if self.members is not None:
            lines.append(f"members: {self.members}")
            lines.append("result: EMPTY" if self.members == 0 else "result: NONEMPTY")
        lines += [f"branch {b}" for b in self.branches]
        lines += [f"validation {v}" for v in self.validation]
        lines += [f"output: {o}" for o in self.outputs]
        lines += [f"warning: {w}" for w in self.warnings]
        return "\n".join(lines)


class _Timer:
    def __init__(self, report: RunReport, phase: str):
        self.report, self.phase = report, phase

    def __enter__(self):
        self.t0 = time.perf_counter()

    def __exit__(self, *exc):
        dt = max(time.perf_counter() - self.t0, 0.0)
        self.report.timings[self.phase] = self.report.timings.get(self.phase, 0.0) + dt
        return False


def _grid_warnings(problem: ProblemSpec) -> list[str]:
    n = problem.model.dim
    out = []
    for name, f in zip(problem.model.state_vars, problem.model.dynamics):
        size = (f.total_degree() + 1) ** n
        if size > GRID_WARN:
            out.append(f"dynamics of {name} have total degree {f.total_degree()}: "
                       f"{size} Bernstein coefficients per direction, expect slow steps")
    return out


def _load(path: str, report: RunReport) -> ProblemSpec:
    with _Timer(report, "parse"):
        p = Path(path)
        if not p.is_file():
            raise InputError(f"{path}: no such file")
        try:
            problem = load_model_file(p)
        except ParseError as exc:
            raise InputError(f"{path}:{exc.line}:{exc.col}: {exc.message}" if exc.line
                             else f"{path}: {exc.message}") from None
    report.model = problem.model.name
    report.warnings += _grid_warnings(problem)
    return problem


def _axes(text: str | None, problem: ProblemSpec) -> tuple[str, str] | None:
    if text is None:
        return problem.options.project
    parts = [s.strip() for s in text.split(",")]
    if len(parts) != 2 or not all(parts):
        raise InputError(f"--project expects two comma-separated variable names, got {text!r}")
    for name in parts:
        if name not in problem.model.state_vars:
            raise InputError(f"--project: unknown variable {name!r}; "
                             f"variables are {', '.join(problem.model.state_vars)}")
    return parts[0], parts[1]


def _default_out(model_path: str, problem: ProblemSpec, suffix: str) -> Path:
    if problem.options.out:
        return Path(problem.options.out)
    return Path(Path(model_path).stem + suffix)


def _trace_reach(fp: Flowpipe) -> None:
    fmt = {"float_kind": lambda x: f"{x:.6g}"}
    for k, b in enumerate(fp.steps):
        print(f"step {k} upper {np.array2string(b.upper, formatter=fmt)} "
              f"lower {np.array2string(b.lower, formatter=fmt)}", file=sys.stderr)


def _validate_reach(problem: ProblemSpec, fp: Flowpipe, n: int) -> list[str]:
    X0 = sample_bundle(problem.initial_set, n)
    P = sample_system(problem.param_set, n) if problem.model.num_params else None
    T = len(fp.steps) - 1
    trajs = simulate_many(problem.model, X0, P, T)
    inside = sum(int(fp.steps[k].contains_many(trajs[:, k], tol=VALIDATION_SLACK).sum()) for k in range(T + 1))
    total = n * (T + 1)
    return [f"containment: {inside}/{total} ({100.0 * inside / total:.3f}%)"]


def _validate_synth(problem: ProblemSpec, phi, result: LinearSystemSet, n: int) -> list[str]:
    if result.is_empty:
        return ["satisfaction: no parameters to sample"]
    params = sample_system_set(result, n)
    states = sample_bundle(problem.initial_set, STATES_PER_PARAM)
    P = np.repeat(params, len(states), axis=0)
    X0 = np.tile(states, (len(params), 1))
    trajs = simulate_many(problem.model, X0, P if problem.model.num_params else None, horizon(phi) + 1)
    # formulas speak about the trajectory from x_1 on
    ok = sum(monitor(tr[1:], phi) for tr in trajs)
    return [f"satisfaction: {ok}/{len(trajs)} ({100.0 * ok / len(trajs):.3f}%) "
            f"over {len(params)} parameters x {len(states)} initial states"]


def cmd_reach(args) -> int:
    report = RunReport("reach")
    problem = _load(args.model, report)
    steps = args.steps if args.steps is not None else problem.options.steps
    if steps is None:
        raise InputError("number of steps missing: pass --steps or add 'option steps N;'")
    if steps < 0:
        raise InputError("--steps must be nonnegative")
    axes = _axes(args.project, problem)
    fan = args.fan or problem.options.fan
    with _Timer(report, "reach"):
        fp = compute_flowpipe(problem.model, problem.initial_set, problem.param_set, steps, BernsteinCache())
    report.steps = steps
    out = Path(args.out) if args.out else _default_out(args.model, problem, "_flowpipe.json")
    with _Timer(report, "write"):
        write_flowpipe(fp, out)
        report.outputs.append(str(out))
        if axes is not None:
            csv_path = out.with_name(out.stem + "_proj.csv")
            script = write_projection(fp, axes, csv_path, fan)
            report.outputs += [str(csv_path), str(script)]
    if args.validate:
        with _Timer(report, "validate"):
            report.validation += _validate_reach(problem, fp, args.validate)
    if axes is not None and not args.no_figure:
        from .plotting import plot_projection
        with _Timer(report, "figure"):
            png = Path(args.figure) if args.figure else csv_path.with_suffix(".png")
            plot_projection(read_projection(csv_path), axes, png, title=problem.model.name)
            report.outputs.append(str(png))
    if args.trace:
        _trace_reach(fp)
    return _finish(report, args)


def cmd_synth(args) -> int:
    report = RunReport("synth")
    problem = _load(args.model, report)
    phi = problem.spec
    if args.spec is not None:
        try:
            phi = parse_formula(args.spec, problem.model.state_vars)
        except ParseError as exc:
            raise InputError(f"--spec:{exc.line}:{exc.col}: {exc.message}") from None
    if phi is None:
        raise InputError("no specification: pass --spec or add 'spec FORMULA;'")
    synth = Synthesizer(problem.model, BernsteinCache())
    with _Timer(report, "synth"):
        result = synth.synthesize(problem.initial_set, problem.param_set, phi)
    report.steps = synth.reach_steps
    report.members = len(result)
    top = synth.trace[-1] if synth.trace else None
    for entry in synth.trace:
        if args.trace:
            print(f"trace {entry.node} t={entry.time} members={entry.members}"
                  f"{' EMPTY' if entry.empty else ''}", file=sys.stderr)
    counts: dict[str, list[int]] = {}
    for entry in synth.trace:
        counts.setdefault(entry.node, []).append(entry.members)
    for node, vals in counts.items():
        report.branches.append(f"{node}: {len(vals)} visit(s), {sum(v == 0 for v in vals)} empty, "
                               f"max {max(vals)} member(s)")
    if top is not None:
        log.debug("root node %s with %d member(s)", top.node, top.members)
    out = Path(args.out) if args.out else _default_out(args.model, problem, "_params.json")
    with _Timer(report, "write"):
        write_param_sets(result, out)
        report.outputs.append(str(out))
    samples = None
    if args.validate:
        with _Timer(report, "validate"):
            report.validation += _validate_synth(problem, phi, result, args.validate)
            if not result.is_empty:
                samples = sample_system_set(result, args.validate)
    if not args.no_figure and problem.model.num_params:
        from .plotting import plot_param_sets
        with _Timer(report, "figure"):
            png = Path(args.figure) if args.figure else out.with_suffix(".png")
            plot_param_sets(result, problem.model.param_vars, png, problem.param_set, samples, problem.options.fan)
            report.outputs.append(str(png))
    return _finish(report, args)


def _finish(report: RunReport, args) -> int:
    for w in report.warnings:
        log.warning(w)
    if not args.quiet:
        print(report.render())
    elif report.members == 0:
        print("EMPTY")
    return EXIT_OK


def _positive(text: str) -> int:
    try:
        value = int(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got {text!r}") from None
    if value <= 0:
        raise argparse.ArgumentTypeError("expected a positive integer")
    return value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bundlereach",
                                     description="Reachability and parameter synthesis for polynomial maps.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("model", help="model file")
        p.add_argument("--out", help="output JSON path")
        p.add_argument("-q", "--quiet", action="store_true", help="suppress the run report")
        p.add_argument("--trace", action="store_true", help="dump per-step diagnostics to stderr")
        p.add_argument("--validate", type=_positive, metavar="N", help="check the result against N simulations")
        p.add_argument("--figure", metavar="PATH", help="PNG path for the figure")
        p.add_argument("--no-figure", action="store_true", help="skip rendering figures")
        p.add_argument("-v", "--verbose", action="store_true", help="debug logging")

    reach = sub.add_parser("reach", help="compute a flowpipe")
    common(reach)
    reach.add_argument("--steps", type=int, help="number of steps (overrides the model file)")
    reach.add_argument("--project", metavar="VAR,VAR", help="write 2D projections on these variables")
    reach.add_argument("--fan", type=_positive, help="directions used for projections")
    reach.set_defaults(func=cmd_reach)

    synth = sub.add_parser("synth", help="synthesize parameters for an STL formula")
    common(synth)
    synth.add_argument("--spec", help="STL formula (overrides the model file)")
    synth.set_defaults(func=cmd_synth)
    return parser


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    logging.basicConfig(level=logging.DEBUG if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s", stream=sys.stderr)
    try:
        return args.func(args)
    except InputError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except DivergenceError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DIVERGENCE
    except (EmptySetError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
