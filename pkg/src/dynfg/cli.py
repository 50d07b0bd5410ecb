"""Command-line front end: solve, benchmark orderings, export graphs, plan trajectories.

Exit codes: 0 on success, 1 on input errors, 2 on numerical failures.
Results go to stdout (or ``--out``); diagnostics go to stderr.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import statistics
import sys
import time
from importlib import resources
from typing import List, Optional, Sequence

import numpy as np

from .dyn import DynamicsProblem, forward_dynamics, hybrid_dynamics, inverse_dynamics
from .elim import (NumericallySingular, Ordering, StructurallySingular, WrongProblemClass,
                   export_dag_dot, get_ordering, symbolic_eliminate)
from .elim.eliminate import back_substitute
from .fgcore import (DimensionMismatch, VariableKey, build_dynamics_graph, condition,
                     graph_to_dot, qdd, tau)
from .robot import (DEFAULT_GRAVITY, JointState, RobotModel, UrdfError, load_urdf_file,
                    planar_chain, puma_like, random_state)

EXIT_OK, EXIT_INPUT, EXIT_NUMERIC = 0, 1, 2

ORDERING_CHOICES = ("rnea", "crba", "aba", "md", "colamd", "nd", "reverse")
BENCH_ORDERINGS = ("rnea", "crba", "aba", "md", "colamd", "nd", "reverse")
BENCH_COLUMNS = ("robot", "problem", "ordering_tag", "n_joints", "fill_edges", "max_frontal",
                 "wall_ns")


class InputError(ValueError):
    pass


# ------------------------------------------------------------------ parsing helpers

def _vector(text: str) -> np.ndarray:
    try:
        return np.array([float(t) for t in text.split(",") if t.strip() != ""], dtype=float)
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") \
            from exc


def _gravity(text: str) -> np.ndarray:
    g = _vector(text)
    if g.size != 3:
        raise argparse.ArgumentTypeError("gravity needs three components x,y,z")
    return g


def _ordering_arg(text: str) -> str:
    if text.startswith("custom:") or text in ORDERING_CHOICES:
        return text
    raise argparse.ArgumentTypeError(
        f"ordering must be one of {', '.join(ORDERING_CHOICES)} or custom:<file>")


def resolve_robot_path(spec: str) -> str:
    """Existing path, or the name of a URDF shipped with the package."""
    if os.path.exists(spec):
        return spec
    ref = resources.files("dynfg") / "data" / spec
    if ref.is_file():
        return str(ref)
    raise InputError(f"robot file not found: {spec}")


def load_robot(spec: str, gravity=None) -> RobotModel:
    """Robot from a URDF path, a packaged URDF name, ``planar:<n>`` or ``puma``."""
    g = DEFAULT_GRAVITY if gravity is None else tuple(gravity)
    if spec.startswith("planar:"):
        try:
            n = int(spec.split(":", 1)[1])
        except ValueError as exc:
            raise InputError(f"bad robot spec {spec!r}") from exc
        if n < 1:
            raise InputError("a chain needs at least one joint")
        return planar_chain(n, gravity=g)
    if spec == "puma":
        return puma_like(gravity=g)
    return load_urdf_file(resolve_robot_path(spec), gravity=g)


def read_custom_ordering(path: str) -> List[VariableKey]:
    """One ``kind:index`` key per line; blank lines and ``#`` comments are skipped."""
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.read().splitlines()
    except OSError as exc:
        raise InputError(f"cannot read ordering file: {exc}") from exc
    keys = []
    for line in lines:
        line = line.split("#", 1)[0].strip()
        if line:
            keys.append(VariableKey.parse(line))
    return keys


def ordering_for(tag: Optional[str]):
    if tag is None:
        return None
    if tag.startswith("custom:"):
        return Ordering(tuple(read_custom_ordering(tag[len("custom:"):])), "custom")
    return tag


def parse_known(items: Sequence[str], n: int) -> np.ndarray:
    """``qdd:i`` / ``tau:i`` tokens (1-based) into a qdd-known mask."""
    mask = np.zeros(n, dtype=bool)
    seen = set()
    for item in items:
        try:
            kind, idx = item.split(":")
            j = int(idx)
        except ValueError as exc:
            raise InputError(f"bad --known entry {item!r}; expected qdd:<i> or tau:<i>") from exc
        if kind not in ("qdd", "tau") or not 1 <= j <= n:
            raise InputError(f"bad --known entry {item!r} for a {n}-joint robot")
        if j in seen:
            raise InputError(f"joint {j} listed twice in --known")
        seen.add(j)
        mask[j - 1] = kind == "qdd"
    if len(seen) != n:
        missing = sorted(set(range(1, n + 1)) - seen)
        raise InputError(f"--known must cover every joint; missing {missing}")
    return mask


def _emit(text: str, out: Optional[str]) -> None:
    if out:
        with open(out, "w", encoding="utf-8", newline="") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _floats(a) -> List[float]:
    return [float(v) for v in np.asarray(a, dtype=float).reshape(-1)]


# ------------------------------------------------------------------ dynamics verbs

def _state_vectors(args, model: RobotModel, names: Sequence[str]):
    """Vectors from flags; missing ones are drawn from the seeded state generator."""
    n = model.n
    rng = np.random.default_rng(args.seed)
    q_r, qd_r, x_r = random_state(model, rng)
    fallback = {"q": q_r, "qd": qd_r, "qdd": x_r, "tau": x_r}
    out = []
    for name in names:
        v = getattr(args, name)
        v = fallback[name] if v is None else v
        if v.size != n:
            raise InputError(f"--{name} has {v.size} values for a {n}-joint robot")
        out.append(v)
    return out


def _problem(args, state: JointState, model: RobotModel) -> DynamicsProblem:
    tw = getattr(args, "tool_wrench", None)
    if tw is not None and tw.size != 6:
        raise InputError("--tool-wrench needs six components")
    return DynamicsProblem(model, state, tool_wrench=tw)


def _result(kind: str, ordering, state: JointState, sol) -> dict:
    res = {"problem": kind, "q": _floats(state.q), "qd": _floats(state.qd),
           "qdd": _floats(state.qdd), "tau": _floats(state.tau)}
    if sol is not None:
        res["residual_norm"] = float(sol.residual_norm)
    res["ordering"] = ordering
    return res


def _ordering_name(tag, default: str) -> str:
    if tag is None:
        return default
    return "custom" if isinstance(tag, Ordering) else tag


def cmd_id(args) -> int:
    model = load_robot(args.urdf, args.gravity)
    q, qd, a = _state_vectors(args, model, ("q", "qd", "qdd"))
    order = ordering_for(args.ordering)
    state, sol = inverse_dynamics(_problem(args, JointState.inverse(q, qd, a), model),
                                  order or "rnea")
    _emit(_json(_result("inverse", _ordering_name(order, "rnea"), state, sol)), args.out)
    return EXIT_OK


def cmd_fd(args) -> int:
    model = load_robot(args.urdf, args.gravity)
    q, qd, t = _state_vectors(args, model, ("q", "qd", "tau"))
    order = ordering_for(args.ordering)
    state, sol = forward_dynamics(_problem(args, JointState.forward(q, qd, t), model),
                                  order or "aba")
    _emit(_json(_result("forward", _ordering_name(order, "aba"), state, sol)), args.out)
    return EXIT_OK


def cmd_hybrid(args) -> int:
    model = load_robot(args.urdf, args.gravity)
    mask = parse_known(args.known, model.n)
    q, qd, a, t = _state_vectors(args, model, ("q", "qd", "qdd", "tau"))
    a = np.where(mask, a, 0.0)
    t = np.where(mask, 0.0, t)
    p = _problem(args, JointState.hybrid(q, qd, a, t, mask), model)
    order = ordering_for(args.ordering)
    state, sol = hybrid_dynamics(p, args.method, order or "min_degree")
    res = _result("hybrid", _ordering_name(order, "md") if args.method == "elimination"
                  else None, state, sol)
    res["method"] = args.method
    res["known"] = list(args.known)
    _emit(_json(res), args.out)
    return EXIT_OK


# ------------------------------------------------------------------ bench

def problem_graph(model: RobotModel, problem: str, rng: np.random.Generator,
                  known_mask: Optional[np.ndarray] = None):
    """Conditioned linear dynamics graph for one random state."""
    q, qd, x = random_state(model, rng)
    graph = build_dynamics_graph(model, q, qd)
    n = model.n
    if problem == "inverse":
        mask = np.ones(n, dtype=bool)
    elif problem == "forward":
        mask = np.zeros(n, dtype=bool)
    elif problem == "hybrid":
        if known_mask is None:
            raise InputError("hybrid problems need --known")
        mask = np.asarray(known_mask, dtype=bool)
    else:
        raise InputError(f"unknown problem class {problem!r}")
    known = {}
    for i in range(1, n + 1):
        if mask[i - 1]:
            known[qdd(i)] = x[i - 1:i]
        else:
            known[tau(i)] = x[i - 1:i]
    return condition(graph, known)


def bench_rows(robots: Sequence[str], problems: Sequence[str], orderings: Sequence[str],
               repetitions: int, seed: int = 0, gravity=None, timing: bool = True) -> List[dict]:
    """One row per applicable (robot, problem, ordering) cell.

    ``wall_ns`` is the median over ``repetitions`` of one elimination plus
    back-substitution. Orderings that do not apply to a problem class are
    skipped.
    """
    if repetitions < 30:
        raise InputError("bench needs at least 30 repetitions")
    rows = []
    for spec in robots:
        model = load_robot(spec, gravity)
        for problem in problems:
            graph = problem_graph(model, problem, np.random.default_rng(seed))
            for tag in orderings:
                try:
                    order = get_ordering(ordering_for(tag), graph)
                except WrongProblemClass:
                    continue
                dag = symbolic_eliminate(graph, order)
                wall = 0
                if timing:
                    samples = []
                    for _ in range(repetitions):
                        t0 = time.perf_counter_ns()
                        back_substitute(symbolic_eliminate(graph, order))
                        samples.append(time.perf_counter_ns() - t0)
                    wall = int(statistics.median(samples))
                rows.append({"robot": spec, "problem": problem,
                             "ordering_tag": order.tag if tag.startswith("custom:") else tag,
                             "n_joints": model.n, "fill_edges": dag.fill_edges,
                             "max_frontal": dag.max_frontal, "wall_ns": wall})
    return rows


def bench_summary(rows: Sequence[dict]) -> dict:
    """Minimum fill per (robot, problem) and the fill-count trend flags."""
    cells = {}
    for r in rows:
        cells.setdefault((r["robot"], r["problem"], r["n_joints"]), {})[r["ordering_tag"]] = \
            r["fill_edges"]
    out = []
    for (robot, problem, n), fills in cells.items():
        best = min(fills.values())
        entry = {"robot": robot, "problem": problem, "min_fill": best,
                 "min_fill_orderings": sorted(t for t, f in fills.items() if f == best)}
        flags = {}
        if problem == "forward":
            # at n = 2 the ABA and CRBA DAGs coincide, so the strict claim starts at 3
            if "aba" in fills and "crba" in fills and n >= 3:
                flags["aba_lt_crba"] = fills["aba"] < fills["crba"]
            if "colamd" in fills and "aba" in fills:
                flags["colamd_le_aba"] = fills["colamd"] <= fills["aba"]
            if "nd" in fills and "crba" in fills:
                flags["nd_le_crba"] = fills["nd"] <= fills["crba"]
        if problem == "inverse" and "colamd" in fills and "rnea" in fills:
            flags["colamd_le_rnea"] = fills["colamd"] <= fills["rnea"]
        entry["trend_flags"] = flags
        out.append(entry)
    return {"cells": out, "all_trends_hold": all(all(c["trend_flags"].values()) for c in out)}


def bench_csv(rows: Sequence[dict]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=BENCH_COLUMNS, lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow(r)
    return buf.getvalue()


def cmd_bench(args) -> int:
    robots = args.robots or ([args.urdf] if args.urdf else ["r3.urdf", "puma6.urdf"])
    if args.ordering:
        orderings = [args.ordering]
    else:
        orderings = list(args.orderings or BENCH_ORDERINGS)
    for tag in orderings:
        _ordering_arg(tag)
    rows = bench_rows(robots, args.problems, orderings, args.repetitions, args.seed,
                      args.gravity, timing=not args.no_timing)
    _emit(bench_csv(rows), args.out)
    summary = bench_summary(rows)
    if args.summary:
        _emit(_json(summary), args.summary)
    for cell in summary["cells"]:
        for flag, ok in cell["trend_flags"].items():
            if not ok:
                sys.stderr.write(f"note: {flag} does not hold for {cell['robot']} "
                                 f"{cell['problem']}\n")
    return EXIT_OK


# ------------------------------------------------------------------ export

def cmd_export(args) -> int:
    model = load_robot(args.urdf, args.gravity)
    mask = parse_known(args.known, model.n) if args.problem == "hybrid" else None
    rng = np.random.default_rng(args.seed)
    if args.what == "graph":
        if args.full:
            q, qd, _ = random_state(model, rng)
            text = graph_to_dot(build_dynamics_graph(model, q, qd, include_twists=True),
                                full=True)
        else:
            text = graph_to_dot(problem_graph(model, args.problem, rng, mask))
    else:
        graph = problem_graph(model, args.problem, rng, mask)
        default = {"inverse": "rnea", "forward": "aba", "hybrid": "md"}[args.problem]
        text = export_dag_dot(symbolic_eliminate(graph, ordering_for(args.ordering) or default))
    _emit(text, args.out)
    return EXIT_OK


# ------------------------------------------------------------------ plan

def cmd_plan(args) -> int:
    from .kinoplan import load_plan_config, run_plan
    cfg = load_plan_config(args.config)
    if args.no_min_torque:
        cfg.options.min_torque = False
    if args.max_iterations is not None:
        cfg.max_iterations = args.max_iterations
    if args.method is not None:
        cfg.method = args.method
    result, summary = run_plan(cfg)
    out_dir = args.out or "."
    os.makedirs(out_dir, exist_ok=True)
    with open(os.path.join(out_dir, "trajectory.csv"), "w", encoding="utf-8",
              newline="") as fh:
        fh.write(result.trajectory.to_csv())
    with open(os.path.join(out_dir, "report.json"), "w", encoding="utf-8") as fh:
        fh.write(_json(summary))
    if not summary["converged"]:
        sys.stderr.write(f"optimizer stopped without converging: {summary['status']}\n")
        return EXIT_NUMERIC
    if not summary["goals_met"]:
        sys.stderr.write("optimizer converged but goals were not met\n")
        return EXIT_NUMERIC
    return EXIT_OK


# ------------------------------------------------------------------ entry point

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--urdf", help="URDF path or name of a packaged URDF")
    common.add_argument("--ordering", type=_ordering_arg,
                        help="rnea, crba, aba, md, colamd, nd, reverse or custom:<file>")
    common.add_argument("--gravity", type=_gravity, help="x,y,z in m/s^2")
    common.add_argument("--seed", type=int, default=0,
                        help="seed for states not given on the command line")
    common.add_argument("--out", help="output file (directory for plan)")

    state = argparse.ArgumentParser(add_help=False)
    for name in ("q", "qd", "qdd", "tau"):
        state.add_argument(f"--{name}", type=_vector)
    state.add_argument("--tool-wrench", type=_vector, dest="tool_wrench")

    p = argparse.ArgumentParser(prog="dynfg", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="verb", required=True)
    for verb, fn, help_ in (("id", cmd_id, "inverse dynamics"),
                            ("fd", cmd_fd, "forward dynamics")):
        sp = sub.add_parser(verb, parents=[common, state], help=help_)
        sp.set_defaults(func=fn, need_urdf=True)
    sp = sub.add_parser("hybrid", parents=[common, state], help="hybrid dynamics")
    sp.add_argument("--known", nargs="+", required=True, metavar="KIND:J",
                    help="per joint qdd:<j> or tau:<j>")
    sp.add_argument("--method", choices=("elimination", "featherstone"),
                    default="elimination")
    sp.set_defaults(func=cmd_hybrid, need_urdf=True)

    sp = sub.add_parser("bench", parents=[common], help="fill-in and timing per ordering")
    sp.add_argument("--robots", nargs="+",
                    help="URDF paths, packaged names, planar:<n> or puma")
    sp.add_argument("--problems", nargs="+", choices=("inverse", "forward"),
                    default=["inverse", "forward"])
    sp.add_argument("--orderings", nargs="+")
    sp.add_argument("--repetitions", type=int, default=30)
    sp.add_argument("--no-timing", action="store_true",
                    help="skip timing and report wall_ns as 0")
    sp.add_argument("--summary", help="also write the minimum-fill and trend summary JSON here")
    sp.set_defaults(func=cmd_bench, need_urdf=False)

    sp = sub.add_parser("export", parents=[common], help="DOT export of a graph or DAG")
    sp.add_argument("--what", choices=("graph", "dag"), default="graph")
    sp.add_argument("--problem", choices=("inverse", "forward", "hybrid"), default="inverse")
    sp.add_argument("--known", nargs="+", default=(), metavar="KIND:J")
    sp.add_argument("--full", action="store_true",
                    help="draw known parameters and twist relations too")
    sp.set_defaults(func=cmd_export, need_urdf=True)

    sp = sub.add_parser("plan", parents=[common], help="kinodynamic trajectory optimization")
    sp.add_argument("config", help="plan configuration JSON")
    sp.add_argument("--no-min-torque", action="store_true")
    sp.add_argument("--max-iterations", type=int)
    sp.add_argument("--method", choices=("newton", "projected_gauss_newton", "gauss_newton"),
                    help="optimizer step (default from the config, else newton)")
    sp.set_defaults(func=cmd_plan, need_urdf=False)
    return p


def main(argv: Optional[Sequence[str]] = None) -> int:
    from .kinoplan import DivergedNaN, MaxIterations, PlanConfigError
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_INPUT
    if args.need_urdf and not args.urdf:
        sys.stderr.write(f"dynfg {args.verb}: --urdf is required\n")
        return EXIT_INPUT
    try:
        return args.func(args)
    except (NumericallySingular, StructurallySingular, DivergedNaN, MaxIterations,
            np.linalg.LinAlgError, FloatingPointError) as exc:
        sys.stderr.write(f"dynfg {args.verb}: numerical failure: {exc}\n")
        return EXIT_NUMERIC
    except (InputError, UrdfError, PlanConfigError, WrongProblemClass, DimensionMismatch,
            ValueError, KeyError, OSError) as exc:
        sys.stderr.write(f"dynfg {args.verb}: {exc}\n")
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
