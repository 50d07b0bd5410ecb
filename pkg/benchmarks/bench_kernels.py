"""Compare the compiled and pure-Python elimination kernels.

Usage: python3 benchmarks/bench_kernels.py [--repetitions N] [--json out.json]

Times each kernel on graphs built from planar chains and the PUMA-like arm and
prints the median per call for every available backend plus the speedup.
"""
import argparse
import json
import statistics
import time

import numpy as np

from dynfg.cli import problem_graph
from dynfg.elim import get_ordering, kernels, order_min_degree, solve, symbolic_eliminate
from dynfg.robot import planar_chain, puma_like


def median_ns(fn, repetitions):
    fn()
    samples = []
    for _ in range(repetitions):
        t0 = time.perf_counter_ns()
        fn()
        samples.append(time.perf_counter_ns() - t0)
    return statistics.median(samples)


def cases():
    rng = np.random.default_rng(0)
    for name, model in (("planar:3", planar_chain(3)), ("planar:12", planar_chain(12)),
                        ("puma", puma_like())):
        for problem in ("inverse", "forward"):
            yield f"{name}/{problem}", problem_graph(model, problem, rng)


def run(repetitions):
    backends = {name: kernels.get_backend(name) for name in kernels.available_backends()}
    rng = np.random.default_rng(1)
    fronts = {shape: rng.standard_normal(shape) for shape in ((12, 7), (30, 18), (60, 36))}
    rows = []
    for shape, m in fronts.items():
        row = {"kernel": "frontal_qr", "case": f"{shape[0]}x{shape[1]}"}
        for name, kern in backends.items():
            row[name] = median_ns(lambda: kern.frontal_qr(m.copy()), repetitions)
        rows.append(row)
    for case, graph in cases():
        order = get_ordering("min_degree", graph)
        for kernel, make in (
                ("min_degree_order", lambda k: lambda: order_min_degree(graph, backend=k)),
                ("symbolic_eliminate", lambda k: lambda: symbolic_eliminate(graph, order, k)),
                ("solve", lambda k: lambda: solve(graph, order, k))):
            row = {"kernel": kernel, "case": case}
            for name, kern in backends.items():
                row[name] = median_ns(make(kern), repetitions)
            rows.append(row)
    return list(backends), rows


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--repetitions", type=int, default=200)
    ap.add_argument("--json", help="also write the rows here")
    args = ap.parse_args()
    names, rows = run(args.repetitions)
    header = f"{'kernel':<20}{'case':<20}" + "".join(f"{n + ' us':>14}" for n in names)
    if "cython" in names:
        header += f"{'speedup':>10}"
    print(header)
    for r in rows:
        line = f"{r['kernel']:<20}{r['case']:<20}" + "".join(f"{r[n] / 1e3:>14.1f}" for n in names)
        if "cython" in names:
            line += f"{r['python'] / r['cython']:>9.2f}x"
        print(line)
    if len(names) == 1:
        print("compiled kernels not built; only the pure-Python backend was timed")
    if args.json:
        with open(args.json, "w", encoding="utf-8") as fh:
            json.dump({"backends": names, "rows": rows}, fh, indent=2)


if __name__ == "__main__":
    main()
