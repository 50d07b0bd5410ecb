"""Block elimination to a DAG and back-substitution."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..fgcore import DynFactorGraph, VariableKey
from . import kernels
from .ordering import Ordering, get_ordering

PIVOT_TOL = 1e-12


class StructurallySingular(ValueError):
    pass


class NumericallySingular(ArithmeticError):
    pass


@dataclass
class DagNode:
    """Conditional ``R x + S [parents] = d`` for one eliminated variable."""

    key: VariableKey
    parents: Tuple[VariableKey, ...]
    R: np.ndarray
    S: np.ndarray
    d: np.ndarray
    frontal_rows: int = 0

    @property
    def frontal_size(self) -> int:
        return 1 + len(self.parents)


@dataclass
class EliminationDag:
    nodes: List[DagNode] = field(default_factory=list)
    ordering: Optional[Ordering] = None
    graph: Optional[DynFactorGraph] = None

    @property
    def fill_edges(self) -> int:
        return sum(len(n.parents) for n in self.nodes)

    @property
    def max_frontal(self) -> int:
        return max((n.frontal_size for n in self.nodes), default=0)

    def parents(self) -> Dict[VariableKey, Tuple[VariableKey, ...]]:
        return {n.key: n.parents for n in self.nodes}

    def edges(self) -> List[Tuple[VariableKey, VariableKey]]:
        return [(n.key, p) for n in self.nodes for p in n.parents]


@dataclass
class Solution:
    values: Dict[VariableKey, np.ndarray]
    residual_norm: float

    def __getitem__(self, key: VariableKey) -> np.ndarray:
        return self.values[key]


def _raw_factors(graph: DynFactorGraph):
    out = []
    for f in graph.factors:
        s = 1.0 / f.noise_scale
        keys = list(f.blocks)
        out.append((keys, [f.blocks[k] * s for k in keys], f.rhs * s))
    return out


def eliminate_factors(dims: Dict[VariableKey, int], factors, order: Sequence[VariableKey],
                      backend=None) -> List[DagNode]:
    """Numeric variable elimination on raw ``(keys, blocks, rhs)`` factors.

    Each step stacks the factors touching the variable into a dense frontal
    block ``[x | separator | rhs]`` and triangularizes it by QR. The top rows
    become the variable's conditional; leftover rows on the separator are
    kept as a new factor.
    """
    kern = backend or kernels
    pos = {k: p for p, k in enumerate(order)}
    facs = list(factors)
    var_f: Dict[VariableKey, set] = {k: set() for k in dims}
    for fi, (keys, _, _) in enumerate(facs):
        for k in keys:
            var_f[k].add(fi)
    nodes = []
    for p, x in enumerate(order):
        fids = sorted(var_f[x])
        if not fids:
            raise StructurallySingular(f"variable {x.name} has no incident factor")
        sep = set()
        m = 0
        for fi in fids:
            keys = facs[fi][0]
            sep.update(keys)
            m += facs[fi][2].size
            for k in keys:
                if k != x:
                    var_f[k].discard(fi)
        var_f[x] = set()
        sep.discard(x)
        sep = sorted(sep, key=pos.__getitem__)
        off = {x: 0}
        c = dims[x]
        for k in sep:
            off[k] = c
            c += dims[k]
        dx = dims[x]
        if m < dx:
            raise StructurallySingular(f"variable {x.name} has {m} rows for {dx} unknowns")
        frontal = np.zeros((m, c + 1))
        r0 = 0
        for fi in fids:
            keys, blocks, rhs = facs[fi]
            r1 = r0 + rhs.size
            for k, b in zip(keys, blocks):
                o = off[k]
                frontal[r0:r1, o:o + b.shape[1]] = b
            frontal[r0:r1, c] = rhs
            r0 = r1
            facs[fi] = None
        kern.frontal_qr(frontal)
        nodes.append(DagNode(x, tuple(sep), frontal[:dx, :dx].copy(), frontal[:dx, dx:c].copy(),
                             frontal[:dx, c].copy(), m))
        rest = min(m, c) - dx
        if rest > 0 and sep:
            lo, hi = dx, dx + rest
            blocks = [frontal[lo:hi, off[k]:off[k] + dims[k]].copy() for k in sep]
            facs.append((sep, blocks, frontal[lo:hi, c].copy()))
            fi = len(facs) - 1
            for k in sep:
                var_f[k].add(fi)
    return nodes


class EliminationPlan:
    """Precomputed elimination schedule for factor sets of fixed structure.

    Iterative solvers relinearize the same graph many times; the bookkeeping
    (which factors meet at each step, the frontal layout, the leftover rows)
    depends only on structure and is done once here. ``run`` then only fills
    frontal blocks and triangularizes them.
    """

    def __init__(self, dims: Dict[VariableKey, int], factor_keys: Sequence[Sequence[VariableKey]],
                 factor_rows: Sequence[int], order: Sequence[VariableKey]):
        pos = {k: p for p, k in enumerate(order)}
        keys = [list(ks) for ks in factor_keys]
        rows = list(factor_rows)
        self.n_input = len(keys)
        var_f: Dict[VariableKey, set] = {k: set() for k in dims}
        for fi, ks in enumerate(keys):
            for k in ks:
                var_f[k].add(fi)
        self.steps = []
        for x in order:
            fids = sorted(var_f[x])
            if not fids:
                raise StructurallySingular(f"variable {x.name} has no incident factor")
            sep = set()
            m = 0
            for fi in fids:
                sep.update(keys[fi])
                m += rows[fi]
                for k in keys[fi]:
                    if k != x:
                        var_f[k].discard(fi)
            var_f[x] = set()
            sep.discard(x)
            sep = sorted(sep, key=pos.__getitem__)
            dx = dims[x]
            if m < dx:
                raise StructurallySingular(f"variable {x.name} has {m} rows for {dx} unknowns")
            off = {x: 0}
            c = dx
            for k in sep:
                off[k] = c
                c += dims[k]
            inputs = []
            r0 = 0
            for fi in fids:
                r1 = r0 + rows[fi]
                inputs.append((fi, r0, r1, [(off[k], off[k] + dims[k]) for k in keys[fi]]))
                r0 = r1
            rest = min(m, c) - dx
            new_fid = -1
            sep_cols = [(off[k], off[k] + dims[k]) for k in sep]
            if rest > 0 and sep:
                keys.append(sep)
                rows.append(rest)
                new_fid = len(keys) - 1
                for k in sep:
                    var_f[k].add(new_fid)
            self.steps.append((x, dx, tuple(sep), m, c, inputs, rest, new_fid, sep_cols))
        self.n_total = len(keys)

    def run(self, blocks: Sequence[Sequence[np.ndarray]], rhs: Sequence[np.ndarray],
            backend=None) -> List[DagNode]:
        """Eliminate numeric factors laid out like the planned structure."""
        kern = backend or kernels
        fb = list(blocks) + [None] * (self.n_total - self.n_input)
        fr = list(rhs) + [None] * (self.n_total - self.n_input)
        nodes = []
        for x, dx, sep, m, c, inputs, rest, new_fid, sep_cols in self.steps:
            frontal = np.zeros((m, c + 1))
            for fi, r0, r1, cols in inputs:
                for (c0, c1), b in zip(cols, fb[fi]):
                    frontal[r0:r1, c0:c1] = b
                frontal[r0:r1, c] = fr[fi]
                fb[fi] = fr[fi] = None
            kern.frontal_qr(frontal)
            nodes.append(DagNode(x, sep, frontal[:dx, :dx], frontal[:dx, dx:c],
                                 frontal[:dx, c], m))
            if new_fid >= 0:
                lo, hi = dx, dx + rest
                fb[new_fid] = [frontal[lo:hi, c0:c1] for c0, c1 in sep_cols]
                fr[new_fid] = frontal[lo:hi, c]
        return nodes


def symbolic_eliminate(graph: DynFactorGraph, ordering="min_degree",
                       backend=None) -> EliminationDag:
    """Eliminate ``graph`` in the given order into a DAG of dense conditionals.

    ``ordering`` is an ``Ordering``, a tag understood by ``get_ordering`` or a
    sequence of keys.
    """
    ordering = get_ordering(ordering, graph)
    nodes = eliminate_factors(graph.variables, _raw_factors(graph), ordering.keys, backend)
    return EliminationDag(nodes, ordering, graph)


def elimination_structure(graph: DynFactorGraph, ordering="min_degree", backend=None):
    """Parent sets only, via the structural kernel (no numerics).

    Returns ``{key: parents}`` in elimination order.
    """
    kern = backend or kernels
    ordering = get_ordering(ordering, graph)
    keys = list(ordering.keys)
    idx = {k: i for i, k in enumerate(keys)}
    dims = [graph.variables[k] for k in keys]
    fvars = [[idx[k] for k in f.blocks] for f in graph.factors]
    frows = [f.rows for f in graph.factors]
    parents, status = kern.symbolic_eliminate(dims, fvars, frows, list(range(len(keys))))
    if status < 0:
        raise StructurallySingular(f"variable {keys[-status - 1].name} has no incident factor")
    if status > 0:
        raise StructurallySingular(f"variable {keys[status - 1].name} is under-determined")
    return {keys[p]: tuple(keys[u] for u in par) for p, par in enumerate(parents)}


def fill_count(graph: DynFactorGraph, ordering) -> int:
    return sum(len(p) for p in elimination_structure(graph, ordering).values())


def _check_pivots(node: DagNode) -> None:
    diag = np.abs(np.diag(node.R))
    if diag.size and diag.min() < PIVOT_TOL:
        raise NumericallySingular(f"pivot {diag.min():.3e} below {PIVOT_TOL} "
                                  f"while solving {node.key.name}")


def solve_nodes(nodes: Sequence[DagNode], rhs: Optional[Dict[VariableKey, np.ndarray]] = None,
                backend=None) -> Dict[VariableKey, np.ndarray]:
    """Back-substitution ``R x = d`` over the DAG; ``rhs`` replaces the stored ``d``."""
    kern = backend or kernels
    values: Dict[VariableKey, np.ndarray] = {}
    for node in reversed(nodes):
        b = node.d if rhs is None else rhs[node.key]
        if node.parents:
            b = b - node.S @ np.concatenate([values[p] for p in node.parents])
        _check_pivots(node)
        values[node.key] = kern.solve_upper(node.R, b)
    return values


class DagFactor:
    """The DAG's conditionals as one block upper-triangular ``R`` over a flat vector.

    Variables are laid out in elimination order. Pivots are checked once on
    construction, so repeated sweeps (as in iterative solvers preconditioned by
    the elimination) skip that work.
    """

    def __init__(self, nodes: Sequence[DagNode], backend=None):
        self.kern = backend or kernels
        self.slices: Dict[VariableKey, slice] = {}
        o = 0
        for node in nodes:
            _check_pivots(node)
            d = node.R.shape[0]
            self.slices[node.key] = slice(o, o + d)
            o += d
        self.size = o
        self._items = []
        index = np.arange(self.size)
        for node in nodes:
            pidx = np.concatenate([index[self.slices[p]] for p in node.parents]) \
                if node.parents else None
            self._items.append((node.R, node.S, self.slices[node.key], pidx))
        self.d = self.flatten({node.key: node.d for node in nodes})

    def flatten(self, values: Dict[VariableKey, np.ndarray]) -> np.ndarray:
        out = np.zeros(self.size)
        for k, sl in self.slices.items():
            out[sl] = values[k]
        return out

    def unflatten(self, x: np.ndarray) -> Dict[VariableKey, np.ndarray]:
        return {k: x[sl].copy() for k, sl in self.slices.items()}

    def solve(self, y: np.ndarray) -> np.ndarray:
        """``R x = y`` by back-substitution."""
        x = np.zeros(self.size)
        solve_upper = self.kern.solve_upper
        for r, s, sl, pidx in reversed(self._items):
            b = y[sl] if pidx is None else y[sl] - s @ x[pidx]
            x[sl] = solve_upper(r, b)
        return x

    def solve_transpose(self, w: np.ndarray) -> np.ndarray:
        """``R.T z = w`` by forward substitution."""
        acc = np.array(w, dtype=float)
        z = np.zeros(self.size)
        solve_upper_t = self.kern.solve_upper_t
        for r, s, sl, pidx in self._items:
            zi = solve_upper_t(r, acc[sl])
            z[sl] = zi
            if pidx is not None:
                acc[pidx] -= s.T @ zi
        return z


def back_substitute(dag: EliminationDag, backend=None) -> Solution:
    """Solve the DAG in reverse elimination order."""
    values = solve_nodes(dag.nodes, backend=backend)
    res = dag.graph.residual_norm(values) if dag.graph is not None else 0.0
    return Solution(values, res)


def solve(graph: DynFactorGraph, ordering="min_degree", backend=None) -> Solution:
    return back_substitute(symbolic_eliminate(graph, ordering, backend), backend)


def export_dag_dot(dag: EliminationDag) -> str:
    """DOT digraph with edges from each variable to its parents."""
    lines = ["digraph {"]
    for n in dag.nodes:
        lines.append(f'  "{n.key.name}";')
    for n in dag.nodes:
        for p in n.parents:
            lines.append(f'  "{n.key.name}" -> "{p.name}";')
    return "\n".join(lines) + "\n}\n"
