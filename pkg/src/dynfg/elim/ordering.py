"""Variable orderings for elimination."""
from __future__ import annotations

import heapq
from collections import deque
from dataclasses import dataclass
from typing import Iterable, List, Tuple

from ..fgcore import (JOINT_ACCEL, JOINT_TORQUE, DynFactorGraph, F, VariableKey, Vdot, qdd,
                      tau)
from . import kernels

TAGS = ("rnea", "crba", "aba", "min_degree", "colamd_like", "nested_dissection",
        "reverse_index", "custom")
_ALIASES = {"md": "min_degree", "colamd": "colamd_like", "nd": "nested_dissection",
            "reverse": "reverse_index"}


class WrongProblemClass(ValueError):
    pass


@dataclass(frozen=True)
class Ordering:
    keys: Tuple[VariableKey, ...]
    tag: str

    def __iter__(self):
        return iter(self.keys)

    def __len__(self):
        return len(self.keys)

    def __getitem__(self, i):
        return self.keys[i]

    def names(self) -> List[str]:
        return [k.name for k in self.keys]


def _check(graph: DynFactorGraph, keys, tag) -> Ordering:
    if len(keys) != len(graph.variables) or set(keys) != set(graph.variables):
        raise ValueError(f"{tag} ordering is not a permutation of the unknowns")
    return Ordering(tuple(keys), tag)


def _n_joints(graph: DynFactorGraph) -> int:
    return graph.n_joints or max((k.index for k in graph.variables), default=0)


def _joint_kinds(graph: DynFactorGraph):
    n = _n_joints(graph)
    has_tau = all(tau(i) in graph.variables for i in range(1, n + 1))
    has_qdd = all(qdd(i) in graph.variables for i in range(1, n + 1))
    any_tau = any(k.kind == JOINT_TORQUE for k in graph.variables)
    any_qdd = any(k.kind == JOINT_ACCEL for k in graph.variables)
    return n, has_tau and not any_qdd, has_qdd and not any_tau


def order_rnea(graph: DynFactorGraph) -> Ordering:
    """tau_n..tau_1, F_1..F_n, Vdot_n..Vdot_1 on an inverse-dynamics graph."""
    n, inverse, _ = _joint_kinds(graph)
    if not inverse:
        raise WrongProblemClass("RNEA ordering needs an inverse-dynamics graph")
    keys = ([tau(i) for i in range(n, 0, -1)] + [F(i) for i in range(1, n + 1)]
            + [Vdot(i) for i in range(n, 0, -1)])
    return _check(graph, keys, "rnea")


def order_crba(graph: DynFactorGraph) -> Ordering:
    """All wrenches, then all twist accelerations, then joint accelerations."""
    n, _, forward = _joint_kinds(graph)
    if not forward:
        raise WrongProblemClass("CRBA ordering needs a forward-dynamics graph")
    keys = ([F(i) for i in range(n, 0, -1)] + [Vdot(i) for i in range(n, 0, -1)]
            + [qdd(i) for i in range(n, 0, -1)])
    return _check(graph, keys, "crba")


def order_aba(graph: DynFactorGraph) -> Ordering:
    """F_i, Vdot_i, qdd_i alternating from the tip (i = n..1)."""
    n, _, forward = _joint_kinds(graph)
    if not forward:
        raise WrongProblemClass("ABA ordering needs a forward-dynamics graph")
    keys = []
    for i in range(n, 0, -1):
        keys += [F(i), Vdot(i), qdd(i)]
    return _check(graph, keys, "aba")


def order_reverse_index(graph: DynFactorGraph) -> Ordering:
    return Ordering(tuple(sorted(graph.variables, reverse=True)), "reverse_index")


def order_custom(graph: DynFactorGraph, keys: Iterable) -> Ordering:
    keys = [VariableKey.parse(k) if isinstance(k, str) else VariableKey(*k) for k in keys]
    return _check(graph, keys, "custom")


def _indexed(graph: DynFactorGraph):
    keys = sorted(graph.variables)
    idx = {k: i for i, k in enumerate(keys)}
    adj = graph.adjacency()
    return keys, idx, [[idx[u] for u in sorted(adj[k])] for k in keys]


def order_min_degree(graph: DynFactorGraph, backend=None) -> Ordering:
    """Greedy minimum degree on the variable graph, ties to the lowest key."""
    kern = backend or kernels
    keys, _, adjacency = _indexed(graph)
    order = kern.min_degree_order(len(keys), adjacency, list(range(len(keys))))
    return Ordering(tuple(keys[i] for i in order), "min_degree")


def order_colamd_like(graph: DynFactorGraph) -> Ordering:
    """Approximate column minimum degree on the factor/variable incidence.

    A variable's score is ``sum(|f| - 1)`` over its live factors, capped by the
    number of other live variables; ties go to variables whose factors would
    be absorbed without leftover rows, then to the lowest key. Eliminating a variable merges its factors
    into one element on the remaining variables, carrying the rows the frontal
    QR leaves over; an element left with no rows disappears.
    """
    keys = sorted(graph.variables)
    idx = {k: i for i, k in enumerate(keys)}
    nvar = len(keys)
    dims = [graph.variables[k] for k in keys]
    elems = [set(idx[k] for k in f.blocks) for f in graph.factors]
    rows = [f.rows for f in graph.factors]
    var_e = [set() for _ in range(nvar)]
    for e, vs in enumerate(elems):
        for v in vs:
            var_e[v].add(e)
    alive = [True] * nvar
    n_alive = nvar

    def score(v):
        s = sum(len(elems[e]) - 1 for e in var_e[v])
        # ties prefer variables whose factors are fully absorbed
        m = sum(rows[e] for e in var_e[v])
        width = dims[v] + sum(dims[u] for u in set().union(*(elems[e] for e in var_e[v])) - {v})
        leftover = int(min(m, width) > dims[v] and width > dims[v])
        return (min(s, n_alive - 1), leftover)

    cur = [score(v) for v in range(nvar)]
    heap = [(cur[v], v) for v in range(nvar)]
    heapq.heapify(heap)
    order = []
    while heap:
        s, v = heapq.heappop(heap)
        if not alive[v] or s != cur[v]:
            continue
        alive[v] = False
        n_alive -= 1
        merged = set()
        m = 0
        for e in var_e[v]:
            merged |= elems[e]
            m += rows[e]
            for u in elems[e]:
                if u != v:
                    var_e[u].discard(e)
            elems[e] = set()
        merged.discard(v)
        var_e[v] = set()
        rest = min(m, dims[v] + sum(dims[u] for u in merged)) - dims[v]
        touched = set(merged)
        if merged and rest > 0:
            elems.append(merged)
            rows.append(rest)
            for u in merged:
                var_e[u].add(len(elems) - 1)
        order.append(v)
        # the cap binds for high scores once variables are gone
        touched |= {u for u in range(nvar) if alive[u] and cur[u][0] >= n_alive - 1}
        for u in touched:
            if alive[u]:
                s_new = score(u)
                if s_new != cur[u]:
                    cur[u] = s_new
                    heapq.heappush(heap, (s_new, u))
    return Ordering(tuple(keys[i] for i in order), "colamd_like")


def _components(nodes: List[int], adj) -> List[List[int]]:
    inside = set(nodes)
    seen = set()
    comps = []
    for s in sorted(nodes):
        if s in seen:
            continue
        comp = []
        dq = deque([s])
        seen.add(s)
        while dq:
            u = dq.popleft()
            comp.append(u)
            for w in adj[u]:
                if w in inside and w not in seen:
                    seen.add(w)
                    dq.append(w)
        comps.append(sorted(comp))
    return comps


def _bfs_levels(start: int, inside: set, adj) -> List[List[int]]:
    levels = [[start]]
    seen = {start}
    while True:
        nxt = sorted({w for u in levels[-1] for w in adj[u] if w in inside and w not in seen})
        if not nxt:
            return levels
        seen.update(nxt)
        levels.append(nxt)


def _local_min_degree(nodes: List[int], adj) -> List[int]:
    inside = set(nodes)
    local = {u: i for i, u in enumerate(nodes)}
    sub_adj = [[local[w] for w in adj[u] if w in inside] for u in nodes]
    order = kernels.min_degree_order(len(nodes), sub_adj, list(range(len(nodes))))
    return [nodes[i] for i in order]


def order_nested_dissection(graph: DynFactorGraph, floor: int = 4) -> Ordering:
    """Recursive BFS-level bisection; separators are eliminated last (post-fix).

    Each BFS level from a pseudo-peripheral vertex is a candidate separator,
    trimmed to the vertices adjacent to the next level. The candidate with the
    smallest separator-to-smaller-side ratio wins.
    """
    keys, _, adjacency = _indexed(graph)
    adj = [set(a) for a in adjacency]

    def dissect(nodes: List[int]) -> List[int]:
        comps = _components(nodes, adj)
        if len(comps) > 1:
            return [u for c in comps for u in dissect(c)]
        if len(nodes) <= floor:
            return _local_min_degree(nodes, adj)
        inside = set(nodes)
        # pseudo-peripheral start: farthest node from the lowest key
        first = _bfs_levels(nodes[0], inside, adj)
        levels = _bfs_levels(first[-1][0], inside, adj)
        best = None
        for li in range(1, len(levels) - 1):
            # keep only level vertices that touch the next level
            nxt = set(levels[li + 1])
            sep = [u for u in levels[li] if adj[u] & nxt]
            a = [u for lv in levels[:li] for u in lv] + [u for u in levels[li] if not adj[u] & nxt]
            b = [u for lv in levels[li + 1:] for u in lv]
            score = (len(sep) / min(len(a), len(b)), abs(len(a) - len(b)), li)
            if best is None or score < best[0]:
                best = (score, a, sep, b)
        if best is None:
            return _local_min_degree(nodes, adj)
        _, a, sep, b = best
        return dissect(sorted(a)) + dissect(sorted(b)) + sorted(sep)

    order = dissect(list(range(len(keys))))
    return Ordering(tuple(keys[i] for i in order), "nested_dissection")


_BUILDERS = {
    "rnea": order_rnea,
    "crba": order_crba,
    "aba": order_aba,
    "min_degree": order_min_degree,
    "colamd_like": order_colamd_like,
    "nested_dissection": order_nested_dissection,
    "reverse_index": order_reverse_index,
}


def canonical_tag(tag: str) -> str:
    return _ALIASES.get(tag, tag)


def get_ordering(tag, graph: DynFactorGraph) -> Ordering:
    """Ordering from a tag, an ``Ordering`` or an explicit key sequence."""
    if isinstance(tag, Ordering):
        return _check(graph, list(tag.keys), tag.tag)
    if not isinstance(tag, str):
        return order_custom(graph, tag)
    name = canonical_tag(tag)
    if name not in _BUILDERS:
        raise ValueError(f"unknown ordering {tag!r}; choose from {', '.join(TAGS)}")
    return _BUILDERS[name](graph)
