"""Pure-Python elimination kernels. Same contracts as the compiled ``_ckernels``.

Variables are integers ``0..n-1``; callers translate keys.
"""
import numpy as np

BACKEND = "python"


def symbolic_eliminate(dims, factor_vars, factor_rows, order):
    """Factor-level symbolic elimination with generic-rank row accounting.

    Eliminating ``x`` merges every factor touching it. The merged block has
    ``m`` rows and ``c`` columns; QR leaves ``min(m, c) - dim(x)`` rows on the
    separator, which become a new factor when positive.

    Returns ``(parents, status)``: ``parents[p]`` lists the separator of the
    p-th eliminated variable sorted by elimination position; ``status`` is 0 on
    success, ``-(p+1)`` if the p-th variable has no incident factor, and
    ``p+1`` if it has fewer rows than columns (structurally rank deficient).
    """
    nvar = len(dims)
    pos = [0] * nvar
    for p, v in enumerate(order):
        pos[v] = p
    fvars = [list(vs) for vs in factor_vars]
    frows = list(factor_rows)
    var_f = [set() for _ in range(nvar)]
    for fi, vs in enumerate(fvars):
        for v in vs:
            var_f[v].add(fi)
    parents = []
    status = 0
    for p, x in enumerate(order):
        fids = var_f[x]
        if not fids:
            return parents, -(p + 1)
        sep = set()
        m = 0
        for fi in fids:
            m += frows[fi]
            sep.update(fvars[fi])
        sep.discard(x)
        for fi in list(fids):
            for v in fvars[fi]:
                var_f[v].discard(fi)
        c = dims[x]
        for v in sep:
            c += dims[v]
        if m < dims[x] and status == 0:
            status = p + 1
        rest = min(m, c) - dims[x]
        if rest > 0 and sep:
            fi = len(fvars)
            fvars.append(list(sep))
            frows.append(rest)
            for v in sep:
                var_f[v].add(fi)
        parents.append(sorted(sep, key=pos.__getitem__))
    return parents, status


def min_degree_order(n, adjacency, rank):
    """Greedy minimum degree on the variable graph.

    ``adjacency[v]`` lists neighbours of ``v``; ties go to the lowest ``rank``.
    """
    adj = [set(a) for a in adjacency]
    for v in range(n):
        adj[v].discard(v)
    alive = [True] * n
    order = []
    for _ in range(n):
        best = -1
        for v in range(n):
            if not alive[v]:
                continue
            if best < 0 or len(adj[v]) < len(adj[best]) or (
                    len(adj[v]) == len(adj[best]) and rank[v] < rank[best]):
                best = v
        nbrs = adj[best]
        for u in nbrs:
            adj[u].discard(best)
            adj[u].update(w for w in nbrs if w != u)
        alive[best] = False
        adj[best] = set()
        order.append(best)
    return order


def frontal_qr(m):
    """Triangularize ``m`` in place (Householder QR).

    Only the upper trapezoid ``min(rows, cols)`` is meaningful afterwards.
    """
    rows = m.shape[0]
    k = min(rows, m.shape[1])
    r = np.linalg.qr(m, mode="r")
    m[:k, :] = r[:k, :]
    m[k:, :] = 0.0


def solve_upper(r, rhs):
    """Solve ``r x = rhs`` for square upper-triangular ``r``."""
    return np.linalg.solve(r, rhs)


def solve_upper_t(r, rhs):
    """Solve ``r.T x = rhs`` for square upper-triangular ``r``."""
    return np.linalg.solve(r.T, rhs)
