# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
# distutils: language = c++
"""Compiled elimination kernels. Contracts match ``_pykernels``."""
from libc.math cimport sqrt
from libcpp.vector cimport vector

import numpy as np

BACKEND = "cython"


def symbolic_eliminate(dims, factor_vars, factor_rows, order):
    cdef int nvar = len(dims)
    cdef int nfac0 = len(factor_vars)
    cdef vector[int] cdims = dims
    cdef vector[int] pos = vector[int](nvar, 0)
    cdef vector[vector[int]] fvars
    cdef vector[int] frows = factor_rows
    cdef vector[char] falive
    cdef vector[vector[int]] var_f = vector[vector[int]](nvar)
    cdef vector[int] mark = vector[int](nvar, -1)
    cdef vector[int] sep
    cdef int p, x, fi, v, m, c, rest, j, k, status = 0
    cdef int nord = len(order)
    cdef vector[int] corder = order
    for p in range(nord):
        pos[corder[p]] = p
    for fi in range(nfac0):
        fvars.push_back(factor_vars[fi])
        falive.push_back(1)
        for v in fvars[fi]:
            var_f[v].push_back(fi)
    parents = []
    for p in range(nord):
        x = corder[p]
        sep.clear()
        m = 0
        mark[x] = p
        k = 0
        for j in range(<int>var_f[x].size()):
            fi = var_f[x][j]
            if not falive[fi]:
                continue
            k += 1
            falive[fi] = 0
            m += frows[fi]
            for v in fvars[fi]:
                if mark[v] != p:
                    mark[v] = p
                    sep.push_back(v)
        var_f[x].clear()
        if k == 0:
            return parents, -(p + 1)
        c = cdims[x]
        for v in sep:
            c += cdims[v]
        if m < cdims[x] and status == 0:
            status = p + 1
        rest = (m if m < c else c) - cdims[x]
        if rest > 0 and sep.size() > 0:
            fi = fvars.size()
            fvars.push_back(sep)
            frows.push_back(rest)
            falive.push_back(1)
            for v in sep:
                var_f[v].push_back(fi)
        parents.append(sorted(sep, key=lambda u: pos[u]))
    return parents, status


def min_degree_order(int n, adjacency, rank):
    cdef vector[vector[char]] adj = vector[vector[char]](n, vector[char](n, 0))
    cdef vector[int] deg = vector[int](n, 0)
    cdef vector[int] crank = rank
    cdef vector[char] alive = vector[char](n, 1)
    cdef vector[int] nbrs
    cdef int v, u, w, best, it, a, b
    for v in range(n):
        for u in adjacency[v]:
            if u != v and not adj[v][u]:
                adj[v][u] = 1
                adj[u][v] = 1
    for v in range(n):
        for u in range(n):
            deg[v] += adj[v][u]
    order = []
    for it in range(n):
        best = -1
        for v in range(n):
            if not alive[v]:
                continue
            if best < 0 or deg[v] < deg[best] or (deg[v] == deg[best] and crank[v] < crank[best]):
                best = v
        nbrs.clear()
        for u in range(n):
            if adj[best][u]:
                nbrs.push_back(u)
        for a in range(<int>nbrs.size()):
            u = nbrs[a]
            adj[u][best] = 0
            deg[u] -= 1
            for b in range(<int>nbrs.size()):
                w = nbrs[b]
                if w != u and not adj[u][w]:
                    adj[u][w] = 1
                    deg[u] += 1
        for u in range(n):
            adj[best][u] = 0
        deg[best] = 0
        alive[best] = 0
        order.append(best)
    return order


def frontal_qr(double[:, ::1] m):
    """In-place Householder triangularization."""
    cdef Py_ssize_t rows = m.shape[0], cols = m.shape[1]
    cdef Py_ssize_t k = rows if rows < cols else cols
    cdef Py_ssize_t j, i, c
    cdef double norm, alpha, vnorm2, dot, beta
    for j in range(k):
        norm = 0.0
        for i in range(j, rows):
            norm += m[i, j] * m[i, j]
        norm = sqrt(norm)
        if norm == 0.0:
            continue
        alpha = -norm if m[j, j] >= 0.0 else norm
        # v = x - alpha e1 stored in column j below the diagonal
        m[j, j] -= alpha
        vnorm2 = 0.0
        for i in range(j, rows):
            vnorm2 += m[i, j] * m[i, j]
        if vnorm2 == 0.0:
            m[j, j] = alpha
            continue
        beta = 2.0 / vnorm2
        for c in range(j + 1, cols):
            dot = 0.0
            for i in range(j, rows):
                dot += m[i, j] * m[i, c]
            dot *= beta
            for i in range(j, rows):
                m[i, c] -= dot * m[i, j]
        m[j, j] = alpha
        for i in range(j + 1, rows):
            m[i, j] = 0.0
    for i in range(k, rows):
        for c in range(cols):
            m[i, c] = 0.0


def solve_upper(double[:, :] r, double[:] rhs):
    """Back-substitution for square upper-triangular ``r``."""
    cdef Py_ssize_t n = r.shape[0], i, j
    cdef double acc
    out = np.empty(n)
    cdef double[:] x = out
    for i in range(n - 1, -1, -1):
        acc = rhs[i]
        for j in range(i + 1, n):
            acc -= r[i, j] * x[j]
        x[i] = acc / r[i, i]
    return out


def solve_upper_t(double[:, :] r, double[:] rhs):
    """Forward substitution for ``r.T x = rhs`` with square upper-triangular ``r``."""
    cdef Py_ssize_t n = r.shape[0], i, j
    cdef double acc
    out = np.empty(n)
    cdef double[:] x = out
    for i in range(n):
        acc = rhs[i]
        for j in range(i):
            acc -= r[j, i] * x[j]
        x[i] = acc / r[i, i]
    return out
