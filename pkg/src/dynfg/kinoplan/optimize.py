"""Levenberg-Marquardt on the trajectory graph, with elimination inner solves."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from ..elim import DagFactor, EliminationPlan, NumericallySingular, solve_nodes
from ..elim import kernels
from ..fgcore import VariableKey
from .factors import f_key, tau_key, v_key, vd_key, x_key
from .graph import PlanGraph, initial_values, link_arrays, project_links, step_wrenches


# factor classes made exact by ``project_links``
_PROJECTED = {"twist", "acceleration", "wrench_balance", "torque"}


class DivergedNaN(ArithmeticError):
    pass


class MaxIterations(RuntimeError):
    pass


@dataclass
class Trajectory:
    times: np.ndarray
    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    tau: np.ndarray
    twists: np.ndarray
    twist_accels: np.ndarray
    wrenches: np.ndarray

    @classmethod
    def from_values(cls, graph: PlanGraph, values: Dict[VariableKey, np.ndarray]):
        n = graph.model.n
        ks = range(graph.steps)
        x = np.array([values[x_key(k)] for k in ks])
        links = lambda key: np.array([[values[key(i, k)] for i in range(1, n + 1)] for k in ks])
        return cls(graph.times.copy(), x[:, :n], x[:, n:2 * n], x[:, 2 * n:],
                   np.array([values[tau_key(k)] for k in ks]), links(v_key), links(vd_key),
                   links(f_key))

    def to_csv(self) -> str:
        n = self.q.shape[1]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["t"] + [f"{p}{j}" for p in ("q", "qd", "qdd", "tau")
                            for j in range(1, n + 1)])
        for k, t in enumerate(self.times):
            row = [t, *self.q[k], *self.qd[k], *self.qdd[k], *self.tau[k]]
            w.writerow([repr(float(v)) for v in row])
        return buf.getvalue()


@dataclass
class OptimizeReport:
    iterations: int
    status: str
    initial_cost: float
    final_cost: float
    damping: float
    cost_history: List[float] = field(default_factory=list)
    cost_breakdown: Dict[str, float] = field(default_factory=dict)
    max_hard_residual: float = 0.0

    @property
    def converged(self) -> bool:
        return self.status not in ("max_iterations",)

    def to_dict(self) -> dict:
        return {
            "iterations": self.iterations,
            "status": self.status,
            "converged": self.converged,
            "initial_cost": self.initial_cost,
            "final_cost": self.final_cost,
            "damping": self.damping,
            "max_hard_residual": self.max_hard_residual,
            "cost_breakdown": dict(sorted(self.cost_breakdown.items())),
        }


@dataclass
class PlanResult:
    trajectory: Trajectory
    values: Dict[VariableKey, np.ndarray]
    report: OptimizeReport


def total_cost(graph: PlanGraph, values) -> float:
    return float(sum(np.dot(r, r) for r in (f.residual(values) for f in graph.factors)))


def cost_breakdown(graph: PlanGraph, values) -> Dict[str, float]:
    out: Dict[str, float] = {}
    for f in graph.factors:
        r = f.residual(values)
        out[f.label] = out.get(f.label, 0.0) + float(r @ r)
    return out


def max_hard_residual(graph: PlanGraph, values, hard_sigma: float = 1e-5) -> float:
    """Largest unwhitened residual over the hard (equality) factors."""
    worst = 0.0
    for f in graph.factors:
        if f.sigma <= hard_sigma:
            r = f.residual(values) * f.sigma
            if r.size:
                worst = max(worst, float(np.max(np.abs(r))))
    return worst


def plan_ordering(graph: PlanGraph) -> List[VariableKey]:
    """Minimum-degree order of the (fixed) variable adjacency."""
    keys = sorted(graph.variables)
    idx = {k: i for i, k in enumerate(keys)}
    adj = [set() for _ in keys]
    for f in graph.factors:
        ids = [idx[k] for k in f.keys]
        for a in ids:
            adj[a].update(ids)
    order = kernels.min_degree_order(len(keys), [sorted(a) for a in adj],
                                     list(range(len(keys))))
    return [keys[i] for i in order]


METHODS = ("gauss_newton", "projected_gauss_newton", "newton")

# central-difference step for the curvature of the dependent quantities
_HESS_EPS = 1e-4


def _dependent_hessians(graph: PlanGraph, values, lin) -> Dict[VariableKey, np.ndarray]:
    """Curvature of the torques and unactuated accelerations, weighted by the cost gradient.

    With link quantities, torques and unactuated accelerations eliminated by
    hybrid dynamics, the remaining soft factors are linear in those dependent
    quantities h_k(q_k, qd_k, qdd_A,k). The exact Hessian of the cost then
    adds, per step, sum_j mu_kj Hess(h_kj) on top of the Gauss-Newton term,
    where mu_kj is the cost gradient with respect to h_kj. It is found here by
    central differences of the batched dynamics.
    """
    model = graph.model
    n = model.n
    unact = [j - 1 for j in graph.options.unactuated]
    act = [j for j in range(n) if j not in unact]
    dep_acc = [2 * n + j for j in unact]
    free = [i for i in range(3 * n) if i not in dep_acc]
    steps = graph.steps
    mu = np.zeros((steps, len(act) + len(unact)))
    index = {tau_key(k): k for k in range(steps)}
    index.update({x_key(k): k for k in range(steps)})
    for f, (r, jacs) in zip(graph.factors, lin):
        if f.label in _PROJECTED or r.size == 0:
            continue
        for key, jac in zip(f.keys, jacs):
            k = index.get(key)
            if k is None:
                continue
            g = jac.T @ r
            if key == tau_key(k):
                mu[k, :len(act)] += g[act]
            elif unact:
                mu[k, len(act):] += g[dep_acc]
    # sample points: centre, then +-e_i, then (+-e_i, +-e_j) for i < j, skipping
    # pairs of actuated accelerations where h is affine
    affine = {i for i in free if i >= 2 * n}
    m = len(free)
    pairs = [(a, b) for a in range(m) for b in range(a + 1, m)
             if not (free[a] in affine and free[b] in affine)]
    offsets = [np.zeros(3 * n)]
    for a in range(m):
        for sgn in (1.0, -1.0):
            e = np.zeros(3 * n)
            e[free[a]] = sgn * _HESS_EPS
            offsets.append(e)
    for a, b in pairs:
        for sa, sb in ((1, 1), (1, -1), (-1, 1), (-1, -1)):
            e = np.zeros(3 * n)
            e[free[a]] = sa * _HESS_EPS
            e[free[b]] = sb * _HESS_EPS
            offsets.append(e)
    offsets = np.array(offsets)
    p = offsets.shape[0]
    x = np.array([values[x_key(k)] for k in range(steps)])
    pts = (x[:, None, :] + offsets[None, :, :]).reshape(-1, 3 * n)
    ext = step_wrenches(graph, values)
    if ext is not None:
        ext = np.repeat(ext, p, axis=0)
    xs, _, _, _, tau = link_arrays(model, pts, ext, graph.options.unactuated)
    h = np.concatenate([tau[:, act], xs[:, dep_acc]], axis=1).reshape(steps, p, -1)
    phi = np.einsum("kpj,kj->kp", h, mu)
    hess = np.zeros((steps, m, m))
    e2 = _HESS_EPS ** 2
    for a in range(m):
        hess[:, a, a] = (phi[:, 1 + 2 * a] - 2.0 * phi[:, 0] + phi[:, 2 + 2 * a]) / e2
    base = 1 + 2 * m
    for t, (a, b) in enumerate(pairs):
        c = phi[:, base + 4 * t:base + 4 * t + 4]
        hess[:, a, b] = hess[:, b, a] = (c[:, 0] - c[:, 1] - c[:, 2] + c[:, 3]) / (4.0 * e2)
    out = {}
    for k in range(steps):
        full = np.zeros((3 * n, 3 * n))
        full[np.ix_(free, free)] = hess[k]
        out[x_key(k)] = full
    return out


def _newton_step(nodes, hess: Dict[VariableKey, np.ndarray], max_cg: int, cg_tol: float):
    """Solve (R^T R + S) delta = R^T d by conjugate gradients in y = R delta.

    R^T R is the damped Gauss-Newton matrix already factored by elimination,
    so the iteration runs on I + R^-T S R^-1 and starts from the Gauss-Newton
    step. On negative curvature the last iterate is kept (the Gauss-Newton
    step if it happens at once). Returns the step and the CG iteration count.
    """
    fac = DagFactor(nodes)
    blocks = [(fac.slices[k], h) for k, h in hess.items()]

    def apply(y):
        delta = fac.solve(y)
        w = np.zeros_like(y)
        for sl, h in blocks:
            w[sl] = h @ delta[sl]
        return y + fac.solve_transpose(w)

    b = fac.d
    y = np.zeros_like(b)
    r = b.copy()
    p = b.copy()
    rr = rr0 = float(r @ r)
    it = 0
    while it < max_cg and rr > cg_tol ** 2 * rr0:
        ap = apply(p)
        pap = float(p @ ap)
        if pap <= 1e-12 * float(p @ p):
            if it == 0:
                y = b
            break
        alpha = rr / pap
        y = y + alpha * p
        r = r - alpha * ap
        it += 1
        rn = float(r @ r)
        p = r + (rn / rr) * p
        rr = rn
    return fac.unflatten(fac.solve(y)), it


def optimize(graph: PlanGraph, initial: Optional[Dict[VariableKey, np.ndarray]] = None,
             max_iterations: int = 500, rel_tol: float = 1e-8, step_tol: float = 1e-10,
             lambda0: float = 1e-4, lambda_max: float = 1e12, raise_on_max: bool = False,
             method: str = "newton", max_cg: int = 50, cg_tol: float = 1e-10,
             callback=None) -> PlanResult:
    """Levenberg-damped least squares with elimination inner solves.

    ``method`` selects the step:

    * ``gauss_newton``: plain damped Gauss-Newton over every variable.
    * ``projected_gauss_newton``: the same step, after which link quantities,
      torques and unactuated accelerations are recomputed from the states by
      hybrid dynamics, so the dynamics factors hold exactly at every iterate.
    * ``newton``: projected, and the step also carries the curvature of those
      dependent quantities (see ``_dependent_hessians``), solved by
      conjugate gradients preconditioned with the Gauss-Newton elimination.

    Damping starts at ``lambda0``, is multiplied by 10 on a rejected step and
    divided by 10 on an accepted one. Stops on relative cost decrease below
    ``rel_tol``, a step below ``step_tol``, damping above ``lambda_max`` or
    ``max_iterations``. ``callback(iteration, cost, damping)`` is called after
    every iteration.
    """
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}; expected one of {METHODS}")
    projected = method != "gauss_newton"
    if initial is None:
        initial = initial_values(graph, consistent=projected)
    values = {k: np.array(v, dtype=float) for k, v in initial.items()}
    dims = graph.variables
    order = plan_ordering(graph)
    dim_list = list(dims.items())
    plan = EliminationPlan(dims, [f.keys for f in graph.factors] + [[k] for k, _ in dim_list],
                           [f.rows for f in graph.factors] + [d for _, d in dim_list], order)
    cost = total_cost(graph, values)
    if not math.isfinite(cost):
        raise DivergedNaN("initial cost is not finite")
    history = [cost]
    initial_cost = cost
    lam = lambda0
    status = "max_iterations"
    it = 0
    damp_eye = {d: np.eye(d) for d in set(dims.values())}
    zeros = [np.zeros(d) for _, d in dim_list]
    while it < max_iterations:
        it += 1
        lin = [f.linearize(values) for f in graph.factors]
        lin_blocks = [jacs for _, jacs in lin]
        lin_rhs = [-r for r, _ in lin]
        hess = _dependent_hessians(graph, values, lin) if method == "newton" else None
        accepted = False
        while lam <= lambda_max:
            s = math.sqrt(lam)
            blocks = lin_blocks + [[s * damp_eye[d]] for _, d in dim_list]
            try:
                nodes = plan.run(blocks, lin_rhs + zeros)
                if hess is None:
                    delta = solve_nodes(nodes)
                else:
                    delta, _ = _newton_step(nodes, hess, max_cg, cg_tol)
            except NumericallySingular:
                lam *= 10.0
                continue
            step = max(float(np.max(np.abs(d))) for d in delta.values())
            if step < step_tol:
                status = "small_step"
                break
            trial = {k: values[k] + delta[k] for k in values}
            if projected:
                trial = project_links(graph, trial, True)
            new_cost = total_cost(graph, trial)
            if math.isfinite(new_cost) and new_cost < cost:
                rel = (cost - new_cost) / max(cost, 1e-300)
                values, cost = trial, new_cost
                lam = max(lam / 10.0, 1e-12)
                accepted = True
                history.append(cost)
                if rel < rel_tol:
                    status = "relative_decrease"
                break
            lam *= 10.0
        if callback is not None:
            callback(it, cost, lam)
        if status != "max_iterations":
            break
        if not accepted:
            status = "damping_limit"
            break
    if status == "max_iterations" and raise_on_max:
        raise MaxIterations(f"no convergence in {max_iterations} iterations")
    report = OptimizeReport(it, status, initial_cost, cost, lam, history,
                            cost_breakdown(graph, values), max_hard_residual(graph, values))
    return PlanResult(Trajectory.from_values(graph, values), values, report)
