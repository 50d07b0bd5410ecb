"""Inverse, forward and hybrid dynamics on the factor graph, plus classical oracles.

The oracles below are direct recursions on the robot model. They share only
the spatial algebra with the factor-graph path so that agreement between the
two is meaningful.
"""
from __future__ import annotations

from dataclasses import dataclass, replace
from typing import Optional, Tuple

import numpy as np

from .elim import Solution, solve
from .fgcore import build_dynamics_graph, condition, qdd, tau
from .robot import JointState, RobotModel, gravity_base_acceleration
from .spatial import ad, adjoint

DEFAULT_ORDERING = {"inverse": "rnea", "forward": "aba", "hybrid": "min_degree"}


@dataclass
class DynamicsProblem:
    """A robot, a joint state with known/unknown flags and boundary values.

    ``gravity`` and ``tool_wrench`` override the model's boundary values when
    given.
    """

    model: RobotModel
    state: JointState
    gravity: Optional[np.ndarray] = None
    tool_wrench: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.state.n != self.model.n:
            raise ValueError(f"state has {self.state.n} joints, model has {self.model.n}")
        self.state.problem_class()

    @property
    def problem_class(self) -> str:
        return self.state.problem_class()

    def effective_model(self) -> RobotModel:
        m = self.model
        if self.gravity is not None:
            m = m.with_gravity(self.gravity)
        if self.tool_wrench is not None:
            m = m.with_tool_wrench(self.tool_wrench)
        return m


def _solve_graph(p: DynamicsProblem, ordering) -> Tuple[JointState, Solution]:
    model = p.effective_model()
    s = p.state
    graph = build_dynamics_graph(model, s.q, s.qd)
    known = {}
    for i in range(1, model.n + 1):
        if s.qdd_known[i - 1]:
            known[qdd(i)] = s.qdd[i - 1:i]
        if s.tau_known[i - 1]:
            known[tau(i)] = s.tau[i - 1:i]
    sol = solve(condition(graph, known), ordering)
    out_qdd = s.qdd.copy()
    out_tau = s.tau.copy()
    for i in range(1, model.n + 1):
        if not s.qdd_known[i - 1]:
            out_qdd[i - 1] = sol.values[qdd(i)][0]
        if not s.tau_known[i - 1]:
            out_tau[i - 1] = sol.values[tau(i)][0]
    return replace(s, qdd=out_qdd, tau=out_tau), sol


def inverse_dynamics(p: DynamicsProblem, ordering="rnea") -> Tuple[JointState, Solution]:
    """Torques (and link accelerations/wrenches) for known joint accelerations."""
    if p.problem_class != "inverse":
        raise ValueError("inverse dynamics needs every qdd known")
    return _solve_graph(p, ordering)


def forward_dynamics(p: DynamicsProblem, ordering="aba") -> Tuple[JointState, Solution]:
    """Joint accelerations for known torques."""
    if p.problem_class != "forward":
        raise ValueError("forward dynamics needs every tau known")
    return _solve_graph(p, ordering)


def hybrid_dynamics(p: DynamicsProblem, method: str = "elimination",
                    ordering="min_degree") -> Tuple[JointState, Optional[Solution]]:
    """Mixed problem: per joint either qdd or tau is known.

    ``method="featherstone"`` runs the three-pass oracle instead of a single
    elimination and returns no ``Solution``.
    """
    if method == "elimination":
        return _solve_graph(p, ordering)
    if method == "featherstone":
        return featherstone_hybrid_oracle(p), None
    raise ValueError(f"unknown hybrid method {method!r}")


def solve_problem(p: DynamicsProblem, ordering=None) -> Tuple[JointState, Solution]:
    return _solve_graph(p, ordering or DEFAULT_ORDERING[p.problem_class])


# ------------------------------------------------------------------ oracles

def _boundary(model: RobotModel, gravity, tool_wrench):
    vd0 = model.base_acceleration if gravity is None else gravity_base_acceleration(gravity)
    ft = model.tool_wrench if tool_wrench is None else np.asarray(tool_wrench, dtype=float)
    return np.asarray(vd0, dtype=float), ft, adjoint(model.tool_pose.inverse())


def _kinematics(model: RobotModel, q, qd):
    """Per joint: Ad_{T_{i,i-1}}, screw axis, twist and velocity-product term."""
    ads, axes, twists, bias = [], [], [], []
    v = np.zeros(6)
    for joint, qi, qdi in zip(model.joints, q, qd):
        a = joint.axis
        t = adjoint(joint.pose(qi).inverse())
        v = t @ v + a * qdi
        ads.append(t)
        axes.append(a)
        twists.append(v)
        bias.append(ad(v) @ a * qdi)
    return ads, axes, twists, bias


def rnea_oracle(model: RobotModel, q, qd, qdd_, gravity=None, tool_wrench=None) -> np.ndarray:
    """Recursive Newton-Euler: outward accelerations, inward wrenches."""
    q, qd, qdd_ = (np.asarray(x, dtype=float).reshape(-1) for x in (q, qd, qdd_))
    vd0, ft, tool_ad = _boundary(model, gravity, tool_wrench)
    ads, axes, twists, bias = _kinematics(model, q, qd)
    n = model.n
    vdots = []
    vd = vd0
    for i in range(n):
        vd = ads[i] @ vd + axes[i] * qdd_[i] + bias[i]
        vdots.append(vd)
    out = np.zeros(n)
    f = tool_ad.T @ ft
    for i in range(n - 1, -1, -1):
        g = model.links[i + 1].inertia
        v = twists[i]
        f = g @ vdots[i] - ad(v).T @ g @ v + f
        out[i] = axes[i] @ f
        f = ads[i].T @ f
    return out


def crba_oracle(model: RobotModel, q) -> np.ndarray:
    """Joint-space mass matrix from composite rigid-body inertias."""
    q = np.asarray(q, dtype=float).reshape(-1)
    n = model.n
    ads = [adjoint(j.pose(qi).inverse()) for j, qi in zip(model.joints, q)]
    axes = [j.axis for j in model.joints]
    comp = [model.links[i + 1].inertia.copy() for i in range(n)]
    for i in range(n - 1, 0, -1):
        comp[i - 1] = comp[i - 1] + ads[i].T @ comp[i] @ ads[i]
    m = np.zeros((n, n))
    for i in range(n):
        f = comp[i] @ axes[i]
        m[i, i] = axes[i] @ f
        for j in range(i - 1, -1, -1):
            f = ads[j + 1].T @ f
            m[j, i] = m[i, j] = axes[j] @ f
    return m


def crba_forward(model: RobotModel, q, qd, tau_, gravity=None, tool_wrench=None) -> np.ndarray:
    """Forward dynamics by a dense solve of ``M qdd = tau - bias``."""
    n = model.n
    bias = rnea_oracle(model, q, qd, np.zeros(n), gravity, tool_wrench)
    return np.linalg.solve(crba_oracle(model, q), np.asarray(tau_, dtype=float) - bias)


def aba_oracle(model: RobotModel, q, qd, tau_, gravity=None, tool_wrench=None) -> np.ndarray:
    """Articulated-body algorithm."""
    q, qd, tau_ = (np.asarray(x, dtype=float).reshape(-1) for x in (q, qd, tau_))
    vd0, ft, tool_ad = _boundary(model, gravity, tool_wrench)
    ads, axes, twists, bias = _kinematics(model, q, qd)
    n = model.n
    ia = [model.links[i + 1].inertia.copy() for i in range(n)]
    pa = [-ad(twists[i]).T @ ia[i] @ twists[i] for i in range(n)]
    pa[n - 1] = pa[n - 1] + tool_ad.T @ ft
    us, ds, uu = [None] * n, np.zeros(n), np.zeros(n)
    for i in range(n - 1, -1, -1):
        a = axes[i]
        u_vec = ia[i] @ a
        d = a @ u_vec
        u = tau_[i] - a @ pa[i]
        us[i], ds[i], uu[i] = u_vec, d, u
        if i > 0:
            art = ia[i] - np.outer(u_vec, u_vec) / d
            pp = pa[i] + art @ bias[i] + u_vec * (u / d)
            ia[i - 1] = ia[i - 1] + ads[i].T @ art @ ads[i]
            pa[i - 1] = pa[i - 1] + ads[i].T @ pp
    out = np.zeros(n)
    vd = vd0
    for i in range(n):
        acc = ads[i] @ vd + bias[i]
        out[i] = (uu[i] - us[i] @ acc) / ds[i]
        vd = acc + axes[i] * out[i]
    return out


def featherstone_hybrid_oracle(p: DynamicsProblem) -> JointState:
    """Three passes: ID with zero qdd on the forward joints, a forward solve of
    the forward joints on their residual torques, and a final ID."""
    model = p.effective_model()
    s = p.state
    fwd = s.tau_known
    qdd_ = np.where(fwd, 0.0, s.qdd)
    tau0 = rnea_oracle(model, s.q, s.qd, qdd_)
    if fwd.any():
        m = crba_oracle(model, s.q)
        sub = m[np.ix_(fwd, fwd)]
        qdd_[fwd] = np.linalg.solve(sub, s.tau[fwd] - tau0[fwd])
        tau_all = rnea_oracle(model, s.q, s.qd, qdd_)
    else:
        tau_all = tau0
    out_tau = np.where(fwd, s.tau, tau_all)
    return replace(s, qdd=qdd_, tau=out_tau)
