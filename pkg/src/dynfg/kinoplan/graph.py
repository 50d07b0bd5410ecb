"""Trajectory factor graph: per-step dynamics chained by GP priors."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from ..fgcore import VariableKey
from ..robot import RobotModel
from ..spatial import adjoint
from .factors import (HARD_SIGMA, AccelFactor, FrictionConeFactor, GoalFactor, GpFactor,
                      HingeLimitFactor, MinTorqueFactor, NonlinearFactor, PriorFactor,
                      TorqueFactor, TwistFactor, WrenchFactor, f_key, fext_key, tau_key, v_key,
                      vd_key, x_key)


class PlanConfigError(ValueError):
    pass


@dataclass
class Goal:
    t: float
    q: Sequence[float]
    qd: Optional[Sequence[float]] = None
    joints: Optional[Sequence[int]] = None  # 0-based joint indices; all when None
    sigma_q: float = 1e-3
    sigma_qd: float = 1e-3


@dataclass
class PlanOptions:
    """Factor toggles and weights. Unset limits are read from the model."""

    gp: bool = True
    qc: float = 1.0
    min_torque: bool = True
    torque_sigma: float = 10.0
    joint_limits: bool = False
    limit_alpha: float = 1.0
    limit_eps: float = 0.05
    unactuated: Sequence[int] = ()  # 1-based joint numbers with a zero-torque constraint
    contact: Optional[dict] = None  # {"mu": float, "normal": [x, y, z], "sigma": float}
    contact_wrench_sigma: float = 100.0
    initial_q: Optional[Sequence[float]] = None
    initial_qd: Optional[Sequence[float]] = None
    goals: List[Goal] = field(default_factory=list)


@dataclass
class PlanGraph:
    model: RobotModel
    times: np.ndarray
    variables: Dict[VariableKey, int]
    factors: List[NonlinearFactor]
    options: PlanOptions

    @property
    def steps(self) -> int:
        return self.times.size

    @property
    def dt(self) -> float:
        return float(self.times[1] - self.times[0])

    def step_of(self, t: float) -> int:
        k = int(round(t / self.dt))
        if abs(k * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise PlanConfigError(f"time {t} is not on the {self.dt} s grid")
        if not 0 <= k < self.steps:
            raise PlanConfigError(f"time {t} lies outside the horizon "
                                  f"[0, {self.times[-1]:g}] s")
        return k

    def factor_counts(self) -> Dict[str, int]:
        out: Dict[str, int] = {}
        for f in self.factors:
            out[f.label] = out.get(f.label, 0) + 1
        return out


def build_plan_graph(model: RobotModel, horizon: float, dt: float,
                     options: Optional[PlanOptions] = None) -> PlanGraph:
    """Variables and factors for ``round(horizon / dt) + 1`` time steps."""
    opts = options or PlanOptions()
    if not (dt > 0 and horizon > 0):
        raise PlanConfigError("horizon and dt must be positive")
    steps = int(round(horizon / dt)) + 1
    if steps < 2 or abs((steps - 1) * dt - horizon) > 1e-9 * max(1.0, horizon):
        raise PlanConfigError("horizon must be a positive multiple of dt spanning >= 2 steps")
    n = model.n
    contact = opts.contact is not None
    times = np.arange(steps) * dt
    variables: Dict[VariableKey, int] = {}
    factors: List[NonlinearFactor] = []
    for k in range(steps):
        variables[x_key(k)] = 3 * n
        variables[tau_key(k)] = n
        for i in range(1, n + 1):
            variables[v_key(i, k)] = 6
            variables[vd_key(i, k)] = 6
            variables[f_key(i, k)] = 6
        if contact:
            variables[fext_key(k)] = 6
        for i in range(1, n + 1):
            factors.append(TwistFactor(model, i, k))
            factors.append(AccelFactor(model, i, k))
            factors.append(WrenchFactor(model, i, k, contact))
            factors.append(TorqueFactor(model, i, k))
        for j in opts.unactuated:
            if not 1 <= j <= n:
                raise PlanConfigError(f"unactuated joint {j} out of range")
            factors.append(PriorFactor(tau_key(k), n, [j - 1], [0.0], HARD_SIGMA,
                                       f"zero_tau{j}_k{k}", "zero_torque"))
        if opts.min_torque:
            factors.append(MinTorqueFactor(n, k, opts.torque_sigma))
        if opts.joint_limits:
            for i, joint in enumerate(model.joints, start=1):
                if math.isfinite(joint.lower_limit) and math.isfinite(joint.upper_limit):
                    factors.append(HingeLimitFactor(n, i, k, joint.lower_limit,
                                                    joint.upper_limit, opts.limit_alpha,
                                                    opts.limit_eps))
        if contact:
            c = opts.contact
            factors.append(FrictionConeFactor(k, c.get("normal", (0.0, 0.0, 1.0)),
                                              c.get("mu", 0.5), c.get("sigma", 1.0)))
            factors.append(PriorFactor(fext_key(k), 6, range(6), np.zeros(6),
                                       opts.contact_wrench_sigma, f"fext_k{k}", "contact_wrench"))
        if opts.gp and k + 1 < steps:
            factors.append(GpFactor(n, k, dt, opts.qc))
    if opts.initial_q is not None:
        factors.append(PriorFactor(x_key(0), 3 * n, range(n), opts.initial_q, HARD_SIGMA,
                                   "start_q", "start"))
    if opts.initial_qd is not None:
        factors.append(PriorFactor(x_key(0), 3 * n, range(n, 2 * n), opts.initial_qd,
                                   HARD_SIGMA, "start_qd", "start"))
    graph = PlanGraph(model, times, variables, factors, opts)
    for goal in opts.goals:
        k = graph.step_of(goal.t)
        factors.append(GoalFactor(n, k, goal.q, goal.qd, goal.sigma_q, goal.sigma_qd,
                                  goal.joints))
    return graph


def _exp_adjoints(xi: np.ndarray) -> np.ndarray:
    """Batched ``exp_adjoint`` for twists stacked as rows of ``xi``."""
    w, v = xi[:, :3], xi[:, 3:]
    theta = np.linalg.norm(w, axis=1)
    small = theta < 1e-8
    t = np.where(small, 1.0, theta)
    c, s = np.cos(t), np.sin(t)
    a = np.where(small, 1.0, s / t)[:, None, None]
    b = np.where(small, 0.5, (1.0 - c) / t**2)[:, None, None]
    e = np.where(small, 1.0 / 6.0, (t - s) / t**3)[:, None, None]
    k = _skews(w)
    k2 = k @ k
    eye = np.eye(3)
    r = eye + a * k + b * k2
    p = np.einsum("bij,bj->bi", eye + b * k + e * k2, v)
    out = np.zeros((xi.shape[0], 6, 6))
    out[:, :3, :3] = r
    out[:, 3:, 3:] = r
    out[:, 3:, :3] = _skews(p) @ r
    return out


def _skews(w: np.ndarray) -> np.ndarray:
    out = np.zeros((w.shape[0], 3, 3))
    out[:, 0, 1], out[:, 0, 2] = -w[:, 2], w[:, 1]
    out[:, 1, 0], out[:, 1, 2] = w[:, 2], -w[:, 0]
    out[:, 2, 0], out[:, 2, 1] = -w[:, 1], w[:, 0]
    return out


def _bracket(v: np.ndarray, a: np.ndarray) -> np.ndarray:
    """Rows of ad(v) @ a."""
    return np.concatenate([np.cross(v[:, :3], a[:3]),
                           np.cross(v[:, :3], a[3:]) + np.cross(v[:, 3:], a[:3])], axis=1)


def _co_bracket(v: np.ndarray, h: np.ndarray) -> np.ndarray:
    """Rows of ad(v).T @ h."""
    return -np.concatenate([np.cross(v[:, :3], h[:, :3]) + np.cross(v[:, 3:], h[:, 3:]),
                            np.cross(v[:, :3], h[:, 3:])], axis=1)


def joint_adjoints(model: RobotModel, q: np.ndarray) -> List[np.ndarray]:
    """Per joint, the stacked Ad of T_{i,i-1}(q) for every row of ``q``."""
    return [_exp_adjoints(-q[:, i, None] * j.axis) @ j._offset_inv_ad
            for i, j in enumerate(model.joints)]


def _newton_euler(model: RobotModel, ads, qd, qdd, vd0, ft_tool):
    """Outward twists/accelerations and inward wrenches/torques, batched over rows."""
    n = model.n
    rows = qd.shape[0]
    vs, vds, fs = [None] * n, [None] * n, [None] * n
    v = np.zeros((rows, 6))
    vd = np.broadcast_to(vd0, (rows, 6))
    for i, joint in enumerate(model.joints):
        a = joint.axis
        v = np.einsum("bij,bj->bi", ads[i], v) + qd[:, i, None] * a
        vd = (np.einsum("bij,bj->bi", ads[i], vd) + qdd[:, i, None] * a
              + qd[:, i, None] * _bracket(v, a))
        vs[i], vds[i] = v, vd
    f = np.broadcast_to(ft_tool, (rows, 6))
    tau = np.zeros((rows, n))
    for i in range(n - 1, -1, -1):
        g = model.links[i + 1].inertia
        f = vds[i] @ g.T - _co_bracket(vs[i], vs[i] @ g.T) + f
        fs[i] = f
        tau[:, i] = f @ model.joints[i].axis
        f = np.einsum("bji,bj->bi", ads[i], f)
    return vs, vds, fs, tau


def link_arrays(model: RobotModel, x: np.ndarray, tool_wrench: Optional[np.ndarray] = None,
                unactuated: Sequence[int] = ()):
    """Batched dynamics-consistent link quantities for states stacked as rows of ``x``.

    ``tool_wrench`` is one wrench or one per row (tool frame). Accelerations of
    ``unactuated`` joints (1-based) are replaced by the hybrid-dynamics
    solution with zero torque. Returns ``(x, vs, vds, fs, tau)`` where the link
    lists hold one ``(rows, 6)`` array per link.
    """
    n = model.n
    x = np.array(x, dtype=float, ndmin=2)
    q, qd, qdd = x[:, :n], x[:, n:2 * n], x[:, 2 * n:]
    ads = joint_adjoints(model, q)
    ft = model.tool_wrench if tool_wrench is None else np.asarray(tool_wrench, dtype=float)
    ft_tool = ft @ adjoint(model.tool_pose.inverse())
    u = [j - 1 for j in unactuated]
    if u:
        qdd[:, u] = 0.0
    vs, vds, fs, tau = _newton_euler(model, ads, qd, qdd, model.base_acceleration, ft_tool)
    if u:
        # tau is affine in qdd: unit-acceleration sweeps give the columns M[:, j]
        zero = np.zeros_like(qd)
        cols = []
        for j in u:
            e = np.zeros_like(qd)
            e[:, j] = 1.0
            cols.append(_newton_euler(model, ads, zero, e, np.zeros(6), np.zeros(6)))
        m_uu = np.stack([np.stack([c[3][:, i] for c in cols], axis=1) for i in u], axis=1)
        sol = np.linalg.solve(m_uu, -tau[:, u, None])[:, :, 0]
        for col, (j, c) in enumerate(zip(u, cols)):
            s_j = sol[:, col, None]
            qdd[:, j] = sol[:, col]
            vds = [a + s_j * b for a, b in zip(vds, c[1])]
            fs = [a + s_j * b for a, b in zip(fs, c[2])]
            tau = tau + s_j * c[3]
        tau[:, u] = 0.0
    return x, vs, vds, fs, tau


def link_values(model: RobotModel, x: np.ndarray, k: int,
                tool_wrench: Optional[np.ndarray] = None,
                unactuated: Sequence[int] = ()) -> Dict[VariableKey, np.ndarray]:
    """Twists, accelerations, wrenches and torques that zero every dynamics factor at step k.

    Accelerations of ``unactuated`` joints (1-based) are replaced by the
    hybrid-dynamics solution with zero torque; the possibly modified state is
    returned under its own key.
    """
    xs, vs, vds, fs, tau = link_arrays(model, x, tool_wrench, unactuated)
    return _step_dict(model.n, k, 0, xs, vs, vds, fs, tau)


def _step_dict(n, k, row, xs, vs, vds, fs, tau):
    out: Dict[VariableKey, np.ndarray] = {x_key(k): xs[row]}
    for i in range(1, n + 1):
        out[v_key(i, k)] = vs[i - 1][row]
        out[vd_key(i, k)] = vds[i - 1][row]
        out[f_key(i, k)] = fs[i - 1][row]
    out[tau_key(k)] = tau[row]
    return out


def step_wrenches(graph: PlanGraph, values) -> Optional[np.ndarray]:
    """Per-step tool wrench variables, or None when the graph has none."""
    if fext_key(0) not in graph.variables:
        return None
    return np.array([values[fext_key(k)] for k in range(graph.steps)])


def project_links(graph: PlanGraph, values: Dict[VariableKey, np.ndarray],
                  unactuated: bool = False) -> Dict:
    """Copy of ``values`` with link variables and torques recomputed from the states.

    With ``unactuated`` the accelerations of unactuated joints are first
    replaced by hybrid dynamics so their zero-torque rows hold exactly.
    """
    out = dict(values)
    unact = list(graph.options.unactuated) if unactuated else []
    x = np.array([values[x_key(k)] for k in range(graph.steps)])
    arrays = link_arrays(graph.model, x, step_wrenches(graph, values), unact)
    n = graph.model.n
    for k in range(graph.steps):
        out.update(_step_dict(n, k, k, *arrays))
    return out


def initial_values(graph: PlanGraph, consistent: bool = False) -> Dict[VariableKey, np.ndarray]:
    """Piecewise-linear q through the start and goal waypoints; zeros elsewhere.

    With ``consistent`` the link variables and torques are instead filled in
    from that state trajectory so every dynamics factor starts at zero.
    """
    n = graph.model.n
    opts = graph.options
    q0 = np.zeros(n) if opts.initial_q is None else np.asarray(opts.initial_q, dtype=float)
    ts = [0.0]
    qs = [q0]
    for goal in sorted(opts.goals, key=lambda g: g.t):
        q = qs[-1].copy()
        sel = np.arange(n) if goal.joints is None else np.asarray(goal.joints, dtype=int)
        q[sel] = np.asarray(goal.q, dtype=float)
        if goal.t > ts[-1]:
            ts.append(goal.t)
            qs.append(q)
        else:
            qs[-1] = q
    qs_arr = np.array(qs)
    values = {key: np.zeros(dim) for key, dim in graph.variables.items()}
    for k, t in enumerate(graph.times):
        x = np.zeros(3 * n)
        for j in range(n):
            x[j] = np.interp(t, ts, qs_arr[:, j])
        values[x_key(k)] = x
        if consistent:
            ext = values.get(fext_key(k))
            values.update(link_values(graph.model, x, k, ext))
    return values
