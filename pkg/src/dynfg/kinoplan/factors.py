"""Nonlinear factors for trajectory optimization.

Every factor returns a whitened residual and its Jacobian blocks, one per key.
"""
from __future__ import annotations

from typing import Dict, List, Optional, Sequence

import numpy as np

from ..fgcore import (JOINT_TORQUE, STATE, TOOL_WRENCH, TWIST, TWIST_ACCEL, WRENCH,
                      VariableKey)
from ..robot import RobotModel
from ..spatial import ad, adjoint, skew
from .gp import gp_transition, gp_whitener

HARD_SIGMA = 1e-6


def x_key(k: int) -> VariableKey:
    return VariableKey(STATE, 0, k)


def tau_key(k: int) -> VariableKey:
    return VariableKey(JOINT_TORQUE, 0, k)


def v_key(i: int, k: int) -> VariableKey:
    return VariableKey(TWIST, i, k)


def vd_key(i: int, k: int) -> VariableKey:
    return VariableKey(TWIST_ACCEL, i, k)


def f_key(i: int, k: int) -> VariableKey:
    return VariableKey(WRENCH, i, k)


def fext_key(k: int) -> VariableKey:
    return VariableKey(TOOL_WRENCH, 0, k)


# ------------------------------------------------------- residual functions

def hinge_limit_residual(q: float, lower: float, upper: float, alpha: float,
                         eps: float) -> float:
    """Two-sided hinge: zero inside ``[lower + eps, upper - eps]``, slope ``alpha`` outside."""
    return alpha * max(0.0, lower - q + eps) + alpha * max(0.0, q - upper + eps)


def hinge_limit_derivative(q: float, lower: float, upper: float, alpha: float,
                           eps: float) -> float:
    d = 0.0
    if lower - q + eps > 0.0:
        d -= alpha
    if q - upper + eps > 0.0:
        d += alpha
    return d


def min_torque_residual(tau, sigma: float = 1.0) -> np.ndarray:
    return np.asarray(tau, dtype=float) / sigma


def friction_cone_residual(f, n, mu: float) -> float:
    """``max(0, |f - (f.n) n| - mu (f.n))`` for a contact force ``f``."""
    f = np.asarray(f, dtype=float)
    n = np.asarray(n, dtype=float)
    fn = f @ n
    return max(0.0, float(np.linalg.norm(f - fn * n)) - mu * fn)


def friction_cone_gradient(f, n, mu: float) -> np.ndarray:
    f = np.asarray(f, dtype=float)
    n = np.asarray(n, dtype=float)
    fn = f @ n
    t = f - fn * n
    tn = float(np.linalg.norm(t))
    if tn - mu * fn <= 0.0:
        return np.zeros(3)
    g = -mu * n
    if tn > 0.0:
        g = g + t / tn
    return g


def goal_residual(q, qd, q_target, qd_target=None, sigma_q: float = 1.0,
                  sigma_qd: float = 1.0, joints: Optional[Sequence[int]] = None) -> np.ndarray:
    """Weighted goal error on the targeted joints; velocities when ``qd_target`` is set."""
    q = np.asarray(q, dtype=float)
    sel = np.arange(q.size) if joints is None else np.asarray(joints, dtype=int)
    parts = [(q[sel] - np.asarray(q_target, dtype=float)) / sigma_q]
    if qd_target is not None:
        parts.append((np.asarray(qd, dtype=float)[sel] - np.asarray(qd_target, dtype=float))
                     / sigma_qd)
    return np.concatenate(parts)


def _coad_lin(w: np.ndarray) -> np.ndarray:
    """Matrix ``M`` with ``ad(x)^T w = M x``."""
    m = np.zeros((6, 6))
    m[:3, :3] = skew(w[:3])
    m[:3, 3:] = skew(w[3:])
    m[3:, :3] = skew(w[3:])
    return m


# ------------------------------------------------------------------ factors

class NonlinearFactor:
    """Residual ``r(x)`` whitened by ``sigma``; subclasses supply ``_eval``."""

    label = "prior"

    def __init__(self, keys: Sequence[VariableKey], dims: Sequence[int], sigma: float = 1.0,
                 name: str = ""):
        self.keys = tuple(keys)
        self.dims = tuple(dims)
        self.sigma = float(sigma)
        self.name = name

    def _eval(self, vals: List[np.ndarray], jac: bool):
        raise NotImplementedError

    @property
    def rows(self) -> int:
        """Residual length; fixed per factor, found by one evaluation at zero."""
        if getattr(self, "_rows", None) is None:
            with np.errstate(all="ignore"):
                r, _ = self._eval([np.zeros(d) for d in self.dims], False)
            self._rows = int(np.size(r))
        return self._rows

    def linearize(self, values: Dict[VariableKey, np.ndarray]):
        r, jacs = self._eval([values[k] for k in self.keys], True)
        s = 1.0 / self.sigma
        return r * s, [j * s for j in jacs]

    def residual(self, values: Dict[VariableKey, np.ndarray]) -> np.ndarray:
        r, _ = self._eval([values[k] for k in self.keys], False)
        return r / self.sigma


class _StateSlicer:
    def __init__(self, n: int):
        self.n = n

    def q(self, x, i):
        return x[i - 1]

    def qd(self, x, i):
        return x[self.n + i - 1]

    def qdd(self, x, i):
        return x[2 * self.n + i - 1]


class TwistFactor(NonlinearFactor):
    """``V_i - Ad_i(q_i) V_{i-1} - A_i qd_i``."""

    label = "twist"

    def __init__(self, model: RobotModel, i: int, k: int, sigma: float = HARD_SIGMA):
        n = model.n
        keys = [v_key(i, k), x_key(k)] + ([v_key(i - 1, k)] if i > 1 else [])
        super().__init__(keys, [6, 3 * n] + ([6] if i > 1 else []), sigma, f"twist{i}_k{k}")
        self.joint = model.joints[i - 1]
        self.i, self.n = i, n

    def _eval(self, vals, jac):
        v, x = vals[0], vals[1]
        s = _StateSlicer(self.n)
        a = self.joint.axis
        t = self.joint.child_adjoint(s.q(x, self.i))
        prev = vals[2] if self.i > 1 else np.zeros(6)
        tv = t @ prev
        r = v - tv - a * s.qd(x, self.i)
        if not jac:
            return r, None
        jx = np.zeros((6, 3 * self.n))
        jx[:, self.i - 1] = ad(a) @ tv
        jx[:, self.n + self.i - 1] = -a
        jacs = [np.eye(6), jx]
        if self.i > 1:
            jacs.append(-t)
        return r, jacs


class AccelFactor(NonlinearFactor):
    """``Vdot_i - Ad_i Vdot_{i-1} - A_i qdd_i - ad(V_i) A_i qd_i``."""

    label = "acceleration"

    def __init__(self, model: RobotModel, i: int, k: int, sigma: float = HARD_SIGMA):
        n = model.n
        keys = [vd_key(i, k), v_key(i, k), x_key(k)] + ([vd_key(i - 1, k)] if i > 1 else [])
        super().__init__(keys, [6, 6, 3 * n] + ([6] if i > 1 else []), sigma, f"acc{i}_k{k}")
        self.joint = model.joints[i - 1]
        self.base = np.asarray(model.base_acceleration, dtype=float)
        self.i, self.n = i, n

    def _eval(self, vals, jac):
        vd, v, x = vals[0], vals[1], vals[2]
        s = _StateSlicer(self.n)
        a = self.joint.axis
        qd = s.qd(x, self.i)
        t = self.joint.child_adjoint(s.q(x, self.i))
        prev = vals[3] if self.i > 1 else self.base
        tp = t @ prev
        r = vd - tp - a * s.qdd(x, self.i) - ad(v) @ a * qd
        if not jac:
            return r, None
        ada = ad(a)
        jx = np.zeros((6, 3 * self.n))
        jx[:, self.i - 1] = ada @ tp
        jx[:, self.n + self.i - 1] = -ad(v) @ a
        jx[:, 2 * self.n + self.i - 1] = -a
        jacs = [np.eye(6), ada * qd, jx]
        if self.i > 1:
            jacs.append(-t)
        return r, jacs


class WrenchFactor(NonlinearFactor):
    """``F_i - Ad_{i+1}^T F_{i+1} - G_i Vdot_i + ad(V_i)^T G_i V_i``.

    At the last link the outboard wrench is the tool wrench, either a
    variable (contact) or the model constant.
    """

    label = "wrench_balance"

    def __init__(self, model: RobotModel, i: int, k: int, contact: bool = False,
                 sigma: float = HARD_SIGMA):
        n = model.n
        keys = [f_key(i, k), vd_key(i, k), v_key(i, k)]
        dims = [6, 6, 6]
        if i < n:
            keys += [f_key(i + 1, k), x_key(k)]
            dims += [6, 3 * n]
        elif contact:
            keys.append(fext_key(k))
            dims.append(6)
        super().__init__(keys, dims, sigma, f"wrench{i}_k{k}")
        self.model = model
        self.g = model.links[i].inertia
        self.i, self.n, self.contact = i, n, contact
        self.tool_adt = adjoint(model.tool_pose.inverse()).T

    def _eval(self, vals, jac):
        f, vd, v = vals[0], vals[1], vals[2]
        g = self.g
        gv = g @ v
        r = f - g @ vd + ad(v).T @ gv
        jacs = None
        if jac:
            jacs = [np.eye(6), -g, _coad_lin(gv) + ad(v).T @ g]
        if self.i < self.n:
            fn, x = vals[3], vals[4]
            joint = self.model.joints[self.i]
            t = joint.child_adjoint(x[self.i])
            r = r - t.T @ fn
            if jac:
                jx = np.zeros((6, 3 * self.n))
                jx[:, self.i] = t.T @ ad(joint.axis).T @ fn
                jacs += [-t.T, jx]
        elif self.contact:
            r = r - self.tool_adt @ vals[3]
            if jac:
                jacs.append(-self.tool_adt)
        else:
            r = r - self.tool_adt @ self.model.tool_wrench
        return r, jacs


class TorqueFactor(NonlinearFactor):
    """``A_i^T F_i - tau_i``."""

    label = "torque"

    def __init__(self, model: RobotModel, i: int, k: int, sigma: float = HARD_SIGMA):
        n = model.n
        super().__init__([f_key(i, k), tau_key(k)], [6, n], sigma, f"torque{i}_k{k}")
        self.a = model.joints[i - 1].axis
        self.i, self.n = i, n

    def _eval(self, vals, jac):
        r = np.array([self.a @ vals[0] - vals[1][self.i - 1]])
        if not jac:
            return r, None
        jt = np.zeros((1, self.n))
        jt[0, self.i - 1] = -1.0
        return r, [self.a.reshape(1, 6), jt]


class GpFactor(NonlinearFactor):
    """Whitened ``x_{k+1} - Phi(dt) x_k``."""

    label = "gp"

    def __init__(self, n: int, k: int, dt: float, qc=1.0):
        super().__init__([x_key(k), x_key(k + 1)], [3 * n, 3 * n], 1.0, f"gp_k{k}")
        self.phi, _ = gp_transition(dt, n, qc)
        self.w = gp_whitener(dt, n, qc)
        self.wphi = self.w @ self.phi

    def _eval(self, vals, jac):
        r = self.w @ vals[1] - self.wphi @ vals[0]
        return r, ([-self.wphi, self.w] if jac else None)


class HingeLimitFactor(NonlinearFactor):
    label = "joint_limit"

    def __init__(self, n: int, i: int, k: int, lower: float, upper: float, alpha: float,
                 eps: float):
        super().__init__([x_key(k)], [3 * n], 1.0, f"limit{i}_k{k}")
        self.i, self.n = i, n
        self.lower, self.upper, self.alpha, self.eps = lower, upper, alpha, eps

    def _eval(self, vals, jac):
        q = vals[0][self.i - 1]
        r = np.array([hinge_limit_residual(q, self.lower, self.upper, self.alpha, self.eps)])
        if not jac:
            return r, None
        j = np.zeros((1, 3 * self.n))
        j[0, self.i - 1] = hinge_limit_derivative(q, self.lower, self.upper, self.alpha,
                                                  self.eps)
        return r, [j]


class MinTorqueFactor(NonlinearFactor):
    label = "min_torque"

    def __init__(self, n: int, k: int, sigma: float = 1.0):
        super().__init__([tau_key(k)], [n], sigma, f"mintau_k{k}")
        self.n = n

    def _eval(self, vals, jac):
        return vals[0].copy(), ([np.eye(self.n)] if jac else None)


class FrictionConeFactor(NonlinearFactor):
    label = "friction_cone"

    def __init__(self, k: int, normal, mu: float, sigma: float = 1.0):
        super().__init__([fext_key(k)], [6], sigma, f"cone_k{k}")
        self.normal = np.asarray(normal, dtype=float)
        self.mu = float(mu)

    def _eval(self, vals, jac):
        # the tool wrench acts on the robot; the contact force is its reaction
        f = -vals[0][3:]
        r = np.array([friction_cone_residual(f, self.normal, self.mu)])
        if not jac:
            return r, None
        j = np.zeros((1, 6))
        j[0, 3:] = -friction_cone_gradient(f, self.normal, self.mu)
        return r, [j]


class GoalFactor(NonlinearFactor):
    label = "goal"

    def __init__(self, n: int, k: int, q_target, qd_target=None, sigma_q: float = 1.0,
                 sigma_qd: float = 1.0, joints=None):
        super().__init__([x_key(k)], [3 * n], 1.0, f"goal_k{k}")
        self.n = n
        self.joints = np.arange(n) if joints is None else np.asarray(joints, dtype=int)
        self.q_target = np.asarray(q_target, dtype=float)
        self.qd_target = None if qd_target is None else np.asarray(qd_target, dtype=float)
        self.sigma_q, self.sigma_qd = sigma_q, sigma_qd

    def _eval(self, vals, jac):
        x = vals[0]
        r = goal_residual(x[:self.n], x[self.n:2 * self.n], self.q_target, self.qd_target,
                          self.sigma_q, self.sigma_qd, self.joints)
        if not jac:
            return r, None
        m = len(self.joints)
        j = np.zeros((r.size, 3 * self.n))
        j[np.arange(m), self.joints] = 1.0 / self.sigma_q
        if self.qd_target is not None:
            j[m + np.arange(m), self.n + self.joints] = 1.0 / self.sigma_qd
        return r, [j]


class PriorFactor(NonlinearFactor):
    """``value[idx] - target`` on a subset of a variable's entries."""

    label = "prior"

    def __init__(self, key: VariableKey, dim: int, idx, target, sigma: float, name: str = "",
                 label: str = "prior"):
        super().__init__([key], [dim], sigma, name or f"prior_{key.name}")
        self.idx = np.asarray(idx, dtype=int)
        self.target = np.asarray(target, dtype=float)
        self.label = label

    def _eval(self, vals, jac):
        r = vals[0][self.idx] - self.target
        if not jac:
            return r, None
        j = np.zeros((self.idx.size, self.dims[0]))
        j[np.arange(self.idx.size), self.idx] = 1.0
        return r, [j]
