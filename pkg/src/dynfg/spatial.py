"""Spatial algebra on SE(3): poses, adjoints, twists, wrenches and inertias.

All 6-vectors put the angular part first: twists are (omega, v) and
wrenches are (moment, force).
"""
from __future__ import annotations

from dataclasses import dataclass

import math

import numpy as np

_ORTHO_TOL = 1e-9
_EYE3 = np.eye(3)

# Plain float arrays stand in for the 6-vector and 6x6 spatial types.
Twist = np.ndarray
Wrench = np.ndarray
ScrewAxis = np.ndarray
SpatialInertia = np.ndarray


def skew(w) -> np.ndarray:
    """3x3 cross-product matrix of a 3-vector."""
    return np.array([[0.0, -w[2], w[1]],
                     [w[2], 0.0, -w[0]],
                     [-w[1], w[0], 0.0]])


def _project_rotation(r: np.ndarray) -> np.ndarray:
    u, _, vt = np.linalg.svd(r)
    out = u @ vt
    if np.linalg.det(out) < 0:
        u[:, -1] *= -1
        out = u @ vt
    return out


@dataclass(frozen=True, eq=False)
class Pose:
    """Rigid transform with an orthonormal rotation and a translation in meters."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        r = np.array(self.rotation, dtype=float).reshape(3, 3)
        p = np.array(self.translation, dtype=float).reshape(3)
        if not (np.all(np.isfinite(r)) and np.all(np.isfinite(p))):
            raise ValueError("pose entries must be finite")
        if np.linalg.det(r) <= 0.0:
            raise ValueError("rotation must have positive determinant")
        if np.max(np.abs(r.T @ r - np.eye(3))) > _ORTHO_TOL:
            r = _project_rotation(r)
        r.flags.writeable = False
        p.flags.writeable = False
        object.__setattr__(self, "rotation", r)
        object.__setattr__(self, "translation", p)

    @classmethod
    def identity(cls) -> "Pose":
        return cls(np.eye(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, m) -> "Pose":
        m = np.asarray(m, dtype=float)
        return cls(m[:3, :3], m[:3, 3])

    @classmethod
    def from_xyz_rpy(cls, xyz=(0.0, 0.0, 0.0), rpy=(0.0, 0.0, 0.0)) -> "Pose":
        """URDF-style origin: fixed-axis roll, pitch, yaw (R = Rz(y) Ry(p) Rx(r))."""
        return cls(rpy_to_matrix(rpy), xyz)

    def matrix(self) -> np.ndarray:
        m = np.eye(4)
        m[:3, :3] = self.rotation
        m[:3, 3] = self.translation
        return m

    def inverse(self) -> "Pose":
        rt = self.rotation.T
        return Pose(rt, -rt @ self.translation)

    def __matmul__(self, other: "Pose") -> "Pose":
        return compose(self, other)

    def transform_point(self, x) -> np.ndarray:
        return self.rotation @ np.asarray(x, dtype=float) + self.translation

    def allclose(self, other: "Pose", atol: float = 1e-12) -> bool:
        return (np.allclose(self.rotation, other.rotation, atol=atol, rtol=0)
                and np.allclose(self.translation, other.translation, atol=atol, rtol=0))

    def __repr__(self):
        return f"Pose(rotation={self.rotation.tolist()}, translation={self.translation.tolist()})"


def rpy_to_matrix(rpy) -> np.ndarray:
    r, p, y = (float(v) for v in rpy)
    cr, sr = np.cos(r), np.sin(r)
    cp, sp = np.cos(p), np.sin(p)
    cy, sy = np.cos(y), np.sin(y)
    rx = np.array([[1, 0, 0], [0, cr, -sr], [0, sr, cr]])
    ry = np.array([[cp, 0, sp], [0, 1, 0], [-sp, 0, cp]])
    rz = np.array([[cy, -sy, 0], [sy, cy, 0], [0, 0, 1]])
    return rz @ ry @ rx


def compose(a: Pose, b: Pose) -> Pose:
    """Group product a*b (apply b's frame inside a's)."""
    return Pose(a.rotation @ b.rotation, a.rotation @ b.translation + a.translation)


def adjoint(t: Pose) -> np.ndarray:
    """6x6 adjoint [[R, 0], [[p]R, R]] mapping twists from the child to the parent frame."""
    r = t.rotation
    out = np.zeros((6, 6))
    out[:3, :3] = r
    out[3:, 3:] = r
    out[3:, :3] = skew(t.translation) @ r
    return out


def ad(v) -> np.ndarray:
    """6x6 Lie-bracket matrix of a twist: ad(v) @ w = [v, w]."""
    v = np.asarray(v, dtype=float)
    w = skew(v[:3])
    out = np.zeros((6, 6))
    out[:3, :3] = w
    out[3:, 3:] = w
    out[3:, :3] = skew(v[3:])
    return out


def so3_exp(w) -> np.ndarray:
    w = np.asarray(w, dtype=float)
    theta = np.linalg.norm(w)
    k = skew(w)
    if theta < 1e-8:
        return np.eye(3) + k + 0.5 * k @ k
    return (np.eye(3) + np.sin(theta) / theta * k
            + (1.0 - np.cos(theta)) / theta**2 * k @ k)


def se3_exp(xi) -> Pose:
    """Exponential of a twist (omega, v) as a Pose."""
    xi = np.asarray(xi, dtype=float)
    w, v = xi[:3], xi[3:]
    theta = np.linalg.norm(w)
    k = skew(w)
    if theta < 1e-8:
        jac = np.eye(3) + 0.5 * k + k @ k / 6.0
    else:
        jac = (np.eye(3) + (1.0 - np.cos(theta)) / theta**2 * k
               + (theta - np.sin(theta)) / theta**3 * k @ k)
    return Pose(so3_exp(w), jac @ v)


def exp_adjoint(xi) -> np.ndarray:
    """adjoint(se3_exp(xi)) assembled directly, without building a Pose."""
    w, v = xi[:3], xi[3:]
    theta = math.sqrt(w[0] * w[0] + w[1] * w[1] + w[2] * w[2])
    k = skew(w)
    k2 = k @ k
    if theta < 1e-8:
        r = _EYE3 + k + 0.5 * k2
        jac = _EYE3 + 0.5 * k + k2 / 6.0
    else:
        c, s = math.cos(theta), math.sin(theta)
        r = _EYE3 + (s / theta) * k + ((1.0 - c) / theta**2) * k2
        jac = _EYE3 + ((1.0 - c) / theta**2) * k + ((theta - s) / theta**3) * k2
    out = np.zeros((6, 6))
    out[:3, :3] = r
    out[3:, 3:] = r
    out[3:, :3] = skew(jac @ v) @ r
    return out


def joint_pose(axis, q: float, offset: Pose) -> Pose:
    """Pose of the child frame in the parent frame: offset * exp(axis * q)."""
    axis = getattr(axis, "axis", axis)
    if q == 0.0:
        return offset
    return compose(offset, se3_exp(np.asarray(axis, dtype=float) * q))


def spatial_inertia(mass: float, rotational=None, com_offset=None) -> np.ndarray:
    """6x6 inertia about a frame whose origin sits at ``com_offset`` from the COM.

    With ``com_offset`` omitted the frame is at the center of mass and the
    result is block-diagonal.
    """
    rot = np.zeros((3, 3)) if rotational is None else np.asarray(rotational, dtype=float)
    g = np.zeros((6, 6))
    g[:3, :3] = rot
    g[3:, 3:] = mass * np.eye(3)
    if com_offset is not None:
        # frame origin at -c relative to COM, i.e. COM at c in the frame
        shift = adjoint(Pose(np.eye(3), -np.asarray(com_offset, dtype=float)))
        g = shift.T @ g @ shift
    return g


def transform_inertia(g: np.ndarray, child_to_parent: Pose) -> np.ndarray:
    """Express a child-frame inertia in the parent frame."""
    a = adjoint(child_to_parent.inverse())
    return a.T @ g @ a


def validate_inertia(g: np.ndarray, atol: float = 1e-12) -> None:
    g = np.asarray(g, dtype=float)
    if g.shape != (6, 6) or not np.all(np.isfinite(g)):
        raise ValueError("spatial inertia must be a finite 6x6 matrix")
    if np.max(np.abs(g - g.T)) > atol * max(1.0, np.max(np.abs(g))):
        raise ValueError("spatial inertia must be symmetric")
    if np.min(np.linalg.eigvalsh(g)) < -1e-9 * max(1.0, np.max(np.abs(g))):
        raise ValueError("spatial inertia must be positive semidefinite")
    if g[3, 3] <= 0.0:
        raise ValueError("link mass must be positive")


def validate_screw_axis(axis, kind: str) -> np.ndarray:
    a = np.asarray(axis, dtype=float).reshape(6)
    part = a[:3] if kind == "revolute" else a[3:]
    if abs(np.linalg.norm(part) - 1.0) > 1e-12:
        raise ValueError(f"{kind} screw axis must have a unit-norm "
                         f"{'angular' if kind == 'revolute' else 'linear'} part")
    if kind == "prismatic" and np.linalg.norm(a[:3]) > 1e-12:
        raise ValueError("prismatic screw axis must have zero angular part")
    return a
