"""Serial-chain robot models, URDF ingestion and the known-twist pass."""
from __future__ import annotations

import math
import warnings
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .spatial import (Pose, adjoint, compose, exp_adjoint, joint_pose, spatial_inertia,
                      transform_inertia, validate_inertia, validate_screw_axis)

DEFAULT_GRAVITY = (0.0, 0.0, -9.81)


class UrdfError(ValueError):
    """Base class for URDF ingestion failures."""


class MalformedXml(UrdfError):
    pass


class UnsupportedJointType(UrdfError):
    pass


class BranchingChain(UrdfError):
    pass


@dataclass(frozen=True, eq=False)
class Link:
    """A rigid body; its frame sits at the center of mass."""

    name: str
    inertia: np.ndarray
    com_frame: Pose = field(default_factory=Pose.identity)

    def __post_init__(self):
        g = np.array(self.inertia, dtype=float)
        validate_inertia(g)
        g.flags.writeable = False
        object.__setattr__(self, "inertia", g)

    @property
    def mass(self) -> float:
        return float(self.inertia[3, 3])


@dataclass(frozen=True, eq=False)
class Joint:
    """One-dof joint; ``offset`` is the parent-COM to child-COM pose at q = 0."""

    name: str
    kind: str
    axis: np.ndarray
    offset: Pose
    lower_limit: float = -math.inf
    upper_limit: float = math.inf
    velocity_limit: float = math.inf
    effort_limit: float = math.inf

    def __post_init__(self):
        if self.kind not in ("revolute", "prismatic"):
            raise UnsupportedJointType(self.kind)
        a = validate_screw_axis(self.axis, self.kind).copy()
        a.flags.writeable = False
        object.__setattr__(self, "axis", a)
        if math.isnan(self.lower_limit) or math.isnan(self.upper_limit):
            raise ValueError(f"joint {self.name}: limits must not be NaN")
        if not self.lower_limit < self.upper_limit:
            raise ValueError(f"joint {self.name}: lower limit must be below upper limit")
        object.__setattr__(self, "_offset_inv_ad", adjoint(self.offset.inverse()))
        object.__setattr__(self, "_last_ad", (None, None))

    def child_adjoint(self, q: float) -> np.ndarray:
        """Ad of T_{i,i-1}(q), the parent-to-child transform, built without Poses.

        The last result is cached (read-only) since the factors of one time
        step ask for the same joint angle several times in a row.
        """
        q = float(q)
        last_q, last = self._last_ad
        if last_q == q:
            return last
        m = exp_adjoint(self.axis * (-q)) @ self._offset_inv_ad
        m.flags.writeable = False
        object.__setattr__(self, "_last_ad", (q, m))
        return m

    def pose(self, q: float) -> Pose:
        """Pose of the child link frame in the parent link frame."""
        return joint_pose(self.axis, float(q), self.offset)


@dataclass(frozen=True, eq=False)
class RobotModel:
    """Fixed-base serial chain. ``links[0]`` is the base; joint i drives link i."""

    links: tuple
    joints: tuple
    base_acceleration: np.ndarray = field(
        default_factory=lambda: gravity_base_acceleration(DEFAULT_GRAVITY))
    tool_wrench: np.ndarray = field(default_factory=lambda: np.zeros(6))
    tool_pose: Pose = field(default_factory=Pose.identity)
    name: str = "robot"

    def __post_init__(self):
        object.__setattr__(self, "links", tuple(self.links))
        object.__setattr__(self, "joints", tuple(self.joints))
        if len(self.links) != len(self.joints) + 1:
            raise ValueError("a chain with n joints needs n moving links plus a base")
        for key in ("base_acceleration", "tool_wrench"):
            v = np.array(getattr(self, key), dtype=float).reshape(6)
            if not np.all(np.isfinite(v)):
                raise ValueError(f"{key} must be finite")
            v.flags.writeable = False
            object.__setattr__(self, key, v)

    @property
    def n(self) -> int:
        return len(self.joints)

    def with_gravity(self, g) -> "RobotModel":
        return replace(self, base_acceleration=gravity_base_acceleration(g))

    def with_tool_wrench(self, wrench) -> "RobotModel":
        return replace(self, tool_wrench=np.asarray(wrench, dtype=float))

    def inertias(self) -> list:
        return [link.inertia for link in self.links[1:]]

    def axes(self) -> list:
        return [j.axis for j in self.joints]


@dataclass
class JointState:
    """Joint-space state with per-joint known flags for qdd and tau."""

    q: np.ndarray
    qd: np.ndarray
    qdd: np.ndarray
    tau: np.ndarray
    qdd_known: np.ndarray
    tau_known: np.ndarray

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float).reshape(-1)
        n = self.q.size
        for name in ("qd", "qdd", "tau"):
            v = np.asarray(getattr(self, name), dtype=float).reshape(-1)
            if v.size != n:
                raise ValueError(f"{name} has length {v.size}, expected {n}")
            setattr(self, name, v)
        for name in ("qdd_known", "tau_known"):
            v = np.asarray(getattr(self, name), dtype=bool).reshape(-1)
            if v.size != n:
                raise ValueError(f"{name} has length {v.size}, expected {n}")
            setattr(self, name, v)

    @property
    def n(self) -> int:
        return self.q.size

    @classmethod
    def inverse(cls, q, qd, qdd) -> "JointState":
        n = len(q)
        return cls(q, qd, qdd, np.zeros(n), np.ones(n, bool), np.zeros(n, bool))

    @classmethod
    def forward(cls, q, qd, tau) -> "JointState":
        n = len(q)
        return cls(q, qd, np.zeros(n), tau, np.zeros(n, bool), np.ones(n, bool))

    @classmethod
    def hybrid(cls, q, qd, qdd, tau, qdd_known) -> "JointState":
        qdd_known = np.asarray(qdd_known, dtype=bool)
        return cls(q, qd, qdd, tau, qdd_known, ~qdd_known)

    def problem_class(self) -> str:
        if np.any(self.qdd_known == self.tau_known):
            raise ValueError("each joint needs exactly one of qdd/tau known")
        if self.qdd_known.all():
            return "inverse"
        if self.tau_known.all():
            return "forward"
        return "hybrid"


def gravity_base_acceleration(g) -> np.ndarray:
    """Base acceleration that emulates gravity ``g`` on every link."""
    g = np.asarray(g, dtype=float).reshape(3)
    if not np.all(np.isfinite(g)):
        raise ValueError("gravity must be finite")
    return np.concatenate([np.zeros(3), -g]) + 0.0


def joint_transforms(model: RobotModel, q) -> list:
    """Poses T_{i-1,i}(q_i) of each link in its parent, i = 1..n."""
    return [j.pose(qi) for j, qi in zip(model.joints, q)]


def compute_twists(model: RobotModel, q, qd) -> list:
    """Body twists of links 1..n by forward recursion from a resting base."""
    q = np.asarray(q, dtype=float)
    qd = np.asarray(qd, dtype=float)
    if q.size != model.n or qd.size != model.n:
        raise ValueError("q and qd must have one entry per joint")
    twists = []
    v = np.zeros(6)
    for joint, qi, qdi in zip(model.joints, q, qd):
        ad_child = adjoint(joint.pose(qi).inverse())
        v = ad_child @ v + joint.axis * qdi
        twists.append(v)
    return twists


def kinetic_energy(model: RobotModel, q, qd) -> float:
    return 0.5 * sum(float(v @ g @ v) for v, g in zip(compute_twists(model, q, qd), model.inertias()))


# --------------------------------------------------------------------- URDF

def _floats(text: Optional[str], count: int, default) -> np.ndarray:
    if text is None:
        return np.array(default, dtype=float)
    vals = [float(t) for t in text.split()]
    if len(vals) != count:
        raise MalformedXml(f"expected {count} numbers, got {text!r}")
    return np.array(vals)


def _origin(elem) -> Pose:
    if elem is None:
        return Pose.identity()
    o = elem.find("origin")
    if o is None:
        return Pose.identity()
    return Pose.from_xyz_rpy(_floats(o.get("xyz"), 3, (0, 0, 0)),
                             _floats(o.get("rpy"), 3, (0, 0, 0)))


_KNOWN_LINK_TAGS = {"inertial", "visual", "collision"}
_KNOWN_JOINT_TAGS = {"origin", "axis", "limit", "parent", "child", "dynamics",
                     "mimic", "safety_controller", "calibration"}
_KNOWN_ROBOT_TAGS = {"link", "joint", "material", "transmission", "gazebo"}


def _parse_inertial(link_elem):
    """Return (mass, 3x3 inertia at COM, COM pose in the URDF link frame)."""
    inertial = link_elem.find("inertial")
    if inertial is None:
        return 0.0, np.zeros((3, 3)), Pose.identity()
    mass_elem = inertial.find("mass")
    mass = float(mass_elem.get("value", "0")) if mass_elem is not None else 0.0
    inertia = np.zeros((3, 3))
    ie = inertial.find("inertia")
    if ie is not None:
        g = lambda k: float(ie.get(k, "0"))
        inertia = np.array([[g("ixx"), g("ixy"), g("ixz")],
                            [g("ixy"), g("iyy"), g("iyz")],
                            [g("ixz"), g("iyz"), g("izz")]])
    return mass, inertia, _origin(inertial)


def load_urdf(text: str, gravity=DEFAULT_GRAVITY) -> RobotModel:
    """Parse a single unbranched chain of revolute/prismatic/continuous/fixed joints.

    Link frames are moved to each link's center of mass; fixed joints are
    folded into neighbouring offsets (and their link inertias merged into the
    parent). Unknown elements trigger a ``UserWarning`` and are ignored.
    """
    try:
        root = ET.fromstring(text)
    except ET.ParseError as exc:
        raise MalformedXml(str(exc)) from exc
    if root.tag != "robot":
        raise MalformedXml("root element must be <robot>")
    for child in root:
        if child.tag not in _KNOWN_ROBOT_TAGS:
            warnings.warn(f"ignoring unknown URDF element <{child.tag}>")

    links = {}
    for le in root.findall("link"):
        name = le.get("name")
        if name is None:
            raise MalformedXml("link without a name")
        for c in le:
            if c.tag not in _KNOWN_LINK_TAGS:
                warnings.warn(f"ignoring unknown element <{c.tag}> in link {name}")
        links[name] = _parse_inertial(le)

    joints_by_parent = {}
    child_names = set()
    for je in root.findall("joint"):
        jtype = je.get("type")
        jname = je.get("name", "?")
        if jtype not in ("revolute", "prismatic", "continuous", "fixed"):
            raise UnsupportedJointType(f"joint {jname}: type {jtype!r}")
        for c in je:
            if c.tag not in _KNOWN_JOINT_TAGS:
                warnings.warn(f"ignoring unknown element <{c.tag}> in joint {jname}")
        pe, ce = je.find("parent"), je.find("child")
        if pe is None or ce is None:
            raise MalformedXml(f"joint {jname} lacks parent or child")
        parent, child = pe.get("link"), ce.get("link")
        if parent not in links or child not in links:
            raise MalformedXml(f"joint {jname} references an unknown link")
        if child in child_names:
            raise BranchingChain(f"link {child} has more than one parent joint (loop)")
        child_names.add(child)
        if parent in joints_by_parent:
            raise BranchingChain(f"link {parent} has more than one child joint")
        joints_by_parent[parent] = je

    roots = [name for name in links if name not in child_names]
    if len(roots) != 1:
        raise BranchingChain("expected exactly one root link")

    # walk the chain
    chain = []
    name = roots[0]
    while name in joints_by_parent:
        je = joints_by_parent[name]
        child = je.find("child").get("link")
        chain.append((je, child))
        name = child
    if len(chain) + 1 != len(links):
        raise BranchingChain("links not reachable from the root")

    # Body frames: base keeps its URDF frame, moving links use their COM frame.
    # ``pending`` accumulates fixed transforms from the current body frame.
    base_name = roots[0]
    base_inertia = np.zeros((6, 6))
    cur_link_inertia = None  # 6x6 of the current moving body, about its body frame
    out_links = [None]
    out_joints = []
    pending = Pose.identity()   # current URDF link frame expressed in the body frame

    for je, child in chain:
        jtype = je.get("type")
        origin = _origin(je)
        mass, rot, com = links[child]
        if jtype == "fixed":
            pending = compose(pending, origin)
            if mass > 0.0:
                g = spatial_inertia(mass, rot)
                merged = transform_inertia(g, compose(pending, com))
                if cur_link_inertia is None:
                    base_inertia = base_inertia + merged
                else:
                    cur_link_inertia = cur_link_inertia + merged
            continue
        if mass <= 0.0:
            raise UrdfError(f"moving link {child} needs a positive mass")
        axis_elem = je.find("axis")
        axis_dir = _floats(axis_elem.get("xyz") if axis_elem is not None else None,
                           3, (1.0, 0.0, 0.0))
        norm = np.linalg.norm(axis_dir)
        if norm == 0.0:
            raise MalformedXml(f"joint {je.get('name')}: zero axis")
        axis_dir = axis_dir / norm
        kind = "prismatic" if jtype == "prismatic" else "revolute"
        screw_link = (np.concatenate([axis_dir, np.zeros(3)]) if kind == "revolute"
                      else np.concatenate([np.zeros(3), axis_dir]))
        screw = adjoint(com.inverse()) @ screw_link
        if kind == "revolute":
            screw[:3] /= np.linalg.norm(screw[:3])
        lower, upper = -math.inf, math.inf
        vel, eff = math.inf, math.inf
        lim = je.find("limit")
        if lim is not None:
            vel = float(lim.get("velocity", "inf"))
            eff = float(lim.get("effort", "inf"))
            if jtype != "continuous":
                lower = float(lim.get("lower", "-inf"))
                upper = float(lim.get("upper", "inf"))
        offset = compose(compose(pending, origin), com)
        if out_joints:
            out_links[-1] = Link(out_links[-1][0], cur_link_inertia, out_links[-1][1])
        out_joints.append(Joint(je.get("name", f"joint{len(out_joints) + 1}"), kind, screw,
                                offset, lower, upper, vel, eff))
        out_links.append((child, com))
        cur_link_inertia = spatial_inertia(mass, rot)
        pending = com.inverse()

    if not out_joints:
        raise UrdfError("chain has no moving joints")
    out_links[-1] = Link(out_links[-1][0], cur_link_inertia, out_links[-1][1])
    # the base never moves; a unit inertia keeps the link record valid
    out_links[0] = Link(base_name, base_inertia + spatial_inertia(1.0, np.eye(3)))
    return RobotModel(tuple(out_links), tuple(out_joints),
                      base_acceleration=gravity_base_acceleration(gravity),
                      tool_pose=pending, name=root.get("name", "robot"))


def load_urdf_file(path, gravity=DEFAULT_GRAVITY) -> RobotModel:
    with open(path, encoding="utf-8") as fh:
        return load_urdf(fh.read(), gravity=gravity)


# ------------------------------------------------------------ stock models

def planar_chain(n: int, mass: float = 1.0, length: float = 1.0,
                 rotational: float = 0.0, gravity=(0.0, 0.0, 0.0)) -> RobotModel:
    """nR planar arm about z with point-like masses at the link tips."""
    links = [Link("base", spatial_inertia(1.0, np.eye(3)))]
    joints = []
    for i in range(n):
        links.append(Link(f"link{i + 1}", spatial_inertia(mass, rotational * np.eye(3))))
        # joint sits `length` behind the COM along x
        axis = np.array([0, 0, 1, 0, length, 0], dtype=float)
        offset = Pose(np.eye(3), [length, 0, 0])
        joints.append(Joint(f"joint{i + 1}", "revolute", axis, offset))
    return RobotModel(tuple(links), tuple(joints),
                      base_acceleration=gravity_base_acceleration(gravity), name=f"planar{n}r")


def puma_like(gravity=(0.0, 0.0, -9.81)) -> RobotModel:
    """6R arm with PUMA-560-like kinematics and generic full inertias."""
    from .spatial import rpy_to_matrix
    specs = [
        # (joint origin xyz, rpy) in the parent link frame, COM xyz, mass, diag inertia
        ((0, 0, 0.67), (0, 0, 0), (0, 0, 0.05), 4.0, (0.35, 0.35, 0.2)),
        ((0, 0.24, 0), (-math.pi / 2, 0, 0), (0.07, 0.0, 0.22), 17.4, (0.13, 0.52, 0.54)),
        ((0.43, 0, -0.09), (0, 0, 0), (0.0, -0.02, 0.05), 4.8, (0.066, 0.086, 0.0125)),
        # wrist inertias are heavier than a real PUMA's to keep M(q) well conditioned
        ((-0.02, 0.43, 0), (math.pi / 2, 0, 0), (0, 0, -0.02), 1.2, (0.012, 0.009, 0.012)),
        ((0, 0, 0), (-math.pi / 2, 0, 0), (0, 0, 0.02), 0.8, (0.005, 0.006, 0.005)),
        ((0, 0, 0), (math.pi / 2, 0, 0), (0, 0, 0.03), 0.4, (0.002, 0.002, 0.0012)),
    ]
    links = [Link("base", spatial_inertia(1.0, np.eye(3)))]
    joints = []
    prev_com = Pose.identity()
    for i, (xyz, rpy, com_xyz, m, diag) in enumerate(specs):
        origin = Pose(rpy_to_matrix(rpy), xyz)
        com = Pose(rpy_to_matrix((0.1 * i, -0.05 * i, 0.07 * i)), com_xyz)
        screw = adjoint(com.inverse()) @ np.array([0, 0, 1, 0, 0, 0], dtype=float)
        offset = compose(compose(prev_com.inverse(), origin), com)
        joints.append(Joint(f"joint{i + 1}", "revolute", screw, offset, -math.pi, math.pi))
        links.append(Link(f"link{i + 1}", spatial_inertia(m, np.diag(diag))))
        prev_com = com
    return RobotModel(tuple(links), tuple(joints),
                      base_acceleration=gravity_base_acceleration(gravity),
                      tool_pose=prev_com.inverse(), name="puma_like")


def cartpole_model(cart_mass: float = 1.0, pole_mass: float = 0.3, length: float = 0.5,
                   gravity=DEFAULT_GRAVITY) -> RobotModel:
    """Prismatic cart along x carrying a point-mass pole hinged about y.

    The pole hangs straight down at q2 = 0; q2 = pi is upright.
    """
    links = (
        Link("base", spatial_inertia(1.0, np.eye(3))),
        Link("cart", spatial_inertia(cart_mass, 0.01 * np.eye(3))),
        Link("pole", spatial_inertia(pole_mass)),
    )
    joints = (
        Joint("slider", "prismatic", np.array([0, 0, 0, 1, 0, 0], dtype=float), Pose.identity(),
              -math.inf, math.inf),
        # pivot is at +length along z in the pole's COM frame
        Joint("hinge", "revolute", np.array([0, 1, 0, -length, 0, 0], dtype=float),
              Pose(np.eye(3), [0, 0, -length])),
    )
    return RobotModel(links, joints, base_acceleration=gravity_base_acceleration(gravity),
                      name="cartpole")


def random_state(model: RobotModel, rng: np.random.Generator):
    """Uniform q in [-pi, pi], qd in [-1, 1] and a qdd/tau draw in [-1, 1]."""
    n = model.n
    return (rng.uniform(-math.pi, math.pi, n), rng.uniform(-1.0, 1.0, n),
            rng.uniform(-1.0, 1.0, n))


__all__ = [
    "BranchingChain", "DEFAULT_GRAVITY", "Joint", "JointState", "Link", "MalformedXml",
    "RobotModel", "UnsupportedJointType", "UrdfError", "cartpole_model", "compute_twists",
    "gravity_base_acceleration", "joint_transforms", "kinetic_energy", "load_urdf",
    "load_urdf_file", "planar_chain", "puma_like", "random_state",
]
