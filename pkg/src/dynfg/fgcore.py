"""Linear dynamics factor graphs: transcription, conditioning and assembly."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, NamedTuple, Optional, Tuple

import numpy as np

from .robot import RobotModel, compute_twists
from .spatial import ad, adjoint

TWIST_ACCEL = "twist_accel"
WRENCH = "wrench"
JOINT_ACCEL = "joint_accel"
JOINT_TORQUE = "joint_torque"
TWIST = "twist"
# used by the trajectory optimizer
JOINT_ANGLE = "joint_angle"
JOINT_VEL = "joint_vel"
STATE = "state"
TOOL_WRENCH = "tool_wrench"

SPATIAL_KINDS = frozenset({TWIST_ACCEL, WRENCH, TWIST, TOOL_WRENCH})

_SHORT = {TWIST_ACCEL: "Vdot", WRENCH: "F", JOINT_ACCEL: "qdd", JOINT_TORQUE: "tau",
          TWIST: "V", JOINT_ANGLE: "q", JOINT_VEL: "qd", STATE: "x", TOOL_WRENCH: "Fext"}
_ALIASES = {v.lower(): k for k, v in _SHORT.items()}
_ALIASES.update({k: k for k in _SHORT})
_ALIASES.update({"t": JOINT_TORQUE, "a": JOINT_ACCEL, "vd": TWIST_ACCEL, "accel": TWIST_ACCEL})


class DimensionMismatch(ValueError):
    pass


class UnknownKey(KeyError):
    pass


class VariableKey(NamedTuple):
    """(kind, index, step). Tuple ordering is the global tie-break order."""

    kind: str
    index: int
    step: int = 0

    @property
    def default_dim(self) -> int:
        return 6 if self.kind in SPATIAL_KINDS else 1

    @property
    def name(self) -> str:
        base = f"{_SHORT.get(self.kind, self.kind)}{self.index}"
        return base if self.step == 0 else f"{base}_k{self.step}"

    def spec(self) -> str:
        return f"{self.kind}:{self.index}" if self.step == 0 else f"{self.kind}:{self.index}:{self.step}"

    @classmethod
    def parse(cls, text: str) -> "VariableKey":
        parts = text.strip().split(":")
        if len(parts) not in (2, 3):
            raise ValueError(f"bad variable key {text!r}; expected kind:index")
        kind = _ALIASES.get(parts[0].strip().lower()) or _ALIASES.get(parts[0].strip())
        if kind is None:
            raise ValueError(f"unknown variable kind {parts[0]!r}")
        step = int(parts[2]) if len(parts) == 3 else 0
        return cls(kind, int(parts[1]), step)

    def __str__(self):
        return self.name


def Vdot(i: int, step: int = 0) -> VariableKey:
    return VariableKey(TWIST_ACCEL, i, step)


def F(i: int, step: int = 0) -> VariableKey:
    return VariableKey(WRENCH, i, step)


def qdd(i: int, step: int = 0) -> VariableKey:
    return VariableKey(JOINT_ACCEL, i, step)


def tau(i: int, step: int = 0) -> VariableKey:
    return VariableKey(JOINT_TORQUE, i, step)


@dataclass
class LinearFactor:
    """Block row sum_k blocks[k] @ x_k = rhs, whitened by ``noise_scale``."""

    blocks: Dict[VariableKey, np.ndarray]
    rhs: np.ndarray
    label: str = "prior"
    name: str = ""
    noise_scale: float = 1.0
    params: Tuple[str, ...] = ()

    def __post_init__(self):
        self.rhs = np.asarray(self.rhs, dtype=float).reshape(-1)
        rows = self.rhs.size
        for k, b in list(self.blocks.items()):
            b = np.asarray(b, dtype=float)
            if b.ndim == 1:
                b = b.reshape(rows, -1)
            if b.shape[0] != rows:
                raise DimensionMismatch(f"factor {self.name}: block {k} has {b.shape[0]} rows, "
                                        f"rhs has {rows}")
            self.blocks[k] = b

    @property
    def rows(self) -> int:
        return self.rhs.size

    @property
    def keys(self) -> List[VariableKey]:
        return list(self.blocks)

    def error(self, values: Dict[VariableKey, np.ndarray]) -> np.ndarray:
        r = -self.rhs.copy()
        for k, b in self.blocks.items():
            r += b @ values[k]
        return r / self.noise_scale


@dataclass
class DynFactorGraph:
    """Bipartite graph of unknown variables and linear factors."""

    variables: Dict[VariableKey, int] = field(default_factory=dict)
    factors: List[LinearFactor] = field(default_factory=list)
    known: Dict[VariableKey, np.ndarray] = field(default_factory=dict)
    # display-only factors of the full graph: (name, label, variable names)
    aux_factors: List[Tuple[str, str, Tuple[str, ...]]] = field(default_factory=list)
    n_joints: int = 0

    def add_variable(self, key: VariableKey, dim: Optional[int] = None) -> None:
        self.variables[key] = key.default_dim if dim is None else dim

    def add(self, factor: LinearFactor) -> None:
        for k, b in factor.blocks.items():
            if k not in self.variables:
                raise UnknownKey(k)
            if b.shape[1] != self.variables[k]:
                raise DimensionMismatch(f"factor {factor.name}: block {k} has width {b.shape[1]}, "
                                        f"variable has dim {self.variables[k]}")
        self.factors.append(factor)

    @property
    def keys(self) -> List[VariableKey]:
        return list(self.variables)

    def total_dim(self) -> int:
        return sum(self.variables.values())

    def kinds(self) -> set:
        return {k.kind for k in self.variables}

    def adjacency(self) -> Dict[VariableKey, set]:
        """Variable-to-variable adjacency (shared factor)."""
        adj = {k: set() for k in self.variables}
        for f in self.factors:
            ks = f.keys
            for a in ks:
                adj[a].update(ks)
        for k in adj:
            adj[k].discard(k)
        return adj

    def error(self, values) -> np.ndarray:
        if not self.factors:
            return np.zeros(0)
        return np.concatenate([f.error(values) for f in self.factors])

    def residual_norm(self, values) -> float:
        e = self.error(values)
        return float(np.max(np.abs(e))) if e.size else 0.0


def build_dynamics_graph(model: RobotModel, q, qd, twists=None,
                         include_twists: bool = False) -> DynFactorGraph:
    """One acceleration, wrench-balance and torque factor per joint/link.

    Twists are pre-solved and folded into coefficients. ``V̇0`` and the tool
    wrench enter as constants from ``model``. ``include_twists`` adds the twist
    relations as display-only factors for DOT export.
    """
    n = model.n
    q = np.asarray(q, dtype=float).reshape(-1)
    qd = np.asarray(qd, dtype=float).reshape(-1)
    if q.size != n or qd.size != n:
        raise DimensionMismatch(f"expected {n} joint values, got q:{q.size} qd:{qd.size}")
    if twists is None:
        twists = compute_twists(model, q, qd)
    # adj[i] = Ad_{T_{i,i-1}(q_i)}, list index i-1
    adj = [adjoint(j.pose(qi).inverse()) for j, qi in zip(model.joints, q)]
    tool_adj = adjoint(model.tool_pose.inverse())

    g = DynFactorGraph(n_joints=n)
    for i in range(1, n + 1):
        g.add_variable(Vdot(i))
        g.add_variable(F(i))
        g.add_variable(qdd(i))
        g.add_variable(tau(i))

    eye = np.eye(6)
    for i in range(1, n + 1):
        a = model.joints[i - 1].axis
        v = twists[i - 1]
        ai = adj[i - 1]
        # Vdot_i - Ad Vdot_{i-1} - A qdd_i = ad_V A qd_i
        blocks = {Vdot(i): eye, qdd(i): -a.reshape(6, 1)}
        rhs = ad(v) @ a * qd[i - 1]
        params = [f"q{i}", f"qd{i}", f"V{i}"]
        if i > 1:
            blocks[Vdot(i - 1)] = -ai
        else:
            rhs = rhs + ai @ model.base_acceleration
            params.append("Vdot0")
        g.add(LinearFactor(blocks, rhs, "acceleration", f"acc{i}", params=tuple(params)))

    for i in range(1, n + 1):
        v = twists[i - 1]
        gi = model.links[i].inertia
        # F_i - Ad^T F_{i+1} - G Vdot_i = -ad_V^T G V
        blocks = {F(i): eye, Vdot(i): -gi}
        rhs = -ad(v).T @ gi @ v
        params = [f"V{i}"]
        if i < n:
            blocks[F(i + 1)] = -adj[i].T
            params.append(f"q{i + 1}")
        else:
            rhs = rhs + tool_adj.T @ model.tool_wrench
            params.append("Ft")
        g.add(LinearFactor(blocks, rhs, "wrench_balance", f"wrench{i}", params=tuple(params)))

    for i in range(1, n + 1):
        a = model.joints[i - 1].axis
        g.add(LinearFactor({F(i): a.reshape(1, 6), tau(i): -np.ones((1, 1))}, np.zeros(1),
                           "torque", f"torque{i}"))

    if include_twists:
        for i in range(1, n + 1):
            names = (f"V{i}", f"q{i}", f"qd{i}") + ((f"V{i - 1}",) if i > 1 else ("V0",))
            g.aux_factors.append((f"twist{i}", "twist", names))
    return g


def condition(graph: DynFactorGraph, known: Dict[VariableKey, np.ndarray]) -> DynFactorGraph:
    """Fold known variables into factor right-hand sides and drop them."""
    vals = {}
    for k, v in known.items():
        if k not in graph.variables:
            raise UnknownKey(k)
        v = np.atleast_1d(np.asarray(v, dtype=float)).reshape(-1)
        if v.size != graph.variables[k]:
            raise DimensionMismatch(f"known value for {k} has size {v.size}")
        vals[k] = v
    if not vals:
        return graph
    out = DynFactorGraph({k: d for k, d in graph.variables.items() if k not in vals},
                         known={**graph.known, **vals}, aux_factors=list(graph.aux_factors),
                         n_joints=graph.n_joints)
    for f in graph.factors:
        hit = [k for k in f.blocks if k in vals]
        if not hit:
            out.factors.append(f)
            continue
        rhs = f.rhs.copy()
        for k in hit:
            rhs -= f.blocks[k] @ vals[k]
        blocks = {k: b for k, b in f.blocks.items() if k not in vals}
        if not blocks:
            continue
        out.factors.append(LinearFactor(blocks, rhs, f.label, f.name, f.noise_scale,
                                        f.params + tuple(k.name for k in hit)))
    return out


@dataclass
class BlockSparseSystem:
    """Block rows (factors) by block columns (unknowns)."""

    row_names: List[str]
    row_sizes: List[int]
    col_keys: List[VariableKey]
    col_sizes: List[int]
    blocks: Dict[Tuple[int, int], np.ndarray]
    rhs: List[np.ndarray]

    @property
    def shape(self) -> Tuple[int, int]:
        return sum(self.row_sizes), sum(self.col_sizes)

    def pattern(self) -> np.ndarray:
        p = np.zeros((len(self.row_sizes), len(self.col_sizes)), dtype=bool)
        for (r, c) in self.blocks:
            p[r, c] = True
        return p

    def to_dense(self) -> Tuple[np.ndarray, np.ndarray]:
        m, n = self.shape
        a = np.zeros((m, n))
        ro = np.concatenate([[0], np.cumsum(self.row_sizes)]).astype(int)
        co = np.concatenate([[0], np.cumsum(self.col_sizes)]).astype(int)
        for (r, c), b in self.blocks.items():
            a[ro[r]:ro[r + 1], co[c]:co[c + 1]] = b
        b = np.concatenate(self.rhs) if self.rhs else np.zeros(0)
        return a, b

    def split(self, x: np.ndarray) -> Dict[VariableKey, np.ndarray]:
        co = np.concatenate([[0], np.cumsum(self.col_sizes)]).astype(int)
        return {k: x[co[j]:co[j + 1]] for j, k in enumerate(self.col_keys)}


def assemble(graph: DynFactorGraph) -> BlockSparseSystem:
    cols = list(graph.variables)
    col_index = {k: j for j, k in enumerate(cols)}
    blocks = {}
    for r, f in enumerate(graph.factors):
        for k, b in f.blocks.items():
            blocks[(r, col_index[k])] = b / f.noise_scale
    return BlockSparseSystem([f.name for f in graph.factors], [f.rows for f in graph.factors],
                             cols, [graph.variables[k] for k in cols], blocks,
                             [f.rhs / f.noise_scale for f in graph.factors])


def _q(s: str) -> str:
    return '"' + s.replace('"', r'\"') + '"'


def graph_to_dot(graph: DynFactorGraph, full: bool = False) -> str:
    """Undirected DOT: unknowns as ellipses, knowns as boxes, factors as dots.

    ``full`` also draws known parameters (joint angles, twists, boundary
    values) and the twist relations.
    """
    lines = ["graph {"]
    for k in graph.variables:
        lines.append(f"  {_q(k.name)} [shape=ellipse];")
    edges = []
    known_nodes = []
    if full:
        for k in graph.known:
            known_nodes.append(k.name)
    factor_nodes = []
    for f in graph.factors:
        factor_nodes.append(f.name)
        for k in f.blocks:
            edges.append((k.name, f.name))
        if full:
            for p in f.params:
                edges.append((p, f.name))
                known_nodes.append(p)
    if full:
        for name, _, params in graph.aux_factors:
            factor_nodes.append(name)
            for p in params:
                edges.append((p, name))
                known_nodes.append(p)
    seen = set(k.name for k in graph.variables)
    for p in known_nodes:
        if p not in seen:
            seen.add(p)
            lines.append(f"  {_q(p)} [shape=box];")
    for name in factor_nodes:
        lines.append(f"  {_q(name)} [shape=point, style=filled, label=\"\"];")
    for a, b in edges:
        lines.append(f"  {_q(a)} -- {_q(b)};")
    lines.append("}")
    return "\n".join(lines) + "\n"
