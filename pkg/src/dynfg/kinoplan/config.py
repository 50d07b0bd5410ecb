"""JSON plan configurations."""
from __future__ import annotations

import json
import os
from dataclasses import dataclass, field
from typing import Dict, List

import numpy as np

from ..robot import (DEFAULT_GRAVITY, RobotModel, cartpole_model, load_urdf_file,
                     planar_chain)
from .graph import Goal, PlanConfigError, PlanOptions, build_plan_graph
from .optimize import METHODS, PlanResult, optimize

_FACTOR_KEYS = {"gp", "qc", "min_torque", "torque_sigma", "joint_limits", "limit_alpha",
                "limit_eps", "contact", "contact_wrench_sigma"}


@dataclass
class PlanConfig:
    model: RobotModel
    horizon: float
    dt: float
    options: PlanOptions
    tol_q: float = 0.01
    tol_qd: float = 0.01
    max_iterations: int = 500
    method: str = "newton"
    raw: Dict = field(default_factory=dict)


def _model_from(spec: dict, gravity, base_dir: str) -> RobotModel:
    if "urdf" in spec:
        path = spec["urdf"]
        if not os.path.isabs(path):
            path = os.path.join(base_dir, path)
        return load_urdf_file(path, gravity=gravity)
    kind = spec.get("kind", "cartpole")
    if kind == "cartpole":
        return cartpole_model(spec.get("cart_mass", 1.0), spec.get("pole_mass", 0.3),
                              spec.get("length", 0.5), gravity=gravity)
    if kind == "planar":
        return planar_chain(int(spec.get("n", 2)), spec.get("mass", 1.0),
                            spec.get("length", 1.0), spec.get("rotational", 0.0), gravity)
    raise PlanConfigError(f"unknown model kind {kind!r}")


def parse_plan_config(data: dict, base_dir: str = ".") -> PlanConfig:
    try:
        gravity = tuple(data.get("gravity", DEFAULT_GRAVITY))
        model = _model_from(data.get("model", {}), gravity, base_dir)
        horizon = float(data["horizon"])
        dt = float(data["dt"])
    except (KeyError, TypeError, ValueError) as exc:
        raise PlanConfigError(f"invalid plan config: {exc}") from exc
    if not horizon > 0 or not dt > 0:
        raise PlanConfigError("horizon and dt must be positive")
    factors = dict(data.get("factors", {}))
    unknown = set(factors) - _FACTOR_KEYS
    if unknown:
        raise PlanConfigError(f"unknown factor options: {sorted(unknown)}")
    init = data.get("initial", {})
    goals: List[Goal] = []
    for g in data.get("goals", []):
        try:
            goals.append(Goal(float(g["t"]), list(g["q"]), g.get("qd"), g.get("joints"),
                              float(g.get("sigma_q", 1e-3)), float(g.get("sigma_qd", 1e-3))))
        except (KeyError, TypeError, ValueError) as exc:
            raise PlanConfigError(f"invalid goal {g!r}: {exc}") from exc
    opts = PlanOptions(unactuated=list(data.get("unactuated", [])),
                       initial_q=init.get("q"), initial_qd=init.get("qd"), goals=goals,
                       **factors)
    tol = data.get("tolerances", {})
    optim = data.get("optimizer", {})
    method = optim.get("method", "newton")
    if method not in METHODS:
        raise PlanConfigError(f"unknown optimizer method {method!r}; expected one of {METHODS}")
    return PlanConfig(model, horizon, dt, opts, float(tol.get("q", 0.01)),
                      float(tol.get("qd", 0.01)), int(optim.get("max_iterations", 500)),
                      method, data)


def load_plan_config(path: str) -> PlanConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            data = json.load(fh)
    except json.JSONDecodeError as exc:
        raise PlanConfigError(f"{path}: {exc}") from exc
    return parse_plan_config(data, os.path.dirname(os.path.abspath(path)))


def goal_errors(cfg: PlanConfig, result: PlanResult) -> List[dict]:
    """Per goal: worst position and velocity error on the targeted joints."""
    traj = result.trajectory
    out = []
    for g in cfg.options.goals:
        k = int(round(g.t / cfg.dt))
        sel = np.arange(cfg.model.n) if g.joints is None else np.asarray(g.joints, dtype=int)
        eq = float(np.max(np.abs(traj.q[k, sel] - np.asarray(g.q, dtype=float))))
        eqd = (float(np.max(np.abs(traj.qd[k, sel] - np.asarray(g.qd, dtype=float))))
               if g.qd is not None else 0.0)
        out.append({"t": g.t, "q_error": eq, "qd_error": eqd,
                    "met": eq < cfg.tol_q and eqd < cfg.tol_qd})
    return out


def run_plan(cfg: PlanConfig, **overrides) -> tuple:
    """Build, optimize and score a plan. Returns ``(result, summary dict)``."""
    graph = build_plan_graph(cfg.model, cfg.horizon, cfg.dt, cfg.options)
    kwargs = {"max_iterations": cfg.max_iterations, "method": cfg.method}
    kwargs.update(overrides)
    result = optimize(graph, **kwargs)
    goals = goal_errors(cfg, result)
    traj = result.trajectory
    summary = result.report.to_dict()
    summary["goals"] = goals
    summary["goals_met"] = all(g["met"] for g in goals)
    summary["sum_tau_squared"] = float(np.sum(traj.tau ** 2))
    if cfg.options.unactuated:
        idx = [j - 1 for j in cfg.options.unactuated]
        summary["max_unactuated_torque"] = float(np.max(np.abs(traj.tau[:, idx])))
    summary["factor_counts"] = dict(sorted(graph.factor_counts().items()))
    summary["steps"] = graph.steps
    return result, summary
