"""Kinodynamic trajectory optimization over chained dynamics factor graphs."""
from .factors import (HARD_SIGMA, AccelFactor, FrictionConeFactor, GoalFactor, GpFactor,
                      HingeLimitFactor, MinTorqueFactor, NonlinearFactor, PriorFactor,
                      TorqueFactor, TwistFactor, WrenchFactor, friction_cone_residual,
                      goal_residual, hinge_limit_residual, min_torque_residual)
from .gp import NonSpdSigma, gp_factor_residual, gp_transition, gp_whitener
from .graph import (Goal, PlanConfigError, PlanGraph, PlanOptions, build_plan_graph,
                    initial_values)
from .optimize import (METHODS, DivergedNaN, MaxIterations, OptimizeReport, PlanResult,
                       Trajectory, cost_breakdown, max_hard_residual, optimize, total_cost)
from .config import PlanConfig, goal_errors, load_plan_config, parse_plan_config, run_plan

__all__ = [
    "HARD_SIGMA", "AccelFactor", "FrictionConeFactor", "GoalFactor", "GpFactor",
    "HingeLimitFactor", "MinTorqueFactor", "NonlinearFactor", "PriorFactor", "TorqueFactor",
    "TwistFactor", "WrenchFactor", "friction_cone_residual", "goal_residual",
    "hinge_limit_residual", "min_torque_residual", "NonSpdSigma", "gp_factor_residual",
    "gp_transition", "gp_whitener", "Goal", "PlanConfigError", "PlanGraph", "PlanOptions",
    "build_plan_graph", "initial_values", "METHODS", "DivergedNaN", "MaxIterations", "OptimizeReport",
    "PlanResult", "Trajectory", "cost_breakdown", "max_hard_residual", "optimize",
    "total_cost", "PlanConfig", "goal_errors", "load_plan_config", "parse_plan_config",
    "run_plan",
]
