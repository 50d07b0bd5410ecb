"""Rigid-body dynamics as sparse linear factor graphs."""
from .robot import (JointState, RobotModel, cartpole_model, compute_twists, load_urdf,
                    load_urdf_file, planar_chain, puma_like)

__version__ = "0.1.0"

__all__ = ["JointState", "RobotModel", "cartpole_model", "compute_twists", "load_urdf",
           "load_urdf_file", "planar_chain", "puma_like", "__version__"]
