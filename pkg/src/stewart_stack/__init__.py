"""Sensitivity-minimizing inverse kinematics for stacks of Stewart platforms."""

__version__ = "0.1.0"

from ._backend import BACKEND
from .geometry import (
    ConstraintReport,
    PlatformGeometry,
    SpatialPose,
    axis_from_phi,
    check_constraints,
    leg_vector,
    lift_2d_to_3d,
    rodrigues,
)
from .kinematics import (
    AssemblerState,
    EndEffectorOutput,
    PlanarPose,
    forward_2d,
    forward_3d,
    frobenius_norm_sq,
    jacobian_2d,
    jacobian_fd_oracle,
)
