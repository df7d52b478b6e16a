"""Single Stewart platform geometry.

Leg vectors, joint-limit checks, the rotation about the working-plane
normal and the lift of a planar (rho, z, theta) pose into 3D.
All lengths are in mm and all angles in rad.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

UNIT_TOL = 1e-9
PLATE_NORMAL = np.array([0.0, 0.0, 1.0])


def _as_nodes(nodes, name):
    arr = np.asarray(nodes, dtype=float)
    if arr.shape == (6, 2):
        arr = np.column_stack([arr, np.zeros(6)])
    if arr.shape != (6, 3):
        raise ValueError(f"{name} must hold 6 node vectors, got shape {arr.shape}")
    if np.any(arr[:, 2] != 0.0):
        raise ValueError(f"{name} must lie in the plate plane (z == 0)")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PlatformGeometry:
    """Node layout and joint limits of one Stewart platform.

    ``leg_pairs[k] = (b, t)`` connects bottom node ``b`` to top node ``t``.
    """

    top_nodes: np.ndarray
    bottom_nodes: np.ndarray
    leg_pairs: tuple = ((1, 0), (2, 1), (3, 2), (4, 3), (5, 4), (0, 5))
    l_min: float = 300.0
    l_max: float = 500.0
    theta_min: float = 0.35

    def __post_init__(self):
        object.__setattr__(self, "top_nodes", _as_nodes(self.top_nodes, "top_nodes"))
        object.__setattr__(self, "bottom_nodes", _as_nodes(self.bottom_nodes, "bottom_nodes"))
        pairs = tuple((int(b), int(t)) for b, t in self.leg_pairs)
        if len(pairs) != 6:
            raise ValueError("leg_pairs must contain exactly 6 pairs")
        if sorted(b for b, _ in pairs) != list(range(6)) or sorted(t for _, t in pairs) != list(range(6)):
            raise ValueError("leg_pairs must use every node of each plate exactly once")
        object.__setattr__(self, "leg_pairs", pairs)
        if not 0.0 < self.l_min < self.l_max:
            raise ValueError("joint limits must satisfy 0 < l_min < l_max")
        if not 0.0 <= self.theta_min < np.pi / 2:
            raise ValueError("theta_min must lie in [0, pi/2)")

    @classmethod
    def symmetric(
        cls,
        bottom_radius=150.0,
        top_radius=120.0,
        pair_half_angle=np.deg2rad(10.0),
        l_min=300.0,
        l_max=500.0,
        theta_min=0.35,
    ):
        """Standard 6-6 hexapod: three node pairs per plate, 120 deg apart.

        Top pairs sit 60 deg out of phase with the bottom pairs and every
        bottom node is wired to the nearest node of the neighbouring top pair.
        """
        centers = np.deg2rad([0.0, 120.0, 240.0])
        b_ang = np.concatenate([[c - pair_half_angle, c + pair_half_angle] for c in centers])
        t_ang = np.concatenate([[c + np.pi / 3 - pair_half_angle, c + np.pi / 3 + pair_half_angle] for c in centers])
        bottom = bottom_radius * np.column_stack([np.cos(b_ang), np.sin(b_ang), np.zeros(6)])
        top = top_radius * np.column_stack([np.cos(t_ang), np.sin(t_ang), np.zeros(6)])
        return cls(top, bottom, l_min=l_min, l_max=l_max, theta_min=theta_min)

    def scaled(self, factor):
        """Copy with every length multiplied by ``factor``."""
        return PlatformGeometry(
            self.top_nodes * factor,
            self.bottom_nodes * factor,
            self.leg_pairs,
            self.l_min * factor,
            self.l_max * factor,
            self.theta_min,
        )

    def leg_nodes(self):
        """Return ``(top, bottom)`` node arrays reordered leg by leg."""
        b_idx = [b for b, _ in self.leg_pairs]
        t_idx = [t for _, t in self.leg_pairs]
        return self.top_nodes[t_idx], self.bottom_nodes[b_idx]

    def to_dict(self):
        return {
            "top_nodes": self.top_nodes.tolist(),
            "bottom_nodes": self.bottom_nodes.tolist(),
            "leg_pairs": [list(p) for p in self.leg_pairs],
            "l_min": self.l_min,
            "l_max": self.l_max,
            "theta_min": self.theta_min,
        }


@dataclass(frozen=True)
class SpatialPose:
    """Rotation (top plate -> bottom plate frame) and translation in mm."""

    rotation: np.ndarray
    translation: np.ndarray

    def __post_init__(self):
        rot = np.array(self.rotation, dtype=float)
        trans = np.array(self.translation, dtype=float)
        if rot.shape != (3, 3) or trans.shape != (3,):
            raise ValueError("SpatialPose needs a 3x3 rotation and a 3-vector translation")
        if np.max(np.abs(rot.T @ rot - np.eye(3))) > UNIT_TOL or abs(np.linalg.det(rot) - 1.0) > UNIT_TOL:
            raise ValueError("rotation must be orthonormal with determinant +1")
        rot.setflags(write=False)
        trans.setflags(write=False)
        object.__setattr__(self, "rotation", rot)
        object.__setattr__(self, "translation", trans)


@dataclass(frozen=True)
class ConstraintReport:
    leg_lengths_sq: np.ndarray
    bottom_angle_margins: np.ndarray
    top_angle_margins: np.ndarray
    feasible: bool = field(default=False)

    def min_margin(self, geom):
        """Smallest slack over all constraints, lengths converted to mm."""
        lengths = np.sqrt(self.leg_lengths_sq)
        return float(
            min(
                np.min(lengths - geom.l_min),
                np.min(geom.l_max - lengths),
                np.min(self.bottom_angle_margins),
                np.min(self.top_angle_margins),
            )
        )

    def to_dict(self):
        return {
            "leg_lengths_sq": self.leg_lengths_sq.tolist(),
            "bottom_angle_margins": self.bottom_angle_margins.tolist(),
            "top_angle_margins": self.top_angle_margins.tolist(),
            "feasible": self.feasible,
        }


def leg_vector(pose, top_node, bottom_node):
    """Actuator vector ``R t + P - b`` expressed in the bottom-plate frame."""
    return pose.rotation @ np.asarray(top_node, dtype=float) + pose.translation - np.asarray(bottom_node, dtype=float)


def check_constraints(geom, pose):
    """Evaluate the length and ball-joint angle limits for all six legs.

    Parameters
    ----------
    geom : PlatformGeometry
    pose : SpatialPose

    Returns
    -------
    ConstraintReport
        Squared leg lengths plus the angle margins
        ``l.n - |l| sin(theta_min)`` against the bottom normal and the
        rotated top normal. A zero-length leg gets zero margins.
    """
    top, bottom = geom.leg_nodes()
    legs = top @ pose.rotation.T + pose.translation - bottom
    len_sq = np.einsum("ij,ij->i", legs, legs)
    norms = np.sqrt(len_sq)
    s = np.sin(geom.theta_min)
    top_normal = pose.rotation @ PLATE_NORMAL
    bottom_m = legs @ PLATE_NORMAL - norms * s
    top_m = legs @ top_normal - norms * s
    degenerate = norms == 0.0
    bottom_m[degenerate] = 0.0
    top_m[degenerate] = 0.0
    feasible = bool(
        np.all(len_sq >= geom.l_min**2)
        and np.all(len_sq <= geom.l_max**2)
        and np.all(bottom_m >= 0.0)
        and np.all(top_m >= 0.0)
    )
    return ConstraintReport(len_sq, bottom_m, top_m, feasible)


def axis_from_phi(phi):
    """Unit normal of the vertical working plane at azimuth ``phi``."""
    return np.array([np.sin(phi), -np.cos(phi), 0.0])


def skew(v):
    return np.array(
        [
            [0.0, -v[2], v[1]],
            [v[2], 0.0, -v[0]],
            [-v[1], v[0], 0.0],
        ]
    )


def rodrigues(axis, theta):
    """Rotation by ``theta`` about the unit vector ``axis``."""
    axis = np.asarray(axis, dtype=float)
    if axis.shape != (3,) or abs(np.linalg.norm(axis) - 1.0) > UNIT_TOL:
        raise ValueError("rotation axis must be a unit 3-vector")
    c, s = np.cos(theta), np.sin(theta)
    return c * np.eye(3) + s * skew(axis) + (1.0 - c) * np.outer(axis, axis)


def lift_2d_to_3d(rho, z, theta, phi):
    """Map working-plane coordinates to a 3D pose."""
    translation = np.array([rho * np.cos(phi), rho * np.sin(phi), z])
    return SpatialPose(rodrigues(axis_from_phi(phi), theta), translation)
