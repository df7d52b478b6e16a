"""Forward kinematics, Jacobian and Frobenius-norm sensitivity of a stack.

A stack state lives in the vertical working plane at azimuth ``phi``:
platform ``i`` contributes a translation ``(rho_i, z_i)`` in its bottom
plate frame and a rotation ``theta_i`` about the plane normal. Index 0 is
the bottom platform. In the plane a rotation by ``a`` acts on ``(rho, z)``
as ``[[cos a, -sin a], [sin a, cos a]]``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .geometry import SpatialPose, lift_2d_to_3d


class PlanarPose(NamedTuple):
    rho: float
    z: float
    theta: float


class EndEffectorOutput(NamedTuple):
    rho: float
    z: float
    theta: float


@dataclass(frozen=True)
class AssemblerState:
    """Ordered planar poses, bottom platform first, sharing one azimuth."""

    platforms: tuple
    phi: float = 0.0

    def __post_init__(self):
        plats = tuple(PlanarPose(*(float(v) for v in p)) for p in self.platforms)
        if not plats:
            raise ValueError("an assembler needs at least one platform")
        object.__setattr__(self, "platforms", plats)
        object.__setattr__(self, "phi", float(self.phi))

    @property
    def n(self):
        return len(self.platforms)

    def as_array(self):
        """``(n, 3)`` array of ``(rho, z, theta)`` rows."""
        return np.array(self.platforms, dtype=float)

    @classmethod
    def from_array(cls, x, phi=0.0):
        return cls(tuple(map(tuple, np.asarray(x, dtype=float).reshape(-1, 3))), phi)

    def lifted(self):
        """Per-platform 3D poses in the common working plane."""
        return [lift_2d_to_3d(p.rho, p.z, p.theta, self.phi) for p in self.platforms]

    def to_dict(self):
        return {"phi": self.phi, "platforms": [list(p) for p in self.platforms]}


ROT90 = np.array([[0.0, -1.0], [1.0, 0.0]])


def rot2(angle):
    c, s = math.cos(angle), math.sin(angle)
    return np.array([[c, -s], [s, c]])


def forward_2d(state):
    """End-effector ``(rho, z, theta)`` of a planar stack."""
    rho = z = 0.0
    total = 0.0
    for p in state.platforms:
        c, s = math.cos(total), math.sin(total)
        rho += c * p.rho - s * p.z
        z += s * p.rho + c * p.z
        total += p.theta
    return EndEffectorOutput(rho, z, total)


def forward_3d(poses):
    """Compose per-platform 3D poses, bottom first, into the end-effector pose."""
    if not poses:
        raise ValueError("forward_3d needs at least one pose")
    rot = poses[0].rotation.copy()
    trans = poses[0].translation.copy()
    for pose in poses[1:]:
        trans = trans + rot @ pose.translation
        rot = rot @ pose.rotation
    return SpatialPose(rot, trans)


def _offsets(x):
    """Offsets from each top plate to the end effector, in the base frame.

    Returns ``(d, before)`` where ``before[i]`` is the summed rotation of the
    platforms below ``i``. ``d`` is accumulated from the top down, so it never
    touches the bottom translation or the top rotation.
    """
    n = x.shape[0]
    before = np.zeros(n)
    total = 0.0
    for i in range(n):
        before[i] = total
        total += x[i, 2]
    d = np.zeros((n, 2))
    for i in range(n - 2, -1, -1):
        d[i] = d[i + 1] + rot2(before[i + 1]) @ x[i + 1, :2]
    return d, before


def jacobian_2d(state):
    """Analytic 3 x 3n Jacobian of ``forward_2d``.

    Columns are grouped per platform as ``(rho_i, z_i, theta_i)``; rows are
    ``(rho_ee, z_ee, theta_ee)``. The position derivative with respect to
    ``theta_i`` is the end-effector offset from the top of platform ``i``
    turned by 90 deg.
    """
    x = state.as_array()
    n = x.shape[0]
    d, before = _offsets(x)
    jac = np.zeros((3, 3 * n))
    for i in range(n):
        jac[:2, 3 * i : 3 * i + 2] = rot2(before[i])
        jac[:2, 3 * i + 2] = ROT90 @ d[i]
        jac[2, 3 * i + 2] = 1.0
    return jac


def jacobian_fd_oracle(state, step=1e-6):
    """Central finite-difference Jacobian of ``forward_2d`` (test oracle)."""
    if step <= 0:
        raise ValueError("step must be positive")
    x = state.as_array().ravel()
    jac = np.zeros((3, x.size))
    for j in range(x.size):
        h = step * max(abs(x[j]), 1.0)
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        fp = forward_2d(AssemblerState.from_array(xp, state.phi))
        fm = forward_2d(AssemblerState.from_array(xm, state.phi))
        jac[:, j] = (np.array(fp) - np.array(fm)) / (xp[j] - xm[j])
    return jac


def fn_constant(n):
    """Part of trace(J^T J) that never changes: 2 per translation block, 1 per angle."""
    return 3.0 * n


def frobenius_norm_sq(state, weights=None):
    """Squared Frobenius norm ``trace(J^T J)`` of the planar Jacobian.

    ``weights`` optionally scales each of the 3n column contributions; the
    default is the unweighted trace.
    """
    if weights is None:
        return fn_constant(state.n) + fn_variable(state.as_array())
    jac = jacobian_2d(state)
    cols = np.einsum("ij,ij->j", jac, jac)
    return float(np.dot(np.asarray(weights, dtype=float), cols))


def fn_variable(x):
    """Sum over platforms of the squared distance from its top plate to the end effector."""
    d, _ = _offsets(np.asarray(x, dtype=float).reshape(-1, 3))
    return float(np.sum(d * d))


def fn_variable_grad(x):
    """Gradient of :func:`fn_variable` with respect to the flat ``(n*3,)`` state."""
    x = np.asarray(x, dtype=float).reshape(-1, 3)
    n = x.shape[0]
    d, before = _offsets(x)
    grad = np.zeros((n, 3))
    # d_i depends on the translations of platforms k > i
    acc = np.zeros(2)
    for k in range(n):
        if k > 0:
            acc = acc + d[k - 1]
        grad[k, :2] = 2.0 * rot2(before[k]).T @ acc
    # d(d_i)/d(theta_j) = ROT90 d_max(i, j); the i >= j terms vanish
    for j in range(n):
        rd = ROT90 @ d[j]
        grad[j, 2] = 2.0 * float(np.sum(d[:j] @ rd))
    return grad.ravel()
