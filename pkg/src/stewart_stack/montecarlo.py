"""Perturbation experiments on solved stack poses.

Every pose in one experiment receives the same state perturbation per
sample (common random numbers). Perturbations are drawn in fixed-size
blocks, each from its own Philox stream keyed by ``(seed, block)``, so the
dataset does not depend on how many threads produced it.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import _backend
from .kinematics import forward_2d, jacobian_2d

BLOCK_SIZE = 4096
RNG_NAME = "numpy.Philox(SeedSequence([seed, block]))"
CHI2_2DOF_95 = -2.0 * math.log(0.05)


@dataclass(frozen=True)
class NoiseSpec:
    sigma_t: float = 1.0
    sigma_theta: float = 0.005
    n_samples: int = 10000
    rng_seed: int = 0

    def __post_init__(self):
        if self.sigma_t < 0 or self.sigma_theta < 0:
            raise ValueError("noise sigmas must be non-negative")
        if self.n_samples < 1:
            raise ValueError("n_samples must be at least 1")

    def to_dict(self):
        return {
            "sigma_t": self.sigma_t,
            "sigma_theta": self.sigma_theta,
            "n_samples": self.n_samples,
            "rng_seed": self.rng_seed,
        }


@dataclass(frozen=True)
class PerturbationDataset:
    """Shared perturbations and the resulting end-effector outputs.

    ``deltas`` has shape ``(N, n, 3)``; ``outputs`` has shape ``(P, N, 3)``
    for ``P`` poses; ``baselines`` has shape ``(P, 3)``.
    """

    deltas: np.ndarray
    baselines: np.ndarray
    outputs: np.ndarray
    noise: NoiseSpec

    def rng_metadata(self):
        return {"generator": RNG_NAME, "block_size": BLOCK_SIZE, "seed": self.noise.rng_seed}


@dataclass(frozen=True)
class PerturbationStats:
    median_distance: float
    ci95: tuple
    observed_covariance: np.ndarray
    ellipse95: dict
    theta_mean: float
    theta_std: float

    def to_dict(self):
        return {
            "median_distance": self.median_distance,
            "ci95": list(self.ci95),
            "observed_covariance": self.observed_covariance.tolist(),
            "ellipse95": self.ellipse95,
            "theta_mean": self.theta_mean,
            "theta_std": self.theta_std,
        }


def _block_deltas(noise, n, block):
    start = block * BLOCK_SIZE
    m = min(BLOCK_SIZE, noise.n_samples - start)
    gen = np.random.Generator(np.random.Philox(np.random.SeedSequence([noise.rng_seed, block])))
    d = gen.standard_normal((m, n, 3))
    d[:, :, :2] *= noise.sigma_t
    d[:, :, 2] *= noise.sigma_theta
    return d


def get_n_perturbations(poses, noise, threads=1):
    """Apply ``noise.n_samples`` shared perturbations to every pose.

    Parameters
    ----------
    poses : list of AssemblerState
        Must share ``n`` and ``phi``.
    noise : NoiseSpec
    threads : int
        Worker threads; does not affect the result.
    """
    if not poses:
        raise ValueError("need at least one pose")
    n = poses[0].n
    if any(p.n != n or p.phi != poses[0].phi for p in poses):
        raise ValueError("all poses must share n and phi")
    bases = np.stack([p.as_array() for p in poses])
    n_blocks = -(-noise.n_samples // BLOCK_SIZE)

    def work(block):
        d = _block_deltas(noise, n, block)
        return d, np.stack([_backend.forward_batch(b[None] + d) for b in bases])

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(work, range(n_blocks)))
    else:
        parts = [work(b) for b in range(n_blocks)]
    deltas = np.concatenate([p[0] for p in parts])
    outputs = np.concatenate([p[1] for p in parts], axis=1)
    baselines = np.array([forward_2d(p) for p in poses])
    return PerturbationDataset(deltas, baselines, outputs, noise)


def ellipse_from_covariance(center, cov, quantile=CHI2_2DOF_95):
    """Confidence ellipse: centre, semi-axes (major first) and major-axis angle."""
    evals, evecs = np.linalg.eigh(cov)
    evals = np.clip(evals, 0.0, None)[::-1]
    major = evecs[:, -1]
    return {
        "center": [float(center[0]), float(center[1])],
        "semi_axes": [float(math.sqrt(quantile * v)) for v in evals],
        "orientation": float(math.atan2(major[1], major[0])),
    }


def compute_stats(outputs, baseline):
    """Distance and covariance statistics for one pose's perturbed outputs.

    Distances are measured in the ``(rho, z)`` plane from the unperturbed
    output. The covariance is the unbiased sample covariance about the
    sample mean.
    """
    outputs = np.asarray(outputs, dtype=float)
    if outputs.shape[0] < 2:
        raise ValueError("need at least 2 samples for covariance")
    pos = outputs[:, :2]
    dist = np.hypot(pos[:, 0] - baseline[0], pos[:, 1] - baseline[1])
    lo, med, hi = np.percentile(dist, [2.5, 50.0, 97.5])
    # shift by one sample first so constant outputs give an exactly zero covariance
    cov = np.cov(pos - pos[0], rowvar=False, ddof=1)
    return PerturbationStats(
        median_distance=float(med),
        ci95=(float(lo), float(hi)),
        observed_covariance=cov,
        ellipse95=ellipse_from_covariance(pos.mean(axis=0), cov),
        theta_mean=float(np.mean(outputs[:, 2] - baseline[2])),
        theta_std=float(np.std(outputs[:, 2], ddof=1)),
    )


def predicted_covariance(jac, noise):
    """Linearized end-effector position covariance ``J C_x J^T``.

    ``jac`` may be the full 3 x 3n Jacobian; only the position rows are used.
    """
    j = np.asarray(jac, dtype=float)[:2]
    n = j.shape[1] // 3
    cx = np.tile([noise.sigma_t**2, noise.sigma_t**2, noise.sigma_theta**2], n)
    return (j * cx) @ j.T


def predicted_covariance_for(state, noise):
    return predicted_covariance(jacobian_2d(state), noise)


def f_factor(c_est, c_obs):
    """Relative elementwise gap between predicted and observed covariance.

    Returns ``None`` when the observed covariance is identically zero.
    """
    denom = float(np.sum(np.abs(c_obs)))
    if denom == 0.0:
        return None
    return float(np.sum(np.abs(np.asarray(c_est) - np.asarray(c_obs))) / denom)


def fn_vs_median_regression(pairs):
    """Ordinary least squares of median ratio on FN ratio.

    Returns ``(slope, intercept, r_squared)``.
    """
    arr = np.asarray(pairs, dtype=float)
    if arr.ndim != 2 or arr.shape[0] < 3:
        raise ValueError("regression needs at least 3 (fn_ratio, median_ratio) pairs")
    x, y = arr[:, 0], arr[:, 1]
    dx = x - x.mean()
    sxx = float(dx @ dx)
    if sxx == 0.0:
        raise ValueError("fn ratios have zero variance")
    slope = float(dx @ (y - y.mean())) / sxx
    intercept = float(y.mean() - slope * x.mean())
    resid = y - (slope * x + intercept)
    syy = float((y - y.mean()) @ (y - y.mean()))
    r2 = 1.0 - float(resid @ resid) / syy if syy > 0 else 1.0
    return slope, intercept, r2
