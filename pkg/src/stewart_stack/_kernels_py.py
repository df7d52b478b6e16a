"""Pure numpy versions of the hot kernels.

Used when the compiled ``_kernels`` extension is unavailable. Signatures and
results match the Cython module.
"""

import numpy as np

BACKEND = "python"


def forward_batch(x):
    """Planar forward kinematics for a batch of states.

    Parameters
    ----------
    x : (N, n, 3) array of per-platform ``(rho, z, theta)``

    Returns
    -------
    (N, 3) array of end-effector ``(rho, z, theta)``
    """
    x = np.asarray(x, dtype=np.float64)
    total = np.cumsum(x[:, :, 2], axis=1)
    before = np.zeros_like(total)
    before[:, 1:] = total[:, :-1]
    c, s = np.cos(before), np.sin(before)
    out = np.empty((x.shape[0], 3))
    out[:, 0] = np.sum(c * x[:, :, 0] - s * x[:, :, 1], axis=1)
    out[:, 1] = np.sum(s * x[:, :, 0] + c * x[:, :, 1], axis=1)
    out[:, 2] = total[:, -1]
    return out


def leg_constraints(x, phi, top, bottom, l_min, l_max, sin_tmin):
    """Leg constraints of every platform of a planar state and their gradients.

    Parameters
    ----------
    x : (n, 3) array of ``(rho, z, theta)``
    phi : working-plane azimuth
    top, bottom : (6, 3) node arrays already ordered leg by leg
    l_min, l_max : leg length limits
    sin_tmin : ``sin(theta_min)``

    Returns
    -------
    values : (n, 6, 4) array
        ``[len^2 - l_min^2, l_max^2 - len^2, bottom margin, top margin]``;
        feasible when all are ``>= 0``.
    grads : (n, 6, 4, 3) array
        Derivative of each value with respect to that platform's
        ``(rho, z, theta)``.
    """
    x = np.asarray(x, dtype=np.float64)
    n = x.shape[0]
    cphi, sphi = np.cos(phi), np.sin(phi)
    a = np.array([sphi, -cphi, 0.0])
    kx = np.array([[0.0, 0.0, a[1]], [0.0, 0.0, -a[0]], [-a[1], a[0], 0.0]])
    aa = np.outer(a, a)
    c = np.cos(x[:, 2])[:, None, None]
    s = np.sin(x[:, 2])[:, None, None]
    eye = np.eye(3)
    rot = c * eye + s * kx + (1.0 - c) * aa
    drot = -s * eye + c * kx + s * aa

    trans = np.column_stack([x[:, 0] * cphi, x[:, 0] * sphi, x[:, 1]])
    rt = np.einsum("nij,kj->nki", rot, top)
    drt = np.einsum("nij,kj->nki", drot, top)
    leg = rt + trans[:, None, :] - bottom[None, :, :]
    dleg = np.empty((n, 6, 3, 3))
    dleg[..., 0] = np.array([cphi, sphi, 0.0])
    dleg[..., 1] = np.array([0.0, 0.0, 1.0])
    dleg[..., 2] = drt

    len_sq = np.einsum("nki,nki->nk", leg, leg)
    norm = np.sqrt(len_sq)
    dlen_sq = 2.0 * np.einsum("nki,nkij->nkj", leg, dleg)
    safe = np.where(norm > 0.0, norm, 1.0)
    dnorm = np.where((norm > 0.0)[..., None], 0.5 * dlen_sq / safe[..., None], 0.0)

    nt = rot[:, :, 2]
    dnt = drot[:, :, 2]
    mb = leg[..., 2] - norm * sin_tmin
    dmb = dleg[..., 2, :] - dnorm * sin_tmin
    mt = np.einsum("nki,ni->nk", leg, nt) - norm * sin_tmin
    dmt = np.einsum("nkij,ni->nkj", dleg, nt) - dnorm * sin_tmin
    dmt[..., 2] += np.einsum("nki,ni->nk", leg, dnt)

    zero = norm == 0.0
    mb[zero] = 0.0
    mt[zero] = 0.0
    dmb[zero] = 0.0
    dmt[zero] = 0.0

    values = np.stack([len_sq - l_min * l_min, l_max * l_max - len_sq, mb, mt], axis=-1)
    grads = np.stack([dlen_sq, -dlen_sq, dmb, dmt], axis=2)
    return values, grads
