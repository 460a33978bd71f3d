"""Closed-form line integral over straight segments.

For a segment from ``a`` to ``b`` and a field point ``p`` the kernel

    K(p) = integral over the segment of  dl x (p - l) / |p - l|^3

has the closed form ``c (n1 + n2) / (n1 n2 (n1 n2 + r1.r2))`` with
``r1 = p - a``, ``r2 = p - b``, ``n_i = |r_i|`` and ``c = r1 x r2``.  The
Biot-Savart field of a unit current is ``MU_0 / (4 pi) K`` and the gradient
of the solid angle subtended by a planar loop is ``-K`` summed over its
edges, so both the magnetics and the electrode model share this code.
"""
import numpy as np


def _geometry(points, starts, ends):
    p = np.asarray(points, dtype=float)[..., None, :]
    r1 = p - np.asarray(starts, dtype=float)
    r2 = p - np.asarray(ends, dtype=float)
    n1 = np.linalg.norm(r1, axis=-1)
    n2 = np.linalg.norm(r2, axis=-1)
    c = np.cross(r1, r2)
    dot = np.einsum("...i,...i->...", r1, r2)
    prod = n1 * n2
    # n1 n2 + r1.r2 cancels badly for points beside long segments
    with np.errstate(divide="ignore", invalid="ignore"):
        den = np.where(
            dot >= 0.0,
            prod + dot,
            np.einsum("...i,...i->...", c, c) / (prod - dot),
        )
    return r1, r2, n1, n2, c, den


def min_distance(points, starts, ends):
    """Distance from each point to the nearest segment, shape ``points.shape[:-1]``."""
    p = np.asarray(points, dtype=float)[..., None, :]
    a = np.asarray(starts, dtype=float)
    u = np.asarray(ends, dtype=float) - a
    t = np.einsum("...i,...i->...", p - a, u) / np.einsum("...i,...i->...", u, u)
    t = np.clip(t, 0.0, 1.0)
    closest = a + t[..., None] * u
    return np.linalg.norm(p - closest, axis=-1).min(axis=-1)


def kernel(points, starts, ends, weights):
    """Weighted sum of segment kernels.

    Parameters
    ----------
    points : array_like, shape (..., 3)
    starts, ends : array_like, shape (M, 3)
    weights : array_like, shape (M,)
        Per-segment multiplier (a current, or +-1 for loop edges).

    Returns
    -------
    ndarray, shape (..., 3)
    """
    _, _, n1, n2, c, den = _geometry(points, starts, ends)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = (n1 + n2) / (n1 * n2 * den)
    f = np.where(np.isfinite(f), f, 0.0) * np.asarray(weights, dtype=float)
    return np.einsum("...m,...mi->...i", f, c)


def kernel_jacobian(points, starts, ends, weights):
    """Jacobian ``J[..., i, j] = d K_i / d p_j`` of :func:`kernel`."""
    starts = np.asarray(starts, dtype=float)
    ends = np.asarray(ends, dtype=float)
    r1, r2, n1, n2, c, den = _geometry(points, starts, ends)
    w = np.asarray(weights, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        f = (n1 + n2) / (n1 * n2 * den)
        u1 = r1 / n1[..., None]
        u2 = r2 / n2[..., None]
        s = n1 + n2
        # grad ln f; grad(n1 n2 + r1.r2) = (n1 + n2)(u1 + u2)
        glog = (
            (u1 + u2) / s[..., None]
            - u1 / n1[..., None]
            - u2 / n2[..., None]
            - (s / den)[..., None] * (u1 + u2)
        )
    ok = np.isfinite(f)
    f = np.where(ok, f, 0.0) * w
    glog = np.where(ok[..., None], glog, 0.0)
    # c = p x (a - b) + a x b, so dc_i/dp_j = -[u]_x with u = a - b
    u = starts - ends
    cross = np.zeros(u.shape[:-1] + (3, 3))
    cross[..., 0, 1], cross[..., 0, 2] = u[..., 2], -u[..., 1]
    cross[..., 1, 0], cross[..., 1, 2] = -u[..., 2], u[..., 0]
    cross[..., 2, 0], cross[..., 2, 1] = u[..., 1], -u[..., 0]
    jac = f[..., None, None] * cross + (f[..., None] * c)[..., :, None] * glog[..., None, :]
    return jac.sum(axis=-3)
