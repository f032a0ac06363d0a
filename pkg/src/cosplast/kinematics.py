"""Quaternion algebra, rotation parameterizations and small-tensor helpers.

All functions are pure and operate on plain numpy arrays:
quaternions are length-4 arrays ordered (q0, q1, q2, q3) with q0 the real
part, 3x3 tensors are (3, 3) float arrays.  Vectorized variants accepting
(..., 4) / (..., 3, 3) stacks are provided where the solver needs them.
"""

from __future__ import annotations

import numpy as np

__all__ = [
    "hmul",
    "conjugate",
    "modulus",
    "inverse",
    "eps_skew",
    "rotation",
    "rotation_normalized",
    "rotation_euler",
    "curvature_vector",
    "polar_decompose",
    "quat_from_rotation",
    "sym",
    "skw",
    "KinematicsError",
]

UNIT_NORM_TOL = 1e-8


class KinematicsError(ValueError):
    """Domain error for rotation/quaternion operations."""


def sym(a):
    """Symmetric part (a + a^T)/2."""
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def skw(a):
    """Skew-symmetric part (a - a^T)/2."""
    return 0.5 * (a - np.swapaxes(a, -1, -2))


def hmul(p, q):
    """Hamilton product of two quaternions (supports broadcasting)."""
    p = np.asarray(p, dtype=float)
    q = np.asarray(q, dtype=float)
    p0, pv = p[..., 0], p[..., 1:]
    q0, qv = q[..., 0], q[..., 1:]
    out = np.empty(np.broadcast(p, q).shape)
    out[..., 0] = p0 * q0 - np.sum(pv * qv, axis=-1)
    out[..., 1:] = (p0[..., None] * qv + q0[..., None] * pv
                    + np.cross(pv, qv))
    return out


def conjugate(q):
    """Quaternion conjugate: negate the vector part."""
    q = np.asarray(q, dtype=float)
    out = q.copy()
    out[..., 1:] *= -1.0
    return out


def modulus(q):
    """Euclidean modulus |q|."""
    q = np.asarray(q, dtype=float)
    return np.sqrt(np.sum(q * q, axis=-1))


def inverse(q):
    """Multiplicative inverse conj(q)/|q|^2; rejects the zero quaternion."""
    q = np.asarray(q, dtype=float)
    n2 = np.sum(q * q, axis=-1)
    if np.any(n2 == 0.0):
        raise KinematicsError("zero quaternion has no inverse")
    return conjugate(q) / n2[..., None]


def eps_skew(v):
    """Antisymmetric matrix E with E @ w = v x w."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape[:-1] + (3, 3))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def _rotation_unnormalized(q):
    """Quadratic Euler-Rodrigues matrix; equals |q|^2 times a rotation."""
    q0, q1, q2, q3 = (q[..., i] for i in range(4))
    r = np.empty(q.shape[:-1] + (3, 3))
    r[..., 0, 0] = q0 * q0 + q1 * q1 - q2 * q2 - q3 * q3
    r[..., 0, 1] = 2.0 * (q1 * q2 - q0 * q3)
    r[..., 0, 2] = 2.0 * (q1 * q3 + q0 * q2)
    r[..., 1, 0] = 2.0 * (q1 * q2 + q0 * q3)
    r[..., 1, 1] = q0 * q0 - q1 * q1 + q2 * q2 - q3 * q3
    r[..., 1, 2] = 2.0 * (q2 * q3 - q0 * q1)
    r[..., 2, 0] = 2.0 * (q1 * q3 - q0 * q2)
    r[..., 2, 1] = 2.0 * (q2 * q3 + q0 * q1)
    r[..., 2, 2] = q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3
    return r


def rotation(q):
    """Euler-Rodrigues rotation matrix of a unit quaternion.

    Raises KinematicsError if | |q| - 1 | exceeds the unit-norm tolerance.
    """
    q = np.asarray(q, dtype=float)
    if np.any(np.abs(modulus(q) - 1.0) > UNIT_NORM_TOL):
        raise KinematicsError("rotation() requires a unit quaternion")
    return _rotation_unnormalized(q)


def rotation_normalized(q):
    """Scale-invariant rotation map, defined for every nonzero quaternion."""
    q = np.asarray(q, dtype=float)
    n2 = np.sum(q * q, axis=-1)
    if np.any(n2 == 0.0):
        raise KinematicsError("rotation_normalized() of the zero quaternion")
    return _rotation_unnormalized(q) / n2[..., None, None]


def rotation_euler(alpha):
    """Rotation matrix R3(a3) R2(a2) R1(a1) from three Euler angles."""
    alpha = np.asarray(alpha, dtype=float)
    a1, a2, a3 = alpha[..., 0], alpha[..., 1], alpha[..., 2]
    c1, s1 = np.cos(a1), np.sin(a1)
    c2, s2 = np.cos(a2), np.sin(a2)
    c3, s3 = np.cos(a3), np.sin(a3)
    z = np.zeros_like(a1)
    one = np.ones_like(a1)
    r1 = np.stack([np.stack([c1, s1, z], -1),
                   np.stack([-s1, c1, z], -1),
                   np.stack([z, z, one], -1)], -2)
    r2 = np.stack([np.stack([c2, z, -s2], -1),
                   np.stack([z, one, z], -1),
                   np.stack([s2, z, c2], -1)], -2)
    r3 = np.stack([np.stack([one, z, z], -1),
                   np.stack([z, c3, s3], -1),
                   np.stack([z, -s3, c3], -1)], -2)
    return r3 @ r2 @ r1


def curvature_vector(qbar, dq, return_real=False):
    """Darboux vector: the vector part of 2 * qbar * dq.

    qbar is the conjugate of the (unit) quaternion field value, dq a
    discrete directional derivative.  The real part vanishes for exactly
    unit-norm fields; it is returned as a diagnostic when requested.
    """
    full = 2.0 * hmul(qbar, dq)
    if return_real:
        return full[..., 1:], full[..., 0]
    return full[..., 1:]


def polar_decompose(f, tol=1e-12, max_iter=100):
    """Polar decomposition F = R U by the Newton iteration R <- (R + R^-T)/2.

    Returns (R, U) with R in SO(3) and U symmetric positive definite.
    """
    f = np.asarray(f, dtype=float)
    if f.shape != (3, 3):
        raise KinematicsError("polar_decompose expects a single 3x3 matrix")
    if np.linalg.det(f) <= 0.0:
        raise KinematicsError("polar decomposition needs det(F) > 0")
    r = f.copy()
    for _ in range(max_iter):
        r_next = 0.5 * (r + np.linalg.inv(r).T)
        if np.linalg.norm(r_next - r) <= tol:
            r = r_next
            break
        r = r_next
    u = r.T @ f
    u = 0.5 * (u + u.T)
    return r, u


def quat_from_rotation(r):
    """Unit quaternion q with rotation(q) = R.

    Uses the largest-diagonal-pivot extraction to avoid cancellation near
    angle-pi rotations.  Sign convention: q0 >= 0; if q0 == 0 the first
    nonzero vector component is positive.
    """
    r = np.asarray(r, dtype=float)
    if r.shape != (3, 3):
        raise KinematicsError("quat_from_rotation expects a 3x3 matrix")
    if (np.linalg.norm(r.T @ r - np.eye(3)) > 1e-8
            or abs(np.linalg.det(r) - 1.0) > 1e-8):
        raise KinematicsError("input is not a rotation matrix")
    tr = r[0, 0] + r[1, 1] + r[2, 2]
    candidates = [tr, r[0, 0], r[1, 1], r[2, 2]]
    pivot = int(np.argmax(candidates))
    q = np.empty(4)
    if pivot == 0:
        s = np.sqrt(tr + 1.0) * 2.0
        q[0] = 0.25 * s
        q[1] = (r[2, 1] - r[1, 2]) / s
        q[2] = (r[0, 2] - r[2, 0]) / s
        q[3] = (r[1, 0] - r[0, 1]) / s
    elif pivot == 1:
        s = np.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        q[0] = (r[2, 1] - r[1, 2]) / s
        q[1] = 0.25 * s
        q[2] = (r[0, 1] + r[1, 0]) / s
        q[3] = (r[0, 2] + r[2, 0]) / s
    elif pivot == 2:
        s = np.sqrt(1.0 - r[0, 0] + r[1, 1] - r[2, 2]) * 2.0
        q[0] = (r[0, 2] - r[2, 0]) / s
        q[1] = (r[0, 1] + r[1, 0]) / s
        q[2] = 0.25 * s
        q[3] = (r[1, 2] + r[2, 1]) / s
    else:
        s = np.sqrt(1.0 - r[0, 0] - r[1, 1] + r[2, 2]) * 2.0
        q[0] = (r[1, 0] - r[0, 1]) / s
        q[1] = (r[0, 2] + r[2, 0]) / s
        q[2] = (r[1, 2] + r[2, 1]) / s
        q[3] = 0.25 * s
    q /= np.linalg.norm(q)
    # resolve the double cover deterministically
    if q[0] < 0.0:
        q = -q
    elif q[0] == 0.0:
        for c in q[1:]:
            if c != 0.0:
                if c < 0.0:
                    q = -q
                break
    return q
