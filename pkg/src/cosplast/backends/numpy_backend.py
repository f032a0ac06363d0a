"""Vectorized numpy implementation of the energy/gradient assembly kernel.

This is the reference backend; the compiled extension in `_core.pyx`
implements the identical contract and is checked against it in the tests.

Kernel contract
---------------
``energy_and_gradient`` evaluates the discrete incremental energy

    E = sum_n wgt_n [ W_st(R^T Dphi Fp(gamma)^-1) + W_c
                      + penalty*(|q|^2-1)^2 - fext.phi - Mext:R
                      + rho*(gamma-gamma0)^2
                      + r_eps(gamma-gamma0)*(sigma_y - 2*rho*kappa0) ]

over all grid nodes together with its full-grid analytic gradient.
Directional derivatives use the uniform stencil d_l f(n) =
cc[l,n]*(f[ip[l,n]] - f[im[l,n]]).

variant: 0 = quaternion rotation field with curvature ||d_l R||^2,
1 = quaternion with simplified curvature 2*mu2*|d_l q|^2, 2 = Euler angles
with curvature 2*mu2*|d_l alpha|^2 (no unit-norm penalty).
"""

from __future__ import annotations

import numpy as np

VARIANT_FULL = 0
VARIANT_SIMPLIFIED = 1
VARIANT_EULER = 2

_EYE = np.eye(3)


def quat_rot_and_derivs(q):
    """Normalized rotation matrices (N,3,3) and derivatives (N,4,3,3)."""
    q0, q1, q2, q3 = q[:, 0], q[:, 1], q[:, 2], q[:, 3]
    n2 = q0 * q0 + q1 * q1 + q2 * q2 + q3 * q3
    rt = np.empty((q.shape[0], 3, 3))
    rt[:, 0, 0] = q0 * q0 + q1 * q1 - q2 * q2 - q3 * q3
    rt[:, 0, 1] = 2.0 * (q1 * q2 - q0 * q3)
    rt[:, 0, 2] = 2.0 * (q1 * q3 + q0 * q2)
    rt[:, 1, 0] = 2.0 * (q1 * q2 + q0 * q3)
    rt[:, 1, 1] = q0 * q0 - q1 * q1 + q2 * q2 - q3 * q3
    rt[:, 1, 2] = 2.0 * (q2 * q3 - q0 * q1)
    rt[:, 2, 0] = 2.0 * (q1 * q3 - q0 * q2)
    rt[:, 2, 1] = 2.0 * (q2 * q3 + q0 * q1)
    rt[:, 2, 2] = q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3
    r = rt / n2[:, None, None]

    drt = np.empty((q.shape[0], 4, 3, 3))
    drt[:, 0] = 2.0 * np.stack(
        [np.stack([q0, -q3, q2], -1),
         np.stack([q3, q0, -q1], -1),
         np.stack([-q2, q1, q0], -1)], -2)
    drt[:, 1] = 2.0 * np.stack(
        [np.stack([q1, q2, q3], -1),
         np.stack([q2, -q1, -q0], -1),
         np.stack([q3, q0, -q1], -1)], -2)
    drt[:, 2] = 2.0 * np.stack(
        [np.stack([-q2, q1, q0], -1),
         np.stack([q1, q2, q3], -1),
         np.stack([-q0, q3, -q2], -1)], -2)
    drt[:, 3] = 2.0 * np.stack(
        [np.stack([-q3, -q0, q1], -1),
         np.stack([q0, -q3, q2], -1),
         np.stack([q1, q2, q3], -1)], -2)
    # d(Rt/n2)/dq_b = (dRt/dq_b - 2 q_b R) / n2
    dr = (drt - 2.0 * q[:, :, None, None] * r[:, None, :, :])
    dr /= n2[:, None, None, None]
    return r, dr


def euler_rot_and_derivs(alpha):
    """Euler-angle rotation matrices (N,3,3) and derivatives (N,3,3,3)."""
    a1, a2, a3 = alpha[:, 0], alpha[:, 1], alpha[:, 2]
    c1, s1 = np.cos(a1), np.sin(a1)
    c2, s2 = np.cos(a2), np.sin(a2)
    c3, s3 = np.cos(a3), np.sin(a3)
    z = np.zeros_like(a1)
    one = np.ones_like(a1)

    def mat(rows):
        return np.stack([np.stack(r, -1) for r in rows], -2)

    r1 = mat([[c1, s1, z], [-s1, c1, z], [z, z, one]])
    r2 = mat([[c2, z, -s2], [z, one, z], [s2, z, c2]])
    r3 = mat([[one, z, z], [z, c3, s3], [z, -s3, c3]])
    d1 = mat([[-s1, c1, z], [-c1, -s1, z], [z, z, z]])
    d2 = mat([[-s2, z, -c2], [z, z, z], [c2, z, -s2]])
    d3 = mat([[z, z, z], [z, -s3, c3], [z, -c3, -s3]])
    r32 = r3 @ r2
    r = r32 @ r1
    dr = np.stack([r32 @ d1, r3 @ d2 @ r1, d3 @ r2 @ r1], axis=1)
    return r, dr


def _reg_abs_and_deriv(x, eps):
    inner = np.abs(x) <= eps
    val = np.where(inner, x * x / eps, np.abs(x))
    der = np.where(inner, 2.0 * x / eps, np.sign(x))
    return val, der


def energy_and_gradient(phi, rot, gamma, gamma0, kappa0,
                        ip, im, cc, wgt, variant,
                        mu, mu_c, lam, mu2, rho, sigma_y, penalty, eps_reg,
                        mvec, nvec, fext, mext):
    n_nodes = phi.shape[0]
    if variant == VARIANT_EULER:
        r, dr = euler_rot_and_derivs(rot)
    else:
        r, dr = quat_rot_and_derivs(rot)

    # deformation gradient G[n, a, l] = d_l phi_a (n)
    g = np.stack([cc[l][:, None] * (phi[ip[l]] - phi[im[l]])
                  for l in range(3)], axis=2)
    mn = np.outer(mvec, nvec)
    p = _EYE - gamma[:, None, None] * mn  # Fp^-1, exact by nilpotency
    ue = np.swapaxes(r, 1, 2) @ g @ p

    s = 0.5 * (ue + np.swapaxes(ue, 1, 2)) - _EYE
    k = 0.5 * (ue - np.swapaxes(ue, 1, 2))
    tau = np.trace(s, axis1=1, axis2=2)
    wst = (mu * np.sum(s * s, axis=(1, 2))
           + mu_c * np.sum(k * k, axis=(1, 2)) + 0.5 * lam * tau * tau)
    a = 2.0 * mu * s + 2.0 * mu_c * k + lam * tau[:, None, None] * _EYE

    dgam = gamma - gamma0
    reg, dreg = _reg_abs_and_deriv(dgam, eps_reg)
    coef = sigma_y - 2.0 * rho * kappa0
    energy = float(np.dot(wgt, wst
                          + rho * dgam * dgam + reg * coef
                          - phi @ fext
                          - np.einsum("ij,nij->n", mext, r)))

    dphi = np.zeros_like(phi)
    drot = np.zeros_like(rot)

    # stretch energy: phi part via scatter of T = wgt * R A P^T
    t = wgt[:, None, None] * (r @ a @ np.swapaxes(p, 1, 2))
    for l in range(3):
        v = cc[l][:, None] * t[:, :, l]
        np.add.at(dphi, ip[l], v)
        np.add.at(dphi, im[l], -v)
    dphi -= wgt[:, None] * fext

    # rotation-parameter part of stretch + external couple
    c_mat = wgt[:, None, None] * (g @ p @ np.swapaxes(a, 1, 2) - mext)
    drot += np.einsum("nij,nbij->nb", c_mat, dr)

    # plastic slip
    x_mat = np.swapaxes(g, 1, 2) @ r @ a
    dgamma = wgt * (-np.einsum("i,nij,j->n", mvec, x_mat, nvec)
                    + 2.0 * rho * dgam + dreg * coef)

    if variant != VARIANT_EULER:
        n2 = np.sum(rot * rot, axis=1)
        energy += float(np.dot(wgt, penalty * (n2 - 1.0) ** 2))
        drot += (4.0 * penalty * wgt * (n2 - 1.0))[:, None] * rot

    if variant == VARIANT_FULL:
        b = np.zeros((n_nodes, 3, 3))
        for l in range(3):
            d_rl = cc[l][:, None, None] * (r[ip[l]] - r[im[l]])
            energy += float(np.dot(wgt, mu2 * np.sum(d_rl * d_rl,
                                                     axis=(1, 2))))
            u = (2.0 * mu2 * wgt * cc[l])[:, None, None] * d_rl
            np.add.at(b, ip[l], u)
            np.add.at(b, im[l], -u)
        drot += np.einsum("nij,nbij->nb", b, dr)
    else:
        for l in range(3):
            d_ql = cc[l][:, None] * (rot[ip[l]] - rot[im[l]])
            energy += float(np.dot(wgt, 2.0 * mu2 * np.sum(d_ql * d_ql,
                                                           axis=1)))
            v = (4.0 * mu2 * wgt * cc[l])[:, None] * d_ql
            np.add.at(drot, ip[l], v)
            np.add.at(drot, im[l], -v)

    return energy, dphi, drot, dgamma
