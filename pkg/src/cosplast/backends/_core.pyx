# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled energy/gradient assembly kernel.

Same contract as `numpy_backend.energy_and_gradient`; the tests assert
bitwise-level agreement (1e-12) between the two backends on random states.
"""

import numpy as np

cimport numpy as cnp
from libc.math cimport fabs, cos, sin

cnp.import_array()

VARIANT_FULL = 0
VARIANT_SIMPLIFIED = 1
VARIANT_EULER = 2


cdef inline void mat33_mul(double* a, double* b, double* out) nogil:
    cdef int i, j, k
    for i in range(3):
        for j in range(3):
            out[3 * i + j] = (a[3 * i] * b[j] + a[3 * i + 1] * b[3 + j]
                              + a[3 * i + 2] * b[6 + j])


cdef void quat_rot_derivs(double q0, double q1, double q2, double q3,
                          double* r, double* dr) nogil:
    """Normalized rotation r[9] and derivatives dr[4*9] at one node."""
    cdef double n2 = q0 * q0 + q1 * q1 + q2 * q2 + q3 * q3
    cdef double rt[9]
    cdef double drt[36]
    cdef int b, e
    rt[0] = q0 * q0 + q1 * q1 - q2 * q2 - q3 * q3
    rt[1] = 2.0 * (q1 * q2 - q0 * q3)
    rt[2] = 2.0 * (q1 * q3 + q0 * q2)
    rt[3] = 2.0 * (q1 * q2 + q0 * q3)
    rt[4] = q0 * q0 - q1 * q1 + q2 * q2 - q3 * q3
    rt[5] = 2.0 * (q2 * q3 - q0 * q1)
    rt[6] = 2.0 * (q1 * q3 - q0 * q2)
    rt[7] = 2.0 * (q2 * q3 + q0 * q1)
    rt[8] = q0 * q0 - q1 * q1 - q2 * q2 + q3 * q3
    for e in range(9):
        r[e] = rt[e] / n2

    drt[0] = q0;  drt[1] = -q3; drt[2] = q2
    drt[3] = q3;  drt[4] = q0;  drt[5] = -q1
    drt[6] = -q2; drt[7] = q1;  drt[8] = q0

    drt[9] = q1;   drt[10] = q2;  drt[11] = q3
    drt[12] = q2;  drt[13] = -q1; drt[14] = -q0
    drt[15] = q3;  drt[16] = q0;  drt[17] = -q1

    drt[18] = -q2; drt[19] = q1;  drt[20] = q0
    drt[21] = q1;  drt[22] = q2;  drt[23] = q3
    drt[24] = -q0; drt[25] = q3;  drt[26] = -q2

    drt[27] = -q3; drt[28] = -q0; drt[29] = q1
    drt[30] = q0;  drt[31] = -q3; drt[32] = q2
    drt[33] = q1;  drt[34] = q2;  drt[35] = q3

    cdef double qb
    for b in range(4):
        if b == 0:
            qb = q0
        elif b == 1:
            qb = q1
        elif b == 2:
            qb = q2
        else:
            qb = q3
        for e in range(9):
            dr[9 * b + e] = (2.0 * drt[9 * b + e] - 2.0 * qb * r[e]) / n2


cdef void euler_rot_derivs(double a1, double a2, double a3,
                           double* r, double* dr) nogil:
    cdef double c1 = cos(a1), s1 = sin(a1)
    cdef double c2 = cos(a2), s2 = sin(a2)
    cdef double c3 = cos(a3), s3 = sin(a3)
    cdef double r1[9]
    cdef double r2[9]
    cdef double r3[9]
    cdef double d1[9]
    cdef double d2[9]
    cdef double d3[9]
    cdef double r32[9]
    cdef double tmp[9]
    cdef int e
    r1[0] = c1;  r1[1] = s1; r1[2] = 0
    r1[3] = -s1; r1[4] = c1; r1[5] = 0
    r1[6] = 0;   r1[7] = 0;  r1[8] = 1
    r2[0] = c2; r2[1] = 0; r2[2] = -s2
    r2[3] = 0;  r2[4] = 1; r2[5] = 0
    r2[6] = s2; r2[7] = 0; r2[8] = c2
    r3[0] = 1; r3[1] = 0;   r3[2] = 0
    r3[3] = 0; r3[4] = c3;  r3[5] = s3
    r3[6] = 0; r3[7] = -s3; r3[8] = c3
    d1[0] = -s1; d1[1] = c1;  d1[2] = 0
    d1[3] = -c1; d1[4] = -s1; d1[5] = 0
    d1[6] = 0;   d1[7] = 0;   d1[8] = 0
    d2[0] = -s2; d2[1] = 0; d2[2] = -c2
    d2[3] = 0;   d2[4] = 0; d2[5] = 0
    d2[6] = c2;  d2[7] = 0; d2[8] = -s2
    d3[0] = 0; d3[1] = 0;   d3[2] = 0
    d3[3] = 0; d3[4] = -s3; d3[5] = c3
    d3[6] = 0; d3[7] = -c3; d3[8] = -s3
    mat33_mul(r3, r2, r32)
    mat33_mul(r32, r1, r)
    mat33_mul(r32, d1, tmp)
    for e in range(9):
        dr[e] = tmp[e]
    mat33_mul(r3, d2, tmp)
    mat33_mul(tmp, r1, dr + 9)
    mat33_mul(d3, r2, tmp)
    mat33_mul(tmp, r1, dr + 18)


def energy_and_gradient(double[:, ::1] phi, double[:, ::1] rot,
                        double[::1] gamma, double[::1] gamma0,
                        double[::1] kappa0,
                        long[:, ::1] ip, long[:, ::1] im, double[:, ::1] cc,
                        double[::1] wgt, int variant,
                        double mu, double mu_c, double lam, double mu2,
                        double rho, double sigma_y, double penalty,
                        double eps_reg,
                        double[::1] mvec, double[::1] nvec,
                        double[::1] fext, double[:, ::1] mext):
    cdef Py_ssize_t n_nodes = phi.shape[0]
    cdef int rd = rot.shape[1]
    cdef cnp.ndarray r_arr = np.empty((n_nodes, 9), dtype=np.float64)
    cdef cnp.ndarray dr_arr = np.empty((n_nodes, rd * 9), dtype=np.float64)
    cdef double[:, ::1] r_all = r_arr
    cdef double[:, ::1] dr_all = dr_arr
    cdef cnp.ndarray dphi_arr = np.zeros((n_nodes, 3), dtype=np.float64)
    cdef cnp.ndarray drot_arr = np.zeros((n_nodes, rd), dtype=np.float64)
    cdef cnp.ndarray dgam_arr = np.zeros(n_nodes, dtype=np.float64)
    cdef double[:, ::1] dphi = dphi_arr
    cdef double[:, ::1] drot = drot_arr
    cdef double[::1] dgam = dgam_arr
    cdef double[:, ::1] bbuf
    cdef cnp.ndarray b_arr = None
    if variant == 0:
        b_arr = np.zeros((n_nodes, 9), dtype=np.float64)
        bbuf = b_arr

    cdef Py_ssize_t n, p_, q_
    cdef int i, j, l, b, e
    cdef double energy = 0.0
    cdef double g[9]
    cdef double ue[9]
    cdef double s[9]
    cdef double kk[9]
    cdef double a[9]
    cdef double t[9]
    cdef double cmat[9]
    cdef double mn[9]
    cdef double w, tau, wst, c, dg, reg, dreg, coef, n2, val, dot, x
    cdef double dq[4]
    cdef double drl[9]

    for i in range(3):
        for j in range(3):
            mn[3 * i + j] = mvec[i] * nvec[j]

    with nogil:
        # pass A: rotations and their parameter derivatives
        for n in range(n_nodes):
            if variant == 2:
                euler_rot_derivs(rot[n, 0], rot[n, 1], rot[n, 2],
                                 &r_all[n, 0], &dr_all[n, 0])
            else:
                quat_rot_derivs(rot[n, 0], rot[n, 1], rot[n, 2], rot[n, 3],
                                &r_all[n, 0], &dr_all[n, 0])

        # pass B: per-node energy and gradient scatter
        for n in range(n_nodes):
            w = wgt[n]
            # deformation gradient g[a*3+l] = d_l phi_a
            for l in range(3):
                p_ = ip[l, n]
                q_ = im[l, n]
                c = cc[l, n]
                for i in range(3):
                    g[3 * i + l] = c * (phi[p_, i] - phi[q_, i])
            # ue = r^T (g p) with p = I - gamma mn
            for i in range(3):
                for j in range(3):
                    # gp = g - gamma * g@mn
                    t[3 * i + j] = g[3 * i + j] - gamma[n] * (
                        g[3 * i] * mn[j] + g[3 * i + 1] * mn[3 + j]
                        + g[3 * i + 2] * mn[6 + j])
            for i in range(3):
                for j in range(3):
                    ue[3 * i + j] = (r_all[n, i] * t[j]
                                     + r_all[n, 3 + i] * t[3 + j]
                                     + r_all[n, 6 + i] * t[6 + j])
            tau = ue[0] + ue[4] + ue[8] - 3.0
            wst = 0.0
            for i in range(3):
                for j in range(3):
                    s[3 * i + j] = 0.5 * (ue[3 * i + j] + ue[3 * j + i])
                    kk[3 * i + j] = 0.5 * (ue[3 * i + j] - ue[3 * j + i])
                s[4 * i] -= 1.0
            for e in range(9):
                wst += mu * s[e] * s[e] + mu_c * kk[e] * kk[e]
                a[e] = 2.0 * mu * s[e] + 2.0 * mu_c * kk[e]
            wst += 0.5 * lam * tau * tau
            a[0] += lam * tau
            a[4] += lam * tau
            a[8] += lam * tau

            dg = gamma[n] - gamma0[n]
            if fabs(dg) <= eps_reg:
                reg = dg * dg / eps_reg
                dreg = 2.0 * dg / eps_reg
            else:
                reg = fabs(dg)
                dreg = 1.0 if dg > 0.0 else -1.0
            coef = sigma_y - 2.0 * rho * kappa0[n]

            val = wst + rho * dg * dg + reg * coef
            for i in range(3):
                val -= fext[i] * phi[n, i]
                for j in range(3):
                    val -= mext[i, j] * r_all[n, 3 * i + j]
            energy += w * val

            # t = w * r a p^T ; p^T = I - gamma n (x) m => (ra) - gamma (ra)mn^T
            for i in range(3):
                for j in range(3):
                    cmat[3 * i + j] = (r_all[n, 3 * i] * a[j]
                                       + r_all[n, 3 * i + 1] * a[3 + j]
                                       + r_all[n, 3 * i + 2] * a[6 + j])
            for i in range(3):
                for j in range(3):
                    t[3 * i + j] = w * (cmat[3 * i + j] - gamma[n] * (
                        cmat[3 * i] * mn[3 * j] + cmat[3 * i + 1] * mn[3 * j + 1]
                        + cmat[3 * i + 2] * mn[3 * j + 2]))
            for l in range(3):
                p_ = ip[l, n]
                q_ = im[l, n]
                c = cc[l, n]
                for i in range(3):
                    dphi[p_, i] += c * t[3 * i + l]
                    dphi[q_, i] -= c * t[3 * i + l]
            for i in range(3):
                dphi[n, i] -= w * fext[i]

            # gamma: -m^T g^T (r a) n  plus plastic terms
            dot = 0.0
            for i in range(3):
                for j in range(3):
                    # (g^T (ra))_{ij} = sum_k g[k*3+i] cmat[k*3+j]
                    dot += mvec[i] * (g[i] * cmat[j] + g[3 + i] * cmat[3 + j]
                                      + g[6 + i] * cmat[6 + j]) * nvec[j]
            dgam[n] = w * (-dot + 2.0 * rho * dg + dreg * coef)

            # rotation-parameter part: cmat2 = w*(g p a^T - mext)
            # reuse t as gp
            for i in range(3):
                for j in range(3):
                    t[3 * i + j] = g[3 * i + j] - gamma[n] * (
                        g[3 * i] * mn[j] + g[3 * i + 1] * mn[3 + j]
                        + g[3 * i + 2] * mn[6 + j])
            for i in range(3):
                for j in range(3):
                    cmat[3 * i + j] = w * (
                        t[3 * i] * a[3 * j] + t[3 * i + 1] * a[3 * j + 1]
                        + t[3 * i + 2] * a[3 * j + 2] - mext[i, j])
            for b in range(rd):
                dot = 0.0
                for e in range(9):
                    dot += cmat[e] * dr_all[n, 9 * b + e]
                drot[n, b] += dot

            if variant != 2:
                n2 = 0.0
                for b in range(4):
                    n2 += rot[n, b] * rot[n, b]
                energy += w * penalty * (n2 - 1.0) * (n2 - 1.0)
                for b in range(4):
                    drot[n, b] += 4.0 * penalty * w * (n2 - 1.0) * rot[n, b]

            if variant == 0:
                for l in range(3):
                    p_ = ip[l, n]
                    q_ = im[l, n]
                    c = cc[l, n]
                    dot = 0.0
                    for e in range(9):
                        x = c * (r_all[p_, e] - r_all[q_, e])
                        drl[e] = x
                        dot += x * x
                    energy += w * mu2 * dot
                    for e in range(9):
                        x = 2.0 * mu2 * w * c * drl[e]
                        bbuf[p_, e] += x
                        bbuf[q_, e] -= x
            else:
                for l in range(3):
                    p_ = ip[l, n]
                    q_ = im[l, n]
                    c = cc[l, n]
                    dot = 0.0
                    for b in range(rd):
                        dq[b] = c * (rot[p_, b] - rot[q_, b])
                        dot += dq[b] * dq[b]
                    energy += w * 2.0 * mu2 * dot
                    for b in range(rd):
                        x = 4.0 * mu2 * w * c * dq[b]
                        drot[p_, b] += x
                        drot[q_, b] -= x

        # pass C: contract curvature scatter buffer with rotation derivatives
        if variant == 0:
            for n in range(n_nodes):
                for b in range(4):
                    dot = 0.0
                    for e in range(9):
                        dot += bbuf[n, e] * dr_all[n, 9 * b + e]
                    drot[n, b] += dot

    return energy, dphi_arr, drot_arr, dgam_arr
