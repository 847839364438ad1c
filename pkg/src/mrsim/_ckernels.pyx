# cython: boundscheck=False, wraparound=False, cdivision=True
"""Compiled twin of the numpy filter kernels in mrsim.kernels.

Same math, loop-structured to exploit the shift structure of the
transition matrix (O(n^2) per step instead of dense matrix products).
See mrsim.kernels for the normative layout documentation.
"""

import numpy as np

cimport numpy as cnp

cnp.import_array()


cdef void _last_row(double[::1] phi, double[::1] b, double[:, ::1] c,
                    double mu, double[::1] s, double[::1] L) nogil:
    """Dense last row of F(s): (mu*(1+sum phi), psi_r..psi_1, -phi_r..-phi_1)."""
    cdef Py_ssize_t r = phi.shape[0]
    cdef Py_ssize_t n = 2 * r + 1
    cdef Py_ssize_t l, i
    cdef double acc, phisum
    phisum = 0.0
    for i in range(r):
        phisum += phi[i]
    L[0] = mu * (1.0 + phisum)
    for l in range(1, r + 1):
        # psi_l with X(k-i) = s[n-i], lower triangle of c only
        acc = b[l - 1]
        for i in range(1, l + 1):
            acc += c[l - 1, i - 1] * s[n - i]
        L[r + 1 - l] = acc
    for i in range(1, r + 1):
        L[n - i] = -phi[i - 1]


def predict_step(cnp.ndarray[double, ndim=1] phi_a,
                 cnp.ndarray[double, ndim=1] b_a,
                 cnp.ndarray[double, ndim=2] c_a,
                 double mu, double q,
                 cnp.ndarray[double, ndim=1] s_a,
                 cnp.ndarray[double, ndim=2] P_a,
                 double xi_hat):
    cdef double[::1] phi = np.ascontiguousarray(phi_a)
    cdef double[::1] b = np.ascontiguousarray(b_a)
    cdef double[:, ::1] c = np.ascontiguousarray(c_a)
    cdef double[::1] s = np.ascontiguousarray(s_a)
    cdef double[:, ::1] P = np.ascontiguousarray(P_a)
    cdef Py_ssize_t r = phi.shape[0]
    cdef Py_ssize_t n = 2 * r + 1
    cdef Py_ssize_t i, j, si, sj
    cdef double acc

    s2_a = np.empty(n, dtype=np.float64)
    P2_a = np.empty((n, n), dtype=np.float64)
    L_a = np.empty(n, dtype=np.float64)
    w_a = np.empty(n, dtype=np.float64)
    cdef double[::1] s2 = s2_a
    cdef double[:, ::1] P2 = P2_a
    cdef double[::1] L = L_a
    cdef double[::1] w = w_a

    # sigma(i): source index of unit row i; -1 marks the zero row, -2 the dense row
    cdef Py_ssize_t[::1] sigma = np.empty(n, dtype=np.intp)
    sigma[0] = 0
    for i in range(1, r):
        sigma[i] = i + 1
        sigma[r + i] = r + i + 1
    sigma[r] = -1
    sigma[n - 1] = -2

    _last_row(phi, b, c, mu, s, L)

    # w = P @ L and the dense-dense corner L^T P L
    cdef double lwl = 0.0
    for i in range(n):
        acc = 0.0
        for j in range(n):
            acc += P[i, j] * L[j]
        w[i] = acc
        lwl += L[i] * acc

    # state: shifts, fresh innovation slot, dense last entry
    s2[0] = 1.0
    for i in range(1, r):
        s2[i] = s[i + 1]
        s2[r + i] = s[r + i + 1]
    s2[r] = xi_hat
    acc = 0.0
    for j in range(n):
        acc += L[j] * s[j]
    s2[n - 1] = acc + xi_hat

    # covariance: F P F^T exploiting row structure, then + q V V^T
    for i in range(n):
        si = sigma[i]
        for j in range(n):
            sj = sigma[j]
            if si == -1 or sj == -1:
                P2[i, j] = 0.0
            elif si == -2 and sj == -2:
                P2[i, j] = lwl
            elif si == -2:
                P2[i, j] = w[sj]
            elif sj == -2:
                P2[i, j] = w[si]
            else:
                P2[i, j] = P[si, sj]
    P2[r, r] += q
    P2[r, n - 1] += q
    P2[n - 1, r] += q
    P2[n - 1, n - 1] += q

    # symmetrize
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.5 * (P2[i, j] + P2[j, i])
            P2[i, j] = acc
            P2[j, i] = acc
    return s2_a, P2_a


def predict_scalar(cnp.ndarray[double, ndim=1] phi_a,
                   cnp.ndarray[double, ndim=1] b_a,
                   cnp.ndarray[double, ndim=2] c_a,
                   double mu,
                   cnp.ndarray[double, ndim=1] s_a,
                   double xi_hat):
    cdef double[::1] phi = np.ascontiguousarray(phi_a)
    cdef double[::1] b = np.ascontiguousarray(b_a)
    cdef double[:, ::1] c = np.ascontiguousarray(c_a)
    cdef double[::1] s = np.ascontiguousarray(s_a)
    cdef Py_ssize_t n = 2 * phi.shape[0] + 1
    cdef Py_ssize_t j
    cdef double acc
    L_a = np.empty(n, dtype=np.float64)
    cdef double[::1] L = L_a
    _last_row(phi, b, c, mu, s, L)
    acc = 0.0
    for j in range(n):
        acc += L[j] * s[j]
    return acc + xi_hat


def measurement_step(cnp.ndarray[double, ndim=1] s_a,
                     cnp.ndarray[double, ndim=2] P_a,
                     double r_var, double y, double xi_hat):
    cdef double[::1] s = np.ascontiguousarray(s_a)
    cdef double[:, ::1] P = np.ascontiguousarray(P_a)
    cdef Py_ssize_t n = s.shape[0]
    cdef Py_ssize_t h = n - 1
    cdef Py_ssize_t i, j
    cdef double S, innov, acc

    S = P[h, h] + r_var
    if S <= 0.0:
        return np.asarray(s).copy(), np.asarray(P).copy()
    innov = y - (s[h] + xi_hat)

    s2_a = np.empty(n, dtype=np.float64)
    P2_a = np.empty((n, n), dtype=np.float64)
    K_a = np.empty(n, dtype=np.float64)
    AP_a = np.empty((n, n), dtype=np.float64)
    cdef double[::1] s2 = s2_a
    cdef double[:, ::1] P2 = P2_a
    cdef double[::1] K = K_a
    cdef double[:, ::1] AP = AP_a

    for i in range(n):
        K[i] = P[i, h] / S
        s2[i] = s[i] + K[i] * innov
    s2[0] = 1.0

    # Joseph form: (I - K H) P (I - K H)^T + r_var K K^T, H = e_h
    for i in range(n):
        for j in range(n):
            AP[i, j] = P[i, j] - K[i] * P[h, j]
    for i in range(n):
        for j in range(n):
            P2[i, j] = AP[i, j] - AP[i, h] * K[j] + r_var * K[i] * K[j]
    for i in range(n):
        for j in range(i + 1, n):
            acc = 0.5 * (P2[i, j] + P2[j, i])
            P2[i, j] = acc
            P2[j, i] = acc
    return s2_a, P2_a
