# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: Gram-matrix products over coherent-product branches
and the sequential independence Metropolis-Hastings accept loop.

G[i, j] = <a_i|b_j> = prod_p exp(-|a_ip - b_jp|^2/2 + i Im(conj(a_ip) b_jp)).
G is never stored; each row is formed in a scratch buffer and contracted
against V right away.
"""

import numpy as np
cimport numpy as cnp
from cython.parallel cimport prange, parallel
from libc.math cimport exp
from libc.stdlib cimport malloc, free

cdef extern from "math.h" nogil:
    void sincos(double x, double *s, double *c)

cnp.import_array()


cdef inline void _row_logs(Py_ssize_t i, Py_ssize_t jmax, Py_ssize_t m,
                           double[:, ::1] a_r, double[:, ::1] a_i,
                           double[:, ::1] b_r, double[:, ::1] b_i,
                           double *re, double *im) noexcept nogil:
    cdef Py_ssize_t j, p
    cdef double ar, ai, dr, di
    for j in range(jmax):
        re[j] = 0.0
        im[j] = 0.0
    for p in range(m):
        ar = a_r[p, i]
        ai = a_i[p, i]
        for j in range(jmax):
            dr = ar - b_r[p, j]
            di = ai - b_i[p, j]
            re[j] = re[j] - 0.5 * (dr * dr + di * di)
            im[j] = im[j] + (ar * b_i[p, j] - ai * b_r[p, j])


cdef inline void _row_exp(Py_ssize_t jmax, double *re, double *im) noexcept nogil:
    cdef Py_ssize_t j
    cdef double e, sn, cs
    for j in range(jmax):
        if re[j] < -745.0:
            re[j] = 0.0
            im[j] = 0.0
        else:
            e = exp(re[j])
            sincos(im[j], &sn, &cs)
            re[j] = e * cs
            im[j] = e * sn


def _planes(z):
    z = np.asarray(z)
    return np.array(z.real.T, order="C"), np.array(z.imag.T, order="C")


def gram_matvec(A1, A2, V, int threads=1):
    """W = G V with G[i, j] = <A1[i]|A2[j]>.

    Rows are distributed over threads; each row is reduced sequentially, so
    the result is independent of the thread count.
    """
    cdef Py_ssize_t n1 = A1.shape[0], n2 = A2.shape[0], m = A1.shape[1], s = V.shape[1]
    cdef Py_ssize_t i, j, t
    cdef double accr, acci
    cdef double *re
    cdef double *im
    a_r_, a_i_ = _planes(A1)
    b_r_, b_i_ = _planes(A2)
    v_r_, v_i_ = _planes(V)
    cdef double[:, ::1] a_r = a_r_, a_i = a_i_, b_r = b_r_, b_i = b_i_
    cdef double[:, ::1] v_r = v_r_, v_i = v_i_
    W = np.zeros((n1, s), dtype=np.complex128)
    cdef double complex[:, ::1] Wv = W
    if threads < 1:
        threads = 1
    if n1 == 0 or n2 == 0:
        return W
    with nogil, parallel(num_threads=threads):
        re = <double *> malloc(n2 * sizeof(double))
        im = <double *> malloc(n2 * sizeof(double))
        for i in prange(n1, schedule="static"):
            _row_logs(i, n2, m, a_r, a_i, b_r, b_i, re, im)
            _row_exp(n2, re, im)
            for t in range(s):
                accr = 0.0
                acci = 0.0
                for j in range(n2):
                    accr = accr + re[j] * v_r[t, j] - im[j] * v_i[t, j]
                    acci = acci + re[j] * v_i[t, j] + im[j] * v_r[t, j]
                Wv[i, t] = accr + 1j * acci
        free(re)
        free(im)
    return W


def gram_matvec_self(A, V):
    """W = G V for the Hermitian self-Gram G[i, j] = <A[i]|A[j]>.

    Each unordered pair is formed once (G[j, i] = conj(G[i, j])); the loop
    is sequential so the summation order is fixed.
    """
    cdef Py_ssize_t n = A.shape[0], m = A.shape[1], s = V.shape[1]
    cdef Py_ssize_t i, j, t
    cdef double accr, acci, vr, vi
    a_r_, a_i_ = _planes(A)
    v_r_, v_i_ = _planes(V)
    cdef double[:, ::1] a_r = a_r_, a_i = a_i_
    cdef double[:, ::1] v_r = v_r_, v_i = v_i_
    w_r_ = np.zeros((s, n))
    w_i_ = np.zeros((s, n))
    cdef double[:, ::1] w_r = w_r_, w_i = w_i_
    if n == 0:
        return np.zeros((0, s), dtype=np.complex128)
    cdef double *re = <double *> malloc(n * sizeof(double))
    cdef double *im = <double *> malloc(n * sizeof(double))
    with nogil:
        for i in range(n):
            _row_logs(i, i, m, a_r, a_i, a_r, a_i, re, im)
            _row_exp(i, re, im)
            for t in range(s):
                vr = v_r[t, i]
                vi = v_i[t, i]
                accr = vr
                acci = vi
                for j in range(i):
                    accr = accr + re[j] * v_r[t, j] - im[j] * v_i[t, j]
                    acci = acci + re[j] * v_i[t, j] + im[j] * v_r[t, j]
                    w_r[t, j] += re[j] * vr + im[j] * vi
                    w_i[t, j] += re[j] * vi - im[j] * vr
                w_r[t, i] += accr
                w_i[t, i] += acci
    free(re)
    free(im)
    return np.ascontiguousarray((w_r_ + 1j * w_i_).T)


def mh_chain(double[::1] log_ratio, double[::1] log_u):
    """Run the accept loop of an independence sampler.

    log_ratio[k] = log P(x_k) - log q(x_k) for proposal k. Proposal 0 is the
    initial chain state; step k (k >= 1) proposes x_k. Returns the index of
    the chain state after each step and the number of accepted moves.
    """
    cdef Py_ssize_t n = log_ratio.shape[0], k, cur = 0
    cdef long n_acc = 0
    out = np.zeros(n, dtype=np.int64)
    cdef cnp.int64_t[::1] ov = out
    for k in range(1, n):
        if log_u[k] < log_ratio[k] - log_ratio[cur]:
            cur = k
            n_acc += 1
        ov[k] = cur
    return out, n_acc
