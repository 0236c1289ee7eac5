# cython: boundscheck=False, wraparound=False, cdivision=True, language_level=3
"""Compiled kernels; the arithmetic mirrors reference.py line for line.

Python floats are IEEE doubles, so as long as every operation happens in
the same order on the same values, this module and the pure-Python
reference produce bit-identical results.  Keep any edit here in lockstep
with reference.py.
"""

from libc.math cimport sqrt
from libc.stdlib cimport free, malloc

import numpy as np


cdef void _chol_solve(double* GM, double* b, double jitter, Py_ssize_t p,
                      double* L, double* w, double* out) noexcept nogil:
    cdef Py_ssize_t i, j, k
    cdef double s, t
    for j in range(p):
        s = GM[j * p + j] + jitter
        for k in range(j):
            s -= L[j * p + k] * L[j * p + k]
        if s <= 0.0:
            s = jitter
        s = sqrt(s)
        L[j * p + j] = s
        for i in range(j + 1, p):
            t = GM[i * p + j]
            for k in range(j):
                t -= L[i * p + k] * L[j * p + k]
            L[i * p + j] = t / s
    for i in range(p):
        t = b[i]
        for k in range(i):
            t -= L[i * p + k] * w[k]
        w[i] = t / L[i * p + i]
    for i in range(p - 1, -1, -1):
        t = w[i]
        for k in range(i + 1, p):
            t -= L[k * p + i] * out[k]
        out[i] = t / L[i * p + i]


def collect_eps_greedy(double[:, ::1] X, double[:, ::1] mu, double[:, ::1] sd,
                       double[::1] eps, double[::1] u_act, double[::1] z,
                       double jitter=1e-8):
    """See reference.collect_eps_greedy; identical contract and arithmetic."""
    cdef Py_ssize_t T = X.shape[0]
    cdef Py_ssize_t d = X.shape[1]
    cdef Py_ssize_t K = mu.shape[1]
    cdef Py_ssize_t p = d + 1

    A_arr = np.empty(T, dtype=np.int64)
    Y_arr = np.empty(T, dtype=np.float64)
    G_arr = np.empty(T, dtype=np.float64)
    E_arr = np.empty(T, dtype=np.float64)
    GR_arr = np.empty(T, dtype=np.int64)
    cdef long long[::1] A = A_arr
    cdef double[::1] Y = Y_arr
    cdef double[::1] G = G_arr
    cdef double[::1] E = E_arr
    cdef long long[::1] GR = GR_arr

    cdef double* gram = <double*> malloc(K * p * p * sizeof(double))
    cdef double* bvec = <double*> malloc(K * p * sizeof(double))
    cdef double* theta = <double*> malloc(K * p * sizeof(double))
    cdef double* L = <double*> malloc(p * p * sizeof(double))
    cdef double* wrk = <double*> malloc(p * sizeof(double))
    cdef double* phi = <double*> malloc(p * sizeof(double))
    cdef char* dirty = <char*> malloc(K * sizeof(char))
    cdef char* pulled = <char*> malloc(K * sizeof(char))
    if not (gram and bvec and theta and L and wrk and phi and dirty and pulled):
        free(gram); free(bvec); free(theta); free(L); free(wrk); free(phi)
        free(dirty); free(pulled)
        raise MemoryError()

    cdef Py_ssize_t t, i, j, arm, a, best, grd, n_covered
    cdef double u, g, e, e_rec, y, bestv, v, fi

    with nogil:
        for i in range(K * p * p):
            gram[i] = 0.0
        for i in range(K * p):
            bvec[i] = 0.0
            theta[i] = 0.0
        for i in range(K):
            dirty[i] = 0
            pulled[i] = 0
        n_covered = 0

        for t in range(T):
            phi[0] = 1.0
            for i in range(d):
                phi[i + 1] = X[t, i]

            if n_covered < K:
                u = u_act[t]
                a = <Py_ssize_t>(u * K)
                if a >= K:
                    a = K - 1
                g = 1.0 / K
                e_rec = 1.0
                grd = -1
            else:
                for arm in range(K):
                    if dirty[arm]:
                        _chol_solve(gram + arm * p * p, bvec + arm * p,
                                    jitter, p, L, wrk, theta + arm * p)
                        dirty[arm] = 0
                bestv = 0.0
                for i in range(p):
                    bestv += phi[i] * theta[i]
                best = 0
                for arm in range(1, K):
                    v = 0.0
                    for i in range(p):
                        v += phi[i] * theta[arm * p + i]
                    if v < bestv:
                        best = arm
                        bestv = v
                e = eps[t]
                u = u_act[t]
                if u < e:
                    a = <Py_ssize_t>(u / e * K)
                    if a >= K:
                        a = K - 1
                else:
                    a = best
                if a == best:
                    g = 1.0 - e + e / K
                else:
                    g = e / K
                e_rec = e
                grd = best

            y = mu[t, a] + sd[t, a] * z[t]

            for i in range(p):
                fi = phi[i]
                bvec[a * p + i] += fi * y
                for j in range(p):
                    gram[a * p * p + i * p + j] += fi * phi[j]
            dirty[a] = 1
            if not pulled[a]:
                pulled[a] = 1
                n_covered += 1

            A[t] = a
            Y[t] = y
            G[t] = g
            E[t] = e_rec
            GR[t] = grd

    free(gram); free(bvec); free(theta); free(L); free(wrk); free(phi)
    free(dirty); free(pulled)
    return A_arr, Y_arr, G_arr, E_arr, GR_arr


def sup_process_rounds(long long[::1] s_idx, double[:, ::1] mu,
                       double[:, ::1] sd, double[::1] eps, double[::1] u_act,
                       double[::1] z, double[:, :, ::1] xi, double[::1] cref,
                       double[::1] gstar_arm):
    """See reference.sup_process_rounds; identical contract and arithmetic."""
    cdef Py_ssize_t T = s_idx.shape[0]
    cdef Py_ssize_t S = mu.shape[0]
    cdef Py_ssize_t K = mu.shape[1]
    cdef Py_ssize_t F = xi.shape[0]

    out_arr = np.empty(F, dtype=np.float64)
    cdef double[::1] out = out_arr

    cdef double* cell_sum = <double*> malloc(S * K * sizeof(double))
    cdef long long* cell_cnt = <long long*> malloc(S * K * sizeof(long long))
    cdef double* arm_sum = <double*> malloc(K * sizeof(double))
    cdef long long* arm_cnt = <long long*> malloc(K * sizeof(long long))
    cdef double* m = <double*> malloc(F * sizeof(double))
    if not (cell_sum and cell_cnt and arm_sum and arm_cnt and m):
        free(cell_sum); free(cell_cnt); free(arm_sum); free(arm_cnt); free(m)
        raise MemoryError()

    cdef Py_ssize_t t, i, s, a, arm, best, f, n_covered
    cdef double u, g, e, y, w_is, bestv, v

    with nogil:
        for i in range(S * K):
            cell_sum[i] = 0.0
            cell_cnt[i] = 0
        for i in range(K):
            arm_sum[i] = 0.0
            arm_cnt[i] = 0
        for f in range(F):
            m[f] = 0.0
        n_covered = 0

        for t in range(T):
            s = s_idx[t]

            if n_covered < K:
                u = u_act[t]
                a = <Py_ssize_t>(u * K)
                if a >= K:
                    a = K - 1
                g = 1.0 / K
            else:
                best = 0
                if cell_cnt[s * K] > 0:
                    bestv = cell_sum[s * K] / cell_cnt[s * K]
                else:
                    bestv = arm_sum[0] / arm_cnt[0]
                for arm in range(1, K):
                    if cell_cnt[s * K + arm] > 0:
                        v = cell_sum[s * K + arm] / cell_cnt[s * K + arm]
                    else:
                        v = arm_sum[arm] / arm_cnt[arm]
                    if v < bestv:
                        best = arm
                        bestv = v
                e = eps[t]
                u = u_act[t]
                if u < e:
                    a = <Py_ssize_t>(u / e * K)
                    if a >= K:
                        a = K - 1
                else:
                    a = best
                if a == best:
                    g = 1.0 - e + e / K
                else:
                    g = e / K

            y = mu[s, a] + sd[s, a] * z[t]
            w_is = gstar_arm[a] / g
            for f in range(F):
                m[f] += w_is * xi[f, s, a] - cref[f]

            cell_sum[s * K + a] += y
            cell_cnt[s * K + a] += 1
            if arm_cnt[a] == 0:
                n_covered += 1
            arm_sum[a] += y
            arm_cnt[a] += 1

        for f in range(F):
            out[f] = m[f] / T

    free(cell_sum); free(cell_cnt); free(arm_sum); free(arm_cnt); free(m)
    return out_arr
