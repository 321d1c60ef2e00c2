# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled hot loops: SMO pair updates, modified Gram-Schmidt and
compensated squared distances.

Each function has a numpy twin in ``_fallback`` with the same signature and
the same return conventions; ``_backend`` picks one at import.
"""
import numpy as np
from libc.math cimport sqrt, fabs, INFINITY

cdef double TAU = 1e-12


cdef inline void _select_pair(const double[::1] y, const double[::1] alpha,
                              const double[::1] G, double C, Py_ssize_t n,
                              Py_ssize_t* i_out, Py_ssize_t* j_out,
                              double* gmax_out, double* gmin_out) noexcept nogil:
    cdef Py_ssize_t t, i = -1, j = -1
    cdef double gmax = -INFINITY, gmin = INFINITY, v
    for t in range(n):
        v = -y[t] * G[t]
        if (y[t] > 0 and alpha[t] < C) or (y[t] < 0 and alpha[t] > 0):
            if v > gmax:
                gmax = v
                i = t
        if (y[t] > 0 and alpha[t] > 0) or (y[t] < 0 and alpha[t] < C):
            if v < gmin:
                gmin = v
                j = t
    i_out[0] = i
    j_out[0] = j
    gmax_out[0] = gmax
    gmin_out[0] = gmin


cdef inline double _dual_value(const double[::1] alpha, const double[::1] G,
                               Py_ssize_t n) noexcept nogil:
    cdef double s = 0.0
    cdef Py_ssize_t t
    for t in range(n):
        s += alpha[t] * (1.0 - G[t])
    return 0.5 * s


def smo_solve(const double[:, ::1] Q, const double[::1] y, double C,
              double tol, Py_ssize_t max_iter, bint trace=False):
    """Maximal-violating-pair SMO on ``Q[i, j] = y_i y_j K(x_i, x_j)``.

    Returns ``(alpha, grad, n_iter, converged, trace_values)`` where
    ``grad = Q @ alpha - 1`` and ``trace_values`` holds the dual objective
    after every pair update (``None`` unless ``trace``).
    """
    cdef Py_ssize_t n = Q.shape[0]
    alpha_arr = np.zeros(n, dtype=np.float64)
    G_arr = np.full(n, -1.0, dtype=np.float64)
    trace_arr = np.empty(max_iter if trace else 0, dtype=np.float64)
    cdef double[::1] alpha = alpha_arr
    cdef double[::1] G = G_arr
    cdef double[::1] tr = trace_arr
    cdef Py_ssize_t it = 0, i, j, t
    cdef double gmax, gmin, quad, delta, diff, total, old_ai, old_aj, dai, daj
    cdef bint converged = False

    with nogil:
        while True:
            _select_pair(y, alpha, G, C, n, &i, &j, &gmax, &gmin)
            if i == -1 or j == -1 or gmax - gmin <= tol:
                converged = True
                break
            if it >= max_iter:
                break
            old_ai = alpha[i]
            old_aj = alpha[j]
            if y[i] != y[j]:
                quad = Q[i, i] + Q[j, j] + 2.0 * Q[i, j]
                if quad <= 0:
                    quad = TAU
                delta = (-G[i] - G[j]) / quad
                diff = alpha[i] - alpha[j]
                alpha[i] += delta
                alpha[j] += delta
                if diff > 0:
                    if alpha[j] < 0:
                        alpha[j] = 0
                        alpha[i] = diff
                    if alpha[i] > C:
                        alpha[i] = C
                        alpha[j] = C - diff
                else:
                    if alpha[i] < 0:
                        alpha[i] = 0
                        alpha[j] = -diff
                    if alpha[j] > C:
                        alpha[j] = C
                        alpha[i] = C + diff
            else:
                quad = Q[i, i] + Q[j, j] - 2.0 * Q[i, j]
                if quad <= 0:
                    quad = TAU
                delta = (G[i] - G[j]) / quad
                total = alpha[i] + alpha[j]
                alpha[i] -= delta
                alpha[j] += delta
                if total > C:
                    if alpha[i] > C:
                        alpha[i] = C
                        alpha[j] = total - C
                    if alpha[j] > C:
                        alpha[j] = C
                        alpha[i] = total - C
                else:
                    if alpha[j] < 0:
                        alpha[j] = 0
                        alpha[i] = total
                    if alpha[i] < 0:
                        alpha[i] = 0
                        alpha[j] = total
            dai = alpha[i] - old_ai
            daj = alpha[j] - old_aj
            for t in range(n):
                G[t] += Q[t, i] * dai + Q[t, j] * daj
            if trace:
                tr[it] = _dual_value(alpha, G, n)
            it += 1
    trace_values = trace_arr[:it].copy() if trace else None
    return alpha_arr, G_arr, it, converged, trace_values


def mgs_orthonormalize(const double[:, ::1] A, double rank_tol):
    """Orthonormalise the rows of square ``A`` by modified Gram-Schmidt,
    followed by a second full MGS pass over the result.

    Returns ``(Q, ok)``; ``ok`` is False if some row lost more than
    ``1 - rank_tol`` of its norm during the first pass.
    """
    cdef Py_ssize_t d = A.shape[0], m = A.shape[1]
    Q_arr = np.array(A, dtype=np.float64, order="C", copy=True)
    cdef double[:, ::1] Qv = Q_arr
    cdef Py_ssize_t p, k, j, c
    cdef double r, nrm, orig
    cdef bint ok = True
    with nogil:
        for p in range(2):
            for k in range(d):
                orig = 0.0
                for c in range(m):
                    orig += Qv[k, c] * Qv[k, c]
                orig = sqrt(orig)
                for j in range(k):
                    r = 0.0
                    for c in range(m):
                        r += Qv[j, c] * Qv[k, c]
                    for c in range(m):
                        Qv[k, c] -= r * Qv[j, c]
                nrm = 0.0
                for c in range(m):
                    nrm += Qv[k, c] * Qv[k, c]
                nrm = sqrt(nrm)
                if p == 0 and (orig == 0.0 or nrm <= rank_tol * orig):
                    ok = False
                    break
                for c in range(m):
                    Qv[k, c] /= nrm
            if not ok:
                break
    return Q_arr, ok


def sq_dists_compensated(const double[:, ::1] A, const double[:, ::1] B):
    """Pairwise squared Euclidean distances with Neumaier summation."""
    cdef Py_ssize_t n = A.shape[0], m = B.shape[0], d = A.shape[1]
    out_arr = np.empty((n, m), dtype=np.float64)
    cdef double[:, ::1] out = out_arr
    cdef Py_ssize_t i, j, k
    cdef double s, comp, term, t, diff
    with nogil:
        for i in range(n):
            for j in range(m):
                s = 0.0
                comp = 0.0
                for k in range(d):
                    diff = A[i, k] - B[j, k]
                    term = diff * diff
                    t = s + term
                    if fabs(s) >= fabs(term):
                        comp += (s - t) + term
                    else:
                        comp += (term - t) + s
                    s = t
                out[i, j] = s + comp
    return out_arr
