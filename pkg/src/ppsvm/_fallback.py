"""Pure numpy versions of the compiled kernels in ``_core.pyx``.

Same signatures, same return conventions and the same update arithmetic, so
the two backends agree to rounding. Used when the extension is not built or
``PPSVM_BACKEND=python`` is set.
"""
import numpy as np

TAU = 1e-12


def _select_pair(y, alpha, G, C):
    v = -y * G
    up = ((y > 0) & (alpha < C)) | ((y < 0) & (alpha > 0))
    low = ((y > 0) & (alpha > 0)) | ((y < 0) & (alpha < C))
    if not up.any() or not low.any():
        return -1, -1, -np.inf, np.inf
    v_up = np.where(up, v, -np.inf)
    v_low = np.where(low, v, np.inf)
    i = int(np.argmax(v_up))
    j = int(np.argmin(v_low))
    return i, j, v_up[i], v_low[j]


def smo_solve(Q, y, C, tol, max_iter, trace=False):
    Q = np.ascontiguousarray(Q, dtype=np.float64)
    y = np.ascontiguousarray(y, dtype=np.float64)
    n = Q.shape[0]
    alpha = np.zeros(n)
    G = np.full(n, -1.0)
    trace_values = [] if trace else None
    it = 0
    converged = False
    while True:
        i, j, gmax, gmin = _select_pair(y, alpha, G, C)
        if i == -1 or j == -1 or gmax - gmin <= tol:
            converged = True
            break
        if it >= max_iter:
            break
        old_ai, old_aj = alpha[i], alpha[j]
        ai, aj = old_ai, old_aj
        if y[i] != y[j]:
            quad = Q[i, i] + Q[j, j] + 2.0 * Q[i, j]
            if quad <= 0:
                quad = TAU
            delta = (-G[i] - G[j]) / quad
            diff = ai - aj
            ai += delta
            aj += delta
            if diff > 0:
                if aj < 0:
                    aj, ai = 0.0, diff
                if ai > C:
                    ai, aj = C, C - diff
            else:
                if ai < 0:
                    ai, aj = 0.0, -diff
                if aj > C:
                    aj, ai = C, C + diff
        else:
            quad = Q[i, i] + Q[j, j] - 2.0 * Q[i, j]
            if quad <= 0:
                quad = TAU
            delta = (G[i] - G[j]) / quad
            total = ai + aj
            ai -= delta
            aj += delta
            if total > C:
                if ai > C:
                    ai, aj = C, total - C
                if aj > C:
                    aj, ai = C, total - C
            else:
                if aj < 0:
                    aj, ai = 0.0, total
                if ai < 0:
                    ai, aj = 0.0, total
        alpha[i], alpha[j] = ai, aj
        G += Q[:, i] * (ai - old_ai) + Q[:, j] * (aj - old_aj)
        if trace:
            trace_values.append(0.5 * float(np.sum(alpha * (1.0 - G))))
        it += 1
    if trace:
        trace_values = np.asarray(trace_values, dtype=np.float64)
    return alpha, G, it, converged, trace_values


def _mgs_pass(Q, rank_tol, check):
    # Right-looking form: same per-row update sequence as the left-looking
    # loop in the compiled core, with each step vectorised over the trailing rows.
    d = Q.shape[0]
    orig = np.sqrt(np.einsum("ij,ij->i", Q, Q))
    for k in range(d):
        nrm = np.sqrt(Q[k] @ Q[k])
        if check and (orig[k] == 0.0 or nrm <= rank_tol * orig[k]):
            return False
        Q[k] /= nrm
        if k + 1 < d:
            rest = Q[k + 1:]
            rest -= np.outer(rest @ Q[k], Q[k])
    return True


def mgs_orthonormalize(A, rank_tol):
    Q = np.array(A, dtype=np.float64, order="C", copy=True)
    if not _mgs_pass(Q, rank_tol, check=True):
        return Q, False
    _mgs_pass(Q, rank_tol, check=False)
    return Q, True


def sq_dists_compensated(A, B):
    A = np.asarray(A, dtype=np.float64)
    B = np.asarray(B, dtype=np.float64)
    s = np.zeros((A.shape[0], B.shape[0]))
    comp = np.zeros_like(s)
    for k in range(A.shape[1]):
        diff = A[:, k, None] - B[None, :, k]
        term = diff * diff
        t = s + term
        big = np.abs(s) >= np.abs(term)
        comp += np.where(big, (s - t) + term, (term - t) + s)
        s = t
    return s + comp
