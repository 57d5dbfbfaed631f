# cython: language_level=3, boundscheck=False, wraparound=False, initializedcheck=False, cdivision=True
"""Compiled elastic-net coordinate descent (covariance updates).

Mirrors ``sparlow._cd_fallback.cd_batch`` step for step; see that module for
the algorithm description.
"""

from libc.math cimport fabs, sqrt
import numpy as np


cdef inline double _soft(double z, double t) nogil:
    if z > t:
        return z - t
    if z < -t:
        return z + t
    return 0.0


cdef inline double _sign(double v) nogil:
    if v > 0.0:
        return 1.0
    if v < 0.0:
        return -1.0
    return 0.0


cdef void _refresh(const double[:, ::1] G, const double[:, ::1] C, Py_ssize_t j,
                   double[::1] phi, double[::1] q) nogil:
    """q = C[:, j] - G phi, recomputed from scratch."""
    cdef Py_ssize_t r = G.shape[0]
    cdef Py_ssize_t i, k
    cdef double s
    for i in range(r):
        s = C[i, j]
        for k in range(r):
            if phi[k] != 0.0:
                s -= G[i, k] * phi[k]
        q[i] = s


cdef double _kkt(double[::1] phi, double[::1] q, double lam1, double lam2) nogil:
    cdef Py_ssize_t r = phi.shape[0]
    cdef Py_ssize_t i
    cdef double v, worst = 0.0
    for i in range(r):
        if phi[i] != 0.0:
            v = fabs(q[i] - lam1 * _sign(phi[i]) - 2.0 * lam2 * phi[i])
        else:
            v = fabs(q[i]) - lam1
        if v > worst:
            worst = v
    return worst


cdef int _cholesky_solve(double[:, ::1] K, double[::1] b, Py_ssize_t n) nogil:
    """In-place Cholesky of the leading n x n block of K, then solve K y = b into b."""
    cdef Py_ssize_t i, j, k
    cdef double s
    for j in range(n):
        s = K[j, j]
        for k in range(j):
            s -= K[j, k] * K[j, k]
        if s <= 0.0:
            return -1
        K[j, j] = sqrt(s)
        for i in range(j + 1, n):
            s = K[i, j]
            for k in range(j):
                s -= K[i, k] * K[j, k]
            K[i, j] = s / K[j, j]
    for i in range(n):
        s = b[i]
        for k in range(i):
            s -= K[i, k] * b[k]
        b[i] = s / K[i, i]
    for i in range(n - 1, -1, -1):
        s = b[i]
        for k in range(i + 1, n):
            s -= K[k, i] * b[k]
        b[i] = s / K[i, i]
    return 0


cdef double _polish(const double[:, ::1] G, const double[:, ::1] C, Py_ssize_t j,
                    double[::1] phi, double[::1] q, double[::1] y, double[:, ::1] K,
                    Py_ssize_t[::1] supp, double lam1, double lam2) nogil:
    """Exact solve on the current support; updates phi/q and returns the new
    residual, or returns -1 leaving phi/q untouched if signs would flip."""
    cdef Py_ssize_t r = phi.shape[0]
    cdef Py_ssize_t i, a, b, ns = 0
    for i in range(r):
        if phi[i] != 0.0:
            supp[ns] = i
            ns += 1
    if ns == 0:
        return -1.0
    for a in range(ns):
        for b in range(ns):
            K[a, b] = G[supp[a], supp[b]]
        K[a, a] += 2.0 * lam2
        y[a] = C[supp[a], j] - lam1 * _sign(phi[supp[a]])
    if _cholesky_solve(K, y, ns) != 0:
        return -1.0
    for a in range(ns):
        if _sign(y[a]) != _sign(phi[supp[a]]):
            return -1.0
    for a in range(ns):
        phi[supp[a]] = y[a]
    _refresh(G, C, j, phi, q)
    return _kkt(phi, q, lam1, lam2)


def cd_batch(G, C, double lam1, double lam2, int max_iter, double tol, double snap,
             double polish_tol=1e-6):
    """Solve every column of ``C`` (= D^T X) against Gram matrix ``G`` (= D^T D).

    Returns ``(Phi, sweeps, residuals)``.
    """
    cdef const double[:, ::1] Gv = np.ascontiguousarray(G, dtype=np.float64)
    cdef const double[:, ::1] Cv = np.ascontiguousarray(C, dtype=np.float64)
    cdef Py_ssize_t r = Gv.shape[0]
    cdef Py_ssize_t n = Cv.shape[1]

    Phi_arr = np.zeros((r, n), dtype=np.float64)
    sweeps_arr = np.zeros(n, dtype=np.int64)
    resid_arr = np.zeros(n, dtype=np.float64)
    cdef double[:, ::1] Phi = Phi_arr
    cdef long long[::1] sweeps = sweeps_arr
    cdef double[::1] resid = resid_arr

    cdef double[::1] phi = np.zeros(r, dtype=np.float64)
    cdef double[::1] q = np.zeros(r, dtype=np.float64)
    cdef double[::1] y = np.zeros(r, dtype=np.float64)
    cdef double[::1] saved = np.zeros(r, dtype=np.float64)
    cdef double[:, ::1] K = np.zeros((r, r), dtype=np.float64)
    cdef Py_ssize_t[::1] supp = np.zeros(r, dtype=np.intp)

    cdef Py_ssize_t i, j, k
    cdef int it, changed
    cdef double old, new, z, delta, res, res2, gii, ptol

    with nogil:
        for j in range(n):
            for i in range(r):
                phi[i] = 0.0
                q[i] = Cv[i, j]
            res = _kkt(phi, q, lam1, lam2)
            ptol = polish_tol
            it = 0
            while res > tol and it < max_iter:
                it += 1
                changed = 0
                for i in range(r):
                    old = phi[i]
                    gii = Gv[i, i]
                    z = q[i] + gii * old
                    new = _soft(z, lam1) / (gii + 2.0 * lam2)
                    if new != old:
                        if (new == 0.0) != (old == 0.0):
                            changed = 1
                        delta = new - old
                        phi[i] = new
                        for k in range(r):
                            q[k] -= Gv[k, i] * delta
                res = _kkt(phi, q, lam1, lam2)
                if res <= tol or (changed == 0 and res <= ptol):
                    _refresh(Gv, Cv, j, phi, q)
                    res = _kkt(phi, q, lam1, lam2)
                    if res > tol and changed == 0 and res <= ptol:
                        for i in range(r):
                            saved[i] = phi[i]
                        res2 = _polish(Gv, Cv, j, phi, q, y, K, supp, lam1, lam2)
                        if res2 >= 0.0 and res2 <= tol:
                            res = res2
                        else:
                            for i in range(r):
                                phi[i] = saved[i]
                            _refresh(Gv, Cv, j, phi, q)
                            ptol = res * 1e-2

            # final exact solve on the certified support
            for i in range(r):
                saved[i] = phi[i]
            res2 = _polish(Gv, Cv, j, phi, q, y, K, supp, lam1, lam2)
            if res2 >= 0.0 and (res2 <= res or res2 <= tol):
                res = res2
            else:
                for i in range(r):
                    phi[i] = saved[i]

            for i in range(r):
                if fabs(phi[i]) < snap:
                    phi[i] = 0.0
                Phi[i, j] = phi[i]
            _refresh(Gv, Cv, j, phi, q)
            resid[j] = _kkt(phi, q, lam1, lam2)
            sweeps[j] = it

    return Phi_arr, sweeps_arr, resid_arr
