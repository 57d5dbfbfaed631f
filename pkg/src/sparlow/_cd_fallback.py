"""NumPy elastic-net coordinate descent, used when the compiled kernel is absent.

Each column ``j`` solves

    min_phi  1/2 ||x_j - D phi||^2 + lam1 ||phi||_1 + lam2 ||phi||^2

from ``phi = 0`` by cyclic coordinate descent in ascending index order, using
the covariance form ``q = D^T x - G phi``.  Sweeps repeat until the KKT
residual of the column drops to ``tol``.

Once a sweep leaves the zero pattern unchanged and the residual is below
``polish_tol``, the stationarity system on the support

    (G_LL + 2 lam2 I) phi_L = c_L - lam1 sign(phi_L)

is solved exactly.  The solve is kept when it certifies; otherwise descent
resumes with a tighter polish threshold.  After convergence the support is
polished once more, and entries below ``snap`` are zeroed.

Sweeps are vectorized across the columns that are still active; the
arithmetic per column matches the compiled kernel.
"""

from __future__ import annotations

import numpy as np


def _kkt(phi, q, lam1, lam2):
    nz = phi != 0.0
    viol = np.where(nz, np.abs(q - lam1 * np.sign(phi) - 2.0 * lam2 * phi), np.abs(q) - lam1)
    return viol.max(axis=0, initial=0.0)


def _polish(G, c, phi, lam1, lam2):
    """Exact support solve; returns ``(phi, q, residual)`` or ``None`` if signs flip."""
    supp = np.flatnonzero(phi)
    if supp.size == 0:
        return None
    signs = np.sign(phi[supp])
    K = G[np.ix_(supp, supp)] + 2.0 * lam2 * np.eye(supp.size)
    try:
        L = np.linalg.cholesky(K)
    except np.linalg.LinAlgError:
        return None
    y = np.linalg.solve(L.T, np.linalg.solve(L, c[supp] - lam1 * signs))
    if np.any(np.sign(y) != signs):
        return None
    out = phi.copy()
    out[supp] = y
    q = c - G @ out
    return out, q, _kkt(out, q, lam1, lam2)


def cd_batch(G, C, lam1, lam2, max_iter, tol, snap, polish_tol=1e-6):
    G = np.ascontiguousarray(G, dtype=float)
    C = np.ascontiguousarray(C, dtype=float)
    r, n = C.shape
    Phi = np.zeros((r, n))
    sweeps = np.zeros(n, dtype=np.int64)
    diag = np.diag(G).copy()
    ptol = np.full(n, float(polish_tol))

    res = _kkt(Phi, C, lam1, lam2)
    active = np.flatnonzero(res > tol)
    it = 0
    while active.size and it < max_iter:
        it += 1
        phi = Phi[:, active]
        q = C[:, active] - G @ phi
        changed = np.zeros(active.size, dtype=bool)
        for i in range(r):
            old = phi[i].copy()
            z = q[i] + diag[i] * old
            new = np.sign(z) * np.maximum(np.abs(z) - lam1, 0.0) / (diag[i] + 2.0 * lam2)
            delta = new - old
            if np.any(delta):
                changed |= (new == 0.0) != (old == 0.0)
                phi[i] = new
                q -= np.outer(G[:, i], delta)
        Phi[:, active] = phi
        sweeps[active] = it
        r_act = _kkt(phi, q, lam1, lam2)
        for a, j in enumerate(active):
            if not (r_act[a] <= tol or (not changed[a] and r_act[a] <= ptol[j])):
                continue
            qj = C[:, j] - G @ Phi[:, j]
            r_act[a] = _kkt(Phi[:, j], qj, lam1, lam2)
            if r_act[a] > tol and not changed[a] and r_act[a] <= ptol[j]:
                polished = _polish(G, C[:, j], Phi[:, j], lam1, lam2)
                if polished is not None and polished[2] <= tol:
                    Phi[:, j] = polished[0]
                    r_act[a] = polished[2]
                else:
                    ptol[j] = r_act[a] * 1e-2
        res[active] = r_act
        active = active[r_act > tol]

    for j in range(n):
        polished = _polish(G, C[:, j], Phi[:, j], lam1, lam2)
        if polished is not None and (polished[2] <= res[j] or polished[2] <= tol):
            Phi[:, j] = polished[0]

    Phi[np.abs(Phi) < snap] = 0.0
    res = _kkt(Phi, C - G @ Phi, lam1, lam2)
    return Phi, sweeps, res
