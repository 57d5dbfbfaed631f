"""Elastic-net sparse coding, optimality certificates and the code Jacobian."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import _backend
from .errors import ConvergenceError, DimensionError, ValidationError

KKT_TOL = 1e-9
SNAP = 1e-12
MAX_CD_ITERS = 10000


@dataclass(frozen=True)
class ElasticNetPrior:
    """Penalty ``lambda1 ||phi||_1 + lambda2 ||phi||_2^2``.

    ``lambda2`` must be strictly positive: it makes the coding problem strictly
    convex and keeps the support Gram system invertible.
    """

    lambda1: float = 0.2
    lambda2: float = 1e-3

    def __post_init__(self):
        if not (np.isfinite(self.lambda1) and self.lambda1 >= 0):
            raise ValidationError(f"lambda1 must be >= 0, got {self.lambda1}")
        if not (np.isfinite(self.lambda2) and self.lambda2 > 0):
            raise ValidationError(f"lambda2 must be > 0, got {self.lambda2}")

    def penalty(self, phi) -> float:
        phi = np.asarray(phi, dtype=float)
        return float(self.lambda1 * np.abs(phi).sum() + self.lambda2 * (phi**2).sum())


@dataclass
class SparseCode:
    values: np.ndarray
    support: np.ndarray = field(default=None)

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.support is None:
            self.support = np.flatnonzero(self.values)
        else:
            self.support = np.asarray(self.support, dtype=np.intp)


class CodeBatch:
    """Codes ``Phi`` (``r x n``) with per-column supports."""

    def __init__(self, codes, supports: list | None = None, residuals: np.ndarray | None = None):
        self.codes = np.asarray(codes, dtype=float)
        self._supports = supports
        self.residuals = residuals

    @property
    def supports(self) -> list:
        # built on first use; most evaluations only need the values
        if self._supports is None:
            rows, cols = np.nonzero(self.codes.T)
            splits = np.cumsum(np.bincount(rows, minlength=len(self)))[:-1]
            self._supports = np.split(cols, splits) if len(self) else []
        return self._supports

    def __len__(self):
        return self.codes.shape[1]

    def __getitem__(self, j) -> SparseCode:
        return SparseCode(self.codes[:, j], self.supports[j])

    def support_signature(self):
        return tuple(tuple(s.tolist()) for s in self.supports)


def _solve(X, D, prior, max_cd_iters, tol, backend):
    D = np.asarray(D, dtype=float)
    X = np.asarray(X, dtype=float)
    if D.ndim != 2 or X.ndim != 2 or X.shape[0] != D.shape[0]:
        raise DimensionError(f"data {X.shape} incompatible with dictionary {D.shape}")
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(D))):
        raise ValidationError("non-finite entries in data or dictionary")
    kernel = _backend.get_cd_batch(backend)
    G = D.T @ D
    C = D.T @ X
    return kernel(G, C, float(prior.lambda1), float(prior.lambda2), int(max_cd_iters), float(tol), SNAP)


def batch_encode(X, D, prior: ElasticNetPrior, *, max_cd_iters: int = MAX_CD_ITERS,
                 tol: float = KKT_TOL, backend: str | None = None) -> CodeBatch:
    """Encode every column of ``X`` against ``D``.

    Raises :class:`ConvergenceError` listing the offending sample indices if any
    column fails to certify within ``max_cd_iters`` sweeps.
    """
    X = np.asarray(X, dtype=float)
    if X.ndim == 2 and X.shape[1] == 0:
        return CodeBatch(np.zeros((np.shape(D)[1], 0)), [], np.zeros(0))
    Phi, _, res = _solve(X, D, prior, max_cd_iters, tol, backend)
    bad = np.flatnonzero(res > tol)
    if bad.size:
        raise ConvergenceError(
            f"{bad.size} sample(s) did not reach KKT residual {tol:g} "
            f"(worst {res.max():.3e} at sample {int(bad[np.argmax(res[bad])])})",
            residuals={int(i): float(res[i]) for i in bad},
        )
    return CodeBatch(Phi, None, res)


def sparse_encode(x, D, prior: ElasticNetPrior, *, max_cd_iters: int = MAX_CD_ITERS,
                  tol: float = KKT_TOL, backend: str | None = None) -> SparseCode:
    x = np.asarray(x, dtype=float).reshape(-1, 1)
    try:
        batch = batch_encode(x, D, prior, max_cd_iters=max_cd_iters, tol=tol, backend=backend)
    except ConvergenceError as err:
        raise ConvergenceError(
            f"coordinate descent did not converge in {max_cd_iters} sweeps "
            f"(KKT residual {err.residuals[0]:.3e})",
            residuals=err.residuals,
        ) from None
    return batch[0]


def elastic_net_objective(x, D, phi, prior: ElasticNetPrior) -> float:
    resid = np.asarray(x, dtype=float) - np.asarray(D, dtype=float) @ np.asarray(phi, dtype=float)
    return float(0.5 * resid @ resid + prior.penalty(phi))


def kkt_residual(x, D, phi, prior: ElasticNetPrior) -> float:
    """Largest violation of the subgradient optimality conditions at ``phi``."""
    phi = np.asarray(getattr(phi, "values", phi), dtype=float)
    D = np.asarray(D, dtype=float)
    q = D.T @ (np.asarray(x, dtype=float) - D @ phi)
    nz = phi != 0
    viol = np.where(
        nz,
        np.abs(q - prior.lambda1 * np.sign(phi) - 2.0 * prior.lambda2 * phi),
        np.maximum(np.abs(q) - prior.lambda1, 0.0),
    )
    return float(viol.max(initial=0.0))


def hessian_on_support(prior: ElasticNetPrior, phi_support) -> np.ndarray:
    """Hessian of the penalty restricted to the support: ``2 lambda2 I``."""
    k = np.size(phi_support)
    if k == 0:
        raise ValidationError("hessian_on_support needs a non-empty support")
    return 2.0 * prior.lambda2 * np.eye(k)


def support_system(D, code: SparseCode, prior: ElasticNetPrior) -> np.ndarray:
    """``K = D_L^T D_L + Hg(phi_L)`` for the code's support ``L``."""
    DL = np.asarray(D, dtype=float)[:, code.support]
    return DL.T @ DL + hessian_on_support(prior, code.values[code.support])


def code_jacobian_apply(x, D, code: SparseCode, H, prior: ElasticNetPrior) -> np.ndarray:
    """Directional derivative of the code at ``D`` along ``H``.

    Off-support entries are zero; on the support ``L``

        K^{-1} (H_L^T x - (H_L^T D_L + D_L^T H_L) phi_L).
    """
    D = np.asarray(D, dtype=float)
    H = np.asarray(H, dtype=float)
    if H.shape != D.shape:
        raise DimensionError(f"direction {H.shape} does not match dictionary {D.shape}")
    out = np.zeros(D.shape[1])
    L = code.support
    if L.size == 0:
        return out
    x = np.asarray(x, dtype=float)
    DL, HL, phiL = D[:, L], H[:, L], code.values[L]
    rhs = HL.T @ x - HL.T @ (DL @ phiL) - DL.T @ (HL @ phiL)
    out[L] = np.linalg.solve(support_system(D, code, prior), rhs)
    return out
