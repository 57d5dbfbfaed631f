"""Geometry of the product of the oblique manifold and the Grassmannian.

Dictionaries are ``m x r`` matrices with unit-norm columns; subspaces are
represented by rank-``l`` orthogonal projectors ``P`` of size ``r x r``.
Tangent vectors on the product are :class:`TangentPair` objects.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import DimensionError, FactorizationError, SingularStepError

_SINGULAR_STEP = 1e-14
_MAX_QR_CONDITION = 1e12


@dataclass
class TangentPair:
    """Tangent vector ``(dict_dir, proj_dir)`` at some point ``(D, P)``."""

    dict_dir: np.ndarray
    proj_dir: np.ndarray

    def __add__(self, other: "TangentPair") -> "TangentPair":
        return TangentPair(self.dict_dir + other.dict_dir, self.proj_dir + other.proj_dir)

    def __sub__(self, other: "TangentPair") -> "TangentPair":
        return TangentPair(self.dict_dir - other.dict_dir, self.proj_dir - other.proj_dir)

    def __mul__(self, scalar: float) -> "TangentPair":
        return TangentPair(scalar * self.dict_dir, scalar * self.proj_dir)

    __rmul__ = __mul__

    @classmethod
    def zeros_like(cls, D: np.ndarray, P: np.ndarray) -> "TangentPair":
        return cls(np.zeros_like(D, dtype=float), np.zeros_like(P, dtype=float))


def normalize_columns(D: np.ndarray) -> np.ndarray:
    D = np.asarray(D, dtype=float)
    norms = np.linalg.norm(D, axis=0)
    if np.any(norms < _SINGULAR_STEP):
        raise SingularStepError("cannot normalize a zero column")
    return D / norms


def sphere_retract(d, xi, t: float) -> np.ndarray:
    """Retraction ``(d + t xi) / ||d + t xi||`` on the unit sphere."""
    v = np.asarray(d, dtype=float) + t * np.asarray(xi, dtype=float)
    nv = np.linalg.norm(v)
    if nv < _SINGULAR_STEP:
        raise SingularStepError(f"||d + t xi|| = {nv:.3e} is numerically zero")
    return v / nv


def dictionary_retract(D: np.ndarray, Xi: np.ndarray, t: float) -> np.ndarray:
    """Column-wise :func:`sphere_retract`."""
    V = D + t * Xi
    norms = np.linalg.norm(V, axis=0)
    if np.any(norms < _SINGULAR_STEP):
        bad = int(np.argmin(norms))
        raise SingularStepError(f"atom {bad}: ||d + t xi|| = {norms[bad]:.3e} is numerically zero")
    return V / norms


def unique_qr(M) -> tuple[np.ndarray, np.ndarray]:
    """QR factorization with a strictly positive diagonal in ``R``.

    Householder QR (LAPACK) followed by a sign flip of the rows of ``R`` and
    the matching columns of ``Q``.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise DimensionError(f"unique_qr needs a square matrix, got shape {M.shape}")
    cond = np.linalg.cond(M)
    if not np.isfinite(cond) or cond > _MAX_QR_CONDITION:
        raise FactorizationError(f"matrix is numerically singular (condition {cond:.3e})")
    Q, R = np.linalg.qr(M)
    signs = np.sign(np.diag(R))
    signs[signs == 0] = 1.0
    return Q * signs, R * signs[:, None]


def _grassmann_rotation(P: np.ndarray, Psi: np.ndarray, t: float) -> np.ndarray:
    r = P.shape[0]
    Omega = Psi @ P - P @ Psi
    Q, _ = unique_qr(np.eye(r) + t * Omega)
    return Q


def grassmann_retract(P, Psi, t: float) -> np.ndarray:
    """QR-based retraction ``zeta P zeta^T`` with ``zeta = qf(I + t(Psi P - P Psi))``."""
    P = np.asarray(P, dtype=float)
    zeta = _grassmann_rotation(P, np.asarray(Psi, dtype=float), t)
    out = zeta @ P @ zeta.T
    return 0.5 * (out + out.T)


def product_retract(D, P, H: TangentPair, t: float) -> tuple[np.ndarray, np.ndarray]:
    return dictionary_retract(D, H.dict_dir, t), grassmann_retract(P, H.proj_dir, t)


def product_metric(H1: TangentPair, H2: TangentPair) -> float:
    """Euclidean metric ``tr(D1 D2^T) + tr(P1 P2^T)`` restricted to tangent pairs."""
    if H1.dict_dir.shape != H2.dict_dir.shape or H1.proj_dir.shape != H2.proj_dir.shape:
        raise DimensionError("tangent pairs have mismatched shapes")
    return float(np.vdot(H1.dict_dir, H2.dict_dir) + np.vdot(H1.proj_dir, H2.proj_dir))


def product_norm(H: TangentPair) -> float:
    return float(np.sqrt(product_metric(H, H)))


def project_tangent_sphere(D, G) -> np.ndarray:
    """``G - D ddiag(D^T G)``: removes the radial part of each column."""
    D = np.asarray(D, dtype=float)
    G = np.asarray(G, dtype=float)
    if D.shape != G.shape:
        raise DimensionError(f"shape mismatch {D.shape} vs {G.shape}")
    return G - D * np.einsum("ij,ij->j", D, G)


def project_tangent_grassmann(P, G) -> np.ndarray:
    """``PG + GP - 2PGP`` applied to the symmetric part of ``G``."""
    P = np.asarray(P, dtype=float)
    G = np.asarray(G, dtype=float)
    if P.shape != G.shape:
        raise DimensionError(f"shape mismatch {P.shape} vs {G.shape}")
    G = 0.5 * (G + G.T)
    PG = P @ G
    out = PG + PG.T - 2.0 * PG @ P
    return 0.5 * (out + out.T)


def project_tangent(D, P, H: TangentPair) -> TangentPair:
    return TangentPair(project_tangent_sphere(D, H.dict_dir), project_tangent_grassmann(P, H.proj_dir))


def sphere_transport(d, xi, t: float, xi_tilde) -> np.ndarray:
    """Vector transport ``(1/||v||)(I + v v^T/||v||^2) xi_tilde`` with ``v = d + t xi``."""
    v = np.asarray(d, dtype=float) + t * np.asarray(xi, dtype=float)
    nv = np.linalg.norm(v)
    if nv < _SINGULAR_STEP:
        raise SingularStepError(f"||d + t xi|| = {nv:.3e} is numerically zero")
    xt = np.asarray(xi_tilde, dtype=float)
    return (xt + v * (v @ xt) / nv**2) / nv


def dictionary_transport(D, Xi, t: float, Xi_tilde) -> np.ndarray:
    """Column-wise :func:`sphere_transport`."""
    V = D + t * Xi
    nv = np.linalg.norm(V, axis=0)
    if np.any(nv < _SINGULAR_STEP):
        raise SingularStepError("transport through a numerically zero column")
    coef = np.einsum("ij,ij->j", V, Xi_tilde) / nv**2
    return (Xi_tilde + V * coef) / nv


def grassmann_transport(P, Psi, t: float, Psi_tilde) -> np.ndarray:
    """Vector transport ``zeta Psi_tilde zeta^T`` along the QR retraction."""
    P = np.asarray(P, dtype=float)
    zeta = _grassmann_rotation(P, np.asarray(Psi, dtype=float), t)
    out = zeta @ np.asarray(Psi_tilde, dtype=float) @ zeta.T
    return 0.5 * (out + out.T)


def product_transport(D, P, H: TangentPair, t: float, H_tilde: TangentPair) -> TangentPair:
    return TangentPair(
        dictionary_transport(D, H.dict_dir, t, H_tilde.dict_dir),
        grassmann_transport(P, H.proj_dir, t, H_tilde.proj_dir),
    )


def projector_from_basis(U) -> np.ndarray:
    U = np.asarray(U, dtype=float)
    P = U @ U.T
    return 0.5 * (P + P.T)


def top_eigvecs(S, l: int) -> tuple[np.ndarray, np.ndarray]:
    """Eigenvectors of symmetric ``S`` for its ``l`` largest eigenvalues, descending."""
    w, V = np.linalg.eigh(0.5 * (S + S.T))
    idx = np.argsort(w, kind="stable")[::-1][:l]
    return w[idx], V[:, idx]


def reproject_projector(P, l: int) -> np.ndarray:
    """Snap a drifted projector back onto the Grassmannian via its top-``l`` eigenvectors."""
    _, U = top_eigvecs(P, l)
    return projector_from_basis(U)


def random_projector(r: int, l: int, rng: np.random.Generator) -> np.ndarray:
    U, _ = np.linalg.qr(rng.standard_normal((r, l)))
    return projector_from_basis(U)


def random_dictionary(m: int, r: int, rng: np.random.Generator) -> np.ndarray:
    return normalize_columns(rng.standard_normal((m, r)))


def check_dictionary(D, tol: float = 1e-10) -> None:
    D = np.asarray(D)
    if D.ndim != 2:
        raise DimensionError("dictionary must be a matrix")
    err = np.max(np.abs(np.linalg.norm(D, axis=0) - 1.0))
    if err > tol:
        raise DimensionError(f"dictionary columns are not unit norm (max deviation {err:.3e})")


def projector_defects(P, l: int) -> dict[str, float]:
    """Symmetry, idempotency and trace defects of a candidate projector."""
    P = np.asarray(P, dtype=float)
    return {
        "symmetry": float(np.linalg.norm(P - P.T)),
        "idempotency": float(np.linalg.norm(P @ P - P)),
        "trace": float(abs(np.trace(P) - l)),
    }
