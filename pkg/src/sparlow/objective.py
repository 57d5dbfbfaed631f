"""The trace-quotient cost on sparse codes, its regularizers and gradients.

``J(D, P) = f(D, P) - mu1 * g_c(D) - mu2 * g_d(D)`` with

* ``f = tr(P A(Phi)) / (tr(P B(Phi)) + sigma)`` where ``Phi`` are the elastic-net
  codes of ``X`` under ``D``;
* ``g_c`` a log barrier on pairwise atom coherence;
* ``g_d = 1/2 ||D - D*||_F^2`` an anchor to a data-driven dictionary.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import BarrierDomainError, DimensionError, GuardViolationError, ValidationError
from .graphs import StructurePair, evaluate_pair
from .manifold import TangentPair, project_tangent
from .sparse import CodeBatch, ElasticNetPrior, batch_encode

BARRIER_EPS = 1e-12


@dataclass
class SparLowParams:
    sigma: float = 1e-3
    mu1: float = 2.5e-4
    mu2: float = 5e-3
    anchor: np.ndarray | None = None

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValidationError("sigma must be positive")
        if self.mu1 < 0 or self.mu2 < 0:
            raise ValidationError("mu1 and mu2 must be nonnegative")
        if self.anchor is not None:
            self.anchor = np.asarray(self.anchor, dtype=float)
            norms = np.linalg.norm(self.anchor, axis=0)
            if not np.allclose(norms, 1.0, atol=1e-8):
                raise ValidationError("anchor dictionary must have unit-norm columns")


@dataclass
class ObjectiveReport:
    f_value: float
    gc_value: float
    gd_value: float
    J_value: float
    numerator: float
    denominator: float


def _denominator(B, P, sigma) -> float:
    den = float(np.trace(P @ B)) + sigma
    if not den > 0:
        raise GuardViolationError(f"trace quotient denominator {den:.3e} is not positive")
    return den


def trace_quotient_f(A, B, P, sigma: float) -> float:
    return float(np.trace(P @ A)) / _denominator(B, P, sigma)


def _coherence(D):
    D = np.asarray(D, dtype=float)
    C = D.T @ D
    iu = np.triu_indices(C.shape[0], 1)
    c = C[iu]
    if c.size and np.max(np.abs(c)) >= 1.0 - BARRIER_EPS:
        i = int(np.argmax(np.abs(c)))
        raise BarrierDomainError(
            f"atoms {iu[0][i]} and {iu[1][i]} are collinear (|coherence| = {abs(c[i]):.15f})"
        )
    return C, iu, c


def coherence_barrier(D) -> float:
    """``-sum_{i<j} 1/2 log(1 - (d_i^T d_j)^2)``."""
    _, _, c = _coherence(D)
    return float(-0.5 * np.log1p(-(c**2)).sum())


def coherence_barrier_grad(D) -> np.ndarray:
    """Euclidean gradient ``D W`` with ``W_ij = c_ij / (1 - c_ij^2)`` off the diagonal."""
    D = np.asarray(D, dtype=float)
    C, _, _ = _coherence(D)
    W = C / (1.0 - C**2 + np.eye(C.shape[0]))
    np.fill_diagonal(W, 0.0)
    return D @ W


def data_regularizer(D, anchor) -> float:
    diff = np.asarray(D, dtype=float) - np.asarray(anchor, dtype=float)
    return float(0.5 * np.sum(diff**2))


def data_regularizer_grad(D, anchor) -> np.ndarray:
    D = np.asarray(D, dtype=float)
    anchor = np.asarray(anchor, dtype=float)
    if D.shape != anchor.shape:
        raise DimensionError(f"dictionary {D.shape} and anchor {anchor.shape} differ in shape")
    return D - anchor


def euclidean_grad_P(A, B, P, sigma: float, f_value: float) -> np.ndarray:
    G = (np.asarray(A) - f_value * np.asarray(B)) / _denominator(B, P, sigma)
    return 0.5 * (G + G.T)


def code_gradient(pair: StructurePair, Phi, P, A, B, sigma: float) -> np.ndarray:
    """Gradient of ``f`` with respect to the codes ``Phi`` (``r x n``)."""
    den = _denominator(B, P, sigma)
    f = float(np.trace(P @ A)) / den
    return (pair.A.trace_gradient(Phi, P) - f * pair.B.trace_gradient(Phi, P)) / den


def chain_to_dictionary(X, D, codes: CodeBatch, dPhi, prior: ElasticNetPrior) -> np.ndarray:
    """Pull a code-space gradient back to the dictionary through the encoder.

    Sample ``i`` with support ``L`` solves ``K w = dPhi[L, i]`` with
    ``K = D_L^T D_L + 2 lambda2 I`` and adds ``(x - D_L phi_L) w^T - D_L w phi_L^T``
    to the columns ``L``.  Atoms outside every support receive nothing.
    """
    X = np.asarray(X, dtype=float)
    D = np.asarray(D, dtype=float)
    out = np.zeros_like(D)
    ridge = 2.0 * prior.lambda2
    for i, L in enumerate(codes.supports):
        if L.size == 0:
            continue
        g = dPhi[L, i]
        if not np.any(g):
            continue
        DL = D[:, L]
        phiL = codes.codes[L, i]
        K = DL.T @ DL
        K[np.diag_indices_from(K)] += ridge
        w = sla.cho_solve(sla.cho_factor(K, lower=True, check_finite=False), g, check_finite=False)
        resid = X[:, i] - DL @ phiL
        out[:, L] += np.outer(resid, w) - np.outer(DL @ w, phiL)
    return out


@dataclass
class Evaluation:
    """Everything computed at one point ``(D, P)``."""

    D: np.ndarray
    P: np.ndarray
    codes: CodeBatch
    A: np.ndarray
    B: np.ndarray
    report: ObjectiveReport

    @property
    def J(self) -> float:
        return self.report.J_value


class SparLowProblem:
    """Bundles data, structure pair, prior and weights into ``J`` and its gradients.

    Args:
        X: ``m x n`` data, columns are samples.
        pair: frozen structure pair acting on ``n`` samples.
        prior: elastic-net penalty of the encoder.
        params: quotient guard and regularizer weights.  A missing anchor
            disables the data regularizer.
        backend: coordinate-descent kernel name, default the active one.
    """

    def __init__(self, X, pair: StructurePair, prior: ElasticNetPrior, params: SparLowParams,
                 backend: str | None = None):
        self.X = np.asarray(X, dtype=float)
        if pair.n != self.X.shape[1]:
            raise DimensionError(f"structure pair expects {pair.n} samples, data has {self.X.shape[1]}")
        self.pair = pair
        self.prior = prior
        self.params = params
        self.backend = backend
        self.grad_hook = None  # debug: callable(TangentPair) -> TangentPair applied to Euclidean grads

    def encode(self, D) -> CodeBatch:
        return batch_encode(self.X, D, self.prior, backend=self.backend)

    def evaluate(self, D, P, codes: CodeBatch | None = None) -> Evaluation:
        D = np.asarray(D, dtype=float)
        P = np.asarray(P, dtype=float)
        if codes is None:
            codes = self.encode(D)
        A, B = evaluate_pair(self.pair, codes.codes)
        p = self.params
        num = float(np.trace(P @ A))
        den = _denominator(B, P, p.sigma)
        f = num / den
        gc = coherence_barrier(D) if p.mu1 else 0.0
        gd = data_regularizer(D, p.anchor) if p.mu2 and p.anchor is not None else 0.0
        J = f - p.mu1 * gc - p.mu2 * gd
        return Evaluation(D, P, codes, A, B, ObjectiveReport(f, gc, gd, J, num, den))

    def value(self, D, P) -> float:
        return self.evaluate(D, P).J

    def euclidean_grads(self, ev: Evaluation) -> TangentPair:
        p = self.params
        gP = euclidean_grad_P(ev.A, ev.B, ev.P, p.sigma, ev.report.f_value)
        dPhi = code_gradient(self.pair, ev.codes.codes, ev.P, ev.A, ev.B, p.sigma)
        gD = chain_to_dictionary(self.X, ev.D, ev.codes, dPhi, self.prior)
        if p.mu1:
            gD = gD - p.mu1 * coherence_barrier_grad(ev.D)
        if p.mu2 and p.anchor is not None:
            gD = gD - p.mu2 * data_regularizer_grad(ev.D, p.anchor)
        grads = TangentPair(gD, gP)
        if self.grad_hook is not None:
            grads = self.grad_hook(grads)
        return grads

    def gradient(self, ev: Evaluation) -> TangentPair:
        return riemannian_grad(ev.D, ev.P, self.euclidean_grads(ev))


def euclidean_grad_D(X, D, codes: CodeBatch, pair: StructurePair, P, params: SparLowParams,
                     prior: ElasticNetPrior) -> np.ndarray:
    """``grad f(D) - mu1 grad g_c(D) - mu2 grad g_d(D)`` at certified codes."""
    problem = SparLowProblem(X, pair, prior, params)
    ev = problem.evaluate(D, P, codes)
    return problem.euclidean_grads(ev).dict_dir


def riemannian_grad(D, P, euclidean: TangentPair) -> TangentPair:
    return project_tangent(D, P, euclidean)


def evaluate_J(X, D, P, pair: StructurePair, prior: ElasticNetPrior,
               params: SparLowParams) -> ObjectiveReport:
    return SparLowProblem(X, pair, prior, params).evaluate(D, P).report
