"""Finite-difference verification of the analytic gradients and the code Jacobian."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ValidationError
from .graphs import SEMI_SUPERVISED, GraphSpec, build_pair
from .manifold import (
    TangentPair,
    normalize_columns,
    product_metric,
    product_retract,
    project_tangent,
    random_dictionary,
    random_projector,
)
from .objective import SparLowParams, SparLowProblem
from .sparse import ElasticNetPrior, batch_encode, code_jacobian_apply, sparse_encode

MAX_ENTRIES = 4096
MAX_RESAMPLE = 10
CHECKS = ("grad_D", "grad_P", "riemannian", "jacobian")


@dataclass
class GradCheckReport:
    errors: dict[str, float]
    probes: int
    unstable: int = 0
    tol: float = 1e-4
    details: dict[str, list[float]] = field(default_factory=dict)

    @property
    def passed(self) -> bool:
        return all(err <= self.tol for err in self.errors.values())

    def lines(self) -> list[str]:
        out = [f"{name}\t{self.errors[name]:.3e}\t{'ok' if self.errors[name] <= self.tol else 'FAIL'}"
               for name in CHECKS]
        out.append(f"probes\t{self.probes}\tsupport-unstable\t{self.unstable}")
        return out


def default_instance(seed: int = 0, m: int = 8, n: int = 20, classes: int = 3,
                     semi: bool = False) -> tuple[np.ndarray, np.ndarray]:
    """Unit-norm Gaussian samples with cyclic labels; every fourth sample unlabeled if ``semi``."""
    rng = np.random.default_rng(seed)
    X = normalize_columns(rng.standard_normal((m, n)))
    labels = np.arange(n) % classes
    if semi:
        labels[::4] = -1
    return X, labels


def _rel(a, b) -> float:
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    scale = max(np.linalg.norm(a), np.linalg.norm(b), 1e-12)
    return float(np.linalg.norm(a - b) / scale)


def check_grad(X, labels, spec: GraphSpec, atoms: int = 12, dim: int = 3,
               prior: ElasticNetPrior | None = None, sigma: float = 1e-3, mu1: float = 2.5e-4,
               mu2: float = 5e-3, seed: int = 0, probes: int = 3, h: float = 1e-6,
               corrupt: bool = False, backend: str | None = None) -> GradCheckReport:
    """Compare analytic derivatives with central differences at a random point.

    The dictionary, anchor and projector are drawn from ``seed``.  Dictionary
    probes whose ``+-h`` encodings change some support are redrawn up to ten
    times.  ``corrupt`` perturbs the Euclidean gradients to show the harness
    detects errors.
    """
    X = np.asarray(X, dtype=float)
    m, n = X.shape
    if m * atoms > MAX_ENTRIES:
        raise ValidationError(f"check-grad is limited to m*r <= {MAX_ENTRIES} (got {m * atoms})")
    prior = prior or ElasticNetPrior()
    rng = np.random.default_rng(seed)
    D = random_dictionary(m, atoms, rng)
    anchor = normalize_columns(D + 0.1 * rng.standard_normal(D.shape))
    P = random_projector(atoms, dim, rng)
    codes = batch_encode(X, D, prior, backend=backend)
    pair = build_pair(spec, X, codes, labels)
    problem = SparLowProblem(X, pair, prior, SparLowParams(sigma, mu1, mu2, anchor), backend)
    if corrupt:
        problem.grad_hook = lambda G: TangentPair(1.5 * G.dict_dir + 0.1, 1.5 * G.proj_dir)
    ev = problem.evaluate(D, P, codes)
    egrad = problem.euclidean_grads(ev)
    rgrad = project_tangent(D, P, egrad)
    signature = codes.support_signature()

    def stable(Dp, Dm):
        return (batch_encode(X, Dp, prior, backend=backend).support_signature() == signature
                and batch_encode(X, Dm, prior, backend=backend).support_signature() == signature)

    def draw_direction(make):
        nonlocal unstable
        for _ in range(MAX_RESAMPLE):
            H = make()
            Dp, Dm = H.probe(h), H.probe(-h)
            if stable(Dp, Dm):
                return H
        unstable += 1
        return H

    class _DictProbe:
        def __init__(self, Xi, tangent=None):
            self.Xi, self.tangent = Xi, tangent

        def probe(self, t):
            if self.tangent is not None:
                return product_retract(D, P, self.tangent, t)[0]
            return D + t * self.Xi

    unstable = 0
    det = {name: [] for name in CHECKS}
    for _ in range(probes):
        H = draw_direction(lambda: _DictProbe(rng.standard_normal(D.shape)))
        fd = (problem.value(H.probe(h), P) - problem.value(H.probe(-h), P)) / (2 * h)
        det["grad_D"].append(_rel(np.vdot(egrad.dict_dir, H.Xi), fd))

        S = rng.standard_normal(P.shape)
        S = S + S.T
        fd = (problem.value(D, P + h * S) - problem.value(D, P - h * S)) / (2 * h)
        det["grad_P"].append(_rel(np.vdot(egrad.proj_dir, S), fd))

        def make_tangent():
            T = project_tangent(D, P, TangentPair(rng.standard_normal(D.shape), rng.standard_normal(P.shape)))
            return _DictProbe(None, T)

        T = draw_direction(make_tangent)
        vals = [problem.value(*product_retract(D, P, T.tangent, s)) for s in (h, -h)]
        det["riemannian"].append(_rel(product_metric(rgrad, T.tangent), (vals[0] - vals[1]) / (2 * h)))

        det["jacobian"].append(jacobian_probe(X, D, prior, rng, h, backend)[0])

    errors = {name: max(vals) for name, vals in det.items()}
    return GradCheckReport(errors, probes, unstable, details=det)


def jacobian_probe(X, D, prior: ElasticNetPrior, rng: np.random.Generator, h: float = 1e-6,
                   backend: str | None = None) -> tuple[float, bool]:
    """One support-stable probe of the code Jacobian; returns ``(relative error, stable)``.

    A sample with nonempty support and a direction are drawn from ``rng``.
    """
    X = np.asarray(X, dtype=float)
    codes = batch_encode(X, D, prior, backend=backend)
    usable = [i for i, s in enumerate(codes.supports) if s.size]
    if not usable:
        raise ValidationError("no sample has a nonempty support")
    i = int(rng.choice(usable))
    x, code = X[:, i], codes[i]
    for _ in range(MAX_RESAMPLE):
        H = rng.standard_normal(D.shape)
        plus = sparse_encode(x, D + h * H, prior, backend=backend)
        minus = sparse_encode(x, D - h * H, prior, backend=backend)
        ok = np.array_equal(plus.support, code.support) and np.array_equal(minus.support, code.support)
        if ok:
            break
    fd = (plus.values - minus.values) / (2 * h)
    return _rel(code_jacobian_apply(x, D, code, H, prior), fd), ok


def check_variant(variant: str, seed: int = 0, **kwargs) -> GradCheckReport:
    """Run :func:`check_grad` on the seeded default instance (m=8, r=12, l=3, n=20)."""
    spec = GraphSpec(variant=variant, knn=kwargs.pop("knn", 4), k1=kwargs.pop("k1", 2), k2=kwargs.pop("k2", 4))
    X, labels = default_instance(seed, semi=spec.variant in SEMI_SUPERVISED)
    return check_grad(X, labels, spec, seed=seed, **kwargs)
