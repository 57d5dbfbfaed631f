"""Structure-matrix generators for the nine trace-quotient variants.

Every variant is a :class:`StructurePair` of two :class:`MatrixGenerator`
objects that map codes ``Phi`` (``r x n``) to ``r x r`` matrices:

* ``quadratic``        ``Phi Z Phi^T``
* ``scaled_identity``  ``tr(Phi Z Phi^T) I_r``
* ``ridge``            ``Phi Z Phi^T + shift I_r``

The ``n x n`` structure matrices ``Z`` are built once (from raw data, labels or
initial codes) and frozen afterwards.  Sparse kNN graphs are kept as
``scipy.sparse`` arrays.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .errors import DegenerateLabelsError, DimensionError, ValidationError

log = logging.getLogger(__name__)

VARIANTS = ("pca", "lle", "laplacian", "lda", "mfa", "mvr", "sda", "slap", "smvr")
SUPERVISED = ("lda", "mfa", "mvr")
SEMI_SUPERVISED = ("sda", "slap", "smvr")
_ALIASES = {"lap": "laplacian"}

PSD_TOL = 1e-10
LLE_REG = 1e-6


def canonical_variant(name: str) -> str:
    name = _ALIASES.get(name, name)
    if name not in VARIANTS:
        raise ValidationError(f"unknown variant {name!r}; expected one of {', '.join(VARIANTS)}")
    return name


@dataclass
class GraphSpec:
    """Variant choice plus every graph/label hyperparameter.

    Parameters not used by the chosen variant are ignored.
    """

    variant: str = "pca"
    knn: int = 10
    heat_t: float | None = None
    k1: int = 5
    k2: int = 20
    alpha: float = 0.1
    alpha1: float = 0.1
    alpha2: float = 0.01
    mu_mvr: float = 0.1
    rho1: float = 0.1
    rho2: float = 0.1
    targets: np.ndarray | None = None

    def __post_init__(self):
        self.variant = canonical_variant(self.variant)
        for name in ("knn", "k1", "k2"):
            if int(getattr(self, name)) < 1:
                raise ValidationError(f"{name} must be a positive integer")
        if self.heat_t is not None and not self.heat_t > 0:
            raise ValidationError("heat_t must be positive")
        for name in ("alpha", "alpha1", "alpha2", "mu_mvr", "rho1", "rho2"):
            if getattr(self, name) < 0:
                raise ValidationError(f"{name} must be nonnegative")


@dataclass
class LabelSet:
    """Integer labels, ``-1`` marks an unlabeled sample."""

    labels: np.ndarray

    def __post_init__(self):
        lab = np.asarray(self.labels)
        if lab.ndim != 1:
            raise ValidationError("labels must be a vector")
        if lab.size and not np.all(np.equal(np.mod(lab, 1), 0)):
            raise ValidationError("labels must be integers")
        lab = lab.astype(np.int64)
        if np.any(lab < -1):
            raise ValidationError("labels must be -1 (unlabeled) or nonnegative class ids")
        self.labels = lab

    @property
    def labeled(self) -> np.ndarray:
        return self.labels >= 0

    @property
    def classes(self) -> np.ndarray:
        return np.unique(self.labels[self.labeled])

    @property
    def n_classes(self) -> int:
        return int(self.classes.size)

    def __len__(self):
        return self.labels.size


def as_labelset(labels) -> LabelSet:
    return labels if isinstance(labels, LabelSet) else LabelSet(np.asarray(labels))


def _codes_matrix(codes) -> np.ndarray:
    return np.asarray(getattr(codes, "codes", codes), dtype=float)


def _right_mul(Phi, Z):
    """``Phi @ Z`` for dense or sparse ``Z``."""
    return np.asarray((Z.T @ Phi.T).T)


def _dense(Z) -> np.ndarray:
    return Z.toarray() if sp.issparse(Z) else np.asarray(Z, dtype=float)


@dataclass
class MatrixGenerator:
    kind: str
    Z: object
    shift: float = 0.0

    def __post_init__(self):
        if self.kind not in ("quadratic", "scaled_identity", "ridge"):
            raise ValidationError(f"unknown generator kind {self.kind!r}")
        if self.Z.shape[0] != self.Z.shape[1]:
            raise DimensionError("structure matrix must be square")
        dense = _dense(self.Z)
        if not np.all(np.isfinite(dense)):
            raise ValidationError("structure matrix has non-finite entries")

    @property
    def n(self) -> int:
        return self.Z.shape[0]

    def _check(self, Phi):
        if Phi.ndim != 2 or Phi.shape[1] != self.n:
            raise DimensionError(f"codes have {Phi.shape[-1]} columns, structure expects {self.n}")

    def __call__(self, Phi) -> np.ndarray:
        Phi = np.asarray(Phi, dtype=float)
        self._check(Phi)
        r = Phi.shape[0]
        M = _right_mul(Phi, self.Z) @ Phi.T
        if self.kind == "scaled_identity":
            return np.trace(M) * np.eye(r)
        M = 0.5 * (M + M.T)
        if self.kind == "ridge":
            M = M + self.shift * np.eye(r)
        return M

    def trace_gradient(self, Phi, P) -> np.ndarray:
        """Gradient of ``Phi -> tr(P M(Phi))`` as an ``r x n`` matrix (``P`` symmetric)."""
        Phi = np.asarray(Phi, dtype=float)
        self._check(Phi)
        sym = _right_mul(Phi, self.Z) + _right_mul(Phi, self.Z.T)
        if self.kind == "scaled_identity":
            return np.trace(P) * sym
        return P @ sym

    def min_eigenvalue(self) -> float:
        Zd = _dense(self.Z)
        return float(np.linalg.eigvalsh(0.5 * (Zd + Zd.T))[0]) if self.n else 0.0


@dataclass
class StructurePair:
    """Numerator/denominator generators of one variant."""

    A: MatrixGenerator
    B: MatrixGenerator
    variant: str = ""
    info: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.A.n != self.B.n:
            raise DimensionError("numerator and denominator act on different sample counts")
        lam = self.B.min_eigenvalue()
        if lam < -PSD_TOL:
            raise ValidationError(
                f"denominator structure matrix is not positive semidefinite (min eigenvalue {lam:.3e})"
            )

    @property
    def n(self) -> int:
        return self.A.n


def evaluate_pair(pair: StructurePair, Phi) -> tuple[np.ndarray, np.ndarray]:
    """Materialize ``(A(Phi), B(Phi))``."""
    Phi = _codes_matrix(Phi)
    return pair.A(Phi), pair.B(Phi)


# --------------------------------------------------------------------------- helpers


def centering_matrix(k: int) -> np.ndarray:
    if k < 1:
        raise ValidationError("centering matrix needs k >= 1")
    return np.eye(k) - np.full((k, k), 1.0 / k)


def _sq_distances(points: np.ndarray) -> np.ndarray:
    """Pairwise squared distances between the rows of ``points``."""
    sq = np.einsum("ij,ij->i", points, points)
    D2 = sq[:, None] + sq[None, :] - 2.0 * points @ points.T
    np.maximum(D2, 0.0, out=D2)
    np.fill_diagonal(D2, 0.0)
    return D2


def _nearest(d2_row: np.ndarray, candidates: np.ndarray, k: int) -> np.ndarray:
    """``k`` nearest candidates; ties go to the lower index."""
    if k <= 0 or candidates.size == 0:
        return candidates[:0]
    order = np.argsort(d2_row[candidates], kind="stable")
    return candidates[order[:k]]


def _laplacian(Z) -> object:
    if sp.issparse(Z):
        Z = sp.csr_array(Z)
        Z.setdiag(0.0)
        Z.eliminate_zeros()
        deg = np.asarray(Z.sum(axis=1)).ravel()
        return sp.csr_array(sp.diags_array(deg) - Z)
    Z = np.array(Z, dtype=float)
    np.fill_diagonal(Z, 0.0)
    return np.diag(Z.sum(axis=1)) - Z


def _embed(M, index: np.ndarray, n: int) -> np.ndarray:
    """Zero-pad a matrix on the labeled index set into ``n x n``."""
    out = np.zeros((n, n))
    out[np.ix_(index, index)] = _dense(M)
    return out


# --------------------------------------------------------------------------- unsupervised


def build_pca(n: int) -> StructurePair:
    if n < 2:
        raise ValidationError("pca needs at least two samples")
    Pi = centering_matrix(n)
    return StructurePair(MatrixGenerator("quadratic", Pi), MatrixGenerator("scaled_identity", Pi), "pca")


def lle_weights(X, knn: int) -> sp.csr_array:
    """Barycentric reconstruction weights from the ``knn`` nearest data points.

    The local Gram matrix is regularized by ``1e-6 * trace(G)`` before solving.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[1]
    if not 1 <= knn < n:
        raise ValidationError(f"knn must satisfy 1 <= knn < n (knn={knn}, n={n})")
    D2 = _sq_distances(X.T)
    rows, cols, vals = [], [], []
    everyone = np.arange(n)
    for i in range(n):
        nbrs = _nearest(D2[i], everyone[everyone != i], knn)
        local = X[:, nbrs] - X[:, [i]]
        G = local.T @ local
        tr = np.trace(G)
        G[np.diag_indices_from(G)] += LLE_REG * tr if tr > 0 else LLE_REG
        w = np.linalg.solve(G, np.ones(knn))
        w /= w.sum()
        rows.extend([i] * knn)
        cols.extend(nbrs.tolist())
        vals.extend(w.tolist())
    return sp.csr_array((vals, (rows, cols)), shape=(n, n))


def lle_structure(W) -> np.ndarray:
    """``(I - W)^T (I - W)``."""
    M = np.eye(W.shape[0]) - _dense(W)
    return M.T @ M


def build_lle(X, knn: int) -> StructurePair:
    W = lle_weights(X, knn)
    Z = lle_structure(W)
    pair = StructurePair(MatrixGenerator("quadratic", Z), MatrixGenerator("scaled_identity", Z), "lle")
    pair.info["weights"] = W
    return pair


@dataclass
class NeighborGraph:
    """Symmetric kNN adjacency with heat-kernel weights on the raw data."""

    adjacency: np.ndarray
    sq_dist: np.ndarray
    heat_t: float
    weights: sp.csr_array
    laplacian: sp.csr_array

    @property
    def n(self) -> int:
        return self.adjacency.shape[0]

    def nonlocal_laplacian(self) -> np.ndarray:
        """Laplacian on the complement of the adjacency (heat-kernel weights)."""
        comp = ~self.adjacency
        np.fill_diagonal(comp, False)
        Z = np.where(comp, np.exp(-self.sq_dist / self.heat_t), 0.0)
        return _laplacian(Z)


def neighbor_graph(X, knn: int, heat_t: float | None = None) -> NeighborGraph:
    """kNN graph where ``i ~ j`` if either is among the other's ``knn`` nearest.

    ``heat_t`` defaults to the mean squared distance over adjacent pairs.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[1]
    if not 1 <= knn < n:
        raise ValidationError(f"knn must satisfy 1 <= knn < n (knn={knn}, n={n})")
    D2 = _sq_distances(X.T)
    adj = np.zeros((n, n), dtype=bool)
    everyone = np.arange(n)
    for i in range(n):
        adj[i, _nearest(D2[i], everyone[everyone != i], knn)] = True
    adj |= adj.T
    if heat_t is None:
        iu = np.triu_indices(n, 1)
        pair_d2 = D2[iu][adj[iu]]
        heat_t = float(pair_d2.mean()) if pair_d2.size and pair_d2.mean() > 0 else 1.0
    if not heat_t > 0:
        raise ValidationError("heat_t must be positive")
    Z = sp.csr_array(np.where(adj, np.exp(-D2 / heat_t), 0.0))
    return NeighborGraph(adj, D2, float(heat_t), Z, _laplacian(Z))


def build_laplacian(X, knn: int, heat_t: float | None = None) -> StructurePair:
    """Numerator ``Phi Z Phi^T`` with heat-kernel adjacency ``Z``, denominator ``Phi Y Phi^T`` with degrees ``Y``."""
    graph = neighbor_graph(X, knn, heat_t)
    Y = sp.csr_array(sp.diags_array(np.asarray(graph.weights.sum(axis=1)).ravel()))
    pair = StructurePair(MatrixGenerator("quadratic", graph.weights), MatrixGenerator("quadratic", Y), "laplacian")
    pair.info["graph"] = graph
    return pair


# --------------------------------------------------------------------------- supervised


def scatter_laplacians(labels) -> tuple[np.ndarray, np.ndarray]:
    """Within-class ``Lw`` and between-class ``Lb`` for fully labeled samples.

    ``Lw = blockdiag(Pi_{n_1}, ..., Pi_{n_c})`` and ``Lb = Cb Pi_c Cb^T`` with
    ``Cb = blockdiag(1_{n_i}/sqrt(n_i))``, written directly in sample order.
    """
    ls = as_labelset(labels)
    if not np.all(ls.labeled):
        raise ValidationError("scatter matrices need every sample labeled")
    classes = ls.classes
    if classes.size < 2:
        raise DegenerateLabelsError(f"need at least two classes, got {classes.size}")
    onehot = (ls.labels[:, None] == classes[None, :]).astype(float)
    counts = onehot.sum(axis=0)
    Cb = onehot / np.sqrt(counts)
    Lb = Cb @ centering_matrix(classes.size) @ Cb.T
    Lw = np.eye(len(ls)) - (onehot / counts) @ onehot.T
    return 0.5 * (Lw + Lw.T), 0.5 * (Lb + Lb.T)


def build_lda(labels) -> StructurePair:
    Lw, Lb = scatter_laplacians(labels)
    return StructurePair(MatrixGenerator("quadratic", Lb), MatrixGenerator("quadratic", Lw), "lda")


def mfa_adjacency(codes, labels, k1: int, k2: int) -> tuple[np.ndarray, np.ndarray]:
    """0/1 intra-class (``Z+``) and inter-class (``Z-``) neighbor graphs on code columns."""
    Phi = _codes_matrix(codes)
    ls = as_labelset(labels)
    n = len(ls)
    if Phi.shape[1] != n:
        raise DimensionError(f"{Phi.shape[1]} code columns but {n} labels")
    if not np.all(ls.labeled):
        raise ValidationError("MFA graphs need every sample labeled")
    if ls.n_classes < 2:
        raise DegenerateLabelsError("MFA needs at least two classes")
    if k2 >= n:
        raise ValidationError(f"k2 must be < n (k2={k2}, n={n})")
    lab = ls.labels
    D2 = _sq_distances(Phi.T)
    everyone = np.arange(n)
    Zp = np.zeros((n, n))
    Zm = np.zeros((n, n))
    clamped = False
    for i in range(n):
        same = everyone[(lab == lab[i]) & (everyone != i)]
        other = everyone[lab != lab[i]]
        k_same = min(k1, same.size)
        clamped |= k_same < k1
        Zp[i, _nearest(D2[i], same, k_same)] = 1.0
        Zm[i, _nearest(D2[i], other, min(k2, other.size))] = 1.0
    if clamped:
        log.warning("k1=%d exceeds the size of some class minus one; clamped per class", k1)
    return np.maximum(Zp, Zp.T), np.maximum(Zm, Zm.T)


def mfa_laplacians(codes, labels, k1: int, k2: int) -> tuple[np.ndarray, np.ndarray]:
    """``(L+, L-)``: intra-class and inter-class graph Laplacians."""
    Zp, Zm = mfa_adjacency(codes, labels, k1, k2)
    return _laplacian(Zp), _laplacian(Zm)


def build_mfa(codes, labels, k1: int, k2: int) -> StructurePair:
    Lp, Lm = mfa_laplacians(codes, labels, k1, k2)
    return StructurePair(MatrixGenerator("quadratic", Lm), MatrixGenerator("quadratic", Lp), "mfa")


def one_hot_targets(labels) -> np.ndarray:
    """``c x n`` indicator matrix with ``z_ij = 1`` when sample ``j`` is in class ``i``."""
    ls = as_labelset(labels)
    return (ls.classes[:, None] == ls.labels[None, :]).astype(float)


def build_mvr(labels=None, mu_mvr: float = 0.1, targets=None) -> StructurePair:
    """Numerator ``-Phi T^T T Phi^T``; denominator ``Phi Phi^T + mu I``."""
    if targets is None:
        if labels is None:
            raise ValidationError("mvr needs labels or a target matrix")
        ls = as_labelset(labels)
        if not np.all(ls.labeled):
            raise ValidationError("mvr needs every sample labeled")
        targets = one_hot_targets(ls)
    T = np.asarray(targets, dtype=float)
    if T.ndim != 2:
        raise ValidationError("targets must be a d x n matrix")
    n = T.shape[1]
    return StructurePair(
        MatrixGenerator("quadratic", -(T.T @ T)),
        MatrixGenerator("ridge", np.eye(n), float(mu_mvr)),
        "mvr",
    )


# --------------------------------------------------------------------------- semi-supervised


def _labeled_index(ls: LabelSet) -> np.ndarray:
    idx = np.flatnonzero(ls.labeled)
    if idx.size == 0:
        raise DegenerateLabelsError("no labeled samples")
    return idx


def _graph_laplacian(graph):
    return graph.laplacian if isinstance(graph, NeighborGraph) else graph


def build_sda(labels, graph, alpha: float) -> StructurePair:
    """Numerator ``Phi Lb~ Phi^T``; denominator ``Phi (Lt~ + alpha L) Phi^T`` with ``Lt = Lw + Lb``.

    ``~`` denotes zero padding from the labeled samples to all ``n`` samples.
    """
    ls = as_labelset(labels)
    idx = _labeled_index(ls)
    n = len(ls)
    L = _dense(_graph_laplacian(graph))
    if L.shape != (n, n):
        raise DimensionError("graph size does not match labels")
    Lw, Lb = scatter_laplacians(ls.labels[idx])
    A = _embed(Lb, idx, n)
    B = _embed(Lw + Lb, idx, n) + alpha * L
    pair = StructurePair(MatrixGenerator("quadratic", A), MatrixGenerator("quadratic", B), "sda")
    return pair


def build_slap(codes, labels, graph: NeighborGraph, alpha1: float, alpha2: float,
               k1: int, k2: int) -> StructurePair:
    """MFA Laplacians on the labeled codes plus the nonlocal data Laplacian."""
    ls = as_labelset(labels)
    idx = _labeled_index(ls)
    n = len(ls)
    Phi = _codes_matrix(codes)
    if Phi.shape[1] != n or graph.n != n:
        raise DimensionError("codes, labels and graph disagree on the sample count")
    Lp, Lm = mfa_laplacians(Phi[:, idx], ls.labels[idx], k1, k2)
    LN = graph.nonlocal_laplacian()
    A = _embed(Lm, idx, n) + alpha1 * LN
    B = _embed(Lp, idx, n) + alpha2 * LN
    return StructurePair(MatrixGenerator("quadratic", A), MatrixGenerator("quadratic", B), "slap")


def build_smvr(labels, graph, rho1: float, rho2: float, targets=None) -> StructurePair:
    """Numerator ``-Phi_l T^T T Phi_l^T``; denominator ``Phi_l Phi_l^T + rho1 I + rho2 Phi L Phi^T``.

    ``targets`` (``d x n_l``) are ordered like the labeled samples; one-hot
    class indicators are used when omitted.
    """
    ls = as_labelset(labels)
    idx = _labeled_index(ls)
    n = len(ls)
    L = _dense(_graph_laplacian(graph))
    if L.shape != (n, n):
        raise DimensionError("graph size does not match labels")
    T = one_hot_targets(ls.labels[idx]) if targets is None else np.asarray(targets, dtype=float)
    if T.shape[1] != idx.size:
        raise DimensionError(f"targets have {T.shape[1]} columns for {idx.size} labeled samples")
    A = _embed(-(T.T @ T), idx, n)
    S = np.zeros((n, n))
    S[idx, idx] = 1.0
    return StructurePair(
        MatrixGenerator("quadratic", A),
        MatrixGenerator("ridge", S + rho2 * L, float(rho1)),
        "smvr",
    )


# --------------------------------------------------------------------------- dispatch


def build_pair(spec: GraphSpec, X, codes0, labels=None) -> StructurePair:
    """Build the frozen pair for ``spec.variant``.

    LLE and Laplacian neighborhoods use the raw data ``X``; MFA neighborhoods use
    the initial codes.  Semi-supervised variants use the raw-data kNN graph.
    """
    X = np.asarray(X, dtype=float)
    n = X.shape[1]
    v = spec.variant
    if v == "pca":
        return build_pca(n)
    if v == "lle":
        return build_lle(X, spec.knn)
    if v == "laplacian":
        return build_laplacian(X, spec.knn, spec.heat_t)
    if labels is None:
        raise ValidationError(f"variant {v!r} requires labels")
    ls = as_labelset(labels)
    if len(ls) != n:
        raise ValidationError(f"{len(ls)} labels for {n} samples")
    if v == "lda":
        return build_lda(ls)
    if v == "mfa":
        return build_mfa(codes0, ls, spec.k1, spec.k2)
    if v == "mvr":
        return build_mvr(ls, spec.mu_mvr, spec.targets)
    graph = neighbor_graph(X, spec.knn, spec.heat_t)
    if v == "sda":
        return build_sda(ls, graph, spec.alpha)
    if v == "slap":
        return build_slap(codes0, ls, graph, spec.alpha1, spec.alpha2, spec.k1, spec.k2)
    return build_smvr(ls, graph, spec.rho1, spec.rho2, spec.targets)
