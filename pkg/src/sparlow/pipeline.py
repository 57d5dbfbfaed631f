"""Initialization, training, embedding, evaluation and model persistence."""

from __future__ import annotations

import logging
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field

import numpy as np

from .errors import FactorizationError, GuardViolationError, SeedingError, SparLowError, ValidationError
from .graphs import SEMI_SUPERVISED, SUPERVISED, GraphSpec, LabelSet, StructurePair, as_labelset, build_pair
from .io import read_archive, write_archive, write_csv_matrix
from .manifold import normalize_columns, projector_from_basis, top_eigvecs
from .objective import ObjectiveReport, SparLowParams, SparLowProblem
from .optimizer import CGConfig, CGTrace, optimize
from .sparse import CodeBatch, ElasticNetPrior, batch_encode

log = logging.getLogger(__name__)

LS_RIDGE = 1e-8
TRACE_RATIO_TOL = 1e-10
TRACE_RATIO_ITERS = 100
UNIT_EIG_TOL = 1e-6


@contextmanager
def stage(name: str):
    """Tag any library error raised inside the block with the pipeline stage."""
    try:
        yield
    except SparLowError as err:
        if err.stage is None:
            err.stage = name
        raise


# --------------------------------------------------------------------------- initialization


@dataclass
class DictionaryInit:
    D: np.ndarray
    codes: CodeBatch
    errors: list[tuple[float, float]] = field(default_factory=list)
    """Per alternation: reconstruction error before and after the least-squares update."""


def _distinct_columns(X) -> np.ndarray:
    _, idx = np.unique(np.round(X.T, 12), axis=0, return_index=True)
    return np.sort(idx)


def learn_dictionary(X, r: int, prior: ElasticNetPrior, iters: int = 10, seed: int = 0,
                     backend: str | None = None) -> DictionaryInit:
    """Alternate sparse coding and the ridge least-squares dictionary update.

    Atoms start as ``r`` random distinct data columns.  Atoms that no sample uses
    keep their previous value.
    """
    X = np.asarray(X, dtype=float)
    if r < 1:
        raise ValidationError("the dictionary needs at least one atom")
    if iters < 1:
        raise ValidationError("iters must be >= 1")
    if r > X.shape[1]:
        log.warning("more atoms (%d) than samples (%d)", r, X.shape[1])
    distinct = _distinct_columns(X)
    if distinct.size < r:
        raise SeedingError(f"only {distinct.size} distinct data columns for {r} atoms")
    rng = np.random.default_rng(seed)
    D = normalize_columns(X[:, rng.choice(distinct, size=r, replace=False)])
    history = []
    codes = None
    for _ in range(iters):
        codes = batch_encode(X, D, prior, backend=backend)
        Phi = codes.codes
        before = float(np.linalg.norm(X - D @ Phi))
        gram = Phi @ Phi.T + LS_RIDGE * np.eye(r)
        D_ls = np.linalg.solve(gram, Phi @ X.T).T
        after = float(np.linalg.norm(X - D_ls @ Phi))
        history.append((before, after))
        norms = np.linalg.norm(D_ls, axis=0)
        alive = norms > 1e-12
        D = D.copy()
        D[:, alive] = D_ls[:, alive] / norms[alive]
    codes = batch_encode(X, D, prior, backend=backend)
    return DictionaryInit(D, codes, history)


def init_dictionary(X, r: int, prior: ElasticNetPrior, iters: int = 10, seed: int = 0,
                    backend: str | None = None) -> np.ndarray:
    return learn_dictionary(X, r, prior, iters, seed, backend).D


def class_atom_counts(labels, r: int) -> dict[int, int]:
    """Split ``r`` atoms across classes proportionally to class size (largest remainder, min 1)."""
    ls = as_labelset(labels)
    classes, counts = np.unique(ls.labels[ls.labeled], return_counts=True)
    c = classes.size
    if r < c:
        raise ValidationError(f"{r} atoms cannot cover {c} classes")
    share = 1 + (r - c) * counts / counts.sum()
    base = np.floor(share).astype(int)
    rest = r - base.sum()
    order = np.argsort(-(share - base), kind="stable")
    base[order[:rest]] += 1
    return {int(k): int(v) for k, v in zip(classes, base)}


def class_dictionary(X, labels, r: int, prior: ElasticNetPrior, iters: int = 10, seed: int = 0,
                     backend: str | None = None) -> tuple[np.ndarray, dict[int, slice]]:
    """Concatenate per-class dictionaries; returns ``D`` and the atom block of each class."""
    ls = as_labelset(labels)
    sizes = class_atom_counts(ls, r)
    blocks, parts, start = {}, [], 0
    for k, (cls, size) in enumerate(sizes.items()):
        Xc = X[:, ls.labels == cls]
        parts.append(learn_dictionary(Xc, size, prior, iters, seed + k, backend).D)
        blocks[cls] = slice(start, start + size)
        start += size
    return np.hstack(parts), blocks


def trace_ratio_iteration(A, B, l: int, sigma: float, tol: float = TRACE_RATIO_TOL,
                          max_iters: int = TRACE_RATIO_ITERS) -> tuple[np.ndarray, list[float]]:
    """Fixed point of ``lambda -> tr(PA)/(tr(PB)+sigma)``, ``P`` = top-``l`` eigenspace of ``A - lambda B``.

    Starts from the top-``l`` eigenspace of ``A`` and returns ``(P, lambdas)``.
    """
    A = 0.5 * (np.asarray(A, dtype=float) + np.asarray(A, dtype=float).T)
    B = 0.5 * (np.asarray(B, dtype=float) + np.asarray(B, dtype=float).T)
    r = A.shape[0]
    if not 1 <= l <= r:
        raise ValidationError(f"projection rank must satisfy 1 <= l <= r (l={l}, r={r})")

    def ratio(P):
        den = float(np.trace(P @ B)) + sigma
        if not den > 0:
            raise GuardViolationError(f"trace-ratio denominator {den:.3e} is not positive")
        return float(np.trace(P @ A)) / den

    try:
        P = projector_from_basis(top_eigvecs(A, l)[1])
        lambdas = [ratio(P)]
        for _ in range(max_iters):
            P_new = projector_from_basis(top_eigvecs(A - lambdas[-1] * B, l)[1])
            lam = ratio(P_new)
            if lam < lambdas[-1]:
                # roundoff at the fixed point; keep the better projector
                break
            P = P_new
            lambdas.append(lam)
            if abs(lambdas[-1] - lambdas[-2]) <= tol:
                break
    except np.linalg.LinAlgError as err:
        raise FactorizationError(f"eigensolver failed: {err}") from None
    return P, lambdas


def init_projection(A, B, l: int, sigma: float) -> np.ndarray:
    return trace_ratio_iteration(A, B, l, sigma)[0]


# --------------------------------------------------------------------------- model


def projector_basis(P, l: int) -> np.ndarray:
    """Orthonormal basis of ``range(P)``, descending eigenvalue order.

    Each column is flipped so its largest-magnitude entry is positive.
    """
    w, U = top_eigvecs(P, l)
    if np.any(np.abs(w - 1.0) > UNIT_EIG_TOL):
        raise GuardViolationError(f"projector eigenvalues {w} are not all 1")
    idx = np.argmax(np.abs(U), axis=0)
    signs = np.sign(U[idx, np.arange(U.shape[1])])
    signs[signs == 0] = 1.0
    return U * signs


@dataclass
class Model:
    D: np.ndarray
    P: np.ndarray
    U: np.ndarray
    prior: ElasticNetPrior
    params: SparLowParams
    spec: GraphSpec

    @classmethod
    def from_point(cls, D, P, prior, params, spec) -> "Model":
        l = int(round(np.trace(P)))
        return cls(np.asarray(D, dtype=float), np.asarray(P, dtype=float), projector_basis(P, l),
                   prior, params, spec)

    @property
    def atoms(self) -> int:
        return self.D.shape[1]

    @property
    def dim(self) -> int:
        return self.U.shape[1]

    def config(self) -> dict:
        conf = {k: v for k, v in asdict(self.spec).items() if k != "targets" and v is not None}
        conf.update(lambda1=float(self.prior.lambda1), lambda2=float(self.prior.lambda2),
                    sigma=float(self.params.sigma), mu1=float(self.params.mu1), mu2=float(self.params.mu2),
                    atoms=self.atoms, dim=self.dim)
        return conf

    def save(self, path) -> None:
        mats = {"DICT": self.D, "PROJ": self.P, "BASS": self.U}
        if self.params.anchor is not None:
            mats["ANCH"] = self.params.anchor
        write_archive(path, self.config(), mats)

    @classmethod
    def load(cls, path) -> "Model":
        conf, mats = read_archive(path)
        try:
            prior = ElasticNetPrior(float(conf["lambda1"]), float(conf["lambda2"]))
            params = SparLowParams(float(conf["sigma"]), float(conf["mu1"]), float(conf["mu2"]), mats.get("ANCH"))
            spec_kwargs = {}
            for key, typ in (("variant", str), ("knn", int), ("heat_t", float), ("k1", int), ("k2", int),
                             ("alpha", float), ("alpha1", float), ("alpha2", float), ("mu_mvr", float),
                             ("rho1", float), ("rho2", float)):
                if key in conf:
                    spec_kwargs[key] = typ(conf[key])
            return cls(mats["DICT"], mats["PROJ"], mats["BASS"], prior, params, GraphSpec(**spec_kwargs))
        except (KeyError, ValueError) as err:
            from .errors import DataFormatError

            raise DataFormatError(f"{path}: incomplete model file ({err})") from None


def embed(model: Model, X_new, backend: str | None = None) -> np.ndarray:
    """``U^T Phi`` for the codes of ``X_new`` under the model dictionary."""
    codes = batch_encode(X_new, model.D, model.prior, backend=backend)
    return model.U.T @ codes.codes


def evaluate_1nn(train_embed, train_labels, test_embed, test_labels) -> float:
    """1-nearest-neighbor accuracy; ties go to the lowest training index."""
    Ytr = np.asarray(train_embed, dtype=float)
    Yte = np.asarray(test_embed, dtype=float)
    ltr = np.asarray(getattr(train_labels, "labels", train_labels))
    lte = np.asarray(getattr(test_labels, "labels", test_labels))
    if Ytr.shape[1] == 0 or Yte.shape[1] == 0:
        raise ValidationError("1NN evaluation needs nonempty training and test sets")
    if Ytr.shape[1] != ltr.size or Yte.shape[1] != lte.size:
        raise ValidationError("embedding and label counts differ")
    sq_tr = np.einsum("ij,ij->j", Ytr, Ytr)
    sq_te = np.einsum("ij,ij->j", Yte, Yte)
    d2 = sq_te[:, None] + sq_tr[None, :] - 2.0 * Yte.T @ Ytr
    nearest = np.argmin(d2, axis=1)
    return float(np.mean(ltr[nearest] == lte))


def export_features(model: Model, out_path) -> np.ndarray:
    """Write ``D U`` (``m x l``) as CSV and return it."""
    F = model.D @ model.U
    write_csv_matrix(out_path, F)
    return F


# --------------------------------------------------------------------------- training


@dataclass
class TrainConfig:
    atoms: int = 40
    dim: int = 2
    spec: GraphSpec = field(default_factory=GraphSpec)
    prior: ElasticNetPrior = field(default_factory=ElasticNetPrior)
    sigma: float = 1e-3
    mu1: float = 2.5e-4
    mu2: float = 5e-3
    init_iters: int = 10
    cg: CGConfig = field(default_factory=CGConfig)
    seed: int = 0
    backend: str | None = None


@dataclass
class TrainResult:
    model: Model
    trace: CGTrace
    initial: ObjectiveReport
    final: ObjectiveReport
    D0: np.ndarray
    P0: np.ndarray
    codes0: CodeBatch
    pair: StructurePair
    trace_ratio: list[float]
    blocks: dict[int, slice] | None = None


def train(X, labels, config: TrainConfig) -> TrainResult:
    """Initialize ``D`` and ``P``, freeze the structure pair, then run CG.

    Supervised variants start from per-class dictionaries; the others learn one
    dictionary on all samples.  Errors are tagged with the failing stage.
    """
    X = np.asarray(X, dtype=float)
    spec = config.spec
    variant = spec.variant
    with stage("validate"):
        if X.ndim != 2 or X.shape[1] < 2:
            raise ValidationError("need a data matrix with at least two samples")
        if labels is not None:
            labels = as_labelset(labels)
            if len(labels) != X.shape[1]:
                raise ValidationError(f"{len(labels)} labels for {X.shape[1]} samples")
        if variant in SUPERVISED + SEMI_SUPERVISED and labels is None:
            raise ValidationError(f"variant {variant!r} requires labels")
        if variant in SUPERVISED and not np.all(labels.labeled):
            raise ValidationError(f"variant {variant!r} requires every sample labeled")
        if not 1 <= config.dim <= config.atoms:
            raise ValidationError(f"dim must satisfy 1 <= dim <= atoms (dim={config.dim}, atoms={config.atoms})")

    blocks = None
    with stage("init_dictionary"):
        if variant in SUPERVISED:
            D0, blocks = class_dictionary(X, labels, config.atoms, config.prior, config.init_iters,
                                          config.seed, config.backend)
        else:
            D0 = init_dictionary(X, config.atoms, config.prior, config.init_iters, config.seed, config.backend)
    with stage("encode"):
        codes0 = batch_encode(X, D0, config.prior, backend=config.backend)
    with stage("graph"):
        pair = build_pair(spec, X, codes0, labels)
    params = SparLowParams(config.sigma, config.mu1, config.mu2, D0.copy())
    problem = SparLowProblem(X, pair, config.prior, params, config.backend)
    with stage("init_projection"):
        ev0 = problem.evaluate(D0, np.zeros((config.atoms, config.atoms)), codes0)
        P0, lambdas = trace_ratio_iteration(ev0.A, ev0.B, config.dim, config.sigma)
        initial = problem.evaluate(D0, P0, codes0).report
    with stage("optimize"):
        result = optimize(problem, D0, P0, config.cg)
    with stage("model"):
        model = Model.from_point(result.D, result.P, config.prior, params, spec)
    return TrainResult(model, result.trace, initial, result.evaluation.report, D0, P0, codes0, pair,
                       lambdas, blocks)
