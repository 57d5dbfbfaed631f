"""Acceptance suite.

Each test prints exactly one ``PASS``/``FAIL`` line with the measured value and
the pinned tolerance, then asserts it.  The desk-scale experiments (criteria 8
and 9) are marked ``slow``; deselect them with ``-m "not slow"``.
"""

from __future__ import annotations

import time

import numpy as np
import pytest
import scipy.linalg

from sparlow.gradcheck import check_variant, default_instance, jacobian_probe
from sparlow.graphs import (
    GraphSpec,
    build_lda,
    build_mfa,
    build_mvr,
    build_pair,
    build_sda,
    build_slap,
    build_smvr,
    evaluate_pair,
    neighbor_graph,
)
from sparlow.manifold import normalize_columns, random_dictionary, random_projector
from sparlow.objective import SparLowParams, SparLowProblem
from sparlow.optimizer import CGConfig, optimize
from sparlow.pipeline import Model, TrainConfig, embed, evaluate_1nn, train, trace_ratio_iteration
from sparlow.sparse import ElasticNetPrior, batch_encode, elastic_net_objective, kkt_residual, sparse_encode


@pytest.fixture
def verdict(capsys):
    def emit(criterion: str, passed: bool, detail: str) -> None:
        with capsys.disabled():
            print(f"\n[{'PASS' if passed else 'FAIL'}] {criterion}: {detail}")
        assert passed, f"{criterion}: {detail}"

    return emit


def small_problem(seed, variant, n=30, m=6, r=8, l=2, mu=(2.5e-4, 5e-3)):
    rng = np.random.default_rng(seed)
    X = normalize_columns(rng.standard_normal((m, n)))
    D = random_dictionary(m, r, rng)
    prior = ElasticNetPrior(0.1, 1e-3)
    spec = GraphSpec(variant, knn=5, k1=3, k2=5)
    pair = build_pair(spec, X, batch_encode(X, D, prior), np.arange(n) % 3)
    params = SparLowParams(1e-3, mu[0], mu[1], D.copy())
    return SparLowProblem(X, pair, prior, params), D, random_projector(r, l, rng)


# --------------------------------------------------------------------------- 1-7


def test_c1_gradient_oracle(verdict):
    tol, budget = 1e-4, 60.0
    start = time.perf_counter()
    worst, failing = 0.0, []
    for variant in ("pca", "lda", "laplacian", "mvr"):
        for seed in range(20):
            report = check_variant(variant, seed=seed, atoms=12, dim=3, h=1e-6)
            err = max(report.errors[k] for k in ("grad_D", "grad_P", "riemannian"))
            worst = max(worst, err)
            if err > tol:
                failing.append((variant, seed))
    elapsed = time.perf_counter() - start
    verdict("C1 gradient oracle (80 instances)", worst <= tol and elapsed < budget,
            f"max rel err {worst:.2e} (tol {tol:g}), {len(failing)} failing, {elapsed:.1f}s (< {budget:g}s)")


def test_c2_code_jacobian(verdict):
    tol, budget = 1e-5, 10.0
    prior = ElasticNetPrior()
    start = time.perf_counter()
    errs, unstable = [], 0
    for seed in range(50):
        rng = np.random.default_rng(seed)
        X, _ = default_instance(seed)
        D = random_dictionary(X.shape[0], 12, rng)
        err, stable = jacobian_probe(X, D, prior, rng, h=1e-6)
        errs.append(err)
        unstable += not stable
    elapsed = time.perf_counter() - start
    worst = max(errs)
    verdict("C2 code Jacobian (50 probes)", worst <= tol and unstable == 0 and elapsed < budget,
            f"max rel err {worst:.2e} (tol {tol:g}), {unstable} support-unstable, {elapsed:.2f}s (< {budget:g}s)")


def _prox_oracle(x, D, prior, iters=20000):
    """Accelerated proximal gradient followed by an exact solve on the found support."""
    step = 1.0 / np.linalg.norm(D, 2) ** 2
    phi = y = np.zeros(D.shape[1])
    theta = 1.0
    for _ in range(iters):
        z = y - step * (D.T @ (D @ y - x))
        new = np.sign(z) * np.maximum(np.abs(z) - step * prior.lambda1, 0.0) / (1.0 + 2.0 * step * prior.lambda2)
        theta_new = 0.5 * (1.0 + np.sqrt(1.0 + 4.0 * theta**2))
        y = new + ((theta - 1.0) / theta_new) * (new - phi)
        phi, theta = new, theta_new
    L = np.flatnonzero(np.abs(phi) > 1e-10)
    if L.size:
        K = D[:, L].T @ D[:, L] + 2.0 * prior.lambda2 * np.eye(L.size)
        sol = np.linalg.solve(K, D[:, L].T @ x - prior.lambda1 * np.sign(phi[L]))
        if np.all(np.sign(sol) == np.sign(phi[L])):
            polished = np.zeros_like(phi)
            polished[L] = sol
            if elastic_net_objective(x, D, polished, prior) <= elastic_net_objective(x, D, phi, prior):
                phi = polished
    return phi


def test_c3_kkt_certification(verdict):
    tol_kkt, tol_gap = 1e-8, 1e-8
    worst_kkt, worst_gap = 0.0, 0.0
    for seed in range(50):
        rng = np.random.default_rng(1000 + seed)
        D = random_dictionary(8, 12, rng)
        X = normalize_columns(rng.standard_normal((8, 20)))
        prior = ElasticNetPrior(float(rng.uniform(0.05, 0.4)), float(rng.uniform(1e-4, 1e-2)))
        batch = batch_encode(X, D, prior)
        for j in range(X.shape[1]):
            worst_kkt = max(worst_kkt, kkt_residual(X[:, j], D, batch.codes[:, j], prior))
        x = X[:, 0]
        code = sparse_encode(x, D, prior)
        worst_kkt = max(worst_kkt, kkt_residual(x, D, code, prior))
        oracle = _prox_oracle(x, D, prior)
        gap = abs(elastic_net_objective(x, D, code.values, prior) - elastic_net_objective(x, D, oracle, prior))
        worst_gap = max(worst_gap, gap)
    verdict("C3 KKT certification (50 instances)", worst_kkt <= tol_kkt and worst_gap <= tol_gap,
            f"max KKT residual {worst_kkt:.2e} (tol {tol_kkt:g}), max oracle gap {worst_gap:.2e} (tol {tol_gap:g})")


def test_c4_manifold_invariants(verdict):
    tol_norm, tol_proj = 1e-10, 1e-8
    l = 3
    problem, D, P = small_problem(7, "laplacian", n=40, m=8, r=12, l=l)
    # debug mode also checks the invariants after every accepted step
    res = optimize(problem, D, P, CGConfig(max_iters=100, step_tol=1e-300, grad_tol=1e-300, debug=True))
    norm_err = float(np.max(np.abs(np.linalg.norm(res.D, axis=0) - 1.0)))
    idem = float(np.linalg.norm(res.P @ res.P - res.P))
    tr = abs(float(np.trace(res.P)) - l)
    iters = res.trace.iterations
    ok = iters == 100 and norm_err <= tol_norm and idem <= tol_proj and tr <= tol_proj
    verdict("C4 manifold invariants", ok,
            f"{iters} iterations, atom norm err {norm_err:.1e} (tol {tol_norm:g}), "
            f"||P^2-P|| {idem:.1e}, |tr P - l| {tr:.1e} (tol {tol_proj:g})")


def test_c5_monotonicity(verdict):
    tol = 1e-12
    worst, runs = 0.0, 0
    for variant in ("pca", "lda", "laplacian", "mvr", "mfa", "lle"):
        for seed in range(3):
            for beta_zero in (False, True):
                problem, D, P = small_problem(seed, variant)
                res = optimize(problem, D, P, CGConfig(max_iters=30, force_beta_zero=beta_zero))
                drops = -np.diff(res.trace.J_values)
                worst = max(worst, float(drops.max(initial=0.0)))
                runs += 1
    verdict("C5 monotone ascent (CG and beta=0)", worst <= tol,
            f"{runs} runs, largest decrease {worst:.1e} (tol {tol:g})")


def test_c6_trace_ratio_oracle(verdict):
    tol = 1e-6
    worst, nonmonotone, runs = 0.0, 0, 0
    for variant in ("pca", "lda", "laplacian", "mvr", "mfa"):
        for seed in range(4):
            problem, D, P = small_problem(seed, variant, r=6, l=2, mu=(0.0, 0.0))
            ev = problem.evaluate(D, np.zeros((6, 6)))
            _, lambdas = trace_ratio_iteration(ev.A, ev.B, 2, problem.params.sigma)
            nonmonotone += bool(np.any(np.diff(lambdas) < 0))
            res = optimize(problem, D, P, CGConfig(fix_dictionary=True, grad_tol=1e-10, step_tol=1e-14,
                                                   max_iters=500))
            worst = max(worst, abs(res.evaluation.report.f_value - lambdas[-1]))
            runs += 1
    verdict("C6 trace-ratio oracle (r=6, l=2)", worst <= tol and nonmonotone == 0,
            f"{runs} runs, max |f_CG - lambda*| {worst:.1e} (tol {tol:g}), {nonmonotone} non-monotone lambda sequences")


def test_c7_degenerate_reductions(verdict):
    tol = 1e-12
    worst = 0.0
    for seed in range(5):
        rng = np.random.default_rng(seed)
        X = normalize_columns(rng.standard_normal((5, 18)))
        lab = np.arange(18) % 3
        g = neighbor_graph(X, 4)
        codes = rng.standard_normal((6, 18))
        Phi = rng.standard_normal((6, 18))
        lda, sda = build_lda(lab), build_sda(lab, g, 0.0)
        A_l, B_l = evaluate_pair(lda, Phi)
        A_s, B_s = evaluate_pair(sda, Phi)
        # sda's denominator is the total scatter, i.e. lda's within plus between
        pairs = [(A_s, A_l), (B_s, B_l + A_l)]
        mfa, slap = build_mfa(codes, lab, 2, 4), build_slap(codes, lab, g, 0.0, 0.0, 2, 4)
        pairs += list(zip(evaluate_pair(slap, Phi), evaluate_pair(mfa, Phi)))
        mvr, smvr = build_mvr(lab, 0.3), build_smvr(lab, g, 0.3, 0.0)
        pairs += list(zip(evaluate_pair(smvr, Phi), evaluate_pair(mvr, Phi)))
        worst = max(worst, max(float(np.max(np.abs(a - b))) for a, b in pairs))
    verdict("C7 degenerate reductions (sda/lda, slap/mfa, smvr/mvr)", worst <= tol,
            f"max entry difference {worst:.1e} (tol {tol:g})")


# --------------------------------------------------------------------------- 8-9

DESK_SEEDS = range(10)
DESK_ITERS = 50
DESK_SEP = 0.6


def _mixture(rng, centers, n):
    lab = np.repeat(np.arange(centers.shape[1]), n // centers.shape[1])
    X = centers[:, lab] + rng.standard_normal((centers.shape[0], lab.size))
    return normalize_columns(X), lab


def _raw_lda(X, lab, l):
    mu = X.mean(axis=1, keepdims=True)
    Sw = np.zeros((X.shape[0], X.shape[0]))
    Sb = np.zeros_like(Sw)
    for c in np.unique(lab):
        Xc = X[:, lab == c]
        mc = Xc.mean(axis=1, keepdims=True)
        Sw += (Xc - mc) @ (Xc - mc).T
        Sb += Xc.shape[1] * (mc - mu) @ (mc - mu).T
    _, V = scipy.linalg.eigh(Sb, Sw + 1e-8 * np.trace(Sw) * np.eye(len(Sw)))
    return V[:, ::-1][:, :l]


def _desk_run(seed, mu1, mu2):
    rng = np.random.default_rng(seed)
    centers = DESK_SEP * rng.standard_normal((20, 3))
    X, lab = _mixture(rng, centers, 300)
    Xt, labt = _mixture(rng, centers, 300)
    config = TrainConfig(atoms=40, dim=2, spec=GraphSpec("lda"), mu1=mu1, mu2=mu2,
                         cg=CGConfig(max_iters=DESK_ITERS), seed=seed)
    result = train(X, lab, config)
    sequential = Model.from_point(result.D0, result.P0, config.prior, result.model.params, config.spec)
    W = _raw_lda(X, lab, 2)
    G = result.model.D.T @ result.model.D
    return {
        "raw": evaluate_1nn(W.T @ X, lab, W.T @ Xt, labt),
        "sequential": evaluate_1nn(embed(sequential, X), lab, embed(sequential, Xt), labt),
        "joint": evaluate_1nn(embed(result.model, X), lab, embed(result.model, Xt), labt),
        "coherence": float(np.max(np.abs(G - np.diag(np.diag(G))))),
        "monotone": result.trace.is_monotone(1e-12),
    }


@pytest.fixture(scope="module")
def desk_default():
    start = time.perf_counter()
    runs = [_desk_run(seed, 2.5e-4, 5e-3) for seed in DESK_SEEDS]
    return runs, time.perf_counter() - start


@pytest.fixture(scope="module")
def desk_unregularized():
    return [_desk_run(seed, 0.0, 0.0) for seed in DESK_SEEDS]


@pytest.mark.slow
def test_c8_desk_scale_lda(verdict, desk_default):
    runs, elapsed = desk_default
    budget = 300.0
    med = {k: float(np.median([run[k] for run in runs])) for k in ("raw", "sequential", "joint")}
    ok = med["joint"] >= med["sequential"] >= med["raw"] and med["joint"] >= med["raw"] and elapsed < budget
    verdict("C8 desk-scale LDA (10 seeds, 50 CG iterations)", ok,
            f"median 1NN joint {med['joint']:.3f}, sequential {med['sequential']:.3f}, raw LDA {med['raw']:.3f} "
            f"(need joint >= sequential and both >= raw), {elapsed:.0f}s (< {budget:g}s)")


@pytest.mark.slow
def test_c9_regularizer_stability(verdict, desk_default, desk_unregularized):
    runs, _ = desk_default
    limit = 0.999
    sd_with = float(np.std([run["joint"] for run in runs]))
    sd_without = float(np.std([run["joint"] for run in desk_unregularized]))
    coherence = max(run["coherence"] for run in runs)
    monotone = all(run["monotone"] for run in runs + desk_unregularized)
    verdict("C9 regularizer stability", sd_with <= sd_without and coherence <= limit and monotone,
            f"accuracy std {sd_with:.4f} with vs {sd_without:.4f} without, "
            f"max coherence {coherence:.4f} (<= {limit}), all runs monotone: {monotone}")
