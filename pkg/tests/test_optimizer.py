import io

import numpy as np
import pytest

from sparlow.errors import ValidationError
from sparlow.graphs import GraphSpec, build_pair
from sparlow.manifold import TangentPair, random_dictionary, random_projector
from sparlow.objective import SparLowParams, SparLowProblem
from sparlow.optimizer import CGConfig, beta_kh, line_search, optimize
from sparlow.pipeline import trace_ratio_iteration
from sparlow.sparse import ElasticNetPrior, batch_encode


def test_line_search_quadratic_surrogate():
    res = line_search(lambda t: (-((t - 1.0) ** 2), None), -1.0, 2.0, t0=1.0)
    assert not res.stagnated
    assert res.t == pytest.approx(1.0, abs=1e-3)
    res = line_search(lambda t: (-((t - 1.0) ** 2), None), -1.0, 2.0, t0=0.01)
    assert res.t == pytest.approx(1.0, abs=1e-3)
    res = line_search(lambda t: (-((t - 1.0) ** 2), None), -1.0, 2.0, t0=50.0)
    assert res.t == pytest.approx(1.0, abs=1e-3)
    assert res.evals <= 40


def test_line_search_constant_stagnates():
    res = line_search(lambda t: (3.0, None), 3.0, 1.0)
    assert res.stagnated and res.t == 0.0
    assert res.evals <= 40


def test_line_search_ascent_increases():
    res = line_search(lambda t: (np.log1p(t), None), 0.0, 1.0)
    assert res.value > 0.0
    assert res.value >= 1e-4 * res.t


def test_line_search_failed_evaluations_count_as_minus_inf():
    from sparlow.errors import GuardViolationError

    def curve(t):
        if t > 0.3:
            raise GuardViolationError("out of domain")
        return t, None

    res = line_search(curve, 0.0, 1.0)
    assert 0 < res.t <= 0.3


def test_beta_kh_examples(rng):
    G = TangentPair(rng.standard_normal((3, 4)), np.zeros((4, 4)))
    assert beta_kh(G, G, 2.0) == 0.0
    g_old = TangentPair(np.array([[1.0, 0.0]]), np.zeros((1, 1)))
    g_new = TangentPair(np.array([[0.0, 3.0]]), np.zeros((1, 1)))
    assert beta_kh(g_new, g_old, 1.0) == pytest.approx(9.0)
    assert beta_kh(g_old, TangentPair(np.array([[2.0, 0.0]]), np.zeros((1, 1))), 1.0) == 0.0
    assert beta_kh(g_new, g_old, 0.0) == 0.0


def problem_instance(seed, variant="lda", n=30, m=6, r=8, l=2, mu=(2.5e-4, 5e-3)):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((m, n))
    X /= np.linalg.norm(X, axis=0)
    D = random_dictionary(m, r, rng)
    prior = ElasticNetPrior(0.1, 1e-3)
    pair = build_pair(GraphSpec(variant, knn=5, k1=3, k2=5), X, batch_encode(X, D, prior), np.arange(n) % 3)
    params = SparLowParams(1e-3, mu[0], mu[1], D.copy())
    return SparLowProblem(X, pair, prior, params), D, random_projector(r, l, rng)


def test_optimize_monotone_and_on_manifold():
    problem, D, P = problem_instance(0)
    res = optimize(problem, D, P, CGConfig(max_iters=30, debug=True))
    J = res.trace.J_values
    assert J[-1] >= J[0]
    assert res.trace.is_monotone(1e-12)
    np.testing.assert_allclose(np.linalg.norm(res.D, axis=0), 1.0, atol=1e-10)
    assert np.linalg.norm(res.P @ res.P - res.P) <= 1e-8
    assert abs(np.trace(res.P) - 2) <= 1e-8


def test_steepest_ascent_mode_monotone():
    problem, D, P = problem_instance(1, "laplacian")
    res = optimize(problem, D, P, CGConfig(max_iters=20, force_beta_zero=True))
    assert all(rec.beta == 0.0 for rec in res.trace.records)
    assert res.trace.is_monotone(1e-12)


def test_zero_gradient_returns_inputs():
    problem, D, P = problem_instance(2, "pca")
    problem.grad_hook = lambda G: TangentPair(0 * G.dict_dir, 0 * G.proj_dir)
    res = optimize(problem, D, P, CGConfig())
    assert res.trace.iterations == 0
    assert res.trace.stop_reason == "grad_tol"
    np.testing.assert_array_equal(res.D, D)
    np.testing.assert_array_equal(res.P, P)


def test_deterministic():
    a = optimize(*problem_instance(3), CGConfig(max_iters=10))
    b = optimize(*problem_instance(3), CGConfig(max_iters=10))
    assert [r.J for r in a.trace.records] == [r.J for r in b.trace.records]
    np.testing.assert_array_equal(a.D, b.D)


def test_frozen_dictionary_reaches_trace_ratio():
    for seed in range(3):
        problem, D, P = problem_instance(seed, "lda", r=6)
        ev = problem.evaluate(D, np.zeros((6, 6)))
        _, lambdas = trace_ratio_iteration(ev.A, ev.B, 2, problem.params.sigma)
        problem.params.mu1 = problem.params.mu2 = 0.0
        res = optimize(problem, D, P, CGConfig(fix_dictionary=True, grad_tol=1e-10, step_tol=1e-14, max_iters=500))
        np.testing.assert_array_equal(res.D, D)
        assert res.trace.records[-1].J == pytest.approx(lambdas[-1], abs=1e-6)


def test_verbose_lines():
    buf = io.StringIO()
    optimize(*problem_instance(4), CGConfig(max_iters=3, verbose=True), stream=buf)
    lines = buf.getvalue().splitlines()
    assert len(lines) == 4
    assert all(len(line.split("\t")) == 5 for line in lines)


def test_config_validation():
    with pytest.raises(ValidationError):
        CGConfig(step_tol=0.0)
    with pytest.raises(ValidationError):
        CGConfig(ls_max_evals=0)
