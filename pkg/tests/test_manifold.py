import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sparlow.errors import DimensionError, FactorizationError, SingularStepError
from sparlow.manifold import (
    TangentPair,
    dictionary_transport,
    grassmann_retract,
    grassmann_transport,
    product_metric,
    project_tangent,
    project_tangent_grassmann,
    project_tangent_sphere,
    projector_defects,
    random_dictionary,
    random_projector,
    reproject_projector,
    sphere_retract,
    sphere_transport,
    unique_qr,
)

S2 = np.sqrt(2.0)
seeds = st.integers(0, 2**32 - 1)


def tangent_at(D, P, rng):
    return project_tangent(D, P, TangentPair(rng.standard_normal(D.shape), rng.standard_normal(P.shape)))


@pytest.mark.parametrize(
    "t, expected",
    [(0.0, [1.0, 0.0]), (1.0, [1 / S2, 1 / S2]), (2.0, [1 / np.sqrt(5), 2 / np.sqrt(5)])],
)
def test_sphere_retract_examples(t, expected):
    np.testing.assert_allclose(sphere_retract([1.0, 0.0], [0.0, 1.0], t), expected, atol=1e-15)


def test_sphere_retract_singular():
    with pytest.raises(SingularStepError):
        sphere_retract([1.0, 0.0], [-1.0, 0.0], 1.0)


@pytest.mark.parametrize(
    "M, Q, R",
    [
        (np.eye(2), np.eye(2), np.eye(2)),
        ([[1, -1], [1, 1]], np.array([[1, -1], [1, 1]]) / S2, S2 * np.eye(2)),
        ([[2, 0], [0, 3]], np.eye(2), np.diag([2.0, 3.0])),
    ],
)
def test_unique_qr_examples(M, Q, R):
    Qh, Rh = unique_qr(M)
    np.testing.assert_allclose(Qh, Q, atol=1e-14)
    np.testing.assert_allclose(Rh, R, atol=1e-14)


def test_unique_qr_rank_deficient():
    with pytest.raises(FactorizationError):
        unique_qr([[1.0, 2.0], [2.0, 4.0]])


@given(seeds)
def test_unique_qr_positive_diagonal(seed):
    M = np.random.default_rng(seed).standard_normal((5, 5)) + 3 * np.eye(5)
    Q, R = unique_qr(M)
    assert np.all(np.diag(R) > 0)
    np.testing.assert_allclose(Q @ R, M, atol=1e-12)
    np.testing.assert_allclose(Q.T @ Q, np.eye(5), atol=1e-12)


def test_grassmann_retract_examples():
    P = np.diag([1.0, 0.0])
    np.testing.assert_allclose(grassmann_retract(P, np.zeros((2, 2)), 5.0), P)
    Psi = np.array([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_allclose(grassmann_retract(P, Psi, 1.0), np.full((2, 2), 0.5), atol=1e-15)


def test_grassmann_retract_first_order(rng):
    P = random_projector(6, 2, rng)
    Psi = project_tangent_grassmann(P, rng.standard_normal((6, 6)))
    ratios = []
    for t in (1e-2, 1e-3, 1e-4):
        ratios.append(np.linalg.norm(grassmann_retract(P, Psi, t) - (P + t * Psi)) / t**2)
    assert max(ratios) < 10 * max(1.0, np.linalg.norm(Psi) ** 2)
    assert ratios[-1] == pytest.approx(ratios[-2], rel=0.1)


def test_product_metric_examples(rng):
    D = random_dictionary(3, 4, rng)
    P = random_projector(4, 2, rng)
    H = tangent_at(D, P, rng)
    assert product_metric(TangentPair.zeros_like(D, P), H) == 0.0
    assert product_metric(H, H) > 0
    e = TangentPair(np.array([[1.0], [0.0]]), np.zeros((1, 1)))
    assert product_metric(e, e) == 1.0
    with pytest.raises(DimensionError):
        product_metric(e, H)


def test_project_tangent_sphere_examples(rng):
    np.testing.assert_allclose(project_tangent_sphere([[1.0], [0.0]], [[3.0], [4.0]]), [[0.0], [4.0]])
    D = random_dictionary(5, 3, rng)
    np.testing.assert_allclose(project_tangent_sphere(D, D * [1.0, -2.0, 3.0]), 0.0, atol=1e-15)
    G = project_tangent_sphere(D, rng.standard_normal((5, 3)))
    np.testing.assert_allclose(project_tangent_sphere(D, G), G, atol=1e-15)
    np.testing.assert_allclose(np.einsum("ij,ij->j", D, G), 0.0, atol=1e-14)


def test_project_tangent_grassmann_examples(rng):
    P = random_projector(5, 2, rng)
    np.testing.assert_allclose(project_tangent_grassmann(P, P), 0.0, atol=1e-14)
    np.testing.assert_allclose(project_tangent_grassmann(P, np.eye(5)), 0.0, atol=1e-14)
    J = np.array([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_allclose(project_tangent_grassmann(np.diag([1.0, 0.0]), J), J)


def test_project_tangent_grassmann_symmetrizes(rng):
    P = random_projector(5, 2, rng)
    G = rng.standard_normal((5, 5))
    Psi = project_tangent_grassmann(P, G)
    np.testing.assert_allclose(Psi, project_tangent_grassmann(P, 0.5 * (G + G.T)), atol=1e-15)
    np.testing.assert_allclose(Psi, P @ Psi + Psi @ P, atol=1e-12)


def test_sphere_transport_examples():
    d, xi = np.array([1.0, 0.0]), np.array([0.0, 1.0])
    np.testing.assert_allclose(sphere_transport(d, xi, 1.0, np.zeros(2)), 0.0)
    # at t=0 the map is (I + d d^T) applied to a tangent vector, which leaves it unchanged
    np.testing.assert_allclose(sphere_transport(d, xi, 0.0, xi), [0.0, 1.0])
    np.testing.assert_allclose(sphere_transport(d, xi, 1.0, xi), [1 / (2 * S2), 3 / (2 * S2)], atol=1e-15)


def test_grassmann_transport_examples(rng):
    P = np.diag([1.0, 0.0])
    J = np.array([[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_allclose(grassmann_transport(P, J, 1.0, np.zeros((2, 2))), 0.0)
    np.testing.assert_allclose(grassmann_transport(P, J, 0.0, J), J)
    moved = grassmann_transport(P, J, 1.0, J)
    np.testing.assert_allclose(moved, np.diag([-1.0, 1.0]), atol=1e-15)
    P1 = grassmann_retract(P, J, 1.0)
    np.testing.assert_allclose(moved, P1 @ moved + moved @ P1, atol=1e-14)


@settings(max_examples=50, deadline=None)
@given(seeds, st.integers(2, 6), st.integers(2, 7))
def test_retractions_stay_on_manifold(seed, m, r):
    rng = np.random.default_rng(seed)
    l = int(rng.integers(1, r))
    D = random_dictionary(m, r, rng)
    P = random_projector(r, l, rng)
    H = tangent_at(D, P, rng)
    t = float(rng.uniform(-2, 2))
    D1 = D + t * H.dict_dir
    D1 /= np.linalg.norm(D1, axis=0)
    np.testing.assert_allclose(np.linalg.norm(D1, axis=0), 1.0, atol=1e-12)
    defects = projector_defects(grassmann_retract(P, H.proj_dir, t), l)
    assert defects["symmetry"] <= 1e-12
    assert defects["idempotency"] <= 1e-10
    assert defects["trace"] <= 1e-10


def test_retraction_derivative(rng):
    d = random_dictionary(4, 1, rng)[:, 0]
    xi = project_tangent_sphere(d[:, None], rng.standard_normal((4, 1)))[:, 0]
    errs = [np.linalg.norm((sphere_retract(d, xi, h) - d) / h - xi) for h in (1e-2, 1e-3, 1e-4)]
    assert errs[2] < errs[1] < errs[0]
    P = random_projector(5, 2, rng)
    Psi = project_tangent_grassmann(P, rng.standard_normal((5, 5)))
    errs = [np.linalg.norm((grassmann_retract(P, Psi, h) - P) / h - Psi) for h in (1e-2, 1e-3, 1e-4)]
    assert errs[2] < errs[1] < errs[0]


@given(seeds)
def test_transport_linear_and_tangent(seed):
    rng = np.random.default_rng(seed)
    D = random_dictionary(4, 5, rng)
    P = random_projector(5, 2, rng)
    H, A, B = (tangent_at(D, P, rng) for _ in range(3))
    a, b = rng.standard_normal(2)
    t = 0.7
    lhs = dictionary_transport(D, H.dict_dir, t, a * A.dict_dir + b * B.dict_dir)
    rhs = a * dictionary_transport(D, H.dict_dir, t, A.dict_dir) + b * dictionary_transport(D, H.dict_dir, t, B.dict_dir)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)
    lhs = grassmann_transport(P, H.proj_dir, t, a * A.proj_dir + b * B.proj_dir)
    rhs = a * grassmann_transport(P, H.proj_dir, t, A.proj_dir) + b * grassmann_transport(P, H.proj_dir, t, B.proj_dir)
    np.testing.assert_allclose(lhs, rhs, atol=1e-12)
    P1 = grassmann_retract(P, H.proj_dir, t)
    moved = grassmann_transport(P, H.proj_dir, t, A.proj_dir)
    np.testing.assert_allclose(moved, P1 @ moved + moved @ P1, atol=1e-10)


@given(seeds)
def test_projection_idempotent_self_adjoint(seed):
    rng = np.random.default_rng(seed)
    D = random_dictionary(4, 5, rng)
    P = random_projector(5, 3, rng)

    def raw():
        G = rng.standard_normal((5, 5))
        return TangentPair(rng.standard_normal((4, 5)), G + G.T)

    X, Y = raw(), raw()
    PX = project_tangent(D, P, X)
    np.testing.assert_allclose(project_tangent(D, P, PX).dict_dir, PX.dict_dir, atol=1e-12)
    np.testing.assert_allclose(project_tangent(D, P, PX).proj_dir, PX.proj_dir, atol=1e-12)
    assert product_metric(PX, Y) == pytest.approx(product_metric(X, project_tangent(D, P, Y)), abs=1e-12)


def test_reproject_projector(rng):
    P = random_projector(6, 2, rng)
    drifted = P + 1e-7 * rng.standard_normal((6, 6))
    fixed = reproject_projector(drifted, 2)
    assert max(projector_defects(fixed, 2).values()) < 1e-12
    assert np.linalg.norm(fixed - P) < 1e-6
