import logging

import numpy as np
import pytest
import scipy.sparse as sp
from sklearn.base import clone

from conftest import random_spd
from podeig.eigensolve import dense_generalized_eig, smallest_eigenpairs
from podeig.exceptions import DomainError, InvalidArgumentError
from podeig.mesh_fem import AffineOperator, evaluate_operator
from podeig.pod import pod_basis
from podeig.rom import (
    ReducedEigensolver,
    RomResult,
    evaluate_test_suite,
    eigenvector_error,
    fem_reference_solver,
    load_reduced_model,
    online_solve,
    project_operators,
    results_to_csv,
    save_reduced_model,
    solve_at_samples,
)


def _toy_operator(rng, n=40):
    A0, A1, B0 = random_spd(rng, n), random_spd(rng, n), random_spd(rng, n)
    return AffineOperator(
        [sp.csr_matrix(A0), sp.csr_matrix(A1)], [sp.csr_matrix(B0)],
        [lambda mu: 1.0, lambda mu: mu[0]], [lambda mu: 1.0], 1,
    )


def test_coordinate_basis_gives_submatrices(rng):
    op = _toy_operator(rng, 12)
    idx = [2, 5, 7]
    model = project_operators(op, np.eye(12)[:, idx])
    for red, full in zip(model.a_components, op.a_components):
        np.testing.assert_array_equal(red, full.toarray()[np.ix_(idx, idx)])


def test_one_dimensional_space_is_rayleigh_quotient(rng):
    op = _toy_operator(rng, 20)
    v = rng.standard_normal((20, 1))
    v /= np.linalg.norm(v)
    model = project_operators(op, v)
    A, B = evaluate_operator(op, [0.7])
    res = online_solve(model, [0.7], 1)
    u = v[:, 0]
    np.testing.assert_allclose(res.eigenvalues[0], (u @ A @ u) / (u @ B @ u), rtol=1e-13)


def test_reduced_pencil_is_spd(rng):
    op = _toy_operator(rng, 50)
    V, _ = np.linalg.qr(rng.standard_normal((50, 8)))
    A, B = project_operators(op, V).evaluate([2.0])
    assert np.all(np.linalg.eigvalsh(A) > 0)
    assert np.all(np.linalg.eigvalsh(B) > 0)
    np.testing.assert_array_equal(A, A.T)


def test_min_max_upper_bound(rng):
    op = _toy_operator(rng, 50)
    V, _ = np.linalg.qr(rng.standard_normal((50, 10)))
    model = project_operators(op, V)
    for mu in ([0.1], [1.0], [5.0]):
        A, B = evaluate_operator(op, mu)
        full = dense_generalized_eig(A.toarray(), B.toarray()).eigenvalues
        red = online_solve(model, mu, 10).eigenvalues
        assert np.all(red >= full[:10] * (1 - 1e-12))


def test_containing_eigenvector_reproduces_it(rng):
    op = _toy_operator(rng, 40)
    A, B = evaluate_operator(op, [0.5])
    sol = smallest_eigenpairs(A, B, 2)
    V, _ = np.linalg.qr(np.column_stack([sol.eigenvectors[:, 0], rng.standard_normal((40, 4))]))
    res = online_solve(project_operators(op, V), [0.5], 1)
    assert abs(res.eigenvalues[0] - sol.eigenvalues[0]) <= 1e-10 * sol.eigenvalues[0]
    assert eigenvector_error(sol.eigenvectors[:, 0], res.eigenvectors[:, 0], B) <= 1e-8


def test_projection_consistency(rng):
    op = _toy_operator(rng, 30)
    V, _ = np.linalg.qr(rng.standard_normal((30, 6)))
    model = project_operators(op, V)
    mu = [1.3]
    A, B = evaluate_operator(op, mu)
    Ar, Br = model.evaluate(mu)
    np.testing.assert_allclose(Ar, V.T @ A @ V, atol=1e-12 * abs(A).max())
    np.testing.assert_allclose(Br, V.T @ B @ V, atol=1e-12 * abs(B).max())


def test_rotation_invariance(rng):
    op = _toy_operator(rng, 30)
    V, _ = np.linalg.qr(rng.standard_normal((30, 6)))
    Q, _ = np.linalg.qr(rng.standard_normal((6, 6)))
    a = online_solve(project_operators(op, V), [0.9], 4).eigenvalues
    b = online_solve(project_operators(op, V @ Q), [0.9], 4).eigenvalues
    np.testing.assert_allclose(a, b, rtol=1e-9)


def test_k_larger_than_basis(rng):
    op = _toy_operator(rng, 10)
    model = project_operators(op, np.eye(10)[:, :2])
    with pytest.raises(InvalidArgumentError, match="too small"):
        online_solve(model, [1.0], 3)
    with pytest.raises(InvalidArgumentError):
        online_solve(model, [1.0], 0)


def test_basis_row_mismatch(rng):
    op = _toy_operator(rng, 10)
    with pytest.raises(InvalidArgumentError):
        project_operators(op, np.eye(11)[:, :2])


def test_nearly_singular_reduced_mass_is_regularized(rng, caplog):
    op = _toy_operator(rng, 10)
    model = project_operators(op, np.eye(10)[:, :3])
    model.b_components[0][:] = np.diag([1.0, 1.0, 0.0])
    with caplog.at_level(logging.WARNING):
        res = online_solve(model, [1.0], 1)
    assert np.isfinite(res.eigenvalues).all()
    assert "not positive definite" in caplog.text


def test_snapshot_points_reproduced(small_two_param):
    _, op = small_two_param
    train = np.array([[0.3, 0.4], [0.7, 1.1], [1.2, 0.6], [0.5, 0.9]])
    sols = solve_at_samples(op, train, 1)
    est = ReducedEigensolver(op, n_eigenvectors=1).fit(train)
    pred = est.predict(train)
    for sol, lam in zip(sols, pred[:, 0]):
        assert abs(lam - sol.eigenvalues[0]) / sol.eigenvalues[0] <= 1e-6


def test_parallel_solves_match_serial(small_two_param):
    _, op = small_two_param
    pts = [[0.3, 0.4], [1.0, 0.5], [0.6, 1.3]]
    a = solve_at_samples(op, pts, 2, n_jobs=1)
    b = solve_at_samples(op, pts, 2, n_jobs=3)
    for x, y in zip(a, b):
        np.testing.assert_array_equal(x.eigenvalues, y.eigenvalues)


def test_sample_errors_carry_parameter(small_two_param):
    _, op = small_two_param
    with pytest.raises(DomainError, match=r"mu=\[1.5, 0.4\]"):
        solve_at_samples(op, [[0.3, 0.4], [1.5, 0.4]], 1)


def test_empty_test_suite(small_two_param):
    _, op = small_two_param
    est = ReducedEigensolver(op).fit([[0.5, 0.5], [1.0, 1.0]])
    assert evaluate_test_suite(est.model_, None, [], 1) == []
    assert results_to_csv([], parameter_dim=2) == \
        "scheme,seed,N,mu0,mu1,eig_index,lambda_fem,lambda_rom,rel_error\n"


def test_results_csv_rows(small_two_param):
    _, op = small_two_param
    est = ReducedEigensolver(op, n_eigenvectors=2).fit([[0.5, 0.5], [1.0, 1.0], [0.3, 1.2]])
    tests = [[0.4, 0.6], [0.9, 0.9], [1.1, 0.5]]
    res = evaluate_test_suite(est.model_, fem_reference_solver(op), tests, 2)
    text = results_to_csv(res, "lhs", 0, est.n_components_, 2)
    lines = text.splitlines()
    assert len(lines) == 1 + 3 * 2
    row = lines[1].split(",")
    assert row[:3] == ["lhs", "0", str(est.n_components_)]
    assert row[5] == "1"
    assert float(row[7]) >= float(row[6]) * (1 - 1e-12)
    rel = abs(float(row[7]) - float(row[6])) / float(row[6])
    assert abs(float(row[8]) - rel) <= 1e-6 * max(rel, 1e-300) + 1e-300


def test_relative_errors_property():
    r = RomResult(np.array([1.0]), np.array([2.0, 4.1]), reference=np.array([2.0, 4.0]))
    np.testing.assert_allclose(r.relative_errors, [0.0, 0.025])
    assert RomResult(np.array([1.0]), np.array([1.0])).relative_errors is None


def test_save_load_roundtrip(tmp_path, small_two_param):
    _, op = small_two_param
    est = ReducedEigensolver(op, n_eigenvectors=2).fit([[0.5, 0.5], [1.0, 1.0], [0.3, 1.2]])
    save_reduced_model(est.model_, tmp_path / "model")
    back = load_reduced_model(tmp_path / "model")
    assert back.problem == "two_param" and back.n_basis == est.n_components_
    mu = [0.8, 0.7]
    np.testing.assert_array_equal(online_solve(back, mu, 2).eigenvalues,
                                  online_solve(est.model_, mu, 2).eigenvalues)
    with pytest.raises(DomainError):
        online_solve(back, [2.0, 0.7], 1)


def test_estimator_api(small_two_param, caplog):
    _, op = small_two_param
    est = ReducedEigensolver(op, n_eigenvectors=1, n_eigenvalues=2, eps_tol=1e-6)
    params = est.get_params()
    assert params["n_eigenvalues"] == 2 and params["eps_tol"] == 1e-6
    assert clone(est).get_params()["operator"].n_dofs == op.n_dofs
    train = [[0.3, 0.4], [0.7, 1.1], [1.2, 0.4], [1.2, 1.1], [0.5, 0.7]]
    with caplog.at_level(logging.WARNING):
        est.fit(train)
        pred = est.predict([[0.6, 0.6]])
    assert pred.shape == (1, 2)
    assert "requesting 2 eigenvalues" in caplog.text
    assert est.score([[0.6, 0.6]]) <= 0.0
    assert est.snapshots_.shape == (op.n_dofs, 5)


def test_gram_estimator_agrees(small_two_param):
    _, op = small_two_param
    train = [[0.3, 0.4], [0.7, 1.1], [1.2, 0.4], [1.2, 1.1]]
    a = ReducedEigensolver(op).fit(train).predict([[0.8, 0.8]])
    b = ReducedEigensolver(op, pod_method="gram").fit(train).predict([[0.8, 0.8]])
    np.testing.assert_allclose(a, b, rtol=1e-9)


def test_wrong_parameter_columns(small_two_param):
    _, op = small_two_param
    with pytest.raises(InvalidArgumentError):
        ReducedEigensolver(op).fit([[0.5, 0.5, 0.5]])
    with pytest.raises(InvalidArgumentError):
        ReducedEigensolver().fit([[0.5, 0.5]])


def test_pod_of_training_snapshots_spans_them(small_two_param):
    _, op = small_two_param
    sols = solve_at_samples(op, [[0.3, 0.4], [1.2, 1.1]], 1)
    b = pod_basis(np.column_stack([s.eigenvectors[:, 0] for s in sols]))
    assert b.n_basis == 2


def test_indefinite_reduced_mass_still_fails(rng):
    from podeig.exceptions import DefinitenessError
    op = _toy_operator(rng, 10)
    model = project_operators(op, np.eye(10)[:, :3])
    model.b_components[0][:] = np.diag([1.0, 1.0, -1.0])
    with pytest.raises(DefinitenessError):
        online_solve(model, [1.0], 1)
