import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from oracles import principal_angles
from podeig.eigensolve import EigenSolution
from podeig.exceptions import InsufficientDataError, InvalidArgumentError
from podeig.pod import (
    POD,
    build_snapshot_matrix,
    energy_ratios,
    load_pod_basis,
    pod_basis,
    pod_basis_via_gram,
    save_pod_basis,
    truncation_rank,
)


def _low_rank(rng, n_h, n_k, r, decay=0.5):
    U, _ = np.linalg.qr(rng.standard_normal((n_h, r)))
    W, _ = np.linalg.qr(rng.standard_normal((n_k, r)))
    return U @ np.diag(decay ** np.arange(r)) @ W.T


def test_rank_one_snapshots():
    X = np.tile(np.array([3.0, 4.0, 0.0, 12.0])[:, None], (1, 5))
    b = pod_basis(X)
    assert b.n_basis == 1 and b.rank == 1
    # unit columns, five copies
    np.testing.assert_allclose(b.singular_values, [np.sqrt(5.0)], rtol=1e-14)
    np.testing.assert_allclose(b.basis[:, 0], np.array([3, 4, 0, 12]) / 13, rtol=1e-14)


def test_orthonormal_columns_keep_everything(rng):
    Q, _ = np.linalg.qr(rng.standard_normal((30, 6)))
    b = pod_basis(Q)
    assert b.n_basis == 6
    np.testing.assert_allclose(b.singular_values, 1.0, rtol=1e-12)


def test_truncation_rule():
    s = np.array([1.0, 1e-2, 1e-5])
    # energy after 1: 1/(1+1e-4+1e-10)
    assert truncation_rank(s, 1e-3) == 1
    assert truncation_rank(s, 1e-8) == 2
    assert truncation_rank(s, 1e-12) == 3
    np.testing.assert_allclose(energy_ratios(s)[-1], 1.0)
    with pytest.raises(InvalidArgumentError):
        truncation_rank(s, 0.0)


@given(st.integers(0, 10_000), st.floats(1e-12, 0.5))
@settings(max_examples=40, deadline=None)
def test_basis_size_is_minimal(seed, eps):
    rng = np.random.default_rng(seed)
    X = _low_rank(rng, 40, 12, 8, decay=0.3)
    b = pod_basis(X, eps_tol=eps)
    E = energy_ratios(b.singular_values)
    N = b.n_basis
    assert E[N - 1] >= 1 - eps
    if N > 1:
        assert E[N - 2] < 1 - eps
    V = b.basis
    np.testing.assert_allclose(V.T @ V, np.eye(N), atol=1e-10)


@pytest.mark.parametrize("seed", range(5))
def test_eckart_young(seed):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((200, 20))
    b = pod_basis(X, normalize=False, eps_tol=0.05)
    V = b.basis
    resid = np.linalg.norm(X - V @ (V.T @ X)) ** 2
    tail = np.sum(b.singular_values[b.n_basis:] ** 2)
    assert abs(resid - tail) <= 1e-9 * np.linalg.norm(X) ** 2


def test_projection_beats_random_subspaces(rng):
    X = _low_rank(rng, 60, 15, 10, decay=0.6)
    b = pod_basis(X, normalize=False, eps_tol=1e-2)
    N = b.n_basis
    err = np.linalg.norm(X - b.basis @ (b.basis.T @ X)) ** 2
    for _ in range(20):
        Q, _ = np.linalg.qr(rng.standard_normal((60, N)))
        assert err <= np.linalg.norm(X - Q @ (Q.T @ X)) ** 2 + 1e-12


@pytest.mark.parametrize("seed", range(4))
def test_gram_route_matches_svd(seed):
    rng = np.random.default_rng(seed)
    X = _low_rank(rng, 500, 15, 9, decay=0.4)
    a = pod_basis(X)
    b = pod_basis_via_gram(X)
    assert a.n_basis == b.n_basis
    assert principal_angles(a.basis, b.basis).max() <= 1e-7
    np.testing.assert_allclose(b.basis.T @ b.basis, np.eye(b.n_basis), atol=1e-12)
    n = min(a.rank, b.rank)
    lead = a.singular_values[:n] > 1e-6 * a.singular_values[0]
    np.testing.assert_allclose(b.singular_values[:n][lead] ** 2, a.singular_values[:n][lead] ** 2,
                               rtol=1e-10)


def test_duplicate_columns_do_not_change_size(rng):
    X = _low_rank(rng, 40, 8, 6)
    a = pod_basis(X)
    dup = np.hstack([X, X[:, :3]])
    assert a.n_basis == pod_basis(dup).n_basis == pod_basis_via_gram(dup).n_basis


def test_permutation_equivariance(rng):
    X = _low_rank(rng, 40, 10, 7)
    a = pod_basis(X)
    b = pod_basis(X[:, rng.permutation(10)])
    np.testing.assert_allclose(a.singular_values, b.singular_values, rtol=1e-12)
    assert principal_angles(a.basis, b.basis).max() <= 1e-7


def test_normalization_rescales_columns():
    X = np.array([[1.0, 0.0], [0.0, 100.0]])
    assert pod_basis(X, eps_tol=0.4).n_basis == 2
    assert pod_basis(X, eps_tol=0.4, normalize=False).n_basis == 1


def test_zero_matrix_rejected():
    with pytest.raises(InvalidArgumentError):
        pod_basis(np.zeros((4, 3)))


def _fake_solution(rng, n_h, k):
    return EigenSolution(np.arange(1.0, k + 1), rng.standard_normal((n_h, k)))


def test_snapshot_matrix_layout(rng):
    sols = [_fake_solution(rng, 20, 3) for _ in range(13)]
    for n_e, cols in ((1, 13), (3, 39)):
        S = build_snapshot_matrix(sols, n_e)
        assert S.shape == (20, cols)
        assert S.n_samples == 13
        np.testing.assert_array_equal(S.matrix[:, n_e], sols[1].eigenvectors[:, 0])
        assert tuple(S.provenance[-1]) == (12, n_e - 1)


def test_snapshot_matrix_errors(rng):
    sols = [_fake_solution(rng, 20, 2)]
    with pytest.raises(InsufficientDataError):
        build_snapshot_matrix(sols, 3)
    with pytest.raises(InvalidArgumentError):
        build_snapshot_matrix(sols + [_fake_solution(rng, 21, 2)], 1)
    with pytest.raises(InvalidArgumentError):
        build_snapshot_matrix([], 1)
    zero = EigenSolution(np.array([1.0]), np.zeros((20, 1)))
    with pytest.raises(InvalidArgumentError):
        build_snapshot_matrix([zero], 1)


def test_persistence_roundtrip(tmp_path, rng):
    X = _low_rank(rng, 33, 9, 6)
    S = build_snapshot_matrix([EigenSolution(np.ones(9), X)], 9)
    b = pod_basis(S)
    save_pod_basis(b, tmp_path / "pod")
    raw = (tmp_path / "pod" / "basis.bin").read_bytes()
    assert int.from_bytes(raw[:8], "little") == 33
    assert int.from_bytes(raw[8:16], "little") == b.n_basis
    back = load_pod_basis(tmp_path / "pod")
    np.testing.assert_array_equal(back.basis, b.basis)
    np.testing.assert_array_equal(back.singular_values, b.singular_values)
    np.testing.assert_array_equal(back.provenance, b.provenance)
    assert back.eps_tol == b.eps_tol
    lines = (tmp_path / "pod" / "singular_values.csv").read_text().splitlines()
    assert lines[0] == "index,sigma,retained"
    assert len(lines) == b.rank + 1


def test_truncated_basis_file_rejected(tmp_path, rng):
    b = pod_basis(rng.standard_normal((10, 3)))
    save_pod_basis(b, tmp_path)
    path = tmp_path / "basis.bin"
    path.write_bytes(path.read_bytes()[:-8])
    with pytest.raises(OSError):
        load_pod_basis(tmp_path)


def test_pod_transformer(rng):
    X = _low_rank(rng, 40, 12, 5).T
    pod = POD(eps_tol=1e-10)
    assert pod.get_params() == {"eps_tol": 1e-10, "method": "svd", "normalize": True}
    Z = pod.fit_transform(X)
    assert Z.shape == (12, pod.n_components_) and pod.n_components_ == 5
    np.testing.assert_allclose(pod.inverse_transform(Z), X, atol=1e-10)
    other = clone(pod).set_params(method="gram").fit(X)
    assert principal_angles(pod.components_.T, other.components_.T).max() <= 1e-7


def test_pod_transformer_unfitted_and_bad_method(rng):
    with pytest.raises(NotFittedError):
        POD().transform(np.ones((2, 3)))
    with pytest.raises(InvalidArgumentError):
        POD(method="qr").fit(rng.standard_normal((4, 6)))
