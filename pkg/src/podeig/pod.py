"""Proper orthogonal decomposition of eigenvector snapshots.

The basis is made of the leading left singular vectors of the snapshot
matrix. Its size ``N`` is the smallest integer whose retained energy
``sum_{i<=N} sigma_i^2 / sum_{i<=r} sigma_i^2`` reaches ``1 - eps_tol``, where
``r`` is the numerical rank.
"""

import csv
import json
import struct
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as la
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from ._io import atomic_write
from .eigensolve import fix_signs
from .exceptions import InsufficientDataError, InvalidArgumentError

__all__ = [
    "SnapshotMatrix",
    "PodBasis",
    "POD",
    "build_snapshot_matrix",
    "pod_basis",
    "pod_basis_via_gram",
    "energy_ratios",
    "truncation_rank",
    "save_pod_basis",
    "load_pod_basis",
    "DEFAULT_EPS_TOL",
]

DEFAULT_EPS_TOL = 1e-8


@dataclass(frozen=True)
class SnapshotMatrix:
    """Eigenvector snapshots stacked as columns.

    Attributes
    ----------
    matrix : (N_h, n_k) ndarray
        B-normalised, sign-fixed eigenvectors; ``n_k = n_e * n_s``.
    provenance : (n_k, 2) ndarray of int
        ``(sample index, eigenvector index)`` of every column, 0-based.
    n_e : int
    """

    matrix: np.ndarray
    provenance: np.ndarray
    n_e: int

    @property
    def n_samples(self):
        return self.matrix.shape[1] // self.n_e

    @property
    def shape(self):
        return self.matrix.shape


@dataclass(frozen=True)
class PodBasis:
    """Orthonormal reduced basis and the spectrum it was cut from.

    Attributes
    ----------
    basis : (N_h, N) ndarray
        Columns zeta_1..zeta_N.
    singular_values : (r,) ndarray
        All numerically non-zero singular values, nonincreasing.
    eps_tol : float
    provenance : ndarray or None
        Snapshot column provenance, carried along for the record.
    """

    basis: np.ndarray
    singular_values: np.ndarray
    eps_tol: float
    provenance: np.ndarray = None
    method: str = "svd"
    normalized: bool = True

    @property
    def n_basis(self):
        return self.basis.shape[1]

    @property
    def rank(self):
        return self.singular_values.size

    @property
    def retained_singular_values(self):
        return self.singular_values[: self.n_basis]

    @property
    def discarded_energy(self):
        return 1.0 - energy_ratios(self.singular_values)[self.n_basis - 1]


def build_snapshot_matrix(solutions, n_e):
    """Stack the first ``n_e`` eigenvectors of each solution, sample-major."""
    solutions = list(solutions)
    if not solutions:
        raise InvalidArgumentError("need at least one eigen-solution")
    if n_e < 1:
        raise InvalidArgumentError(f"n_e must be >= 1, got {n_e}")
    n_h = solutions[0].eigenvectors.shape[0]
    cols, prov = [], []
    for s, sol in enumerate(solutions):
        if sol.eigenvectors.shape[0] != n_h:
            raise InvalidArgumentError(
                f"solution {s} has dimension {sol.eigenvectors.shape[0]}, expected {n_h}"
            )
        if len(sol) < n_e:
            raise InsufficientDataError(f"solution {s} holds {len(sol)} eigenpairs, need {n_e}")
        for i in range(n_e):
            cols.append(sol.eigenvectors[:, i])
            prov.append((s, i))
    matrix = np.column_stack(cols)
    if np.any(~np.any(matrix != 0, axis=0)):
        raise InvalidArgumentError("snapshot matrix has a zero column")
    return SnapshotMatrix(matrix, np.array(prov, dtype=np.int64), int(n_e))


def energy_ratios(singular_values):
    """Cumulative retained energy fractions ``E_1 <= ... <= E_r = 1``."""
    s2 = np.asarray(singular_values, dtype=float) ** 2
    c = np.cumsum(s2)
    return c / c[-1]


def truncation_rank(singular_values, eps_tol):
    """Smallest ``N`` with energy ratio ``>= 1 - eps_tol``."""
    if not 0.0 < eps_tol < 1.0:
        raise InvalidArgumentError(f"eps_tol must lie in (0, 1), got {eps_tol}")
    return int(np.argmax(energy_ratios(singular_values) >= 1.0 - eps_tol)) + 1


def _prepare(S, normalize):
    if isinstance(S, SnapshotMatrix):
        X, prov = S.matrix, S.provenance
    else:
        X, prov = S, None
    X = np.array(X, dtype=float, copy=True)
    if X.ndim != 2:
        raise InvalidArgumentError(f"snapshot matrix must be 2-D, got shape {X.shape}")
    if not np.any(X):
        raise InvalidArgumentError("snapshot matrix is identically zero")
    if normalize:
        norms = np.linalg.norm(X, axis=0)
        keep = norms > 0
        X[:, keep] /= norms[keep]
    return X, prov


def pod_basis(S, eps_tol=DEFAULT_EPS_TOL, normalize=True):
    """POD basis from a thin SVD of the snapshot matrix.

    Parameters
    ----------
    S : SnapshotMatrix or (N_h, n_k) array_like
    eps_tol : float
        Admissible fraction of discarded energy.
    normalize : bool
        Rescale snapshot columns to unit Euclidean norm before the SVD.
    """
    X, prov = _prepare(S, normalize)
    U, s, _ = la.svd(X, full_matrices=False)
    r = int(np.sum(s > max(X.shape) * np.finfo(float).eps * s[0]))
    s = s[:r]
    N = truncation_rank(s, eps_tol)
    return PodBasis(fix_signs(U[:, :N]), s, float(eps_tol), prov, "svd", normalize)


def pod_basis_via_gram(S, eps_tol=DEFAULT_EPS_TOL, normalize=True):
    """POD basis from the eigendecomposition of the Gram matrix ``S^T S``.

    Cheaper than the SVD when ``N_h >> n_k``. Singular values below about
    ``sqrt(eps) * sigma_1`` are not resolved by this route and count as zero.
    """
    X, prov = _prepare(S, normalize)
    G = X.T @ X
    lam, W = la.eigh(0.5 * (G + G.T))
    lam, W = lam[::-1], W[:, ::-1]
    r = int(np.sum(lam > max(X.shape) * np.finfo(float).eps * lam[0]))
    s = np.sqrt(lam[:r])
    N = truncation_rank(s, eps_tol)
    U = X @ W[:, :N] / s[:N]
    # one QR pass against loss of orthogonality for small sigma
    Q, R = np.linalg.qr(U)
    Q *= np.sign(np.diag(R))
    return PodBasis(fix_signs(Q), s, float(eps_tol), prov, "gram", normalize)


class POD(TransformerMixin, BaseEstimator):
    """Scikit-learn style POD transformer.

    Rows of ``X`` are snapshots (high-fidelity vectors), so the snapshot
    matrix is ``X.T``. ``transform`` returns reduced coordinates ``X V`` and
    ``inverse_transform`` lifts them back with ``V^T``.

    Parameters
    ----------
    eps_tol : float, default=1e-8
    method : {"svd", "gram"}, default="svd"
    normalize : bool, default=True

    Attributes
    ----------
    components_ : (N, N_h) ndarray
    singular_values_ : (r,) ndarray
    n_components_ : int
    rank_ : int
    basis_ : PodBasis
    """

    def __init__(self, eps_tol=DEFAULT_EPS_TOL, method="svd", normalize=True):
        self.eps_tol = eps_tol
        self.method = method
        self.normalize = normalize

    def fit(self, X, y=None):
        if isinstance(X, SnapshotMatrix):
            S = X
            n_features = X.matrix.shape[0]
        else:
            X = check_array(X, dtype=float)
            S = X.T
            n_features = X.shape[1]
        if self.method == "svd":
            basis = pod_basis(S, self.eps_tol, self.normalize)
        elif self.method == "gram":
            basis = pod_basis_via_gram(S, self.eps_tol, self.normalize)
        else:
            raise InvalidArgumentError(f"unknown method {self.method!r}")
        self.basis_ = basis
        self.components_ = basis.basis.T
        self.singular_values_ = basis.singular_values
        self.n_components_ = basis.n_basis
        self.rank_ = basis.rank
        self.n_features_in_ = n_features
        return self

    def transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=float)
        return X @ self.components_.T

    def inverse_transform(self, X):
        check_is_fitted(self, "components_")
        X = check_array(X, dtype=float)
        return X @ self.components_


# -- persistence --------------------------------------------------------------

_HEADER = struct.Struct("<QQ")


def save_pod_basis(basis, directory):
    """Write ``basis.bin``, ``singular_values.csv`` and ``basis.json``.

    ``basis.bin`` holds two little-endian uint64 (rows, cols) followed by the
    matrix as column-major little-endian float64.
    """
    directory = Path(directory)
    rows, cols = basis.basis.shape
    payload = _HEADER.pack(rows, cols) + np.asarray(basis.basis, dtype="<f8").tobytes(order="F")
    atomic_write(directory / "basis.bin", payload)

    lines = ["index,sigma,retained"]
    for i, s in enumerate(basis.singular_values):
        lines.append(f"{i},{float(s)!r},{int(i < basis.n_basis)}")
    atomic_write(directory / "singular_values.csv", "\n".join(lines) + "\n")

    meta = {
        "eps_tol": basis.eps_tol,
        "N": basis.n_basis,
        "rank": basis.rank,
        "n_dofs": rows,
        "method": basis.method,
        "normalized_snapshots": basis.normalized,
        "discarded_energy": basis.discarded_energy,
        "provenance": None if basis.provenance is None else basis.provenance.tolist(),
    }
    atomic_write(directory / "basis.json", json.dumps(meta, indent=2) + "\n")


def load_pod_basis(directory):
    directory = Path(directory)
    raw = (directory / "basis.bin").read_bytes()
    if len(raw) < _HEADER.size:
        raise OSError(f"{directory / 'basis.bin'}: truncated header")
    rows, cols = _HEADER.unpack_from(raw)
    body = raw[_HEADER.size:]
    if len(body) != 8 * rows * cols:
        raise OSError(f"{directory / 'basis.bin'}: expected {rows}x{cols} doubles")
    V = np.frombuffer(body, dtype="<f8").reshape((rows, cols), order="F").astype(float)
    meta = json.loads((directory / "basis.json").read_text())
    with open(directory / "singular_values.csv", newline="") as fh:
        sigma = np.array([float(r["sigma"]) for r in csv.DictReader(fh)])
    prov = meta.get("provenance")
    return PodBasis(
        V, sigma, float(meta["eps_tol"]),
        None if prov is None else np.array(prov, dtype=np.int64),
        meta.get("method", "svd"), meta.get("normalized_snapshots", True),
    )

