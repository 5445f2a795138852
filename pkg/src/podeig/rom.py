"""Galerkin reduced eigenproblem: offline projection, online solve, errors.

Offline, each parameter-free component is compressed once, ``V^T A_l V`` and
``V^T B_m V``. Online, a query only evaluates the coefficient functions, sums
``N x N`` matrices and solves a dense pencil. Reduced eigenvalues bound the
high-fidelity ones from above.
"""

import csv
import io
import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg as la
from sklearn.base import BaseEstimator
from sklearn.utils.validation import check_array, check_is_fitted

from ._io import atomic_write
from .eigensolve import DEFAULT_TOL, dense_generalized_eig, smallest_eigenpairs
from .exceptions import InvalidArgumentError
from .mesh_fem import evaluate_operator, problem_coefficients
from .pod import (
    DEFAULT_EPS_TOL,
    build_snapshot_matrix,
    load_pod_basis,
    pod_basis,
    pod_basis_via_gram,
    save_pod_basis,
)

__all__ = [
    "ReducedModel",
    "RomResult",
    "ReducedEigensolver",
    "project_operators",
    "online_solve",
    "solve_at_samples",
    "fem_reference_solver",
    "evaluate_test_suite",
    "eigenvector_error",
    "results_to_csv",
    "save_reduced_model",
    "load_reduced_model",
    "RESULT_COLUMNS",
]

logger = logging.getLogger(__name__)

REGULARIZATION = 1e-14


@dataclass(frozen=True)
class ReducedModel:
    """Reduced affine components sharing the full operator's coefficients."""

    a_components: list
    b_components: list
    theta_a: list
    theta_b: list
    basis: object
    parameter_dim: int
    problem: str = "custom"
    admissible: object = None

    @property
    def n_basis(self):
        return self.a_components[0].shape[0]

    def check_admissible(self, mu):
        mu = np.asarray(mu, dtype=float).ravel()
        if mu.size != self.parameter_dim:
            raise InvalidArgumentError(
                f"expected a parameter of length {self.parameter_dim}, got {mu.size}"
            )
        if self.admissible is not None:
            self.admissible(mu)
        return mu

    def evaluate(self, mu):
        """Dense reduced pencil ``(A_N(mu), B_N(mu))``."""
        mu = self.check_admissible(mu)
        A = sum(f(mu) * m for f, m in zip(self.theta_a, self.a_components))
        B = sum(f(mu) * m for f, m in zip(self.theta_b, self.b_components))
        return A, B


@dataclass
class RomResult:
    """Reduced eigenvalues at one parameter, optionally with FEM references."""

    mu: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray = None
    reference: np.ndarray = None
    reference_vectors: np.ndarray = None

    @property
    def relative_errors(self):
        if self.reference is None:
            return None
        ref = np.asarray(self.reference[: self.eigenvalues.size])
        return np.abs(ref - self.eigenvalues) / np.abs(ref)


def project_operators(op, basis):
    """Compress every affine component onto the columns of ``basis``."""
    V = getattr(basis, "basis", basis)
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or V.shape[0] != op.n_dofs:
        raise InvalidArgumentError(
            f"basis has {V.shape[0] if V.ndim else 0} rows, operator has {op.n_dofs} dofs"
        )

    def compress(M):
        X = V.T @ (M @ V)
        return 0.5 * (X + X.T)

    return ReducedModel(
        [compress(M) for M in op.a_components],
        [compress(M) for M in op.b_components],
        list(op.theta_a),
        list(op.theta_b),
        basis,
        op.parameter_dim,
        op.problem,
        op.admissible,
    )


def online_solve(model, mu, k, lift=True):
    """Solve the reduced pencil at ``mu`` for its ``k`` smallest eigenpairs."""
    if k > model.n_basis:
        raise InvalidArgumentError(
            f"reduced space too small for requested eigencount: k={k} > N={model.n_basis}"
        )
    if k < 1:
        raise InvalidArgumentError(f"k must be >= 1, got {k}")
    A, B = model.evaluate(mu)
    try:
        la.cholesky(B, lower=True)
    except la.LinAlgError:
        shift = REGULARIZATION * np.trace(B) / B.shape[0]
        logger.warning("reduced B(mu) not positive definite at mu=%s; adding %.1e I",
                       np.asarray(mu).tolist(), shift)
        B = B + shift * np.eye(B.shape[0])
    sol = dense_generalized_eig(A, B)
    vecs = None
    if lift:
        V = getattr(model.basis, "basis", model.basis)
        vecs = V @ sol.eigenvectors[:, :k]
    return RomResult(np.asarray(mu, dtype=float).ravel(), sol.eigenvalues[:k], vecs)


def solve_at_samples(op, points, k, tol=DEFAULT_TOL, n_jobs=1):
    """High-fidelity eigensolves at each parameter point, in input order."""

    def solve(mu):
        try:
            A, B = evaluate_operator(op, mu)
            return smallest_eigenpairs(A, B, k, tol=tol, mu=mu)
        except Exception as exc:
            raise _annotate(exc, mu) from exc

    points = [np.asarray(p, dtype=float) for p in points]
    if n_jobs == 1 or len(points) < 2:
        return [solve(p) for p in points]
    with ThreadPoolExecutor(max_workers=n_jobs) as pool:
        return list(pool.map(solve, points))


def fem_reference_solver(op, tol=DEFAULT_TOL):
    """Callable ``(mu, k) -> EigenSolution`` on the full operator."""

    def solve(mu, k):
        A, B = evaluate_operator(op, mu)
        return smallest_eigenpairs(A, B, k, tol=tol, mu=mu)

    return solve


def _annotate(exc, mu):
    msg = f"at mu={np.asarray(mu).tolist()}: {exc}"
    try:
        new = type(exc)(msg)
    except TypeError:
        new = RuntimeError(msg)
    if hasattr(exc, "diagnostics"):
        new.diagnostics = exc.diagnostics
    return new


def evaluate_test_suite(model, fem_reference_solver, test_points, k):
    """FEM and ROM eigenvalues with relative errors at every test point."""
    results = []
    for mu in test_points:
        try:
            rom = online_solve(model, mu, k)
            ref = fem_reference_solver(mu, k) if fem_reference_solver is not None else None
        except Exception as exc:
            raise _annotate(exc, mu) from exc
        if ref is not None:
            rom.reference = ref.eigenvalues[:k]
            rom.reference_vectors = ref.eigenvectors[:, :k]
        results.append(rom)
    return results


def eigenvector_error(u_fem, u_rom, B):
    """B-norm of ``u_fem - u_rom`` after aligning the sign of ``u_rom``."""
    u_fem = np.asarray(u_fem, dtype=float)
    u_rom = np.asarray(u_rom, dtype=float)
    if u_fem @ (B @ u_rom) < 0:
        u_rom = -u_rom
    d = u_fem - u_rom
    return float(np.sqrt(d @ (B @ d)))


def save_reduced_model(model, directory):
    """Persist reduced components (``reduced_model.npz``) and the POD basis."""
    directory = Path(directory)
    arrays = {f"a{l}": m for l, m in enumerate(model.a_components)}
    arrays.update({f"b{m}": x for m, x in enumerate(model.b_components)})
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    atomic_write(directory / "reduced_model.npz", buf.getvalue())
    meta = {"problem": model.problem, "n_a": len(model.a_components),
            "n_b": len(model.b_components), "N": model.n_basis}
    atomic_write(directory / "reduced_model.json", json.dumps(meta, indent=2) + "\n")
    save_pod_basis(model.basis, directory / "pod")


def load_reduced_model(directory):
    """Inverse of :func:`save_reduced_model`; coefficients come from the
    problem id, so nothing is assembled."""
    directory = Path(directory)
    meta = json.loads((directory / "reduced_model.json").read_text())
    theta_a, theta_b, dim, admissible = problem_coefficients(meta["problem"])
    with np.load(directory / "reduced_model.npz") as data:
        a = [data[f"a{l}"] for l in range(meta["n_a"])]
        b = [data[f"b{m}"] for m in range(meta["n_b"])]
    if len(a) != len(theta_a) or len(b) != len(theta_b):
        raise OSError(f"{directory}: component count does not match problem {meta['problem']!r}")
    basis = load_pod_basis(directory / "pod")
    return ReducedModel(a, b, theta_a, theta_b, basis, dim, meta["problem"], admissible)


RESULT_COLUMNS = ["scheme", "seed", "N", "mu", "eig_index",
                  "lambda_fem", "lambda_rom", "rel_error"]


def results_to_csv(results, scheme="", seed=None, n_basis=None, parameter_dim=None):
    """One row per (test point, eigenvalue index); returns the CSV text."""
    if parameter_dim is None:
        parameter_dim = results[0].mu.size if results else 0
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["scheme", "seed", "N"] + [f"mu{d}" for d in range(parameter_dim)]
                    + ["eig_index", "lambda_fem", "lambda_rom", "rel_error"])
    for res in results:
        errs = res.relative_errors
        for i, lam in enumerate(res.eigenvalues):
            fem = "" if res.reference is None else repr(float(res.reference[i]))
            err = "" if errs is None else f"{errs[i]:.6e}"
            writer.writerow(
                [scheme, "" if seed is None else seed, "" if n_basis is None else n_basis]
                + [repr(float(v)) for v in res.mu]
                + [i + 1, fem, repr(float(lam)), err]
            )
    return buf.getvalue()


class ReducedEigensolver(BaseEstimator):
    """Offline/online reduced solver with a scikit-learn interface.

    ``fit`` takes training parameters (one per row), solves the full problem
    there, builds the POD basis from the first ``n_eigenvectors``
    eigenvectors of every sample and projects the operator. ``predict``
    returns the ``n_eigenvalues`` smallest reduced eigenvalues per row.

    Parameters
    ----------
    operator : AffineOperator
    n_eigenvectors : int, default=1
        Eigenvectors per sample in the snapshot matrix.
    n_eigenvalues : int, optional
        Eigenvalues returned by ``predict``; defaults to ``n_eigenvectors``.
    eps_tol : float, default=1e-8
    pod_method : {"svd", "gram"}, default="svd"
    tol : float, default=1e-10
        Residual tolerance of the high-fidelity solves.
    n_jobs : int, default=1
        Worker threads for the offline solves.
    """

    def __init__(self, operator=None, n_eigenvectors=1, n_eigenvalues=None,
                 eps_tol=DEFAULT_EPS_TOL, pod_method="svd", tol=DEFAULT_TOL, n_jobs=1):
        self.operator = operator
        self.n_eigenvectors = n_eigenvectors
        self.n_eigenvalues = n_eigenvalues
        self.eps_tol = eps_tol
        self.pod_method = pod_method
        self.tol = tol
        self.n_jobs = n_jobs

    def _k(self):
        k = self.n_eigenvectors if self.n_eigenvalues is None else self.n_eigenvalues
        if k > self.n_eigenvectors:
            logger.warning("requesting %d eigenvalues from snapshots of %d eigenvectors",
                           k, self.n_eigenvectors)
        return k

    def fit(self, X, y=None):
        if self.operator is None:
            raise InvalidArgumentError("ReducedEigensolver needs an operator")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.operator.parameter_dim:
            raise InvalidArgumentError(
                f"expected {self.operator.parameter_dim} parameter columns, got {X.shape[1]}"
            )
        self.training_solutions_ = solve_at_samples(
            self.operator, X, self.n_eigenvectors, self.tol, self.n_jobs
        )
        self.snapshots_ = build_snapshot_matrix(self.training_solutions_, self.n_eigenvectors)
        pod = pod_basis_via_gram if self.pod_method == "gram" else pod_basis
        self.pod_ = pod(self.snapshots_, self.eps_tol)
        self.model_ = project_operators(self.operator, self.pod_)
        self.n_components_ = self.pod_.n_basis
        self.n_features_in_ = X.shape[1]
        return self

    def predict_eigenpairs(self, X, lift=True):
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float)
        k = self._k()
        return [online_solve(self.model_, mu, k, lift=lift) for mu in X]

    def predict(self, X):
        """Reduced eigenvalues, shape ``(n_points, n_eigenvalues)``."""
        results = self.predict_eigenpairs(X, lift=False)
        k = self._k()
        return np.array([r.eigenvalues for r in results]).reshape(len(results), k)

    def score(self, X, y=None):
        """Negative worst relative eigenvalue error against the full model."""
        check_is_fitted(self, "model_")
        X = check_array(X, dtype=float)
        results = evaluate_test_suite(self.model_, fem_reference_solver(self.operator, self.tol),
                                      X, self._k())
        return -max(float(np.max(r.relative_errors)) for r in results)
