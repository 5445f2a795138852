"""Smallest eigenpairs of symmetric-definite pencils ``A u = lambda B u``.

Two routes share one normalisation convention (``u^T B u = 1``, largest
magnitude entry positive):

* :func:`smallest_eigenpairs` for large sparse pencils, shift-invert Lanczos
  (ARPACK) around a shift certified to lie below the spectrum by a Sylvester
  inertia count of ``A - sigma B``;
* :func:`dense_generalized_eig` for small dense pencils (Cholesky reduction
  followed by a tridiagonal symmetric solve, via LAPACK).
"""

from dataclasses import dataclass, field

import numpy as np
import scipy.linalg as la
import scipy.sparse as sp
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh, splu
from scipy.sparse.linalg import norm as sparse_norm

from .exceptions import DefinitenessError, InvalidArgumentError, SolverFailure

__all__ = [
    "EigenPair",
    "EigenSolution",
    "smallest_eigenpairs",
    "dense_generalized_eig",
    "fix_signs",
    "inertia",
    "DEFAULT_TOL",
]

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class EigenPair:
    eigenvalue: float
    eigenvector: np.ndarray


@dataclass(frozen=True)
class EigenSolution:
    """Ascending eigenvalues with B-orthonormal eigenvectors (as columns).

    Attributes
    ----------
    eigenvalues : (k,) ndarray
    eigenvectors : (n, k) ndarray
    mu : ndarray or None
        Parameter the pencil was evaluated at, if any.
    diagnostics : dict
    """

    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    mu: np.ndarray = None
    diagnostics: dict = field(default_factory=dict)

    def __len__(self):
        return self.eigenvalues.size

    @property
    def pairs(self):
        return [EigenPair(float(lam), self.eigenvectors[:, i]) for i, lam in enumerate(self.eigenvalues)]

    def clusters(self, rtol=1e-6):
        """Group indices of eigenvalues whose relative gap is below ``rtol``."""
        groups = []
        for i, lam in enumerate(self.eigenvalues):
            if groups and abs(lam - self.eigenvalues[groups[-1][-1]]) <= rtol * abs(lam):
                groups[-1].append(i)
            else:
                groups.append([i])
        return groups


def fix_signs(vectors):
    """Flip columns so that each one's largest-magnitude entry is positive."""
    vectors = np.array(vectors, dtype=float, copy=True)
    if vectors.ndim == 1:
        return fix_signs(vectors[:, None])[:, 0]
    idx = np.argmax(np.abs(vectors), axis=0)
    signs = np.sign(vectors[idx, np.arange(vectors.shape[1])])
    signs[signs == 0] = 1.0
    return vectors * signs


def _symmetric_lu(matrix):
    return splu(
        sp.csc_matrix(matrix),
        permc_spec="MMD_AT_PLUS_A",
        diag_pivot_thresh=0.0,
        options=dict(SymmetricMode=True),
    )


def inertia(matrix):
    """Number of negative and zero pivots of a symmetric sparse matrix.

    Uses a symmetric-mode LU (no off-diagonal pivoting), so by Sylvester's law
    the pivot signs give the inertia. Returns ``(n_negative, n_zero, lu)``;
    ``lu`` is None when the factorization broke down.
    """
    try:
        lu = _symmetric_lu(matrix)
    except RuntimeError:
        return None, None, None
    if not np.array_equal(lu.perm_r, lu.perm_c):
        return None, None, lu
    d = lu.U.diagonal()
    return int(np.sum(d < 0)), int(np.sum(d == 0)), lu


def _check_pencil(A, B, k):
    if A.ndim != 2 or A.shape[0] != A.shape[1]:
        raise InvalidArgumentError(f"A must be square, got shape {A.shape}")
    if B.shape != A.shape:
        raise InvalidArgumentError(f"A and B shapes differ: {A.shape} vs {B.shape}")
    if k is not None and not 1 <= k <= A.shape[0]:
        raise InvalidArgumentError(f"k must lie in [1, {A.shape[0]}], got {k}")


def _finalize(A, B, lam, vecs, mu, diagnostics):
    order = np.argsort(lam, kind="stable")
    lam = np.asarray(lam)[order]
    vecs = np.asarray(vecs)[:, order]
    norms = np.sqrt(np.einsum("ij,ij->j", vecs, B @ vecs))
    vecs = fix_signs(vecs / norms)
    Bv = B @ vecs
    resid = np.linalg.norm(A @ vecs - Bv * lam, axis=0)
    scale = np.linalg.norm(Bv, axis=0) * np.maximum(np.abs(lam), np.finfo(float).tiny)
    diagnostics = dict(diagnostics, relative_residuals=(resid / scale).tolist())
    mu = None if mu is None else np.asarray(mu, dtype=float)
    return EigenSolution(lam, vecs, mu, diagnostics)


def smallest_eigenpairs(A, B, k, tol=DEFAULT_TOL, sigma=0.0, maxiter=None, mu=None):
    """Compute the ``k`` smallest eigenpairs of the sparse pencil ``(A, B)``.

    Parameters
    ----------
    A : sparse or dense (n, n) symmetric matrix
    B : sparse or dense (n, n) symmetric positive definite matrix
    k : int
    tol : float
        Bound on ``||A u - lambda B u|| / (lambda ||B u||)`` for every pair.
    sigma : float
        Initial shift. Lowered automatically until no eigenvalue lies below it.
    maxiter : int, optional
        Lanczos restart budget, ``500 * k`` by default.
    mu : array_like, optional
        Recorded on the result.

    Returns
    -------
    EigenSolution
    """
    A = sp.csc_matrix(A, dtype=float)
    B = sp.csc_matrix(B, dtype=float)
    _check_pencil(A, B, k)
    n = A.shape[0]

    n_neg, n_zero, _ = inertia(B)
    if n_neg is None or n_neg or n_zero:
        raise DefinitenessError("B is not positive definite (symmetric factorization failed)")

    # walk the shift down until the inertia certifies it sits below the spectrum
    step = max(abs(sigma), sparse_norm(A, 1) / sparse_norm(B, 1), 1.0)
    lu = None
    for attempt in range(64):
        n_neg, n_zero, lu = inertia(A - sigma * B)
        if n_neg == 0 and n_zero == 0:
            break
        sigma -= step
        step *= 2.0
    else:
        raise SolverFailure("could not place a shift below the spectrum", {"sigma": sigma})

    if maxiter is None:
        maxiter = 500 * k
    if k >= n - 1:
        sol = dense_generalized_eig(A.toarray(), B.toarray())
        lam, vecs = sol.eigenvalues[:k], sol.eigenvectors[:, :k]
        diag = {"method": "dense", "sigma": sigma}
    else:
        op_inv = LinearOperator((n, n), matvec=lu.solve, dtype=float)
        try:
            lam, vecs = eigsh(
                A, k=k, M=B, sigma=sigma, which="LM", OPinv=op_inv,
                v0=np.ones(n), tol=0.0, maxiter=maxiter,
            )
        except ArpackNoConvergence as exc:
            raise SolverFailure(
                "shift-invert Lanczos did not converge",
                {"sigma": sigma, "maxiter": maxiter, "converged": len(exc.eigenvalues)},
            ) from exc
        # Rayleigh-Ritz on the returned subspace restores B-orthogonality in clusters
        AV, BV = vecs.T @ (A @ vecs), vecs.T @ (B @ vecs)
        lam, y = la.eigh(0.5 * (AV + AV.T), 0.5 * (BV + BV.T))
        vecs = vecs @ y
        diag = {"method": "shift-invert-lanczos", "sigma": sigma, "maxiter": maxiter,
                "shift_attempts": attempt + 1}

    sol = _finalize(A, B, lam, vecs, mu, diag)
    worst = max(sol.diagnostics["relative_residuals"])
    if worst > tol:
        raise SolverFailure(f"residual {worst:.2e} exceeds tolerance {tol:.1e}", sol.diagnostics)
    return sol


def dense_generalized_eig(A, B, mu=None):
    """Full ascending spectrum of a small dense symmetric-definite pencil."""
    A = np.asarray(A.toarray() if sp.issparse(A) else A, dtype=float)
    B = np.asarray(B.toarray() if sp.issparse(B) else B, dtype=float)
    _check_pencil(A, B, None)
    try:
        lam, vecs = la.eigh(A, B)
    except la.LinAlgError as exc:
        raise DefinitenessError(f"B is not positive definite: {exc}") from exc
    return _finalize(A, B, lam, vecs, mu, {"method": "dense-cholesky"})
