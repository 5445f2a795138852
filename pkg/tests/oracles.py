"""Independent reference computations used only by the tests."""

import itertools

import numpy as np


def jacobi_eigh(C, tol=1e-14, max_sweeps=100):
    """Cyclic Jacobi rotations for a dense symmetric matrix."""
    A = np.array(C, dtype=float, copy=True)
    n = A.shape[0]
    V = np.eye(n)
    for _ in range(max_sweeps):
        off = np.linalg.norm(A - np.diag(np.diag(A)))
        if off < tol * np.linalg.norm(A):
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                if A[p, q] == 0.0:
                    continue
                theta = (A[q, q] - A[p, p]) / (2 * A[p, q])
                t = np.sign(theta) / (abs(theta) + np.hypot(theta, 1.0)) if theta else 1.0
                c = 1 / np.sqrt(t**2 + 1)
                s = t * c
                J = np.eye(n)
                J[p, p] = J[q, q] = c
                J[p, q], J[q, p] = s, -s
                A = J.T @ A @ J
                V = V @ J
    lam = np.diag(A)
    order = np.argsort(lam)
    return lam[order], V[:, order]


def generalized_jacobi(A, B):
    """Eigenvalues of (A, B) via an explicit Cholesky reduction and Jacobi."""
    L = np.linalg.cholesky(B)
    Linv = np.linalg.inv(L)
    lam, Y = jacobi_eigh(Linv @ A @ Linv.T)
    return lam, Linv.T @ Y


def smolyak_points_bruteforce(dim, level, decimals=12):
    """Sparse grid as a union of full tensor grids, deduplicated by rounding.

    Node families are recomputed from the plain cosine formula, so this does
    not share code with the implementation.
    """
    def nodes(l):
        if l == 0:
            return [0.0]
        m = 2**l
        return [np.cos(np.pi * j / m) for j in range(m + 1)]

    pts = set()
    for idx in itertools.product(range(level + 1), repeat=dim):
        if sum(idx) <= level:
            for p in itertools.product(*(nodes(l) for l in idx)):
                pts.add(tuple(np.round(p, decimals) + 0.0))
    return pts


def principal_angles(U, V):
    Qu, _ = np.linalg.qr(U)
    Qv, _ = np.linalg.qr(V)
    s = np.linalg.svd(Qu.T @ Qv, compute_uv=False)
    return np.arccos(np.clip(s, -1.0, 1.0))
