"""P1 finite elements on the unit square with affine parameter dependence.

The two benchmark operators are

* ``two_param``:   -div(A(mu) grad u) = lambda u
* ``three_param``: -div(A(mu) grad u) + mu_3^2/2 (x^2 + y^2) u = lambda u

with homogeneous Dirichlet conditions and the diffusion tensor

    A(mu) = [[1/mu_1^2, 0.7/mu_2], [0.7/mu_2, 1/mu_2^2]].

Each operator is stored as parameter-free sparse components together with the
scalar coefficient functions that weight them.
"""

import io
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
import scipy.io
import scipy.sparse as sp

from ._io import atomic_write
from .exceptions import DomainError, InvalidArgumentError

__all__ = [
    "Mesh",
    "FemSpace",
    "AffineOperator",
    "build_structured_mesh",
    "assemble_p1_components",
    "assemble_problem_two_param",
    "assemble_problem_three_param",
    "assemble_problem",
    "problem_coefficients",
    "evaluate_operator",
    "write_matrix_market",
    "MU1_BOUND",
]

# |mu_1| bound keeping A(mu) positive definite (exact value is 1/0.7).
MU1_BOUND = 1.42
CROSS_COEFF = 0.7


@dataclass(frozen=True)
class Mesh:
    """Triangulation of the unit square.

    Attributes
    ----------
    vertices : (n_vertices, 2) ndarray
    triangles : (n_triangles, 3) ndarray of int
        Counterclockwise vertex indices.
    boundary : (n_vertices,) ndarray of bool
        True for vertices on the boundary of the square.
    """

    vertices: np.ndarray
    triangles: np.ndarray
    boundary: np.ndarray

    @property
    def n_vertices(self):
        return self.vertices.shape[0]

    @property
    def n_triangles(self):
        return self.triangles.shape[0]

    def signed_areas(self):
        p = self.vertices[self.triangles]
        e1 = p[:, 1] - p[:, 0]
        e2 = p[:, 2] - p[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])


@dataclass(frozen=True)
class FemSpace:
    """Interior-vertex P1 space; boundary vertices carry no unknown."""

    mesh: Mesh
    free_dofs: np.ndarray = field(init=False)
    dof_of_vertex: np.ndarray = field(init=False)

    def __post_init__(self):
        free = np.flatnonzero(~self.mesh.boundary)
        dof = np.full(self.mesh.n_vertices, -1, dtype=np.int64)
        dof[free] = np.arange(free.size)
        object.__setattr__(self, "free_dofs", free)
        object.__setattr__(self, "dof_of_vertex", dof)

    @property
    def n_dofs(self):
        return self.free_dofs.size

    def restrict(self, matrix):
        """Drop boundary rows and columns of a vertex-indexed matrix."""
        matrix = sp.csr_matrix(matrix)
        return matrix[self.free_dofs][:, self.free_dofs].tocsr()

    def extend(self, values):
        """Pad dof vectors (or column stacks) with zeros on the boundary."""
        values = np.asarray(values)
        out = np.zeros((self.mesh.n_vertices,) + values.shape[1:], dtype=values.dtype)
        out[self.free_dofs] = values
        return out


@dataclass(frozen=True)
class AffineOperator:
    """Affine decomposition A(mu) = sum theta_a[l](mu) A_l, B(mu) likewise.

    Attributes
    ----------
    a_components, b_components : list of sparse matrices
    theta_a, theta_b : list of callables
        Each maps a parameter vector to a float.
    parameter_dim : int
    problem : str
        Identifier used to rebuild the coefficient functions on load.
    admissible : callable, optional
        Raises ``DomainError`` if a parameter vector is not admissible.
    """

    a_components: Sequence
    b_components: Sequence
    theta_a: Sequence[Callable]
    theta_b: Sequence[Callable]
    parameter_dim: int
    problem: str = "custom"
    admissible: Callable = None

    def __post_init__(self):
        if len(self.a_components) != len(self.theta_a):
            raise InvalidArgumentError("a_components and theta_a differ in length")
        if len(self.b_components) != len(self.theta_b):
            raise InvalidArgumentError("b_components and theta_b differ in length")
        shapes = {m.shape for m in (*self.a_components, *self.b_components)}
        if len(shapes) != 1:
            raise InvalidArgumentError(f"component shapes disagree: {sorted(shapes)}")

    @property
    def n_dofs(self):
        return self.a_components[0].shape[0]

    @property
    def n_a(self):
        return len(self.a_components)

    @property
    def n_b(self):
        return len(self.b_components)

    def coefficients(self, mu):
        mu = _check_mu(mu, self.parameter_dim)
        return (
            np.array([f(mu) for f in self.theta_a]),
            np.array([f(mu) for f in self.theta_b]),
        )

    def check_admissible(self, mu):
        mu = _check_mu(mu, self.parameter_dim)
        if self.admissible is not None:
            self.admissible(mu)
        return mu


def build_structured_mesh(n):
    """Uniform ``n x n`` grid of the unit square, each cell cut along its
    lower-left to upper-right diagonal."""
    if isinstance(n, bool) or not isinstance(n, (int, np.integer)) or n < 2:
        raise InvalidArgumentError(f"n must be an integer >= 2, got {n!r}")
    n = int(n)
    t = np.arange(n + 1) / n
    xx, yy = np.meshgrid(t, t)
    vertices = np.column_stack([xx.ravel(), yy.ravel()])

    i, j = np.meshgrid(np.arange(n), np.arange(n))
    v00 = (j * (n + 1) + i).ravel()
    v10 = v00 + 1
    v01 = v00 + (n + 1)
    v11 = v01 + 1
    lower = np.column_stack([v00, v10, v11])
    upper = np.column_stack([v00, v11, v01])
    triangles = np.vstack([lower, upper]).astype(np.int64)

    ij = np.rint(vertices * n).astype(np.int64)
    boundary = np.any((ij == 0) | (ij == n), axis=1)
    return Mesh(vertices, triangles, boundary)


def _canonical_csr(rows, cols, vals, size):
    """Sum duplicate entries in an order independent of element order."""
    order = np.lexsort((vals, cols, rows))
    rows, cols, vals = rows[order], cols[order], vals[order]
    key = rows * size + cols
    starts = np.flatnonzero(np.r_[True, key[1:] != key[:-1]])
    summed = np.add.reduceat(vals, starts)
    mat = sp.csr_matrix((summed, (rows[starts], cols[starts])), shape=(size, size))
    mat.sort_indices()
    return mat


def assemble_p1_components(mesh):
    """Vertex-indexed P1 matrices on ``mesh``.

    Returns a dict with keys ``xx``, ``cross``, ``yy`` (stiffness pieces, the
    cross piece already symmetrised as A_xy + A_yx), ``mass`` and ``potential``
    (weight x^2 + y^2, edge-midpoint quadrature).
    """
    p = mesh.vertices[mesh.triangles]
    area = mesh.signed_areas()
    if np.any(area <= 0):
        raise InvalidArgumentError("mesh has non-positive triangle areas")

    # gradients of the barycentric functions: grad phi_k = rot(p_{k+2} - p_{k+1}) / (2 area)
    e = np.stack([p[:, 2] - p[:, 1], p[:, 0] - p[:, 2], p[:, 1] - p[:, 0]], axis=1)
    gx = -e[:, :, 1] / (2 * area[:, None])
    gy = e[:, :, 0] / (2 * area[:, None])

    a = area[:, None, None]
    local = {
        "xx": a * gx[:, :, None] * gx[:, None, :],
        "yy": a * gy[:, :, None] * gy[:, None, :],
        "cross": a * (gx[:, :, None] * gy[:, None, :] + gy[:, :, None] * gx[:, None, :]),
        "mass": a * (np.ones((3, 3)) + np.eye(3)) / 12.0,
    }

    # edge midpoints m_k opposite vertex k; phi_i(m_k) = 1/2 for i != k
    mids = 0.5 * (p[:, [1, 2, 0]] + p[:, [2, 0, 1]])
    w = np.sum(mids**2, axis=2)
    phi = 0.5 * (np.ones((3, 3)) - np.eye(3))  # phi[k, i] = phi_i(m_k)
    local["potential"] = (area / 3.0)[:, None, None] * np.einsum("tk,ki,kj->tij", w, phi, phi)

    rows = np.repeat(mesh.triangles, 3, axis=1).ravel()
    cols = np.tile(mesh.triangles, (1, 3)).ravel()
    size = mesh.n_vertices
    return {k: _canonical_csr(rows, cols, v.ravel(), size) for k, v in local.items()}


def _check_mu(mu, dim):
    mu = np.asarray(mu, dtype=float).ravel()
    if mu.size != dim:
        raise InvalidArgumentError(f"expected a parameter of length {dim}, got {mu.size}")
    if not np.all(np.isfinite(mu)):
        raise DomainError(f"parameter {mu.tolist()} is not finite")
    return mu


def _diffusion_admissible(mu):
    if not 0.0 < abs(mu[0]) < MU1_BOUND:
        raise DomainError(
            f"mu_1 = {mu[0]:g} violates mu_1 in (-{MU1_BOUND}, {MU1_BOUND}) \\ {{0}} "
            "(diffusion tensor loses positive definiteness)"
        )
    if mu[1] == 0.0:
        raise DomainError("mu_2 = 0 is not admissible (diffusion tensor undefined)")


def _diffusion_thetas():
    return [
        lambda mu: 1.0 / mu[0] ** 2,
        lambda mu: CROSS_COEFF / mu[1],
        lambda mu: 1.0 / mu[1] ** 2,
    ]


def problem_coefficients(problem):
    """Coefficient functions of a named problem, without any assembly.

    Returns ``(theta_a, theta_b, parameter_dim, admissible)``.
    """
    if problem == "two_param":
        return _diffusion_thetas(), [lambda mu: 1.0], 2, _diffusion_admissible
    if problem == "three_param":
        thetas = _diffusion_thetas() + [lambda mu: 0.5 * mu[2] ** 2]
        return thetas, [lambda mu: 1.0], 3, _diffusion_admissible
    raise InvalidArgumentError(f"unknown problem {problem!r}; choose from {sorted(PROBLEMS)}")


def _operator(space, problem, keys):
    mats = assemble_p1_components(space.mesh)
    theta_a, theta_b, dim, admissible = problem_coefficients(problem)
    return AffineOperator(
        a_components=[space.restrict(mats[k]) for k in keys],
        b_components=[space.restrict(mats["mass"])],
        theta_a=theta_a,
        theta_b=theta_b,
        parameter_dim=dim,
        problem=problem,
        admissible=admissible,
    )


def assemble_problem_two_param(space):
    """Affine operator of the two-parameter anisotropic diffusion problem.

    Components ``[A_xx, A_xy + A_yx, A_yy]`` weighted by
    ``[1/mu_1^2, 0.7/mu_2, 1/mu_2^2]``; mass matrix with weight 1.
    """
    return _operator(space, "two_param", ("xx", "cross", "yy"))


def assemble_problem_three_param(space):
    """Two-parameter diffusion plus the potential mu_3^2/2 (x^2 + y^2)."""
    return _operator(space, "three_param", ("xx", "cross", "yy", "potential"))


PROBLEMS = {
    "two_param": assemble_problem_two_param,
    "three_param": assemble_problem_three_param,
}


def assemble_problem(problem, n):
    """Build mesh, space and operator for a named benchmark problem."""
    try:
        assemble = PROBLEMS[problem]
    except KeyError:
        raise InvalidArgumentError(
            f"unknown problem {problem!r}; choose from {sorted(PROBLEMS)}"
        ) from None
    space = FemSpace(build_structured_mesh(n))
    return space, assemble(space)


def evaluate_operator(op, mu):
    """Return the sparse pair (A(mu), B(mu))."""
    mu = op.check_admissible(mu)
    ta, tb = op.coefficients(mu)
    A = sum(t * m for t, m in zip(ta, op.a_components))
    B = sum(t * m for t, m in zip(tb, op.b_components))
    return sp.csr_matrix(A), sp.csr_matrix(B)


def write_matrix_market(path, matrix, comment=""):
    """Write a symmetric sparse matrix in Matrix Market coordinate format."""
    # mmwrite to a buffer: writing to a path in a missing directory fails silently
    buf = io.BytesIO()
    scipy.io.mmwrite(buf, sp.coo_matrix(matrix), comment=comment, symmetry="symmetric")
    atomic_write(path, buf.getvalue())
