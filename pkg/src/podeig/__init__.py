"""Reduced order modelling of parametric symmetric eigenvalue problems.

Offline: P1 finite elements with affine parameter dependence, training
parameters from one of four samplers, eigenvector snapshots compressed by
POD. Online: Galerkin-projected dense eigensolves at new parameters.
"""

from .eigensolve import EigenPair, EigenSolution, dense_generalized_eig, smallest_eigenpairs
from .exceptions import (
    DefinitenessError,
    DomainError,
    InsufficientDataError,
    InvalidArgumentError,
    SolverFailure,
)
from .mesh_fem import (
    AffineOperator,
    FemSpace,
    Mesh,
    assemble_problem,
    assemble_problem_three_param,
    assemble_problem_two_param,
    build_structured_mesh,
    evaluate_operator,
)
from .pod import POD, PodBasis, SnapshotMatrix, build_snapshot_matrix, pod_basis, pod_basis_via_gram
from .rom import (
    ReducedEigensolver,
    ReducedModel,
    RomResult,
    evaluate_test_suite,
    online_solve,
    project_operators,
)
from .sampling import (
    ParameterBox,
    SampleSet,
    lhs_sample,
    random_sample,
    smolyak_cc_sample,
    uniform_tensor_sample,
)

__version__ = "0.1.0"
