"""Configuration-driven offline/online studies.

A run is described by a YAML file::

    problem: two_param            # or three_param
    mesh: {n: 100}
    box: [[0.1, 1.4], [0.1, 1.4]] # optional, per-problem default
    sampling: {scheme: lhs, n: 13, seed: 0}   # level / counts for grids
    snapshots: {n_e: 1, eps_tol: 1.0e-8, method: svd}
    k: 1
    solver: {tol: 1.0e-10, workers: 1}
    test_points: [[0.3, 0.4], ...]  # optional, per-problem default
    output_dir: runs/table1-lhs
    export_matrices: false
    allow_k_above_n_e: false

Relative output directories are resolved against ``$PODEIG_OUTPUT_ROOT`` when
it is set.
"""

import json
import logging
import os
import time
from contextlib import contextmanager
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

import numpy as np
import yaml

from ._io import atomic_write
from .exceptions import InvalidArgumentError
from .mesh_fem import assemble_problem, write_matrix_market
from .pod import DEFAULT_EPS_TOL, build_snapshot_matrix, pod_basis, pod_basis_via_gram
from .rom import (
    evaluate_test_suite,
    fem_reference_solver,
    load_reduced_model,
    online_solve,
    project_operators,
    results_to_csv,
    save_reduced_model,
    solve_at_samples,
)
from .sampling import SCHEMES, ParameterBox, draw_samples, write_points_csv

__all__ = [
    "ExperimentConfig",
    "ExperimentError",
    "RunManifest",
    "load_config",
    "run_offline",
    "run_online",
    "emit_sample_figure_data",
    "compare_schemes",
    "DEFAULT_BOXES",
    "DEFAULT_TEST_POINTS",
    "FAST_MESH_N",
    "OUTPUT_ROOT_ENV",
]

logger = logging.getLogger(__name__)

OUTPUT_ROOT_ENV = "PODEIG_OUTPUT_ROOT"
FAST_MESH_N = 50

DEFAULT_BOXES = {
    "two_param": [[0.1, 1.4], [0.1, 1.4]],
    "three_param": [[0.1, 1.4], [0.1, 1.4], [1.0, 8.0]],
}

DEFAULT_TEST_POINTS = {
    "two_param": [[0.3, 0.4], [0.3, 1.1], [0.7, 0.4], [0.7, 1.1], [1.2, 0.4], [1.2, 1.1]],
    "three_param": [
        [a, b, c] for c in (2.0, 6.0) for a in (0.4, 1.1) for b in (0.4, 1.1)
    ],
}


class ExperimentError(RuntimeError):
    """A pipeline stage failed; ``cause`` holds the original exception."""

    def __init__(self, stage, cause):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause


@dataclass
class ExperimentConfig:
    problem: str = "two_param"
    mesh_n: int = 100
    box: list = None
    scheme: str = "lhs"
    n_samples: int = None
    level: int = None
    counts: list = None
    seed: int = None
    n_e: int = 1
    k: int = None
    eps_tol: float = DEFAULT_EPS_TOL
    pod_method: str = "svd"
    tol: float = 1e-10
    workers: int = 1
    test_points: list = None
    output_dir: str = "runs/default"
    export_matrices: bool = False
    allow_k_above_n_e: bool = False

    def __post_init__(self):
        if self.box is None:
            self.box = DEFAULT_BOXES.get(self.problem)
        if self.test_points is None:
            self.test_points = DEFAULT_TEST_POINTS.get(self.problem)
        if self.k is None:
            self.k = self.n_e
        self.validate()

    def validate(self):
        if self.problem not in DEFAULT_BOXES:
            raise InvalidArgumentError(f"unknown problem {self.problem!r}")
        if self.scheme not in SCHEMES:
            raise InvalidArgumentError(f"unknown scheme {self.scheme!r}; choose from {SCHEMES}")
        if not 0.0 < self.eps_tol < 1.0:
            raise InvalidArgumentError(f"eps_tol must lie in (0, 1), got {self.eps_tol}")
        if self.n_e < 1 or self.k < 0:
            raise InvalidArgumentError("n_e must be >= 1 and k >= 0")
        if self.k > self.n_e:
            if not self.allow_k_above_n_e:
                raise InvalidArgumentError(
                    f"k={self.k} exceeds n_e={self.n_e}; set allow_k_above_n_e to override"
                )
            logger.warning("k=%d > n_e=%d: snapshots miss higher eigenvectors", self.k, self.n_e)
        if self.scheme in ("random", "lhs") and (self.n_samples is None or self.seed is None):
            raise InvalidArgumentError(f"scheme {self.scheme!r} needs sampling.n and sampling.seed")
        if self.scheme == "uniform" and self.n_samples is None and self.counts is None:
            raise InvalidArgumentError("uniform sampling needs sampling.n or sampling.counts")
        if self.scheme == "smolyak" and self.n_samples is None and self.level is None:
            raise InvalidArgumentError("smolyak sampling needs sampling.n or sampling.level")
        box = self.parameter_box()
        pts = np.asarray(self.test_points, dtype=float).reshape(-1, box.dim) \
            if len(self.test_points) else np.empty((0, box.dim))
        outside = ~box.contains(pts) if len(pts) else np.zeros(0, bool)
        if np.any(outside):
            raise InvalidArgumentError(
                f"test points outside the parameter box: {pts[outside].tolist()}"
            )

    def parameter_box(self):
        return ParameterBox.from_intervals(self.box)

    @classmethod
    def from_dict(cls, data):
        data = dict(data)
        known = {"problem", "mesh", "box", "sampling", "snapshots", "k", "solver",
                 "test_points", "output_dir", "export_matrices", "allow_k_above_n_e"}
        unknown = set(data) - known
        if unknown:
            raise InvalidArgumentError(f"unknown config keys: {sorted(unknown)}")
        mesh = data.get("mesh", {}) or {}
        sampling = data.get("sampling", {}) or {}
        snaps = data.get("snapshots", {}) or {}
        solver = data.get("solver", {}) or {}
        kwargs = dict(
            problem=data.get("problem", "two_param"),
            mesh_n=int(mesh.get("n", 100)),
            box=data.get("box"),
            scheme=sampling.get("scheme", "lhs"),
            n_samples=sampling.get("n"),
            level=sampling.get("level"),
            counts=sampling.get("counts"),
            seed=sampling.get("seed"),
            n_e=int(snaps.get("n_e", 1)),
            k=data.get("k"),
            eps_tol=float(snaps.get("eps_tol", DEFAULT_EPS_TOL)),
            pod_method=snaps.get("method", "svd"),
            tol=float(solver.get("tol", 1e-10)),
            workers=int(solver.get("workers", 1)),
            test_points=data.get("test_points"),
            output_dir=str(data.get("output_dir", "runs/default")),
            export_matrices=bool(data.get("export_matrices", False)),
            allow_k_above_n_e=bool(data.get("allow_k_above_n_e", False)),
        )
        return cls(**kwargs)

    def to_dict(self):
        return {
            "problem": self.problem,
            "mesh": {"n": self.mesh_n},
            "box": [list(map(float, iv)) for iv in self.box],
            "sampling": {k: v for k, v in (("scheme", self.scheme), ("n", self.n_samples),
                                           ("level", self.level), ("counts", self.counts),
                                           ("seed", self.seed)) if v is not None},
            "snapshots": {"n_e": self.n_e, "eps_tol": self.eps_tol, "method": self.pod_method},
            "k": self.k,
            "solver": {"tol": self.tol, "workers": self.workers},
            "test_points": [list(map(float, p)) for p in self.test_points],
            "output_dir": self.output_dir,
            "export_matrices": self.export_matrices,
            "allow_k_above_n_e": self.allow_k_above_n_e,
        }

    def fast(self):
        """Copy with the coarse CI mesh."""
        return replace(self, mesh_n=FAST_MESH_N)

    def resolved_output_dir(self):
        out = Path(self.output_dir)
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not out.is_absolute():
            out = Path(root) / out
        return out


def load_config(path):
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise InvalidArgumentError(f"{path}: invalid YAML: {exc}") from exc
    if not isinstance(data, dict):
        raise InvalidArgumentError(f"{path}: expected a mapping at top level")
    return ExperimentConfig.from_dict(data)


@dataclass
class RunManifest:
    config: dict
    requested_samples: int = None
    n_samples: int = 0
    n_snapshot_columns: int = 0
    rank: int = 0
    n_basis: int = 0
    n_dofs: int = 0
    solver: dict = field(default_factory=dict)
    artifacts: dict = field(default_factory=dict)
    timings: dict = field(default_factory=dict)
    sampling: dict = field(default_factory=dict)

    def write(self, directory):
        atomic_write(Path(directory) / "manifest.json",
                     json.dumps(asdict(self), indent=2, sort_keys=True) + "\n")

    @classmethod
    def read(cls, path):
        path = Path(path)
        if path.is_dir():
            path = path / "manifest.json"
        try:
            data = json.loads(path.read_text())
        except (OSError, ValueError) as exc:
            raise OSError(f"cannot read manifest {path}: {exc}") from exc
        return cls(**data), path.parent


@contextmanager
def _stage(name, timings):
    start = time.perf_counter()
    try:
        yield
    except ExperimentError:
        raise
    except Exception as exc:
        raise ExperimentError(name, exc) from exc
    finally:
        timings[name] = round(time.perf_counter() - start, 6)


def _draw(config):
    return draw_samples(
        config.parameter_box(), config.scheme, n=config.n_samples, seed=config.seed,
        counts=config.counts, level=config.level,
    )


def run_offline(config):
    """Mesh, sample, solve, compress, project and persist; returns the manifest."""
    out = config.resolved_output_dir()
    timings = {}
    manifest = RunManifest(config=config.to_dict(), requested_samples=config.n_samples)

    with _stage("assemble", timings):
        space, op = assemble_problem(config.problem, config.mesh_n)
        manifest.n_dofs = op.n_dofs
    with _stage("sampling", timings):
        samples = _draw(config)
        manifest.n_samples = len(samples)
        manifest.sampling = samples.metadata()
    with _stage("fem_solves", timings):
        solutions = solve_at_samples(op, samples.points, config.n_e, config.tol, config.workers)
        residuals = [max(s.diagnostics["relative_residuals"]) for s in solutions]
        manifest.solver = {
            "method": solutions[0].diagnostics.get("method"),
            "max_relative_residual": float(max(residuals)),
            "tol": config.tol,
        }
    with _stage("pod", timings):
        snaps = build_snapshot_matrix(solutions, config.n_e)
        pod = pod_basis_via_gram if config.pod_method == "gram" else pod_basis
        basis = pod(snaps, config.eps_tol)
        manifest.n_snapshot_columns = snaps.shape[1]
        manifest.rank = basis.rank
        manifest.n_basis = basis.n_basis
    with _stage("projection", timings):
        model = project_operators(op, basis)
    with _stage("persist", timings):
        out.mkdir(parents=True, exist_ok=True)
        samples.to_csv(out / "samples.csv")
        write_points_csv(out / "test_points.csv", np.asarray(config.test_points, dtype=float))
        save_reduced_model(model, out / "model")
        manifest.artifacts = {
            "samples": "samples.csv",
            "samples_meta": "samples.csv.meta.json",
            "test_points": "test_points.csv",
            "reduced_model": "model/reduced_model.npz",
            "reduced_model_meta": "model/reduced_model.json",
            "basis": "model/pod/basis.bin",
            "basis_meta": "model/pod/basis.json",
            "singular_values": "model/pod/singular_values.csv",
        }
        if config.export_matrices:
            names = [f"A{l}" for l in range(op.n_a)] + [f"B{m}" for m in range(op.n_b)]
            for name, mat in zip(names, (*op.a_components, *op.b_components)):
                write_matrix_market(out / "matrices" / f"{name}.mtx", mat)
                manifest.artifacts[f"matrix_{name}"] = f"matrices/{name}.mtx"
    timings["fem_solve_per_sample"] = round(timings["fem_solves"] / max(len(samples), 1), 6)
    manifest.timings = timings
    manifest.write(out)
    return manifest


def run_online(model_path, points=None, k=None, reference=True):
    """Evaluate a persisted model; returns ``(csv_text, results, timings)``.

    The full operator is assembled only when ``reference`` is true.
    """
    manifest, root = RunManifest.read(model_path)
    config = ExperimentConfig.from_dict(manifest.config)
    try:
        model = load_reduced_model(root / "model")
    except (OSError, KeyError, ValueError) as exc:
        raise OSError(f"cannot load reduced model from {root / 'model'}: {exc}") from exc
    if points is None:
        points = config.test_points
    points = np.asarray(points, dtype=float).reshape(-1, model.parameter_dim)
    k = config.k if k is None else int(k)
    scheme, seed = manifest.sampling.get("scheme", config.scheme), config.seed
    timings = {}
    if k == 0 or len(points) == 0:
        return results_to_csv([], scheme, seed, model.n_basis, model.parameter_dim), [], timings
    for mu in points:
        model.check_admissible(mu)

    start = time.perf_counter()
    results = [online_solve(model, mu, k, lift=False) for mu in points]
    timings["online_per_query"] = (time.perf_counter() - start) / len(points)
    if reference:
        start = time.perf_counter()
        _, op = assemble_problem(config.problem, config.mesh_n)
        timings["assemble"] = time.perf_counter() - start
        solver = fem_reference_solver(op, config.tol)
        start = time.perf_counter()
        for res in results:
            res.reference = solver(res.mu, k).eigenvalues[:k]
        timings["fem_per_query"] = (time.perf_counter() - start) / len(points)
    text = results_to_csv(results, scheme, seed, model.n_basis, model.parameter_dim)
    return text, results, timings


def emit_sample_figure_data(config):
    """Write training and test point CSVs for plotting; returns their paths."""
    out = config.resolved_output_dir() / "figure"
    out.mkdir(parents=True, exist_ok=True)
    samples = _draw(config)
    train = out / "training_points.csv"
    test = out / "test_points.csv"
    samples.to_csv(train)
    write_points_csv(test, np.asarray(config.test_points, dtype=float))
    return train, test


SUMMARY_HEADER = "scheme,seed,n_samples,N,n_values,max_rel_error,geomean_rel_error"


def summarize(scheme, seed, n_samples, n_basis, results):
    errs = np.concatenate([r.relative_errors for r in results]) if results else np.empty(0)
    if errs.size:
        worst = float(errs.max())
        gmean = float(np.exp(np.mean(np.log(np.maximum(errs, np.finfo(float).tiny)))))
    else:
        worst = gmean = float("nan")
    return {"scheme": scheme, "seed": seed, "n_samples": n_samples, "N": n_basis,
            "n_values": int(errs.size), "max_rel_error": worst, "geomean_rel_error": gmean}


def compare_schemes(configs):
    """Run each config end to end; returns ``(summary_csv, rows)``."""
    configs = list(configs)
    if not configs:
        raise InvalidArgumentError("need at least one config")
    first = configs[0]
    for c in configs[1:]:
        if (c.problem, c.mesh_n) != (first.problem, first.mesh_n):
            raise InvalidArgumentError(
                f"configs disagree on problem/mesh: {(c.problem, c.mesh_n)} vs "
                f"{(first.problem, first.mesh_n)}"
            )
        if c.k != first.k or not np.array_equal(np.asarray(c.test_points), np.asarray(first.test_points)):
            raise InvalidArgumentError("configs must share k and test points")
    _, op = assemble_problem(first.problem, first.mesh_n)
    solver = fem_reference_solver(op, first.tol)
    rows = []
    for c in configs:
        manifest = run_offline(c)
        model = load_reduced_model(c.resolved_output_dir() / "model")
        results = evaluate_test_suite(model, solver, c.test_points, c.k) if c.k else []
        rows.append(summarize(c.scheme, c.seed, manifest.n_samples, manifest.n_basis, results))
    lines = [SUMMARY_HEADER]
    for r in rows:
        lines.append(
            f"{r['scheme']},{'' if r['seed'] is None else r['seed']},{r['n_samples']},{r['N']},"
            f"{r['n_values']},{r['max_rel_error']:.6e},{r['geomean_rel_error']:.6e}"
        )
    return "\n".join(lines) + "\n", rows
