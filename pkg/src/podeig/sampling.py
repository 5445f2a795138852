"""Training-set generators over a rectangular parameter box.

Four schemes: i.i.d. uniform random, Latin hypercube, uniform tensor grid,
and the Smolyak sparse grid on nested Clenshaw-Curtis nodes. Stochastic
schemes draw from ``numpy.random.Generator(PCG64(seed))``.
"""

import csv
import itertools
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .exceptions import InvalidArgumentError

__all__ = [
    "ParameterBox",
    "SampleSet",
    "random_sample",
    "lhs_sample",
    "uniform_tensor_sample",
    "uniform_budget_sample",
    "smolyak_cc_sample",
    "smolyak_level_for_budget",
    "clenshaw_curtis_nodes",
    "draw_samples",
    "write_points_csv",
    "read_points_csv",
    "SCHEMES",
]

logger = logging.getLogger(__name__)

SCHEMES = ("random", "lhs", "uniform", "smolyak")


@dataclass(frozen=True)
class ParameterBox:
    """Closed box ``[lo_0, hi_0] x ... x [lo_{p-1}, hi_{p-1}]``."""

    lower: tuple
    upper: tuple

    def __post_init__(self):
        lo = tuple(float(v) for v in np.ravel(self.lower))
        hi = tuple(float(v) for v in np.ravel(self.upper))
        if len(lo) != len(hi) or not lo:
            raise InvalidArgumentError("box bounds must be non-empty and of equal length")
        if not all(a < b for a, b in zip(lo, hi)):
            raise InvalidArgumentError(f"box needs lo < hi in every dimension, got {lo}, {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def from_intervals(cls, intervals):
        intervals = [tuple(iv) for iv in intervals]
        return cls(tuple(a for a, _ in intervals), tuple(b for _, b in intervals))

    @property
    def dim(self):
        return len(self.lower)

    def intervals(self):
        return list(zip(self.lower, self.upper))

    def contains(self, points):
        pts = np.atleast_2d(points)
        return np.all((pts >= self.lower) & (pts <= self.upper), axis=1)

    def from_unit(self, t):
        """Map points of ``[0, 1]^p`` into the box; endpoints land exactly."""
        t = np.atleast_2d(t)
        lo, hi = np.asarray(self.lower), np.asarray(self.upper)
        return np.clip(lo * (1.0 - t) + hi * t, lo, hi)


@dataclass(frozen=True)
class SampleSet:
    """Parameter points drawn by one scheme.

    Attributes
    ----------
    points : (n_s, p) ndarray
    scheme : str
    box : ParameterBox
    seed : int or None
    params : dict
        Generation parameters (``n``, ``counts``, ``level``, ``requested``).
    """

    points: np.ndarray
    scheme: str
    box: ParameterBox
    seed: int = None
    params: dict = field(default_factory=dict)

    def __len__(self):
        return self.points.shape[0]

    def __iter__(self):
        return iter(self.points)

    def metadata(self):
        return {
            "scheme": self.scheme,
            "seed": self.seed,
            "n_points": len(self),
            "box": self.box.intervals(),
            "params": self.params,
        }

    def to_csv(self, path):
        """Write ``path`` plus a ``<path>.meta.json`` sidecar."""
        path = Path(path)
        write_points_csv(path, self.points)
        meta = path.with_name(path.name + ".meta.json")
        meta.write_text(json.dumps(self.metadata(), indent=2, sort_keys=True) + "\n")

    @classmethod
    def from_csv(cls, path):
        path = Path(path)
        meta = json.loads(path.with_name(path.name + ".meta.json").read_text())
        return cls(
            read_points_csv(path),
            meta["scheme"],
            ParameterBox.from_intervals(meta["box"]),
            meta["seed"],
            meta["params"],
        )


def _lexsorted(points):
    order = np.lexsort(points.T[::-1])
    return points[order]


def _rng(seed):
    if seed is None:
        raise InvalidArgumentError("stochastic schemes need an explicit integer seed")
    return np.random.Generator(np.random.PCG64(int(seed)))


def _check_count(n, name="n"):
    if isinstance(n, bool) or int(n) != n or n < 1:
        raise InvalidArgumentError(f"{name} must be a positive integer, got {n!r}")
    return int(n)


def random_sample(box, n, seed):
    """``n`` i.i.d. uniform points, in generation order."""
    n = _check_count(n)
    u = _rng(seed).random((n, box.dim))
    return SampleSet(box.from_unit(u), "random", box, int(seed), {"n": n})


def lhs_sample(box, n, seed):
    """Latin hypercube design: one point per stratum in each dimension."""
    n = _check_count(n)
    rng = _rng(seed)
    u = np.empty((n, box.dim))
    for d in range(box.dim):
        strata = rng.permutation(n)
        u[:, d] = (strata + rng.random(n)) / n
        # (k + r)/n may round up onto the next stratum edge
        u[:, d] = np.minimum(u[:, d], np.nextafter((strata + 1) / n, 0.0))
    return SampleSet(box.from_unit(u), "lhs", box, int(seed), {"n": n})


def uniform_tensor_sample(box, counts):
    """Cartesian grid with ``counts[d]`` equispaced points per dimension,
    endpoints included."""
    counts = [int(c) for c in np.ravel(counts)]
    if len(counts) != box.dim:
        raise InvalidArgumentError(f"need {box.dim} counts, got {len(counts)}")
    if any(c < 2 for c in counts):
        raise InvalidArgumentError(f"every count must be >= 2, got {counts}")
    axes = [np.linspace(lo, hi, c) for (lo, hi), c in zip(box.intervals(), counts)]
    pts = np.array(list(itertools.product(*axes)), dtype=float)
    return SampleSet(_lexsorted(pts), "uniform", box, None, {"counts": counts})


def uniform_budget_sample(box, n):
    """Uniform design for a point budget ``n``.

    Uses a full ``c^p`` tensor grid when ``n`` is a perfect power. In 2D, 13
    points are laid out as the 3 x 3 grid plus the centres of its four cells.
    Otherwise the largest tensor grid not exceeding ``n`` is used.
    """
    n = _check_count(n)
    p = box.dim
    c = int(round(n ** (1.0 / p)))
    if c >= 2 and c**p == n:
        out = uniform_tensor_sample(box, [c] * p)
        return SampleSet(out.points, "uniform", box, None, {"counts": [c] * p, "requested": n})
    if p == 2 and n == 13:
        grid = np.array(list(itertools.product([0.0, 0.5, 1.0], repeat=2)))
        centres = np.array(list(itertools.product([0.25, 0.75], repeat=2)))
        pts = _lexsorted(box.from_unit(np.vstack([grid, centres])))
        logger.info("uniform budget 13 in 2D: 3x3 tensor grid plus 4 cell centres")
        return SampleSet(pts, "uniform", box, None,
                         {"counts": [3, 3], "cell_centres": 4, "requested": n})
    c = 2
    while (c + 1) ** p <= n:
        c += 1
    logger.warning("uniform budget %d is not a tensor count in %dD; using %d^%d = %d points",
                   n, p, c, p, c**p)
    out = uniform_tensor_sample(box, [c] * p)
    return SampleSet(out.points, "uniform", box, None, {"counts": [c] * p, "requested": n})


def clenshaw_curtis_nodes(level):
    """Nested Clenshaw-Curtis nodes on [-1, 1]: ``{0}`` at level 0, else
    ``cos(pi j / 2^level)`` for ``j = 0..2^level``, symmetrised so that
    reflected nodes are exact negatives."""
    if level < 0:
        raise InvalidArgumentError(f"level must be >= 0, got {level}")
    if level == 0:
        return np.zeros(1)
    m = 2**level
    j = np.arange(m + 1)
    x = np.cos(np.pi * j / m)
    x = 0.5 * (x - x[::-1])
    x[m // 2] = 0.0
    return x


def _smolyak_unit_points(dim, level):
    nodes = [clenshaw_curtis_nodes(l) for l in range(level + 1)]
    found = set()
    for index in itertools.product(range(level + 1), repeat=dim):
        if sum(index) > level:
            continue
        for pt in itertools.product(*(nodes[l] for l in index)):
            found.add(pt)
    return np.array(sorted(found), dtype=float)


def smolyak_cc_sample(box, level):
    """Level-``level`` Smolyak sparse grid on Clenshaw-Curtis nodes."""
    if isinstance(level, bool) or int(level) != level or level < 0:
        raise InvalidArgumentError(f"level must be a non-negative integer, got {level!r}")
    level = int(level)
    x = _smolyak_unit_points(box.dim, level)
    pts = _lexsorted(box.from_unit((x + 1.0) / 2.0))
    return SampleSet(pts, "smolyak", box, None, {"level": level})


def smolyak_level_for_budget(dim, n):
    """Largest level whose sparse grid has at most ``n`` points (at least 0)."""
    level = 0
    while len(_smolyak_unit_points(dim, level + 1)) <= n:
        level += 1
    return level


def draw_samples(box, scheme, n=None, seed=None, counts=None, level=None):
    """Dispatch to a scheme; deterministic grids accept ``counts``/``level``
    or a point budget ``n``."""
    if scheme == "random":
        return random_sample(box, n, seed)
    if scheme == "lhs":
        return lhs_sample(box, n, seed)
    if scheme == "uniform":
        if counts is not None:
            return uniform_tensor_sample(box, counts)
        return uniform_budget_sample(box, n)
    if scheme == "smolyak":
        params = {}
        if level is None:
            level = smolyak_level_for_budget(box.dim, _check_count(n))
            params["requested"] = int(n)
        out = smolyak_cc_sample(box, level)
        if params and len(out) != n:
            logger.info("smolyak budget %d in %dD: level %d gives %d points",
                        n, box.dim, level, len(out))
        return SampleSet(out.points, "smolyak", box, None, {**out.params, **params})
    raise InvalidArgumentError(f"unknown scheme {scheme!r}; choose from {SCHEMES}")


def write_points_csv(path, points):
    points = np.atleast_2d(np.asarray(points, dtype=float))
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow([f"dim{d}" for d in range(points.shape[1])])
        for row in points:
            writer.writerow([repr(float(v)) for v in row])


def read_points_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows:
        raise InvalidArgumentError(f"{path}: empty points file")
    header, body = rows[0], rows[1:]
    if not all(h == f"dim{d}" for d, h in enumerate(header)):
        raise InvalidArgumentError(f"{path}: expected header dim0,dim1,..., got {header}")
    if not body:
        return np.empty((0, len(header)))
    return np.array([[float(v) for v in row] for row in body])
