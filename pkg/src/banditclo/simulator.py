"""Synthetic data-generating process for the stochastic shortest-path benchmark.

Covariates are three independent standard normals.  Edge costs are
``Y = f0(X) + eps`` with ``f0`` a cubic polynomial whose constant term is 3
on every edge and whose remaining coefficients are drawn once from
``Unif[0, 1]``; ``eps`` is iid ``Unif[-0.5, 0.5]`` per edge.  A logging
policy picks a path ``Z`` given ``X`` only, and just ``C = Y'Z`` is logged.
"""

from __future__ import annotations

import csv
import enum
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from banditclo.features import FeatureSpec, LinearHypothesis, full_basis
from banditclo.polytope import GridInstance, PathMatrix, VertexOracle

INTERCEPT = 3.0
NOISE_HALF_WIDTH = 0.5


@dataclass(frozen=True)
class GroundTruth:
    coeffs: np.ndarray  # (d, 8), first column is the constant 3
    noise_half_width: float = NOISE_HALF_WIDTH

    @property
    def d(self) -> int:
        return self.coeffs.shape[0]

    def f0(self, X: np.ndarray) -> np.ndarray:
        return full_basis(X) @ self.coeffs.T

    def as_hypothesis(self) -> LinearHypothesis:
        return LinearHypothesis(self.coeffs, FeatureSpec.WELL)

    def with_noise(self, half_width: float) -> "GroundTruth":
        return GroundTruth(self.coeffs, float(half_width))


def init_ground_truth(seed: int | np.random.Generator, instance: GridInstance) -> GroundTruth:
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    coeffs = np.empty((instance.d, 8))
    coeffs[:, 0] = INTERCEPT
    coeffs[:, 1:] = rng.uniform(0.0, 1.0, size=(instance.d, 7))
    coeffs.setflags(write=False)
    return GroundTruth(coeffs)


def f0_eval(gt: GroundTruth, x: np.ndarray) -> np.ndarray:
    return gt.f0(x)


def sample_covariates(n: int, rng: np.random.Generator, p: int = 3) -> np.ndarray:
    return rng.standard_normal((n, p))


def sample_full(gt: GroundTruth, n: int, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    """Draw ``(X, Y)``; covariates and noise come from separate child streams."""
    if n < 1:
        raise ValueError("n must be positive")
    cov_rng, noise_rng = rng.spawn(2)
    X = sample_covariates(n, cov_rng)
    h = gt.noise_half_width
    Y = gt.f0(X) + noise_rng.uniform(-h, h, size=(n, gt.d))
    return X, Y


class LoggingKind(enum.Enum):
    UNIFORM = "uniform"
    X1 = "x1"
    X1X2 = "x1x2"

    @classmethod
    def parse(cls, value: "str | LoggingKind") -> "LoggingKind":
        if isinstance(value, LoggingKind):
            return value
        key = str(value).strip().lower().replace("_", "").replace("-", "")
        aliases = {"uniform": cls.UNIFORM, "uniformrandom": cls.UNIFORM, "random": cls.UNIFORM,
                   "x1": cls.X1, "x1policy": cls.X1, "x1x2": cls.X1X2, "x1x2policy": cls.X1X2}
        try:
            return aliases[key]
        except KeyError:
            raise ValueError(f"unknown logging policy {value!r}") from None


# Probability of choosing group A in each covariate region.
_GROUP_A_PROB = {
    LoggingKind.X1: (2 / 3, 1 / 3),  # x1 > 0, x1 <= 0
    # (x1>0, x2>0), (x1>0, x2<=0), (x1<=0, x2>0), (x1<=0, x2<=0)
    LoggingKind.X1X2: (2 / 3, 1 / 3, 3 / 4, 1 / 4),
}


@dataclass(frozen=True)
class LoggingPolicy:
    kind: LoggingKind
    m: int
    removed: tuple[int, ...] = ()
    group_a: tuple[int, ...] = ()
    group_b: tuple[int, ...] = ()

    @property
    def n_regions(self) -> int:
        return 1 if self.kind is LoggingKind.UNIFORM else len(_GROUP_A_PROB[self.kind])

    def region_ids(self, X: np.ndarray) -> np.ndarray:
        """Covariate region index; the logging distribution is constant on each region."""
        X = np.atleast_2d(X)
        if self.kind is LoggingKind.UNIFORM:
            return np.zeros(len(X), dtype=int)
        pos1 = X[:, 0] > 0
        if self.kind is LoggingKind.X1:
            return np.where(pos1, 0, 1)
        pos2 = X[:, 1] > 0
        return np.where(pos1, np.where(pos2, 0, 1), np.where(pos2, 2, 3))

    @property
    def region_probs(self) -> np.ndarray:
        if self.kind is LoggingKind.UNIFORM:
            return np.full((1, self.m), 1.0 / self.m)
        probs = np.zeros((self.n_regions, self.m))
        a, b = list(self.group_a), list(self.group_b)
        for r, pa in enumerate(_GROUP_A_PROB[self.kind]):
            probs[r, a] = pa / len(a)
            probs[r, b] = (1.0 - pa) / len(b)
        return probs

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.region_probs.max(axis=0) > 0)

    def probabilities(self, X: np.ndarray) -> np.ndarray:
        return self.region_probs[self.region_ids(X)]

    def sample(self, X: np.ndarray, rng: np.random.Generator) -> np.ndarray:
        X = np.atleast_2d(X)
        if self.kind is LoggingKind.UNIFORM:
            return rng.integers(self.m, size=len(X))
        regions = self.region_ids(X)
        Z = np.empty(len(X), dtype=int)
        for r, p in enumerate(self.region_probs):
            mask = regions == r
            Z[mask] = rng.choice(self.m, size=int(mask.sum()), p=p)
        return Z


def optimal_path_indices(gt: GroundTruth, paths: PathMatrix, X: np.ndarray) -> np.ndarray:
    return VertexOracle.for_paths(paths).argmin(gt.f0(X))


def build_logging_policy(
    kind: LoggingKind | str,
    gt: GroundTruth,
    paths: PathMatrix,
    test_X: np.ndarray | None = None,
    n_removed: int = 20,
    n_retained: int = 50,
) -> LoggingPolicy:
    """Construct a logging policy.

    Covariate-dependent kinds drop the ``n_removed`` paths that are most often
    optimal on ``test_X`` (ties to the smaller index, padded with the
    smallest-index paths that are never optimal) and split the retained paths
    in enumeration order into two equal groups.
    """
    kind = LoggingKind.parse(kind)
    if kind is LoggingKind.UNIFORM:
        return LoggingPolicy(kind, paths.m)
    if test_X is None or len(test_X) == 0:
        raise ValueError("covariate-dependent logging needs reference covariates")
    if paths.m - n_removed < n_retained:
        raise ValueError(
            f"removing {n_removed} of {paths.m} paths leaves fewer than {n_retained}; grid too small"
        )
    counts = np.bincount(optimal_path_indices(gt, paths, test_X), minlength=paths.m)
    order = sorted(range(paths.m), key=lambda j: (-counts[j], j))
    removed = tuple(sorted(order[:n_removed]))
    retained = [j for j in range(paths.m) if j not in removed]
    half = (len(retained) + 1) // 2
    return LoggingPolicy(kind, paths.m, removed, tuple(retained[:half]), tuple(retained[half:]))


class _Gate:
    """Records whether hidden full-feedback costs were ever read."""

    def __init__(self):
        self.opened = False


@dataclass
class BanditDataset:
    X: np.ndarray
    Z: np.ndarray
    C: np.ndarray
    _Y: np.ndarray | None = field(default=None, repr=False)
    _gate: _Gate = field(default_factory=_Gate, repr=False)

    def __post_init__(self):
        self.X = np.asarray(self.X, dtype=float)
        self.Z = np.asarray(self.Z, dtype=int)
        self.C = np.asarray(self.C, dtype=float)
        if not (len(self.X) == len(self.Z) == len(self.C)):
            raise ValueError("X, Z and C must have the same length")

    def __len__(self) -> int:
        return len(self.C)

    @property
    def n(self) -> int:
        return len(self.C)

    @property
    def has_hidden(self) -> bool:
        return self._Y is not None

    @property
    def hidden_accessed(self) -> bool:
        return self._gate.opened

    def diagnostics_full_costs(self) -> np.ndarray:
        """Full edge-cost vectors.  For tests and audits only; learners never call this."""
        if self._Y is None:
            raise LookupError("dataset carries no hidden costs")
        self._gate.opened = True
        return self._Y

    def incidence(self, paths: PathMatrix) -> np.ndarray:
        return paths.incidence[self.Z]

    def subset(self, idx) -> "BanditDataset":
        idx = np.asarray(idx)
        Y = None if self._Y is None else self._Y[idx]
        return BanditDataset(self.X[idx], self.Z[idx], self.C[idx], Y, self._gate)


def generate_dataset(
    gt: GroundTruth, policy: LoggingPolicy, paths: PathMatrix, n: int, rng: np.random.Generator
) -> BanditDataset:
    full_rng, log_rng = rng.spawn(2)
    X, Y = sample_full(gt, n, full_rng)
    Z = policy.sample(X, log_rng)
    C = np.einsum("ij,ij->i", Y, paths.incidence[Z])
    return BanditDataset(X, Z, C, Y)


DATASET_HEADER = ("x1", "x2", "x3", "path_index", "cost")


def save_dataset(path, data: BanditDataset) -> None:
    """Columnar text export; hidden costs are never written."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(DATASET_HEADER)
        for x, z, c in zip(data.X, data.Z, data.C):
            w.writerow([repr(float(x[0])), repr(float(x[1])), repr(float(x[2])), int(z), repr(float(c))])


def load_dataset(path) -> BanditDataset:
    with open(Path(path), newline="") as fh:
        r = csv.reader(fh)
        header = tuple(next(r))
        if header != DATASET_HEADER:
            raise ValueError(f"unexpected header {header}")
        rows = [row for row in r if row]
    X = np.array([[float(v) for v in row[:3]] for row in rows]).reshape(-1, 3)
    Z = np.array([int(row[3]) for row in rows], dtype=int)
    C = np.array([float(row[4]) for row in rows])
    return BanditDataset(X, Z, C)
