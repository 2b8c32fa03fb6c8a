"""Polynomial feature bases and linear hypotheses ``f(x) = W phi(x)``."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from pathlib import Path

import numpy as np

# Full cubic interaction basis over three covariates, in fixed order.
BASIS_NAMES = ("1", "x1", "x2", "x3", "x1x2", "x2x3", "x1x3", "x1x2x3")


class FeatureSpec(enum.Enum):
    WELL = "well"
    DEG2 = "deg2"
    DEG4 = "deg4"

    @property
    def columns(self) -> tuple[int, ...]:
        return _COLUMNS[self]

    @property
    def k(self) -> int:
        return len(self.columns)

    @property
    def names(self) -> tuple[str, ...]:
        return tuple(BASIS_NAMES[j] for j in self.columns)

    @classmethod
    def parse(cls, value: "str | FeatureSpec") -> "FeatureSpec":
        if isinstance(value, FeatureSpec):
            return value
        key = str(value).strip().lower()
        aliases = {"well": cls.WELL, "wellspecified": cls.WELL, "deg2": cls.DEG2,
                   "misspecdeg2": cls.DEG2, "deg4": cls.DEG4, "misspecdeg4": cls.DEG4}
        try:
            return aliases[key.replace("_", "").replace("-", "")]
        except KeyError:
            raise ValueError(f"unknown feature spec {value!r}") from None


_COLUMNS = {
    FeatureSpec.WELL: (0, 1, 2, 3, 4, 5, 6, 7),
    # degree-2 misspecification drops x1x3 and x1x2x3
    FeatureSpec.DEG2: (0, 1, 2, 3, 4, 5),
    # degree-4 misspecification drops all four interactions
    FeatureSpec.DEG4: (0, 1, 2, 3),
}


def full_basis(X: np.ndarray) -> np.ndarray:
    X = np.asarray(X, dtype=float)
    x1, x2, x3 = X[..., 0], X[..., 1], X[..., 2]
    return np.stack([np.ones_like(x1), x1, x2, x3, x1 * x2, x2 * x3, x1 * x3, x1 * x2 * x3], axis=-1)


def feature_map(spec: FeatureSpec, X: np.ndarray) -> np.ndarray:
    """Evaluate the basis of ``spec`` at a point ``(3,)`` or a batch ``(n, 3)``."""
    X = np.asarray(X, dtype=float)
    if X.shape[-1] != 3:
        raise ValueError(f"covariates must have 3 columns, got shape {X.shape}")
    return full_basis(X)[..., list(spec.columns)]


@dataclass(frozen=True)
class LinearHypothesis:
    """``f(x) = W phi(x)`` with ``W`` of shape ``(output_dim, k)``."""

    W: np.ndarray
    spec: FeatureSpec

    def __post_init__(self):
        W = np.array(self.W, dtype=float)
        if W.ndim != 2 or W.shape[1] != self.spec.k:
            raise ValueError(f"W must have {self.spec.k} columns for {self.spec.name}, got {W.shape}")
        if not np.isfinite(W).all():
            raise ValueError("W has non-finite entries")
        W.setflags(write=False)
        object.__setattr__(self, "W", W)

    @property
    def output_dim(self) -> int:
        return self.W.shape[0]

    def predict(self, X: np.ndarray) -> np.ndarray:
        return feature_map(self.spec, X) @ self.W.T

    def embed(self, spec: FeatureSpec) -> "LinearHypothesis":
        """Zero-pad into a larger basis containing this one."""
        if not set(self.spec.columns) <= set(spec.columns):
            raise ValueError(f"{self.spec.name} is not a restriction of {spec.name}")
        W = np.zeros((self.output_dim, spec.k))
        for j, col in enumerate(self.spec.columns):
            W[:, spec.columns.index(col)] = self.W[:, j]
        return LinearHypothesis(W, spec)

    @classmethod
    def zeros(cls, output_dim: int, spec: FeatureSpec) -> "LinearHypothesis":
        return cls(np.zeros((output_dim, spec.k)), spec)


def predict(h: LinearHypothesis, X: np.ndarray) -> np.ndarray:
    return h.predict(X)


def write_matrix(path, W: np.ndarray, names, comments=()) -> None:
    """Text matrix: optional ``#`` comment lines, a header of column names, one row per output."""
    lines = [f"# {c}" for c in comments]
    lines.append(",".join(names))
    lines += [",".join(repr(float(v)) for v in row) for row in np.asarray(W)]
    Path(path).write_text("\n".join(lines) + "\n")


def read_matrix(path) -> tuple[np.ndarray, tuple[str, ...], list[str]]:
    comments, body = [], []
    for line in Path(path).read_text().splitlines():
        if line.startswith("#"):
            comments.append(line[1:].strip())
        elif line.strip():
            body.append(line)
    names = tuple(body[0].split(","))
    W = np.array([[float(v) for v in row.split(",")] for row in body[1:]]).reshape(-1, len(names))
    return W, names, comments


def save_hypothesis(path, h: LinearHypothesis) -> None:
    write_matrix(path, h.W, h.spec.names)


def load_hypothesis(path) -> LinearHypothesis:
    W, names, _ = read_matrix(path)
    for spec in FeatureSpec:
        if spec.names == names:
            return LinearHypothesis(W, spec)
    raise ValueError(f"header {names} matches no feature spec")
