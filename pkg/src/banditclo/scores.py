"""Score functions whose inner product with a policy's decision is unbiased for its value.

Linear-structure scores act on edge-cost vectors of length d:

    DM   f(x)
    ISW  Sigma_inv(x) z c
    DR   f(x) + Sigma_inv(x) z (c - z'f(x))

Naive scores treat the m paths as unrelated discrete actions and act on
vectors of length m (entry-wise operations, one-hot ``z``).
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from banditclo.nuisance import InverseVariant, PInv, PropensityModel, SigmaEstimator


class SupportError(ValueError):
    """Observed action has zero estimated propensity."""


class ScoreKind(enum.Enum):
    DM = "DM"
    ISW = "ISW"
    DR = "DR"
    NAIVE_DM = "NaiveDM"
    NAIVE_IPW = "NaiveIPW"
    NAIVE_DR = "NaiveDR"

    @property
    def is_naive(self) -> bool:
        return self.value.startswith("Naive")

    @property
    def needs_propensity(self) -> bool:
        return self not in (ScoreKind.DM, ScoreKind.NAIVE_DM)

    @property
    def needs_regression(self) -> bool:
        return self not in (ScoreKind.ISW, ScoreKind.NAIVE_IPW)


@dataclass(frozen=True)
class ScoreSpec:
    kind: ScoreKind
    variant: InverseVariant = PInv()
    clamp: float | None = None  # optional bound on ||theta||, off by default


def _clamp(theta: np.ndarray, bound: float | None) -> np.ndarray:
    if bound is None:
        return theta
    norms = np.linalg.norm(theta, axis=-1, keepdims=True)
    return theta * np.minimum(1.0, bound / np.maximum(norms, 1e-300))


def score_linear(kind: ScoreKind, x, z, c: float, f_hat, sigma_inv: np.ndarray | None) -> np.ndarray:
    """Score at a single observation; ``sigma_inv`` is the regularized inverse at ``x``."""
    kind = ScoreKind(kind)
    z = np.asarray(z, dtype=float)
    if kind is ScoreKind.DM:
        return f_hat.predict(np.asarray(x)[None, :])[0]
    if sigma_inv is None or sigma_inv.shape != (z.size, z.size):
        raise ValueError("sigma_inv must be a d x d matrix matching z")
    if kind is ScoreKind.ISW:
        return sigma_inv @ z * c
    if kind is ScoreKind.DR:
        fx = f_hat.predict(np.asarray(x)[None, :])[0]
        if fx.shape != z.shape:
            raise ValueError(f"prediction has shape {fx.shape}, decision has shape {z.shape}")
        return fx + sigma_inv @ z * (c - z @ fx)
    raise ValueError(f"{kind} is not a linear-structure score")


def linear_scores(
    spec: ScoreSpec, X: np.ndarray, Z_inc: np.ndarray, C: np.ndarray,
    f_hat=None, sigma: SigmaEstimator | None = None,
) -> np.ndarray:
    """Batched :func:`score_linear`, grouping samples by propensity cell."""
    kind = spec.kind
    if kind is ScoreKind.DM:
        return _clamp(f_hat.predict(X), spec.clamp)
    if sigma is None:
        raise ValueError(f"{kind.value} needs a Sigma estimator")
    if kind is ScoreKind.ISW:
        theta = sigma.apply_inverse(X, Z_inc * C[:, None])
    elif kind is ScoreKind.DR:
        F = f_hat.predict(X)
        resid = C - np.einsum("nd,nd->n", Z_inc, F)
        theta = F + sigma.apply_inverse(X, Z_inc * resid[:, None])
    else:
        raise ValueError(f"{kind} is not a linear-structure score")
    return _clamp(theta, spec.clamp)


def score_naive(kind: ScoreKind, x, action: int, c: float, f_tilde, propensity: PropensityModel) -> np.ndarray:
    kind = ScoreKind(kind)
    out = naive_scores(ScoreSpec(kind), np.asarray(x)[None, :], np.array([action]), np.array([c]),
                       f_tilde, propensity)
    return out[0]


def naive_scores(
    spec: ScoreSpec, X: np.ndarray, A: np.ndarray, C: np.ndarray,
    f_tilde=None, propensity: PropensityModel | None = None,
) -> np.ndarray:
    kind = spec.kind
    A = np.asarray(A, dtype=int)
    if kind is ScoreKind.NAIVE_DM:
        return _clamp(f_tilde.predict(X), spec.clamp)
    if propensity is None:
        raise ValueError(f"{kind.value} needs a propensity model")
    e = propensity.prob_of(X, A)
    if np.any(e <= 0):
        bad = int(np.flatnonzero(e <= 0)[0])
        raise SupportError(f"zero propensity for observed action {A[bad]} (sample {bad})")
    n = len(A)
    rows = np.arange(n)
    if kind is ScoreKind.NAIVE_IPW:
        theta = np.zeros((n, propensity.m))
        theta[rows, A] = C / e
    elif kind is ScoreKind.NAIVE_DR:
        theta = np.array(f_tilde.predict(X), dtype=float)
        theta[rows, A] += (C - theta[rows, A]) / e
    else:
        raise ValueError(f"{kind} is not a naive score")
    return _clamp(theta, spec.clamp)
