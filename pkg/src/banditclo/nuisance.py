"""Nuisance estimation: bandit-feedback ridge regression, propensities, and the
second-moment matrix ``Sigma(x) = E[ZZ' | X = x]`` with its regularized inverses."""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import linalg

from banditclo.features import FeatureSpec, LinearHypothesis, feature_map
from banditclo.polytope import PathMatrix
from banditclo.simulator import BanditDataset


class DegenerateFitWarning(RuntimeWarning):
    pass


# --------------------------------------------------------------------------
# Regression


def bandit_design(phi: np.ndarray, Z_inc: np.ndarray) -> np.ndarray:
    """Rows ``z_i (x) phi_i``, so that ``z' W phi = r . vec(W)`` with row-major ``vec``."""
    return np.einsum("nd,nk->ndk", Z_inc, phi).reshape(len(phi), -1)


def ridge_solve(R: np.ndarray, y: np.ndarray, lam: float) -> np.ndarray:
    """Minimize ``||y - R w||^2 + lam ||w||^2`` through the normal equations."""
    gram = R.T @ R
    rhs = R.T @ y
    if lam > 0:
        gram[np.diag_indices_from(gram)] += lam
        return linalg.cho_solve(linalg.cho_factor(gram), rhs)
    try:
        cf = linalg.cho_factor(gram)
        w = linalg.cho_solve(cf, rhs)
        if np.isfinite(w).all():
            return w
    except linalg.LinAlgError:
        pass
    warnings.warn("singular Gram matrix with zero ridge; returning minimum-norm solution",
                  DegenerateFitWarning, stacklevel=3)
    return np.linalg.pinv(gram, hermitian=True) @ rhs


def fit_bandit_ridge(
    data: BanditDataset, spec: FeatureSpec, paths: PathMatrix, lam: float = 1.0
) -> LinearHypothesis:
    """Least squares of ``C`` on ``Z' W phi(X)`` with a Frobenius ridge on ``W``."""
    if lam < 0:
        raise ValueError("ridge penalty must be nonnegative")
    if data.n < 1:
        raise ValueError("empty dataset")
    phi = feature_map(spec, data.X)
    R = bandit_design(phi, data.incidence(paths))
    w = ridge_solve(R, data.C, lam)
    return LinearHypothesis(w.reshape(paths.d, spec.k), spec)


def fit_per_action_ridge(
    data: BanditDataset, spec: FeatureSpec, m: int, lam: float = 1.0
) -> LinearHypothesis:
    """Separate ridge regressions of ``C`` on ``phi(X)`` within each action's subsample.

    Actions never observed fall back to a pooled regression on all data.
    The result maps ``x`` to ``m`` predicted total costs.
    """
    if data.n < 1:
        raise ValueError("empty dataset")
    phi = feature_map(spec, data.X)
    pooled = ridge_solve(phi, data.C, lam)
    W = np.tile(pooled, (m, 1))
    for a in np.unique(data.Z):
        mask = data.Z == a
        W[a] = ridge_solve(phi[mask], data.C[mask], lam)
    return LinearHypothesis(W, spec)


# --------------------------------------------------------------------------
# Propensity models
#
# Every model is piecewise constant: ``leaf_ids`` maps covariates to a cell and
# ``leaf_probs[cell]`` is the distribution over the m paths there.  That lets
# Sigma and its inverse be computed once per cell.


class PropensityModel:
    leaf_probs: np.ndarray

    @property
    def m(self) -> int:
        return self.leaf_probs.shape[1]

    @property
    def n_leaves(self) -> int:
        return self.leaf_probs.shape[0]

    def leaf_ids(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict_proba(self, X: np.ndarray) -> np.ndarray:
        return self.leaf_probs[self.leaf_ids(X)]

    def prob_of(self, X: np.ndarray, actions: np.ndarray) -> np.ndarray:
        return self.leaf_probs[self.leaf_ids(X), np.asarray(actions, dtype=int)]


@dataclass
class EmpiricalFrequency(PropensityModel):
    leaf_probs: np.ndarray

    def leaf_ids(self, X):
        return np.zeros(len(np.atleast_2d(X)), dtype=int)


@dataclass
class FixedPropensity(PropensityModel):
    """Known piecewise-constant propensities, e.g. the true logging policy."""

    leaf_probs: np.ndarray
    region_fn: object = field(repr=False)

    def leaf_ids(self, X):
        return np.asarray(self.region_fn(np.atleast_2d(X)), dtype=int)

    @classmethod
    def from_logging(cls, policy) -> "FixedPropensity":
        return cls(policy.region_probs, policy.region_ids)

    @classmethod
    def constant(cls, probs: np.ndarray) -> "FixedPropensity":
        probs = np.asarray(probs, dtype=float)
        return cls(probs[None, :] / probs.sum(), lambda X: np.zeros(len(X), dtype=int))


@dataclass
class AxisTree(PropensityModel):
    """Axis-aligned classification tree over path labels.

    ``feature[node] < 0`` marks a leaf, whose row in ``leaf_probs`` is
    ``leaf_index[node]``.  Samples with ``x[feature] <= threshold`` go left.
    """

    feature: np.ndarray
    threshold: np.ndarray
    left: np.ndarray
    right: np.ndarray
    leaf_index: np.ndarray
    leaf_probs: np.ndarray

    def leaf_ids(self, X):
        X = np.atleast_2d(X)
        node = np.zeros(len(X), dtype=int)
        for _ in range(len(self.feature)):
            f = self.feature[node]
            inner = f >= 0
            if not inner.any():
                break
            go_left = X[np.arange(len(X)), np.where(inner, f, 0)] <= self.threshold[node]
            node = np.where(inner, np.where(go_left, self.left[node], self.right[node]), node)
        return self.leaf_index[node]


def _best_gini_split(X: np.ndarray, y_onehot: np.ndarray, min_leaf: int):
    """Best ``(impurity, feature, threshold)`` over all axis splits, or None."""
    n = len(X)
    best = None
    for f in range(X.shape[1]):
        order = np.argsort(X[:, f], kind="stable")
        xs = X[order, f]
        left_counts = np.cumsum(y_onehot[order], axis=0)[:-1]
        n_left = np.arange(1, n)
        right_counts = left_counts[-1] + y_onehot[order[-1]] - left_counts
        n_right = n - n_left
        gini_left = 1.0 - (left_counts**2).sum(axis=1) / n_left**2
        gini_right = 1.0 - (right_counts**2).sum(axis=1) / n_right**2
        impurity = (n_left * gini_left + n_right * gini_right) / n
        valid = (xs[:-1] < xs[1:]) & (n_left >= min_leaf) & (n_right >= min_leaf)
        if not valid.any():
            continue
        impurity = np.where(valid, impurity, np.inf)
        i = int(np.argmin(impurity))
        if best is None or impurity[i] < best[0]:
            best = (float(impurity[i]), f, 0.5 * (xs[i] + xs[i + 1]))
    return best


def _class_mask(Z: np.ndarray, m: int, classes) -> np.ndarray:
    mask = np.bincount(Z, minlength=m) > 0
    if classes is not None:
        extra = np.zeros(m, dtype=bool)
        extra[np.asarray(classes, dtype=int)] = True
        mask |= extra
    return mask


def fit_axis_tree(X: np.ndarray, Z: np.ndarray, m: int, depth: int = 3, min_leaf: int = 20,
                  classes=None) -> AxisTree:
    """Greedy Gini tree with Laplace-smoothed leaves.

    Each leaf adds one pseudo-count to every observed class, i.e. the paths
    seen in ``Z`` plus any listed in ``classes``; other paths keep probability 0.
    """
    Z = np.asarray(Z, dtype=int)
    onehot = np.eye(m)[Z]
    observed = _class_mask(Z, m, classes)
    feature, threshold, left, right, leaf_index, probs = [], [], [], [], [], []

    def grow(idx: np.ndarray, level: int) -> int:
        node = len(feature)
        feature.append(-1)
        threshold.append(0.0)
        left.append(-1)
        right.append(-1)
        leaf_index.append(-1)
        counts = onehot[idx].sum(axis=0)
        parent_gini = 1.0 - (counts**2).sum() / len(idx) ** 2
        split = None
        if level < depth and len(idx) >= 2 * min_leaf and parent_gini > 0:
            split = _best_gini_split(X[idx], onehot[idx], min_leaf)
        if split is None or split[0] >= parent_gini - 1e-15:
            p = np.where(observed, counts + 1.0, 0.0)
            probs.append(p / p.sum())
            leaf_index[node] = len(probs) - 1
            return node
        _, f, thr = split
        feature[node], threshold[node] = f, thr
        goes_left = X[idx, f] <= thr
        left[node] = grow(idx[goes_left], level + 1)
        right[node] = grow(idx[~goes_left], level + 1)
        return node

    grow(np.arange(len(Z)), 0)
    return AxisTree(np.array(feature), np.array(threshold), np.array(left), np.array(right),
                    np.array(leaf_index), np.vstack(probs))


def fit_propensity(data: BanditDataset, kind: str = "frequency", m: int | None = None,
                   depth: int = 3, min_leaf: int = 20, classes=None) -> PropensityModel:
    """Frequency table or classification tree over path labels.

    ``classes`` lists paths known to be logged even if absent from ``data``
    (e.g. seen in another cross-fitting fold).  When given, frequencies are
    Laplace-smoothed over those paths so each of them keeps positive mass.
    """
    if data.n == 0:
        raise ValueError("cannot fit propensities on an empty dataset")
    m = int(m if m is not None else data.Z.max() + 1)
    kind = kind.lower()
    if kind in ("frequency", "empirical", "empiricalfrequency"):
        counts = np.bincount(data.Z, minlength=m).astype(float)
        if classes is not None:
            counts = np.where(_class_mask(data.Z, m, classes), counts + 1.0, 0.0)
        return EmpiricalFrequency((counts / counts.sum())[None, :])
    if kind in ("tree", "axistree"):
        return fit_axis_tree(data.X, data.Z, m, depth=depth, min_leaf=min_leaf, classes=classes)
    raise ValueError(f"unknown propensity model {kind!r}")


# --------------------------------------------------------------------------
# Symmetric eigendecomposition and regularized inverses


def jacobi_eigh(A: np.ndarray, tol: float = 1e-12, max_sweeps: int = 60) -> tuple[np.ndarray, np.ndarray]:
    """Cyclic Jacobi eigendecomposition ``A = Q diag(w) Q'`` of a symmetric matrix.

    Sweeps stop once the off-diagonal Frobenius mass falls below
    ``tol * ||A||_F``.
    """
    A = np.array(A, dtype=float)
    n = A.shape[0]
    Q = np.eye(n)
    scale = np.linalg.norm(A)
    if scale == 0.0:
        return np.zeros(n), Q
    # entries this small cannot keep the off-diagonal mass above tol * scale
    negligible = 1e-2 * tol * scale / n
    for _ in range(max_sweeps):
        off = np.linalg.norm(A[~np.eye(n, dtype=bool)])
        if off < tol * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = A[p, q]
                if abs(apq) < negligible:
                    continue
                tau = (A[q, q] - A[p, p]) / (2.0 * apq)
                if abs(tau) > 1e150:
                    t = 0.5 / tau
                else:
                    t = (1.0 if tau >= 0 else -1.0) / (abs(tau) + np.sqrt(1.0 + tau * tau))
                c = 1.0 / np.sqrt(1.0 + t * t)
                s = t * c
                ap, aq = A[:, p].copy(), A[:, q].copy()
                A[:, p], A[:, q] = c * ap - s * aq, s * ap + c * aq
                ap, aq = A[p, :].copy(), A[q, :].copy()
                A[p, :], A[q, :] = c * ap - s * aq, s * ap + c * aq
                A[p, q] = A[q, p] = 0.0
                qp, qq = Q[:, p].copy(), Q[:, q].copy()
                Q[:, p], Q[:, q] = c * qp - s * qq, s * qp + c * qq
    else:
        warnings.warn("Jacobi iteration hit max_sweeps before converging", RuntimeWarning, stacklevel=2)
    return np.diag(A).copy(), Q


@dataclass(frozen=True)
class PInv:
    rel_tol: float = 1e-8

    def transform(self, w: np.ndarray) -> np.ndarray:
        cutoff = self.rel_tol * max(w.max(initial=0.0), 0.0)
        keep = w > cutoff
        out = np.zeros_like(w)
        out[keep] = 1.0 / w[keep]
        return out


@dataclass(frozen=True)
class Lambda:
    lam: float = 1.0

    def transform(self, w: np.ndarray) -> np.ndarray:
        return 1.0 / (w + self.lam)


@dataclass(frozen=True)
class Clip:
    tau: float = 1.0

    def transform(self, w: np.ndarray) -> np.ndarray:
        return 1.0 / np.maximum(w, self.tau)


InverseVariant = PInv | Lambda | Clip


def inverse_from_eigh(w: np.ndarray, Q: np.ndarray, variant: InverseVariant) -> np.ndarray:
    out = (Q * variant.transform(w)) @ Q.T
    return 0.5 * (out + out.T)


def regularized_inverse(sigma: np.ndarray, variant: InverseVariant = PInv()) -> np.ndarray:
    sigma = np.asarray(sigma, dtype=float)
    if not np.isfinite(sigma).all():
        raise ValueError("matrix has non-finite entries")
    w, Q = jacobi_eigh(0.5 * (sigma + sigma.T))
    return inverse_from_eigh(w, Q, variant)


def sigma_from_probs(paths: PathMatrix, probs: np.ndarray) -> np.ndarray:
    """``sum_j p_j z_j z_j'`` for one probability vector or a stack of them."""
    P = paths.incidence
    return np.einsum("...j,jd,je->...de", probs, P, P)


class SigmaEstimator:
    """``Sigma(x) = sum_j z_j z_j' e(z_j | x)`` from a piecewise-constant propensity model.

    Eigendecompositions are cached per propensity cell.  Call
    :meth:`materialize` before sharing one instance across threads.
    """

    def __init__(self, propensity: PropensityModel, paths: PathMatrix, variant: InverseVariant = PInv()):
        if propensity.m != paths.m:
            raise ValueError("propensity model and path matrix disagree on m")
        self.propensity = propensity
        self.paths = paths
        self.variant = variant
        self._eig: dict[int, tuple[np.ndarray, np.ndarray]] = {}
        self._inv: dict[int, np.ndarray] = {}

    def leaf_sigma(self, leaf: int) -> np.ndarray:
        return sigma_from_probs(self.paths, self.propensity.leaf_probs[leaf])

    def leaf_inverse(self, leaf: int) -> np.ndarray:
        if leaf not in self._inv:
            if leaf not in self._eig:
                self._eig[leaf] = jacobi_eigh(self.leaf_sigma(leaf))
            self._inv[leaf] = inverse_from_eigh(*self._eig[leaf], self.variant)
        return self._inv[leaf]

    def materialize(self) -> "SigmaEstimator":
        for leaf in range(self.propensity.n_leaves):
            self.leaf_inverse(leaf)
        return self

    def with_variant(self, variant: InverseVariant) -> "SigmaEstimator":
        """Same propensities and eigendecompositions, different inverse rule."""
        other = SigmaEstimator(self.propensity, self.paths, variant)
        other._eig = self._eig
        return other

    def sigma(self, x: np.ndarray) -> np.ndarray:
        return self.leaf_sigma(int(self.propensity.leaf_ids(np.atleast_2d(x))[0]))

    def inverse(self, x: np.ndarray) -> np.ndarray:
        return self.leaf_inverse(int(self.propensity.leaf_ids(np.atleast_2d(x))[0]))

    def apply_inverse(self, X: np.ndarray, V: np.ndarray) -> np.ndarray:
        """Row-wise ``Sigma_inv(x_i) @ v_i``."""
        leaves = self.propensity.leaf_ids(X)
        out = np.empty_like(V, dtype=float)
        for leaf in np.unique(leaves):
            mask = leaves == leaf
            out[mask] = V[mask] @ self.leaf_inverse(int(leaf))
        return out


def sigma_eval(est: SigmaEstimator, x: np.ndarray) -> np.ndarray:
    return est.sigma(x)
