"""Policy learners: estimate-then-optimize, cross-fitted IERM through the SPO+
surrogate, and the naive discrete-action baselines."""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field

import numpy as np

from banditclo.features import FeatureSpec, LinearHypothesis, feature_map, read_matrix, write_matrix
from banditclo.nuisance import (
    PInv,
    SigmaEstimator,
    fit_bandit_ridge,
    fit_per_action_ridge,
    fit_propensity,
)
from banditclo.polytope import GridInstance, PathMatrix, VertexOracle, linear_oracle
from banditclo.scores import ScoreKind, ScoreSpec, linear_scores, naive_scores
from banditclo.simulator import BanditDataset

log = logging.getLogger(__name__)


def default_penalty_grid() -> tuple[float, ...]:
    return (0.0, 0.001, 0.01) + tuple(float(v) for v in np.logspace(-1, 2, 10))


@dataclass(frozen=True)
class SpoPlusConfig:
    iterations: int = 1000
    batch_size: int = 10
    step0: float = 0.1
    penalty_grid: tuple[float, ...] = field(default_factory=default_penalty_grid)
    halve_penalty: bool = True
    folds: int = 2

    def __post_init__(self):
        if self.iterations < 1 or self.batch_size < 1:
            raise ValueError("iterations and batch_size must be positive")
        if not self.penalty_grid:
            raise ValueError("penalty grid is empty")


@dataclass(frozen=True)
class NuisanceConfig:
    ridge: float = 1.0
    propensity: str = "frequency"  # or "tree"
    tree_depth: int = 3
    tree_min_leaf: int = 20


# --------------------------------------------------------------------------
# Cross-fitting


@dataclass(frozen=True)
class CrossFitPlan:
    fold_of: np.ndarray

    @property
    def K(self) -> int:
        return int(self.fold_of.max()) + 1

    def fold(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of == j)

    def complement(self, j: int) -> np.ndarray:
        return np.flatnonzero(self.fold_of != j)


def split_folds(n: int | BanditDataset, K: int, rng: np.random.Generator) -> CrossFitPlan:
    """Random partition into K folds whose sizes differ by at most one."""
    n = len(n) if isinstance(n, BanditDataset) else int(n)
    if K < 1 or n < K:
        raise ValueError(f"cannot split {n} samples into {K} folds")
    fold_of = np.empty(n, dtype=int)
    for j, idx in enumerate(np.array_split(rng.permutation(n), K)):
        fold_of[idx] = j
    return CrossFitPlan(fold_of)


def fit_nuisances(train: BanditDataset, score: ScoreSpec, spec_FN: FeatureSpec, paths: PathMatrix,
                  ncfg: NuisanceConfig, classes=None):
    """Regression and propensity-side nuisances needed by ``score``.

    ``classes`` are paths known to be logged; naive propensities keep them
    in support even when ``train`` lacks them.
    """
    kind = score.kind
    reg = aux = None
    if kind.needs_regression:
        if kind.is_naive:
            reg = fit_per_action_ridge(train, spec_FN, paths.m, ncfg.ridge)
        else:
            reg = fit_bandit_ridge(train, spec_FN, paths, ncfg.ridge)
    if kind.needs_propensity:
        aux = fit_propensity(train, ncfg.propensity, paths.m, ncfg.tree_depth, ncfg.tree_min_leaf,
                             classes=classes if kind.is_naive else None)
        if not kind.is_naive:
            aux = SigmaEstimator(aux, paths, score.variant).materialize()
    return reg, aux


def compute_scores(score: ScoreSpec, data: BanditDataset, paths: PathMatrix, reg, aux) -> np.ndarray:
    if score.kind.is_naive:
        return naive_scores(score, data.X, data.Z, data.C, reg, aux)
    return linear_scores(score, data.X, data.incidence(paths), data.C, reg, aux)


def cross_fit_scores(data: BanditDataset, plan: CrossFitPlan, score: ScoreSpec, spec_FN: FeatureSpec,
                     paths: PathMatrix, ncfg: NuisanceConfig) -> tuple[np.ndarray, list[tuple[np.ndarray, np.ndarray]]]:
    """Scores for every sample using nuisances fit on the other folds.

    Also returns ``(scored_idx, nuisance_idx)`` per fold for bookkeeping.
    """
    dim = paths.m if score.kind.is_naive else paths.d
    theta = np.empty((data.n, dim))
    ledger = []
    logged = np.unique(data.Z)
    for j in range(plan.K):
        scored, train = plan.fold(j), plan.complement(j)
        if train.size == 0:
            train = scored  # K == 1 degenerates to in-sample nuisances
        reg, aux = fit_nuisances(data.subset(train), score, spec_FN, paths, ncfg, classes=logged)
        theta[scored] = compute_scores(score, data.subset(scored), paths, reg, aux)
        ledger.append((scored, train))
    return theta, ledger


# --------------------------------------------------------------------------
# SPO+ loss


def spoplus_loss(fx: np.ndarray, theta: np.ndarray, instance: GridInstance) -> float:
    """``max_z (theta - 2 fx)'z - (theta - 2 fx)' z*(theta)`` over the path polytope."""
    fx, theta = np.asarray(fx, dtype=float), np.asarray(theta, dtype=float)
    v = theta - 2.0 * fx
    z_max = linear_oracle(instance, -v)
    return float(v @ z_max - v @ linear_oracle(instance, theta))


def spoplus_subgradient(W: np.ndarray, x: np.ndarray, theta: np.ndarray, spec: FeatureSpec,
                        instance: GridInstance) -> np.ndarray:
    """Subgradient in ``W`` of ``l_SPO+(W phi(x), theta)``; shape ``(d, k)``."""
    phi = feature_map(spec, x)
    fx = np.asarray(W) @ phi
    g = 2.0 * (linear_oracle(instance, theta) - linear_oracle(instance, 2.0 * fx - theta))
    return np.outer(g, phi)


def spoplus_losses(F: np.ndarray, theta: np.ndarray, oracle: VertexOracle,
                   z_theta: np.ndarray | None = None) -> np.ndarray:
    """Batched SPO+ losses for rows of predictions ``F`` against scores ``theta``."""
    if z_theta is None:
        z_theta = oracle.solve(theta)
    v = theta - 2.0 * F
    return (v @ oracle.vertices.T).max(axis=-1) - np.einsum("...d,...d->...", v, z_theta)


def sgd_spoplus(phi: np.ndarray, theta: np.ndarray, oracle: VertexOracle, penalties, cfg: SpoPlusConfig,
                rng: np.random.Generator) -> np.ndarray:
    """Minimize ``mean_i l_SPO+(W phi_i, theta_i) + pen ||W||_F^2`` for each penalty.

    Runs one stochastic subgradient descent per penalty, all driven by the
    same minibatch sequence.  Steps are ``step0 / sqrt(t)``; the ridge term
    is applied through its proximal map so large penalties cannot blow up.
    Returns tail averages over the last half of the iterates, shape
    ``(len(penalties), dim, k)``.
    """
    pen = np.asarray(penalties, dtype=float)
    n, k = phi.shape
    dim = theta.shape[1]
    V = oracle.vertices
    z_theta = oracle.solve(theta)
    W = np.zeros((len(pen), dim, k))
    W_sum = np.zeros_like(W)
    tail_from = cfg.iterations - cfg.iterations // 2
    batches = rng.integers(n, size=(cfg.iterations, cfg.batch_size))
    for t in range(1, cfg.iterations + 1):
        b = batches[t - 1]
        pb, tb = phi[b], theta[b]
        F = np.einsum("pdk,bk->pbd", W, pb)
        z_hat = V[np.argmin((2.0 * F - tb) @ V.T, axis=-1)]
        G = np.einsum("pbd,bk->pdk", z_theta[b] - z_hat, pb) * (2.0 / len(b))
        step = cfg.step0 / np.sqrt(t)
        W = (W - step * G) / (1.0 + 2.0 * step * pen)[:, None, None]
        if t > tail_from:
            W_sum += W
    return W_sum / (cfg.iterations - tail_from)


def spoplus_objective(W: np.ndarray, phi: np.ndarray, theta: np.ndarray, oracle: VertexOracle,
                      penalty: float = 0.0) -> float:
    return float(spoplus_losses(phi @ W.T, theta, oracle).mean() + penalty * np.sum(W * W))


# --------------------------------------------------------------------------
# Policies


@dataclass
class PolicyArtifact:
    """A hypothesis bound to an argmin oracle; ``decide`` returns path indices."""

    name: str
    hypothesis: LinearHypothesis
    oracle: VertexOracle = field(repr=False)
    naive: bool = False
    penalty: float | None = None
    seed: int | None = None
    info: dict = field(default_factory=dict, repr=False)

    def decide(self, X: np.ndarray) -> np.ndarray:
        return self.oracle.argmin(self.hypothesis.predict(np.atleast_2d(X)))

    def scaled(self, c: float) -> "PolicyArtifact":
        return PolicyArtifact(self.name, LinearHypothesis(c * self.hypothesis.W, self.hypothesis.spec),
                              self.oracle, self.naive, self.penalty, self.seed)


def save_artifact(path, art: PolicyArtifact) -> None:
    comments = [f"learner: {art.name}", f"spec: {art.hypothesis.spec.value}",
                f"oracle: {'simplex' if art.naive else 'paths'}",
                f"penalty: {'' if art.penalty is None else repr(art.penalty)}",
                f"seed: {'' if art.seed is None else art.seed}"]
    write_matrix(path, art.hypothesis.W, art.hypothesis.spec.names, comments)


def load_artifact(path, paths: PathMatrix) -> PolicyArtifact:
    W, _, comments = read_matrix(path)
    meta = dict(c.split(": ", 1) if ": " in c else (c.rstrip(":"), "") for c in comments)
    naive = meta["oracle"] == "simplex"
    oracle = VertexOracle.simplex(paths.m) if naive else VertexOracle.for_paths(paths)
    return PolicyArtifact(
        meta["learner"], LinearHypothesis(W, FeatureSpec.parse(meta["spec"])), oracle, naive,
        float(meta["penalty"]) if meta.get("penalty") else None,
        int(meta["seed"]) if meta.get("seed") else None,
    )


def eto_learn(data: BanditDataset, spec_F: FeatureSpec, paths: PathMatrix, lam: float = 1.0,
              name: str = "ETO") -> PolicyArtifact:
    f_hat = fit_bandit_ridge(data, spec_F, paths, lam)
    return PolicyArtifact(name, f_hat, VertexOracle.for_paths(paths))


def _validation_costs(Ws: np.ndarray, phi_v: np.ndarray, theta_v: np.ndarray, oracle: VertexOracle) -> np.ndarray:
    F = np.einsum("pdk,nk->pnd", Ws, phi_v)
    Zv = oracle.vertices[oracle.argmin(F)]
    return np.einsum("pnd,nd->pn", Zv, theta_v).mean(axis=1)


def _spoplus_pipeline(name: str, data: BanditDataset, spec_F: FeatureSpec, spec_FN: FeatureSpec,
                      score: ScoreSpec, cfg: SpoPlusConfig, validation: BanditDataset | None,
                      paths: PathMatrix, rng: np.random.Generator, ncfg: NuisanceConfig) -> PolicyArtifact:
    fold_rng, tune_rng, final_rng = rng.spawn(3)
    oracle = VertexOracle.simplex(paths.m) if score.kind.is_naive else VertexOracle.for_paths(paths)
    plan = split_folds(data.n, cfg.folds, fold_rng)
    theta, ledger = cross_fit_scores(data, plan, score, spec_FN, paths, ncfg)
    phi = feature_map(spec_F, data.X)
    grid = np.asarray(cfg.penalty_grid, dtype=float)

    if validation is None or validation.n == 0:
        warnings.warn("no validation data; using the median of the penalty grid", RuntimeWarning, stacklevel=3)
        chosen = float(np.median(grid))
        val_costs = None
    else:
        Ws = sgd_spoplus(phi, theta, oracle, grid, cfg, tune_rng)
        reg, aux = fit_nuisances(data, score, spec_FN, paths, ncfg, classes=np.union1d(data.Z, validation.Z))
        theta_v = compute_scores(score, validation, paths, reg, aux)
        val_costs = _validation_costs(Ws, feature_map(spec_F, validation.X), theta_v, oracle)
        chosen = float(grid[int(np.argmin(val_costs))])

    final_pen = chosen / 2.0 if cfg.halve_penalty else chosen
    W = sgd_spoplus(phi, theta, oracle, [final_pen], cfg, final_rng)[0]
    obj_final = spoplus_objective(W, phi, theta, oracle, final_pen)
    obj_start = spoplus_objective(np.zeros_like(W), phi, theta, oracle, final_pen)
    if obj_final > obj_start:
        log.warning("%s: averaged SPO+ objective %.4g exceeds the starting value %.4g", name, obj_final, obj_start)
    info = {"selected_penalty": chosen, "validation_costs": val_costs, "folds": ledger,
            "objective_start": obj_start, "objective_final": obj_final}
    return PolicyArtifact(name, LinearHypothesis(W, spec_F), oracle, score.kind.is_naive, final_pen, info=info)


def ierm_spoplus_learn(data: BanditDataset, spec_F: FeatureSpec, spec_FN: FeatureSpec, score: ScoreSpec,
                       cfg: SpoPlusConfig, validation: BanditDataset | None, paths: PathMatrix,
                       rng: np.random.Generator, ncfg: NuisanceConfig = NuisanceConfig(),
                       name: str | None = None) -> PolicyArtifact:
    """Cross-fitted IERM with the SPO+ surrogate and validation-tuned ridge penalty."""
    if score.kind.is_naive:
        raise ValueError("use naive_learn for discrete-action scores")
    name = name or f"SPO+ {score.kind.value}"
    return _spoplus_pipeline(name, data, spec_F, spec_FN, score, cfg, validation, paths, rng, ncfg)


NAIVE_KINDS = {
    "NaiveSPO+DM": ScoreKind.NAIVE_DM,
    "NaiveSPO+IPW": ScoreKind.NAIVE_IPW,
    "NaiveSPO+DR": ScoreKind.NAIVE_DR,
}


def naive_learn(kind: str, data: BanditDataset, spec_FN: FeatureSpec, cfg: SpoPlusConfig,
                validation: BanditDataset | None, paths: PathMatrix, rng: np.random.Generator,
                ncfg: NuisanceConfig = NuisanceConfig(), spec_F: FeatureSpec | None = None) -> PolicyArtifact:
    """Baselines that treat the m paths as unrelated discrete actions.

    ``kind`` is ``"NaiveETO"`` or one of ``NAIVE_KINDS``.  The policy class
    uses ``spec_F`` (defaults to ``spec_FN``) for its m-output hypotheses.
    """
    spec_F = spec_F or spec_FN
    key = kind.replace(" ", "")
    if key == "NaiveETO":
        f_tilde = fit_per_action_ridge(data, spec_F, paths.m, ncfg.ridge)
        return PolicyArtifact("Naive ETO", f_tilde, VertexOracle.simplex(paths.m), naive=True)
    if key not in NAIVE_KINDS:
        raise ValueError(f"unknown naive learner {kind!r}")
    score = ScoreSpec(NAIVE_KINDS[key], PInv())
    name = "Naive SPO+ " + key.removeprefix("NaiveSPO+")
    return _spoplus_pipeline(name, data, spec_F, spec_FN, score, cfg, validation, paths, rng, ncfg)
