"""Ground-truth policy evaluation and Monte-Carlo audits of the score functions."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from banditclo.nuisance import FixedPropensity, PInv, SigmaEstimator
from banditclo.polytope import PathMatrix, VertexOracle
from banditclo.scores import ScoreSpec, linear_scores, naive_scores
from banditclo.simulator import GroundTruth, LoggingPolicy, sample_full


def _decide(policy, X: np.ndarray) -> np.ndarray:
    """Path indices chosen by an artifact or by a plain callable."""
    return np.asarray(policy.decide(X) if hasattr(policy, "decide") else policy(X), dtype=int)


class OptimalPolicy:
    """``x -> argmin_z f0(x)'z``, the globally optimal plug-in policy."""

    name = "optimal"

    def __init__(self, gt: GroundTruth, paths: PathMatrix):
        self.gt = gt
        self.oracle = VertexOracle.for_paths(paths)

    def decide(self, X):
        return self.oracle.argmin(self.gt.f0(np.atleast_2d(X)))


class ConstantPolicy:
    name = "constant"

    def __init__(self, index: int):
        self.index = int(index)

    def decide(self, X):
        return np.full(len(np.atleast_2d(X)), self.index, dtype=int)


def true_value(gt: GroundTruth, policy, test_X: np.ndarray, paths: PathMatrix) -> float:
    test_X = np.atleast_2d(test_X)
    if len(test_X) == 0:
        raise ValueError("empty test set")
    costs = gt.f0(test_X) @ paths.incidence.T
    return float(costs[np.arange(len(test_X)), _decide(policy, test_X)].mean())


def relative_regret(gt: GroundTruth, policy, test_X: np.ndarray, paths: PathMatrix) -> float:
    """``(V(pi) - V(pi_f0)) / V(pi_f0)`` on a shared test set."""
    best = true_value(gt, OptimalPolicy(gt, paths), test_X, paths)
    return (true_value(gt, policy, test_X, paths) - best) / best


@dataclass(frozen=True)
class EvalReport:
    policy: str
    value: float
    optimal_value: float
    relative_regret: float
    n_test: int
    seed: int | None = None


def evaluate(gt: GroundTruth, policy, test_X: np.ndarray, paths: PathMatrix, seed: int | None = None) -> EvalReport:
    v = true_value(gt, policy, test_X, paths)
    best = true_value(gt, OptimalPolicy(gt, paths), test_X, paths)
    return EvalReport(getattr(policy, "name", "policy"), v, best, (v - best) / best, len(test_X), seed)


# --------------------------------------------------------------------------
# Monte-Carlo audits


class ShiftedRegression:
    """``base(x) + shift`` for every ``x``; a regression nuisance with a constant error."""

    def __init__(self, base, shift: np.ndarray):
        self.base = base
        self.shift = np.asarray(shift, dtype=float)

    def predict(self, X):
        return self.base.predict(X) + self.shift


class TrueRegression:
    def __init__(self, gt: GroundTruth):
        self.gt = gt

    def predict(self, X):
        return self.gt.f0(X)


class TrueNaiveRegression:
    """``x -> (z_j' f0(x))_j``: expected total cost of each path."""

    def __init__(self, gt: GroundTruth, paths: PathMatrix):
        self.gt = gt
        self.P = paths.incidence

    def predict(self, X):
        return self.gt.f0(X) @ self.P.T


def span_perturbation(paths: PathMatrix, index: int = 0, magnitude: float = 0.5) -> np.ndarray:
    """``magnitude`` times the unit vector along path ``index``; lies in the span of paths."""
    z = paths.incidence[index]
    return magnitude * z / np.linalg.norm(z)


def alternative_propensity(m: int) -> np.ndarray:
    """A fixed full-support distribution over paths, unlike any logging policy here."""
    w = 1.0 + np.arange(m) % 7
    return w / w.sum()


@dataclass(frozen=True)
class AuditResult:
    estimate: float
    se: float
    reference: float
    z: float

    def passes(self, threshold: float = 4.0) -> bool:
        return abs(self.z) <= threshold


def mc_unbiasedness_audit(
    score: ScoreSpec,
    nuisance_mode: str,
    policy,
    gt: GroundTruth,
    logging: LoggingPolicy,
    paths: PathMatrix,
    N: int,
    rng: np.random.Generator,
    chunk: int = 100_000,
    perturbation: np.ndarray | None = None,
) -> AuditResult:
    """Compare the mean of ``theta' pi(X)`` over fresh draws with ``mean f0(X)' pi(X)``.

    ``nuisance_mode`` is ``"true"``, ``"perturbed-f"`` (true f0 plus a
    constant shift in the span of paths) or ``"wrong-sigma"`` (propensities
    of a different full-support policy).  Both means use the same X draws, so
    the studentized statistic is computed on the per-sample gap.
    """
    mode = nuisance_mode.lower().replace("_", "-")
    if mode not in ("true", "perturbed-f", "wrong-sigma"):
        raise ValueError(f"unknown nuisance mode {nuisance_mode!r}")
    naive = score.kind.is_naive

    if mode == "wrong-sigma":
        propensity = FixedPropensity.constant(alternative_propensity(paths.m))
    else:
        propensity = FixedPropensity.from_logging(logging)
    if naive:
        reg = TrueNaiveRegression(gt, paths)
        if mode == "perturbed-f":
            shift = perturbation if perturbation is not None else paths.incidence @ span_perturbation(paths)
            reg = ShiftedRegression(reg, shift)
        aux = propensity
    else:
        reg = TrueRegression(gt)
        if mode == "perturbed-f":
            reg = ShiftedRegression(reg, perturbation if perturbation is not None else span_perturbation(paths))
        aux = SigmaEstimator(propensity, paths, score.variant or PInv()).materialize()

    log_rng, draw_rng = rng.spawn(2)
    total = total_sq = ref_total = 0.0
    done = 0
    while done < N:
        n = min(chunk, N - done)
        X, Y = sample_full(gt, n, draw_rng)
        A = logging.sample(X, log_rng)
        Z_inc = paths.incidence[A]
        C = np.einsum("ij,ij->i", Y, Z_inc)
        pi = _decide(policy, X)
        rows = np.arange(n)
        if naive:
            theta = naive_scores(score, X, A, C, reg, aux)
            est = theta[rows, pi]
        else:
            theta = linear_scores(score, X, Z_inc, C, reg, aux)
            est = np.einsum("ij,ij->i", theta, paths.incidence[pi])
        ref = np.einsum("ij,ij->i", gt.f0(X), paths.incidence[pi])
        gap = est - ref
        total += gap.sum()
        total_sq += (gap * gap).sum()
        ref_total += ref.sum()
        done += n

    mean_gap = total / N
    var = max(total_sq / N - mean_gap**2, 0.0) * N / max(N - 1, 1)
    se = float(np.sqrt(var / N))
    # exact-zero gaps (e.g. DM with the true f0) carry no sampling noise at all
    if se < 1e-12 * max(1.0, abs(ref_total / N)):
        z = 0.0 if abs(mean_gap) < 1e-9 else float(np.sign(mean_gap) * np.inf)
    else:
        z = mean_gap / se
    reference = ref_total / N
    return AuditResult(reference + mean_gap, se, reference, float(z))
