"""Experiment configuration, replication runner, CSV output and aggregation."""

from __future__ import annotations

import configparser
import csv
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from functools import lru_cache
from pathlib import Path

import numpy as np

from banditclo.evaluation import ConstantPolicy, OptimalPolicy, mc_unbiasedness_audit, relative_regret
from banditclo.features import FeatureSpec, LinearHypothesis
from banditclo.learners import (
    NuisanceConfig,
    PolicyArtifact,
    SpoPlusConfig,
    eto_learn,
    ierm_spoplus_learn,
    naive_learn,
)
from banditclo.nuisance import Clip, Lambda, PInv
from banditclo.polytope import VertexOracle, build_grid, enumerate_paths
from banditclo.rng import derived_seed, stream
from banditclo.scores import ScoreKind, ScoreSpec
from banditclo.simulator import LoggingKind, build_logging_policy, generate_dataset, init_ground_truth

log = logging.getLogger(__name__)

METHODS = (
    "ETO",
    "SPO+ DM",
    "SPO+ DR PI",
    "SPO+ DR Lambda",
    "SPO+ DR Clip",
    "SPO+ ISW",
    "Naive ETO",
    "Naive SPO+ DM",
    "Naive SPO+ DR",
    "Naive SPO+ IPW",
)

CSV_COLUMNS = ("method", "n_train", "replication", "rel_regret", "penalty", "seed", "wall_ms")


@dataclass(frozen=True)
class ExperimentConfig:
    name: str = "experiment"
    grid_rows: int = 5
    grid_cols: int = 5
    n_train: tuple[int, ...] = (400, 1000, 1600)
    n_validation: int | None = None  # None: same as n_train
    n_test: int = 2000
    replications: int = 20
    logging: str = "uniform"
    spec_F: str = "well"
    spec_FN: str = "well"
    methods: tuple[str, ...] = ("ETO", "SPO+ DM")
    ridge: float = 1.0
    propensity: str | None = None  # None: frequency for uniform logging, tree otherwise
    tree_depth: int = 3
    tree_min_leaf: int = 20
    lambda_reg: float = 1.0
    clip_tau: float = 1.0
    pinv_tol: float = 1e-8
    iterations: int = 1000
    batch_size: int = 10
    step0: float = 0.1
    folds: int = 2
    seed: int = 0
    record_timing: bool = True

    def __post_init__(self):
        unknown = [m for m in self.methods if m not in METHODS]
        if unknown:
            raise ValueError(f"unknown methods {unknown}; choose from {METHODS}")
        if min(self.n_train) < 1 or self.n_test < 1 or self.replications < 1:
            raise ValueError("sizes must be positive")
        FeatureSpec.parse(self.spec_F)
        FeatureSpec.parse(self.spec_FN)
        LoggingKind.parse(self.logging)

    @property
    def sgd(self) -> SpoPlusConfig:
        return SpoPlusConfig(iterations=self.iterations, batch_size=self.batch_size, step0=self.step0,
                             folds=self.folds)

    @property
    def nuisance(self) -> NuisanceConfig:
        kind = self.propensity
        if kind is None:
            kind = "frequency" if LoggingKind.parse(self.logging) is LoggingKind.UNIFORM else "tree"
        return NuisanceConfig(self.ridge, kind, self.tree_depth, self.tree_min_leaf)


def _coerce(name: str, raw: str):
    typ = {f.name: f.type for f in fields(ExperimentConfig)}[name]
    raw = raw.strip()
    if typ.startswith("tuple[int"):
        return tuple(int(v) for v in raw.replace(",", " ").split())
    if typ.startswith("tuple[str"):
        return tuple(v.strip() for v in raw.split(",") if v.strip())
    if typ == "bool":
        return raw.lower() in ("1", "true", "yes", "on")
    if typ.startswith("int | None"):
        return None if raw.lower() in ("", "none") else int(raw)
    if typ.startswith("str | None"):
        return None if raw.lower() in ("", "none", "auto") else raw
    if typ == "int":
        return int(raw)
    if typ == "float":
        return float(raw)
    return raw


def parse_config(text: str) -> list[ExperimentConfig]:
    """One experiment per section; ``[DEFAULT]`` keys are shared by all sections."""
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    cp.read_string(text)
    known = {f.name for f in fields(ExperimentConfig)}
    out = []
    for section in cp.sections():
        kwargs = {"name": section}
        for key, raw in cp[section].items():
            if key not in known:
                raise ValueError(f"[{section}] unknown key {key!r}")
            if key != "name":
                kwargs[key] = _coerce(key, raw)
        out.append(ExperimentConfig(**kwargs))
    if not out:
        raise ValueError("config has no experiment sections")
    return out


def load_config(path) -> list[ExperimentConfig]:
    return parse_config(Path(path).read_text())


@dataclass(frozen=True)
class ResultRecord:
    method: str
    n_train: int
    replication: int
    rel_regret: float
    penalty: float | None
    seed: int
    wall_ms: int = 0
    error: str | None = field(default=None, compare=False)

    def sort_key(self):
        return (METHODS.index(self.method), self.n_train, self.replication)


@lru_cache(maxsize=8)
def experiment_state(cfg: ExperimentConfig):
    """Grid, paths, ground truth and logging policy, fixed for the whole experiment."""
    instance = build_grid(cfg.grid_rows, cfg.grid_cols)
    paths = enumerate_paths(instance)
    gt = init_ground_truth(stream(cfg.seed, "ground_truth"), instance)
    reference_X = stream(cfg.seed, "removal_reference").standard_normal((cfg.n_test, 3))
    policy = build_logging_policy(cfg.logging, gt, paths, reference_X)
    return instance, paths, gt, policy


def replication_data(cfg: ExperimentConfig, n: int, rep: int):
    _, paths, gt, policy = experiment_state(cfg)
    n_val = cfg.n_validation if cfg.n_validation is not None else n
    train = generate_dataset(gt, policy, paths, n, stream(cfg.seed, "train", n, rep))
    validation = generate_dataset(gt, policy, paths, n_val, stream(cfg.seed, "validation", n, rep))
    test_X = stream(cfg.seed, "test", rep).standard_normal((cfg.n_test, 3))
    return train, validation, test_X


def learn(method: str, cfg: ExperimentConfig, train, validation, rng):
    _, paths, _, _ = experiment_state(cfg)
    spec_F, spec_FN = FeatureSpec.parse(cfg.spec_F), FeatureSpec.parse(cfg.spec_FN)
    sgd, ncfg = cfg.sgd, cfg.nuisance
    if method == "ETO":
        return eto_learn(train, spec_F, paths, cfg.ridge)
    if method.startswith("Naive"):
        return naive_learn(method, train, spec_FN, sgd, validation, paths, rng, ncfg, spec_F=spec_F)
    score = {
        "SPO+ DM": ScoreSpec(ScoreKind.DM),
        "SPO+ ISW": ScoreSpec(ScoreKind.ISW, PInv(cfg.pinv_tol)),
        "SPO+ DR PI": ScoreSpec(ScoreKind.DR, PInv(cfg.pinv_tol)),
        "SPO+ DR Lambda": ScoreSpec(ScoreKind.DR, Lambda(cfg.lambda_reg)),
        "SPO+ DR Clip": ScoreSpec(ScoreKind.DR, Clip(cfg.clip_tau)),
    }[method]
    return ierm_spoplus_learn(train, spec_F, spec_FN, score, sgd, validation, paths, rng, ncfg, name=method)


def run_task(cfg: ExperimentConfig, n: int, rep: int, method: str) -> ResultRecord:
    seed = derived_seed(cfg.seed, "method", n, rep, method)
    start = time.perf_counter()
    try:
        _, paths, gt, _ = experiment_state(cfg)
        train, validation, test_X = replication_data(cfg, n, rep)
        artifact = learn(method, cfg, train, validation, stream(cfg.seed, "method", n, rep, method))
        if train.hidden_accessed or validation.hidden_accessed:
            raise RuntimeError(f"{method} read hidden full-feedback costs")
        regret = relative_regret(gt, artifact, test_X, paths)
        penalty, error = artifact.penalty, None
    except Exception as exc:  # one failing method must not sink the others
        log.exception("%s n=%d rep=%d failed", method, n, rep)
        regret, penalty, error = math.nan, None, f"{type(exc).__name__}: {exc}"
    wall = int(round(1000 * (time.perf_counter() - start))) if cfg.record_timing else 0
    return ResultRecord(method, n, rep, float(regret), penalty, seed, wall, error)


def _run_task_tuple(args):
    return run_task(*args)


def tasks(cfg: ExperimentConfig, replications=None):
    reps = range(cfg.replications) if replications is None else replications
    return [(cfg, n, rep, m) for n in cfg.n_train for rep in reps for m in cfg.methods]


def run_experiment(cfg: ExperimentConfig, jobs: int = 1, replications=None) -> list[ResultRecord]:
    """Run every (n, replication, method) task; results come back sorted."""
    work = tasks(cfg, replications)
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            records = list(pool.map(_run_task_tuple, work, chunksize=1))
    else:
        records = [run_task(*t) for t in work]
    return sorted(records, key=ResultRecord.sort_key)


def write_csv(path, records) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in sorted(records, key=ResultRecord.sort_key):
            w.writerow([r.method, r.n_train, r.replication, repr(r.rel_regret),
                        "" if r.penalty is None else repr(r.penalty), r.seed, r.wall_ms])


def read_csv(path) -> list[ResultRecord]:
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [
        ResultRecord(row["method"], int(row["n_train"]), int(row["replication"]), float(row["rel_regret"]),
                     float(row["penalty"]) if row["penalty"] else None, int(row["seed"]), int(row["wall_ms"]))
        for row in rows
    ]


@dataclass(frozen=True)
class Cell:
    mean: float
    se: float
    count: int


def aggregate(records) -> dict[tuple[str, int], Cell]:
    """Mean and standard error of relative regret per (method, n_train); failed rows are skipped."""
    groups: dict[tuple[str, int], list[float]] = {}
    for r in records:
        if not math.isnan(r.rel_regret):
            groups.setdefault((r.method, r.n_train), []).append(r.rel_regret)
    out = {}
    for key, vals in groups.items():
        v = np.asarray(vals)
        se = float(v.std(ddof=1) / np.sqrt(len(v))) if len(v) > 1 else math.nan
        out[key] = Cell(float(v.mean()), se, len(v))
    return out


def _column_label(col) -> str:
    return f"n={col}" if isinstance(col, (int, np.integer)) else f"{col[0]} n={col[1]}"


def format_table(summary: dict, title: str = "") -> str:
    """Render ``{(method, column): Cell}`` as text; percentages with SE in parentheses.

    A column is either ``n_train`` or a ``(label, n_train)`` pair, as produced
    by :func:`merge_panel`.  Missing cells are left blank.
    """
    methods = sorted({m for m, _ in summary}, key=lambda m: METHODS.index(m) if m in METHODS else len(METHODS))
    cols = sorted({c for _, c in summary})
    labels = [_column_label(c) for c in cols]
    cw = max([18] + [len(lb) + 2 for lb in labels])
    width = max([len("Method")] + [len(m) for m in methods]) + 2
    header = "Method".ljust(width) + "".join(lb.rjust(cw) for lb in labels)
    lines = ([title] if title else []) + [header, "-" * len(header)]
    for m in methods:
        cells = []
        for c in cols:
            cell = summary.get((m, c))
            if cell is None:
                cells.append(" " * cw)
            elif math.isnan(cell.se):
                cells.append(f"{100 * cell.mean:.2f}%".rjust(cw))
            else:
                cells.append(f"{100 * cell.mean:.2f}% ({100 * cell.se:.2f}%)".rjust(cw))
        lines.append(m.ljust(width) + "".join(cells))
    return "\n".join(lines)


def merge_panel(summaries: dict[str, dict]) -> dict:
    """Side-by-side columns for several summaries, keyed ``(label, n_train)``."""
    return {(m, (label, n)): cell for label, summ in summaries.items() for (m, n), cell in summ.items()}


def group_panels(named_records: dict[str, list]) -> list[tuple[str, dict]]:
    """Group experiments named ``panel.sub`` into one merged summary per panel.

    Names without a dot form a panel of their own.
    """
    panels: dict[str, dict[str, dict]] = {}
    for name, records in named_records.items():
        panel, _, sub = name.partition(".")
        panels.setdefault(panel, {})[sub] = aggregate(records)
    out = []
    for panel, subs in panels.items():
        if list(subs) == [""]:
            out.append((panel, subs[""]))
        else:
            out.append((panel, merge_panel(subs)))
    return out


def with_overrides(cfg: ExperimentConfig, **kw) -> ExperimentConfig:
    return replace(cfg, **{k: v for k, v in kw.items() if v is not None})


# --------------------------------------------------------------------------
# Score audits


@dataclass(frozen=True)
class AuditCase:
    label: str
    score: ScoreSpec
    mode: str
    policy: str
    expect_unbiased: bool


def audit_policies(gt, paths, seed: int) -> dict:
    """Tie-break path, the optimal policy, and a random-hypothesis plug-in policy."""
    W = stream(seed, "audit_random_policy").standard_normal((paths.d, FeatureSpec.WELL.k))
    return {
        "tie-break": ConstantPolicy(0),
        "optimal": OptimalPolicy(gt, paths),
        "random-plugin": PolicyArtifact("random", LinearHypothesis(W, FeatureSpec.WELL), VertexOracle.for_paths(paths)),
    }


def audit_cases() -> list[AuditCase]:
    cases = []
    for pol in ("tie-break", "optimal", "random-plugin"):
        for kind in (ScoreKind.DM, ScoreKind.ISW, ScoreKind.DR):
            cases.append(AuditCase(f"{kind.value}/true/{pol}", ScoreSpec(kind, PInv()), "true", pol, True))
    for pol in ("tie-break", "optimal", "random-plugin"):
        cases.append(AuditCase(f"DR/perturbed-f/{pol}", ScoreSpec(ScoreKind.DR, PInv()), "perturbed-f", pol, True))
        cases.append(AuditCase(f"DR/wrong-sigma/{pol}", ScoreSpec(ScoreKind.DR, PInv()), "wrong-sigma", pol, True))
    # the perturbation points along path 0, which the tie-break policy always takes
    cases.append(AuditCase("DM/perturbed-f/tie-break", ScoreSpec(ScoreKind.DM), "perturbed-f", "tie-break", False))
    return cases


def run_audits(cfg: ExperimentConfig, N: int, cases=None, pass_z: float = 4.0, detect_z: float = 6.0):
    """Run Monte-Carlo score audits; returns ``(case, result, ok)`` triples."""
    _, paths, gt, policy = experiment_state(cfg)
    policies = audit_policies(gt, paths, cfg.seed)
    out = []
    for case in cases or audit_cases():
        res = mc_unbiasedness_audit(case.score, case.mode, policies[case.policy], gt, policy, paths, N,
                                    stream(cfg.seed, "audit", case.label))
        ok = abs(res.z) <= pass_z if case.expect_unbiased else abs(res.z) > detect_z
        out.append((case, res, ok))
    return out
