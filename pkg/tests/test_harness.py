import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from banditclo import cli, harness
from banditclo.harness import Cell, ExperimentConfig, ResultRecord, aggregate, format_table, parse_config
from banditclo.simulator import DATASET_HEADER, load_dataset

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

SMALL = ExperimentConfig(name="small", n_train=(400,), replications=2, methods=("ETO",), n_test=300,
                         record_timing=False, seed=3)


def rec(method, n, rep, r):
    return ResultRecord(method, n, rep, r, None, 0, 0)


def test_row_count():
    rows = harness.run_experiment(SMALL)
    assert len(rows) == 2
    assert {(r.method, r.n_train, r.replication) for r in rows} == {("ETO", 400, 0), ("ETO", 400, 1)}
    assert all(r.error is None and r.rel_regret >= 0 for r in rows)


def test_csv_byte_identical(tmp_path):
    cfg = harness.with_overrides(SMALL, methods=("ETO", "SPO+ DR Clip"), n_train=(100,), iterations=50)
    for name in ("a.csv", "b.csv"):
        harness.experiment_state.cache_clear()
        harness.write_csv(tmp_path / name, harness.run_experiment(cfg))
    a, b = (tmp_path / "a.csv").read_bytes(), (tmp_path / "b.csv").read_bytes()
    assert a == b
    assert a.decode().splitlines()[0] == ",".join(harness.CSV_COLUMNS)


def test_csv_round_trip(tmp_path):
    rows = [ResultRecord("SPO+ DM", 400, 1, 0.0123, 0.05, 77, 12), rec("ETO", 400, 0, math.nan)]
    harness.write_csv(tmp_path / "r.csv", rows)
    eto, dm = harness.read_csv(tmp_path / "r.csv")  # written in registry order
    assert (eto.method, eto.penalty) == ("ETO", None) and math.isnan(eto.rel_regret)
    assert dm == rows[0]


def test_seeds_independent_of_job_count(tmp_path):
    cfg = harness.with_overrides(SMALL, n_train=(60,))
    serial = harness.run_experiment(cfg, jobs=1)
    parallel = harness.run_experiment(cfg, jobs=2)
    assert [(r.seed, r.rel_regret) for r in serial] == [(r.seed, r.rel_regret) for r in parallel]


def test_failures_recorded_not_raised(monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("solver exploded")

    monkeypatch.setattr(harness, "eto_learn", boom)
    [row] = harness.run_experiment(harness.with_overrides(SMALL, replications=1))
    assert math.isnan(row.rel_regret) and "solver exploded" in row.error


def test_two_point_aggregate():
    summ = aggregate([rec("ETO", 400, 0, 0.01), rec("ETO", 400, 1, 0.03), rec("ETO", 400, 2, math.nan)])
    cell = summ[("ETO", 400)]
    assert cell.mean == pytest.approx(0.02) and cell.se == pytest.approx(0.01) and cell.count == 2
    assert "2.00% (1.00%)" in format_table(summ)


@given(st.lists(st.floats(0, 1), min_size=2, max_size=30))
def test_aggregate_matches_numpy(vals):
    cell = aggregate([rec("ETO", 100, i, v) for i, v in enumerate(vals)])[("ETO", 100)]
    assert cell.mean == pytest.approx(np.mean(vals))
    assert cell.se == pytest.approx(np.std(vals, ddof=1) / np.sqrt(len(vals)), abs=1e-12)


def test_missing_cell_blank():
    summ = {("ETO", 400): Cell(0.01, 0.001, 5), ("SPO+ DM", 1600): Cell(0.02, 0.002, 5)}
    lines = format_table(summ).splitlines()
    eto = next(l for l in lines if l.startswith("ETO"))
    assert "0.00%" not in eto and eto.rstrip().endswith("(0.10%)")
    assert len(eto.rstrip()) < len(lines[0])


def test_misspecification_layout_has_three_panels():
    cfgs = harness.load_config(CONFIGS / "misspecification.ini")
    named = {c.name: [rec(m, n, 0, 0.05) for m in c.methods for n in c.n_train] for c in cfgs}
    panels = harness.group_panels(named)
    assert [p for p, _ in panels] == ["misspecified-F", "misspecified-FN", "misspecified-both"]
    text = format_table(panels[0][1], title=panels[0][0])
    assert "deg2 n=400" in text and "deg4 n=1600" in text
    assert {(c.spec_F, c.spec_FN) for c in cfgs} == {("deg2", "well"), ("deg4", "well"), ("well", "deg2"),
                                                     ("well", "deg4"), ("deg2", "deg2"), ("deg4", "deg4")}


def test_config_parsing():
    cfgs = parse_config("""
[DEFAULT]
replications = 3
seed = 9
[a]
n_train = 100, 200
methods = ETO, Naive SPO+ IPW
logging = x1
propensity = auto
record_timing = no
""")
    (c,) = cfgs
    assert (c.name, c.n_train, c.replications, c.seed, c.logging) == ("a", (100, 200), 3, 9, "x1")
    assert c.methods == ("ETO", "Naive SPO+ IPW") and not c.record_timing
    assert c.nuisance.propensity == "tree"
    with pytest.raises(ValueError):
        parse_config("[a]\nmethods = Magic\n")
    with pytest.raises(ValueError):
        parse_config("[a]\nbogus_key = 1\n")
    with pytest.raises(ValueError):
        parse_config("[DEFAULT]\nseed = 1\n")


def test_shipped_configs_parse():
    for path in CONFIGS.glob("*.ini"):
        assert harness.load_config(path)


# -- CLI -------------------------------------------------------------------------------


def test_cli_generate(tmp_path, capsys):
    out = tmp_path / "d.csv"
    assert cli.main(["generate", "--out", str(out), "--n", "50", "--seed", "4", "--logging", "x1"]) == 0
    assert out.read_text().splitlines()[0] == ",".join(DATASET_HEADER)
    data = load_dataset(out)
    assert data.n == 50
    cfg = harness.with_overrides(ExperimentConfig(), seed=4, logging="x1")
    _, _, _, policy = harness.experiment_state(cfg)
    assert not np.isin(data.Z, policy.removed).any()


def test_cli_run_and_report(tmp_path, capsys):
    ini = tmp_path / "c.ini"
    ini.write_text("[DEFAULT]\nreplications = 1\nn_test = 200\nrecord_timing = false\n"
                   "[p.deg2]\nn_train = 80\nspec_F = deg2\nmethods = ETO\n"
                   "[p.deg4]\nn_train = 80\nspec_F = deg4\nmethods = ETO\n")
    outdir = tmp_path / "res"
    assert cli.main(["run", "--config", str(ini), "--out", str(outdir), "--jobs", "1"]) == 0
    assert sorted(p.name for p in outdir.iterdir()) == ["p.deg2.csv", "p.deg4.csv"]
    capsys.readouterr()
    assert cli.main(["report", str(outdir), "--out", str(tmp_path / "t.txt")]) == 0
    text = (tmp_path / "t.txt").read_text()
    assert text.startswith("p\n") and "deg2 n=80" in text and "deg4 n=80" in text


def test_cli_audit_exit_codes(monkeypatch, capsys):
    from banditclo.evaluation import AuditResult

    def fake(cfg, N, cases=None, **kw):
        case = harness.audit_cases()[0]
        return [(case, AuditResult(1.0, 0.1, 1.0, 0.0), ok)]

    ok = True
    monkeypatch.setattr(harness, "run_audits", fake)
    assert cli.main(["audit", "--draws", "10"]) == 0
    ok = False
    assert cli.main(["audit", "--draws", "10"]) == 1
    assert "FAIL" in capsys.readouterr().out


def test_cli_audit_real_small_run(capsys):
    cases = [c for c in harness.audit_cases() if c.policy == "tie-break"]
    results = harness.run_audits(ExperimentConfig(), 20_000, cases)
    assert all(ok for _, _, ok in results)


def test_console_entry_point_help():
    out = subprocess.run([sys.executable, "-m", "banditclo.cli", "--help"], capture_output=True, text=True)
    assert out.returncode == 0
    for sub in ("generate", "run", "audit", "report"):
        assert sub in out.stdout
