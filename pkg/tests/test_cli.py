import json
import subprocess
import sys

import numpy as np
import pytest

from nnsr.cli import Scenario, main, run_pipeline, run_sweep
from nnsr.imaging import Window
from nnsr.measures import AtomicMeasure


@pytest.fixture
def workdir(tmp_path):
    Window.gaussian(np.linspace(0, 1, 5), 0.2).save(tmp_path / "w.json")
    AtomicMeasure.from_atoms([(0.3, 0.4, 1.0), (0.7, 0.65, 0.8)]).save(
        tmp_path / "x.json"
    )
    scenario = {
        "name": "t",
        "window": "w.json",
        "truth": "x.json",
        "delta": 0.0,
        "noise_seed": 3,
        "grid_n": 96,
        "eps": 0.1,
        "deltap": {"rule": "explicit", "value": 1e-6},
    }
    (tmp_path / "scenario.json").write_text(json.dumps(scenario))
    return tmp_path


def _run(args):
    return main([str(a) for a in args])


class TestSubcommands:
    def test_forward_recover_distance(self, workdir):
        rc = _run(
            ["forward", "--window", workdir / "w.json", "--measure",
             workdir / "x.json", "--out-y", workdir / "y.csv"]
        )
        assert rc == 0
        rc = _run(
            ["recover", "--window", workdir / "w.json", "--obs", workdir / "y.csv",
             "--grid-n", 96, "--deltap", 5e-3, "--out-xhat", workdir / "xhat.json"]
        )
        assert rc == 0
        rc = _run(
            ["distance", "--x1", workdir / "x.json", "--x2", workdir / "xhat.json"]
        )
        assert rc == 0

    def test_recover_not_converged_exit(self, workdir):
        _run(
            ["forward", "--window", workdir / "w.json", "--measure",
             workdir / "x.json", "--out-y", workdir / "y.csv"]
        )
        rc = _run(
            ["recover", "--window", workdir / "w.json", "--obs", workdir / "y.csv",
             "--grid-n", 8, "--deltap", 1e-12, "--out-xhat", workdir / "xh.json"]
        )
        assert rc == 3

    def test_invalid_config_exit(self, workdir):
        (workdir / "bad.json").write_text("{}")
        rc = _run(["pipeline", "--config", workdir / "bad.json"])
        assert rc == 2

    def test_certificate_subcommand(self, workdir, capsys):
        AtomicMeasure.single(0.45, 0.55).save(workdir / "s.json")
        w4 = Window.gaussian(np.linspace(0, 1, 4), 0.2)
        w4.save(workdir / "w4.json")
        rc = _run(
            ["certificate", "--window", workdir / "w4.json", "--measure",
             workdir / "s.json", "--kind", "robust", "--eps", 0.1,
             "--heatmap-n", 64, "--out-dir", workdir / "cert"]
        )
        assert rc == 0
        b = np.loadtxt(workdir / "cert" / "b.csv", delimiter=",")
        assert b.shape == (4, 4)
        q = np.loadtxt(workdir / "cert" / "q_grid.csv", delimiter=",")
        assert q.shape == (64, 64)
        rep = json.loads((workdir / "cert" / "report.json").read_text())
        assert rep["kind"] == "robust"

    def test_tcheck_subcommand(self, workdir, capsys):
        rc = _run(
            ["tcheck", "--window", workdir / "w.json", "--mode", "tsystem",
             "--trials", 50]
        )
        assert rc == 0
        rep = json.loads(capsys.readouterr().out)
        assert rep["passed"]


class TestPipeline:
    def test_noiseless_pipeline_report(self, workdir):
        sc = Scenario.load(workdir / "scenario.json")
        rep = run_pipeline(sc, out_dir=workdir / "out")
        assert (workdir / "out" / "report.json").exists()
        assert (workdir / "out" / "xhat.json").exists()
        assert (workdir / "out" / "y.csv").exists()
        assert rep["d_gw"] <= 2 * (1 / 95) * 1.8 + 1e-4

    def test_empty_truth(self, workdir):
        sc = Scenario.load(workdir / "scenario.json")
        sc.truth = AtomicMeasure.empty()
        rep = run_pipeline(sc)
        assert rep["d_gw"] == pytest.approx(0.0)

    def test_determinism(self, workdir):
        sc = Scenario.load(workdir / "scenario.json")
        sc.delta = 0.02
        run_pipeline(sc, out_dir=workdir / "o1")
        run_pipeline(sc, out_dir=workdir / "o2")
        b1 = (workdir / "o1" / "report.json").read_bytes()
        b2 = (workdir / "o2" / "report.json").read_bytes()
        assert b1 == b2

    def test_report_d_gw_recomputable(self, workdir):
        sc = Scenario.load(workdir / "scenario.json")
        rep = run_pipeline(sc, out_dir=workdir / "out")
        from nnsr.transport import gen_wasserstein

        xhat = AtomicMeasure.load(workdir / "out" / "xhat.json")
        d, _ = gen_wasserstein(sc.truth, xhat)
        assert d == pytest.approx(rep["d_gw"], abs=1e-9)


class TestSweep:
    def test_single_value_matches_pipeline(self, workdir):
        sc = Scenario.load(workdir / "scenario.json")
        sc.deltap_rule = "additive"
        rows, agg = run_sweep(sc, "delta", [0.0], seeds=(3,))
        rep = run_pipeline(_variant(sc))
        assert rows[0]["d_gw"] == pytest.approx(rep["d_gw"], abs=1e-12)
        assert agg[0]["n"] == 1

    def test_rows_record_failures(self, workdir):
        sc = Scenario.load(workdir / "scenario.json")
        rows, agg = run_sweep(sc, "M", [0], seeds=(0,))  # empty window -> error
        assert "error" in rows[0]
        assert agg[0]["n"] == 0

    def test_m_sweep_exact_from_threshold(self, workdir):
        # K=2 noiseless: recovery is exact for M >= 2K+1
        sc = Scenario.load(workdir / "scenario.json")
        sc.grid_n = 128
        rows, agg = run_sweep(sc, "M", [5, 7], seeds=(0,))
        h = 1.0 / 127
        tv = sc.truth.tv()
        for row in rows:
            assert row["d_gw"] <= 2 * h * tv + 1e-4

    def test_sep_sweep_error_trend(self, workdir):
        # recovery error does not grow as the separation grows (trend over seeds)
        sc = Scenario.load(workdir / "scenario.json")
        sc.grid_n = 128
        sc.delta = 0.05
        sc.deltap_rule = "additive"
        seeds = tuple(range(6))
        rows, agg = run_sweep(sc, "sep", [0.12, 0.3], seeds=seeds)
        means = {a["value"]: a["d_gw_mean"] for a in agg}
        assert means[0.3] <= means[0.12] + 1e-9


def _variant(sc):
    from copy import deepcopy

    out = deepcopy(sc)
    out.delta = 0.0
    out.noise_seed = 3
    out.deltap_rule = "additive"
    return out
