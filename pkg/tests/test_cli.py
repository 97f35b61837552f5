import json
import os

import pytest

import privopt as po
from privopt.cli import main

from conftest import quartic_config


def write(path, doc):
    with open(path, "w") as fh:
        json.dump(doc, fh)
    return str(path)


def strip_timestamp(path):
    with open(path) as fh:
        return [line for line in fh if not line.startswith("# timestamp=")
                and '"timestamp"' not in line]


@pytest.fixture
def run_cfg(tmp_path):
    return write(tmp_path / "run.json", quartic_config(algorithm="rss_nb", delta=1.0, seed=3))


class TestRun:
    def test_produces_trace_and_metrics(self, tmp_path, run_cfg):
        out = tmp_path / "out"
        assert main(["run", "--config", run_cfg, "--out-dir", str(out)]) == 0
        assert (out / "run_trace.json").exists()
        csv_lines = (out / "run_metrics.csv").read_text().splitlines()
        assert csv_lines[0].startswith("# timestamp=")
        assert csv_lines[1].startswith("# provenance=")
        assert csv_lines[2] == "k,algorithm,delta,seed,suboptimality,max_disagreement,eta2,F_k,H_k"
        assert len(csv_lines) == 3 + 401  # rounds plus post-run row

    def test_final_suboptimality_small(self, tmp_path, run_cfg):
        out = tmp_path / "out"
        main(["run", "--config", run_cfg, "--out-dir", str(out)])
        last = (out / "run_metrics.csv").read_text().splitlines()[-1].split(",")
        assert float(last[4]) < 1e-3

    def test_zero_delta_digest_matches_dgd(self, tmp_path):
        cfg_nb = write(tmp_path / "nb.json",
                       quartic_config(algorithm="rss_nb", delta=0.0, seed=5,
                                      output_basename="nb"))
        cfg_dgd = write(tmp_path / "dgd.json",
                        quartic_config(algorithm="dgd", output_basename="dgd"))
        main(["run", "--config", cfg_nb, "--out-dir", str(tmp_path / "o")])
        main(["run", "--config", cfg_dgd, "--out-dir", str(tmp_path / "o")])
        nb = json.load(open(tmp_path / "o" / "nb_trace.json"))
        dgd = json.load(open(tmp_path / "o" / "dgd_trace.json"))
        assert nb["digest"] == dgd["digest"]

    def test_malformed_config_exits_2_without_outputs(self, tmp_path):
        bad = write(tmp_path / "bad.json", {"algorithm": "dgd", "bogus_key": 1})
        out = tmp_path / "out"
        assert main(["run", "--config", bad, "--out-dir", str(out)]) == 2
        assert not out.exists() or not list(out.iterdir())

    def test_unknown_algorithm_exits_2(self, tmp_path):
        bad = write(tmp_path / "bad.json", quartic_config(algorithm="sgd"))
        assert main(["run", "--config", bad, "--out-dir", str(tmp_path / "o")]) == 2

    def test_rerun_is_byte_identical_modulo_timestamp(self, tmp_path, run_cfg):
        main(["run", "--config", run_cfg, "--out-dir", str(tmp_path / "a")])
        main(["run", "--config", run_cfg, "--out-dir", str(tmp_path / "b")])
        assert strip_timestamp(tmp_path / "a" / "run_metrics.csv") == \
            strip_timestamp(tmp_path / "b" / "run_metrics.csv")


class TestSweep:
    def sweep_doc(self, **grid):
        base = quartic_config(max_iter=120, record_every=40)
        base.pop("algorithm")
        return {"base": base, "grid": grid}

    def test_grid_rows_and_pairing(self, tmp_path):
        cfg = write(tmp_path / "sweep.json",
                    self.sweep_doc(algorithm=["dgd", "rss_nb", "rss_lb"],
                                   delta=[1.0, 15.0], seed=[1, 2, 3]))
        out = tmp_path / "out"
        assert main(["sweep", "--config", cfg, "--out-dir", str(out)]) == 0
        lines = (out / "sweep_metrics.csv").read_text().splitlines()
        rows = [l.split(",") for l in lines[3:]]
        # 3 seeds per (algorithm, delta, k)
        from collections import Counter
        counts = Counter((r[1], r[2], r[0]) for r in rows)
        assert set(counts.values()) == {3}

    def test_empty_grid_writes_header_only(self, tmp_path):
        doc = self.sweep_doc(algorithm=[])
        cfg = write(tmp_path / "sweep.json", doc)
        out = tmp_path / "out"
        assert main(["sweep", "--config", cfg, "--out-dir", str(out)]) == 0
        lines = (out / "sweep_metrics.csv").read_text().splitlines()
        assert len(lines) == 3

    def test_failed_cells_recorded_and_sweep_continues(self, tmp_path):
        # a negative noise bound fails that cell's validation, the rest proceed
        doc = self.sweep_doc(algorithm=["dgd", "rss_nb"], delta=[-1.0, 1.0], seed=[1])
        cfg = write(tmp_path / "sweep.json", doc)
        out = tmp_path / "out"
        code = main(["sweep", "--config", cfg, "--out-dir", str(out)])
        report = json.load(open(out / "sweep_report.json"))["report"]
        lines = (out / "sweep_metrics.csv").read_text().splitlines()
        assert len(lines) > 3  # healthy cells still produced rows
        assert report["failed"] and code == 1
        assert any(f["delta"] == -1.0 for f in report["failed"])


class TestAudit:
    def test_all_checks_pass(self, tmp_path, run_cfg):
        out = tmp_path / "out"
        main(["run", "--config", run_cfg, "--out-dir", str(out)])
        trace = str(out / "run_trace.json")
        report_path = str(tmp_path / "audit.json")
        code = main(["audit", trace, "--checks", "invariants,lemma1,lemma2,consensus",
                     "--consensus-threshold", "0.02", "--out", report_path])
        assert code == 0
        report = json.load(open(report_path))["report"]
        assert all(v["passed"] for v in report.values())

    def test_unknown_check_exits_2(self, tmp_path, run_cfg):
        out = tmp_path / "out"
        main(["run", "--config", run_cfg, "--out-dir", str(out)])
        assert main(["audit", str(out / "run_trace.json"), "--checks", "lemma9"]) == 2

    def test_corrupted_trace_fails_invariants(self, tmp_path, run_cfg):
        out = tmp_path / "out"
        main(["run", "--config", run_cfg, "--out-dir", str(out)])
        path = out / "run_trace.json"
        doc = json.load(open(path))
        doc["rounds"]["states"][50][2][0] = 99.0  # outside the feasible box
        write(path, doc)
        assert main(["audit", str(path), "--checks", "invariants"]) == 1

    def test_theorem3_wrong_schedule_exits_2(self, tmp_path):
        cfg = write(tmp_path / "cfg.json",
                    quartic_config(schedule={"kind": "inv_k", "a": 1.0, "b": 1.0}))
        out = tmp_path / "out"
        main(["run", "--config", cfg, "--out-dir", str(out)])
        assert main(["audit", str(out / "run_trace.json"), "--checks", "theorem3"]) == 2


@pytest.fixture
def fs_artifacts(tmp_path):
    cfg = write(tmp_path / "fs.json",
                quartic_config(algorithm="fs", delta_coeff=0.5, d_max=8, seed=11,
                               topology={"family": "complete", "n": 5},
                               max_iter=150, output_basename="fs"))
    out = tmp_path / "fsout"
    assert main(["run", "--config", cfg, "--out-dir", str(out)]) == 0
    alts = write(tmp_path / "alts.json", {"0": [0, 0, 1, 0, 1]})
    return str(out / "fs_trace.json"), alts, tmp_path


class TestPrivacy:
    def test_complete_graph_coalition_passes(self, fs_artifacts):
        trace, alts, tmp = fs_artifacts
        report_path = str(tmp / "priv.json")
        code = main(["privacy", trace, "--coalition", "3,4", "--target", "0",
                     "--alt-objectives", alts, "--out", report_path])
        assert code == 0
        report = json.load(open(report_path))["report"]
        assert report["passed"] and report["max_residual"] <= 1e-9

    def test_cut_coalition_exits_1_with_necessity_demo(self, tmp_path):
        cfg = write(tmp_path / "fsc.json",
                    quartic_config(algorithm="fs", delta_coeff=0.5, d_max=8, seed=12,
                                   max_iter=150, output_basename="fsc"))
        out = tmp_path / "out"
        main(["run", "--config", cfg, "--out-dir", str(out)])
        alts = write(tmp_path / "alts.json", {"1": [0, 0, 1]})
        report_path = str(tmp_path / "priv.json")
        code = main(["privacy", str(out / "fsc_trace.json"), "--coalition", "0,2",
                     "--target", "1", "--alt-objectives", alts, "--out", report_path])
        assert code == 1
        report = json.load(open(report_path))["report"]
        assert "necessity_demo" in report and report["necessity_demo"]["passed"]

    def test_full_coalition_exits_2(self, fs_artifacts):
        trace, alts, _ = fs_artifacts
        assert main(["privacy", trace, "--coalition", "0,1,2,3,4", "--target", "0",
                     "--alt-objectives", alts]) == 2

    def test_non_fs_trace_exits_2(self, tmp_path, run_cfg):
        out = tmp_path / "out"
        main(["run", "--config", run_cfg, "--out-dir", str(out)])
        alts = write(tmp_path / "alts.json", {"0": [0, 0, 1]})
        assert main(["privacy", str(out / "run_trace.json"), "--coalition", "1",
                     "--target", "0", "--alt-objectives", alts]) == 2


class TestBounds:
    def test_prints_constants(self, tmp_path, run_cfg, capsys):
        assert main(["bounds", "--config", run_cfg]) == 0
        doc = json.loads(capsys.readouterr().out)
        report = doc["report"]
        assert report["rho"] == pytest.approx(1 / 3)
        assert report["contraction"] == pytest.approx(1 - (1 / 3) / 100)
        assert report["delta"] == 1.0


class TestRandomizedConfigs:
    """Property net: any valid random small config runs, audits clean, and
    round-trips through trace serialization."""

    @pytest.mark.parametrize("trial", range(6))
    def test_run_and_audit(self, tmp_path, trial):
        import numpy as np

        from privopt.analysis import audit_invariants
        from privopt.configs import RunConfig, execute
        from privopt.engine import ExecutionTrace
        from privopt.objectives import GlobalProblem

        rng = np.random.default_rng(900 + trial)
        n = int(rng.integers(2, 6))
        family = ["cycle", "complete", "star", "path"][trial % 4]
        if family == "cycle" and n < 3:
            n = 3
        coeff_pool = [[0, 0, 1], [0, 0, 0.5, 0, 0.25], [0, 1, 1], [2, 0, 2]]
        doc = quartic_config(
            algorithm=["dgd", "rss_nb", "rss_lb"][trial % 3],
            topology={"family": family, "n": n},
            objectives=[{"kind": "polynomial",
                         "coeffs": coeff_pool[int(rng.integers(0, len(coeff_pool)))]}
                        for _ in range(n)],
            delta=float(rng.choice([0.0, 0.5, 3.0])),
            seed=int(rng.integers(0, 1000)),
            max_iter=int(rng.integers(50, 200)),
            init=np.linspace(-0.5, 0.5, n)[:, None].tolist(),
            record_every=int(rng.choice([1, 7])),
        )
        config = RunConfig.from_dict(doc)
        trace = execute(config)
        problem = config.build_problem()
        assert audit_invariants(trace, problem).passed
        path = tmp_path / f"t{trial}.json"
        trace.save(path)
        assert ExecutionTrace.load(path).state_digest() == trace.state_digest()
