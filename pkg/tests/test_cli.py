import csv
import json
import subprocess
import sys

import numpy as np
import pytest

import cli_checks
from cli_checks import run
from fairspk import data, metrics
from fairspk.scoring import partition_scores


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    return cli_checks.run_pipeline(tmp_path_factory.mktemp("pipeline"))


def read_csv(path):
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    return rows[0], rows[1:]


def manifest(directory):
    return json.loads((directory / "manifest.json").read_text())


def write_scores(path, scores, labels, groups):
    trials = [data.ScoredTrial(data.Trial(f"e{i}", f"t{i}", data.Label.GENUINE if lab else data.Label.IMPOSTOR,
                                          data.Group.G1 if g == 0 else data.Group.G2), float(s))
              for i, (s, lab, g) in enumerate(zip(scores, labels, groups))]
    data.save_scores(trials, path)


class TestExitCodes:
    def test_black_box(self, tmp_path):
        def code(*argv):
            return subprocess.run([sys.executable, "-m", "fairspk", *map(str, argv)],
                                  capture_output=True, text=True).returncode
        assert code("synth", "--dim", "4", "--speakers-g1", "10", "--speakers-g2", "10", "--utts-per-speaker", "3",
                    "--max-trials", "5", "--out", tmp_path / "s") == 0
        assert code("synth", "--preset", "balanced-biased") == 2
        assert code("train", "--mode", "foo", "--data", tmp_path / "s" / "train.csv", "--out", tmp_path / "t") == 2
        assert code("kde", "--scores", tmp_path / "missing.csv", "--out", tmp_path / "k") == 1

    def test_usage_errors(self, tmp_path, capsys):
        assert run("synth", "--rho-g1", "1.5", "--out", tmp_path) == 2
        assert "usage" in capsys.readouterr().err
        assert run("eval", "--scores-a", "x.csv", "--far-step", "0.7", "--out", tmp_path) == 2
        assert run("eval", "--scores-a", "x.csv", "--omega", "1.5", "--out", tmp_path) in (1, 2)
        (tmp_path / "bad.json").write_text('{"nope": 1}')
        assert run("train", "--data", "x.csv", "--config", tmp_path / "bad.json", "--out", tmp_path) == 2

    def test_malformed_scores(self, tmp_path):
        bad = tmp_path / "bad.csv"
        bad.write_text("a,b\n1,2\n")
        assert run("eval", "--scores-a", bad, "--out", tmp_path / "e") == 1


class TestPipeline:
    def test_synth_outputs(self, pipeline):
        s = pipeline["synth"]
        for name in ("embeddings", "train", "dev", "test"):
            assert len(data.load_embeddings(s / f"{name}.csv")) > 0
        assert len(data.load_trials(s / "test_trials.csv")) > 0
        m = manifest(s)
        assert m["command"] == "synth" and m["seed"] == 7 and m["config"]["rho_g1"] == 0.5
        assert {"train.csv", "test_trials.csv"} <= set(m["outputs"])
        assert m["wall_clock_seconds"] >= 0 and m["version"]

    def test_train_echoes_delta(self, pipeline):
        m = manifest(pipeline["train"])
        assert m["config"]["delta"] == 70.0 and m["config"]["mode"] == "uai-at"
        header, rows = read_csv(pipeline["train"] / "history.csv")
        assert header == ["epoch", "l_pred", "l_recon", "l_dis1", "l_dis2", "l_bias",
                          "val_speaker_acc", "val_group_acc"]
        assert 1 <= len(rows) <= 3
        assert (pipeline["train"] / "model.json").exists()

    def test_sweep_table(self, pipeline):
        header, rows = read_csv(pipeline["sweep"] / "sweep.csv")
        assert header == ["delta", "speaker_acc", "group_acc", "eer", "au_fadr"]
        assert [float(r[0]) for r in rows] == [10.0, 50.0]
        best = json.loads((pipeline["sweep"] / "selection.json").read_text())["best_delta"]
        areas = {float(r[0]): float(r[4]) for r in rows}
        assert areas[best] == max(areas.values())
        assert manifest(pipeline["sweep"])["config"]["mode"] == "uai-mtl"

    def test_eval_rederivable(self, pipeline):
        rep = json.loads((pipeline["eval"] / "metrics.json").read_text())
        assert set(rep["a"]["au_fadr"]) == {"1.00", "0.75", "0.50", "0.25", "0.00"}
        assert manifest(pipeline["eval"])["config"]["omega"] == [1.0, 0.75, 0.5, 0.25, 0.0]
        assert len(rep["far_grid_percent"]) == 37
        part = partition_scores(data.load_scores(pipeline["score_raw"] / "scores.csv"))
        e, _ = metrics.eer(part.pooled_genuine, part.pooled_impostor)
        assert rep["a"]["eer"] == e
        area = metrics.au_fadr(metrics.fadr_curve(part, metrics.FadrParams(0.5)))
        assert rep["a"]["au_fadr"]["0.50"] == pytest.approx(area, abs=1e-12)
        header, rows = read_csv(pipeline["eval"] / "fadr_b_omega1.00.csv")
        assert header == ["far_percent", "fadr_percent"] and len(rows) == 37
        header, _ = read_csv(pipeline["eval"] / "group_curves_a.csv")
        assert header == ["far_percent", "far_g1", "far_g2", "frr_g1", "frr_g2"]

    def test_permtest(self, pipeline):
        rep = json.loads((pipeline["permtest"] / "permtest.json").read_text())
        assert 0 < rep["p"] <= 1
        cfg = manifest(pipeline["permtest"])["config"]
        assert cfg == {"stat": "aufadr", "n": 50, "subsample": 100000, "omega": 1.0}

    def test_kde(self, pipeline):
        header, rows = read_csv(pipeline["kde"] / "kde_genuine.csv")
        assert header == ["x", "density_g1", "density_g2"] and len(rows) > 100
        ov = json.loads((pipeline["kde"] / "overlap.json").read_text())
        assert set(ov) == {"genuine", "impostor"}
        assert ov["impostor"]["overlap_percent"] < ov["genuine"]["overlap_percent"]

    @pytest.mark.parametrize("step", ["synth", "train", "sweep", "score_raw", "score_model", "eval", "permtest", "kde"])
    def test_rerun_identical(self, pipeline, step, tmp_path):
        assert cli_checks.rerun_differences(pipeline[step], tmp_path / "again") == []


class TestSmallCases:
    def test_identical_groups_900(self, tmp_path):
        rng = np.random.default_rng(0)
        g, i = rng.normal(0.6, 0.1, 30), rng.normal(0.0, 0.1, 200)
        scores = np.concatenate([g, g, i, i])
        labels = [True] * 60 + [False] * 400
        groups = [0] * 30 + [1] * 30 + [0] * 200 + [1] * 200
        write_scores(tmp_path / "s.csv", scores, labels, groups)
        assert run("eval", "--scores-a", tmp_path / "s.csv", "--out", tmp_path / "e") == 0
        areas = json.loads((tmp_path / "e" / "metrics.json").read_text())["a"]["au_fadr"]
        assert all(abs(v - 900.0) <= 1e-6 for v in areas.values())

    def test_permtest_same_file(self, tmp_path):
        rng = np.random.default_rng(1)
        write_scores(tmp_path / "s.csv", rng.normal(size=80), rng.random(80) < 0.3, rng.integers(0, 2, 80))
        for stat in ("aufadr", "eer"):
            out = tmp_path / stat
            assert run("permtest", "--stat", stat, "--n", 20, "--scores-a", tmp_path / "s.csv",
                       "--scores-b", tmp_path / "s.csv", "--out", out) == 0
            assert json.loads((out / "permtest.json").read_text())["p"] == 1.0

    def test_permtest_defaults(self, tmp_path):
        rng = np.random.default_rng(2)
        write_scores(tmp_path / "s.csv", rng.normal(size=40), rng.random(40) < 0.5, rng.integers(0, 2, 40))
        assert run("permtest", "--scores-a", tmp_path / "s.csv", "--scores-b", tmp_path / "s.csv",
                   "--n", 5, "--out", tmp_path / "p") == 0
        cfg = manifest(tmp_path / "p")["config"]
        assert (cfg["stat"], cfg["subsample"]) == ("aufadr", 100000)

    def test_config_file_overridden_by_flag(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"dim": 5, "speakers_g1": 10, "speakers_g2": 10,
                                                     "utts_per_speaker": 3, "max_trials": 4}))
        assert run("synth", "--config", tmp_path / "c.json", "--dim", 6, "--out", tmp_path / "s") == 0
        m = manifest(tmp_path / "s")
        assert m["config"]["dim"] == 6 and m["config"]["speakers_g1"] == 10
        assert data.load_embeddings(tmp_path / "s" / "train.csv").dim == 6

    def test_synth_twice_identical(self, tmp_path):
        argv = ["synth", "--dim", 4, "--speakers-g1", 10, "--speakers-g2", 10, "--utts-per-speaker", 3,
                "--max-trials", 10, "--seed", 5]
        assert run(*argv, "--out", tmp_path / "a") == 0 and run(*argv, "--out", tmp_path / "b") == 0
        assert cli_checks.output_bytes(tmp_path / "a") == cli_checks.output_bytes(tmp_path / "b")

    def test_rerun_rejects_foreign_manifest(self, tmp_path):
        (tmp_path / "m.json").write_text('{"format": "other"}')
        assert run("rerun", "--manifest", tmp_path / "m.json", "--out", tmp_path / "o") == 2
