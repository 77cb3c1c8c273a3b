"""End-to-end command-line pipeline in-process, plus exit-code contracts."""

import hashlib
import json

import numpy as np
import pytest

from evad.cli import load_synth_config, main
from evad.data import load_dataset_dir
from evad.detection import read_scores
from evad.training import load_config

SYNTH_CFG = """\
# small two-type benchmark
count_center=14
count_ctx_a=8
count_ctx_b=6
center_type=center
m=10
mean_context_size=3.0
feature_width=3
communities=2
noise_scale=0.4
seed=5
"""

TRAIN_FLAGS = ["--d", "4", "--n", "2", "--K", "2", "--epochs", "2",
               "--batch-size", "8", "--gamma", "0.0",
               "--grad-spot-check", "false"]


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """generate -> inject -> train -> score -> eval, all through main()."""
    root = tmp_path_factory.mktemp("pipeline")
    cfg_path = root / "synth.cfg"
    cfg_path.write_text(SYNTH_CFG)
    dirs = {name: root / name for name in ("data", "injected", "run", "scored")}

    assert main(["generate", "--config", str(cfg_path),
                 "--out", str(dirs["data"])]) == 0
    assert main(["inject", "--data", str(dirs["data"]), "--fraction", "0.2",
                 "--seed", "3", "--out", str(dirs["injected"])]) == 0
    assert main(["train", "--data", str(dirs["injected"]),
                 "--out", str(dirs["run"]), *TRAIN_FLAGS]) == 0
    assert main(["score", "--data", str(dirs["injected"]),
                 "--checkpoint", str(dirs["run"] / "checkpoint.npz"),
                 "--variant", "min,pos", *TRAIN_FLAGS,
                 "--out", str(dirs["scored"])]) == 0
    assert main(["eval", "--scores", str(dirs["scored"] / "scores.tsv"),
                 "--data", str(dirs["injected"]),
                 "--out", str(root / "eval.txt")]) == 0
    return root, dirs


class TestPipeline:
    def test_generate_outputs(self, pipeline):
        _, dirs = pipeline
        assert (dirs["data"] / "nodes.tsv").exists()
        assert (dirs["data"] / "events.tsv").exists()
        ds = load_dataset_dir(dirs["data"])
        assert ds.m == 10 and ds.labels is None

    def test_inject_outputs(self, pipeline):
        _, dirs = pipeline
        ds = load_dataset_dir(dirs["injected"])
        assert ds.labels is not None
        assert int(ds.labels.sum()) == 2  # floor(0.2 * 10)
        manifest = json.loads((dirs["injected"] / "injection_manifest.json").read_text())
        assert len(manifest) == 2

    def test_train_outputs(self, pipeline):
        _, dirs = pipeline
        for name in ("checkpoint.npz", "train_report.txt", "train_config.txt",
                     "manifest.json"):
            assert (dirs["run"] / name).exists()
        cfg = load_config(dirs["run"] / "train_config.txt")
        assert cfg.epochs == 2 and cfg.d == 4 and cfg.gamma == 0.0
        report = (dirs["run"] / "train_report.txt").read_text()
        assert report.startswith("# train-report v1\n")

    def test_score_outputs(self, pipeline):
        _, dirs = pipeline
        report = read_scores(dirs["scored"] / "scores.tsv")
        assert len(report.event_ids) == 10
        assert sorted(report.rank.tolist()) == list(range(1, 11))
        assert report.variant.pairwise_mode == "min"

    def test_eval_output(self, pipeline):
        root, _ = pipeline
        text = (root / "eval.txt").read_text()
        values = dict(line.split("=", 1) for line in text.splitlines())
        assert values["events"] == "10" and values["positives"] == "2"
        assert 0.0 <= float(values["ap"]) <= 1.0
        assert 0.0 <= float(values["auc"]) <= 1.0
        assert 0.0 <= float(values["f1"]) <= 1.0

    def test_manifest_hashes_verify(self, pipeline):
        _, dirs = pipeline
        manifest = json.loads((dirs["run"] / "manifest.json").read_text())
        assert manifest["command"] == "train"
        assert manifest["config"]["epochs"] == 2
        for path, digest in manifest["outputs"].items():
            got = hashlib.sha256(open(path, "rb").read()).hexdigest()
            assert got == digest

    def test_repeat_score_deterministic(self, pipeline, tmp_path):
        _, dirs = pipeline
        assert main(["score", "--data", str(dirs["injected"]),
                     "--checkpoint", str(dirs["run"] / "checkpoint.npz"),
                     "--variant", "min,pos", *TRAIN_FLAGS,
                     "--out", str(tmp_path)]) == 0
        a = read_scores(dirs["scored"] / "scores.tsv")
        b = read_scores(tmp_path / "scores.tsv")
        assert np.array_equal(a.total, b.total)
        assert a.event_ids == b.event_ids


class TestSweep(object):
    def test_alpha_grid(self, pipeline, tmp_path):
        _, dirs = pipeline
        out = tmp_path / "sweep"
        assert main(["sweep", "--data", str(dirs["injected"]),
                     "--knob", "alpha", "--values", "0.5,1.0",
                     *TRAIN_FLAGS, "--epochs", "1",
                     "--out", str(out)]) == 0
        rows = (out / "sweep.tsv").read_text().splitlines()
        assert rows[0] == "knob\tvalue\tap\tauc"
        assert len(rows) == 3
        for row in rows[1:]:
            knob, value, ap, auc = row.split("\t")
            assert knob == "alpha"
            assert 0.0 <= float(ap) <= 1.0
            assert 0.0 <= float(auc) <= 1.0


class TestConfigPrecedence:
    def test_flags_beat_weights_beat_preset_beat_file(self, pipeline, tmp_path):
        _, dirs = pipeline
        cfg_file = tmp_path / "base.cfg"
        cfg_file.write_text("tau=0.7\nepochs=5\nalpha=0.2\nd=4\nn=2\nK=2\n"
                            "grad_spot_check=False\n")
        out = tmp_path / "run"
        assert main(["train", "--data", str(dirs["injected"]),
                     "--config", str(cfg_file),
                     "--preset", "aminer",
                     "--weights", "0.3,0.2,0.0",
                     "--alpha", "0.9",
                     "--epochs", "1",
                     "--out", str(out)]) == 0
        cfg = load_config(out / "train_config.txt")
        assert cfg.alpha == 0.9   # per-field flag wins
        assert cfg.beta == 0.2    # --weights beats the preset
        assert cfg.gamma == 0.0
        assert cfg.tau == 0.7     # file value survives where nothing overrides
        assert cfg.epochs == 1


class TestExitCodes:
    def test_bad_input_is_two(self, tmp_path, capsys):
        assert main(["generate", "--out", str(tmp_path / "x")]) == 2
        assert "generate needs --preset or --config" in capsys.readouterr().err

    def test_unlabeled_eval_is_two(self, pipeline, tmp_path, capsys):
        _, dirs = pipeline
        assert main(["eval", "--scores", str(dirs["scored"] / "scores.tsv"),
                     "--data", str(dirs["data"])]) == 2
        assert "labels.tsv missing" in capsys.readouterr().err

    def test_missing_checkpoint_is_three(self, pipeline, tmp_path, capsys):
        _, dirs = pipeline
        assert main(["score", "--data", str(dirs["injected"]),
                     "--checkpoint", str(tmp_path / "nope.npz"),
                     "--out", str(tmp_path)]) == 3
        assert "io failure" in capsys.readouterr().err

    def test_malformed_dataset_is_two(self, tmp_path, capsys):
        bad = tmp_path / "bad"
        bad.mkdir()
        (bad / "nodes.tsv").write_text("0\tcenter\t0.0\n")
        (bad / "events.tsv").write_text("not a record\n")
        assert main(["inject", "--data", str(bad), "--fraction", "0.3",
                     "--out", str(tmp_path / "out")]) == 2
        assert "error:" in capsys.readouterr().err


class TestSynthConfigFile:
    def test_parses_counts_and_scalars(self, tmp_path):
        path = tmp_path / "synth.cfg"
        path.write_text(SYNTH_CFG)
        cfg = load_synth_config(path)
        assert cfg.node_counts == {"center": 14, "ctx_a": 8, "ctx_b": 6}
        assert cfg.m == 10 and cfg.seed == 5

    def test_unknown_key_rejected(self, tmp_path):
        path = tmp_path / "synth.cfg"
        path.write_text("count_center=5\ncount_u=5\nm=5\nwidth=3\n")
        with pytest.raises(ValueError, match="unknown config key 'width'"):
            load_synth_config(path)

    def test_counts_required(self, tmp_path):
        path = tmp_path / "synth.cfg"
        path.write_text("m=5\n")
        with pytest.raises(ValueError, match="count_"):
            load_synth_config(path)
