"""Joint objective optimization: config, determinism, learning behaviour."""

import dataclasses
import math

import numpy as np
import pytest

from evad.data import Ahin, Event, EventDataset
from evad.encoder import encode_all
from evad.injection import SynthConfig, generate_synthetic
from evad.intra_event import (
    apply_corruptions,
    compute_type_clusters,
    corrupt_context,
    multivariate_event_grad,
)
from evad.numerics import ParameterStore
from evad.training import (
    CHECKPOINT_FILENAME,
    REPORT_FILENAME,
    WEIGHT_PRESETS,
    TrainConfig,
    load_config,
    save_config,
    total_loss,
    train,
    write_report,
)

from conftest import small_synth

FAST = dict(d=4, n=2, K=2, epochs=3, batch_size=4, lr=5e-3,
            grad_spot_check=False)


def star_dataset(contexts, n_users=12):
    m = len(contexts)
    types = ["center"] * m + ["user"] * n_users
    feats = np.random.default_rng(0).normal(size=(m + n_users, 2))
    ahin = Ahin(np.arange(m + n_users), types, feats, "center")
    events = [Event(i, i, tuple(m + u for u in ctx)) for i, ctx in enumerate(contexts)]
    return EventDataset(ahin, events)


class TestTrainConfig:
    def test_defaults(self):
        cfg = TrainConfig()
        assert (cfg.d, cfg.tau, cfg.n) == (64, 1.0, 10)
        assert (cfg.alpha, cfg.beta, cfg.gamma) == (1.0, 0.8, 0.2)
        assert (cfg.lr, cfg.lr_decay, cfg.decay_scope) == (1e-3, 0.5, "group")
        assert (cfg.epochs, cfg.batch_size, cfg.activation) == (100, 256, "elu")

    @pytest.mark.parametrize("kw,msg", [
        (dict(alpha=-0.1), "non-negative"),
        (dict(alpha=0, beta=0, gamma=0), "at least one module weight"),
        (dict(tau=0.0), "temperature"),
        (dict(lr=0.0), "learning rate"),
        (dict(lr_decay=0.0), "lr_decay"),
        (dict(lr_decay=1.5), "lr_decay"),
        (dict(decay_scope="both"), "decay_scope"),
        (dict(d=0), "d must be at least 1"),
        (dict(batch_size=0), "batch_size must be at least 1"),
        (dict(t_neg=-1), "thresholds"),
        (dict(activation="gelu"), "activation"),
    ])
    def test_validation(self, kw, msg):
        with pytest.raises(ValueError, match=msg):
            TrainConfig(**kw)

    def test_with_updates(self):
        cfg = TrainConfig()
        other = cfg.with_updates(epochs=7, gamma=0.0)
        assert other.epochs == 7 and other.gamma == 0.0
        assert cfg.epochs == 100
        assert other.d == cfg.d

    def test_weight_presets(self):
        assert WEIGHT_PRESETS == {"aminer": (1.0, 0.8, 0.2),
                                  "imdb": (1.0, 0.1, 0.1),
                                  "meituan": (0.5, 1.0, 0.3)}

    def test_total_loss(self):
        cfg = TrainConfig(alpha=1.0, beta=0.8, gamma=0.2)
        assert total_loss(2.0, 3.0, 5.0, cfg) == pytest.approx(5.4, abs=1e-12)
        solo = TrainConfig(alpha=2.0, beta=0.0, gamma=0.0)
        assert total_loss(1.5, 99.0, 99.0, solo) == pytest.approx(3.0, abs=1e-12)


class TestConfigFile:
    def test_round_trip(self, tmp_path):
        cfg = TrainConfig(d=8, tau=0.5, gamma=0.0, activation="tanh",
                          grad_spot_check=False)
        path = tmp_path / "train.cfg"
        save_config(cfg, path)
        assert load_config(path) == cfg

    def test_overrides_win(self, tmp_path):
        path = tmp_path / "train.cfg"
        save_config(TrainConfig(epochs=50), path)
        assert load_config(path, epochs=3).epochs == 3

    def test_unknown_key(self, tmp_path):
        path = tmp_path / "train.cfg"
        path.write_text("momentum=0.9\n")
        with pytest.raises(ValueError, match="unknown config key 'momentum'"):
            load_config(path)

    def test_malformed_line(self, tmp_path):
        path = tmp_path / "train.cfg"
        path.write_text("d: 4\n")
        with pytest.raises(ValueError, match=r"train\.cfg:1: expected key=value"):
            load_config(path)

    def test_bad_value(self, tmp_path):
        path = tmp_path / "train.cfg"
        path.write_text("epochs=many\n")
        with pytest.raises(ValueError, match="bad value 'many'"):
            load_config(path)

    def test_comments_and_blanks_ignored(self, tmp_path):
        path = tmp_path / "train.cfg"
        path.write_text("# settings\n\nd=5\n")
        assert load_config(path).d == 5


class TestTrain:
    def test_runs_and_reports(self, small_dataset):
        cfg = TrainConfig(**{**FAST, "grad_spot_check": True})
        params, report = train(small_dataset, cfg)
        assert len(report.epochs) == cfg.epochs
        assert report.grad_check_error is not None
        assert report.grad_check_error < 1e-6
        assert report.aborted is None
        for st in report.epochs:
            assert math.isfinite(st.total)
            assert st.total == pytest.approx(
                total_loss(st.pairwise, st.multivariate, st.inter_event, cfg),
                abs=1e-12)
        assert "W_mu" in params.names() and "W_in" in params.names()

    def test_deterministic_across_runs(self, small_dataset):
        cfg = TrainConfig(**FAST)
        pa, ra = train(small_dataset, cfg)
        pb, rb = train(small_dataset, cfg)
        for name in pa.names():
            assert pa[name].tobytes() == pb[name].tobytes()
        assert [s.total for s in ra.epochs] == [s.total for s in rb.epochs]

    def test_seed_changes_parameters(self, small_dataset):
        cfg = TrainConfig(**FAST)
        pa, _ = train(small_dataset, cfg)
        pb, _ = train(small_dataset, cfg.with_updates(seed=1))
        assert any(pa[name].tobytes() != pb[name].tobytes() for name in pa.names())

    def test_loss_trends_down(self):
        ds = small_synth(seed=9, m=12)
        cfg = TrainConfig(**{**FAST, "epochs": 8})
        _, report = train(ds, cfg)
        totals = [s.total for s in report.epochs]
        assert np.mean(totals[-2:]) < np.mean(totals[:2])

    def test_gamma_zero_skips_inter_module(self, small_dataset):
        cfg = TrainConfig(**FAST).with_updates(gamma=0.0)
        _, report = train(small_dataset, cfg)
        assert all(s.inter_event == 0.0 for s in report.epochs)

    def test_inter_only_training(self):
        ds = star_dataset([(0, 1, 2), (1, 2, 3), (2, 3, 4), (5, 6)])
        cfg = TrainConfig(**FAST).with_updates(alpha=0.0, beta=0.0, gamma=1.0,
                                               t_pos=1, t_neg=1)
        _, report = train(ds, cfg)
        assert all(s.pairwise == 0.0 and s.multivariate == 0.0 for s in report.epochs)
        assert all(s.inter_event > 0.0 for s in report.epochs)

    def test_no_qualifying_pairs_is_inapplicable(self):
        ds = star_dataset([(0, 1), (0, 2), (0, 3)])
        cfg = TrainConfig(**FAST).with_updates(gamma=1.0, t_pos=2, t_neg=1)
        with pytest.raises(ValueError, match="inapplicable"):
            train(ds, cfg)

    def test_solo_decay_scope_runs(self, small_dataset):
        cfg = TrainConfig(**FAST).with_updates(alpha=1.0, beta=0.0, gamma=0.0,
                                               decay_scope="solo")
        _, report = train(small_dataset, cfg)
        assert len(report.epochs) == FAST["epochs"]

    def test_output_directory(self, tmp_path, small_dataset):
        cfg = TrainConfig(**FAST)
        params, report = train(small_dataset, cfg, out_dir=tmp_path / "run")
        ckpt = tmp_path / "run" / CHECKPOINT_FILENAME
        rpt = tmp_path / "run" / REPORT_FILENAME
        assert ckpt.exists() and rpt.exists()
        assert report.checkpoint_path == str(ckpt)
        loaded = ParameterStore.load(ckpt)
        assert sorted(loaded.names()) == sorted(params.names())
        for name in params.names():
            assert loaded[name].tobytes() == params[name].tobytes()
        text = rpt.read_text()
        assert text.startswith("# train-report v1\n")
        assert f"epochs={FAST['epochs']}" in text

    def test_report_file_round_trip_values(self, tmp_path, small_dataset):
        cfg = TrainConfig(**FAST)
        _, report = train(small_dataset, cfg)
        path = tmp_path / "report.txt"
        write_report(report, path)
        lines = path.read_text().splitlines()
        epoch_lines = [ln for ln in lines if ln.startswith("epoch=")]
        assert len(epoch_lines) == len(report.epochs)
        first = epoch_lines[0]
        assert f"total={report.epochs[0].total!r}" in first


class TestLearnedDiscrimination:
    def test_context_scores_separate_after_training(self):
        cfg_ds = SynthConfig(
            node_counts={"center": 40, "ctx_a": 30, "ctx_b": 30},
            center_type="center", m=40, mean_context_size=3.0,
            feature_width=6, communities=2, noise_scale=0.2,
            community_bias=0.95, seed=21)
        ds = generate_synthetic(cfg_ds)
        cfg = TrainConfig(d=8, alpha=0.0, beta=1.0, gamma=0.0, K=2,
                          epochs=15, batch_size=16, lr=5e-3, seed=0,
                          grad_spot_check=False)
        params, report = train(ds, cfg)
        assert report.aborted is None

        clusters = compute_type_clusters(ds.ahin, k=2, seed=5)
        rng = np.random.default_rng(5)
        cache = encode_all(ds.ahin, params)
        pos, neg = [], []
        for ev in ds.events:
            corrupted = apply_corruptions(
                ev, corrupt_context(ev, ds.ahin, clusters, rng))
            _, s_pos, s_neg = multivariate_event_grad(ev, corrupted, cache, params)
            pos.append(s_pos)
            neg.append(s_neg)
        assert np.mean(pos) > np.mean(neg)
