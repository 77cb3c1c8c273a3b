"""Anomaly injection and the synthetic benchmark generator."""

import numpy as np
import pytest

from evad.data import Ahin, Event, EventDataset
from evad.injection import (
    SYNTH_PRESETS,
    InjectionConfig,
    SynthConfig,
    generate_synthetic,
    inject_anomalies,
    read_manifest,
    synth_preset,
    write_manifest,
)
from evad.numerics import diagnostics, reset_diagnostics

from conftest import small_synth


class TestInjectionConfig:
    @pytest.mark.parametrize("frac", [0.0, 1.0, -0.1, 1.5])
    def test_fraction_bounds(self, frac):
        with pytest.raises(ValueError, match="anomaly_fraction"):
            InjectionConfig(anomaly_fraction=frac)

    def test_candidate_count(self):
        with pytest.raises(ValueError, match="k_candidates"):
            InjectionConfig(anomaly_fraction=0.1, k_candidates=0)

    def test_strategy_name(self):
        with pytest.raises(ValueError, match="unknown strategy"):
            InjectionConfig(anomaly_fraction=0.1, strategy="swap")

    @pytest.mark.parametrize("choices", [(), (0, 1)])
    def test_n_choices(self, choices):
        with pytest.raises(ValueError, match="n_choices"):
            InjectionConfig(anomaly_fraction=0.1, n_choices=choices)


class TestInjectAnomalies:
    def dataset(self, seed=0, m=20):
        return small_synth(seed=seed, m=m)

    def test_count_and_labels(self):
        ds = self.dataset()
        out = inject_anomalies(ds, InjectionConfig(anomaly_fraction=0.25, seed=1))
        assert len(out.manifest) == 5  # floor(0.25 * 20)
        assert int(out.dataset.labels.sum()) == 5
        flagged = {e["event_id"] for e in out.manifest}
        for ev, lab in zip(out.dataset.events, out.dataset.labels):
            assert (ev.event_id in flagged) == bool(lab)

    def test_manifest_sorted_by_event(self):
        out = inject_anomalies(self.dataset(),
                               InjectionConfig(anomaly_fraction=0.3, seed=2))
        ids = [e["event_id"] for e in out.manifest]
        assert ids == sorted(ids)

    def test_deterministic(self):
        cfg = InjectionConfig(anomaly_fraction=0.25, seed=3)
        a = inject_anomalies(self.dataset(), cfg)
        b = inject_anomalies(self.dataset(), cfg)
        assert a.manifest == b.manifest
        assert a.dataset.events == b.dataset.events
        assert np.array_equal(a.dataset.labels, b.dataset.labels)

    def test_replacements_keep_type_and_stay_outside_event(self):
        ds = self.dataset(seed=4)
        out = inject_anomalies(ds, InjectionConfig(anomaly_fraction=0.4, seed=5))
        originals = {ev.event_id: ev for ev in ds.events}
        changed = {ev.event_id: ev for ev in out.dataset.events}
        for entry in out.manifest:
            before = originals[entry["event_id"]]
            after = changed[entry["event_id"]]
            assert after.center == before.center
            for rep in entry["replacements"]:
                pos, old, new = rep["position"], rep["old"], rep["new"]
                oi, ni = ds.ahin.index_of(old), ds.ahin.index_of(new)
                assert before.context[pos] == oi
                assert after.context[pos] == ni
                assert new != old
                assert ds.ahin.type_name_of(ni) == ds.ahin.type_name_of(oi)
                assert ni not in before.nodes

    def test_untouched_events_identical(self):
        ds = self.dataset(seed=6)
        out = inject_anomalies(ds, InjectionConfig(anomaly_fraction=0.2, seed=7))
        flagged = {e["event_id"] for e in out.manifest}
        for before, after in zip(ds.events, out.dataset.events):
            if before.event_id not in flagged:
                assert before == after

    def test_fraction_below_one_event_rejected(self):
        with pytest.raises(ValueError, match="below 1"):
            inject_anomalies(self.dataset(), InjectionConfig(anomaly_fraction=0.01))

    def test_exhaustive_pool_picks_farthest(self):
        # k larger than any pool: the replacement must be the unique farthest
        # same-type node outside the event, recomputed here from raw features
        ds = self.dataset(seed=8)
        reset_diagnostics()
        cfg = InjectionConfig(anomaly_fraction=0.3, k_candidates=10 ** 6,
                              seed=9, n_choices=(1,))
        out = inject_anomalies(ds, cfg)
        originals = {ev.event_id: ev for ev in ds.events}
        for entry in out.manifest:
            before = originals[entry["event_id"]]
            (rep,) = entry["replacements"]
            oi = ds.ahin.index_of(rep["old"])
            pool = ds.ahin.indices_of_type(ds.ahin.type_name_of(oi))
            pool = pool[~np.isin(pool, np.array(before.nodes))]
            dist = np.linalg.norm(ds.ahin.features[pool] - ds.ahin.features[oi],
                                  axis=1)
            assert rep["new"] == int(ds.ahin.node_ids[pool[np.argmax(dist)]])
        assert diagnostics["injection_pool_short"] == len(out.manifest)

    def test_uniform_strategy_valid_swaps(self):
        ds = self.dataset(seed=10)
        out = inject_anomalies(ds, InjectionConfig(anomaly_fraction=0.3, seed=11,
                                                   strategy="uniform"))
        originals = {ev.event_id: ev for ev in ds.events}
        assert len(out.manifest) == 6
        for entry in out.manifest:
            before = originals[entry["event_id"]]
            for rep in entry["replacements"]:
                ni = ds.ahin.index_of(rep["new"])
                assert ni not in before.nodes
                assert ds.ahin.type_name_of(ni) == \
                    ds.ahin.type_name_of(ds.ahin.index_of(rep["old"]))

    def test_saturated_type_skips_with_diagnostic(self):
        # both user nodes sit in every event, so no replacement pool exists
        ahin = Ahin(np.arange(4), ["center", "center", "user", "user"],
                    np.random.default_rng(0).normal(size=(4, 2)), "center")
        ds = EventDataset(ahin, [Event(0, 0, (2, 3)), Event(1, 1, (3, 2))])
        reset_diagnostics()
        out = inject_anomalies(ds, InjectionConfig(anomaly_fraction=0.5, seed=0,
                                                   n_choices=(3,)))
        assert diagnostics["injection_no_candidates"] >= 1
        (entry,) = out.manifest
        assert entry["replacements"] == []
        assert out.dataset.events == ds.events
        assert int(out.dataset.labels.sum()) == 1

    def test_manifest_round_trip(self, tmp_path):
        out = inject_anomalies(self.dataset(),
                               InjectionConfig(anomaly_fraction=0.25, seed=12))
        path = tmp_path / "manifest.json"
        write_manifest(out.manifest, path)
        assert read_manifest(path) == out.manifest

    def test_manifest_uses_external_ids(self):
        rng = np.random.default_rng(13)
        ahin = Ahin(np.arange(100, 112), ["c"] * 4 + ["user"] * 8,
                    rng.normal(size=(12, 3)), "c")
        events = [Event(i, i, tuple(4 + 2 * i + j for j in range(2)))
                  for i in range(4)]
        ds = EventDataset(ahin, events)
        out = inject_anomalies(ds, InjectionConfig(anomaly_fraction=0.5, seed=14))
        assert out.manifest
        for entry in out.manifest:
            for rep in entry["replacements"]:
                assert rep["old"] >= 104 and rep["new"] >= 104


class TestGenerator:
    CFG = SynthConfig(node_counts={"center": 30, "ctx_a": 12, "ctx_b": 9},
                      center_type="center", m=25, mean_context_size=3.0,
                      feature_width=4, communities=3, noise_scale=0.4, seed=0)

    def test_shapes_and_schema(self):
        ds = generate_synthetic(self.CFG)
        assert ds.ahin.n_nodes == 51
        assert ds.ahin.features.shape == (51, 4)
        assert ds.m == 25
        assert ds.labels is None
        assert ds.ahin.center_type == "center"
        centers = [ev.center for ev in ds.events]
        assert len(set(centers)) == 25
        for ev in ds.events:
            assert len(ev.context) >= 1

    def test_deterministic(self):
        a = generate_synthetic(self.CFG)
        b = generate_synthetic(self.CFG)
        assert np.array_equal(a.ahin.features, b.ahin.features)
        assert a.events == b.events

    def test_seed_changes_output(self):
        import dataclasses
        other = generate_synthetic(dataclasses.replace(self.CFG, seed=1))
        base = generate_synthetic(self.CFG)
        assert not np.array_equal(base.ahin.features, other.ahin.features)

    def test_context_sizes_track_mean(self):
        import dataclasses
        cfg = dataclasses.replace(self.CFG, m=30,
                                  node_counts={"center": 30, "ctx_a": 300,
                                               "ctx_b": 300})
        ds = generate_synthetic(cfg)
        sizes = [len(ev.context) for ev in ds.events]
        assert min(sizes) >= 1
        assert 2.0 <= np.mean(sizes) <= 4.0

    def test_validation_messages(self):
        with pytest.raises(ValueError, match="center node count"):
            SynthConfig(node_counts={"center": 5, "u": 5}, center_type="center",
                        m=6, mean_context_size=3.0, feature_width=2,
                        communities=2, noise_scale=0.1)
        with pytest.raises(ValueError, match="at least 2"):
            SynthConfig(node_counts={"center": 5, "u": 5}, center_type="center",
                        m=5, mean_context_size=1.0, feature_width=2,
                        communities=2, noise_scale=0.1)
        with pytest.raises(ValueError, match="context type"):
            SynthConfig(node_counts={"center": 5}, center_type="center",
                        m=5, mean_context_size=3.0, feature_width=2,
                        communities=2, noise_scale=0.1)
        with pytest.raises(ValueError, match="community_bias"):
            SynthConfig(node_counts={"center": 5, "u": 5}, center_type="center",
                        m=5, mean_context_size=3.0, feature_width=2,
                        communities=2, noise_scale=0.1, community_bias=1.2)

    def test_presets(self):
        assert set(SYNTH_PRESETS) == {"standard", "aminer-like", "imdb-like",
                                      "meituan-like"}
        std = synth_preset("standard")
        assert std.seed == 7 and std.m == 2000
        assert std.node_counts == {"center": 2000, "ctx_a": 600, "ctx_b": 40}
        assert std.communities == 4
        assert synth_preset("standard", seed=3).seed == 3
        with pytest.raises(ValueError, match="unknown preset"):
            synth_preset("nope")
