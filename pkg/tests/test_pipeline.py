import json

import numpy as np
import pytest

from sparsebip.pipeline import (VARIANTS, ModelFormatError, PipelineConfig, Reduction,
                                TrainedModel, VariantConfig, measurement_noise, train)
from sparsebip.sparsity import GroupMap


@pytest.fixture(scope="module")
def models(small_dataset):
    return {v.name: train(small_dataset.demos, v) for v in VARIANTS}


class TestVariantConfig:
    @pytest.mark.parametrize("alias,name", [("all", "All"), ("mifs", "MIFS"), ("group", "Group"),
                                            ("group-ols", "Group+OLS"), ("Group+OLS", "Group+OLS")])
    def test_aliases(self, alias, name):
        assert VariantConfig.named(alias).name == name

    def test_flags_are_fixed_per_name(self):
        with pytest.raises(ValueError, match="requires flags"):
            VariantConfig("All", True, False, False)
        with pytest.raises(ValueError, match="unknown variant"):
            VariantConfig.named("everything")


class TestPipelineConfig:
    def test_unknown_keys(self):
        with pytest.raises(ValueError, match="unknown pipeline keys"):
            PipelineConfig.from_dict({"basis": 3})

    def test_digest_is_stable(self):
        assert PipelineConfig().digest() == PipelineConfig.from_dict(PipelineConfig().to_dict()).digest()
        assert PipelineConfig().digest() != PipelineConfig(ols_tolerance=0.1).digest()


class TestReduction:
    def test_array_path_matches_interaction_path(self, small_dataset):
        demo = small_dataset.demos[0]
        r = Reduction(demo.layout, small_dataset.groups, None)
        np.testing.assert_array_equal(r.apply_array(demo.samples), r.apply(demo).samples)

    def test_kept_subset(self, small_dataset):
        demo = small_dataset.demos[0]
        keep = ("joint_l0", "torso_s00")
        r = Reduction(demo.layout, None, keep)
        assert r.layout.names == keep
        np.testing.assert_array_equal(r.apply_array(demo.samples),
                                      demo.samples[:, demo.layout.indices(keep)])

    def test_rejects_foreign_layout(self, small_dataset):
        from conftest import make_interaction
        r = Reduction(small_dataset.layout, None)
        with pytest.raises(ValueError, match="raw layout"):
            r.apply(make_interaction(np.zeros((4, 3))))


def test_measurement_noise_takes_the_largest_term():
    cfg = PipelineConfig(r_relative=0.1, r_floor=1e-6)
    resid = [np.array([0.5, 1e-5, 0.0])]
    observed = [np.array([[0.0, 0.0, 0.0], [1.0, 2.0, 0.0]])]
    R = measurement_noise(resid, observed, cfg)
    np.testing.assert_allclose(R, [0.25, 0.04, 1e-6], rtol=1e-12)


class TestTrain:
    def test_dimension_ordering(self, models):
        d = {k: m.dimension for k, m in models.items()}
        assert d["All"] > d["MIFS"] > d["Group"] > d["Group+OLS"]

    def test_mifs_keeps_the_planted_sensors(self, models, small_dataset):
        sel = models["MIFS"].selection
        assert set(sel.selected) == set(small_dataset.informative)
        names = models["MIFS"].layout.names
        dropped = [n for n in small_dataset.layout.names if n.startswith("torso") and n not in sel.selected]
        assert not set(dropped) & set(names)

    def test_grouping_uses_one_channel_per_group(self, models, small_dataset):
        L = models["Group"].layout
        assert sum(ch.modality == "force" for ch in L.channels) == len(small_dataset.groups.groups)

    def test_ols_only_touches_force_channels(self, models):
        g, o = models["Group"].basis, models["Group+OLS"].basis
        for d, ch in enumerate(models["Group"].layout.channels):
            if ch.modality != "force":
                assert np.array_equal(g.centers[d], o.centers[d])

    def test_noise_covers_observed_channels(self, models):
        for m in models.values():
            assert m.measurement_noise.shape == (len(m.layout.observed),)
            assert np.all(m.measurement_noise >= m.config.r_floor)

    def test_needs_two_demos(self, small_dataset):
        with pytest.raises(ValueError):
            train(small_dataset.demos[:1], VARIANTS[0])

    def test_explicit_group_map(self, small_dataset):
        g = GroupMap({"left": [n for n in small_dataset.layout.names if n.startswith("larm")]})
        m = train(small_dataset.demos[:6], VariantConfig.named("group"), groups=g)
        assert "left" in m.layout.names
        assert not any(n.startswith("larm_s") for n in m.layout.names)


class TestModelSerialisation:
    @pytest.mark.parametrize("name", ["All", "MIFS", "Group+OLS"])
    def test_json_round_trip(self, models, name):
        m = models[name]
        back = TrainedModel.from_dict(json.loads(json.dumps(m.to_dict())))
        assert back.layout == m.layout
        assert back.basis == m.basis
        np.testing.assert_array_equal(back.weights, m.weights)
        np.testing.assert_array_equal(back.measurement_noise, m.measurement_noise)
        assert back.selection == m.selection

    def test_format_tag(self, models):
        d = models["All"].to_dict()
        d["format"] = "sparsebip-model/0"
        with pytest.raises(ModelFormatError):
            TrainedModel.from_dict(d)

    def test_inconsistent_weights(self, models):
        d = models["All"].to_dict()
        d["weights"] = d["weights"][:-1]
        with pytest.raises(ModelFormatError, match="weights"):
            TrainedModel.from_dict(d)
