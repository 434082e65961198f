import copy
import json

import numpy as np
import pytest

import config
from errors import DimMismatch, IndexOutOfRange, MissingAttrFeature, ParseError
from instance_io import (Candidate, JointLabel, OrientedBox, derive_d_min, instance_to_dict,
                         load_dataset, parse_dataset, save_dataset, validate_instance)


def document(spec, instances):
    return {
        "format": config.DATASET_FORMAT,
        "version": config.DATASET_VERSION,
        "header": {"m": spec.part_count, "n": spec.attribute_count},
        "instances": [instance_to_dict(inst, spec) for inst in instances],
    }


class TestGeometry:

    def test_endpoints(self):
        a, b = OrientedBox(10.0, 20.0, 0.0, 8.0).endpoints()
        np.testing.assert_allclose(a, [6.0, 20.0])
        np.testing.assert_allclose(b, [14.0, 20.0])

    def test_hull_of_vertical_box(self):
        x0, y0, x1, y1 = OrientedBox(0.0, 0.0, 90.0, 30.0).hull(1.0 / 3.0)
        assert x0 == pytest.approx(-5.0)
        assert x1 == pytest.approx(5.0)
        assert y0 == pytest.approx(-15.0)
        assert y1 == pytest.approx(15.0)

    def test_derive_d_min(self, spec, rng, make_instance):
        cand = make_instance(spec, rng, (1,) * 6).ensembles[0][0]
        cand = Candidate(x=0.0, y=0.0, theta=0.0, s=30.0, unary=cand.unary,
                         hist_rgb=cand.hist_rgb, hist_lab=cand.hist_lab)
        assert derive_d_min((0.0, 5.0), cand, 1.0 / 3.0) == pytest.approx(0.0)
        assert derive_d_min((0.0, 0.0), cand, 1.0 / 3.0) == pytest.approx(5.0)
        assert derive_d_min((20.0, 5.0), cand, 1.0 / 3.0) == pytest.approx(5.0)


class TestLabels:

    def test_check_out_of_range(self, spec, rng, make_instance):
        inst = make_instance(spec, rng, (2,) * 6)
        with pytest.raises(IndexOutOfRange):
            JointLabel((0, 0, 0, 0, 0, 2), (0, 0, 0, 0, 0)).check(inst, spec)
        with pytest.raises(IndexOutOfRange):
            JointLabel((0,) * 6, (4, 0, 0, 0, 0)).check(inst, spec)

    def test_missing_only_when_allowed(self, spec, rng, make_instance):
        inst = make_instance(spec, rng, (2,) * 6)
        label = JointLabel((0,) * 6, (None, 0, 0, 0, 0))
        label.check(inst, spec, allow_missing=True)
        with pytest.raises(IndexOutOfRange):
            label.check(inst, spec)

    def test_matches_ignores_missing(self):
        truth = JointLabel((0, 1), (None, 2))
        assert JointLabel((0, 1), (3, 2)).matches(truth)
        assert not JointLabel((0, 1), (3, 1)).matches(truth)
        assert not JointLabel((1, 1), (3, 2)).matches(truth)


class TestValidation:

    def test_valid_instance(self, spec, rng, make_instance):
        inst = make_instance(spec, rng, (3, 1, 2, 4, 1, 2))
        assert validate_instance(inst, spec) is inst

    def test_empty_ensemble(self, spec, rng, make_instance):
        data = document(spec, [make_instance(spec, rng, (2,) * 6)])
        data["instances"][0]["ensembles"][3] = []
        with pytest.raises(DimMismatch):
            parse_dataset(data, spec)

    def test_too_many_candidates(self, spec, rng, make_instance):
        inst = make_instance(spec, rng, (config.MAX_CANDIDATES + 1, 1, 1, 1, 1, 1))
        with pytest.raises(DimMismatch):
            validate_instance(inst, spec)

    def test_unnormalized_histogram(self, spec, rng, make_instance):
        data = document(spec, [make_instance(spec, rng, (2,) * 6)])
        cand = data["instances"][0]["ensembles"][0][1]
        cand["hist_rgb"] = [v * 2.0 for v in cand["hist_rgb"]]
        with pytest.raises(DimMismatch) as err:
            parse_dataset(data, spec)
        assert err.value.field == "hist_rgb"
        assert err.value.part == 0

    def test_missing_attribute_feature(self, spec, rng, make_instance):
        data = document(spec, [make_instance(spec, rng, (2,) * 6)])
        del data["instances"][0]["ensembles"][0][0]["attr_feats"]["Color"]
        with pytest.raises(MissingAttrFeature) as err:
            parse_dataset(data, spec)
        assert err.value.attribute == "Color"

    def test_theta_out_of_range(self, spec, rng, make_instance):
        data = document(spec, [make_instance(spec, rng, (2,) * 6)])
        data["instances"][0]["ensembles"][2][0]["box"][2] = 360.0
        with pytest.raises(DimMismatch):
            parse_dataset(data, spec)

    def test_header_mismatch(self, spec, rng, make_instance):
        data = document(spec, [make_instance(spec, rng, (2,) * 6)])
        data["header"]["unary_dim"] = spec.unary_dim + 1
        with pytest.raises(DimMismatch):
            parse_dataset(data, spec)

    def test_duplicate_ids(self, spec, rng, make_instance):
        inst = make_instance(spec, rng, (2,) * 6)
        with pytest.raises(ParseError):
            parse_dataset(document(spec, [inst, inst]), spec)

    def test_wrong_format(self, spec):
        with pytest.raises(ParseError):
            parse_dataset({"format": "otro"}, spec)


class TestPersistence:

    def test_round_trip(self, spec, rng, make_instance, tmp_path):
        instances = [make_instance(spec, rng, (2, 3, 1, 2, 2, 1), inst_id=f"inst-{i:05d}")
                     for i in (2, 0, 1)]
        path = tmp_path / "data.json"
        save_dataset(instances, spec, path)
        loaded = load_dataset(path, spec)

        assert [inst.id for inst in loaded] == ["inst-00000", "inst-00001", "inst-00002"]
        original = {inst.id: inst for inst in instances}
        for inst in loaded:
            source = original[inst.id]
            assert inst.candidate_counts == source.candidate_counts
            a, b = inst.candidate(1, 2), source.candidate(1, 2)
            assert (a.x, a.y, a.theta, a.s) == (b.x, b.y, b.theta, b.s)
            np.testing.assert_array_equal(a.unary, b.unary)
            np.testing.assert_array_equal(a.attr_feats[4], b.attr_feats[4])
            assert inst.ground_truth.attribute_groups == source.ground_truth.attribute_groups

    def test_edge_pixels_from_coordinates(self, spec, rng, make_instance):
        data = document(spec, [make_instance(spec, rng, (1,) * 6)])
        raw = data["instances"][0]["ensembles"][0][0]
        raw["box"] = [100.0, 100.0, 0.0, 30.0]
        raw["edge_pixels"] = [{"x": 100.0, "y": 100.0, "theta_e": 0.0, "strg_e": 1.0}]
        inst = parse_dataset(copy.deepcopy(data), spec)[0]
        assert inst.candidate(0, 0).edge_pixels[0].d_min == pytest.approx(5.0)

    def test_missing_attribute_written_as_null(self, spec, rng, make_instance, tmp_path):
        inst = make_instance(spec, rng, (1,) * 6, groups=[(None, 1, 0, 2, 1)])
        path = tmp_path / "data.json"
        save_dataset([inst], spec, path)
        raw = json.loads(path.read_text(encoding="utf-8"))
        assert raw["instances"][0]["ground_truth"]["attribute_groups"][0][0] is None
        assert load_dataset(path, spec)[0].ground_truth.attribute_groups[0][0] is None
