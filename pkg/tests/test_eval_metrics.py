import json

import pytest

from errors import DimMismatch, EmptyInput, IndexOutOfRange, ParseError
from eval_metrics import (EvalReport, InstanceEval, aggregate, endpoint_error, error_reduction,
                          evaluate, evaluate_instance, gap, load_results, part_correct, pcp,
                          save_report, save_results)
from instance_io import JointLabel, OrientedBox

TRUTH = OrientedBox(100.0, 100.0, 0.0, 40.0)


def result(inst_id, parts, attributes=(True, True, True, True, True)):
    return InstanceEval(inst_id, tuple(parts), tuple(attributes))


class TestPcp:

    def test_identity(self):
        assert endpoint_error(TRUTH, TRUTH) == 0.0
        assert part_correct(TRUTH, TRUTH)

    def test_displacement_beyond_threshold(self):
        moved = OrientedBox(124.0, 100.0, 0.0, 40.0)
        assert endpoint_error(moved, TRUTH) == pytest.approx(24.0)
        assert not part_correct(moved, TRUTH)

    def test_threshold_is_inclusive(self):
        moved = OrientedBox(120.0, 100.0, 0.0, 40.0)
        assert part_correct(moved, TRUTH)

    def test_flipped_segment_is_correct(self):
        flipped = OrientedBox(100.0, 100.0, 180.0, 40.0)
        assert endpoint_error(flipped, TRUTH) == pytest.approx(0.0, abs=1e-9)
        assert part_correct(flipped, TRUTH)

    def test_length_mismatch(self):
        with pytest.raises(DimMismatch):
            pcp([TRUTH], [TRUTH, TRUTH])


class TestGap:

    def test_any_group_counts(self):
        groups = [(0, 2, None), (1, 2, None)]
        assert gap((1, 3, 0), groups) == [True, False, None]

    def test_out_of_range(self):
        with pytest.raises(IndexOutOfRange):
            gap((5,), [(0,)], cardinalities=(4,))


class TestReport:

    def test_grouped_columns(self, spec):
        report = aggregate([result("a", (True, True, False, True, False, True))], spec)
        columns = report.pcp_columns()
        assert list(columns) == ["torso", "U.arms", "L.arms", "head", "Total"]
        assert columns["torso"] == 1.0
        assert columns["U.arms"] == 0.5
        assert columns["L.arms"] == 0.5
        assert columns["head"] == 1.0
        assert columns["Total"] == pytest.approx(4 / 6)

    def test_gap_skips_missing(self, spec):
        report = aggregate([result("a", (True,) * 6, (True, None, False, True, None)),
                            result("b", (True,) * 6, (False, None, True, True, True))], spec)
        assert report.attr_gap == [0.5, None, 0.5, 1.0, 1.0]
        assert report.attr_skipped == [0, 2, 0, 0, 1]
        assert report.total_gap == pytest.approx(5 / 7)
        assert report.gap_columns()["Color"] is None

    def test_merge_is_associative(self, spec):
        parts = [(True,) * 6, (False,) * 6, (True, False) * 3]
        reports = [aggregate([result(f"r{q}", p)], spec) for q, p in enumerate(parts)]
        left = reports[0].merge(reports[1]).merge(reports[2])
        right = reports[0].merge(reports[1].merge(reports[2]))
        assert left.part_correct == right.part_correct == [2, 1, 2, 1, 2, 1]
        assert left.instances == right.instances == 3
        assert left.to_dict()["counts"] == right.to_dict()["counts"]

    def test_merge_rejects_other_model(self, spec, small_spec):
        other = EvalReport.empty(small_spec)
        other.attribute_names = ("x",)
        with pytest.raises(DimMismatch):
            EvalReport.empty(spec).merge(other)

    def test_empty_input(self, spec):
        with pytest.raises(EmptyInput):
            aggregate([], spec)

    def test_error_reduction(self, spec):
        half = aggregate([result("a", (True,) * 6), result("b", (False,) * 6)], spec)
        most = aggregate([result("a", (True,) * 6), result("b", (True, True, False) * 2)], spec)
        reduction = error_reduction(most, half)
        assert reduction["pcp"]["torso"] == pytest.approx(1.0)
        assert reduction["pcp"]["Total"] == pytest.approx(1.0 - (1 / 6) / 0.5)
        assert reduction["gap"]["Total"] is None

    def test_saved_report(self, spec, tmp_path):
        path = tmp_path / "report.json"
        save_report(aggregate([result("a", (True,) * 6)], spec), path)
        data = json.loads(path.read_text(encoding="utf-8"))
        assert data["pcp"]["total"] == 1.0
        assert "note" in data


class TestEvaluate:

    def test_truth_candidates_are_perfect(self, spec, rng, make_instance):
        inst = make_instance(spec, rng, (3,) * 6)
        label = JointLabel((0,) * 6, inst.ground_truth.attribute_groups[0])
        outcome = evaluate_instance(inst, label, spec)
        assert all(outcome.parts)
        assert all(outcome.attributes)

    def test_missing_predictions_are_skipped(self, spec, rng, make_instance):
        instances = [make_instance(spec, rng, (2,) * 6, inst_id=f"inst-{i:05d}") for i in range(2)]
        labels = {"inst-00001": JointLabel((0,) * 6, instances[1].ground_truth.attribute_groups[0])}
        report = evaluate(instances, labels, spec)
        assert report.instances == 1
        assert report.total_pcp == 1.0

    def test_results_round_trip(self, tmp_path):
        path = tmp_path / "results.json"
        save_results([{"id": "b", "pose": [1, 0], "attributes": [2]},
                      {"id": "a", "pose": [0, 0], "attributes": [1]}], path)
        labels = load_results(path)
        assert list(labels) == ["a", "b"]
        assert labels["b"] == JointLabel((1, 0), (2,))

    def test_bad_results_file(self, tmp_path):
        path = tmp_path / "results.json"
        path.write_text("{}", encoding="utf-8")
        with pytest.raises(ParseError):
            load_results(path)
