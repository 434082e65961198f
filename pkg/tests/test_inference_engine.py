import copy
import time

import numpy as np
import pytest

from errors import SpaceTooLarge
from inference_engine import (InferenceEngine, brute_force_joint, infer_joint, infer_many,
                              score_full)
from model_spec import ModelSpec


def engine_for(spec, rng, alpha=0.5, beta=-0.5, **kwargs):
    return InferenceEngine(spec, rng.standard_normal(spec.dimension), alpha, beta, **kwargs)


def spanning_spec(small_spec):
    """Pattern pasa a depender de dos super-nodos no adyacentes (RL.arm y head)."""
    data = copy.deepcopy(small_spec.to_dict())
    data["attributes"]["dependency"][3] = [3, 5]
    del data["layout"]
    return ModelSpec.from_dict(data)


SIZES = [(2, 2, 2, 2, 2, 2), (3, 2, 3, 2, 3, 2), (4, 3, 2, 4, 3, 1), (1, 4, 4, 4, 4, 2)]


class TestConditionalSteps:

    @pytest.mark.parametrize("sizes", SIZES)
    def test_pose_matches_exhaustive(self, small_spec, rng, make_instance, sizes):
        inst = make_instance(small_spec, rng, sizes)
        engine = engine_for(small_spec, rng)
        c = tuple(int(rng.integers(t)) for t in small_spec.attributes.cardinalities)
        p, score = engine.infer_pose_given_attrs(inst, c)
        p_ref, score_ref = engine.conditional_brute_force_pose(inst, c)
        assert p == p_ref
        assert score == pytest.approx(score_ref)

    @pytest.mark.parametrize("sizes", SIZES)
    def test_pose_without_attributes(self, small_spec, rng, make_instance, sizes):
        inst = make_instance(small_spec, rng, sizes)
        engine = engine_for(small_spec, rng)
        p, score = engine.infer_pose_given_attrs(inst, None)
        p_ref, score_ref = engine.conditional_brute_force_pose(inst, None)
        assert p == p_ref
        assert score == pytest.approx(score_ref)

    @pytest.mark.parametrize("sizes", SIZES)
    def test_attributes_match_exhaustive(self, small_spec, rng, make_instance, sizes):
        inst = make_instance(small_spec, rng, sizes)
        engine = engine_for(small_spec, rng)
        p = tuple(int(rng.integers(k)) for k in sizes)
        c, score = engine.infer_attrs_given_pose(inst, p)
        c_ref, score_ref = engine.conditional_brute_force_attrs(inst, p)
        assert c == c_ref
        assert score == pytest.approx(score_ref)

    def test_term_across_distant_nodes(self, small_spec, rng, make_instance):
        spec = spanning_spec(small_spec)
        inst = make_instance(spec, rng, (3, 2, 2, 3, 2, 3))
        engine = engine_for(spec, rng)
        c = (1, 2, 0, 2, 1)
        p, score = engine.infer_pose_given_attrs(inst, c)
        p_ref, score_ref = engine.conditional_brute_force_pose(inst, c)
        assert p == p_ref
        assert score == pytest.approx(score_ref)

    def test_attributes_decouple_without_cooccurrence(self, spec, rng, make_instance):
        inst = make_instance(spec, rng, (2,) * 6)
        engine = engine_for(spec, rng, disabled=frozenset({"cooccurrence"}))
        p = (1, 0, 1, 0, 1, 0)
        c, _ = engine.infer_attrs_given_pose(inst, p)
        tables = engine.tables(inst)
        expected = tuple(int(np.argmax(tables.cross_unary(k, p))) for k in range(spec.attribute_count))
        assert c == expected


class TestJointInference:

    def test_zero_weights_pick_first_label(self, small_spec, rng, make_instance):
        inst = make_instance(small_spec, rng, (3, 2, 4, 2, 3, 2))
        engine = InferenceEngine(small_spec, np.zeros(small_spec.dimension), alpha=0.0)
        result = engine.infer_joint(inst)
        assert result.label.p == (0,) * 6
        assert result.label.c == (0,) * 5
        label, _ = engine.brute_force_joint(inst)
        assert label == result.label

    def test_singleton_converges_at_once(self, spec, rng, make_instance):
        inst = make_instance(spec, rng, (1,) * 6)
        result = engine_for(spec, rng).infer_joint(inst)
        assert result.label.p == (0,) * 6
        assert result.iterations == 1
        assert result.converged

    @pytest.mark.parametrize("seed", range(4))
    def test_trace_and_bound(self, small_spec, make_instance, seed):
        rng = np.random.default_rng(seed)
        inst = make_instance(small_spec, rng, (3, 3, 3, 3, 3, 3))
        w = rng.standard_normal(small_spec.dimension)
        result = infer_joint(w, inst, small_spec, alpha=0.2, beta=1.0)

        scores = [s for _, s in result.trace]
        assert all(b >= a - 1e-9 for a, b in zip(scores, scores[1:]))
        assert result.score == pytest.approx(max(scores), rel=1e-9)
        assert result.score == pytest.approx(score_full(w, inst, small_spec, result.label, 0.2, 1.0),
                                             rel=1e-9, abs=1e-9)

        _, best = brute_force_joint(w, inst, small_spec, alpha=0.2, beta=1.0)
        assert result.score <= best + 1e-9

    def test_iteration_cap(self, small_spec, rng, make_instance):
        inst = make_instance(small_spec, rng, (4,) * 6)
        result = engine_for(small_spec, rng, max_iter=1).infer_joint(inst)
        assert result.iterations == 1
        assert len(result.trace) == 1

    def test_separate_baseline(self, small_spec, rng, make_instance):
        inst = make_instance(small_spec, rng, (3,) * 6)
        engine = engine_for(small_spec, rng)
        result = engine.infer_separate(inst)
        p, _ = engine.infer_pose_given_attrs(inst, None)
        c, _ = engine.infer_attrs_given_pose(inst, p)
        assert (result.label.p, result.label.c) == (p, c)
        assert result.iterations == 1

    def test_separate_with_attribute_model(self, small_spec, rng, make_instance):
        inst = make_instance(small_spec, rng, (3,) * 6)
        pose_engine = engine_for(small_spec, rng, disabled=frozenset({"cross"}))
        attribute_engine = engine_for(small_spec, rng)
        result = pose_engine.infer_separate(inst, attribute_engine)
        p, _ = pose_engine.infer_pose_given_attrs(inst, None)
        c, _ = attribute_engine.infer_attrs_given_pose(inst, p)
        assert (result.label.p, result.label.c) == (p, c)
        batch = infer_many(pose_engine, [inst], separate=True, attribute_engine=attribute_engine)
        assert batch[0].label == result.label

    def test_record(self, small_spec, rng, make_instance):
        inst = make_instance(small_spec, rng, (2,) * 6)
        record = engine_for(small_spec, rng).infer_joint(inst).to_record(inst.id)
        assert record["id"] == inst.id
        assert len(record["pose"]) == 6 and len(record["attributes"]) == 5
        assert record["trace"][0][0] == 1

    def test_many_keeps_order(self, small_spec, rng, make_instance):
        instances = [make_instance(small_spec, rng, (2,) * 6, inst_id=f"inst-{i:05d}") for i in range(3)]
        engine = engine_for(small_spec, rng)
        serial = infer_many(engine, instances)
        parallel = infer_many(engine, instances, workers=2)
        assert [r.label for r in serial] == [engine.infer_joint(i).label for i in instances]
        assert [r.label for r in parallel] == [r.label for r in serial]


class TestValidation:

    def test_space_too_large(self, small_spec, rng, make_instance):
        inst = make_instance(small_spec, rng, (40,) * 6)
        with pytest.raises(SpaceTooLarge):
            engine_for(small_spec, rng).brute_force_joint(inst)

    def test_bad_weights(self, spec):
        with pytest.raises(ValueError):
            InferenceEngine(spec, np.zeros(spec.dimension - 1))
        with pytest.raises(ValueError):
            InferenceEngine(spec, np.full(spec.dimension, np.inf))

    def test_bad_iteration_cap(self, spec):
        with pytest.raises(ValueError):
            InferenceEngine(spec, np.zeros(spec.dimension), max_iter=0)


@pytest.mark.slow
class TestAgainstEnumeration:

    @staticmethod
    def cases(small_spec, make_instance, count=100):
        rng = np.random.default_rng(2024)
        for q in range(count):
            sizes = tuple(int(k) for k in rng.integers(2, 5, size=small_spec.part_count))
            inst = make_instance(small_spec, rng, sizes, inst_id=f"inst-{q:05d}")
            engine = InferenceEngine(small_spec, rng.standard_normal(small_spec.dimension),
                                     float(rng.uniform(0, 1)), float(rng.uniform(-1, 1)))
            yield rng, inst, engine

    def test_conditional_steps_are_exact(self, small_spec, make_instance):
        for rng, inst, engine in self.cases(small_spec, make_instance):
            c = tuple(int(rng.integers(t)) for t in small_spec.attributes.cardinalities)
            p = tuple(int(rng.integers(k)) for k in inst.candidate_counts)
            _, score = engine.infer_pose_given_attrs(inst, c)
            _, score_ref = engine.conditional_brute_force_pose(inst, c)
            assert score == pytest.approx(score_ref, rel=1e-9, abs=1e-9)
            _, score = engine.infer_attrs_given_pose(inst, p)
            _, score_ref = engine.conditional_brute_force_attrs(inst, p)
            assert score == pytest.approx(score_ref, rel=1e-9, abs=1e-9)

    def test_joint_contracts(self, small_spec, make_instance):
        for _, inst, engine in self.cases(small_spec, make_instance):
            result = engine.infer_joint(inst)
            scores = [s for _, s in result.trace]
            assert all(b >= a - 1e-9 for a, b in zip(scores, scores[1:]))
            assert result.iterations <= 10
            assert result.score == pytest.approx(engine.score_full(inst, result.label), rel=1e-9, abs=1e-9)
            _, best = engine.brute_force_joint(inst)
            assert result.score <= best + 1e-9


@pytest.mark.slow
def test_pose_pass_time_grows_at_most_fivefold_when_k_doubles(small_spec, make_instance):
    rng = np.random.default_rng(31)
    engine = engine_for(small_spec, rng)
    c = (0,) * small_spec.attribute_count

    def mean_time(k):
        elapsed = []
        for q in range(200):
            inst = make_instance(small_spec, rng, (k,) * small_spec.part_count, inst_id=f"inst-{q:05d}")
            start = time.perf_counter()
            engine.infer_pose_given_attrs(inst, c)
            elapsed.append(time.perf_counter() - start)
        return float(np.mean(elapsed))

    mean_time(4)  # calentamiento
    assert mean_time(20) / mean_time(10) <= 5.0
