import dataclasses

import numpy as np
import pytest

from errors import WeightsFormatError
from weights_io import WeightVector, load_weights, save_weights


class TestWeightVector:

    def test_shape_checked(self, spec):
        with pytest.raises(WeightsFormatError):
            WeightVector(np.zeros(spec.dimension - 1), spec)

    def test_non_finite_rejected(self, spec):
        values = np.zeros(spec.dimension)
        values[3] = np.nan
        with pytest.raises(WeightsFormatError):
            WeightVector(values, spec)

    def test_blocks(self, spec):
        weights = WeightVector(np.arange(spec.dimension, dtype=float), spec)
        block = spec.layout.block("unary", (1,))
        np.testing.assert_array_equal(weights.block("unary", (1,)), np.arange(block.offset, block.stop))
        np.testing.assert_array_equal(weights.block_by_name("unary/RU.arm"), weights.block("unary", (1,)))
        with pytest.raises(KeyError):
            weights.block_by_name("unary/pie")
        assert set(weights.norms()) == {"unary", "deformation", "consistency", "cooccurrence", "cross"}
        assert WeightVector.zeros(spec).norms()["cross"] == 0.0


class TestPersistence:

    def test_round_trip_is_exact(self, spec, rng, tmp_path):
        weights = WeightVector(rng.standard_normal(spec.dimension), spec)
        path = tmp_path / "w.bin"
        save_weights(weights, path)
        loaded = load_weights(path, spec)
        np.testing.assert_array_equal(loaded.values, weights.values)

    def test_other_layout_rejected(self, spec, small_spec, tmp_path):
        path = tmp_path / "w.bin"
        save_weights(WeightVector.zeros(small_spec), path)
        with pytest.raises(WeightsFormatError):
            load_weights(path, spec)

    def test_same_layout_other_hash_loads(self, spec, tmp_path):
        wider = dataclasses.replace(spec, box_width_ratios=(0.5,) * 6)
        assert wider.model_hash != spec.model_hash
        path = tmp_path / "w.bin"
        save_weights(WeightVector.zeros(wider), path)
        assert load_weights(path, spec).values.shape == (spec.dimension,)

    def test_truncated(self, spec, tmp_path):
        path = tmp_path / "w.bin"
        save_weights(WeightVector.zeros(spec), path)
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(WeightsFormatError):
            load_weights(path, spec)

    def test_bad_magic(self, spec, tmp_path):
        path = tmp_path / "w.bin"
        path.write_bytes(b"XXXX" + bytes(100))
        with pytest.raises(WeightsFormatError):
            load_weights(path, spec)

    def test_missing_file(self, spec, tmp_path):
        with pytest.raises(WeightsFormatError):
            load_weights(tmp_path / "nada.bin", spec)
