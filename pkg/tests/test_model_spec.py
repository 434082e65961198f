import copy

import pytest

from errors import ModelValidationError, ParseError
from model_spec import (FeatureLayout, ModelSpec, build_default_model, load_model, save_model,
                        validate_model)


def issue_codes(spec):
    return {issue.code for issue in validate_model(spec)}


def modified(spec, change):
    data = copy.deepcopy(spec.to_dict())
    change(data)
    return ModelSpec.from_dict(data)


class TestDefaultModel:

    def test_shape(self, spec):
        assert spec.part_count == 6
        assert spec.attribute_count == 5
        assert spec.attributes.cardinalities == (4, 8, 4, 5, 3)
        assert validate_model(spec) == []

    def test_super_nodes_group_symmetric_pairs(self, spec):
        tree = spec.super_tree
        assert tree.super_nodes == ((0,), (1, 2), (3, 4), (5,))
        assert set(tree.super_edges) == {(0, 1), (1, 2), (0, 3)}
        assert tree.root == 0
        assert tree.post_order()[-1] == 0

    def test_dimension(self, spec):
        unary = 6 * 16
        deformation = 5 * 30
        consistency = 2 * 2
        cooccurrence = 4 * 8 + 8 * 4 + 4 * 5 + 5 * 3
        cross = 4 * 32 + 8 * 16 + 4 * 32 + 5 * 16 + 3 * 64
        assert spec.dimension == unary + deformation + consistency + cooccurrence + cross

    def test_blocks_partition_the_vector(self, spec):
        cursor = 0
        for block in spec.layout.blocks:
            assert block.offset == cursor
            cursor = block.stop
        assert cursor == spec.dimension

    def test_block_names(self, spec):
        names = [b.name for b in spec.layout.blocks]
        assert names[0] == "unary/torso"
        assert "deformation/torso-head" in names
        assert "consistency/RU.arm-LU.arm" in names
        assert "cooccurrence/Collar-Color" in names
        assert names[-1] == "cross/Sleeve"

    def test_cross_block_length(self, spec):
        block = spec.layout.block("cross", (4,))
        assert block.length == 3 * 4 * 16

    def test_owner(self, spec):
        block = spec.layout.block("deformation", (0, 5))
        assert spec.layout.owner(block.offset + 3) == block
        with pytest.raises(IndexError):
            spec.layout.owner(spec.dimension)

    def test_non_positive_dimension_rejected(self):
        with pytest.raises(ValueError):
            build_default_model(d_u=0)

    def test_custom_attribute_dims(self):
        spec = build_default_model(d_attr_feats={"color": 8})
        assert spec.attributes.feature_dims == (16, 8, 16, 16, 8)


class TestValidation:

    def test_cycle(self, spec):
        bad = modified(spec, lambda d: d["parts"]["tree_edges"].append([3, 4]))
        assert "CyclicTree" in issue_codes(bad)

    def test_disconnected(self, spec):
        bad = modified(spec, lambda d: d["parts"]["tree_edges"].pop())
        assert "DisconnectedTree" in issue_codes(bad)

    def test_dangling_part(self, spec):
        bad = modified(spec, lambda d: d["attributes"]["dependency"].__setitem__(1, [9]))
        assert "DanglingPartIndex" in issue_codes(bad)

    def test_overlapping_pairs(self, spec):
        bad = modified(spec, lambda d: d["parts"]["symmetric_pairs"].append([2, 3]))
        assert "OverlappingSymmetricPairs" in issue_codes(bad)

    def test_invalid_cardinality(self, spec):
        bad = modified(spec, lambda d: d["attributes"]["cardinalities"].__setitem__(0, 0))
        assert "InvalidCardinality" in issue_codes(bad)

    def test_attribute_tree(self, spec):
        bad = modified(spec, lambda d: d["attributes"]["tree_edges"].append([0, 4]))
        assert "InvalidAttributeTree" in issue_codes(bad)

    def test_overlapping_blocks(self, spec):
        def shift(d):
            d["layout"][1]["offset"] -= 1
        assert "OverlappingBlocks" in issue_codes(modified(spec, shift))

    def test_block_size(self, spec):
        def grow(d):
            d["layout"][-1]["length"] += 1
        assert "BlockSizeMismatch" in issue_codes(modified(spec, grow))

    def test_layout_is_deterministic(self, spec):
        rebuilt = FeatureLayout.build(spec.parts, spec.attributes, spec.unary_dim, spec.consistency_dim)
        assert rebuilt == spec.layout


class TestPersistence:

    def test_round_trip(self, spec, tmp_path):
        path = tmp_path / "model.yaml"
        save_model(spec, path)
        loaded = load_model(path)
        assert loaded.model_hash == spec.model_hash
        assert loaded.layout_checksum == spec.layout_checksum
        assert loaded.dimension == spec.dimension

    def test_hash_changes_with_cardinality(self, spec):
        other = build_default_model(cardinalities=(4, 8, 4, 5, 2))
        assert other.model_hash != spec.model_hash

    def test_invalid_model_raises(self, spec, tmp_path):
        bad = modified(spec, lambda d: d["parts"]["tree_edges"].append([3, 4]))
        path = tmp_path / "bad.yaml"
        save_model(bad, path)
        with pytest.raises(ModelValidationError) as err:
            load_model(path)
        assert any(issue.code == "CyclicTree" for issue in err.value.issues)

    def test_incomplete_document(self, tmp_path):
        path = tmp_path / "partial.yaml"
        path.write_text("parts: {names: [torso]}\n", encoding="utf-8")
        with pytest.raises(ParseError):
            load_model(path)
