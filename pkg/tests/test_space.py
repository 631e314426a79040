from __future__ import annotations

import numpy as np
import pytest

from rxnopt.space import (
    SpaceError,
    build_space,
    decode,
    encode,
    enumerate_conditions,
    restrict_space,
)


class TestBuildSpace:
    def test_table3_shape_cardinality(self, table3_manifest):
        space = build_space(table3_manifest)
        assert space.cardinality == 5 * 14 * 14 * 11 * 3 * 3 == 97020

    def test_single_candidate_space(self):
        space = build_space(
            {
                "variables": [
                    {
                        "name": "x",
                        "rank": 1,
                        "kind": "categorical",
                        "candidates": [{"id": "only", "properties": {}, "subset": 0}],
                    }
                ]
            }
        )
        assert space.cardinality == 1

    def test_rank_permutation_enforced(self):
        manifest = {
            "variables": [
                {"name": "a", "rank": 1, "kind": "numeric", "levels": [1, 2]},
                {"name": "b", "rank": 1, "kind": "numeric", "levels": [1, 2]},
                {"name": "c", "rank": 2, "kind": "numeric", "levels": [1, 2]},
            ]
        }
        with pytest.raises(SpaceError, match="permutation"):
            build_space(manifest)

    def test_duplicate_candidate_ids_rejected(self):
        manifest = {
            "variables": [
                {
                    "name": "x",
                    "rank": 1,
                    "kind": "categorical",
                    "candidates": [
                        {"id": "a", "properties": {}, "subset": 0},
                        {"id": "a", "properties": {}, "subset": 0},
                    ],
                }
            ]
        }
        with pytest.raises(SpaceError, match="duplicate"):
            build_space(manifest)

    def test_missing_subset_rejected(self):
        manifest = {
            "variables": [
                {
                    "name": "x",
                    "rank": 1,
                    "kind": "categorical",
                    "candidates": [{"id": "a", "properties": {}}],
                }
            ]
        }
        with pytest.raises(SpaceError, match="subset"):
            build_space(manifest)

    def test_variables_sorted_by_rank(self, small_space):
        assert small_space.variable_names == ["ligand", "temperature"]

    def test_mixed_property_keys_rejected(self):
        manifest = {
            "variables": [
                {
                    "name": "x",
                    "rank": 1,
                    "kind": "categorical",
                    "candidates": [
                        {"id": "a", "properties": {"p": 1.0}, "subset": 0},
                        {"id": "b", "properties": {"z": 1.0}, "subset": 1},
                    ],
                }
            ]
        }
        with pytest.raises(SpaceError, match="property keys"):
            build_space(manifest)


class TestEnumerate:
    def test_full_product_in_lexicographic_order(self, small_space):
        conds = list(enumerate_conditions(small_space))
        assert len(conds) == 9
        expected = [
            (lig, temp)
            for lig in ["L1", "L2", "L3"]
            for temp in [80.0, 100.0, 120.0]
        ]
        assert [c.key() for c in conds] == expected

    def test_restricted_enumeration(self, small_space):
        sub = restrict_space(small_space, {"ligand": ["L2"]})
        conds = list(enumerate_conditions(sub))
        assert [c.key() for c in conds] == [("L2", 80.0), ("L2", 100.0), ("L2", 120.0)]

    def test_cap_refusal(self, table3_manifest):
        space = build_space(table3_manifest)
        with pytest.raises(SpaceError, match="cap"):
            list(enumerate_conditions(space, cap=1000))

    def test_suzuki_sized_enumeration(self):
        # 4 variables shaped like a 5760-combination coupling dataset
        manifest = {
            "variables": [
                {
                    "name": n,
                    "rank": i + 1,
                    "kind": "categorical",
                    "candidates": [
                        {"id": f"{n}{j}", "properties": {}, "subset": 0} for j in range(k)
                    ],
                }
                for i, (n, k) in enumerate([("reactant", 15), ("ligand", 12), ("base", 8), ("solvent", 4)])
            ]
        }
        space = build_space(manifest)
        assert space.cardinality == 5760
        assert sum(1 for _ in enumerate_conditions(space)) == 5760


class TestEncode:
    def test_one_hot_block(self, small_space):
        cond = small_space.condition({"ligand": "L2", "temperature": 80})
        vec = encode(small_space, cond)
        assert vec.tolist()[:3] == [0.0, 1.0, 0.0]

    def test_numeric_min_max_midpoint(self, small_space):
        cond = small_space.condition({"ligand": "L1", "temperature": 100})
        assert encode(small_space, cond)[3] == pytest.approx(0.5)

    def test_dimension_is_sum_of_blocks(self, small_space):
        # 3 one-hot + 1 numeric scalar
        cond = small_space.condition({"ligand": "L1", "temperature": 80})
        assert encode(small_space, cond).shape == (4,)
        assert small_space.encode_dim() == 4

    def test_encode_injective_exhaustively(self, small_space):
        seen = set()
        for cond in enumerate_conditions(small_space):
            key = tuple(encode(small_space, cond).tolist())
            assert key not in seen
            seen.add(key)

    def test_encode_injective_on_shipped_manifest(self):
        # 1215-combination mixed categorical/numeric space, exhaustive
        from pathlib import Path

        manifest = Path(__file__).parent.parent / "sample_data" / "space_manifest.json"
        space = build_space(manifest)
        seen = set()
        for cond in enumerate_conditions(space):
            key = tuple(encode(space, cond).tolist())
            assert key not in seen
            seen.add(key)
        assert len(seen) == 1215

    def test_round_trip_decode(self, small_space):
        for cond in enumerate_conditions(small_space):
            assert decode(small_space, encode(small_space, cond)) == cond

    def test_condition_not_in_space_rejected(self, small_space):
        sub = restrict_space(small_space, {"ligand": ["L1"]})
        cond = small_space.condition({"ligand": "L2", "temperature": 80})
        with pytest.raises(SpaceError):
            encode(sub, cond)

    def test_restriction_does_not_change_encoding(self, small_space):
        cond = small_space.condition({"ligand": "L1", "temperature": 120})
        sub = restrict_space(small_space, {"temperature": [100, 120]})
        sub_cond = sub.condition({"ligand": "L1", "temperature": 120})
        assert np.array_equal(encode(small_space, cond), encode(sub, sub_cond))


class TestRestrict:
    def test_restriction_is_subset_of_parent(self, small_space):
        sub = restrict_space(small_space, {"ligand": ["L1", "L3"]})
        assert sub.cardinality == 6
        with pytest.raises(SpaceError):
            restrict_space(sub, {"ligand": ["L2"]})  # outside the parent's allowed set

    def test_empty_restriction_rejected(self, small_space):
        with pytest.raises(SpaceError):
            restrict_space(small_space, {"ligand": []})

    def test_condition_validation(self, small_space):
        with pytest.raises(SpaceError, match="missing"):
            small_space.condition({"ligand": "L1"})
        with pytest.raises(SpaceError, match="not allowed"):
            small_space.condition({"ligand": "L9", "temperature": 80})
        with pytest.raises(SpaceError, match="unknown"):
            small_space.condition({"ligand": "L1", "temperature": 80, "bogus": 1})
