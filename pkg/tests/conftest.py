from __future__ import annotations

import pytest

from rxnopt.space import build_space


@pytest.fixture
def small_manifest() -> dict:
    """2 variables: 3-candidate categorical (2 subsets) x 3-level numeric."""
    return {
        "variables": [
            {
                "name": "ligand",
                "rank": 1,
                "kind": "categorical",
                "candidates": [
                    {"id": "L1", "properties": {"cone_angle": 120.0, "basicity": 5.1}, "subset": 0},
                    {"id": "L2", "properties": {"cone_angle": 135.0, "basicity": 4.7}, "subset": 0},
                    {"id": "L3", "properties": {"cone_angle": 170.0, "basicity": 2.0}, "subset": 1},
                ],
            },
            {
                "name": "temperature",
                "rank": 2,
                "kind": "numeric",
                "levels": [80, 100, 120],
                "unit": "C",
            },
        ]
    }


@pytest.fixture
def small_space(small_manifest):
    return build_space(small_manifest)


@pytest.fixture
def table3_manifest() -> dict:
    """Six-variable space shaped like a real screening campaign:
    5/14/14/11 categorical options (2/6/3/3 subsets) + two 3-level numerics."""

    def cands(prefix, n, k):
        out = []
        for i in range(n):
            out.append(
                {
                    "id": f"{prefix}{i+1}",
                    "properties": {"p": float(i), "q": float(i % k)},
                    "subset": i % k,
                }
            )
        return out

    return {
        "variables": [
            {"name": "catalyst", "rank": 1, "kind": "categorical", "candidates": cands("cat", 5, 2)},
            {"name": "ligand", "rank": 2, "kind": "categorical", "candidates": cands("lig", 14, 6)},
            {"name": "base", "rank": 3, "kind": "categorical", "candidates": cands("base", 14, 3)},
            {"name": "solvent", "rank": 4, "kind": "categorical", "candidates": cands("sol", 11, 3)},
            {"name": "water", "rank": 5, "kind": "numeric", "levels": [0.0, 5.0, 10.0], "unit": "%"},
            {"name": "temperature", "rank": 6, "kind": "numeric", "levels": [80, 100, 120], "unit": "C"},
        ]
    }


@pytest.fixture(scope="session")
def synth_spec_576() -> dict:
    """6x6x4x4 complete synthetic dataset with one dominant high-yield subset
    plus within-subset descriptor gradients a property-aware predictor can learn."""
    return {
        "name": "synth576",
        "variables": [
            {"name": "A", "values": 6, "subsets": [1, 5]},
            {"name": "B", "values": 6, "subsets": [3, 3]},
            {"name": "C", "values": 4, "subsets": [2, 2]},
            {"name": "D", "values": 4, "subsets": [4]},
        ],
        "block_effects": {
            "A": {"0": 40.0},
            "B": {"0": 6.0},
            "C": {"0": 4.0},
        },
        "fine_slopes": {"B": 10.0, "C": 8.0, "D": 10.0},
        "base": 25.0,
        "noise_sd": 3.0,
        "seed": 7,
    }
