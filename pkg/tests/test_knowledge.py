from __future__ import annotations

import itertools
import json

import httpx
import numpy as np
import pytest

from rxnopt.knowledge import (
    KnowledgeError,
    KnowledgeReport,
    ManifestProvider,
    PropertyClusterProvider,
    RemoteProvider,
    RemoteProviderError,
    StaticProvider,
    build_tree,
    kmeans_labels,
    report_from_space,
    validate_report,
)
from rxnopt.space import build_space


class TestStaticProvider:
    def test_replays_curated_ranking_verbatim(self, tmp_path, table3_manifest):
        space = build_space(table3_manifest)
        base = report_from_space(space)
        # expert ordering differing from manifest rank order
        ranking = ["ligand", "catalyst", "base", "solvent", "temperature", "water"]
        report_file = tmp_path / "report.json"
        report_file.write_text(
            json.dumps({"ranking": ranking, "clusterings": base.clusterings}), encoding="utf-8"
        )
        provider = StaticProvider(report_file)
        got = provider.report(table3_manifest, task="maximize yield")
        assert got.ranking == ranking

    def test_empty_clusterings_rejected(self, tmp_path, small_manifest):
        report_file = tmp_path / "report.json"
        report_file.write_text(
            json.dumps({"ranking": ["ligand", "temperature"], "clusterings": {}}),
            encoding="utf-8",
        )
        with pytest.raises(KnowledgeError, match="missing clustering"):
            StaticProvider(report_file).report(small_manifest, task="")

    def test_manifest_rank_report_matches_manifest_tree(self, tmp_path, small_manifest):
        space = build_space(small_manifest)
        base = report_from_space(space)
        report_file = tmp_path / "report.json"
        report_file.write_text(json.dumps(base.to_dict()), encoding="utf-8")
        via_file = build_tree(space, StaticProvider(report_file).report(small_manifest, ""))
        via_manifest = build_tree(space, ManifestProvider().report(small_manifest, ""))
        assert via_file.to_dict() == via_manifest.to_dict()


class TestPropertyClusterProvider:
    def test_fourteen_ligands_six_subsets(self, table3_manifest):
        provider = PropertyClusterProvider({"ligand": 6}, seed=0)
        report = provider.report(table3_manifest, "")
        subsets = set(report.clusterings["ligand"].values())
        assert subsets == set(range(6))

    def test_k1_puts_everything_in_subset_zero(self, small_manifest):
        report = PropertyClusterProvider({"ligand": 1}, seed=0).report(small_manifest, "")
        assert set(report.clusterings["ligand"].values()) == {0}

    def test_identical_property_vectors_share_subset(self):
        manifest = {
            "variables": [
                {
                    "name": "x",
                    "rank": 1,
                    "kind": "categorical",
                    "candidates": [
                        {"id": "a", "properties": {"p": 1.0}, "subset": 0},
                        {"id": "b", "properties": {"p": 1.0}, "subset": 0},
                        {"id": "c", "properties": {"p": 9.0}, "subset": 0},
                        {"id": "d", "properties": {"p": 9.2}, "subset": 0},
                    ],
                }
            ]
        }
        report = PropertyClusterProvider({"x": 2}, seed=3).report(manifest, "")
        cmap = report.clusterings["x"]
        assert cmap["a"] == cmap["b"]
        assert cmap["c"] == cmap["d"]
        assert cmap["a"] != cmap["c"]
        # brute-force oracle: of all 2-partitions, k-means cost is minimized by {a,b}|{c,d}
        pts = {"a": 1.0, "b": 1.0, "c": 9.0, "d": 9.2}

        def cost(groups):
            total = 0.0
            for g in groups:
                vals = [pts[m] for m in g]
                mu = sum(vals) / len(vals)
                total += sum((v - mu) ** 2 for v in vals)
            return total

        partitions = [
            (frozenset(g1), frozenset(set(pts) - set(g1)))
            for g1 in itertools.chain.from_iterable(
                itertools.combinations(sorted(pts), r) for r in (1, 2)
            )
        ]
        best = min(partitions, key=cost)
        got = (
            frozenset(k for k, s in cmap.items() if s == 0),
            frozenset(k for k, s in cmap.items() if s == 1),
        )
        assert set(got) == set(best)

    def test_k_exceeding_candidates_rejected(self, small_manifest):
        with pytest.raises(KnowledgeError, match="exceeds"):
            PropertyClusterProvider({"ligand": 7}, seed=0).report(small_manifest, "")

    def test_missing_properties_rejected(self):
        manifest = {
            "variables": [
                {
                    "name": "x",
                    "rank": 1,
                    "kind": "categorical",
                    "candidates": [
                        {"id": "a", "properties": {}, "subset": 0},
                        {"id": "b", "properties": {}, "subset": 0},
                    ],
                }
            ]
        }
        with pytest.raises(KnowledgeError, match="properties"):
            PropertyClusterProvider({"x": 2}, seed=0).report(manifest, "")

    def test_deterministic_for_fixed_seed(self, table3_manifest):
        a = PropertyClusterProvider({"ligand": 6, "base": 3}, seed=11).report(table3_manifest, "")
        b = PropertyClusterProvider({"ligand": 6, "base": 3}, seed=11).report(table3_manifest, "")
        assert a.to_dict() == b.to_dict()

    def test_numeric_levels_cluster_by_value(self, small_manifest):
        report = PropertyClusterProvider({"temperature": 2}, seed=0).report(small_manifest, "")
        cmap = report.clusterings["temperature"]
        # 80 vs {100, 120} or {80, 100} vs 120: contiguous ranges either way
        groups = {}
        for key, s in cmap.items():
            groups.setdefault(s, []).append(float(key))
        for vals in groups.values():
            vals.sort()
            assert vals == sorted(vals)
        assert len(groups) == 2


class FakeResponse:
    def __init__(self, payload, status=200):
        self._payload = payload
        self.status_code = status

    def raise_for_status(self):
        if self.status_code >= 400:
            raise httpx.HTTPStatusError("error", request=None, response=None)

    def json(self):
        return self._payload


class TestRemoteProvider:
    def test_pass_through_and_audit(self, small_manifest, monkeypatch):
        space = build_space(small_manifest)
        payload = report_from_space(space).to_dict()
        monkeypatch.setattr(httpx, "post", lambda *a, **k: FakeResponse(payload))
        audit: list = []
        provider = RemoteProvider("http://svc/report", audit=audit)
        got = provider.report(small_manifest, "task")
        assert got.to_dict() == KnowledgeReport.from_dict(payload).to_dict()
        assert audit and audit[0]["kind"] == "knowledge"

    def test_missing_candidate_subset_named(self, small_manifest, monkeypatch):
        space = build_space(small_manifest)
        payload = report_from_space(space).to_dict()
        del payload["clusterings"]["ligand"]["L2"]
        monkeypatch.setattr(httpx, "post", lambda *a, **k: FakeResponse(payload))
        with pytest.raises(KnowledgeError, match="L2"):
            RemoteProvider("http://svc/report").report(small_manifest, "")

    def test_retries_exhausted_carry_last_error(self, small_manifest, monkeypatch):
        calls = {"n": 0}

        def failing_post(*a, **k):
            calls["n"] += 1
            raise httpx.ConnectError("connection refused")

        monkeypatch.setattr(httpx, "post", failing_post)
        with pytest.raises(RemoteProviderError, match="connection refused"):
            RemoteProvider("http://svc/report", max_retries=3).report(small_manifest, "")
        assert calls["n"] == 3

    def test_disk_cache_skips_network(self, small_manifest, monkeypatch, tmp_path):
        space = build_space(small_manifest)
        payload = report_from_space(space).to_dict()
        calls = {"n": 0}

        def post(*a, **k):
            calls["n"] += 1
            return FakeResponse(payload)

        monkeypatch.setattr(httpx, "post", post)
        provider = RemoteProvider("http://svc/report", cache_dir=tmp_path)
        provider.report(small_manifest, "t")
        provider.report(small_manifest, "t")
        assert calls["n"] == 1


class TestBuildTree:
    def test_table3_leaf_count(self, table3_manifest):
        space = build_space(table3_manifest)
        tree = build_tree(space, report_from_space(space))
        # subsets by rank order: 2, 6, 3, 3, 3, 3
        assert len(tree.leaves()) == 2 * 6 * 3 * 3 * 3 * 3 == 972

    def test_single_variable_single_subset(self):
        manifest = {
            "variables": [
                {
                    "name": "x",
                    "rank": 1,
                    "kind": "categorical",
                    "candidates": [
                        {"id": "a", "properties": {}, "subset": 0},
                        {"id": "b", "properties": {}, "subset": 0},
                    ],
                }
            ]
        }
        space = build_space(manifest)
        tree = build_tree(space, report_from_space(space))
        root = tree.nodes[tree.root]
        assert len(root.children) == 1
        assert len(tree.leaves()) == 1

    def test_two_by_three_subsets_shape(self, small_space, small_manifest):
        tree = build_tree(small_space, report_from_space(small_space))
        root = tree.nodes[tree.root]
        assert len(root.children) == 2  # ligand has 2 subsets
        assert len(tree.leaves()) == 2 * 3  # temperature: 3 levels, each its own subset

    def test_children_partition_parent_values(self, table3_manifest):
        space = build_space(table3_manifest)
        tree = build_tree(space, report_from_space(space))
        for var in space.variables:
            cmap = tree.clusterings[var.name]
            all_values = []
            for s in sorted(set(cmap.values())):
                all_values.extend(tree.subset_values(var.name, s))
            assert sorted(all_values) == sorted(cmap)

    def test_every_node_starts_cold(self, small_space):
        tree = build_tree(small_space, report_from_space(small_space))
        assert all(n.n == 0 and n.q == 0.0 for n in tree.nodes.values())

    def test_rebuild_is_byte_identical(self, table3_manifest):
        space = build_space(table3_manifest)
        report = report_from_space(space)
        a = json.dumps(build_tree(space, report).to_dict(), sort_keys=True)
        b = json.dumps(build_tree(space, report).to_dict(), sort_keys=True)
        assert a == b

    def test_ranking_must_be_permutation(self, small_space):
        report = report_from_space(small_space)
        report.ranking = ["ligand", "ligand"]
        with pytest.raises(KnowledgeError, match="permutation"):
            validate_report(report, small_space)


class TestKmeans:
    def test_labels_contiguous_from_zero(self):
        rng = np.random.default_rng(0)
        pts = rng.normal(size=(20, 3))
        labels = kmeans_labels(pts, 4, np.random.default_rng(1))
        assert set(labels) == set(range(4))

    def test_first_appearance_relabeling(self):
        pts = np.array([[0.0], [10.0], [0.1], [10.1]])
        labels = kmeans_labels(pts, 2, np.random.default_rng(5))
        assert labels[0] == 0  # first point always lands in subset 0
