from __future__ import annotations

import numpy as np
import pytest

from rxnopt.campaign import Campaign, CampaignConfig
from rxnopt.knowledge import KnowledgeReport, build_tree, report_from_space
from rxnopt.pseudo import PseudoConfig
from rxnopt.space import build_space, enumerate_conditions


def two_cluster_manifest():
    # m0/m1 and m2/m3 form the true performance clusters; properties agree
    return {
        "variables": [
            {
                "name": "m",
                "rank": 1,
                "kind": "categorical",
                "candidates": [
                    {"id": "m0", "properties": {"p": 0.0}, "subset": 0},
                    {"id": "m1", "properties": {"p": 0.2}, "subset": 1},  # mixing split
                    {"id": "m2", "properties": {"p": 5.0}, "subset": 0},
                    {"id": "m3", "properties": {"p": 5.2}, "subset": 1},
                ],
            },
            {
                "name": "t",
                "rank": 2,
                "kind": "numeric",
                "levels": [80, 120],
                "subsets": [0, 0],
            },
        ]
    }


def separating_report():
    return {
        "ranking": ["m", "t"],
        "clusterings": {
            "m": {"m0": 0, "m1": 0, "m2": 1, "m3": 1},
            "t": {"80.0": 0, "120.0": 0},
        },
        "rationale": "clusters by the p descriptor",
    }


def cluster_table(space):
    # two performance clusters tracking the p property, mild t effect
    table = {}
    for cond in enumerate_conditions(space):
        high = cond.value("m") in ("m2", "m3")
        table[cond.key()] = (78.0 if high else 22.0) + (2.0 if cond.value("t") == 120.0 else 0.0)
    return table


class TestCandidateTreeReselection:
    def _campaign(self, seed=0):
        manifest = two_cluster_manifest()
        config = CampaignConfig(
            manifest=manifest,
            provider={"type": "manifest"},  # primary tree mixes the clusters
            predictor={"type": "ridge"},
            candidate_reports=[separating_report()],
            batch_size=4,
            pseudo=PseudoConfig(scope="full"),
            max_rounds=5,
            patience=None,
            seed=seed,
            objective_percent=False,
        )
        return Campaign.init(config)

    def test_separating_candidate_adopted_after_first_ingest(self):
        camp = self._campaign()
        table = cluster_table(camp.space)
        assert camp.tree.clusterings["m"]["m0"] != camp.tree.clusterings["m"]["m1"]

        batch = camp.initial_batch()
        camp.ingest([(c, table[c.key()]) for c in batch])

        # ridge predictions cluster by p, so the separating structure wins
        assert camp.tree.clusterings["m"] == {"m0": 0, "m1": 0, "m2": 1, "m3": 1}
        swaps = [a for a in camp.audit if a.get("event") == "tree_swap"]
        assert len(swaps) == 1

    def test_no_signature_match_resets_statistics(self):
        camp = self._campaign()
        table = cluster_table(camp.space)
        batch = camp.initial_batch()
        camp.ingest([(c, table[c.key()]) for c in batch])
        # leaf regions of the mixing and separating trees differ, so the swap
        # could not carry statistics over: documented reset behavior
        swaps = [a for a in camp.audit if a.get("event") == "tree_swap"]
        assert swaps[0]["stats_remapped"] is False
        assert all(n.n == 0 for n in camp.tree.nodes.values())

    def test_statistics_remap_when_leaf_regions_match(self):
        # same space, two reports with identical leaf regions but different
        # level order: statistics must carry over by leaf-signature identity
        manifest = two_cluster_manifest()
        space = build_space(manifest)
        base = report_from_space(space)
        reordered = KnowledgeReport(
            ranking=["t", "m"],  # swapped level order, same per-variable subsets
            clusterings=base.clusterings,
        )
        from rxnopt.campaign import _remap_statistics
        from rxnopt.tree import backpropagate, select_path

        old = build_tree(space, base)
        rng = np.random.default_rng(0)
        for _ in range(12):
            backpropagate(old, select_path(old, rng), float(rng.uniform(0, 100)))
        new = build_tree(space, reordered)
        assert _remap_statistics(old, new) is True
        old_leaf_stats = {
            old.leaf_signature(l): (old.nodes[l].n, old.nodes[l].q) for l in old.leaves()
        }
        for leaf in new.leaves():
            sig = new.leaf_signature(leaf)
            assert (new.nodes[leaf].n, new.nodes[leaf].q) == old_leaf_stats[sig]
        assert new.nodes[new.root].n == old.nodes[old.root].n

    def test_campaign_continues_cleanly_after_swap(self):
        camp = self._campaign(seed=3)
        table = cluster_table(camp.space)
        for _ in range(2):
            batch = camp.suggest()
            if not batch:
                break
            camp.ingest([(c, table[c.key()]) for c in batch])
        assert camp.best_so_far == pytest.approx(80.0)
