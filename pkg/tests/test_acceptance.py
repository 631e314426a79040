"""Acceptance suite: one test per acceptance criterion, printing a PASS line
with the measured figure so a reviewer can audit tolerances at a glance.

Run with `pytest tests/test_acceptance.py -v -s`.
"""
from __future__ import annotations

import math
import time

import numpy as np
import pytest

from rxnopt import bench
from rxnopt.campaign import Campaign, load, save
from rxnopt.bench import run_one, synth_dataset, variant_config
from rxnopt.gp import GPModel, Hyperparams, lml_and_grad, matern52, predict
from rxnopt.knowledge import build_tree, report_from_space
from rxnopt.pseudo import PseudoPoint, global_removal, local_removal, rank_weights, score_tree, select_tree
from rxnopt.space import build_space, enumerate_conditions
from rxnopt.tree import TreeNode, backpropagate, select_path, ucb
from rxnopt.util import canonical_json


def report(name: str, detail: str) -> None:
    print(f"\nACCEPTANCE {name}: PASS ({detail})")


# --------------------------------------------------------------------------
# GP correctness: dense-solve oracle to 1e-9; gradient vs central differences
# to relative error < 1e-4 over 20 random settings. Runtime < 5 s.
# --------------------------------------------------------------------------
def test_gp_correctness():
    t0 = time.perf_counter()
    rng = np.random.default_rng(2024)

    worst_post = 0.0
    for _ in range(10):
        n, d = int(rng.integers(2, 6)), int(rng.integers(1, 4))
        X = rng.normal(size=(n, d))
        y = rng.normal(50, 10, size=n)
        w = rng.uniform(0.25, 1.0, size=n)
        hp = Hyperparams(
            lengthscales=rng.uniform(0.5, 2.0, size=d),
            signal_variance=float(rng.uniform(1, 30)),
            noise_variance=float(rng.uniform(0.01, 1)),
            constant_mean=float(rng.normal(50, 5)),
        )
        gp = GPModel(train_x=X, train_y=y, weights=w, hyperparams=hp)
        Xs = rng.normal(size=(4, d))
        mu, var = predict(gp, Xs)
        K = np.array(
            [[matern52(a, b, hp.lengthscales, hp.signal_variance) for b in X] for a in X]
        ) + np.diag(hp.noise_variance / w)
        Ks = np.array(
            [[matern52(a, b, hp.lengthscales, hp.signal_variance) for b in X] for a in Xs]
        )
        Ki = np.linalg.inv(K)
        mu_o = hp.constant_mean + Ks @ Ki @ (y - hp.constant_mean)
        var_o = hp.signal_variance + hp.noise_variance - np.sum((Ks @ Ki) * Ks, axis=1)
        worst_post = max(worst_post, float(np.max(np.abs(mu - mu_o))), float(np.max(np.abs(var - var_o))))
    assert worst_post < 1e-9

    worst_grad = 0.0
    for _ in range(20):
        n, d = int(rng.integers(4, 9)), int(rng.integers(1, 4))
        X = rng.normal(size=(n, d))
        y = rng.normal(50, 8, size=n)
        w = rng.uniform(0.2, 1.0, size=n)
        p = np.concatenate(
            [rng.normal(0, 0.5, d),
             [np.log(rng.uniform(1, 20)), np.log(rng.uniform(0.05, 1)), rng.normal(50, 5)]]
        )
        _, grad = lml_and_grad(p, X, y, w)
        fd = np.zeros_like(p)
        h = 1e-5
        for j in range(len(p)):
            pp, pm = p.copy(), p.copy()
            pp[j] += h
            pm[j] -= h
            fd[j] = (lml_and_grad(pp, X, y, w)[0] - lml_and_grad(pm, X, y, w)[0]) / (2 * h)
        worst_grad = max(worst_grad, np.linalg.norm(grad - fd) / max(np.linalg.norm(fd), 1e-10))
    assert worst_grad < 1e-4

    dt = time.perf_counter() - t0
    assert dt < 5.0
    report("GP correctness", f"posterior err {worst_post:.2e} < 1e-9, grad rel err {worst_grad:.2e} < 1e-4, {dt:.1f}s")


# --------------------------------------------------------------------------
# UCB/backprop exactness: hand-computed values incl. the n=0 rule, and exact
# path-sum conservation over 1,000 random backprop sequences. Runtime < 5 s.
# --------------------------------------------------------------------------
def test_ucb_backprop_exactness():
    t0 = time.perf_counter()
    fresh = TreeNode(id=1, level=1, variable="v", subset=0, parent=0)
    assert ucb(fresh, parent_visits=0, c_p=10.0) == math.inf
    assert ucb(fresh, parent_visits=7, c_p=10.0) == math.inf

    visited = TreeNode(id=2, level=1, variable="v", subset=1, parent=0, n=2, q=1.0)
    assert ucb(visited, 10, 1.0) == 0.5 + math.sqrt(math.log(10) / 2)
    assert ucb(TreeNode(id=3, level=1, variable="v", subset=2, parent=0, n=4, q=260.0), 16, 10.0) == (
        65.0 + 10.0 * math.sqrt(math.log(16) / 4)
    )

    manifest = {
        "variables": [
            {"name": "a", "rank": 1, "kind": "categorical",
             "candidates": [{"id": f"a{i}", "properties": {}, "subset": i % 2} for i in range(4)]},
            {"name": "b", "rank": 2, "kind": "categorical",
             "candidates": [{"id": f"b{i}", "properties": {}, "subset": i} for i in range(3)]},
        ]
    }
    space = build_space(manifest)
    tree = build_tree(space, report_from_space(space))
    rng = np.random.default_rng(7)
    total = 0.0
    count = 0
    for _ in range(1000):
        path = select_path(tree, rng)
        r = float(rng.integers(0, 101))  # integer rewards keep float sums exact
        backpropagate(tree, path, r)
        total += r
        count += 1
    root = tree.nodes[tree.root]
    assert root.n == count == 1000
    assert root.q == total  # exact: integer-valued floats
    for node in tree.nodes.values():
        if node.children:
            assert node.n == sum(tree.nodes[c].n for c in node.children)
            assert node.q == sum(tree.nodes[c].q for c in node.children)

    dt = time.perf_counter() - t0
    assert dt < 5.0
    report("UCB/backprop exactness", f"1000 backprops conserved exactly, {dt:.1f}s")


# --------------------------------------------------------------------------
# Pseudo lifecycle: local_removal vs brute-force cosine filter on 1e3 random
# instances; global_removal exact count and 3-sigma frequency match over 1e4
# seeded trials. Runtime < 30 s.
# --------------------------------------------------------------------------
def test_pseudo_lifecycle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(11)

    def unit(v):
        return v / np.linalg.norm(v)

    for _ in range(1000):
        n = int(rng.integers(1, 25))
        d = int(rng.integers(2, 8))
        embs = [unit(rng.normal(size=d)) for _ in range(n)]
        pts = [
            PseudoPoint(condition=None, predicted=float(rng.uniform(0, 100)), embedding=e)
            for e in embs
        ]
        obs = unit(rng.normal(size=d))
        tau = float(rng.uniform(0.2, 0.99))
        expected = {i for i, e in enumerate(embs) if float(e @ obs) >= tau}
        retired = local_removal(pts, obs, tau)
        assert retired == len(expected)
        assert all(p.alive == (i not in expected) for i, p in enumerate(pts))

    # exact retirement count
    for n, rho in [(10, 0.2), (9, 0.35), (4, 0.75)]:
        pts = [
            PseudoPoint(condition=None, predicted=float(i), embedding=np.array([1.0]))
            for i in range(n)
        ]
        assert global_removal(pts, rho, np.random.default_rng(0)) == math.ceil(rho * n)

    # frequency check: 5 points, rho=0.2 -> single retirement per trial with
    # exact first-draw probabilities [5,4,3,2,1]/15
    preds = [90.0, 70.0, 50.0, 30.0, 10.0]
    probs = rank_weights(preds)
    n_trials = 10_000
    counts = np.zeros(5)
    for t in range(n_trials):
        pts = [
            PseudoPoint(condition=None, predicted=v, embedding=np.array([1.0])) for v in preds
        ]
        global_removal(pts, 0.2, np.random.default_rng(t))
        counts[next(i for i, p in enumerate(pts) if not p.alive)] += 1
    freq = counts / n_trials
    sigma = np.sqrt(probs * (1 - probs) / n_trials)
    dev = np.abs(freq - probs) / sigma
    assert np.all(dev <= 3.0)
    assert freq[0] > freq[-1]  # top-predicted retired most often

    dt = time.perf_counter() - t0
    assert dt < 30.0
    report("Pseudo lifecycle", f"1e3 brute-force matches, max freq dev {dev.max():.2f} sigma <= 3, {dt:.1f}s")


# --------------------------------------------------------------------------
# Tree scoring: score_tree equals brute-force recomputation to 1e-9 on random
# trees/pseudo sets; select_tree prefers the cluster-separating tree. < 10 s.
# --------------------------------------------------------------------------
def test_tree_scoring():
    t0 = time.perf_counter()
    rng = np.random.default_rng(5)

    for trial in range(10):
        n_vars = int(rng.integers(2, 4))
        manifest = {"variables": []}
        for i in range(n_vars):
            n_c = int(rng.integers(2, 5))
            k = int(rng.integers(1, n_c + 1))
            manifest["variables"].append(
                {"name": f"v{i}", "rank": i + 1, "kind": "categorical",
                 "candidates": [{"id": f"v{i}c{j}", "properties": {}, "subset": j % k} for j in range(n_c)]}
            )
        space = build_space(manifest)
        tree = build_tree(space, report_from_space(space))
        conds = list(enumerate_conditions(space))
        pts = [
            PseudoPoint(condition=c, predicted=float(rng.uniform(0, 100)), embedding=np.array([1.0]))
            for c in conds
        ]
        got = score_tree(tree, pts)
        brute = 0.0
        for nid in tree.nodes:
            vals = [
                p.predicted
                for p in pts
                if nid in tree.path_to(tree.leaf_for(p.condition))
            ]
            if len(vals) >= 2:
                mean = sum(vals) / len(vals)
                brute += sum((v - mean) ** 2 for v in vals) / len(vals)
        assert abs(got - brute) < 1e-9

    # constructed two-cluster predictions: separating tree must win deterministically
    sep_manifest = {
        "variables": [{"name": "m", "rank": 1, "kind": "categorical", "candidates": [
            {"id": "m0", "properties": {}, "subset": 0},
            {"id": "m1", "properties": {}, "subset": 0},
            {"id": "m2", "properties": {}, "subset": 1},
            {"id": "m3", "properties": {}, "subset": 1},
        ]}]
    }
    mix_manifest = {
        "variables": [{"name": "m", "rank": 1, "kind": "categorical", "candidates": [
            {"id": "m0", "properties": {}, "subset": 0},
            {"id": "m1", "properties": {}, "subset": 1},
            {"id": "m2", "properties": {}, "subset": 0},
            {"id": "m3", "properties": {}, "subset": 1},
        ]}]
    }
    sep_space = build_space(sep_manifest)
    sep = build_tree(sep_space, report_from_space(sep_space))
    mix_space = build_space(mix_manifest)
    mix = build_tree(mix_space, report_from_space(mix_space))
    pts = [
        PseudoPoint(condition=sep_space.condition({"m": mid}), predicted=v, embedding=np.array([1.0]))
        for mid, v in [("m0", 10.0), ("m1", 12.0), ("m2", 90.0), ("m3", 88.0)]
    ]
    winner, scores = select_tree([mix, sep], pts)
    assert winner is sep
    assert scores[1] < scores[0]

    dt = time.perf_counter() - t0
    assert dt < 10.0
    report("Tree scoring", f"brute-force agreement < 1e-9, separating tree selected, {dt:.1f}s")


# --------------------------------------------------------------------------
# Shared protocol dataset + runs (criteria 6-8 reuse these)
# --------------------------------------------------------------------------
@pytest.fixture(scope="module")
def protocol_dataset(synth_spec_576):
    return synth_dataset(synth_spec_576)


@pytest.fixture(scope="module")
def protocol_runs(protocol_dataset):
    t0 = time.perf_counter()
    seeds = list(range(20))
    runs = {"full": [run_one("full", protocol_dataset, 5, 5, s) for s in seeds]}
    for variant in ("no_knowledge", "no_data", "no_both"):
        runs[variant] = [run_one(variant, protocol_dataset, 2, 5, s) for s in seeds]
    runs["wall_time"] = time.perf_counter() - t0
    return runs


# --------------------------------------------------------------------------
# Determinism/persistence: identical (config, seed, observation stream) gives
# byte-identical recommendation streams across two engine instances, one of
# which round-trips through save/load at every round boundary.
# --------------------------------------------------------------------------
def test_determinism_and_persistence(protocol_dataset, tmp_path):
    ds = protocol_dataset
    cfg_a = variant_config("full", ds, rounds=4, q=5, seed=31)
    camp_a = Campaign.init(cfg_a)
    stream_a = []
    for _ in range(4):
        batch = camp_a.suggest()
        stream_a.append(canonical_json([c.as_dict() for c in batch]))
        camp_a.ingest([(c, ds.table[c.key()]) for c in batch])

    path = tmp_path / "state.json"
    cfg_b = variant_config("full", ds, rounds=4, q=5, seed=31)
    Campaign.init(cfg_b, path=path)
    stream_b = []
    for _ in range(4):
        camp_b = load(path)  # fresh process-equivalent reload every round
        batch = camp_b.suggest()
        stream_b.append(canonical_json([c.as_dict() for c in batch]))
        camp_b = load(path)
        camp_b.ingest([(c, ds.table[c.key()]) for c in batch])

    assert stream_a == stream_b
    report("Determinism/persistence", "4-round recommendation streams byte-identical through save/load")


# --------------------------------------------------------------------------
# Protocol-shape reproduction on the 576-combo synthetic dataset:
# (a) full beats vanilla BO at round 2 by > 1 pooled SE;
# (b) full reaches >= 95% of the table max within 5 rounds in >= 16/20 seeds;
# (c) full >= no_data and full >= no_knowledge at round 2 by > 1 SE.
# Runtime < 10 min.
# --------------------------------------------------------------------------
def test_protocol_shape(protocol_dataset, protocol_runs):
    ds = protocol_dataset

    def round2(variant):
        return np.array([t.best_per_round[1] for t in protocol_runs[variant]])

    f2 = round2("full")
    lines = []
    for variant in ("no_both", "no_data", "no_knowledge"):
        o2 = round2(variant)
        diff = float(f2.mean() - o2.mean())
        se = float(np.sqrt(f2.var(ddof=1) / len(f2) + o2.var(ddof=1) / len(o2)))
        lines.append(f"full-{variant}: {diff:.2f} > SE {se:.2f}")
        assert diff > se, f"full vs {variant}: diff {diff:.3f} <= pooled SE {se:.3f}"

    target = 0.95 * ds.max_value()
    hits = sum(1 for t in protocol_runs["full"] if max(t.best_per_round) >= target)
    assert hits >= 16, f"only {hits}/20 seeds reached 95% of max"

    wall = protocol_runs["wall_time"]
    assert wall < 600.0, f"protocol runs took {wall:.0f}s (budget 600s)"
    report("Protocol shape", "; ".join(lines) + f"; 95%-max hits {hits}/20, runs {wall:.0f}s < 600s")


# --------------------------------------------------------------------------
# Initial-round robustness: ten seeded initial batches each contain at least
# one condition in the top decile of the table. Runtime < 1 min.
# --------------------------------------------------------------------------
def test_initial_round_robustness(protocol_dataset):
    t0 = time.perf_counter()
    ds = protocol_dataset
    values = np.array(sorted(ds.table.values(), reverse=True))
    decile_cut = values[int(0.1 * len(values)) - 1]
    hits = []
    for seed in range(10):
        camp = Campaign.init(variant_config("full", ds, rounds=5, q=20, seed=seed))
        batch = camp.initial_batch()
        hits.append(sum(1 for c in batch if ds.table[c.key()] >= decile_cut))
    assert all(h >= 1 for h in hits), f"top-decile hits per seed: {hits}"
    dt = time.perf_counter() - t0
    assert dt < 60.0
    report("Initial-round robustness", f"top-decile hits per seed {hits}, {dt:.1f}s")


# --------------------------------------------------------------------------
# Budget integrity: metered lookups per trajectory equal rounds x batch
# exactly; pseudo generation performs zero table lookups.
# --------------------------------------------------------------------------
def test_budget_integrity(protocol_dataset, protocol_runs):
    for variant, runs in protocol_runs.items():
        if variant == "wall_time":
            continue
        rounds = 5 if variant == "full" else 2
        for t in runs:
            assert t.lookups == rounds * 5, f"{variant} seed {t.seed}: {t.lookups} lookups"

    ds = protocol_dataset
    meter = bench.MeteredTable(ds)
    camp = Campaign.init(variant_config("full", ds, rounds=3, q=5, seed=99))
    batch = camp.initial_batch()
    camp.ingest([(c, meter(c)) for c in batch])
    before = meter.lookups
    camp.recommend()  # pseudo generation + GP fit + batch selection
    assert sum(1 for p in camp.pseudo_points if p.alive) > 0
    assert meter.lookups == before
    report("Budget integrity", f"lookups = rounds x batch for all runs; pseudo generation used 0 lookups")
