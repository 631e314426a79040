"""Pseudo-data lifecycle: generation from a predictor, similarity-based local
removal, rank-biased global removal, and intra-node variance tree scoring."""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Any, Iterable, Sequence

import numpy as np

from .predictor import PerformancePredictor
from .space import Condition, SearchSpace, enumerate_conditions
from .tree import OptTree

log = logging.getLogger(__name__)


class PseudoError(ValueError):
    pass


@dataclass
class PseudoPoint:
    condition: Condition
    predicted: float
    embedding: np.ndarray  # unit L2 norm
    alive: bool = True
    created_round: int = 0

    def to_dict(self) -> dict[str, Any]:
        return {
            "condition": self.condition.as_dict(),
            "predicted": self.predicted,
            "embedding": [float(x) for x in self.embedding],
            "alive": self.alive,
            "created_round": self.created_round,
        }


@dataclass(frozen=True)
class PseudoConfig:
    """Lifecycle knobs. Defaults follow the artifact's calibration, all swept in bench."""

    similarity_threshold: float = 0.95  # tau
    global_discard_fraction: float = 0.2  # rho per round
    initial_weight: float = 0.25  # w0, GP weight of a live pseudo-point
    scope: str = "leaf"  # "leaf" | "full"
    enabled: bool = True

    def __post_init__(self):
        if not (0.0 < self.similarity_threshold < 1.0):
            raise PseudoError("similarity_threshold must lie in (0,1)")
        if not (0.0 <= self.global_discard_fraction < 1.0):
            raise PseudoError("global_discard_fraction must lie in [0,1)")
        if not (0.0 < self.initial_weight <= 1.0):
            raise PseudoError("initial_weight must lie in (0,1]")
        if self.scope not in ("leaf", "full"):
            raise PseudoError("scope must be 'leaf' or 'full'")

    def to_dict(self) -> dict[str, Any]:
        return {
            "similarity_threshold": self.similarity_threshold,
            "global_discard_fraction": self.global_discard_fraction,
            "initial_weight": self.initial_weight,
            "scope": self.scope,
            "enabled": self.enabled,
        }

    @classmethod
    def from_dict(cls, d: dict[str, Any]) -> "PseudoConfig":
        return cls(**{k: d[k] for k in cls.__dataclass_fields__ if k in d})


def generate(
    predictor: PerformancePredictor,
    subspace: SearchSpace,
    observed_keys: Iterable[tuple] = (),
    created_round: int = 0,
    cap: int = 1_000_000,
) -> list[PseudoPoint]:
    """One live pseudo-point per enumerated condition without a real observation.

    Deterministic: points come back in enumeration order with the predictor's
    values and embeddings.
    """
    observed = set(observed_keys)
    conditions = [c for c in enumerate_conditions(subspace, cap=cap) if c.key() not in observed]
    if not conditions:
        return []
    values = predictor.predict(conditions)
    return [
        PseudoPoint(
            condition=c,
            predicted=float(v),
            embedding=predictor.embed(c),
            alive=True,
            created_round=created_round,
        )
        for c, v in zip(conditions, values)
    ]


def local_removal(
    points: Sequence[PseudoPoint], new_obs_embedding: np.ndarray, tau: float
) -> int:
    """Retire live points whose cosine similarity to the new observation >= tau."""
    e = np.asarray(new_obs_embedding, dtype=float)
    retired = 0
    for p in points:
        if not p.alive:
            continue
        if float(np.dot(p.embedding, e)) >= tau:
            p.alive = False
            retired += 1
    return retired


def global_removal(
    points: Sequence[PseudoPoint], rho: float, rng: np.random.Generator
) -> int:
    """Retire ceil(rho * live) points, biased toward high predicted performance.

    Sampling is without replacement with weight (L - r + 1) for descending
    predicted rank r, so the top-predicted point carries the largest weight.
    """
    if not (0.0 <= rho < 1.0):
        raise PseudoError("rho must lie in [0,1)")
    live = [p for p in points if p.alive]
    n_live = len(live)
    m = math.ceil(rho * n_live)
    if m == 0:
        return 0
    order = sorted(range(n_live), key=lambda i: (-live[i].predicted, i))
    weights = np.zeros(n_live)
    for rank_pos, idx in enumerate(order):  # rank_pos 0 = highest predicted
        weights[idx] = n_live - rank_pos
    chosen: list[int] = []
    w = weights.copy()
    for _ in range(m):
        probs = w / w.sum()
        pick = int(rng.choice(n_live, p=probs))
        chosen.append(pick)
        w[pick] = 0.0
    for idx in chosen:
        live[idx].alive = False
    return m


def rank_weights(predictions: Sequence[float]) -> np.ndarray:
    """Normalized first-draw retirement probabilities for the given predictions."""
    n = len(predictions)
    order = sorted(range(n), key=lambda i: (-predictions[i], i))
    w = np.zeros(n)
    for rank_pos, idx in enumerate(order):
        w[idx] = n - rank_pos
    return w / w.sum()


def score_tree(tree: OptTree, points: Sequence[PseudoPoint]) -> float:
    """Sum over all nodes of the population variance of contained predictions.

    A node contains a pseudo-point when the point's leaf lies beneath it; nodes
    with fewer than two points contribute zero.
    """
    per_node: dict[int, list[float]] = {nid: [] for nid in tree.nodes}
    for p in points:
        if not p.alive:
            continue
        leaf = tree.leaf_for(p.condition)  # raises TreeError on unmappable conditions
        for nid in tree.path_to(leaf):
            per_node[nid].append(p.predicted)
    total = 0.0
    for vals in per_node.values():
        if len(vals) >= 2:
            total += float(np.var(vals))
    return total


def select_tree(
    candidates: Sequence[OptTree], points: Sequence[PseudoPoint]
) -> tuple[OptTree, list[float]]:
    """Candidate with minimal intra-node variance score; ties keep the first."""
    if not candidates:
        raise PseudoError("no candidate trees supplied")
    scores = [score_tree(t, points) for t in candidates]
    best = min(range(len(scores)), key=lambda i: scores[i])
    ties = [i for i, s in enumerate(scores) if s == scores[best]]
    if len(ties) > 1:
        log.info("tree selection tie among candidates %s; keeping the first", ties)
    return candidates[best], scores
