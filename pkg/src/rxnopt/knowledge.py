"""Knowledge inputs to tree construction: variable ranking and candidate clustering.

Reports come from pluggable providers: a static file replay, a property-based
k-means clusterer, or a remote JSON-over-HTTP service. Tree construction itself
is pure: level order follows the ranking, children follow the subsets.
"""
from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Mapping, Protocol

import numpy as np

from .space import SearchSpace, build_space, level_key, value_key
from .tree import OptTree, TreeNode
from .util import canonical_json, derive_rng, sha256_hex

log = logging.getLogger(__name__)


class KnowledgeError(ValueError):
    """Schema violation or report/space mismatch."""


@dataclass
class KnowledgeReport:
    """Variable importance order plus per-variable candidate subsets."""

    ranking: list[str]
    clusterings: dict[str, dict[str, int]]  # variable -> value key -> subset index
    rationale: str = ""

    def to_dict(self) -> dict[str, Any]:
        return {
            "ranking": list(self.ranking),
            "clusterings": {v: dict(m) for v, m in self.clusterings.items()},
            "rationale": self.rationale,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "KnowledgeReport":
        if "ranking" not in d or "clusterings" not in d:
            raise KnowledgeError("report must carry 'ranking' and 'clusterings'")
        clusterings = {
            str(v): {str(k): int(s) for k, s in m.items()} for v, m in d["clusterings"].items()
        }
        return cls(
            ranking=[str(x) for x in d["ranking"]],
            clusterings=clusterings,
            rationale=str(d.get("rationale", "")),
        )


def validate_report(report: KnowledgeReport, space: SearchSpace) -> None:
    """Check the report against a space; raises with the offending variable/candidate."""
    names = space.variable_names
    if sorted(report.ranking) != sorted(names):
        raise KnowledgeError(
            f"ranking {report.ranking} is not a permutation of the space's variables {names}"
        )
    for var in space.variables:
        cmap = report.clusterings.get(var.name)
        if cmap is None:
            if var.kind == "categorical":
                raise KnowledgeError(f"variable {var.name!r}: missing clustering")
            continue  # numeric: absent means each level its own subset
        keys = {value_key(v) for v in var.values()}
        missing = keys - set(cmap)
        if missing:
            raise KnowledgeError(
                f"variable {var.name!r}: candidates missing from clustering: {sorted(missing)}"
            )
        extra = set(cmap) - keys
        if extra:
            raise KnowledgeError(f"variable {var.name!r}: unknown candidates {sorted(extra)}")
        subs = set(cmap.values())
        if subs != set(range(max(subs) + 1)):
            raise KnowledgeError(
                f"variable {var.name!r}: subset indices must cover 0..k-1, got {sorted(subs)}"
            )


def _complete_clusterings(report: KnowledgeReport, space: SearchSpace) -> dict[str, dict[str, int]]:
    """Fill default numeric clusterings (each level its own subset) where absent."""
    out = {v: dict(m) for v, m in report.clusterings.items()}
    for var in space.variables:
        if var.name not in out:
            out[var.name] = {level_key(l): s for l, s in zip(var.levels, var.level_subsets)}
    return out


def report_from_space(space: SearchSpace) -> KnowledgeReport:
    """Report implied by the manifest itself: its ranks and its subset indices."""
    clusterings: dict[str, dict[str, int]] = {}
    for var in space.variables:
        if var.kind == "categorical":
            clusterings[var.name] = {c.id: c.subset for c in var.candidates}
        else:
            clusterings[var.name] = {level_key(l): s for l, s in zip(var.levels, var.level_subsets)}
    return KnowledgeReport(
        ranking=list(space.variable_names), clusterings=clusterings, rationale="manifest ranks/subsets"
    )


class KnowledgeProvider(Protocol):
    def report(self, manifest: Mapping[str, Any], task: str) -> KnowledgeReport: ...


class ManifestProvider:
    """Echoes the ranking and subsets already present in the manifest."""

    def report(self, manifest: Mapping[str, Any], task: str) -> KnowledgeReport:
        return report_from_space(build_space(manifest))


class StaticProvider:
    """Replays a curated report from disk, validated against the space."""

    def __init__(self, report_file: str | Path):
        self.path = Path(report_file)
        data = json.loads(self.path.read_text(encoding="utf-8"))
        self._report = KnowledgeReport.from_dict(data)

    def report(self, manifest: Mapping[str, Any], task: str) -> KnowledgeReport:
        space = build_space(manifest)
        validate_report(self._report, space)
        return self._report


def _zscore(x: np.ndarray) -> np.ndarray:
    mu = x.mean(axis=0)
    sd = x.std(axis=0)
    sd[sd == 0] = 1.0
    return (x - mu) / sd


def kmeans_labels(points: np.ndarray, k: int, rng: np.random.Generator, max_iter: int = 100) -> np.ndarray:
    """Seeded k-means++ / Lloyd labeling; relabeled by first appearance for determinism."""
    n = len(points)
    if k > n:
        raise KnowledgeError(f"k={k} exceeds point count {n}")
    # k-means++ initialization
    centers = [points[int(rng.integers(n))]]
    for _ in range(1, k):
        d2 = np.min([np.sum((points - c) ** 2, axis=1) for c in centers], axis=0)
        total = d2.sum()
        if total <= 0:
            # all remaining points coincide with a center; spread over duplicates
            centers.append(points[int(rng.integers(n))])
            continue
        probs = d2 / total
        centers.append(points[int(rng.choice(n, p=probs))])
    centers = np.array(centers)
    labels: np.ndarray | None = None
    for _it in range(max_iter):
        dists = np.linalg.norm(points[:, None, :] - centers[None, :, :], axis=2)
        new_labels = np.argmin(dists, axis=1)
        for j in range(k):
            if not np.any(new_labels == j):  # re-seed empty cluster at the farthest point
                far = int(np.argmax(np.min(dists, axis=1)))
                new_labels[far] = j
        if labels is not None and np.array_equal(new_labels, labels):
            break
        labels = new_labels
        for j in range(k):
            centers[j] = points[labels == j].mean(axis=0)
    # contiguous subset ids in order of first appearance over candidate order
    remap: dict[int, int] = {}
    out = np.zeros(n, dtype=int)
    for i, lab in enumerate(labels):
        if lab not in remap:
            remap[lab] = len(remap)
        out[i] = remap[lab]
    return out


class PropertyClusterProvider:
    """Ranks by manifest importance and clusters candidates on z-scored properties.

    Numeric variables treat the level value as a 1-D property. Variables absent
    from k_per_variable keep the manifest's own subsets.
    """

    def __init__(self, k_per_variable: Mapping[str, int], seed: int = 0):
        self.k_per_variable = dict(k_per_variable)
        self.seed = int(seed)

    def report(self, manifest: Mapping[str, Any], task: str) -> KnowledgeReport:
        space = build_space(manifest)
        base = report_from_space(space)
        clusterings = dict(base.clusterings)
        for var in space.variables:
            k = self.k_per_variable.get(var.name)
            if k is None:
                continue
            if var.kind == "categorical":
                if k > len(var.candidates):
                    raise KnowledgeError(
                        f"variable {var.name!r}: k={k} exceeds {len(var.candidates)} candidates"
                    )
                prop_keys = sorted(var.candidates[0].properties)
                if not prop_keys:
                    raise KnowledgeError(f"variable {var.name!r}: candidates have no properties")
                pts = np.array([[c.properties[p] for p in prop_keys] for c in var.candidates])
                keys = [c.id for c in var.candidates]
            else:
                if k > len(var.levels):
                    raise KnowledgeError(f"variable {var.name!r}: k={k} exceeds {len(var.levels)} levels")
                pts = np.array([[float(l)] for l in var.levels])
                keys = [level_key(l) for l in var.levels]
            rng = derive_rng(self.seed, "kmeans", var.name)
            labels = kmeans_labels(_zscore(pts), k, rng)
            clusterings[var.name] = {key: int(lab) for key, lab in zip(keys, labels)}
        return KnowledgeReport(
            ranking=base.ranking,
            clusterings=clusterings,
            rationale=f"k-means on candidate properties (seed={self.seed})",
        )


class RemoteProviderError(RuntimeError):
    """Transport or schema failure from the remote knowledge service."""


class RemoteProvider:
    """JSON-over-HTTP knowledge service client with disk cache and audit capture.

    Request: {"space_manifest": ..., "task_description": ..., "prompt_template": ...}
    Response: a KnowledgeReport document.
    """

    def __init__(
        self,
        endpoint: str,
        credentials: str = "",
        prompt_template: str = "",
        max_retries: int = 3,
        timeout: float = 30.0,
        cache_dir: str | Path | None = None,
        audit: list | None = None,
    ):
        self.endpoint = endpoint
        self.credentials = credentials
        self.prompt_template = prompt_template
        self.max_retries = int(max_retries)
        self.timeout = timeout
        self.cache_dir = Path(cache_dir) if cache_dir else None
        self.audit = audit if audit is not None else []

    def report(self, manifest: Mapping[str, Any], task: str) -> KnowledgeReport:
        import httpx

        payload = {
            "space_manifest": dict(manifest),
            "task_description": task,
            "prompt_template": self.prompt_template,
        }
        key = sha256_hex(canonical_json(payload))
        if self.cache_dir is not None:
            cached = self.cache_dir / f"{key}.json"
            if cached.exists():
                data = json.loads(cached.read_text(encoding="utf-8"))
                self.audit.append({"kind": "knowledge", "cached": True, "key": key})
                return self._validate(data, manifest)

        headers = {"Content-Type": "application/json"}
        if self.credentials:
            headers["Authorization"] = f"Bearer {self.credentials}"
        last_err: Exception | None = None
        for attempt in range(self.max_retries):
            try:
                resp = httpx.post(self.endpoint, json=payload, headers=headers, timeout=self.timeout)
                resp.raise_for_status()
                data = resp.json()
                break
            except Exception as e:  # surfaced after bounded retries, never swallowed
                last_err = e
                log.warning("knowledge service attempt %d/%d failed: %s", attempt + 1, self.max_retries, e)
        else:
            raise RemoteProviderError(
                f"knowledge service failed after {self.max_retries} attempts: {last_err}"
            ) from last_err

        self.audit.append({"kind": "knowledge", "key": key, "request": payload, "response": data})
        if self.cache_dir is not None:
            self.cache_dir.mkdir(parents=True, exist_ok=True)
            (self.cache_dir / f"{key}.json").write_text(canonical_json(data), encoding="utf-8")
        return self._validate(data, manifest)

    def _validate(self, data: Mapping[str, Any], manifest: Mapping[str, Any]) -> KnowledgeReport:
        report = KnowledgeReport.from_dict(data)
        validate_report(report, build_space(manifest))
        return report


def make_provider(spec: Mapping[str, Any], audit: list | None = None) -> KnowledgeProvider:
    """Instantiate a provider from a config spec: {"type": "manifest"|"static"|"property_cluster"|"remote", ...}."""
    kind = spec.get("type", "manifest")
    if kind == "manifest":
        return ManifestProvider()
    if kind == "static":
        return StaticProvider(spec["path"])
    if kind == "property_cluster":
        return PropertyClusterProvider(spec.get("k", {}), seed=spec.get("seed", 0))
    if kind == "remote":
        return RemoteProvider(
            endpoint=spec["endpoint"],
            credentials=spec.get("credentials", ""),
            prompt_template=spec.get("prompt_template", ""),
            max_retries=spec.get("max_retries", 3),
            timeout=spec.get("timeout", 30.0),
            cache_dir=spec.get("cache_dir"),
            audit=audit,
        )
    raise KnowledgeError(f"unknown provider type {kind!r}")


def build_tree(space: SearchSpace, report: KnowledgeReport, c_p: float = 10.0) -> OptTree:
    """Construct the optimization tree: level l splits on the l-th ranked variable.

    Every node starts at n=0, Q=0; the root stands for the whole space and leaves
    sit at depth = variable count.
    """
    validate_report(report, space)
    clusterings = _complete_clusterings(report, space)

    nodes: dict[int, TreeNode] = {}
    root = TreeNode(id=0, level=0, variable=None, subset=None, parent=None)
    nodes[0] = root
    next_id = 1
    frontier = [root]
    for level, var_name in enumerate(report.ranking, start=1):
        subsets = sorted(set(clusterings[var_name].values()))
        new_frontier: list[TreeNode] = []
        for parent in frontier:
            for s in subsets:
                child = TreeNode(id=next_id, level=level, variable=var_name, subset=s, parent=parent.id)
                nodes[next_id] = child
                parent.children.append(next_id)
                next_id += 1
                new_frontier.append(child)
        frontier = new_frontier
    return OptTree(
        nodes=nodes,
        root=0,
        c_p=c_p,
        ranking=list(report.ranking),
        clusterings=clusterings,
    )
