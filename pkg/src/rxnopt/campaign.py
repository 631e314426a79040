"""Campaign orchestration: the two-stage loop across rounds.

Round 0 issues a knowledge-stratified initial batch; later rounds select leaves
by UCB, fit a weighted GP on real + live pseudo data, and recommend per-leaf
batches. Ingest runs the per-round update in a fixed order: predictor refit and
pseudo regeneration, reward backpropagation (plus candidate-tree reselection),
then local and global pseudo removal. State persists as versioned,
checksummed JSON; every random draw derives from (seed, round, purpose) so a
reloaded campaign continues exactly like an uninterrupted one.
"""
from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import numpy as np

from . import gp as gpmod
from .knowledge import KnowledgeReport, build_tree, make_provider
from .predictor import PerformancePredictor, PredictorError, RidgePredictor, TableOracle, make_predictor
from .pseudo import PseudoConfig, PseudoPoint, generate, global_removal, local_removal, select_tree
from .space import (
    Condition,
    Observation,
    SearchSpace,
    build_space,
    encode,
    enumerate_conditions,
    value_key,
)
from .tree import OptTree, TreeError, backpropagate, batch_select, restrict
from .util import atomic_write_text, canonical_json, derive_rng, sha256_hex

log = logging.getLogger(__name__)

STATE_VERSION = 1

READY = "ready"
AWAITING = "awaiting_observations"
CONVERGED = "converged"
EXHAUSTED = "exhausted"


class CampaignError(RuntimeError):
    pass


@dataclass
class CampaignConfig:
    manifest: dict
    provider: dict = field(default_factory=lambda: {"type": "manifest"})
    predictor: dict = field(default_factory=lambda: {"type": "ridge"})
    batch_size: int = 5
    acquisition: list = field(default_factory=lambda: ["logei"])
    c_p: float = 10.0
    pseudo: PseudoConfig = field(default_factory=PseudoConfig)
    max_rounds: int = 20
    target_threshold: float | None = None
    patience: int | None = 3
    seed: int = 0
    objective_percent: bool = True
    task: str = ""
    allow_external: bool = False
    candidate_reports: list = field(default_factory=list)
    enumeration_cap: int = 10_000_000
    stratified_init: bool = True  # knowledge-driven round-0 sampling; off = uniform random

    def __post_init__(self):
        if self.batch_size < 1:
            raise CampaignError("batch_size must be >= 1")
        if self.max_rounds < 1:
            raise CampaignError("max_rounds must be >= 1")
        if isinstance(self.pseudo, dict):
            self.pseudo = PseudoConfig.from_dict(self.pseudo)

    def kinds(self) -> list[gpmod.AcquisitionKind]:
        return [gpmod.AcquisitionKind.parse(k) for k in self.acquisition]

    def to_dict(self) -> dict[str, Any]:
        return {
            "manifest": self.manifest,
            "provider": self.provider,
            "predictor": self.predictor,
            "batch_size": self.batch_size,
            "acquisition": list(self.acquisition),
            "c_p": self.c_p,
            "pseudo": self.pseudo.to_dict(),
            "max_rounds": self.max_rounds,
            "target_threshold": self.target_threshold,
            "patience": self.patience,
            "seed": self.seed,
            "objective_percent": self.objective_percent,
            "task": self.task,
            "allow_external": self.allow_external,
            "candidate_reports": list(self.candidate_reports),
            "enumeration_cap": self.enumeration_cap,
            "stratified_init": self.stratified_init,
        }

    @classmethod
    def from_dict(cls, d: Mapping[str, Any]) -> "CampaignConfig":
        manifest = d["manifest"]
        if isinstance(manifest, str):
            manifest = json.loads(Path(manifest).read_text(encoding="utf-8"))
        known = {k: d[k] for k in cls.__dataclass_fields__ if k in d}
        known["manifest"] = manifest
        return cls(**known)


def _fit_seed(seed: int, tag: str, round_idx: int) -> int:
    return int(sha256_hex(f"{seed}:{tag}:{round_idx}")[:8], 16)


class Campaign:
    """Single-writer campaign engine; reads take consistent snapshots via views."""

    def __init__(
        self,
        config: CampaignConfig,
        space: SearchSpace,
        tree: OptTree,
        predictor: PerformancePredictor | None,
        candidate_trees: list[OptTree] | None = None,
        path: str | Path | None = None,
    ):
        self.config = config
        self.space = space
        self.tree = tree
        self.candidate_trees = candidate_trees or []
        self.predictor = predictor
        self.path = Path(path) if path else None

        self.observations: list[Observation] = []
        self.pseudo_points: list[PseudoPoint] = []
        self.pseudo_scopes: list[list] = []  # leaf signatures covered by the current generation
        self.round = 0
        self.status = READY
        self.outstanding: list[Condition] = []
        self.abandoned: list[Condition] = []
        self.consumed: set[tuple] = set()
        self.best_so_far: float | None = None
        self.rounds_without_improvement = 0
        self.history: list[dict] = []
        self.audit: list[dict] = []
        self.last_hyperparams: dict | None = None  # GP warm start carried across rounds
        self._enc_cache: dict[tuple, np.ndarray] = {}

    # ----- construction ----------------------------------------------------

    @classmethod
    def init(
        cls,
        config: CampaignConfig,
        predictor: PerformancePredictor | None = None,
        path: str | Path | None = None,
    ) -> "Campaign":
        space = build_space(config.manifest)
        audit: list[dict] = []
        provider = make_provider(config.provider, audit=audit)
        report = provider.report(config.manifest, config.task)
        tree = build_tree(space, report, c_p=config.c_p)
        candidates = [
            build_tree(space, KnowledgeReport.from_dict(r), c_p=config.c_p)
            for r in config.candidate_reports
        ]
        if predictor is None:
            predictor = cls._build_predictor(config, space)
        camp = cls(config, space, tree, predictor, candidate_trees=candidates, path=path)
        camp.audit.extend(audit)
        camp.audit.append({"event": "init", "report": report.to_dict(), "leaves": len(tree.leaves())})
        if (
            config.pseudo.enabled
            and predictor is not None
            and predictor.ready
            and config.pseudo.scope == "full"
        ):
            camp.pseudo_points = generate(
                predictor, space, camp._observed_keys(), created_round=0, cap=config.enumeration_cap
            )
            camp.pseudo_scopes = [["__full__"]]
        camp._persist()
        return camp

    @staticmethod
    def _build_predictor(config: CampaignConfig, space: SearchSpace) -> PerformancePredictor | None:
        spec = config.predictor
        if spec.get("type") == "table" and "csv" in spec:
            from .bench import load_table  # lazy: bench depends on campaign

            table = load_table(space, spec["csv"])
            return TableOracle(space, table)
        return make_predictor(spec, space)

    # ----- helpers ---------------------------------------------------------

    def _observed_keys(self) -> set[tuple]:
        return {o.condition.key() for o in self.observations}

    def _rng(self, tag: str, round_idx: int | None = None) -> np.random.Generator:
        r = self.round if round_idx is None else round_idx
        return derive_rng(self.config.seed, tag, r)

    def _validate_value(self, value: float) -> None:
        if not math.isfinite(value):
            raise CampaignError(f"observation value must be finite, got {value!r}")
        if self.config.objective_percent and not (0.0 <= value <= 100.0):
            raise CampaignError(f"percent objective out of range [0,100]: {value}")

    def _pool_keys(self) -> set[tuple]:
        """Keys still eligible for recommendation."""
        all_keys = {c.key() for c in enumerate_conditions(self.space, cap=self.config.enumeration_cap)}
        return all_keys - self.consumed

    def _encode(self, cond: Condition) -> np.ndarray:
        key = cond.key()
        vec = self._enc_cache.get(key)
        if vec is None:
            vec = encode(self.space, cond)
            self._enc_cache[key] = vec
        return vec

    # ----- round 0 ---------------------------------------------------------

    def initial_batch(self) -> list[Condition]:
        if self.round != 0 or self.observations:
            raise CampaignError("initial_batch is only valid at round 0 with no observations")
        if self.outstanding:
            return list(self.outstanding)
        q = self.config.batch_size
        if q > self.space.cardinality:
            raise CampaignError(
                f"batch size {q} exceeds space cardinality {self.space.cardinality}"
            )
        rng = self._rng("init", 0)
        if self.config.stratified_init:
            batch = stratified_batch(self.space, self.tree, q, rng)
        else:
            batch = _random_batch(self.space, q, rng, exclude=set())
        self.outstanding = batch
        self.consumed.update(c.key() for c in batch)
        self.status = AWAITING
        self.audit.append({"event": "initial_batch", "conditions": [c.as_dict() for c in batch]})
        self._persist()
        return list(batch)

    # ----- BO rounds -------------------------------------------------------

    def recommend(self) -> list[Condition]:
        if self.outstanding:
            return list(self.outstanding)
        if self.status in (CONVERGED, EXHAUSTED):
            return []
        if self.round == 0:
            return self.initial_batch()

        pool_keys = self._pool_keys()
        if not pool_keys:
            self.status = EXHAUSTED
            self._persist()
            return []

        q = self.config.batch_size
        leaf_rng = self._rng("leafsel")
        leaf_picks = batch_select(self.tree, q, leaf_rng)
        self._ensure_pseudo_coverage(leaf_picks)

        model = self._fit_surrogate()
        best_f = max(o.value for o in self.observations)
        kinds = self.config.kinds()

        counts: dict[int, int] = {}
        for leaf in leaf_picks:
            counts[leaf] = counts.get(leaf, 0) + 1

        picked: list[Condition] = []
        picked_keys: set[tuple] = set()
        kind_offset = 0
        for leaf in sorted(counts):
            sub = restrict(self.space, self.tree, leaf)
            pool = [
                c
                for c in enumerate_conditions(sub, cap=self.config.enumeration_cap)
                if c.key() in pool_keys and c.key() not in picked_keys
            ]
            take = min(counts[leaf], len(pool))
            if take == 0:
                continue
            X = np.array([self._encode(c) for c in pool])
            idx = gpmod.select_batch(
                model, X, take, kinds, self._rng(f"batch:{leaf}"), best_f, kind_offset=kind_offset
            )
            for i in idx:
                picked.append(pool[i])
                picked_keys.add(pool[i].key())
            kind_offset += take

        if len(picked) < q:  # leaf pools ran dry; fill from the global remainder
            rest = [
                c
                for c in enumerate_conditions(self.space, cap=self.config.enumeration_cap)
                if c.key() in pool_keys and c.key() not in picked_keys
            ]
            take = min(q - len(picked), len(rest))
            if take > 0:
                X = np.array([self._encode(c) for c in rest])
                idx = gpmod.select_batch(
                    model, X, take, kinds, self._rng("batch:overflow"), best_f, kind_offset=kind_offset
                )
                for i in idx:
                    picked.append(rest[i])
                    picked_keys.add(rest[i].key())

        if not picked:
            self.status = EXHAUSTED
            self._persist()
            return []

        self.outstanding = picked
        self.consumed.update(picked_keys)
        self.status = AWAITING
        self.audit.append(
            {
                "event": "recommend",
                "round": self.round,
                "leaves": sorted(counts.items()),
                "gp": model.diagnostics,
                "conditions": [c.as_dict() for c in picked],
            }
        )
        self._persist()
        return list(picked)

    def suggest(self) -> list[Condition]:
        """Round-0 initial batch or a BO recommendation; idempotent until ingest."""
        if self.round == 0 and not self.observations:
            return self.initial_batch()
        return self.recommend()

    def _fit_surrogate(self) -> gpmod.GPModel:
        xs: list[np.ndarray] = []
        ys: list[float] = []
        ws: list[float] = []
        for o in self.observations:
            xs.append(self._encode(o.condition))
            ys.append(o.value)
            ws.append(1.0)
        if self.config.pseudo.enabled:
            w0 = self.config.pseudo.initial_weight
            for p in self.pseudo_points:
                if p.alive:
                    xs.append(self._encode(p.condition))
                    ys.append(p.predicted)
                    ws.append(w0)
        X = np.array(xs)
        if len(xs) >= 2:
            warm = None
            if self.last_hyperparams is not None:
                warm = gpmod.Hyperparams(
                    lengthscales=np.asarray(self.last_hyperparams["lengthscales"], dtype=float),
                    signal_variance=self.last_hyperparams["signal_variance"],
                    noise_variance=self.last_hyperparams["noise_variance"],
                    constant_mean=self.last_hyperparams["constant_mean"],
                )
            # warm-started or data-rich refits converge in one start; iteration
            # budget shrinks with n since large fits are memory-bound
            n = len(xs)
            cfg = gpmod.FitConfig(
                seed=_fit_seed(self.config.seed, "gp", self.round),
                restarts=1 if (warm is not None and n > 200) or n > 450 else 2,
                max_iter=100 if n <= 256 else (50 if n <= 450 else 40),
            )
            model = gpmod.fit(X, ys, ws, cfg, warm_start=warm)
            self.last_hyperparams = model.hyperparams.to_dict()
            return model
        return gpmod.default_model(X, ys, ws)

    def _ensure_pseudo_coverage(self, leaf_ids: Iterable[int]) -> None:
        cfg = self.config.pseudo
        if not cfg.enabled or self.predictor is None or not self.predictor.ready:
            return
        if cfg.scope == "full":
            if not self.pseudo_points:
                self.pseudo_points = generate(
                    self.predictor, self.space, self._observed_keys(),
                    created_round=self.round, cap=self.config.enumeration_cap,
                )
                self.pseudo_scopes = [["__full__"]]
            return
        covered = {self._scope_key(sig) for sig in self.pseudo_scopes}
        for leaf in sorted(set(leaf_ids)):
            sig = _signature_doc(self.tree, leaf)
            if self._scope_key(sig) in covered:
                continue
            sub = restrict(self.space, self.tree, leaf)
            self.pseudo_points.extend(
                generate(
                    self.predictor, sub, self._observed_keys(),
                    created_round=self.round, cap=self.config.enumeration_cap,
                )
            )
            self.pseudo_scopes.append(sig)
            covered.add(self._scope_key(sig))

    @staticmethod
    def _scope_key(sig: list) -> str:
        return canonical_json(sig)

    # ----- ingest ----------------------------------------------------------

    def ingest(self, results: Sequence[tuple[Condition, float]], external: bool = False) -> dict:
        """Per-round update; `results` pairs conditions with measured values."""
        if not results:
            raise CampaignError("ingest requires at least one result")
        allow_external = external or self.config.allow_external
        outstanding_keys = {c.key() for c in self.outstanding}
        seen: set[tuple] = set()
        observed = self._observed_keys()
        for cond, value in results:
            if not self.space.contains(cond):
                raise CampaignError(f"condition not in space: {cond.as_dict()}")
            key = cond.key()
            if key in seen:
                raise CampaignError(f"duplicate condition in results: {cond.as_dict()}")
            seen.add(key)
            if key in observed:
                raise CampaignError(f"condition already measured: {cond.as_dict()}")
            if key not in outstanding_keys and not allow_external:
                raise CampaignError(
                    f"condition was never recommended (pass external data flag): {cond.as_dict()}"
                )
            self._validate_value(value)

        obs_round = self.round
        new_obs = [Observation(condition=c, value=float(v), round=obs_round) for c, v in results]
        self.observations.extend(new_obs)
        self.consumed.update(o.condition.key() for o in new_obs)

        abandoned = [c for c in self.outstanding if c.key() not in seen]
        if abandoned:
            self.abandoned.extend(abandoned)
            self.audit.append(
                {"event": "abandoned", "round": obs_round, "conditions": [c.as_dict() for c in abandoned]}
            )
        self.outstanding = []

        # (1) retrain the data module, regenerate pseudo-labels on current scopes
        retrained = False
        if self.predictor is not None and self.config.pseudo.enabled:
            try:
                self.predictor.fit([(o.condition, o.value) for o in self.observations])
                retrained = True
            except PredictorError:
                raise
            self._regenerate_pseudo()

        # (2) backpropagate each experimental reward along its leaf path
        for o in new_obs:
            leaf = self.tree.leaf_for(o.condition)
            backpropagate(self.tree, self.tree.path_to(leaf), o.value)
        swap = self._maybe_reselect_tree()

        # (3) pseudo lifecycle: local removal per new observation, then one global pass
        locally_retired = 0
        globally_retired = 0
        if self.config.pseudo.enabled and self.predictor is not None and self.predictor.ready:
            for o in new_obs:
                emb = self.predictor.embed(o.condition)
                locally_retired += local_removal(
                    self.pseudo_points, emb, self.config.pseudo.similarity_threshold
                )
            globally_retired = global_removal(
                self.pseudo_points, self.config.pseudo.global_discard_fraction, self._rng("gremove")
            )

        self.round += 1
        batch_best = max(o.value for o in new_obs)
        previous_best = self.best_so_far
        self.best_so_far = batch_best if previous_best is None else max(previous_best, batch_best)
        if previous_best is not None and self.best_so_far <= previous_best:
            self.rounds_without_improvement += 1
        else:
            self.rounds_without_improvement = 0

        self.status = READY
        if self.config.target_threshold is not None and self.best_so_far >= self.config.target_threshold:
            self.status = CONVERGED
        elif (
            self.config.patience is not None
            and self.rounds_without_improvement >= self.config.patience
        ):
            self.status = CONVERGED
        elif self.round >= self.config.max_rounds or not self._pool_keys():
            self.status = EXHAUSTED

        self.history.append(
            {
                "round": self.round,
                "batch_values": [o.value for o in new_obs],
                "best_so_far": self.best_so_far,
                "locally_retired": locally_retired,
                "globally_retired": globally_retired,
                "abandoned": len(abandoned),
            }
        )
        self.audit.append(
            {
                "event": "ingest",
                "round": obs_round,
                "n_results": len(new_obs),
                "retrained": retrained,
                "tree_swapped": swap,
                "locally_retired": locally_retired,
                "globally_retired": globally_retired,
                "status": self.status,
            }
        )
        self._persist()
        return {
            "round": self.round,
            "best_so_far": self.best_so_far,
            "status": self.status,
            "locally_retired": locally_retired,
            "globally_retired": globally_retired,
            "abandoned": len(abandoned),
        }

    def _regenerate_pseudo(self) -> None:
        """Fresh pseudo generation over the scopes currently in play."""
        cfg = self.config.pseudo
        if self.predictor is None or not self.predictor.ready:
            return
        observed = self._observed_keys()
        next_round = self.round + 1
        points: list[PseudoPoint] = []
        kept_scopes: list[list] = []
        if cfg.scope == "full":
            points = generate(
                self.predictor, self.space, observed, created_round=next_round,
                cap=self.config.enumeration_cap,
            )
            kept_scopes = [["__full__"]]
        else:
            sigs = {self._scope_key(sig): sig for sig in self.pseudo_scopes}
            # scopes also include leaves of every observation (the regions in play)
            for o in self.observations:
                try:
                    leaf = self.tree.leaf_for(o.condition)
                except TreeError:
                    continue
                sig = _signature_doc(self.tree, leaf)
                sigs.setdefault(self._scope_key(sig), sig)
            for key in sorted(sigs):
                sig = sigs[key]
                leaf = _leaf_with_signature(self.tree, sig)
                if leaf is None:
                    continue  # structure changed and this region no longer exists
                sub = restrict(self.space, self.tree, leaf)
                points.extend(
                    generate(
                        self.predictor, sub, observed, created_round=next_round,
                        cap=self.config.enumeration_cap,
                    )
                )
                kept_scopes.append(sig)
        self.pseudo_points = points
        self.pseudo_scopes = kept_scopes

    def _maybe_reselect_tree(self) -> bool:
        if not self.candidate_trees:
            return False
        live = [p for p in self.pseudo_points if p.alive]
        if not live:
            return False
        candidates = [self.tree] + self.candidate_trees
        winner, scores = select_tree(candidates, live)
        self.audit.append({"event": "tree_scores", "round": self.round, "scores": scores})
        if winner is self.tree:
            return False
        remapped = _remap_statistics(self.tree, winner)
        self.candidate_trees = [t for t in candidates if t is not winner]
        self.tree = winner
        self.audit.append({"event": "tree_swap", "round": self.round, "stats_remapped": remapped})
        return True

    # ----- persistence -----------------------------------------------------

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": self.config.to_dict(),
            "tree": self.tree.to_dict(),
            "candidate_trees": [t.to_dict() for t in self.candidate_trees],
            "observations": [
                {"condition": o.condition.as_dict(), "value": o.value, "round": o.round}
                for o in self.observations
            ],
            "pseudo_points": [p.to_dict() for p in self.pseudo_points],
            "pseudo_scopes": self.pseudo_scopes,
            "round": self.round,
            "status": self.status,
            "outstanding": [c.as_dict() for c in self.outstanding],
            "abandoned": [c.as_dict() for c in self.abandoned],
            "best_so_far": self.best_so_far,
            "rounds_without_improvement": self.rounds_without_improvement,
            "history": self.history,
            "audit": self.audit,
            "predictor_state": (
                self.predictor.get_state() if isinstance(self.predictor, RidgePredictor) else None
            ),
            "last_hyperparams": self.last_hyperparams,
        }

    def _persist(self) -> None:
        if self.path is not None:
            save(self, self.path)

    # ----- views (read-only, JSON-safe) -------------------------------------

    def status_view(self) -> dict[str, Any]:
        return {
            "round": self.round,
            "status": self.status,
            "best_so_far": self.best_so_far,
            "n_observations": len(self.observations),
            "n_pseudo_live": sum(1 for p in self.pseudo_points if p.alive),
            "outstanding": [c.as_dict() for c in self.outstanding],
            "target_threshold": self.config.target_threshold,
            "batch_size": self.config.batch_size,
            "max_rounds": self.config.max_rounds,
        }

    def tree_view(self) -> dict[str, Any]:
        nodes = []
        for nid in sorted(self.tree.nodes):
            nd = self.tree.nodes[nid]
            nodes.append(
                {
                    "id": nd.id,
                    "level": nd.level,
                    "variable": nd.variable,
                    "subset": nd.subset,
                    "parent": nd.parent,
                    "children": list(nd.children),
                    "n": nd.n,
                    "q": nd.q,
                    "mean": nd.mean,
                }
            )
        return {"ranking": list(self.tree.ranking), "nodes": nodes}

    def trajectory_view(self) -> dict[str, Any]:
        return {
            "rounds": self.history,
            "target_threshold": self.config.target_threshold,
            "best_so_far": self.best_so_far,
        }


# ----- initial sampling -----------------------------------------------------

def stratified_batch(
    space: SearchSpace, tree: OptTree, q: int, rng: np.random.Generator
) -> list[Condition]:
    """q distinct conditions with per-variable subset usage balanced within +-1.

    Builds one balanced value column per variable, then repairs duplicate rows
    by swapping entries within a column (swaps preserve the balance exactly).
    """
    names = space.variable_names
    for restart in range(50):
        columns: dict[str, list] = {}
        for var in space.variables:
            allowed = space.allowed_values(var.name)
            cmap = tree.clusterings.get(var.name, {})
            groups: dict[int, list] = {}
            for v in allowed:
                groups.setdefault(cmap.get(value_key(v), 0), []).append(v)
            subset_order = sorted(groups)
            order = list(subset_order)
            rng.shuffle(order)
            shuffled_vals = {}
            for s in subset_order:
                vals = list(groups[s])
                rng.shuffle(vals)
                shuffled_vals[s] = vals
            col = []
            counters = {s: 0 for s in subset_order}
            for i in range(q):
                s = order[i % len(order)]
                vals = shuffled_vals[s]
                col.append(vals[counters[s] % len(vals)])
                counters[s] += 1
            rng.shuffle(col)
            columns[var.name] = col

        rows = [tuple(columns[n][i] for n in names) for i in range(q)]
        ok = _repair_duplicates(columns, names, q, rng)
        if ok:
            rows = [tuple(columns[n][i] for n in names) for i in range(q)]
            return [space.condition(dict(zip(names, row))) for row in rows]
    raise CampaignError("could not construct a duplicate-free stratified batch")


def _repair_duplicates(
    columns: dict[str, list], names: list[str], q: int, rng: np.random.Generator
) -> bool:
    for _ in range(50 * q):
        seen: dict[tuple, int] = {}
        dup: int | None = None
        for i in range(q):
            row = tuple(columns[n][i] for n in names)
            if row in seen:
                dup = i
                break
            seen[row] = i
        if dup is None:
            return True
        var = names[int(rng.integers(len(names)))]
        j = int(rng.integers(q))
        if j == dup:
            continue
        columns[var][dup], columns[var][j] = columns[var][j], columns[var][dup]
    return False


def _random_batch(
    space: SearchSpace, q: int, rng: np.random.Generator, exclude: set[tuple]
) -> list[Condition]:
    """q distinct uniform-random conditions avoiding excluded keys."""
    out: list[Condition] = []
    keys = set(exclude)
    names = space.variable_names
    pools = [space.allowed_values(n) for n in names]
    available = space.cardinality - len(exclude)
    if q > available:
        raise CampaignError(f"batch size {q} exceeds remaining pool {available}")
    guard = 0
    while len(out) < q:
        guard += 1
        if guard > 1000 * q:  # dense exclusion: fall back to enumerating the remainder
            remaining = [
                c for c in enumerate_conditions(space) if c.key() not in keys
            ]
            idx = rng.choice(len(remaining), size=q - len(out), replace=False)
            out.extend(remaining[i] for i in sorted(int(x) for x in idx))
            break
        row = {n: pool[int(rng.integers(len(pool)))] for n, pool in zip(names, pools)}
        cond = space.condition(row)
        if cond.key() in keys:
            continue
        keys.add(cond.key())
        out.append(cond)
    return out


# ----- tree swap support ------------------------------------------------------

def _signature_doc(tree: OptTree, leaf_id: int) -> list:
    sig = tree.leaf_signature(leaf_id)
    return [[var, sorted(vals)] for var, vals in sig]


def _leaf_with_signature(tree: OptTree, sig_doc: list) -> int | None:
    want = tuple(sorted((var, frozenset(vals)) for var, vals in sig_doc))
    for leaf in tree.leaves():
        if tree.leaf_signature(leaf) == want:
            return leaf
    return None


def _remap_statistics(old: OptTree, new: OptTree) -> bool:
    """Carry leaf statistics across a structure swap where leaf regions are identical.

    Internal nodes are rebuilt by summation; when no leaf matches, the new tree
    keeps zeroed statistics (documented reset behavior).
    """
    old_by_sig = {old.leaf_signature(l): old.nodes[l] for l in old.leaves()}
    matched = False
    for nd in new.nodes.values():
        nd.n = 0
        nd.q = 0.0
    for leaf in new.leaves():
        src = old_by_sig.get(new.leaf_signature(leaf))
        if src is None or src.n == 0:
            continue
        matched = True
        for nid in new.path_to(leaf):
            new.nodes[nid].n += src.n
            new.nodes[nid].q += src.q
    if not matched:
        for nd in new.nodes.values():
            nd.n = 0
            nd.q = 0.0
    return matched


# ----- persistence ------------------------------------------------------------

def save(campaign: Campaign, path: str | Path) -> None:
    """Atomic write of versioned, checksummed campaign state."""
    payload = campaign.to_dict()
    body = canonical_json(payload)
    doc = {"version": STATE_VERSION, "checksum": sha256_hex(body), "state": payload}
    atomic_write_text(path, canonical_json(doc))


def load(path: str | Path, predictor: PerformancePredictor | None = None) -> Campaign:
    """Load and validate a state file; raises on version or checksum mismatch."""
    raw = Path(path).read_text(encoding="utf-8")
    try:
        doc = json.loads(raw)
    except json.JSONDecodeError as e:
        raise CampaignError(f"corrupt state file {path}: {e}") from e
    if doc.get("version") != STATE_VERSION:
        raise CampaignError(
            f"state version {doc.get('version')!r} is not supported (expected {STATE_VERSION})"
        )
    body = canonical_json(doc["state"])
    if sha256_hex(body) != doc.get("checksum"):
        raise CampaignError(f"checksum mismatch in state file {path}")

    d = doc["state"]
    config = CampaignConfig.from_dict(d["config"])
    space = build_space(config.manifest)
    tree = OptTree.from_dict(d["tree"])
    candidates = [OptTree.from_dict(t) for t in d.get("candidate_trees", [])]
    if predictor is None:
        predictor = Campaign._build_predictor(config, space)
    if isinstance(predictor, RidgePredictor) and d.get("predictor_state") is not None:
        predictor.set_state(d["predictor_state"])
    camp = Campaign(config, space, tree, predictor, candidate_trees=candidates, path=path)
    camp.observations = [
        Observation(condition=space.condition(o["condition"]), value=float(o["value"]), round=int(o["round"]))
        for o in d["observations"]
    ]
    camp.pseudo_points = [
        PseudoPoint(
            condition=space.condition(p["condition"]),
            predicted=float(p["predicted"]),
            embedding=np.asarray(p["embedding"], dtype=float),
            alive=bool(p["alive"]),
            created_round=int(p["created_round"]),
        )
        for p in d["pseudo_points"]
    ]
    camp.pseudo_scopes = d.get("pseudo_scopes", [])
    camp.round = int(d["round"])
    camp.status = d["status"]
    camp.outstanding = [space.condition(c) for c in d["outstanding"]]
    camp.abandoned = [space.condition(c) for c in d["abandoned"]]
    camp.consumed = (
        {c.key() for c in camp.outstanding}
        | {c.key() for c in camp.abandoned}
        | {o.condition.key() for o in camp.observations}
    )
    camp.best_so_far = d["best_so_far"]
    camp.rounds_without_improvement = int(d["rounds_without_improvement"])
    camp.history = d["history"]
    camp.audit = d["audit"]
    camp.last_hyperparams = d.get("last_hyperparams")
    return camp
