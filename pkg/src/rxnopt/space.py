"""Variable space model: specs, conditions, enumeration, and numeric encoding.

A space is a finite product of discrete variables. Categorical variables carry
candidate descriptors (property vectors + a subset index); numeric variables
carry ordered level lists. Everything here is immutable after construction.
"""
from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Iterator, Mapping

import numpy as np

DEFAULT_ENUMERATION_CAP = 10_000_000

Value = str | float


class SpaceError(ValueError):
    """Invalid manifest, condition, restriction, or enumeration request."""


def level_key(value: float) -> str:
    """Canonical string key for a numeric level, used in JSON maps and reports."""
    return repr(float(value))


def value_key(value: Value) -> str:
    return value if isinstance(value, str) else level_key(value)


@dataclass(frozen=True)
class CandidateSpec:
    """One categorical option: id, physicochemical properties, cluster subset."""

    id: str
    properties: dict[str, float]
    subset: int


@dataclass(frozen=True)
class VariableSpec:
    """A single reaction variable, categorical or numeric-discrete."""

    name: str
    kind: str  # "categorical" | "numeric"
    importance_rank: int
    candidates: tuple[CandidateSpec, ...] = ()
    levels: tuple[float, ...] = ()
    level_subsets: tuple[int, ...] = ()
    unit: str = ""

    def values(self) -> list[Value]:
        if self.kind == "categorical":
            return [c.id for c in self.candidates]
        return list(self.levels)

    @property
    def n_values(self) -> int:
        return len(self.candidates) if self.kind == "categorical" else len(self.levels)

    def subset_of(self, value: Value) -> int:
        if self.kind == "categorical":
            for c in self.candidates:
                if c.id == value:
                    return c.subset
            raise SpaceError(f"variable {self.name!r}: unknown candidate {value!r}")
        v = float(value)
        for lvl, sub in zip(self.levels, self.level_subsets):
            if lvl == v:
                return sub
        raise SpaceError(f"variable {self.name!r}: unknown level {value!r}")

    def subset_count(self) -> int:
        if self.kind == "categorical":
            return max(c.subset for c in self.candidates) + 1
        return max(self.level_subsets) + 1

    def encode_width(self) -> int:
        return len(self.candidates) if self.kind == "categorical" else 1


@dataclass(frozen=True)
class Condition:
    """One full assignment of values, stored in variable-importance order."""

    assignments: tuple[tuple[str, Value], ...]

    def as_dict(self) -> dict[str, Value]:
        return dict(self.assignments)

    def value(self, name: str) -> Value:
        for k, v in self.assignments:
            if k == name:
                return v
        raise KeyError(name)

    def key(self) -> tuple[Value, ...]:
        return tuple(v for _, v in self.assignments)


@dataclass(frozen=True)
class Observation:
    """A real measured outcome for one condition."""

    condition: Condition
    value: float
    round: int = 0


@dataclass(frozen=True)
class SearchSpace:
    """Ordered variables (by importance rank) plus optional value restrictions.

    Restrictions map variable name -> frozenset of canonical value keys; a
    restricted space is always a sub-product of its parent.
    """

    variables: tuple[VariableSpec, ...]
    restrictions: tuple[tuple[str, frozenset[str]], ...] = ()

    def variable(self, name: str) -> VariableSpec:
        for v in self.variables:
            if v.name == name:
                return v
        raise SpaceError(f"unknown variable {name!r}")

    @property
    def variable_names(self) -> list[str]:
        return [v.name for v in self.variables]

    def _restriction_map(self) -> dict[str, frozenset[str]]:
        return dict(self.restrictions)

    def allowed_values(self, name: str) -> list[Value]:
        var = self.variable(name)
        vals = var.values()
        allowed = self._restriction_map().get(name)
        if allowed is None:
            return vals
        return [v for v in vals if value_key(v) in allowed]

    @property
    def cardinality(self) -> int:
        n = 1
        for v in self.variables:
            n *= len(self.allowed_values(v.name))
        return n

    def condition(self, assignments: Mapping[str, Value]) -> Condition:
        """Validate and normalize a mapping into a Condition of this space."""
        extra = set(assignments) - set(self.variable_names)
        if extra:
            raise SpaceError(f"unknown variables in condition: {sorted(extra)}")
        pairs: list[tuple[str, Value]] = []
        for var in self.variables:
            if var.name not in assignments:
                raise SpaceError(f"condition missing variable {var.name!r}")
            raw = assignments[var.name]
            val: Value = float(raw) if var.kind == "numeric" else str(raw)
            if not any(value_key(val) == value_key(a) for a in self.allowed_values(var.name)):
                raise SpaceError(
                    f"value {raw!r} not allowed for variable {var.name!r}"
                )
            pairs.append((var.name, val))
        return Condition(tuple(pairs))

    def contains(self, cond: Condition) -> bool:
        try:
            self.condition(cond.as_dict())
            return True
        except SpaceError:
            return False

    def encode_dim(self) -> int:
        return sum(v.encode_width() for v in self.variables)

    def to_manifest(self) -> dict[str, Any]:
        """Manifest dict that round-trips through build_space (restrictions excluded)."""
        out = []
        for v in self.variables:
            entry: dict[str, Any] = {"name": v.name, "rank": v.importance_rank, "kind": v.kind}
            if v.kind == "categorical":
                entry["candidates"] = [
                    {"id": c.id, "properties": dict(c.properties), "subset": c.subset}
                    for c in v.candidates
                ]
            else:
                entry["levels"] = list(v.levels)
                entry["subsets"] = list(v.level_subsets)
                if v.unit:
                    entry["unit"] = v.unit
            out.append(entry)
        return {"variables": out}


def build_space(manifest: Mapping[str, Any] | str | Path) -> SearchSpace:
    """Parse and validate a space manifest (dict, JSON text path) into a SearchSpace."""
    if isinstance(manifest, (str, Path)):
        manifest = json.loads(Path(manifest).read_text(encoding="utf-8"))
    if not isinstance(manifest, Mapping) or "variables" not in manifest:
        raise SpaceError("manifest must be an object with a 'variables' array")
    raw_vars = manifest["variables"]
    if not raw_vars:
        raise SpaceError("manifest has no variables")

    specs: list[VariableSpec] = []
    for rv in raw_vars:
        name = rv.get("name")
        if not name:
            raise SpaceError("variable without a name")
        kind = rv.get("kind")
        rank = rv.get("rank")
        if not isinstance(rank, int) or rank < 1:
            raise SpaceError(f"variable {name!r}: rank must be a positive integer")
        if kind == "categorical":
            cands = rv.get("candidates") or []
            if not cands:
                raise SpaceError(f"variable {name!r}: empty candidate list")
            ids = [c.get("id") for c in cands]
            if len(set(ids)) != len(ids):
                raise SpaceError(f"variable {name!r}: duplicate candidate ids")
            parsed = []
            key_sets = set()
            for c in cands:
                if "subset" not in c:
                    raise SpaceError(
                        f"variable {name!r}: candidate {c.get('id')!r} missing subset index"
                    )
                props = {k: float(v) for k, v in (c.get("properties") or {}).items()}
                key_sets.add(frozenset(props))
                parsed.append(CandidateSpec(id=str(c["id"]), properties=props, subset=int(c["subset"])))
            if len(key_sets) > 1:
                raise SpaceError(f"variable {name!r}: candidates carry differing property keys")
            _check_contiguous(name, [c.subset for c in parsed])
            specs.append(
                VariableSpec(name=name, kind="categorical", importance_rank=rank, candidates=tuple(parsed))
            )
        elif kind == "numeric":
            levels = [float(x) for x in (rv.get("levels") or [])]
            if not levels:
                raise SpaceError(f"variable {name!r}: empty level list")
            if len(set(levels)) != len(levels):
                raise SpaceError(f"variable {name!r}: duplicate levels")
            subsets = rv.get("subsets")
            if subsets is None:
                subsets = list(range(len(levels)))
            if len(subsets) != len(levels):
                raise SpaceError(f"variable {name!r}: subsets must parallel levels")
            _check_contiguous(name, [int(s) for s in subsets])
            specs.append(
                VariableSpec(
                    name=name,
                    kind="numeric",
                    importance_rank=rank,
                    levels=tuple(levels),
                    level_subsets=tuple(int(s) for s in subsets),
                    unit=str(rv.get("unit", "")),
                )
            )
        else:
            raise SpaceError(f"variable {name!r}: kind must be 'categorical' or 'numeric'")

    ranks = sorted(v.importance_rank for v in specs)
    if ranks != list(range(1, len(specs) + 1)):
        raise SpaceError(
            f"ranks not a permutation of 1..{len(specs)}: "
            + ", ".join(f"{v.name}={v.importance_rank}" for v in specs)
        )
    names = [v.name for v in specs]
    if len(set(names)) != len(names):
        raise SpaceError("duplicate variable names")
    specs.sort(key=lambda v: v.importance_rank)
    return SearchSpace(variables=tuple(specs))


def _check_contiguous(name: str, subsets: list[int]) -> None:
    got = set(subsets)
    if got != set(range(max(got) + 1)):
        raise SpaceError(f"variable {name!r}: subset indices must cover 0..k-1, got {sorted(got)}")


def enumerate_conditions(
    space: SearchSpace, cap: int = DEFAULT_ENUMERATION_CAP
) -> Iterator[Condition]:
    """Yield every condition exactly once, lexicographic in (variable, value) order."""
    card = space.cardinality
    if card > cap:
        raise SpaceError(f"cardinality {card} exceeds enumeration cap {cap}")
    names = space.variable_names
    pools = [space.allowed_values(n) for n in names]
    for combo in itertools.product(*pools):
        yield Condition(tuple(zip(names, combo)))


def encode(space: SearchSpace, cond: Condition) -> np.ndarray:
    """Encode a condition: one-hot per categorical block, min-max scalar per numeric.

    Numeric levels normalize against the variable's full level list, so the
    encoding of a surviving level is stable under subspace restriction.
    """
    if not space.contains(cond):
        raise SpaceError(f"condition not in space: {cond.as_dict()}")
    parts: list[np.ndarray] = []
    vals = cond.as_dict()
    for var in space.variables:
        v = vals[var.name]
        if var.kind == "categorical":
            block = np.zeros(len(var.candidates))
            idx = [c.id for c in var.candidates].index(v)
            block[idx] = 1.0
            parts.append(block)
        else:
            lo, hi = min(var.levels), max(var.levels)
            x = 0.5 if hi == lo else (float(v) - lo) / (hi - lo)
            parts.append(np.array([x]))
    return np.concatenate(parts)


def decode(space: SearchSpace, vec: np.ndarray) -> Condition:
    """Invert encode: argmax per one-hot block, nearest level per numeric scalar."""
    vec = np.asarray(vec, dtype=float)
    if vec.shape != (space.encode_dim(),):
        raise SpaceError(f"expected vector of dim {space.encode_dim()}, got {vec.shape}")
    pairs: list[tuple[str, Value]] = []
    pos = 0
    for var in space.variables:
        w = var.encode_width()
        block = vec[pos : pos + w]
        pos += w
        if var.kind == "categorical":
            pairs.append((var.name, var.candidates[int(np.argmax(block))].id))
        else:
            lo, hi = min(var.levels), max(var.levels)
            raw = lo if hi == lo else lo + block[0] * (hi - lo)
            nearest = min(var.levels, key=lambda l: abs(l - raw))
            pairs.append((var.name, nearest))
    return Condition(tuple(pairs))


def restrict_space(space: SearchSpace, allowed: Mapping[str, Iterable[Value]]) -> SearchSpace:
    """Sub-space keeping only the given values per variable (others untouched)."""
    current = space._restriction_map()
    merged: dict[str, frozenset[str]] = dict(current)
    for name, vals in allowed.items():
        var = space.variable(name)
        keys = frozenset(value_key(float(v) if var.kind == "numeric" else v) for v in vals)
        existing_keys = {value_key(v) for v in space.allowed_values(name)}
        unknown = keys - existing_keys
        if unknown:
            raise SpaceError(f"variable {name!r}: restriction references unknown values {sorted(unknown)}")
        merged[name] = keys
    out = SearchSpace(variables=space.variables, restrictions=tuple(sorted(merged.items())))
    if out.cardinality < 1:
        raise SpaceError("restriction produced an empty space")
    return out
