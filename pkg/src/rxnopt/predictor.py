"""Performance predictors: pseudo-label and embedding sources for conditions.

Three interchangeable implementations sit behind one interface: a closed-form
ridge regressor over one-hot + property features, a lookup-table oracle for
benchmarks, and a JSON-over-HTTP client for an externally trained model.
"""
from __future__ import annotations

import json
import math
from pathlib import Path
from typing import Any, Mapping, Protocol, Sequence

import numpy as np

from .space import Condition, SearchSpace, encode
from .util import canonical_json, sha256_hex


class PredictorError(RuntimeError):
    """Bad inputs, missing table rows, or remote transport/schema failures."""


class PerformancePredictor(Protocol):
    def fit(self, labeled: Sequence[tuple[Condition, float]]) -> None: ...
    def predict(self, conditions: Sequence[Condition]) -> list[float]: ...
    def embed(self, condition: Condition) -> np.ndarray: ...
    @property
    def ready(self) -> bool: ...


class FeatureMap:
    """Condition features: the space encoding augmented with z-scored candidate properties.

    Property columns are standardized per variable over that variable's
    candidates, so molecular descriptors on wildly different scales coexist.
    """

    def __init__(self, space: SearchSpace):
        self.space = space
        self._norms: dict[str, tuple[list[str], np.ndarray, np.ndarray]] = {}
        dim = space.encode_dim()
        for var in space.variables:
            if var.kind != "categorical":
                continue
            keys = sorted(var.candidates[0].properties)
            if not keys:
                continue
            mat = np.array([[c.properties[k] for k in keys] for c in var.candidates])
            mu = mat.mean(axis=0)
            sd = mat.std(axis=0)
            sd[sd == 0] = 1.0
            self._norms[var.name] = (keys, mu, sd)
            dim += len(keys)
        self.dim = dim

    def features(self, cond: Condition) -> np.ndarray:
        parts = [encode(self.space, cond)]
        for var in self.space.variables:
            norm = self._norms.get(var.name)
            if norm is None:
                continue
            keys, mu, sd = norm
            cand = next(c for c in var.candidates if c.id == cond.value(var.name))
            raw = np.array([cand.properties[k] for k in keys])
            parts.append((raw - mu) / sd)
        return np.concatenate(parts)

    def matrix(self, conditions: Sequence[Condition]) -> np.ndarray:
        return np.array([self.features(c) for c in conditions])

    def unit_embedding(self, cond: Condition) -> np.ndarray:
        v = self.features(cond)
        norm = float(np.linalg.norm(v))
        if norm == 0:
            raise PredictorError(f"zero feature vector for condition {cond.as_dict()}")
        return v / norm


def ridge_solve(X: np.ndarray, y: np.ndarray, lam: float) -> tuple[np.ndarray, float]:
    """Exact ridge with an unpenalized intercept, via centered normal equations."""
    if lam <= 0:
        raise PredictorError("ridge lambda must be positive")
    if not np.all(np.isfinite(y)):
        raise PredictorError("targets must be finite")
    x_mean = X.mean(axis=0)
    y_mean = float(y.mean())
    Xc = X - x_mean
    theta = np.linalg.solve(Xc.T @ Xc + lam * np.eye(X.shape[1]), Xc.T @ (y - y_mean))
    intercept = y_mean - float(x_mean @ theta)
    return theta, intercept


class RidgePredictor:
    """L2-regularized linear model over augmented condition features."""

    def __init__(self, space: SearchSpace, lam: float = 1e-2):
        self.fmap = FeatureMap(space)
        self.lam = float(lam)
        self.theta: np.ndarray | None = None
        self.intercept: float = 0.0

    @property
    def ready(self) -> bool:
        return self.theta is not None

    def fit(self, labeled: Sequence[tuple[Condition, float]]) -> None:
        if not labeled:
            raise PredictorError("fit requires at least one labeled point")
        X = self.fmap.matrix([c for c, _ in labeled])
        y = np.array([v for _, v in labeled], dtype=float)
        self.theta, self.intercept = ridge_solve(X, y, self.lam)

    def predict(self, conditions: Sequence[Condition]) -> list[float]:
        if self.theta is None:
            raise PredictorError("predict before fit")
        X = self.fmap.matrix(conditions)
        return [float(v) for v in X @ self.theta + self.intercept]

    def embed(self, condition: Condition) -> np.ndarray:
        return self.fmap.unit_embedding(condition)

    def get_state(self) -> dict[str, Any]:
        return {
            "lambda": self.lam,
            "theta": None if self.theta is None else [float(t) for t in self.theta],
            "intercept": self.intercept,
        }

    def set_state(self, state: Mapping[str, Any]) -> None:
        self.lam = float(state["lambda"])
        self.theta = None if state["theta"] is None else np.asarray(state["theta"], dtype=float)
        self.intercept = float(state["intercept"])


class TableOracle:
    """Perfect predictor backed by a complete lookup table; fit is a no-op."""

    def __init__(self, space: SearchSpace, table: Mapping[tuple, float]):
        self.space = space
        self.table = dict(table)
        self.fmap = FeatureMap(space)

    @property
    def ready(self) -> bool:
        return True

    def fit(self, labeled: Sequence[tuple[Condition, float]]) -> None:
        pass  # the table is the ground truth; labels cannot change it

    def predict(self, conditions: Sequence[Condition]) -> list[float]:
        out = []
        for c in conditions:
            key = c.key()
            if key not in self.table:
                raise PredictorError(f"condition missing from table: {c.as_dict()}")
            out.append(float(self.table[key]))
        return out

    def embed(self, condition: Condition) -> np.ndarray:
        return self.fmap.unit_embedding(condition)


class RemotePredictor:
    """HTTP client for an external scoring service, with record/replay support.

    Wire format: POST {endpoint}/predict with {"conditions": [assignments...],
    "want_embeddings": bool} -> {"values": [...], "embeddings": [[...]]};
    POST {endpoint}/fit with {"labeled": [{"condition": ..., "value": ...}]}.
    In replay mode responses come from the recorded exchange log instead of the
    network, keyed by request hash.
    """

    def __init__(
        self,
        space: SearchSpace,
        endpoint: str,
        credentials: str = "",
        timeout: float = 30.0,
        mode: str = "live",
        log: list[dict] | None = None,
        log_path: str | Path | None = None,
    ):
        if mode not in ("live", "replay"):
            raise PredictorError(f"unknown mode {mode!r}")
        self.space = space
        self.endpoint = endpoint.rstrip("/")
        self.credentials = credentials
        self.timeout = timeout
        self.mode = mode
        self.log: list[dict] = log if log is not None else []
        self.log_path = Path(log_path) if log_path else None
        if mode == "replay" and self.log_path is not None and self.log_path.exists():
            self.log = [
                json.loads(line)
                for line in self.log_path.read_text(encoding="utf-8").splitlines()
                if line.strip()
            ]
        self._fitted = False
        self._request_counter = 0

    @property
    def ready(self) -> bool:
        return True

    def _exchange(self, route: str, payload: dict) -> dict:
        self._request_counter += 1
        request_id = f"req-{self._request_counter}"
        key = sha256_hex(canonical_json({"route": route, "payload": payload}))
        if self.mode == "replay":
            for entry in self.log:
                if entry.get("key") == key:
                    return entry["response"]
            raise PredictorError(f"replay log has no entry for request {request_id} (key {key[:12]})")
        import httpx

        headers = {"Content-Type": "application/json"}
        if self.credentials:
            headers["Authorization"] = f"Bearer {self.credentials}"
        try:
            resp = httpx.post(f"{self.endpoint}/{route}", json=payload, headers=headers, timeout=self.timeout)
            resp.raise_for_status()
            data = resp.json()
        except Exception as e:
            raise PredictorError(f"remote predictor request {request_id} failed: {e}") from e
        entry = {"key": key, "route": route, "request": payload, "response": data}
        self.log.append(entry)
        if self.log_path is not None:
            self.log_path.parent.mkdir(parents=True, exist_ok=True)
            with self.log_path.open("a", encoding="utf-8") as f:
                f.write(canonical_json(entry) + "\n")
        return data

    def fit(self, labeled: Sequence[tuple[Condition, float]]) -> None:
        payload = {
            "labeled": [{"condition": c.as_dict(), "value": float(v)} for c, v in labeled]
        }
        self._exchange("fit", payload)
        self._fitted = True

    def predict(self, conditions: Sequence[Condition]) -> list[float]:
        payload = {"conditions": [c.as_dict() for c in conditions], "want_embeddings": False}
        data = self._exchange("predict", payload)
        values = data.get("values")
        if not isinstance(values, list) or len(values) != len(conditions):
            raise PredictorError(
                f"response length mismatch: {len(conditions)} conditions, "
                f"{0 if values is None else len(values)} values"
            )
        out = [float(v) for v in values]
        if not all(math.isfinite(v) for v in out):
            raise PredictorError("remote predictor returned non-finite values")
        return out

    def embed(self, condition: Condition) -> np.ndarray:
        payload = {"conditions": [condition.as_dict()], "want_embeddings": True}
        data = self._exchange("predict", payload)
        embs = data.get("embeddings")
        if not isinstance(embs, list) or len(embs) != 1:
            raise PredictorError("response embedding length mismatch")
        v = np.asarray(embs[0], dtype=float)
        norm = float(np.linalg.norm(v))
        if not math.isfinite(norm) or norm == 0:
            raise PredictorError("remote embedding is not unit-normalizable")
        return v / norm


def make_predictor(
    spec: Mapping[str, Any], space: SearchSpace, table: Mapping[tuple, float] | None = None
) -> PerformancePredictor | None:
    """Instantiate from a config spec: {"type": "ridge"|"table"|"remote"|"none", ...}."""
    kind = spec.get("type", "ridge")
    if kind == "none":
        return None
    if kind == "ridge":
        return RidgePredictor(space, lam=spec.get("lambda", 1e-2))
    if kind == "table":
        if table is None:
            raise PredictorError("table predictor requires a lookup table")
        return TableOracle(space, table)
    if kind == "remote":
        return RemotePredictor(
            space,
            endpoint=spec["endpoint"],
            credentials=spec.get("credentials", ""),
            timeout=spec.get("timeout", 30.0),
            mode=spec.get("mode", "live"),
            log_path=spec.get("log_path"),
        )
    raise PredictorError(f"unknown predictor type {kind!r}")
