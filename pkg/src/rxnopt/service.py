"""HTTP facade for human-in-the-loop campaigns.

Single-process, file-backed. Mutations per campaign funnel through one lock;
reads serve an immutable published snapshot, so a long ingest never blocks a
GET and a reader sees either the pre- or post-mutation state, never a mix.
"""
from __future__ import annotations

import json
import logging
import threading
import time
import uuid
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

from fastapi import FastAPI, Header, HTTPException, Request
from fastapi.middleware.cors import CORSMiddleware
from fastapi.staticfiles import StaticFiles
from pydantic import BaseModel

from .campaign import (
    Campaign,
    CampaignConfig,
    CampaignError,
    CONVERGED,
    EXHAUSTED,
    load as load_campaign,
)
from .knowledge import KnowledgeError, RemoteProviderError
from .predictor import PredictorError
from .space import SpaceError
from .util import atomic_write_text, canonical_json

log = logging.getLogger(__name__)

API_VERSION = "1"


class ObservationIn(BaseModel):
    condition: dict[str, Any]
    value: float


class ObservationsIn(BaseModel):
    results: list[ObservationIn]
    external: bool = False


class CreateCampaignIn(BaseModel):
    config: dict[str, Any]


@dataclass
class CampaignHandle:
    id: str
    campaign: Campaign
    lock: threading.Lock = field(default_factory=threading.Lock)
    created_at: float = field(default_factory=time.time)
    snapshot: dict[str, Any] = field(default_factory=dict)

    def publish(self) -> None:
        """Refresh the immutable read snapshot (atomic reference swap)."""
        camp = self.campaign
        self.snapshot = {
            "status": camp.status_view(),
            "tree": camp.tree_view(),
            "trajectory": camp.trajectory_view(),
        }


class CampaignStore:
    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.root.mkdir(parents=True, exist_ok=True)
        self.handles: dict[str, CampaignHandle] = {}
        self.idempotency: dict[str, str] = {}
        self._registry_path = self.root / "registry.json"
        self._lock = threading.Lock()
        if self._registry_path.exists():
            reg = json.loads(self._registry_path.read_text(encoding="utf-8"))
            self.idempotency = reg.get("idempotency", {})
            for cid in reg.get("campaigns", []):
                path = self.root / cid / "state.json"
                if path.exists():
                    handle = CampaignHandle(id=cid, campaign=load_campaign(path))
                    handle.publish()
                    self.handles[cid] = handle

    def _save_registry(self) -> None:
        atomic_write_text(
            self._registry_path,
            canonical_json(
                {"campaigns": sorted(self.handles), "idempotency": self.idempotency}
            ),
        )

    def create(self, config: CampaignConfig, idempotency_key: str | None = None) -> CampaignHandle:
        with self._lock:
            if idempotency_key and idempotency_key in self.idempotency:
                return self.handles[self.idempotency[idempotency_key]]
            cid = uuid.uuid4().hex[:12]
            path = self.root / cid / "state.json"
            campaign = Campaign.init(config, path=path)
            handle = CampaignHandle(id=cid, campaign=campaign)
            handle.publish()
            self.handles[cid] = handle
            if idempotency_key:
                self.idempotency[idempotency_key] = cid
            self._save_registry()
            return handle

    def get(self, cid: str) -> CampaignHandle:
        handle = self.handles.get(cid)
        if handle is None:
            raise HTTPException(status_code=404, detail=f"campaign {cid} not found")
        return handle

    def audit_append(self, cid: str, record: dict) -> None:
        path = self.root / cid / "audit.jsonl"
        path.parent.mkdir(parents=True, exist_ok=True)
        with path.open("a", encoding="utf-8") as f:
            f.write(canonical_json(record) + "\n")


def create_app(
    storage_dir: str | Path,
    token: str | None = None,
    frontend_dir: str | Path | None = None,
    mutation_delay: float = 0.0,
) -> FastAPI:
    """App factory. `mutation_delay` injects a sleep inside mutations (test hook
    for snapshot-consistency checks)."""
    app = FastAPI(title="rxnopt campaign service")
    store = CampaignStore(storage_dir)
    app.state.store = store
    app.add_middleware(
        CORSMiddleware,
        allow_origins=["*"],
        allow_methods=["*"],
        allow_headers=["*"],
    )

    def check_token(authorization: str | None) -> None:
        if token is None:
            return
        if authorization != f"Bearer {token}":
            raise HTTPException(status_code=401, detail="missing or invalid token")

    @app.middleware("http")
    async def version_header(request: Request, call_next):
        response = await call_next(request)
        response.headers["X-API-Version"] = API_VERSION
        return response

    def log_exchange(cid: str, route: str, request_body: Any, response_body: Any) -> None:
        store.audit_append(
            cid,
            {"ts": time.time(), "route": route, "request": request_body, "response": response_body},
        )

    @app.post("/campaigns", status_code=201)
    def create_campaign(
        body: CreateCampaignIn,
        authorization: str | None = Header(default=None),
        idempotency_key: str | None = Header(default=None, alias="Idempotency-Key"),
    ):
        check_token(authorization)
        try:
            config = CampaignConfig.from_dict(body.config)
        except (CampaignError, SpaceError, KeyError, TypeError, ValueError) as e:
            raise HTTPException(status_code=400, detail=f"invalid config: {e}")
        try:
            handle = store.create(config, idempotency_key)
        except (RemoteProviderError, PredictorError) as e:
            raise HTTPException(status_code=502, detail=f"provider failure: {e}")
        except (CampaignError, SpaceError, KnowledgeError) as e:
            raise HTTPException(status_code=400, detail=str(e))
        resp = {
            "id": handle.id,
            "status": handle.snapshot["status"],
            "leaves": sum(
                1 for n in handle.snapshot["tree"]["nodes"] if not n["children"]
            ),
        }
        log_exchange(handle.id, "POST /campaigns", body.config, resp)
        return resp

    @app.post("/campaigns/{cid}/suggest")
    def suggest(cid: str, authorization: str | None = Header(default=None)):
        check_token(authorization)
        handle = store.get(cid)
        with handle.lock:
            camp = handle.campaign
            if camp.status in (EXHAUSTED, CONVERGED) and not camp.outstanding:
                raise HTTPException(status_code=410, detail=f"campaign is {camp.status}")
            try:
                if mutation_delay:
                    time.sleep(mutation_delay)
                batch = camp.suggest()
            except CampaignError as e:
                raise HTTPException(status_code=409, detail=str(e))
            if not batch:
                raise HTTPException(status_code=410, detail=f"campaign is {camp.status}")
            handle.publish()
        resp = {
            "round": camp.round,
            "status": camp.status,
            "conditions": [c.as_dict() for c in batch],
        }
        log_exchange(cid, "POST /suggest", None, resp)
        return resp

    @app.post("/campaigns/{cid}/observations")
    def observations(
        cid: str, body: ObservationsIn, authorization: str | None = Header(default=None)
    ):
        check_token(authorization)
        handle = store.get(cid)
        with handle.lock:
            camp = handle.campaign
            try:
                results = []
                for r in body.results:
                    cond = camp.space.condition(r.condition)
                    results.append((cond, r.value))
            except SpaceError as e:
                raise HTTPException(status_code=400, detail=str(e))
            import math

            for _, v in results:
                if not math.isfinite(v):
                    raise HTTPException(status_code=422, detail="non-finite observation value")
            try:
                if mutation_delay:
                    time.sleep(mutation_delay)
                summary = camp.ingest(results, external=body.external)
            except CampaignError as e:
                msg = str(e)
                code = 409 if "already measured" in msg or "duplicate" in msg else 400
                if "out of range" in msg:
                    code = 422
                raise HTTPException(status_code=code, detail=msg)
            handle.publish()
        log_exchange(cid, "POST /observations", [r.model_dump() for r in body.results], summary)
        return summary

    @app.get("/campaigns/{cid}")
    def get_campaign(cid: str, authorization: str | None = Header(default=None)):
        check_token(authorization)
        handle = store.get(cid)
        snap = handle.snapshot  # atomic reference read; no lock
        resp = {"id": cid, **snap["status"]}
        log_exchange(cid, "GET /campaigns/{id}", None, resp)
        return resp

    @app.get("/campaigns/{cid}/tree")
    def get_tree(cid: str, authorization: str | None = Header(default=None)):
        check_token(authorization)
        resp = store.get(cid).snapshot["tree"]
        log_exchange(cid, "GET /campaigns/{id}/tree", None, resp)
        return resp

    @app.get("/campaigns/{cid}/trajectory")
    def get_trajectory(cid: str, authorization: str | None = Header(default=None)):
        check_token(authorization)
        resp = store.get(cid).snapshot["trajectory"]
        log_exchange(cid, "GET /campaigns/{id}/trajectory", None, resp)
        return resp

    if frontend_dir and Path(frontend_dir).is_dir():
        app.mount("/", StaticFiles(directory=str(frontend_dir), html=True), name="ui")

    return app
