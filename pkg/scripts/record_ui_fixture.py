"""Record a real service exchange into a fixture for the frontend tests.

Runs a 14-sample wet-style round against the live service (in-process), with a
75% target threshold, submitting 10 of 14 observations; the remaining 4 are
abandoned. Output: frontend/tests/fixtures/recorded_service.json
"""
from __future__ import annotations

import json
import sys
import tempfile
from pathlib import Path

from fastapi.testclient import TestClient

from rxnopt.service import create_app

ROOT = Path(__file__).resolve().parent.parent


def main() -> int:
    manifest = json.loads((ROOT / "sample_data" / "space_manifest.json").read_text(encoding="utf-8"))
    config = {
        "manifest": manifest,
        "provider": {"type": "static", "path": str(ROOT / "sample_data" / "knowledge_report.json")},
        "predictor": {"type": "ridge"},
        "batch_size": 14,
        "acquisition": ["ei", "ucb"],
        "target_threshold": 75.0,
        "max_rounds": 5,
        "seed": 11,
    }

    fixture: dict = {}
    with tempfile.TemporaryDirectory() as tmp:
        app = create_app(Path(tmp) / "campaigns")
        with TestClient(app) as client:
            resp = client.post("/campaigns", json={"config": config})
            assert resp.status_code == 201, resp.text
            created = resp.json()
            cid = created["id"]
            fixture["create"] = {"request": {"config": config}, "response": created}

            resp = client.post(f"/campaigns/{cid}/suggest")
            suggest = resp.json()
            assert len(suggest["conditions"]) == 14
            fixture["suggest"] = {"response": suggest}

            # chemist submits 10 of 14 rows; best value 96
            values = [52.0, 61.5, 35.0, 96.0, 44.0, 71.2, 15.0, 88.5, 67.0, 23.4]
            results = [
                {"condition": c, "value": v}
                for c, v in zip(suggest["conditions"][:10], values)
            ]
            resp = client.post(f"/campaigns/{cid}/observations", json={"results": results})
            assert resp.status_code == 200, resp.text
            fixture["observations"] = {"request": {"results": results}, "response": resp.json()}

            fixture["campaign"] = {"response": client.get(f"/campaigns/{cid}").json()}
            fixture["trajectory"] = {"response": client.get(f"/campaigns/{cid}/trajectory").json()}
            fixture["tree"] = {"response": client.get(f"/campaigns/{cid}/tree").json()}

    out = ROOT / "frontend" / "tests" / "fixtures" / "recorded_service.json"
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(json.dumps(fixture, indent=2, sort_keys=True), encoding="utf-8")
    print(f"fixture written to {out}")
    print(f"  best_so_far={fixture['observations']['response']['best_so_far']}")
    print(f"  abandoned={fixture['observations']['response']['abandoned']}")
    print(f"  status={fixture['observations']['response']['status']}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
