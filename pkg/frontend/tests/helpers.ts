import { readFileSync } from "node:fs";
import { fileURLToPath } from "node:url";
import { dirname, join } from "node:path";

const here = dirname(fileURLToPath(import.meta.url));

export interface Fixture {
  create: { request: unknown; response: any };
  suggest: { response: any };
  observations: { request: { results: any[] }; response: any };
  campaign: { response: any };
  trajectory: { response: any };
  tree: { response: any };
}

export function loadFixture(): Fixture {
  return JSON.parse(readFileSync(join(here, "fixtures", "recorded_service.json"), "utf-8"));
}

/** fetch stub replaying the recorded service exchange; records request bodies. */
export function fixtureFetch(fixture: Fixture) {
  const calls: { url: string; method: string; body: unknown }[] = [];
  const fetchImpl = async (url: string, init: RequestInit = {}) => {
    const method = (init.method ?? "GET").toUpperCase();
    const body = init.body ? JSON.parse(String(init.body)) : undefined;
    calls.push({ url, method, body });
    const respond = (payload: unknown, status = 200) =>
      new Response(JSON.stringify(payload), {
        status,
        headers: { "Content-Type": "application/json" },
      });
    if (method === "POST" && url === "/campaigns") return respond(fixture.create.response, 201);
    if (method === "POST" && /\/campaigns\/[^/]+\/suggest$/.test(url))
      return respond(fixture.suggest.response);
    if (method === "POST" && /\/campaigns\/[^/]+\/observations$/.test(url))
      return respond(fixture.observations.response);
    if (method === "GET" && /\/campaigns\/[^/]+\/trajectory$/.test(url))
      return respond(fixture.trajectory.response);
    if (method === "GET" && /\/campaigns\/[^/]+\/tree$/.test(url))
      return respond(fixture.tree.response);
    if (method === "GET" && /\/campaigns\/[^/]+$/.test(url))
      return respond(fixture.campaign.response);
    return respond({ detail: `unrecorded route ${method} ${url}` }, 404);
  };
  return { fetchImpl: fetchImpl as typeof fetch, calls };
}
