// App wiring: create-campaign form, then the campaign page loop of
// suggest -> enter observations -> submit -> refresh panels.

import { ApiClient, ApiError, type ConditionMap } from "./api.js";
import {
  collectResults,
  makeGrid,
  markAbandoned,
  setEntry,
  type GridRow,
} from "./model.js";
import {
  renderObservationGrid,
  renderStatusPanel,
  renderTrajectoryPanel,
  renderTreePanel,
} from "./dom.js";

const api = new ApiClient("");

interface PageState {
  campaignId: string;
  rows: GridRow[];
  variableOrder: string[];
  percentObjective: boolean;
}

function showError(message: string): void {
  const banner = document.querySelector("#error-banner");
  if (banner) {
    banner.textContent = message;
    (banner as HTMLElement).style.display = message ? "block" : "none";
  }
}

async function refreshPanels(state: PageState): Promise<void> {
  const [status, trajectory, tree] = await Promise.all([
    api.getCampaign(state.campaignId),
    api.getTrajectory(state.campaignId),
    api.getTree(state.campaignId),
  ]);
  replace("#status-panel", renderStatusPanel(status));
  replace("#trajectory-panel", renderTrajectoryPanel(trajectory));
  replace("#tree-panel", renderTreePanel(tree));
}

function replace(selector: string, node: HTMLElement): void {
  const holder = document.querySelector(selector);
  if (holder) {
    holder.innerHTML = "";
    holder.append(node);
  }
}

function renderGrid(state: PageState): void {
  const grid = renderObservationGrid(
    state.rows,
    state.variableOrder,
    (index, text) => {
      state.rows = state.rows.map((r) =>
        r.index === index ? setEntry(r, text, state.percentObjective) : r,
      );
      renderGrid(state); // re-render keeps flags/errors in sync with entries
    },
    () => void submitRound(state),
  );
  replace("#grid-panel", grid);
}

async function submitRound(state: PageState): Promise<void> {
  const { results, blankRows, invalidRows } = collectResults(state.rows);
  if (invalidRows.length > 0) {
    showError(`fix invalid rows before submitting: ${invalidRows.map((i) => i + 1).join(", ")}`);
    return;
  }
  if (results.length === 0) {
    showError("enter at least one observed value");
    return;
  }
  try {
    await api.submitObservations(state.campaignId, results);
    state.rows = markAbandoned(state.rows, blankRows);
    renderGrid(state);
    showError("");
    await refreshPanels(state);
  } catch (err) {
    showError(err instanceof ApiError ? err.message : String(err));
  }
}

async function loadBatch(state: PageState): Promise<void> {
  try {
    const suggest = await api.suggest(state.campaignId);
    state.rows = makeGrid(suggest.conditions);
    if (suggest.conditions.length > 0) {
      state.variableOrder = Object.keys(suggest.conditions[0] as ConditionMap);
    }
    renderGrid(state);
    showError("");
  } catch (err) {
    showError(err instanceof ApiError ? err.message : String(err));
  }
}

async function createCampaign(): Promise<void> {
  const textarea = document.querySelector("#config-input") as HTMLTextAreaElement | null;
  if (!textarea) return;
  let config: unknown;
  try {
    config = JSON.parse(textarea.value);
  } catch (err) {
    showError(`config is not valid JSON: ${err}`);
    return;
  }
  const batch = (config as { batch_size?: number }).batch_size;
  if (batch !== undefined && (!Number.isInteger(batch) || batch < 1)) {
    showError("batch_size must be a positive integer");
    return;
  }
  try {
    const created = await api.createCampaign(config);
    window.location.hash = `#/campaign/${created.id}`;
  } catch (err) {
    showError(err instanceof ApiError ? err.message : String(err));
  }
}

async function route(): Promise<void> {
  const match = window.location.hash.match(/^#\/campaign\/(\w+)$/);
  const createPage = document.querySelector("#create-page") as HTMLElement | null;
  const campaignPage = document.querySelector("#campaign-page") as HTMLElement | null;
  if (!match) {
    if (createPage) createPage.style.display = "block";
    if (campaignPage) campaignPage.style.display = "none";
    return;
  }
  if (createPage) createPage.style.display = "none";
  if (campaignPage) campaignPage.style.display = "block";
  const state: PageState = {
    campaignId: match[1]!,
    rows: [],
    variableOrder: [],
    percentObjective: true,
  };
  try {
    await refreshPanels(state);
    await loadBatch(state);
  } catch (err) {
    showError(err instanceof ApiError ? err.message : String(err));
  }
}

export function start(): void {
  document.querySelector("#create-button")?.addEventListener("click", () => void createCampaign());
  window.addEventListener("hashchange", () => void route());
  void route();
}

if (typeof window !== "undefined" && document.readyState !== "loading") {
  start();
} else if (typeof window !== "undefined") {
  document.addEventListener("DOMContentLoaded", start);
}
