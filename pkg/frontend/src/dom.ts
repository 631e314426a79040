// DOM rendering: pure functions from service payloads (plus grid state) to
// elements. Re-rendering with identical inputs produces identical markup.

import type { CampaignStatus, TreeView, Trajectory } from "./api.js";
import { renderChartSvg } from "./chart.js";
import { conditionLabel, type GridRow } from "./model.js";

function el<K extends keyof HTMLElementTagNameMap>(
  tag: K,
  attrs: Record<string, string> = {},
  text?: string,
): HTMLElementTagNameMap[K] {
  const node = document.createElement(tag);
  for (const [k, v] of Object.entries(attrs)) node.setAttribute(k, v);
  if (text !== undefined) node.textContent = text;
  return node;
}

export function renderStatusPanel(status: CampaignStatus): HTMLElement {
  const panel = el("section", { class: "status-panel" });
  panel.append(
    el("div", { class: "status-field", "data-field": "round" }, `Round ${status.round}`),
    el("div", { class: "status-field", "data-field": "status" }, status.status),
    el(
      "div",
      { class: "status-field best-so-far", "data-field": "best" },
      status.best_so_far === null ? "no observations yet" : `best so far ${status.best_so_far}`,
    ),
  );
  if (status.target_threshold !== null) {
    panel.append(
      el("div", { class: "status-field", "data-field": "target" }, `target ${status.target_threshold}`),
    );
  }
  return panel;
}

export function renderObservationGrid(
  rows: GridRow[],
  variableOrder: string[],
  onEntry: (index: number, text: string) => void,
  onSubmit: () => void,
): HTMLElement {
  const section = el("section", { class: "observation-grid" });
  const table = el("table");
  const head = el("tr");
  head.append(el("th", {}, "#"));
  for (const name of variableOrder) head.append(el("th", {}, name));
  head.append(el("th", {}, "observed value"), el("th", {}, ""));
  table.append(head);

  for (const row of rows) {
    const tr = el("tr", {
      class: row.abandoned ? "row-abandoned" : row.error ? "row-invalid" : "row",
      "data-row": String(row.index),
    });
    tr.append(el("td", {}, String(row.index + 1)));
    for (const name of variableOrder) tr.append(el("td", {}, String(row.condition[name])));
    const cell = el("td");
    const input = el("input", {
      type: "text",
      value: row.entry,
      "data-input": String(row.index),
    }) as HTMLInputElement;
    input.value = row.entry;
    input.addEventListener("input", () => onEntry(row.index, input.value));
    cell.append(input);
    tr.append(cell);
    const flag = el(
      "td",
      { class: "row-flag" },
      row.abandoned ? "abandoned" : row.error ? row.error : "",
    );
    tr.append(flag);
    table.append(tr);
  }
  section.append(table);
  const submit = el("button", { class: "submit-observations" }, "Submit round");
  submit.addEventListener("click", onSubmit);
  section.append(submit);
  return section;
}

export function renderTrajectoryPanel(trajectory: Trajectory): HTMLElement {
  const panel = el("section", { class: "trajectory-panel" });
  const holder = el("div", { class: "chart-holder" });
  holder.innerHTML = renderChartSvg(trajectory);
  panel.append(holder);
  const list = el("ul", { class: "round-list" });
  for (const r of trajectory.rounds) {
    list.append(
      el(
        "li",
        { "data-round": String(r.round) },
        `round ${r.round}: best ${r.best_so_far} (${r.batch_values.length} results, ${r.abandoned} abandoned)`,
      ),
    );
  }
  panel.append(list);
  return panel;
}

export function renderTreePanel(tree: TreeView): HTMLElement {
  const panel = el("section", { class: "tree-panel" });
  panel.append(el("h3", {}, `decomposition by ${tree.ranking.join(" > ")}`));
  const byId = new Map(tree.nodes.map((n) => [n.id, n]));
  const root = tree.nodes.find((n) => n.parent === null);
  if (!root) return panel;

  const renderNode = (id: number): HTMLElement => {
    const node = byId.get(id)!;
    const label =
      node.variable === null
        ? `all conditions: n=${node.n}, mean=${node.mean.toFixed(1)}`
        : `${node.variable} subset ${node.subset}: n=${node.n}, mean=${node.mean.toFixed(1)}`;
    if (node.children.length === 0) {
      return el("li", { class: "tree-leaf", "data-node": String(id) }, label);
    }
    const item = el("li", { class: "tree-node", "data-node": String(id) });
    const details = el("details");
    details.append(el("summary", {}, label));
    const ul = el("ul");
    for (const child of node.children) ul.append(renderNode(child));
    details.append(ul);
    item.append(details);
    return item;
  };

  const ul = el("ul", { class: "tree-root" });
  ul.append(renderNode(root.id));
  panel.append(ul);
  return panel;
}
