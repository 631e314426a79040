// Observation-grid view model. The grid mirrors the service's outstanding
// batch exactly (same order, same conditions); rows the chemist leaves blank
// are submitted as nothing and flagged abandoned after ingest.

import type { ConditionMap, ObservationResult } from "./api.js";

export interface GridRow {
  index: number;
  condition: ConditionMap;
  entry: string;
  error: string | null;
  abandoned: boolean;
}

export function makeGrid(conditions: ConditionMap[]): GridRow[] {
  return conditions.map((condition, index) => ({
    index,
    condition,
    entry: "",
    error: null,
    abandoned: false,
  }));
}

export function setEntry(row: GridRow, text: string, percentObjective = true): GridRow {
  const entry = text.trim();
  let error: string | null = null;
  if (entry !== "") {
    const value = Number(entry);
    if (!Number.isFinite(value)) {
      error = "not a number";
    } else if (percentObjective && (value < 0 || value > 100)) {
      error = "must be between 0 and 100";
    }
  }
  return { ...row, entry, error };
}

export interface CollectedResults {
  results: ObservationResult[];
  blankRows: number[];
  invalidRows: number[];
}

export function collectResults(rows: GridRow[]): CollectedResults {
  const results: ObservationResult[] = [];
  const blankRows: number[] = [];
  const invalidRows: number[] = [];
  for (const row of rows) {
    if (row.entry === "") {
      blankRows.push(row.index);
    } else if (row.error !== null) {
      invalidRows.push(row.index);
    } else {
      results.push({ condition: row.condition, value: Number(row.entry) });
    }
  }
  return { results, blankRows, invalidRows };
}

export function maxSubmittedValue(results: ObservationResult[]): number | null {
  if (results.length === 0) return null;
  return results.reduce((best, r) => Math.max(best, r.value), -Infinity);
}

export function markAbandoned(rows: GridRow[], blankRows: number[]): GridRow[] {
  const blank = new Set(blankRows);
  return rows.map((row) => ({ ...row, abandoned: blank.has(row.index) }));
}

export function conditionLabel(condition: ConditionMap, order?: string[]): string {
  const names = order ?? Object.keys(condition);
  return names.map((n) => `${n}=${String(condition[n])}`).join(", ");
}
