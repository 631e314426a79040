// Best-so-far chart as plain SVG markup: a line over rounds, round markers,
// and a horizontal reference line when a target threshold is configured.

import type { Trajectory } from "./api.js";

export interface ChartOptions {
  width: number;
  height: number;
  yMax: number;
  pad: number;
}

export const DEFAULT_CHART: ChartOptions = { width: 480, height: 240, yMax: 100, pad: 30 };

export function xScale(round: number, maxRound: number, opts: ChartOptions): number {
  const span = opts.width - 2 * opts.pad;
  if (maxRound <= 1) return opts.pad + span / 2;
  return opts.pad + ((round - 1) / (maxRound - 1)) * span;
}

export function yScale(value: number, opts: ChartOptions): number {
  const span = opts.height - 2 * opts.pad;
  return opts.height - opts.pad - (value / opts.yMax) * span;
}

export function bestSoFarPath(trajectory: Trajectory, opts: ChartOptions = DEFAULT_CHART): string {
  const rounds = trajectory.rounds;
  if (rounds.length === 0) return "";
  const maxRound = rounds[rounds.length - 1]!.round;
  return rounds
    .map((r, i) => {
      const x = xScale(r.round, maxRound, opts).toFixed(1);
      const y = yScale(r.best_so_far, opts).toFixed(1);
      return `${i === 0 ? "M" : "L"}${x},${y}`;
    })
    .join(" ");
}

export function renderChartSvg(trajectory: Trajectory, opts: ChartOptions = DEFAULT_CHART): string {
  const parts: string[] = [
    `<svg viewBox="0 0 ${opts.width} ${opts.height}" class="chart" role="img" aria-label="best value per round">`,
    `<rect x="0" y="0" width="${opts.width}" height="${opts.height}" class="chart-bg"/>`,
  ];
  if (trajectory.target_threshold !== null && trajectory.target_threshold !== undefined) {
    const y = yScale(trajectory.target_threshold, opts).toFixed(1);
    parts.push(
      `<line class="threshold" data-threshold="${trajectory.target_threshold}" ` +
        `x1="${opts.pad}" y1="${y}" x2="${opts.width - opts.pad}" y2="${y}"/>`,
    );
    parts.push(
      `<text class="threshold-label" x="${opts.width - opts.pad + 4}" y="${y}">${trajectory.target_threshold}</text>`,
    );
  }
  const path = bestSoFarPath(trajectory, opts);
  if (path !== "") {
    parts.push(`<path class="best-line" d="${path}" fill="none"/>`);
    const maxRound = trajectory.rounds[trajectory.rounds.length - 1]!.round;
    for (const r of trajectory.rounds) {
      const x = xScale(r.round, maxRound, opts).toFixed(1);
      const y = yScale(r.best_so_far, opts).toFixed(1);
      parts.push(`<circle class="best-marker" cx="${x}" cy="${y}" r="3" data-round="${r.round}"/>`);
    }
  }
  parts.push("</svg>");
  return parts.join("");
}
