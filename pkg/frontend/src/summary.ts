/**
 * Reading and validating sdlpsim run artifacts.
 *
 * A run directory must contain summary.csv with the documented column set;
 * optional columns (alpha, metric_selected) may be absent in older artifacts
 * and render as labeled gaps instead of crashing.
 */

import { readFileSync, existsSync } from "fs";
import { join, basename } from "path";

export interface RunSummary {
  dir: string;
  label: string;
  scenario: number;
  mode: string;
  seed: number;
  avgPrivacy: number;
  avgSafetyRisk: number;
  trackingSuccess: number;
  changes: number;
  metricSelected?: string;
  alpha?: number;
}

export class ArtifactError extends Error {}

/** Minimal CSV split; sdlpsim artifacts never quote fields. */
export function parseCsv(text: string): Record<string, string>[] {
  const lines = text.trim().split(/\r?\n/);
  if (lines.length < 1) return [];
  const header = lines[0].split(",");
  return lines.slice(1).map((line) => {
    const cells = line.split(",");
    const row: Record<string, string> = {};
    header.forEach((h, i) => (row[h] = cells[i] ?? ""));
    return row;
  });
}

const REQUIRED = [
  "scenario", "mode", "seed", "avg_privacy", "avg_safety_risk",
  "tracking_success", "changes",
];

export function readRunSummary(dir: string): RunSummary {
  const path = join(dir, "summary.csv");
  if (!existsSync(path)) {
    throw new ArtifactError(`${dir} has no summary.csv`);
  }
  const rows = parseCsv(readFileSync(path, "utf-8"));
  if (rows.length === 0) {
    throw new ArtifactError(`${path} has no data row`);
  }
  const row = rows[0];
  for (const col of REQUIRED) {
    if (!(col in row) || row[col] === "") {
      throw new ArtifactError(`${path} is missing column ${col}`);
    }
  }
  const summary: RunSummary = {
    dir,
    label: basename(dir) || dir,
    scenario: parseInt(row.scenario, 10),
    mode: row.mode,
    seed: parseInt(row.seed, 10),
    avgPrivacy: parseFloat(row.avg_privacy),
    avgSafetyRisk: parseFloat(row.avg_safety_risk),
    trackingSuccess: parseFloat(row.tracking_success),
    changes: parseInt(row.changes, 10),
  };
  if (row.metric_selected !== undefined && row.metric_selected !== "") {
    summary.metricSelected = row.metric_selected;
  }
  if (row.alpha !== undefined && row.alpha !== "") {
    summary.alpha = parseFloat(row.alpha);
  }
  if (!Number.isFinite(summary.avgPrivacy) || !Number.isFinite(summary.avgSafetyRisk)) {
    throw new ArtifactError(`${path} has non-numeric metrics`);
  }
  return summary;
}

/** Load every input dir and require one common scenario. */
export function readRuns(dirs: string[]): RunSummary[] {
  if (dirs.length === 0) {
    throw new ArtifactError("no input directories given");
  }
  const runs = dirs.map(readRunSummary);
  const scenarios = new Set(runs.map((r) => r.scenario));
  if (scenarios.size > 1) {
    throw new ArtifactError(
      `input directories mix scenarios: ${[...scenarios].sort().join(", ")}`,
    );
  }
  return runs;
}
