/**
 * The three comparison figures built from run summaries:
 *
 * - upcs: grouped bar panels of average privacy and average safety risk for
 *   a static-vs-sdn pair (or any set of same-scenario runs).
 * - tapcs: privacy and tracking panels plus a lane per run spelling out the
 *   privacy-metric selections over the attacker phases.
 * - privanet: average privacy against the decay sensitivity, one line per
 *   mode, for a sensitivity sweep.
 */

import { RunSummary, ArtifactError } from "./summary.js";
import { COLORS, barPanel, document, esc, fmt, niceMax } from "./svg.js";

export type FigureKind = "upcs" | "tapcs" | "privanet";

export interface FigureSpec {
  figure: FigureKind;
  inputDirs: string[];
  outPath: string;
}

function runLabel(r: RunSummary): string {
  return `${r.mode}/seed${r.seed}`;
}

export function renderUpcs(runs: RunSummary[]): string {
  const W = 640, H = 300;
  const bars = (value: (r: RunSummary) => number | undefined, places: number) =>
    runs.map((r, i) => ({ label: runLabel(r), value: value(r), color: COLORS[i % COLORS.length] }));
  let body = "";
  body += barPanel(
    { title: "Average privacy", yLabel: "bits", bars: bars((r) => r.avgPrivacy, 2) },
    0, 28, W / 2, H - 40,
  );
  body += barPanel(
    { title: "Average safety risk", yLabel: "stale pair fraction", bars: bars((r) => r.avgSafetyRisk, 3) },
    W / 2, 28, W / 2, H - 40,
  );
  return document(W, H, "Silence-at-red strategy: static vs controller-driven", body);
}

export function renderTapcs(runs: RunSummary[]): string {
  const W = 640;
  const laneH = 26;
  const H = 300 + runs.length * laneH + 24;
  let body = "";
  body += barPanel(
    { title: "Average privacy", yLabel: "bits", bars: runs.map((r, i) => ({
        label: runLabel(r), value: r.avgPrivacy, color: COLORS[i % COLORS.length] })) },
    0, 28, W / 2, 260,
  );
  body += barPanel(
    { title: "Tracking success", yLabel: "linked pair fraction", bars: runs.map((r, i) => ({
        label: runLabel(r), value: r.trackingSuccess, color: COLORS[i % COLORS.length] })) },
    W / 2, 28, W / 2, 260,
  );
  // metric-selection lanes: one row per run, one box per attacker phase
  const y0 = 300;
  body += `<text x="44" y="${y0}" font-size="11" font-weight="600" fill="#222">Privacy metric selections</text>\n`;
  runs.forEach((r, i) => {
    const y = y0 + 10 + i * laneH;
    body += `<text x="44" y="${y + 13}" font-size="9" fill="#333">${esc(runLabel(r))}</text>\n`;
    if (!r.metricSelected) {
      body += `<text x="160" y="${y + 13}" font-size="9" fill="#999">n/a</text>\n`;
      return;
    }
    const phases = r.metricSelected.split("->");
    phases.forEach((metric, j) => {
      const x = 160 + j * 110;
      const color = metric === "size" ? "#f4a261" : "#4361ee";
      body += `<rect x="${x}" y="${y}" width="100" height="18" fill="${color}" opacity="0.85"/>\n`;
      body += `<text x="${x + 50}" y="${y + 13}" font-size="9" fill="#fff" text-anchor="middle">${esc(metric)}</text>\n`;
    });
  });
  return document(W, H, "Congestion strategy: metric selection vs attacker power", body);
}

export function renderPrivanet(runs: RunSummary[]): string {
  const W = 640, H = 320;
  const mt = 46, mb = 46, ml = 64, mr = 24;
  const pw = W - ml - mr;
  const ph = H - mt - mb;

  const withAlpha = runs.filter((r) => r.alpha !== undefined);
  const missing = runs.filter((r) => r.alpha === undefined);
  const alphas = withAlpha.map((r) => r.alpha as number);
  const aMin = Math.min(...alphas);
  const aMax = Math.max(...alphas);
  const span = aMax - aMin || 1;
  const yMax = niceMax(Math.max(...withAlpha.map((r) => r.avgPrivacy), 0));
  const xOf = (a: number) => ml + ((a - aMin) / span) * pw;
  const yOf = (v: number) => mt + ph - (v / yMax) * ph;

  let body = "";
  for (let i = 0; i <= 4; i++) {
    const v = (yMax * i) / 4;
    body += `<line x1="${ml}" y1="${fmt(yOf(v))}" x2="${ml + pw}" y2="${fmt(yOf(v))}" stroke="#eee"/>\n`;
    body += `<text x="${ml - 5}" y="${fmt(yOf(v) + 3)}" font-size="8" fill="#666" text-anchor="end">${fmt(v, 2)}</text>\n`;
  }
  body += `<line x1="${ml}" y1="${mt}" x2="${ml}" y2="${mt + ph}" stroke="#999"/>\n`;
  body += `<line x1="${ml}" y1="${mt + ph}" x2="${ml + pw}" y2="${mt + ph}" stroke="#999"/>\n`;
  body += `<text x="${ml + pw / 2}" y="${H - 14}" font-size="10" fill="#444" text-anchor="middle">decay sensitivity (bits/s)</text>\n`;
  body += `<text x="16" y="${mt + ph / 2}" font-size="10" fill="#444" transform="rotate(-90 16 ${mt + ph / 2})" text-anchor="middle">average privacy (bits)</text>\n`;

  const modes = [...new Set(withAlpha.map((r) => r.mode))].sort();
  modes.forEach((mode, mi) => {
    const series = withAlpha
      .filter((r) => r.mode === mode)
      .sort((a, b) => (a.alpha as number) - (b.alpha as number));
    const color = COLORS[mi % COLORS.length];
    if (series.length > 1) {
      const d = series
        .map((r, i) => `${i === 0 ? "M" : "L"}${fmt(xOf(r.alpha as number))},${fmt(yOf(r.avgPrivacy))}`)
        .join(" ");
      body += `<path d="${d}" fill="none" stroke="${color}" stroke-width="1.6"/>\n`;
    }
    series.forEach((r) => {
      body += `<circle cx="${fmt(xOf(r.alpha as number))}" cy="${fmt(yOf(r.avgPrivacy))}" r="3.2" fill="${color}"/>\n`;
      body += `<text x="${fmt(xOf(r.alpha as number))}" y="${fmt(yOf(r.avgPrivacy) - 7)}" font-size="8" fill="#333" text-anchor="middle">${fmt(r.avgPrivacy, 3)}</text>\n`;
      body += `<text x="${fmt(xOf(r.alpha as number))}" y="${mt + ph + 12}" font-size="8.5" fill="#333" text-anchor="middle">${fmt(r.alpha as number, 1)}</text>\n`;
    });
    body += `<rect x="${ml + pw - 120}" y="${mt + 6 + mi * 14}" width="10" height="10" fill="${color}"/>\n`;
    body += `<text x="${ml + pw - 106}" y="${mt + 14 + mi * 14}" font-size="9" fill="#333">${esc(mode)}</text>\n`;
  });
  missing.forEach((r, i) => {
    body += `<text x="${ml}" y="${mt + ph + 26 + i * 11}" font-size="8.5" fill="#999">${esc(runLabel(r))}: no alpha column</text>\n`;
  });
  return document(W, H, "Infrastructure strategy: privacy vs decay sensitivity", body);
}

export function renderFigure(figure: FigureKind, runs: RunSummary[]): string {
  if (runs.length === 0) {
    throw new ArtifactError("no runs to render");
  }
  switch (figure) {
    case "upcs":
      return renderUpcs(runs);
    case "tapcs":
      return renderTapcs(runs);
    case "privanet":
      return renderPrivanet(runs);
  }
}
