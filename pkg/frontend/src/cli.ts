#!/usr/bin/env node
/**
 * Figure renderer for sdlpsim artifacts.
 *
 * Usage:
 *   plots --figure upcs --in out/s1_static out/s1_sdn --out fig4.svg
 *   plots --figure tapcs --in out/s2_static out/s2_sdn --out fig5.svg
 *   plots --figure privanet --in out/a01 out/a02 out/a03 --out fig6.svg
 *
 * Output is deterministic SVG; identical inputs give identical bytes.
 */

import { writeFileSync } from "fs";
import { FigureKind, FigureSpec, renderFigure } from "./figures.js";
import { ArtifactError, readRuns } from "./summary.js";

const FIGURES: FigureKind[] = ["upcs", "tapcs", "privanet"];

export function parseArgs(argv: string[]): FigureSpec {
  let figure: string | undefined;
  const inputDirs: string[] = [];
  let outPath: string | undefined;
  let i = 0;
  while (i < argv.length) {
    const arg = argv[i];
    if (arg === "--figure") {
      figure = argv[++i];
    } else if (arg === "--in") {
      while (i + 1 < argv.length && !argv[i + 1].startsWith("--")) {
        inputDirs.push(argv[++i]);
      }
    } else if (arg === "--out") {
      outPath = argv[++i];
    } else {
      throw new ArtifactError(`unknown argument ${arg}`);
    }
    i++;
  }
  if (!figure || !FIGURES.includes(figure as FigureKind)) {
    throw new ArtifactError(`--figure must be one of ${FIGURES.join(", ")}`);
  }
  if (inputDirs.length === 0) {
    throw new ArtifactError("--in needs at least one run directory");
  }
  if (!outPath) {
    throw new ArtifactError("--out is required");
  }
  if (!outPath.endsWith(".svg")) {
    throw new ArtifactError("output must be an .svg path (deterministic SVG renderer)");
  }
  return { figure: figure as FigureKind, inputDirs, outPath };
}

export function render(spec: FigureSpec): string {
  const runs = readRuns(spec.inputDirs);
  const svg = renderFigure(spec.figure, runs);
  writeFileSync(spec.outPath, svg);
  return spec.outPath;
}

export function main(argv: string[]): number {
  try {
    const spec = parseArgs(argv);
    const out = render(spec);
    console.log(`wrote ${out}`);
    return 0;
  } catch (err) {
    if (err instanceof ArtifactError) {
      console.error(`error: ${err.message}`);
      return 2;
    }
    throw err;
  }
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(main(process.argv.slice(2)));
}
