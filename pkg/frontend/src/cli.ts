/**
 * vbidet-plot: render detector-benchmark CSVs as SVG figures.
 *
 * Usage:
 *   vbidet-plot --config plot.json
 *   vbidet-plot --csv sweep.csv [--csv more.csv] --x snr_db --out figure.svg
 *                [--title ...] [--detector name ...]
 *
 * A JSON sidecar with series names, point counts and floor flags is
 * written next to the image at <out>.json.
 */

import { readFileSync, writeFileSync } from "node:fs";

import { readResultCsv, type ResultRow, type XKey } from "./csv.js";
import { PlotError, render, type PlotSpec } from "./render.js";

export interface CliConfig {
  csv: string[];
  x: XKey;
  out: string;
  title?: string;
  x_label?: string;
  y_label?: string;
  detectors?: string[];
}

const X_KEYS: XKey[] = ["snr_db", "layers", "nuf_db"];

export function parseArgs(argv: string[]): CliConfig {
  const flags = new Map<string, string[]>();
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (!arg.startsWith("--")) {
      throw new PlotError(`unexpected argument '${arg}'`);
    }
    const key = arg.slice(2);
    const value = argv[i + 1];
    if (value === undefined || value.startsWith("--")) {
      throw new PlotError(`flag --${key} needs a value`);
    }
    i++;
    const list = flags.get(key) ?? [];
    list.push(value);
    flags.set(key, list);
  }

  if (flags.has("config")) {
    const doc = JSON.parse(readFileSync(flags.get("config")![0], "utf8"));
    return normalize({
      csv: typeof doc.csv === "string" ? [doc.csv] : doc.csv,
      x: doc.x,
      out: doc.out,
      title: doc.title,
      x_label: doc.x_label,
      y_label: doc.y_label,
      detectors: doc.detectors,
    });
  }
  return normalize({
    csv: flags.get("csv") ?? [],
    x: (flags.get("x")?.[0] ?? "snr_db") as XKey,
    out: flags.get("out")?.[0] ?? "",
    title: flags.get("title")?.[0],
    x_label: flags.get("x-label")?.[0],
    y_label: flags.get("y-label")?.[0],
    detectors: flags.get("detector"),
  });
}

function normalize(cfg: CliConfig): CliConfig {
  if (!cfg.csv || cfg.csv.length === 0) {
    throw new PlotError("no input CSV given (--csv or config 'csv')");
  }
  if (!cfg.out) {
    throw new PlotError("no output path given (--out or config 'out')");
  }
  if (!X_KEYS.includes(cfg.x)) {
    throw new PlotError(`x-axis key must be one of ${X_KEYS.join(", ")}, got '${cfg.x}'`);
  }
  return cfg;
}

export function runPlot(cfg: CliConfig): { out: string; sidecarPath: string } {
  const rows: ResultRow[] = cfg.csv.flatMap((path) => readResultCsv(path));
  const spec: PlotSpec = {
    xKey: cfg.x,
    title: cfg.title,
    xLabel: cfg.x_label,
    yLabel: cfg.y_label,
    detectors: cfg.detectors,
  };
  const { svg, sidecar } = render(rows, spec);
  writeFileSync(cfg.out, svg);
  const sidecarPath = `${cfg.out}.json`;
  writeFileSync(sidecarPath, JSON.stringify(sidecar, null, 1));
  return { out: cfg.out, sidecarPath };
}

export function main(argv: string[]): number {
  try {
    const cfg = parseArgs(argv);
    const { out, sidecarPath } = runPlot(cfg);
    console.log(`wrote ${out} and ${sidecarPath}`);
    return 0;
  } catch (err) {
    console.error(`vbidet-plot: ${err instanceof Error ? err.message : err}`);
    return 1;
  }
}

if (process.argv[1] && process.argv[1].endsWith("cli.js")) {
  process.exit(main(process.argv.slice(2)));
}
