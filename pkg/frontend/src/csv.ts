/**
 * Reader for the detector-benchmark result CSV.
 *
 * Expected header:
 *   detector,snr_db,nuf_db,layers,ser,symbols,errors,seed,config_hash
 *
 * The format is plain comma-separated with no quoting, so a hand-rolled
 * split keeps this tool dependency-free. Input files are never modified.
 */

import { readFileSync } from "node:fs";

export interface ResultRow {
  detector: string;
  snr_db: number;
  nuf_db: number;
  layers: number;
  ser: number;
  symbols: number;
  errors: number;
  seed: number;
  config_hash: string;
}

export const NUMERIC_COLUMNS = [
  "snr_db",
  "nuf_db",
  "layers",
  "ser",
  "symbols",
  "errors",
  "seed",
] as const;

export type XKey = "snr_db" | "layers" | "nuf_db";

export class CsvError extends Error {}

export function parseResultCsv(text: string, source = "<string>"): ResultRow[] {
  const lines = text.split(/\r?\n/).filter((l) => l.length > 0);
  if (lines.length === 0) {
    throw new CsvError(`${source}: empty CSV`);
  }
  const header = lines[0].split(",");
  const index = new Map(header.map((name, i) => [name, i]));
  for (const col of ["detector", ...NUMERIC_COLUMNS, "config_hash"]) {
    if (!index.has(col)) {
      throw new CsvError(`${source}: missing column '${col}' in header`);
    }
  }
  const rows: ResultRow[] = [];
  for (let ln = 1; ln < lines.length; ln++) {
    const parts = lines[ln].split(",");
    if (parts.length !== header.length) {
      throw new CsvError(`${source}:${ln + 1}: expected ${header.length} fields, got ${parts.length}`);
    }
    const num = (col: string): number => {
      const v = Number(parts[index.get(col)!]);
      if (!Number.isFinite(v)) {
        throw new CsvError(`${source}:${ln + 1}: non-numeric value for '${col}'`);
      }
      return v;
    };
    const row: ResultRow = {
      detector: parts[index.get("detector")!],
      snr_db: num("snr_db"),
      nuf_db: num("nuf_db"),
      layers: num("layers"),
      ser: num("ser"),
      symbols: num("symbols"),
      errors: num("errors"),
      seed: num("seed"),
      config_hash: parts[index.get("config_hash")!],
    };
    if (row.ser < 0 || row.ser > 1) {
      throw new CsvError(`${source}:${ln + 1}: ser ${row.ser} outside [0, 1]`);
    }
    rows.push(row);
  }
  return rows;
}

export function readResultCsv(path: string): ResultRow[] {
  return parseResultCsv(readFileSync(path, "utf8"), path);
}
