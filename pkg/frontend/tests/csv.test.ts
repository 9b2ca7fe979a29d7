import { describe, expect, test } from "vitest";

import { CsvError, parseResultCsv } from "../src/csv.js";

const HEADER = "detector,snr_db,nuf_db,layers,ser,symbols,errors,seed,config_hash";

const SAMPLE = [
  HEADER,
  "zf,0.0,0.0,0,0.1234,100000,12340,7,abc123",
  "zf,4.0,0.0,0,0.01,100000,1000,7,abc123",
  "lmmse,0.0,0.0,0,0.05,100000,5000,7,abc123",
].join("\n");

describe("parseResultCsv", () => {
  test("parses rows with numeric coercion", () => {
    const rows = parseResultCsv(SAMPLE);
    expect(rows).toHaveLength(3);
    expect(rows[0].detector).toBe("zf");
    expect(rows[0].ser).toBeCloseTo(0.1234, 12);
    expect(rows[2].symbols).toBe(100000);
  });

  test("missing column is reported by name", () => {
    const bad = SAMPLE.replace("nuf_db,", "");
    expect(() => parseResultCsv(bad)).toThrow(/missing column 'nuf_db'/);
  });

  test("field-count mismatch names the line", () => {
    const bad = SAMPLE + "\nzf,1.0,0.0";
    expect(() => parseResultCsv(bad, "f.csv")).toThrow(/f.csv:5/);
  });

  test("non-numeric and out-of-range ser rejected", () => {
    expect(() =>
      parseResultCsv(HEADER + "\nzf,0.0,0.0,0,notaser,10,1,7,h"),
    ).toThrow(CsvError);
    expect(() =>
      parseResultCsv(HEADER + "\nzf,0.0,0.0,0,1.5,10,1,7,h"),
    ).toThrow(/outside \[0, 1\]/);
  });

  test("empty input rejected", () => {
    expect(() => parseResultCsv("")).toThrow(/empty CSV/);
  });
});
