import { mkdtempSync, readFileSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { describe, expect, test } from "vitest";

import { main, parseArgs, runPlot } from "../src/cli.js";

const HEADER = "detector,snr_db,nuf_db,layers,ser,symbols,errors,seed,config_hash";

function writeFixture(dir: string): string {
  const path = join(dir, "sweep.csv");
  const lines = [HEADER];
  for (const snr of [0, 4, 8]) {
    lines.push(`zf,${snr},0.0,0,${0.1 / (snr + 1)},10000,${Math.round(1000 / (snr + 1))},1,h`);
    lines.push(`ml,${snr},0.0,0,${snr === 8 ? 0 : 0.01 / (snr + 1)},10000,7,1,h`);
  }
  writeFileSync(path, lines.join("\n") + "\n");
  return path;
}

describe("cli", () => {
  test("flag mode writes SVG and sidecar", () => {
    const dir = mkdtempSync(join(tmpdir(), "vbplot-"));
    const csv = writeFixture(dir);
    const out = join(dir, "fig.svg");
    const code = main(["--csv", csv, "--x", "snr_db", "--out", out, "--title", "SER vs SNR"]);
    expect(code).toBe(0);
    const svg = readFileSync(out, "utf8");
    expect(svg.startsWith("<svg")).toBe(true);
    const sidecar = JSON.parse(readFileSync(out + ".json", "utf8"));
    expect(sidecar.series.map((s: any) => s.name)).toEqual(["ml", "zf"]);
    expect(sidecar.series.map((s: any) => s.count)).toEqual([3, 3]);
    // the ser=0 row is flagged
    expect(sidecar.series[0].floored_count).toBe(1);
  });

  test("config mode mirrors the flags", () => {
    const dir = mkdtempSync(join(tmpdir(), "vbplot-"));
    const csv = writeFixture(dir);
    const cfgPath = join(dir, "plot.json");
    const out = join(dir, "cfg.svg");
    writeFileSync(cfgPath, JSON.stringify({ csv, x: "snr_db", out, detectors: ["zf"] }));
    expect(main(["--config", cfgPath])).toBe(0);
    const sidecar = JSON.parse(readFileSync(out + ".json", "utf8"));
    expect(sidecar.series.map((s: any) => s.name)).toEqual(["zf"]);
  });

  test("multiple csv inputs concatenate", () => {
    const dir = mkdtempSync(join(tmpdir(), "vbplot-"));
    const a = writeFixture(dir);
    const b = join(dir, "more.csv");
    writeFileSync(b, HEADER + "\nlmmse,0,0.0,0,0.2,1000,200,1,h\n");
    const out = join(dir, "multi.svg");
    const res = runPlot(parseArgs(["--csv", a, "--csv", b, "--x", "snr_db", "--out", out]));
    const sidecar = JSON.parse(readFileSync(res.sidecarPath, "utf8"));
    expect(sidecar.series).toHaveLength(3);
  });

  test("bad inputs fail with a message, not a throw", () => {
    expect(main(["--x", "snr_db"])).toBe(1); // no csv
    expect(main(["--csv", "nope.csv", "--x", "bogus", "--out", "o.svg"])).toBe(1);
    const dir = mkdtempSync(join(tmpdir(), "vbplot-"));
    const csv = writeFixture(dir);
    // unwritable output path
    expect(main(["--csv", csv, "--x", "snr_db", "--out", join(dir, "no/such/dir/fig.svg")])).toBe(1);
  });
});
