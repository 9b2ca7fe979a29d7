/**
 * SVG renderer for SER curves plus the machine-readable sidecar.
 *
 * The sidecar JSON is the testable surface: series names, per-series point
 * counts, axis ranges, and which points were clamped to the zero-SER
 * floor. Pixels are never asserted.
 */

import type { ResultRow, XKey } from "./csv.js";

/** Zero SER cannot sit on a log axis; such points render at this floor. */
export const SER_FLOOR = 1e-7;

export interface PlotSpec {
  xKey: XKey;
  title?: string;
  xLabel?: string;
  yLabel?: string;
  /** keep only these detectors (default: all present) */
  detectors?: string[];
  width?: number;
  height?: number;
}

export interface SeriesPoint {
  x: number;
  ser: number;
  plotted: number;
  floored: boolean;
}

export interface SidecarSeries {
  name: string;
  count: number;
  floored_count: number;
  points: SeriesPoint[];
}

export interface Sidecar {
  x_key: XKey;
  floor: number;
  x_range: [number, number];
  y_range: [number, number];
  series: SidecarSeries[];
}

export class PlotError extends Error {}

const PALETTE = [
  "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
  "#8c564b", "#e377c2", "#17becf", "#bcbd22", "#7f7f7f",
];

export function buildSeries(rows: ResultRow[], spec: PlotSpec): SidecarSeries[] {
  const wanted = spec.detectors ? new Set(spec.detectors) : null;
  const byName = new Map<string, SeriesPoint[]>();
  for (const row of rows) {
    if (wanted && !wanted.has(row.detector)) continue;
    const floored = row.ser < SER_FLOOR;
    const point: SeriesPoint = {
      x: row[spec.xKey],
      ser: row.ser,
      plotted: floored ? SER_FLOOR : row.ser,
      floored,
    };
    const list = byName.get(row.detector);
    if (list) list.push(point);
    else byName.set(row.detector, [point]);
  }
  if (byName.size === 0) {
    throw new PlotError("no series left after filtering; nothing to plot");
  }
  const series: SidecarSeries[] = [];
  for (const [name, points] of byName) {
    points.sort((a, b) => a.x - b.x);
    series.push({
      name,
      count: points.length,
      floored_count: points.filter((p) => p.floored).length,
      points,
    });
  }
  series.sort((a, b) => a.name.localeCompare(b.name));
  return series;
}

function niceLogTicks(lo: number, hi: number): number[] {
  const ticks: number[] = [];
  for (let e = Math.floor(Math.log10(lo)); e <= Math.ceil(Math.log10(hi)); e++) {
    ticks.push(10 ** e);
  }
  return ticks;
}

function fmtTick(v: number): string {
  if (v >= 0.01 && v < 100) return String(Number(v.toPrecision(3)));
  const e = Math.round(Math.log10(v));
  return `1e${e}`;
}

export function render(rows: ResultRow[], spec: PlotSpec): { svg: string; sidecar: Sidecar } {
  const series = buildSeries(rows, spec);
  const width = spec.width ?? 860;
  const height = spec.height ?? 520;
  const m = { left: 74, right: 180, top: 48, bottom: 56 };
  const innerW = width - m.left - m.right;
  const innerH = height - m.top - m.bottom;

  const xs = series.flatMap((s) => s.points.map((p) => p.x));
  const ys = series.flatMap((s) => s.points.map((p) => p.plotted));
  let xLo = Math.min(...xs);
  let xHi = Math.max(...xs);
  if (xLo === xHi) {
    xLo -= 1;
    xHi += 1;
  }
  const yLo = 10 ** Math.floor(Math.log10(Math.min(...ys)));
  const yHi = 10 ** Math.ceil(Math.log10(Math.max(...ys)) + (Math.max(...ys) >= 1 ? 1 : 0));

  const sx = (x: number) => m.left + ((x - xLo) / (xHi - xLo)) * innerW;
  const sy = (y: number) =>
    m.top + innerH - ((Math.log10(y) - Math.log10(yLo)) / (Math.log10(yHi) - Math.log10(yLo))) * innerH;

  const parts: string[] = [];
  parts.push(
    `<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" ` +
      `viewBox="0 0 ${width} ${height}" font-family="Helvetica, Arial, sans-serif">`,
    `<rect width="${width}" height="${height}" fill="white"/>`,
  );
  if (spec.title) {
    parts.push(
      `<text x="${width / 2}" y="24" text-anchor="middle" font-size="16">${esc(spec.title)}</text>`,
    );
  }

  // grid + ticks
  const xTicks = [...new Set(xs)].sort((a, b) => a - b);
  for (const t of xTicks) {
    const px = sx(t);
    parts.push(
      `<line x1="${px.toFixed(1)}" y1="${m.top}" x2="${px.toFixed(1)}" y2="${m.top + innerH}" stroke="#ddd"/>`,
      `<text x="${px.toFixed(1)}" y="${m.top + innerH + 18}" text-anchor="middle" font-size="11">${t}</text>`,
    );
  }
  for (const t of niceLogTicks(yLo, yHi)) {
    const py = sy(t);
    parts.push(
      `<line x1="${m.left}" y1="${py.toFixed(1)}" x2="${m.left + innerW}" y2="${py.toFixed(1)}" stroke="#ddd"/>`,
      `<text x="${m.left - 8}" y="${(py + 4).toFixed(1)}" text-anchor="end" font-size="11">${fmtTick(t)}</text>`,
    );
  }
  parts.push(
    `<rect x="${m.left}" y="${m.top}" width="${innerW}" height="${innerH}" fill="none" stroke="#444"/>`,
    `<text x="${m.left + innerW / 2}" y="${height - 14}" text-anchor="middle" font-size="13">${esc(
      spec.xLabel ?? spec.xKey,
    )}</text>`,
    `<text x="20" y="${m.top + innerH / 2}" text-anchor="middle" font-size="13" ` +
      `transform="rotate(-90 20 ${m.top + innerH / 2})">${esc(spec.yLabel ?? "SER")}</text>`,
  );

  // series lines, markers, legend
  series.forEach((s, i) => {
    const color = PALETTE[i % PALETTE.length];
    const path = s.points.map((p) => `${sx(p.x).toFixed(1)},${sy(p.plotted).toFixed(1)}`).join(" ");
    parts.push(`<polyline points="${path}" fill="none" stroke="${color}" stroke-width="1.8"/>`);
    for (const p of s.points) {
      const px = sx(p.x).toFixed(1);
      const py = sy(p.plotted).toFixed(1);
      if (p.floored) {
        // open, downward triangle: the true value lies at or below the floor
        parts.push(
          `<path d="M ${px} ${py} m -5 -4 l 10 0 l -5 9 z" fill="white" stroke="${color}" stroke-width="1.5">` +
            `<title>${esc(s.name)}: SER ${p.ser} at floor ${SER_FLOOR}</title></path>`,
        );
      } else {
        parts.push(`<circle cx="${px}" cy="${py}" r="3.4" fill="${color}"/>`);
      }
    }
    const ly = m.top + 14 + i * 20;
    const lx = m.left + innerW + 14;
    parts.push(
      `<line x1="${lx}" y1="${ly}" x2="${lx + 24}" y2="${ly}" stroke="${color}" stroke-width="1.8"/>`,
      `<circle cx="${lx + 12}" cy="${ly}" r="3.4" fill="${color}"/>`,
      `<text x="${lx + 30}" y="${ly + 4}" font-size="12">${esc(s.name)}</text>`,
    );
  });
  if (series.some((s) => s.floored_count > 0)) {
    parts.push(
      `<text x="${m.left}" y="${m.top - 8}" font-size="11" fill="#666">` +
        `open triangles: SER below the ${SER_FLOOR} plotting floor</text>`,
    );
  }
  parts.push("</svg>");

  const sidecar: Sidecar = {
    x_key: spec.xKey,
    floor: SER_FLOOR,
    x_range: [xLo, xHi],
    y_range: [yLo, yHi],
    series,
  };
  return { svg: parts.join("\n"), sidecar };
}

function esc(s: string): string {
  return s.replace(/&/g, "&amp;").replace(/</g, "&lt;").replace(/>/g, "&gt;");
}
