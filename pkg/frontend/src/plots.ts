/**
 * SVG rendering: energy traces from a ledger and colored field snapshots
 * with level-set overlays.  SVG is assembled as plain strings so the output
 * is stable, diffable and viewer-independent.
 */

import { LedgerTable, column } from "./ledger.js";
import type { Snapshot } from "./vtk.js";
import { Segment, extractContour } from "./contour.js";

function niceTicks(lo: number, hi: number, n = 5): number[] {
  if (!(hi > lo)) return [lo];
  const span = hi - lo;
  const step = Math.pow(10, Math.floor(Math.log10(span / n)));
  const err = (span / n) / step;
  const mult = err >= 7.5 ? 10 : err >= 3.5 ? 5 : err >= 1.5 ? 2 : 1;
  const s = mult * step;
  const start = Math.ceil(lo / s) * s;
  const out: number[] = [];
  for (let v = start; v <= hi + 1e-12 * span; v += s) out.push(v);
  return out;
}

function fmt(v: number): string {
  if (v === 0) return "0";
  const a = Math.abs(v);
  if (a >= 1e4 || a < 1e-3) return v.toExponential(2);
  return String(Math.round(v * 1e6) / 1e6);
}

class Frame {
  constructor(
    readonly x0: number, readonly x1: number, readonly y0: number, readonly y1: number,
    readonly px = 640, readonly py = 420, readonly margin = 56,
  ) {}
  sx(x: number): number {
    return this.margin + ((x - this.x0) / (this.x1 - this.x0 || 1)) * (this.px - 2 * this.margin);
  }
  sy(y: number): number {
    return this.py - this.margin - ((y - this.y0) / (this.y1 - this.y0 || 1)) * (this.py - 2 * this.margin);
  }
}

const SERIES_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b"];

/** Line chart of selected ledger columns against time. */
export function energyPlot(
  table: LedgerTable,
  series: string[] = ["total", "e_kin", "e_bend", "e_surf", "e_int", "e_wall"],
  title = "energy ledger",
): string {
  const t = column(table, "time");
  const cols = series.map((s) => column(table, s));
  const ymin = Math.min(...cols.map((c) => Math.min(...c)));
  const ymax = Math.max(...cols.map((c) => Math.max(...c)));
  const f = new Frame(Math.min(...t), Math.max(...t), ymin, ymax);
  const parts: string[] = [];
  parts.push(`<svg xmlns="http://www.w3.org/2000/svg" width="${f.px}" height="${f.py}" viewBox="0 0 ${f.px} ${f.py}">`);
  parts.push(`<rect width="100%" height="100%" fill="white"/>`);
  parts.push(`<text x="${f.px / 2}" y="20" text-anchor="middle" font-family="sans-serif" font-size="14">${title}</text>`);
  for (const tv of niceTicks(f.x0, f.x1)) {
    const x = f.sx(tv);
    parts.push(`<line x1="${x}" y1="${f.sy(f.y0)}" x2="${x}" y2="${f.sy(f.y1)}" stroke="#eee"/>`);
    parts.push(`<text x="${x}" y="${f.py - f.margin + 18}" text-anchor="middle" font-family="sans-serif" font-size="10">${fmt(tv)}</text>`);
  }
  for (const tv of niceTicks(f.y0, f.y1)) {
    const y = f.sy(tv);
    parts.push(`<line x1="${f.sx(f.x0)}" y1="${y}" x2="${f.sx(f.x1)}" y2="${y}" stroke="#eee"/>`);
    parts.push(`<text x="${f.margin - 6}" y="${y + 3}" text-anchor="end" font-family="sans-serif" font-size="10">${fmt(tv)}</text>`);
  }
  series.forEach((name, i) => {
    const c = cols[i];
    const path = t.map((tv, k) => `${k === 0 ? "M" : "L"}${f.sx(tv).toFixed(2)},${f.sy(c[k]).toFixed(2)}`).join("");
    parts.push(`<path d="${path}" fill="none" stroke="${SERIES_COLORS[i % SERIES_COLORS.length]}" stroke-width="1.5"/>`);
    parts.push(
      `<text x="${f.px - f.margin + 4}" y="${f.margin + 14 * i}" font-family="sans-serif" font-size="10" fill="${SERIES_COLORS[i % SERIES_COLORS.length]}">${name}</text>`,
    );
  });
  parts.push(`<text x="${f.px / 2}" y="${f.py - 8}" text-anchor="middle" font-family="sans-serif" font-size="11">time</text>`);
  parts.push("</svg>");
  return parts.join("\n");
}

/** Two-slope blue-white-red map over [-1, 1]. */
function diverging(v: number): string {
  const x = Math.max(-1, Math.min(1, v));
  const lerp = (a: number, b: number, s: number) => Math.round(a + (b - a) * s);
  if (x < 0) {
    const s = x + 1;
    return `rgb(${lerp(33, 255, s)},${lerp(102, 255, s)},${lerp(172, 255, s)})`;
  }
  const s = x;
  return `rgb(${lerp(255, 178, s)},${lerp(255, 24, s)},${lerp(255, 43, s)})`;
}

export interface SnapshotPlotOptions {
  field?: string;
  level?: number | null;
  velocityArrows?: boolean;
  width?: number;
}

/** Triangle-colored field plot with optional zero-level contour and arrows. */
export function snapshotPlot(snap: Snapshot, opts: SnapshotPlotOptions = {}): string {
  const field = opts.field ?? "phi_1";
  const vals = snap.scalars.get(field);
  if (!vals) throw new Error(`snapshot has no scalar field '${field}' (fields: ${[...snap.scalars.keys()].join(", ")})`);
  const xs = snap.points.map((p) => p[0]);
  const ys = snap.points.map((p) => p[1]);
  const x0 = Math.min(...xs);
  const x1 = Math.max(...xs);
  const y0 = Math.min(...ys);
  const y1 = Math.max(...ys);
  const width = opts.width ?? 640;
  const scale = (width - 20) / (x1 - x0 || 1);
  const height = Math.ceil((y1 - y0) * scale) + 20;
  const sx = (x: number) => 10 + (x - x0) * scale;
  const sy = (y: number) => height - 10 - (y - y0) * scale;
  const vmax = Math.max(...vals.map(Math.abs)) || 1;
  const parts: string[] = [];
  parts.push(`<svg xmlns="http://www.w3.org/2000/svg" width="${width}" height="${height}" viewBox="0 0 ${width} ${height}">`);
  parts.push(`<rect width="100%" height="100%" fill="white"/>`);
  for (const tri of snap.triangles) {
    const mean = (vals[tri[0]] + vals[tri[1]] + vals[tri[2]]) / 3 / vmax;
    const pts = tri.map((i) => `${sx(snap.points[i][0]).toFixed(2)},${sy(snap.points[i][1]).toFixed(2)}`).join(" ");
    parts.push(`<polygon points="${pts}" fill="${diverging(mean)}" stroke="none"/>`);
  }
  if (opts.level !== null) {
    const segs: Segment[] = extractContour(snap, vals, opts.level ?? 0);
    for (const [a, b] of segs) {
      parts.push(
        `<line x1="${sx(a[0]).toFixed(2)}" y1="${sy(a[1]).toFixed(2)}" x2="${sx(b[0]).toFixed(2)}" y2="${sy(b[1]).toFixed(2)}" stroke="black" stroke-width="1.2"/>`,
      );
    }
  }
  if (opts.velocityArrows) {
    const vel = snap.vectors.get("velocity");
    if (vel) {
      const speed = vel.map(([u, v]) => Math.hypot(u, v));
      const smax = Math.max(...speed) || 1;
      const stride = Math.max(1, Math.floor(snap.points.length / 400));
      const alen = 18;
      for (let i = 0; i < snap.points.length; i += stride) {
        if (speed[i] < 1e-3 * smax) continue;
        const [px, py] = snap.points[i];
        const [u, v] = vel[i];
        const l = (speed[i] / smax) * alen;
        const ux = (u / speed[i]) * l;
        const uy = (v / speed[i]) * l;
        parts.push(
          `<line x1="${sx(px).toFixed(1)}" y1="${sy(py).toFixed(1)}" x2="${(sx(px) + ux).toFixed(1)}" y2="${(sy(py) - uy).toFixed(1)}" stroke="#333" stroke-width="0.7"/>`,
        );
      }
    }
  }
  parts.push("</svg>");
  return parts.join("\n");
}
