/**
 * Level-set contour extraction on triangle meshes (marching edges) and the
 * derived shape measurements used by the deformation plots.
 */

import type { Snapshot } from "./vtk.js";

export type Segment = [[number, number], [number, number]];

export function extractContour(snap: Snapshot, values: number[], level = 0): Segment[] {
  const v = values.map((x) => x - level);
  const segs: Segment[] = [];
  for (const tri of snap.triangles) {
    const cut: Array<[number, number]> = [];
    for (let e = 0; e < 3; e++) {
      const i = tri[e];
      const j = tri[(e + 1) % 3];
      const vi = v[i];
      const vj = v[j];
      if (vi === vj) continue;
      if ((vi < 0 && vj > 0) || (vi > 0 && vj < 0) || vi === 0 || vj === 0) {
        const s = vi / (vi - vj);
        if (s >= 0 && s <= 1) {
          const [xi, yi] = snap.points[i];
          const [xj, yj] = snap.points[j];
          const p: [number, number] = [xi + s * (xj - xi), yi + s * (yj - yi)];
          if (!cut.some((q) => Math.hypot(q[0] - p[0], q[1] - p[1]) < 1e-14)) cut.push(p);
        }
      }
    }
    if (cut.length >= 2) segs.push([cut[0], cut[1]]);
  }
  return segs;
}

export interface ContourMeasure {
  diameterX: number;
  diameterY: number;
  length: number;
  centroid: [number, number];
}

export function measureContour(segs: Segment[]): ContourMeasure {
  if (segs.length === 0) throw new Error("empty contour");
  const pts = segs.flat();
  const xs = pts.map((p) => p[0]);
  const ys = pts.map((p) => p[1]);
  let length = 0;
  let cx = 0;
  let cy = 0;
  for (const [a, b] of segs) {
    const l = Math.hypot(b[0] - a[0], b[1] - a[1]);
    length += l;
    cx += (l * (a[0] + b[0])) / 2;
    cy += (l * (a[1] + b[1])) / 2;
  }
  return {
    diameterX: Math.max(...xs) - Math.min(...xs),
    diameterY: Math.max(...ys) - Math.min(...ys),
    length,
    centroid: [cx / length, cy / length],
  };
}
