import { describe, expect, it } from "vitest";
import { readFileSync } from "fs";
import { join, dirname } from "path";
import { fileURLToPath } from "url";
import { parseSnapshot, validateSnapshot } from "../src/vtk.js";
import { extractContour, measureContour } from "../src/contour.js";

const here = dirname(fileURLToPath(import.meta.url));
const fixture = readFileSync(join(here, "fixtures", "snap.vtk"), "utf8");

describe("snapshot parsing", () => {
  it("reads points, cells and point data", () => {
    const s = parseSnapshot(fixture);
    expect(s.points.length).toBe(81); // 9 x 9 vertex grid
    expect(s.triangles.length).toBe(128);
    expect([...s.scalars.keys()]).toContain("phi_1");
    expect([...s.scalars.keys()]).toContain("pressure");
    expect([...s.vectors.keys()]).toContain("velocity");
    expect(validateSnapshot(s)).toEqual([]);
  });

  it("phase values stay within the overshoot band", () => {
    const s = parseSnapshot(fixture);
    const phi = s.scalars.get("phi_1")!;
    expect(Math.min(...phi)).toBeGreaterThanOrEqual(-1.05);
    expect(Math.max(...phi)).toBeLessThanOrEqual(1.05);
  });

  it("rejects non-triangle cells", () => {
    const broken = fixture.replace(/\n3 (\d+) (\d+) (\d+)\n/, "\n4 $1 $2 $3 0\n");
    expect(() => parseSnapshot(broken)).toThrow(/only triangles/);
  });

  it("flags out-of-range connectivity", () => {
    const s = parseSnapshot(fixture);
    s.triangles[0] = [0, 1, 99999];
    expect(validateSnapshot(s).length).toBeGreaterThan(0);
  });
});

describe("contours on synthetic fields", () => {
  function unitSquareSnap(values: (x: number, y: number) => number, n = 24) {
    const points: Array<[number, number]> = [];
    for (let i = 0; i <= n; i++)
      for (let j = 0; j <= n; j++) points.push([i / n, j / n]);
    const triangles: Array<[number, number, number]> = [];
    const vid = (i: number, j: number) => i * (n + 1) + j;
    for (let i = 0; i < n; i++)
      for (let j = 0; j < n; j++) {
        triangles.push([vid(i, j), vid(i + 1, j), vid(i + 1, j + 1)]);
        triangles.push([vid(i, j), vid(i + 1, j + 1), vid(i, j + 1)]);
      }
    const vals = points.map(([x, y]) => values(x, y));
    return {
      snap: { points, triangles, scalars: new Map([["f", vals]]), vectors: new Map() },
      vals,
    };
  }

  it("recovers a circle to mesh accuracy", () => {
    const r = 0.31;
    const { snap, vals } = unitSquareSnap((x, y) => r - Math.hypot(x - 0.5, y - 0.5));
    const m = measureContour(extractContour(snap, vals));
    expect(m.diameterX).toBeCloseTo(2 * r, 1);
    expect(m.diameterY).toBeCloseTo(2 * r, 1);
    expect(m.length).toBeCloseTo(2 * Math.PI * r, 1);
    expect(m.centroid[0]).toBeCloseTo(0.5, 2);
    expect(m.centroid[1]).toBeCloseTo(0.5, 2);
  });

  it("linear field gives the exact straight contour", () => {
    const { snap, vals } = unitSquareSnap((x) => x - 0.4375);
    const m = measureContour(extractContour(snap, vals));
    expect(m.diameterX).toBeLessThan(1e-12);
    expect(m.diameterY).toBeCloseTo(1, 6);
    expect(m.length).toBeCloseTo(1, 6);
  });

  it("throws on an empty contour", () => {
    const { snap, vals } = unitSquareSnap(() => -1);
    expect(() => measureContour(extractContour(snap, vals))).toThrow(/empty/);
  });
});
