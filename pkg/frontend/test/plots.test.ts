import { describe, expect, it } from "vitest";
import { readFileSync, mkdtempSync, existsSync } from "fs";
import { tmpdir } from "os";
import { join, dirname } from "path";
import { fileURLToPath } from "url";
import { parseLedger } from "../src/ledger.js";
import { parseSnapshot } from "../src/vtk.js";
import { energyPlot, snapshotPlot } from "../src/plots.js";
import { main } from "../src/cli.js";

const here = dirname(fileURLToPath(import.meta.url));
const csvPath = join(here, "fixtures", "run.csv");
const vtkPath = join(here, "fixtures", "snap.vtk");

describe("svg rendering", () => {
  it("energy plot contains one path per series and axis labels", () => {
    const svg = energyPlot(parseLedger(readFileSync(csvPath, "utf8")), ["total", "e_wall"]);
    expect(svg.startsWith("<svg")).toBe(true);
    expect((svg.match(/<path /g) ?? []).length).toBe(2);
    expect(svg).toContain(">total<");
    expect(svg).toContain(">e_wall<");
    expect(svg).toContain(">time<");
  });

  it("snapshot plot colors every triangle and overlays the contour", () => {
    const snap = parseSnapshot(readFileSync(vtkPath, "utf8"));
    const svg = snapshotPlot(snap, { field: "phi_1" });
    expect((svg.match(/<polygon /g) ?? []).length).toBe(snap.triangles.length);
    expect((svg.match(/<line /g) ?? []).length).toBeGreaterThan(0);
    const bare = snapshotPlot(snap, { field: "phi_1", level: null });
    expect((bare.match(/<line /g) ?? []).length).toBe(0);
  });

  it("unknown field is a clear error", () => {
    const snap = parseSnapshot(readFileSync(vtkPath, "utf8"));
    expect(() => snapshotPlot(snap, { field: "nope" })).toThrow(/no scalar field 'nope'/);
  });
});

describe("cli", () => {
  it("energy and snapshot commands write svg files", () => {
    const dir = mkdtempSync(join(tmpdir(), "vpost-"));
    const out1 = join(dir, "e.svg");
    expect(main(["energy", csvPath, "-o", out1])).toBe(0);
    expect(existsSync(out1)).toBe(true);
    const out2 = join(dir, "s.svg");
    expect(main(["snapshot", vtkPath, "-o", out2, "--arrows"])).toBe(0);
    expect(readFileSync(out2, "utf8")).toContain("<svg");
  });

  it("summary validates a dissipative ledger", () => {
    expect(main(["summary", csvPath])).toBe(0);
  });

  it("usage errors exit 2", () => {
    expect(main(["energy"])).toBe(2);
    expect(main(["bogus"])).toBe(2);
  });

  it("missing files exit 1", () => {
    expect(main(["energy", "/no/such/file.csv"])).toBe(1);
  });
});
