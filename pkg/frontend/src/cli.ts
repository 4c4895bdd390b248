#!/usr/bin/env node
/**
 * Postprocessing commands for solver outputs:
 *
 *   vesiflow-post energy   <run.csv>  [-o out.svg] [--series a,b,c]
 *   vesiflow-post snapshot <snap.vtk> [-o out.svg] [--field phi_1] [--no-contour] [--arrows]
 *   vesiflow-post summary  <run.csv>
 *   vesiflow-post contour  <snap.vtk> [--field phi_1] [--level 0]
 *
 * Exit codes: 0 success, 1 failed validation (e.g. energy increases), 2 usage.
 */

import { readFileSync, writeFileSync } from "fs";
import { parseLedger, summarize } from "./ledger.js";
import { parseSnapshot, validateSnapshot } from "./vtk.js";
import { extractContour, measureContour } from "./contour.js";
import { energyPlot, snapshotPlot } from "./plots.js";

function flag(args: string[], name: string): boolean {
  const i = args.indexOf(name);
  if (i >= 0) {
    args.splice(i, 1);
    return true;
  }
  return false;
}

function opt(args: string[], name: string): string | undefined {
  const i = args.indexOf(name);
  if (i >= 0 && i + 1 < args.length) {
    const v = args[i + 1];
    args.splice(i, 2);
    return v;
  }
  return undefined;
}

export function main(argv: string[]): number {
  const args = [...argv];
  const cmd = args.shift();
  try {
    if (cmd === "energy") {
      const out = opt(args, "-o") ?? "energy.svg";
      const series = opt(args, "--series")?.split(",");
      const path = args.shift();
      if (!path) throw new UsageError("energy needs a ledger CSV path");
      const table = parseLedger(readFileSync(path, "utf8"));
      writeFileSync(out, energyPlot(table, series));
      console.log(`wrote ${out} (${table.rows.length} rows)`);
      return 0;
    }
    if (cmd === "snapshot") {
      const out = opt(args, "-o") ?? "snapshot.svg";
      const field = opt(args, "--field") ?? "phi_1";
      const noContour = flag(args, "--no-contour");
      const arrows = flag(args, "--arrows");
      const path = args.shift();
      if (!path) throw new UsageError("snapshot needs a grid file path");
      const snap = parseSnapshot(readFileSync(path, "utf8"));
      const issues = validateSnapshot(snap);
      if (issues.length) {
        console.error(issues.join("\n"));
        return 1;
      }
      writeFileSync(out, snapshotPlot(snap, { field, level: noContour ? null : 0, velocityArrows: arrows }));
      console.log(`wrote ${out} (${snap.points.length} points, ${snap.triangles.length} triangles)`);
      return 0;
    }
    if (cmd === "summary") {
      const path = args.shift();
      if (!path) throw new UsageError("summary needs a ledger CSV path");
      const s = summarize(parseLedger(readFileSync(path, "utf8")));
      console.log(JSON.stringify(s, null, 2));
      return s.worstEnergyIncrease > 1e-8 || s.worstResumError > 1e-12 ? 1 : 0;
    }
    if (cmd === "contour") {
      const field = opt(args, "--field") ?? "phi_1";
      const level = Number(opt(args, "--level") ?? "0");
      const path = args.shift();
      if (!path) throw new UsageError("contour needs a grid file path");
      const snap = parseSnapshot(readFileSync(path, "utf8"));
      const vals = snap.scalars.get(field);
      if (!vals) throw new Error(`no scalar field '${field}'`);
      const m = measureContour(extractContour(snap, vals, level));
      console.log(JSON.stringify(m, null, 2));
      return 0;
    }
    throw new UsageError(`unknown command '${cmd ?? ""}'`);
  } catch (err) {
    if (err instanceof UsageError) {
      console.error(`usage error: ${err.message}`);
      return 2;
    }
    console.error(String(err));
    return 1;
  }
}

class UsageError extends Error {}

const isMain = process.argv[1] && import.meta.url.endsWith(process.argv[1].split("/").pop() ?? "");
if (isMain) {
  process.exit(main(process.argv.slice(2)));
}
