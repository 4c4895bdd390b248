/**
 * Ledger CSV parsing and energy-trace checks.
 *
 * The solver appends one row per step with the fixed column order
 * step,time,e_kin,e_bend,e_surf,e_int,e_wall,total,d_visc,d_mu,d_lambda,
 * d_wall_ac,d_slip,energy_law_residual,mass_1..mass_N.
 */

export interface LedgerTable {
  columns: string[];
  rows: number[][];
  nPhases: number;
}

const REQUIRED_PREFIX = [
  "step",
  "time",
  "e_kin",
  "e_bend",
  "e_surf",
  "e_int",
  "e_wall",
  "total",
  "d_visc",
  "d_mu",
  "d_lambda",
  "d_wall_ac",
  "d_slip",
  "energy_law_residual",
];

export function parseLedger(text: string): LedgerTable {
  const lines = text.trim().split(/\r?\n/);
  if (lines.length < 1) throw new Error("empty ledger file");
  const columns = lines[0].split(",");
  for (let i = 0; i < REQUIRED_PREFIX.length; i++) {
    if (columns[i] !== REQUIRED_PREFIX[i]) {
      throw new Error(`unexpected ledger column ${i}: got '${columns[i]}', want '${REQUIRED_PREFIX[i]}'`);
    }
  }
  const massCols = columns.slice(REQUIRED_PREFIX.length);
  if (!massCols.every((c, i) => c === `mass_${i + 1}`)) {
    throw new Error(`trailing columns must be mass_1..mass_N, got ${massCols.join(",")}`);
  }
  const rows = lines.slice(1).map((line, k) => {
    const vals = line.split(",").map(Number);
    if (vals.length !== columns.length || vals.some((v) => Number.isNaN(v))) {
      throw new Error(`bad ledger row ${k + 1}: '${line}'`);
    }
    return vals;
  });
  return { columns, rows, nPhases: massCols.length };
}

export function column(table: LedgerTable, name: string): number[] {
  const idx = table.columns.indexOf(name);
  if (idx < 0) throw new Error(`no such column: ${name}`);
  return table.rows.map((r) => r[idx]);
}

/** Largest upward jump of the total energy, relative to its initial magnitude. */
export function worstEnergyIncrease(table: LedgerTable): number {
  const tot = column(table, "total");
  const scale = Math.max(Math.abs(tot[0]), 1e-300);
  let worst = 0;
  for (let i = 1; i < tot.length; i++) {
    worst = Math.max(worst, (tot[i] - tot[i - 1]) / scale);
  }
  return worst;
}

/** Largest mismatch between the total column and the re-summed parts. */
export function worstResumError(table: LedgerTable): number {
  const parts = ["e_kin", "e_bend", "e_surf", "e_int", "e_wall"].map((c) => column(table, c));
  const tot = column(table, "total");
  let worst = 0;
  for (let i = 0; i < tot.length; i++) {
    const s = parts.reduce((acc, col) => acc + col[i], 0);
    worst = Math.max(worst, Math.abs(s - tot[i]) / (1 + Math.abs(tot[i])));
  }
  return worst;
}

/** Per-phase relative mass drift over the whole run. */
export function massDrift(table: LedgerTable): number[] {
  const out: number[] = [];
  for (let p = 1; p <= table.nPhases; p++) {
    const m = column(table, `mass_${p}`);
    const scale = Math.max(Math.abs(m[0]), 1e-300);
    out.push(Math.max(...m.map((v) => Math.abs(v - m[0]) / scale)));
  }
  return out;
}

export interface LedgerSummary {
  steps: number;
  finalTime: number;
  initialTotal: number;
  finalTotal: number;
  worstEnergyIncrease: number;
  worstEnergyLawResidual: number;
  worstResumError: number;
  massDrift: number[];
  dissipationShare: Record<string, number>;
}

export function summarize(table: LedgerTable): LedgerSummary {
  const tot = column(table, "total");
  const resid = column(table, "energy_law_residual");
  const channels = ["d_visc", "d_mu", "d_lambda", "d_wall_ac", "d_slip"];
  const sums = channels.map((c) => column(table, c).reduce((a, b) => a + b, 0));
  const sTot = sums.reduce((a, b) => a + b, 0) || 1;
  const share: Record<string, number> = {};
  channels.forEach((c, i) => (share[c] = sums[i] / sTot));
  return {
    steps: table.rows.length - 1,
    finalTime: column(table, "time").at(-1) ?? 0,
    initialTotal: tot[0],
    finalTotal: tot.at(-1) ?? NaN,
    worstEnergyIncrease: worstEnergyIncrease(table),
    worstEnergyLawResidual: Math.max(...resid.map(Math.abs)),
    worstResumError: worstResumError(table),
    massDrift: massDrift(table),
    dissipationShare: share,
  };
}
