/**
 * Reader for the solver's legacy ASCII unstructured-grid snapshots.
 *
 * Only the subset the solver writes is supported: 2D points (z ignored),
 * triangle cells, scalar point data and one 3-component vector array.
 */

export interface Snapshot {
  points: Array<[number, number]>;
  triangles: Array<[number, number, number]>;
  scalars: Map<string, number[]>;
  vectors: Map<string, Array<[number, number]>>;
}

export function parseSnapshot(text: string): Snapshot {
  const tokens = text.split(/\s+/).filter((t) => t.length > 0);
  let k = 0;
  const next = () => {
    if (k >= tokens.length) throw new Error("unexpected end of snapshot file");
    return tokens[k++];
  };
  const expect = (want: string) => {
    const got = next();
    if (got !== want) throw new Error(`expected '${want}', got '${got}'`);
  };
  // header: '# vtk DataFile Version x.y', title line, ASCII, dataset
  expect("#");
  expect("vtk");
  expect("DataFile");
  expect("Version");
  next(); // version number
  // the title is a free-form line; consume tokens until ASCII
  while (tokens[k] !== "ASCII") {
    if (k >= tokens.length) throw new Error("missing ASCII marker");
    k++;
  }
  expect("ASCII");
  expect("DATASET");
  expect("UNSTRUCTURED_GRID");
  expect("POINTS");
  const np = Number(next());
  next(); // dtype
  const points: Array<[number, number]> = [];
  for (let i = 0; i < np; i++) {
    const x = Number(next());
    const y = Number(next());
    next(); // z
    points.push([x, y]);
  }
  expect("CELLS");
  const nc = Number(next());
  next(); // list length
  const triangles: Array<[number, number, number]> = [];
  for (let i = 0; i < nc; i++) {
    const n = Number(next());
    if (n !== 3) throw new Error(`only triangles supported, got cell with ${n} points`);
    triangles.push([Number(next()), Number(next()), Number(next())]);
  }
  expect("CELL_TYPES");
  next();
  for (let i = 0; i < nc; i++) {
    if (next() !== "5") throw new Error("non-triangle cell type in snapshot");
  }
  const scalars = new Map<string, number[]>();
  const vectors = new Map<string, Array<[number, number]>>();
  if (k < tokens.length) {
    expect("POINT_DATA");
    const nd = Number(next());
    if (nd !== np) throw new Error("point-data count mismatch");
    while (k < tokens.length) {
      const kind = next();
      if (kind === "SCALARS") {
        const name = next();
        next(); // dtype
        next(); // components (1)
        expect("LOOKUP_TABLE");
        next(); // table name
        const vals: number[] = [];
        for (let i = 0; i < np; i++) vals.push(Number(next()));
        scalars.set(name, vals);
      } else if (kind === "VECTORS") {
        const name = next();
        next(); // dtype
        const vals: Array<[number, number]> = [];
        for (let i = 0; i < np; i++) {
          const x = Number(next());
          const y = Number(next());
          next(); // z
          vals.push([x, y]);
        }
        vectors.set(name, vals);
      } else {
        throw new Error(`unsupported point-data kind '${kind}'`);
      }
    }
  }
  return { points, triangles, scalars, vectors };
}

/** Structural consistency: index ranges, array lengths, field presence. */
export function validateSnapshot(snap: Snapshot): string[] {
  const issues: string[] = [];
  const np = snap.points.length;
  for (const t of snap.triangles) {
    if (Math.max(...t) >= np || Math.min(...t) < 0) {
      issues.push(`triangle ${t} references a missing point`);
      break;
    }
  }
  for (const [name, vals] of snap.scalars) {
    if (vals.length !== np) issues.push(`scalar '${name}' has ${vals.length} values, want ${np}`);
  }
  for (const [name, vals] of snap.vectors) {
    if (vals.length !== np) issues.push(`vector '${name}' has ${vals.length} values, want ${np}`);
  }
  return issues;
}
