// Pitch embedding file writer.
//
// Format consumed by the core loader:
//   line 1:  dim=<d>
//   rows:    <pitch_text_id>\t<f1>,<f2>,...,<fd>
//   last:    # model=<encoder name>
// Floats carry 6 significant digits; rows must stay within 1e-3 of unit norm.

import { renameSync, rmSync, writeFileSync } from "node:fs";

export interface VectorRow {
  id: string;
  values: number[];
}

function formatFloat(v: number): string {
  // shortest decimal of the 6-significant-digit value
  return Number(v.toPrecision(6)).toString();
}

export function renderPitchFile(rows: VectorRow[], dim: number, modelName: string): string {
  const lines = [`dim=${dim}`];
  for (const row of rows) {
    if (row.values.length !== dim) {
      throw new Error(`row ${row.id}: ${row.values.length} values, expected ${dim}`);
    }
    lines.push(`${row.id}\t${row.values.map(formatFloat).join(",")}`);
  }
  lines.push(`# model=${modelName}`);
  return lines.join("\n") + "\n";
}

export function writePitchFile(
  rows: VectorRow[],
  dim: number,
  modelName: string,
  outPath: string,
): void {
  const content = renderPitchFile(rows, dim, modelName);
  // temp file beside the target so the rename is atomic on one filesystem
  const tmp = `${outPath}.tmp-${process.pid}`;
  try {
    writeFileSync(tmp, content, "utf-8");
    renameSync(tmp, outPath);
  } catch (err) {
    rmSync(tmp, { force: true });
    throw err;
  }
}
