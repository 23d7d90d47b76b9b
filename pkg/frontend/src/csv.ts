/**
 * Session export in the trajectory CSV schema: `t,v,a,gap,force` with
 * acceleration by backward finite difference, directly consumable by the
 * evaluation pipeline as a human-method session.
 */

import type { RecordRow } from "./session.js";

export const CSV_HEADER = "t,v,a,gap,force";

export function exportCsv(rows: RecordRow[]): string {
  if (rows.length === 0) throw new Error("recording is empty");
  const lines = [CSV_HEADER];
  for (let i = 0; i < rows.length; i++) {
    const r = rows[i];
    let a = 0;
    if (i > 0) {
      const dt = r.t - rows[i - 1].t;
      a = dt > 0 ? (r.vHost - rows[i - 1].vHost) / dt : 0;
    }
    lines.push(
      `${r.t.toFixed(6)},${r.vHost.toFixed(9)},${a.toFixed(9)},` +
        `${r.gap.toFixed(9)},${r.force.toFixed(6)}`,
    );
  }
  return lines.join("\n") + "\n";
}

/** Parse an exported CSV back into rows (test oracle and re-import path). */
export function parseCsv(text: string): { t: number; v: number; a: number; gap: number; force: number }[] {
  const lines = text.trim().split("\n");
  if (lines[0] !== CSV_HEADER) throw new Error(`bad header ${JSON.stringify(lines[0])}`);
  return lines.slice(1).map((line, i) => {
    const parts = line.split(",").map(Number);
    if (parts.length !== 5 || parts.some((x) => !Number.isFinite(x))) {
      throw new Error(`bad row at line ${i + 2}`);
    }
    const [t, v, a, gap, force] = parts;
    return { t, v, a, gap, force };
  });
}
