import { describe, expect, it } from "vitest";

import { CSV_HEADER, exportCsv, parseCsv } from "../src/csv.js";
import type { RecordRow } from "../src/session.js";

function rows20Hz(seconds: number): RecordRow[] {
  const rows: RecordRow[] = [];
  for (let i = 0; i < seconds * 20; i++) {
    const t = (i + 1) * 0.05;
    rows.push({ t, vHost: 30 + Math.sin(t), vLead: 30, gap: 55 + 2 * Math.cos(t), force: 0.1 });
  }
  return rows;
}

describe("exportCsv", () => {
  it("header is exactly t,v,a,gap,force", () => {
    const text = exportCsv(rows20Hz(1));
    expect(text.split("\n")[0]).toBe(CSV_HEADER);
    expect(CSV_HEADER).toBe("t,v,a,gap,force");
  });

  it("row count equals session ticks at 20 Hz", () => {
    const text = exportCsv(rows20Hz(60));
    expect(text.trim().split("\n").length).toBe(1 + 60 * 20);
  });

  it("acceleration column is the backward finite difference of v", () => {
    const rows = rows20Hz(2);
    const parsed = parseCsv(exportCsv(rows));
    for (let i = 1; i < parsed.length; i++) {
      const expected = (rows[i].vHost - rows[i - 1].vHost) / (rows[i].t - rows[i - 1].t);
      expect(parsed[i].a).toBeCloseTo(expected, 6);
    }
    expect(parsed[0].a).toBe(0);
  });

  it("round-trips through the parser without loss beyond formatting", () => {
    const rows = rows20Hz(3);
    const parsed = parseCsv(exportCsv(rows));
    expect(parsed.length).toBe(rows.length);
    parsed.forEach((p, i) => {
      expect(p.t).toBeCloseTo(rows[i].t, 6);
      expect(p.v).toBeCloseTo(rows[i].vHost, 8);
      expect(p.gap).toBeCloseTo(rows[i].gap, 8);
      expect(p.force).toBeCloseTo(rows[i].force, 6);
    });
  });

  it("rejects an empty recording", () => {
    expect(() => exportCsv([])).toThrow();
  });

  it("parser rejects a corrupt row with its line number", () => {
    // The first "0.100000" in the file is the force field of the first
    // data row, which sits on line 2 (line 1 is the header).
    const text = exportCsv(rows20Hz(1)).replace("0.100000", "oops");
    expect(() => parseCsv(text)).toThrow(/line 2/);
  });
});
