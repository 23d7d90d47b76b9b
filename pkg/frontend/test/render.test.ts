import { describe, expect, it } from "vitest";

import {
  gapBarFraction,
  gapZone,
  leadRectWidth,
  speedNeedleAngle,
  ZONE_COLORS,
} from "../src/render.js";

describe("leadRectWidth", () => {
  it("doubles when the gap halves", () => {
    expect(leadRectWidth(27.5)).toBeCloseTo(2 * leadRectWidth(55), 9);
  });

  it("is strictly decreasing in gap", () => {
    let prev = Infinity;
    for (let gap = 5; gap <= 300; gap += 5) {
      const wd = leadRectWidth(gap);
      expect(wd).toBeLessThan(prev);
      prev = wd;
    }
  });

  it("rejects nonpositive gaps", () => {
    expect(() => leadRectWidth(0)).toThrow(RangeError);
  });
});

describe("gapZone", () => {
  it("marks the encouraged 30..80 band inclusive", () => {
    expect(gapZone(30)).toBe("encouraged");
    expect(gapZone(55)).toBe("encouraged");
    expect(gapZone(80)).toBe("encouraged");
  });

  it("flags the danger zones", () => {
    expect(gapZone(29.9)).toBe("danger-close");
    expect(gapZone(80.1)).toBe("danger-far");
  });

  it("every zone has a color", () => {
    for (const zone of ["danger-close", "encouraged", "danger-far"] as const) {
      expect(ZONE_COLORS[zone]).toMatch(/^#[0-9a-f]{6}$/);
    }
  });
});

describe("gauges", () => {
  it("gap bar fraction clamps to [0, 1]", () => {
    expect(gapBarFraction(-5)).toBe(0);
    expect(gapBarFraction(60, 120)).toBeCloseTo(0.5, 9);
    expect(gapBarFraction(500)).toBe(1);
  });

  it("needle sweeps 270 degrees from zero to max speed", () => {
    const sweep = speedNeedleAngle(40) - speedNeedleAngle(0);
    expect(sweep).toBeCloseTo(Math.PI * 1.5, 9);
  });
});
