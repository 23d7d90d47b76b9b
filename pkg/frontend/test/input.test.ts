import { describe, expect, it } from "vitest";

import { clampForce, inputToForce } from "../src/input.js";

function holdFor(force: number, input: Parameters<typeof inputToForce>[1], seconds: number, hz = 100): number {
  const dt = 1 / hz;
  for (let i = 0; i < seconds * hz; i++) {
    force = inputToForce(force, input, dt);
  }
  return force;
}

describe("inputToForce", () => {
  it("saturates at +1 after holding accelerate for 0.5 s", () => {
    expect(holdFor(0, { accelerate: true, brake: false }, 0.5)).toBeCloseTo(1.0, 9);
  });

  it("saturates at -1 after holding brake for 0.5 s", () => {
    expect(holdFor(0, { accelerate: false, brake: true }, 0.5)).toBeCloseTo(-1.0, 9);
  });

  it("decays 0.6 to 0 in exactly 0.6 s", () => {
    const after = holdFor(0.6, { accelerate: false, brake: false }, 0.6);
    expect(after).toBeCloseTo(0, 9);
  });

  it("decay does not overshoot through zero", () => {
    const after = holdFor(0.3, { accelerate: false, brake: false }, 2.0);
    expect(after).toBe(0);
  });

  it("brake dominates when both are held", () => {
    const after = holdFor(0.5, { accelerate: true, brake: true }, 0.2);
    expect(after).toBeLessThan(0.5);
    expect(holdFor(0.5, { accelerate: true, brake: true }, 1.0)).toBe(-1);
  });

  it("never leaves [-1, 1]", () => {
    let force = 0;
    for (let i = 0; i < 1000; i++) {
      force = inputToForce(force, { accelerate: i % 3 === 0, brake: i % 7 === 0 }, 0.05);
      expect(Math.abs(force)).toBeLessThanOrEqual(1);
    }
  });

  it("analog axis overrides keys and is clamped", () => {
    expect(inputToForce(0, { accelerate: true, brake: false, axis: -0.4 }, 0.05)).toBe(-0.4);
    expect(inputToForce(0, { accelerate: false, brake: false, axis: 7 }, 0.05)).toBe(1);
  });

  it("rejects negative dt", () => {
    expect(() => inputToForce(0, { accelerate: false, brake: false }, -0.1)).toThrow(RangeError);
  });
});

describe("clampForce", () => {
  it("clamps and zeroes non-finite input", () => {
    expect(clampForce(2)).toBe(1);
    expect(clampForce(-9)).toBe(-1);
    expect(clampForce(Number.NaN)).toBe(0);
  });
});
