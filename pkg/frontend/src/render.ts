/**
 * Pure display geometry for the driving view: lead rectangle scaled by
 * 1/gap, gap bar with the 30/55/80 m bands, gauge arithmetic. Kept free
 * of canvas calls so the math is unit-testable.
 */

export const GAP_TARGET = 55;
export const GAP_BAND_LOW = 30;
export const GAP_BAND_HIGH = 80;

/** Apparent lead-vehicle width in px: proportional to 1/gap. */
export function leadRectWidth(gap: number, referenceWidthPx = 220, referenceGap = GAP_TARGET): number {
  if (gap <= 0) throw new RangeError("gap must be positive");
  return (referenceWidthPx * referenceGap) / gap;
}

export type GapZone = "danger-close" | "encouraged" | "danger-far";

export function gapZone(gap: number): GapZone {
  if (gap < GAP_BAND_LOW) return "danger-close";
  if (gap > GAP_BAND_HIGH) return "danger-far";
  return "encouraged";
}

export const ZONE_COLORS: Record<GapZone, string> = {
  "danger-close": "#d64545",
  encouraged: "#3f9e57",
  "danger-far": "#d6a545",
};

/** Position of a gap value on a bar spanning [0, maxGap], clamped to [0, 1]. */
export function gapBarFraction(gap: number, maxGap = 120): number {
  return Math.min(1, Math.max(0, gap / maxGap));
}

/** Speedometer needle angle in radians over a 270 degree sweep. */
export function speedNeedleAngle(speed: number, maxSpeed = 40): number {
  const frac = Math.min(1, Math.max(0, speed / maxSpeed));
  return -Math.PI * 0.75 + frac * Math.PI * 1.5;
}
