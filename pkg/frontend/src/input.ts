/**
 * Pedal emulation: keyboard hold / gamepad axis to a normalized force.
 *
 * Accelerate ramps toward +1 at 2.0/s, brake toward -1 at 2.0/s, no input
 * decays toward 0 at 1.0/s. Brake dominates when both are held. The rates
 * are slow enough that a human can park the force inside the +-0.3 band.
 */

export const ACCEL_RATE = 2.0; // per second, toward +1
export const BRAKE_RATE = 2.0; // per second, toward -1
export const DECAY_RATE = 1.0; // per second, toward 0

export interface InputState {
  accelerate: boolean;
  brake: boolean;
  /** Optional analog axis in [-1, 1]; overrides the keys when present. */
  axis?: number;
}

export function clampForce(f: number): number {
  if (!Number.isFinite(f)) return 0;
  return Math.min(1, Math.max(-1, f));
}

/** Advance the held force by dt seconds of the current input. */
export function inputToForce(force: number, input: InputState, dt: number): number {
  if (dt < 0) throw new RangeError("dt must be nonnegative");
  if (input.axis !== undefined && Number.isFinite(input.axis)) {
    return clampForce(input.axis);
  }
  if (input.brake) {
    return clampForce(force - BRAKE_RATE * dt);
  }
  if (input.accelerate) {
    return clampForce(force + ACCEL_RATE * dt);
  }
  const step = DECAY_RATE * dt;
  if (Math.abs(force) <= step) return 0;
  return force - Math.sign(force) * step;
}
