/**
 * Cockpit session state: latest telemetry, applied force, and the
 * recording buffer the evaluation pipeline ingests.
 */

import { clampForce } from "./input.js";

export interface StateFrame {
  type: "state";
  t: number;
  vHost: number;
  vLead: number;
  gap: number;
  force: number;
  reward: number;
}

export interface RecordRow {
  t: number;
  vHost: number;
  vLead: number;
  gap: number;
  force: number;
}

export type ConnectionState = "disconnected" | "connecting" | "connected";

export const STALE_AFTER_MS = 1000;

export function parseStateFrame(raw: string): StateFrame | null {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch {
    return null;
  }
  if (typeof data !== "object" || data === null) return null;
  const f = data as Record<string, unknown>;
  if (f.type !== "state") return null;
  for (const key of ["t", "vHost", "vLead", "gap", "force", "reward"]) {
    if (typeof f[key] !== "number" || !Number.isFinite(f[key])) return null;
  }
  return f as unknown as StateFrame;
}

export class CockpitSession {
  connection: ConnectionState = "disconnected";
  latest: StateFrame | null = null;
  force = 0;
  recording: RecordRow[] = [];
  private lastFrameAt: number | null = null;

  setForce(f: number): void {
    this.force = clampForce(f);
  }

  /** Build the outgoing control frame; |force| <= 1 always holds. */
  controlFrame(): { type: "control"; force: number } {
    return { type: "control", force: clampForce(this.force) };
  }

  /** Ingest one state frame; out-of-order sim times are dropped, not recorded. */
  onStateFrame(frame: StateFrame, nowMs: number): void {
    this.latest = frame;
    this.lastFrameAt = nowMs;
    const last = this.recording[this.recording.length - 1];
    if (last !== undefined && frame.t <= last.t) return;
    this.recording.push({
      t: frame.t,
      vHost: frame.vHost,
      vLead: frame.vLead,
      gap: frame.gap,
      force: frame.force,
    });
  }

  isStale(nowMs: number): boolean {
    if (this.lastFrameAt === null) return true;
    return nowMs - this.lastFrameAt > STALE_AFTER_MS;
  }

  canExport(): boolean {
    return this.recording.length > 0;
  }
}
