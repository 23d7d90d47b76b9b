/**
 * Browser entry point: wires keyboard input, the gateway client, the
 * canvas scene and the CSV download button together. All logic with
 * behavior worth testing lives in the sibling modules.
 */

import { GatewayClient, type SocketLike } from "./client.js";
import { exportCsv } from "./csv.js";
import { inputToForce, type InputState } from "./input.js";
import {
  GAP_BAND_HIGH,
  GAP_BAND_LOW,
  gapBarFraction,
  gapZone,
  leadRectWidth,
  speedNeedleAngle,
  ZONE_COLORS,
} from "./render.js";

const params = new URLSearchParams(window.location.search);
const url = params.get("gateway") ?? "ws://127.0.0.1:8765";

const canvas = document.getElementById("scene") as HTMLCanvasElement;
const ctx = canvas.getContext("2d")!;
const statusEl = document.getElementById("status")!;
const exportBtn = document.getElementById("export") as HTMLButtonElement;

const input: InputState = { accelerate: false, brake: false };
const client = new GatewayClient(url, (u) => new WebSocket(u) as unknown as SocketLike);

window.addEventListener("keydown", (e) => {
  if (e.key === "ArrowUp" || e.key === "w") input.accelerate = true;
  if (e.key === "ArrowDown" || e.key === "s") input.brake = true;
});
window.addEventListener("keyup", (e) => {
  if (e.key === "ArrowUp" || e.key === "w") input.accelerate = false;
  if (e.key === "ArrowDown" || e.key === "s") input.brake = false;
});

exportBtn.addEventListener("click", () => {
  if (!client.session.canExport()) return;
  const blob = new Blob([exportCsv(client.session.recording)], { type: "text/csv" });
  const a = document.createElement("a");
  a.href = URL.createObjectURL(blob);
  a.download = "drive_session.csv";
  a.click();
  URL.revokeObjectURL(a.href);
});

let lastTick = performance.now();

function tick(): void {
  const now = performance.now();
  const dt = (now - lastTick) / 1000;
  lastTick = now;
  client.session.setForce(inputToForce(client.session.force, input, dt));
  draw(now);
  exportBtn.disabled = !client.session.canExport();
  requestAnimationFrame(tick);
}

function draw(nowMs: number): void {
  const w = canvas.width;
  const h = canvas.height;
  ctx.fillStyle = "#202830";
  ctx.fillRect(0, 0, w, h);

  const frame = client.session.latest;
  statusEl.textContent =
    client.session.connection === "connected"
      ? client.session.isStale(nowMs)
        ? "connected (stale frames)"
        : "connected"
      : `disconnected, retry in ${(client.reconnectDelayMs / 1000).toFixed(1)} s`;

  if (frame === null) return;

  // road and lead vehicle, width proportional to 1/gap
  ctx.fillStyle = "#3a4450";
  ctx.fillRect(w * 0.25, 0, w * 0.5, h * 0.6);
  const rectW = Math.min(w * 0.45, leadRectWidth(Math.max(frame.gap, 1)));
  ctx.fillStyle = "#c8ccd4";
  ctx.fillRect((w - rectW) / 2, h * 0.3 - rectW * 0.35, rectW, rectW * 0.7);

  // gap bar with the encouraged band
  const barY = h * 0.68;
  ctx.fillStyle = "#151a20";
  ctx.fillRect(w * 0.1, barY, w * 0.8, 16);
  ctx.fillStyle = "#2c4435";
  const lo = gapBarFraction(GAP_BAND_LOW);
  const hi = gapBarFraction(GAP_BAND_HIGH);
  ctx.fillRect(w * 0.1 + w * 0.8 * lo, barY, w * 0.8 * (hi - lo), 16);
  ctx.fillStyle = ZONE_COLORS[gapZone(frame.gap)];
  ctx.fillRect(w * 0.1 + w * 0.8 * gapBarFraction(frame.gap) - 3, barY - 4, 6, 24);

  // speedometer
  const cx = w * 0.2;
  const cy = h * 0.88;
  ctx.strokeStyle = "#c8ccd4";
  ctx.beginPath();
  ctx.arc(cx, cy, 42, 0, Math.PI * 2);
  ctx.stroke();
  const ang = speedNeedleAngle(frame.vHost);
  ctx.beginPath();
  ctx.moveTo(cx, cy);
  ctx.lineTo(cx + 38 * Math.cos(ang - Math.PI / 2), cy + 38 * Math.sin(ang - Math.PI / 2));
  ctx.stroke();

  ctx.fillStyle = "#e6e9ee";
  ctx.font = "14px monospace";
  ctx.fillText(`v ${frame.vHost.toFixed(1)} m/s`, cx - 42, cy + 64);
  ctx.fillText(`gap ${frame.gap.toFixed(1)} m`, w * 0.42, barY + 36);
  ctx.fillText(`force ${client.session.force.toFixed(2)}`, w * 0.68, cy);
  ctx.fillText(`reward ${frame.reward.toFixed(3)}`, w * 0.68, cy + 20);
}

client.connect();
requestAnimationFrame(tick);
