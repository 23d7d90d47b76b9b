/**
 * Gateway connection: subscribes to state frames and sends control frames
 * at 20 Hz while connected; reconnects with exponential backoff. The
 * socket constructor and timers are injectable so tests run without a
 * browser or a live gateway.
 */

import { CockpitSession, parseStateFrame } from "./session.js";

export interface SocketLike {
  send(data: string): void;
  close(): void;
  onopen: (() => void) | null;
  onclose: (() => void) | null;
  onmessage: ((event: { data: string }) => void) | null;
}

export type SocketFactory = (url: string) => SocketLike;

export interface ClientOptions {
  controlRateHz?: number;
  backoffInitialMs?: number;
  backoffMaxMs?: number;
  setInterval?: (fn: () => void, ms: number) => unknown;
  clearInterval?: (handle: unknown) => void;
  setTimeout?: (fn: () => void, ms: number) => unknown;
  now?: () => number;
}

export class GatewayClient {
  readonly session: CockpitSession;
  private socket: SocketLike | null = null;
  private controlTimer: unknown = null;
  private backoffMs: number;
  private stopped = false;
  private readonly opts: Required<ClientOptions>;

  constructor(
    private readonly url: string,
    private readonly makeSocket: SocketFactory,
    session?: CockpitSession,
    opts: ClientOptions = {},
  ) {
    this.session = session ?? new CockpitSession();
    this.opts = {
      controlRateHz: opts.controlRateHz ?? 20,
      backoffInitialMs: opts.backoffInitialMs ?? 250,
      backoffMaxMs: opts.backoffMaxMs ?? 5000,
      setInterval: opts.setInterval ?? ((fn, ms) => setInterval(fn, ms)),
      clearInterval: opts.clearInterval ?? ((h) => clearInterval(h as never)),
      setTimeout: opts.setTimeout ?? ((fn, ms) => setTimeout(fn, ms)),
      now: opts.now ?? (() => Date.now()),
    };
    this.backoffMs = this.opts.backoffInitialMs;
  }

  connect(): void {
    if (this.stopped) return;
    this.session.connection = "connecting";
    const sock = this.makeSocket(this.url);
    this.socket = sock;
    sock.onopen = () => {
      this.session.connection = "connected";
      this.backoffMs = this.opts.backoffInitialMs;
      this.startControlLoop();
    };
    sock.onmessage = (event) => {
      const frame = parseStateFrame(event.data);
      if (frame !== null) this.session.onStateFrame(frame, this.opts.now());
    };
    sock.onclose = () => {
      this.session.connection = "disconnected";
      this.stopControlLoop();
      this.scheduleReconnect();
    };
  }

  /** Current delay the next reconnect attempt will wait (exposed for the UI). */
  get reconnectDelayMs(): number {
    return this.backoffMs;
  }

  private scheduleReconnect(): void {
    if (this.stopped) return;
    const delay = this.backoffMs;
    this.backoffMs = Math.min(this.backoffMs * 2, this.opts.backoffMaxMs);
    this.opts.setTimeout(() => this.connect(), delay);
  }

  private startControlLoop(): void {
    this.stopControlLoop();
    this.controlTimer = this.opts.setInterval(
      () => this.sendControl(),
      1000 / this.opts.controlRateHz,
    );
  }

  private stopControlLoop(): void {
    if (this.controlTimer !== null) {
      this.opts.clearInterval(this.controlTimer);
      this.controlTimer = null;
    }
  }

  sendControl(): void {
    if (this.session.connection !== "connected" || this.socket === null) return;
    this.socket.send(JSON.stringify(this.session.controlFrame()));
  }

  stop(): void {
    this.stopped = true;
    this.stopControlLoop();
    this.socket?.close();
  }
}
