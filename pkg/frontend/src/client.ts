// WebSocket session wiring: outbound seq numbering, teleop rate limiting,
// and dispatch of parsed server messages into the view reducer.

import {
  makeRequest,
  makeTeleop,
  parseServerMessage,
  type Cell,
  type ClientMessage,
  type RequestKind,
} from './protocol.js';
import {
  applyServerMessage,
  initialView,
  trackCommand,
  versionMismatch,
  type SessionView,
} from './state.js';

export const TELEOP_HZ = 5;

export interface SocketLike {
  send(data: string): void;
}

export type ViewListener = (view: SessionView) => void;

export class ConsoleSession {
  view: SessionView = initialView();
  private outSeq = 0;
  private lastTeleopMs = 0;
  private listeners: ViewListener[] = [];

  constructor(private socket: SocketLike) {}

  onChange(fn: ViewListener): void {
    this.listeners.push(fn);
  }

  private emit(): void {
    for (const fn of this.listeners) fn(this.view);
  }

  private nextSeq(): number {
    this.outSeq += 1;
    return this.outSeq;
  }

  handleRaw(raw: string): void {
    const parsed = parseServerMessage(raw);
    if (!parsed.ok) {
      if (parsed.versionMismatch) {
        this.view = versionMismatch(this.view);
        this.emit();
      }
      return;
    }
    this.view = applyServerMessage(this.view, parsed.message!);
    this.emit();
  }

  setConnected(connected: boolean): void {
    this.view = { ...this.view, connected };
    this.emit();
  }

  submit(kind: RequestKind, args: Record<string, unknown>, label?: string): number | null {
    if (this.view.readOnly) return null;
    const seq = this.nextSeq();
    const msg = makeRequest(seq, kind, args);
    this.view = trackCommand(this.view, seq, label ?? kind);
    this.socket.send(JSON.stringify(msg));
    this.emit();
    return seq;
  }

  teleop(dx: number, dy: number, nowMs: number): boolean {
    if (this.view.readOnly) return false;
    if (nowMs - this.lastTeleopMs < 1000 / TELEOP_HZ) return false;
    this.lastTeleopMs = nowMs;
    const msg = makeTeleop(this.nextSeq(), dx, dy);
    this.socket.send(JSON.stringify(msg));
    return true;
  }

  sendRegion(plus: Cell[], minus: Cell[]): number | null {
    return this.submit('xi2', { plus, minus }, 'region priority');
  }

  sendMove(kind: 'xi3' | 'migrate', target: Cell): number | null {
    return this.submit(kind, { target }, kind === 'xi3' ? 'move' : 'migrate');
  }

  sendChain(robot: number, target: Cell, duration: number): number | null {
    return this.submit('xi4', { robot, target, duration }, `chain to r${robot}`);
  }

  sendDisband(): number | null {
    return this.submit('disband', {}, 'disband chain');
  }
}

export function connect(url: string, session: ConsoleSession, WS = WebSocket): WebSocket {
  const ws = new WS(url);
  ws.onopen = () => session.setConnected(true);
  ws.onclose = () => session.setConnected(false);
  ws.onmessage = (ev: MessageEvent) => session.handleRaw(String(ev.data));
  return ws;
}
