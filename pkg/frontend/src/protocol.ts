// Wire protocol mirror of the bridge: single-line JSON messages, versioned.

export const WIRE_VERSION = 1;

export type Cell = [number, number];

export interface Snapshot {
  v: number;
  kind: 'snapshot';
  seq: number;
  tick: number;
  team: number;
  width: number;
  height: number;
  rows: string[]; // '?' unknown, '.' free, '#' wall — operator knowledge only
  operator: Cell;
  teammates: Record<string, { as_of: number; events: PlanEvent[] }>;
  ring: number[];
  requests: RequestRow[];
  chain: { phase: string } | null;
  complete: boolean;
}

export interface PlanEvent {
  id: number;
  t: number;
  p: Cell;
  peers: unknown[];
  kind: string;
}

export interface RequestRow {
  id: number;
  kind: string;
  issuer: string;
  status: string;
  reason?: string | null;
  args?: Record<string, unknown>;
}

export interface FeasibleRegionMsg {
  v: number;
  kind: 'feasible_region';
  seq: number;
  tick: number;
  cells: Cell[];
}

export interface ChainStateMsg {
  v: number;
  kind: 'chain_state';
  seq: number;
  tick: number;
  phase: string;
  anchors: Cell[];
  relays: number[];
  target: number | null;
  accessible: Cell[];
}

export interface AckMsg {
  v: number;
  kind: 'ack';
  seq: number;
  of: number;
  status: string;
  body?: Record<string, unknown>;
}

export interface ErrorMsg {
  v: number;
  kind: 'error';
  seq: number;
  of: number | null;
  reason: string;
}

export interface HeartbeatMsg {
  v: number;
  kind: 'heartbeat';
  seq: number;
  body: { tick: number };
}

export type ServerMessage =
  | Snapshot
  | FeasibleRegionMsg
  | ChainStateMsg
  | AckMsg
  | ErrorMsg
  | HeartbeatMsg;

export type RequestKind =
  | 'xi1'
  | 'xi2'
  | 'xi3'
  | 'xi4'
  | 'xi7'
  | 'migrate'
  | 'disband'
  | 'retarget';

export interface RequestSubmit {
  v: number;
  kind: 'request_submit';
  seq: number;
  request_kind: RequestKind;
  args: Record<string, unknown>;
}

export interface TeleopMsg {
  v: number;
  kind: 'teleop';
  seq: number;
  dx: number;
  dy: number;
}

export type ClientMessage = RequestSubmit | TeleopMsg;

const SERVER_KINDS = new Set([
  'snapshot',
  'feasible_region',
  'chain_state',
  'ack',
  'error',
  'heartbeat',
]);

export interface ParseResult {
  ok: boolean;
  message?: ServerMessage;
  versionMismatch?: boolean;
  error?: string;
}

export function parseServerMessage(raw: string): ParseResult {
  let data: unknown;
  try {
    data = JSON.parse(raw);
  } catch (e) {
    return { ok: false, error: `malformed JSON: ${e}` };
  }
  if (typeof data !== 'object' || data === null) {
    return { ok: false, error: 'message is not an object' };
  }
  const msg = data as Record<string, unknown>;
  if (msg.v !== WIRE_VERSION) {
    return { ok: false, versionMismatch: true, error: `wire version ${msg.v}` };
  }
  if (typeof msg.kind !== 'string' || !SERVER_KINDS.has(msg.kind)) {
    return { ok: false, error: `unknown kind ${msg.kind}` };
  }
  if (typeof msg.seq !== 'number') {
    return { ok: false, error: 'missing seq' };
  }
  if (msg.kind === 'snapshot') {
    const s = msg as unknown as Snapshot;
    if (!Array.isArray(s.rows) || typeof s.width !== 'number') {
      return { ok: false, error: 'snapshot missing grid' };
    }
  }
  return { ok: true, message: msg as unknown as ServerMessage };
}

export function makeRequest(
  seq: number,
  kind: RequestKind,
  args: Record<string, unknown>,
): RequestSubmit {
  return { v: WIRE_VERSION, kind: 'request_submit', seq, request_kind: kind, args };
}

export function makeTeleop(seq: number, dx: number, dy: number): TeleopMsg {
  return { v: WIRE_VERSION, kind: 'teleop', seq, dx, dy };
}

export function regionRequest(seq: number, plus: Cell[], minus: Cell[]): RequestSubmit {
  return makeRequest(seq, 'xi2', { plus, minus });
}
