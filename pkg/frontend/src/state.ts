// Session view state: a pure reducer over bridge messages and UI intents.
// Everything rendered comes from the latest snapshot and overlay messages;
// the client never infers unexplored space on its own.

import type {
  AckMsg,
  Cell,
  ChainStateMsg,
  ErrorMsg,
  FeasibleRegionMsg,
  ServerMessage,
  Snapshot,
} from './protocol.js';

export interface PendingCommand {
  seq: number;
  label: string;
  sentAtTick: number;
  status: 'pending' | 'acked' | 'error';
  detail?: string;
}

export interface OverlayToggles {
  feasibleRegion: boolean;
  chain: boolean;
  plans: boolean;
}

export interface SessionView {
  team: number | null;
  snapshot: Snapshot | null;
  feasible: FeasibleRegionMsg | null;
  chain: ChainStateMsg | null;
  pending: PendingCommand[];
  toggles: OverlayToggles;
  readOnly: boolean;
  banner: string | null;
  lastSeq: number;
  connected: boolean;
}

export function initialView(): SessionView {
  return {
    team: null,
    snapshot: null,
    feasible: null,
    chain: null,
    pending: [],
    toggles: { feasibleRegion: true, chain: true, plans: true },
    readOnly: false,
    banner: null,
    lastSeq: 0,
    connected: false,
  };
}

export function applyServerMessage(view: SessionView, msg: ServerMessage): SessionView {
  if (msg.seq <= view.lastSeq) {
    // out-of-order delivery would break snapshot atomicity; drop it
    return view;
  }
  const next: SessionView = { ...view, lastSeq: msg.seq };
  switch (msg.kind) {
    case 'snapshot':
      next.snapshot = msg;
      next.team = msg.team;
      return next;
    case 'feasible_region':
      next.feasible = msg;
      return next;
    case 'chain_state':
      next.chain = msg;
      return next;
    case 'ack':
      return resolvePending(next, msg.of, 'acked', (msg as AckMsg).status);
    case 'error': {
      const e = msg as ErrorMsg;
      if (e.of == null) {
        next.banner = `bridge error: ${e.reason}`;
        return next;
      }
      return resolvePending(next, e.of, 'error', e.reason);
    }
    case 'heartbeat':
      return next;
  }
}

export function versionMismatch(view: SessionView): SessionView {
  return {
    ...view,
    readOnly: true,
    banner: 'protocol version mismatch: read-only mode, commands disabled',
  };
}

export function trackCommand(
  view: SessionView,
  seq: number,
  label: string,
): SessionView {
  const row: PendingCommand = {
    seq,
    label,
    sentAtTick: view.snapshot ? view.snapshot.tick : 0,
    status: 'pending',
  };
  return { ...view, pending: [...view.pending, row] };
}

function resolvePending(
  view: SessionView,
  of: number,
  status: 'acked' | 'error',
  detail?: string,
): SessionView {
  const pending = view.pending.map((p) =>
    p.seq === of ? { ...p, status, detail } : p,
  );
  return { ...view, pending };
}

export function toggleOverlay(view: SessionView, key: keyof OverlayToggles): SessionView {
  return { ...view, toggles: { ...view.toggles, [key]: !view.toggles[key] } };
}

// ---------------------------------------------------------------------------
// client-side validation mirroring the bridge's admission rules

export type ValidationError = string;

export function cellKnownFree(view: SessionView, cell: Cell): boolean {
  const snap = view.snapshot;
  if (!snap) return false;
  const [x, y] = cell;
  if (x < 0 || y < 0 || x >= snap.width || y >= snap.height) return false;
  return snap.rows[y][x] === '.';
}

export function validateMoveTarget(view: SessionView, cell: Cell): ValidationError | null {
  if (view.readOnly) return 'read-only session';
  if (!view.snapshot) return 'no snapshot yet';
  if (!cellKnownFree(view, cell)) return 'target cell is unknown or blocked';
  return null;
}

export function moveKindFor(view: SessionView, cell: Cell): 'xi3' | 'migrate' {
  // inside the feasible overlay a plain relocation suffices; outside it the
  // whole team must migrate (the bridge re-checks either way)
  const region = view.feasible;
  if (region && region.cells.some(([x, y]) => x === cell[0] && y === cell[1])) {
    return 'xi3';
  }
  return 'migrate';
}

export function validatePolygon(points: Cell[]): ValidationError | null {
  if (points.length < 1) return 'draw at least one vertex';
  return null;
}

export function validateChainTarget(
  view: SessionView,
  robot: number | null,
  cell: Cell,
): ValidationError | null {
  if (view.readOnly) return 'read-only session';
  if (robot === null) return 'pick a robot first';
  if (!view.snapshot) return 'no snapshot yet';
  if (!view.snapshot.ring.includes(robot) &&
      !(robot in view.snapshot.teammates)) {
    return `robot ${robot} is not in this team`;
  }
  if (!cellKnownFree(view, cell)) return 'target cell is unknown or blocked';
  return null;
}
