// Canvas rendering split in two: a pure pass that turns the session view into
// draw operations (testable without a DOM), and a thin applier that paints
// them onto a 2D context.

import type { Cell } from './protocol.js';
import type { SessionView } from './state.js';

export interface DrawOp {
  layer: 'map' | 'overlay' | 'agents' | 'plans';
  shape: 'cell' | 'dot' | 'path' | 'ring';
  color: string;
  cells?: Cell[];
  at?: Cell;
  label?: string;
}

const COLORS = {
  unknown: '#1b2026',
  free: '#2e3640',
  wall: '#565f6b',
  operator: '#f5d90a',
  robot: '#0091ff',
  plan: '#3dd68c',
  feasible: 'rgba(177, 109, 255, 0.35)',
  anchor: '#f76b15',
  accessible: 'rgba(247, 107, 21, 0.25)',
  relay: '#e5484d',
};

export function buildDrawOps(view: SessionView): DrawOp[] {
  const ops: DrawOp[] = [];
  const snap = view.snapshot;
  if (!snap) return ops;
  const unknown: Cell[] = [];
  const free: Cell[] = [];
  const wall: Cell[] = [];
  for (let y = 0; y < snap.height; y++) {
    const row = snap.rows[y];
    for (let x = 0; x < snap.width; x++) {
      const ch = row[x];
      if (ch === '.') free.push([x, y]);
      else if (ch === '#') wall.push([x, y]);
      else unknown.push([x, y]);
    }
  }
  ops.push({ layer: 'map', shape: 'cell', color: COLORS.unknown, cells: unknown });
  ops.push({ layer: 'map', shape: 'cell', color: COLORS.free, cells: free });
  ops.push({ layer: 'map', shape: 'cell', color: COLORS.wall, cells: wall });

  if (view.toggles.feasibleRegion && view.feasible) {
    ops.push({
      layer: 'overlay',
      shape: 'cell',
      color: COLORS.feasible,
      cells: view.feasible.cells,
    });
  }
  if (view.toggles.chain && view.chain) {
    ops.push({
      layer: 'overlay',
      shape: 'cell',
      color: COLORS.accessible,
      cells: view.chain.accessible,
    });
    ops.push({
      layer: 'overlay',
      shape: 'path',
      color: COLORS.anchor,
      cells: view.chain.anchors,
    });
    for (const a of view.chain.anchors.slice(1, -1)) {
      ops.push({ layer: 'overlay', shape: 'dot', color: COLORS.relay, at: a });
    }
  }
  if (view.toggles.plans) {
    for (const [rid, info] of Object.entries(snap.teammates)) {
      const pts = info.events.map((e) => e.p);
      if (pts.length > 0) {
        ops.push({ layer: 'plans', shape: 'path', color: COLORS.plan, cells: pts });
        ops.push({
          layer: 'agents',
          shape: 'dot',
          color: COLORS.robot,
          at: pts[0],
          label: `r${rid}`,
        });
      }
    }
  }
  ops.push({
    layer: 'agents',
    shape: 'dot',
    color: COLORS.operator,
    at: snap.operator,
    label: `op${snap.team}`,
  });
  return ops;
}

export function paint(
  ctx: CanvasRenderingContext2D,
  view: SessionView,
  cellPx: number,
): void {
  const snap = view.snapshot;
  if (!snap) return;
  ctx.clearRect(0, 0, snap.width * cellPx, snap.height * cellPx);
  for (const op of buildDrawOps(view)) {
    ctx.fillStyle = op.color;
    ctx.strokeStyle = op.color;
    if (op.shape === 'cell' && op.cells) {
      for (const [x, y] of op.cells) {
        ctx.fillRect(x * cellPx, y * cellPx, cellPx, cellPx);
      }
    } else if (op.shape === 'dot' && op.at) {
      const [x, y] = op.at;
      ctx.beginPath();
      ctx.arc((x + 0.5) * cellPx, (y + 0.5) * cellPx, cellPx * 0.45, 0, Math.PI * 2);
      ctx.fill();
      if (op.label) {
        ctx.fillStyle = '#e8edf2';
        ctx.font = `${Math.max(9, cellPx * 0.8)}px monospace`;
        ctx.fillText(op.label, (x + 1) * cellPx, y * cellPx);
        ctx.fillStyle = op.color;
      }
    } else if (op.shape === 'path' && op.cells && op.cells.length > 1) {
      ctx.beginPath();
      ctx.lineWidth = Math.max(1, cellPx * 0.2);
      op.cells.forEach(([x, y], i) => {
        const px = (x + 0.5) * cellPx;
        const py = (y + 0.5) * cellPx;
        if (i === 0) ctx.moveTo(px, py);
        else ctx.lineTo(px, py);
      });
      ctx.stroke();
    }
  }
}
