// Console bootstrap: binds the session to the DOM, the canvas, the request
// buttons, polygon drawing for region priorities, and arrow-key teleop.

import { ConsoleSession, connect } from './client.js';
import type { Cell } from './protocol.js';
import { paint } from './render.js';
import {
  moveKindFor,
  toggleOverlay,
  validateChainTarget,
  validateMoveTarget,
  validatePolygon,
} from './state.js';

const CELL_PX = 14;

type Tool = 'inspect' | 'move' | 'region-plus' | 'region-minus' | 'chain';

function qs<T extends HTMLElement>(sel: string): T {
  const el = document.querySelector(sel);
  if (!el) throw new Error(`missing element ${sel}`);
  return el as T;
}

export function boot(): void {
  const params = new URLSearchParams(window.location.search);
  const team = params.get('team') ?? '0';
  const host = params.get('bridge') ?? window.location.host;
  const canvas = qs<HTMLCanvasElement>('#map');
  const ctx = canvas.getContext('2d')!;
  const status = qs<HTMLDivElement>('#status');
  const banner = qs<HTMLDivElement>('#banner');
  const commands = qs<HTMLUListElement>('#commands');
  const requests = qs<HTMLUListElement>('#requests');

  let tool: Tool = 'inspect';
  let polygon: Cell[] = [];
  let chainRobot: number | null = null;

  const session = new ConsoleSession({ send: (d) => ws.send(d) });
  const ws = connect(`ws://${host}/ws/operator/${team}`, session);

  session.onChange((view) => {
    const snap = view.snapshot;
    if (snap) {
      canvas.width = snap.width * CELL_PX;
      canvas.height = snap.height * CELL_PX;
      paint(ctx, view, CELL_PX);
      drawPolygon();
      status.textContent =
        `team ${snap.team} · tick ${snap.tick}` +
        (snap.chain ? ` · chain ${snap.chain.phase}` : '') +
        (snap.complete ? ' · MISSION COMPLETE' : '') +
        (view.connected ? '' : ' · disconnected');
    }
    banner.textContent = view.banner ?? '';
    banner.style.display = view.banner ? 'block' : 'none';
    commands.innerHTML = '';
    for (const p of [...view.pending].reverse().slice(0, 12)) {
      const li = document.createElement('li');
      li.textContent = `#${p.seq} ${p.label}: ${p.status}${p.detail ? ` (${p.detail})` : ''}`;
      li.className = p.status;
      commands.appendChild(li);
    }
    requests.innerHTML = '';
    for (const r of (snap?.requests ?? []).slice(-12)) {
      const li = document.createElement('li');
      li.textContent = `${r.kind}#${r.id} ${r.status}${r.reason ? ` (${r.reason})` : ''}`;
      requests.appendChild(li);
    }
  });

  function drawPolygon(): void {
    if (polygon.length === 0) return;
    ctx.strokeStyle = tool === 'region-minus' ? '#e5484d' : '#3dd68c';
    ctx.lineWidth = 2;
    ctx.beginPath();
    polygon.forEach(([x, y], i) => {
      const px = (x + 0.5) * CELL_PX;
      const py = (y + 0.5) * CELL_PX;
      if (i === 0) ctx.moveTo(px, py);
      else ctx.lineTo(px, py);
    });
    ctx.stroke();
  }

  for (const id of ['inspect', 'move', 'region-plus', 'region-minus', 'chain']) {
    qs<HTMLButtonElement>(`#tool-${id}`).addEventListener('click', () => {
      tool = id as Tool;
      polygon = [];
      status.textContent = `tool: ${tool}`;
    });
  }

  qs<HTMLButtonElement>('#send-region').addEventListener('click', () => {
    const err = validatePolygon(polygon);
    if (err) {
      banner.textContent = err;
      banner.style.display = 'block';
      return;
    }
    if (tool === 'region-minus') session.sendRegion([], polygon);
    else session.sendRegion(polygon, []);
    polygon = [];
  });

  qs<HTMLButtonElement>('#disband').addEventListener('click', () => {
    session.sendDisband();
  });

  canvas.addEventListener('click', (ev) => {
    const rect = canvas.getBoundingClientRect();
    const cell: Cell = [
      Math.floor((ev.clientX - rect.left) / CELL_PX),
      Math.floor((ev.clientY - rect.top) / CELL_PX),
    ];
    if (tool === 'region-plus' || tool === 'region-minus') {
      polygon.push(cell);
      drawPolygon();
      return;
    }
    if (tool === 'move') {
      const err = validateMoveTarget(session.view, cell);
      if (err) {
        banner.textContent = err;
        banner.style.display = 'block';
        return;
      }
      const kind = moveKindFor(session.view, cell);
      if (kind === 'migrate' &&
          !window.confirm('Target is outside the feasible region: migrate the whole team?')) {
        return;
      }
      session.sendMove(kind, cell);
      return;
    }
    if (tool === 'chain') {
      if (chainRobot === null) {
        const pick = window.prompt('relay chain to which robot id?');
        if (pick === null) return;
        chainRobot = Number(pick);
      }
      const err = validateChainTarget(session.view, chainRobot, cell);
      if (err) {
        banner.textContent = err;
        banner.style.display = 'block';
        chainRobot = null;
        return;
      }
      const duration = Number(window.prompt('hold the chain for how many ticks?', '60') ?? '60');
      session.sendChain(chainRobot, cell, duration);
      chainRobot = null;
    }
  });

  window.addEventListener('keydown', (ev) => {
    const dirs: Record<string, Cell> = {
      ArrowUp: [0, -1],
      ArrowDown: [0, 1],
      ArrowLeft: [-1, 0],
      ArrowRight: [1, 0],
    };
    const d = dirs[ev.key];
    if (d) {
      ev.preventDefault();
      session.teleop(d[0], d[1], performance.now());
    }
  });

  for (const key of ['feasibleRegion', 'chain', 'plans'] as const) {
    qs<HTMLInputElement>(`#toggle-${key}`).addEventListener('change', () => {
      session.view = toggleOverlay(session.view, key);
      if (session.view.snapshot) paint(ctx, session.view, CELL_PX);
    });
  }
}

boot();
