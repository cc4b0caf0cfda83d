import { describe, expect, it } from 'vitest';

import {
  makeRequest,
  makeTeleop,
  parseServerMessage,
  regionRequest,
  WIRE_VERSION,
} from '../src/protocol.js';

const snapshot = {
  v: 1,
  kind: 'snapshot',
  seq: 3,
  tick: 7,
  team: 0,
  width: 3,
  height: 2,
  rows: ['..#', '?..'],
  operator: [0, 0],
  teammates: {},
  ring: [0, 1],
  requests: [],
  chain: null,
  complete: false,
};

describe('parseServerMessage', () => {
  it('accepts a well-formed snapshot', () => {
    const out = parseServerMessage(JSON.stringify(snapshot));
    expect(out.ok).toBe(true);
    expect(out.message?.kind).toBe('snapshot');
  });

  it('flags a version mismatch distinctly', () => {
    const out = parseServerMessage(JSON.stringify({ ...snapshot, v: 2 }));
    expect(out.ok).toBe(false);
    expect(out.versionMismatch).toBe(true);
  });

  it('rejects malformed JSON and unknown kinds', () => {
    expect(parseServerMessage('{nope').ok).toBe(false);
    expect(
      parseServerMessage(JSON.stringify({ v: 1, kind: 'mystery', seq: 1 })).ok,
    ).toBe(false);
  });

  it('rejects a snapshot without its grid', () => {
    const broken = { ...snapshot } as Record<string, unknown>;
    delete broken.rows;
    expect(parseServerMessage(JSON.stringify(broken)).ok).toBe(false);
  });
});

describe('client message builders', () => {
  it('stamps the wire version and seq', () => {
    const msg = makeRequest(9, 'xi3', { target: [1, 2] });
    expect(msg.v).toBe(WIRE_VERSION);
    expect(msg.seq).toBe(9);
    expect(msg.request_kind).toBe('xi3');
  });

  it('teleop carries the step vector', () => {
    expect(makeTeleop(2, 1, 0)).toEqual({
      v: 1,
      kind: 'teleop',
      seq: 2,
      dx: 1,
      dy: 0,
    });
  });

  it('a four-click polygon becomes a four-vertex region request', () => {
    const msg = regionRequest(5, [[0, 0], [4, 0], [4, 4], [0, 4]], []);
    expect(msg.request_kind).toBe('xi2');
    expect((msg.args.plus as number[][]).length).toBe(4);
    expect(msg.args.minus).toEqual([]);
  });
});
