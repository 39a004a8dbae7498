import { describe, expect, it } from "vitest";

import { Rng } from "../src/rng";
import {
  ArrayLossHandle, DEFAULT_CONFIG, ShiftLossConfig,
  lossForwardBackward, shiftCandidates,
} from "../src/shiftLoss";

const HUBER: ShiftLossConfig = { ...DEFAULT_CONFIG };
const ZERO_RADIUS: ShiftLossConfig = { ...DEFAULT_CONFIG, radius: 0 };

function gridOf(rng: Rng, h: number, w: number): Float64Array {
  const grid = new Float64Array(h * w);
  for (let i = 0; i < grid.length; i++) grid[i] = rng.uniform(0, 35);
  return grid;
}

interface Flat {
  px: Int32Array;
  py: Int32Array;
  h: Float64Array;
  trackKeys: string[];
}

function randomLabels(rng: Rng, w: number, hgt: number, nTracks: number, trackLen: number, border = 2): Flat {
  const px: number[] = [];
  const py: number[] = [];
  const h: number[] = [];
  const keys: string[] = [];
  for (let t = 0; t < nTracks; t++) {
    const cells = new Set<number>();
    while (cells.size < trackLen) {
      cells.add(rng.int(border, hgt - border) * w + rng.int(border, w - border));
    }
    for (const cell of cells) {
      px.push(cell % w);
      py.push(Math.floor(cell / w));
      h.push(rng.uniform(0, 35));
      keys.push(`T${t}`);
    }
  }
  return { px: Int32Array.from(px), py: Int32Array.from(py), h: Float64Array.from(h), trackKeys: keys };
}

describe("shiftCandidates", () => {
  it("enumerates the lattice within the radius in canonical order", () => {
    expect(shiftCandidates(0)).toEqual([{ dx: 0, dy: 0 }]);
    const sqrt2 = shiftCandidates(Math.sqrt(2));
    expect(sqrt2).toHaveLength(9);
    expect(sqrt2[0]).toEqual({ dx: 0, dy: 0 });
    expect(shiftCandidates(2)).toHaveLength(13);
    const norms = shiftCandidates(2).map((s) => s.dx * s.dx + s.dy * s.dy);
    expect(norms).toEqual([...norms].sort((a, b) => a - b));
  });

  it("rejects negative radii", () => {
    expect(() => shiftCandidates(-1)).toThrow(RangeError);
  });
});

describe("lossForwardBackward", () => {
  it("is zero for a perfect prediction and pins small tracks to (0,0)", () => {
    const rng = new Rng(1);
    const w = 20;
    const pred = gridOf(rng, w, w);
    // 12-shot displaced track: recovered; 9-shot displaced track: pinned
    const mk = (n: number, row: number) => {
      const px: number[] = [];
      const py: number[] = [];
      const h: number[] = [];
      for (let i = 0; i < n; i++) {
        px.push(4 + i + 1);   // displaced by +1 in x
        py.push(row);
        h.push(pred[row * w + 4 + i]);
      }
      return { px, py, h };
    };
    const big = mk(12, 9);
    const small = mk(9, 14);
    const result = lossForwardBackward(
      pred, w, w,
      Int32Array.from([...big.px, ...small.px]),
      Int32Array.from([...big.py, ...small.py]),
      Float64Array.from([...big.h, ...small.h]),
      [...Array(12).fill("big"), ...Array(9).fill("small")],
      HUBER,
    );
    expect(result.perTrack[0].shift).toEqual({ dx: -1, dy: 0 });
    expect(result.perTrack[0].lossSum).toBe(0);
    expect(result.perTrack[1].shift).toEqual({ dx: 0, dy: 0 });
    expect(result.perTrack[1].lossSum).toBeGreaterThan(0);
  });

  it("computes the documented huber values", () => {
    const pred = Float64Array.from([12.0]);
    const two = lossForwardBackward(pred, 1, 1, [0], [0], [10.0], ["t"], ZERO_RADIUS);
    expect(two.value).toBe(2.0);
    expect(two.gradient![0]).toBe(2.0);
    const five = lossForwardBackward(pred, 1, 1, [0], [0], [7.0], ["t"], ZERO_RADIUS);
    expect(five.value).toBe(10.5);
    expect(five.gradient![0]).toBe(3.0);
  });

  it("never beats the non-shifted loss (dominance) and matches it at radius 0", () => {
    const rng = new Rng(2);
    for (let trial = 0; trial < 50; trial++) {
      const pred = gridOf(rng, 16, 16);
      const labels = randomLabels(rng, 16, 16, rng.int(1, 4), rng.int(3, 20));
      const s = lossForwardBackward(pred, 16, 16, labels.px, labels.py, labels.h, labels.trackKeys, HUBER, false);
      const ns = lossForwardBackward(pred, 16, 16, labels.px, labels.py, labels.h, labels.trackKeys, ZERO_RADIUS, false);
      expect(s.value).toBeLessThanOrEqual(ns.value);
    }
  });

  it("returns an empty result for no measurements", () => {
    const result = lossForwardBackward(new Float64Array(16), 4, 4, [], [], [], [], HUBER);
    expect(result.empty).toBe(true);
    expect(result.value).toBe(0);
    expect(result.gradient).toHaveLength(16);
  });

  it("matches central finite differences away from kinks and ties", () => {
    const rng = new Rng(3);
    const w = 24;
    let checked = 0;
    while (checked < 40) {
      const pred = gridOf(rng, w, w);
      const labels = randomLabels(rng, w, w, 2, 12);
      const report = lossForwardBackward(pred, w, w, labels.px, labels.py, labels.h, labels.trackKeys, HUBER);
      const shifts = JSON.stringify(report.perTrack.map((t) => t.shift));
      for (let i = 0; i < labels.px.length && checked < 40; i++) {
        const track = report.perTrack.find((t) => t.trackKey === labels.trackKeys[i])!;
        const x = labels.px[i] + track.shift.dx;
        const y = labels.py[i] + track.shift.dy;
        const residual = pred[y * w + x] - labels.h[i];
        if (Math.abs(Math.abs(residual) - HUBER.huberDelta) <= 1e-2) continue;
        const step = 1e-3;
        const hi = Float64Array.from(pred); hi[y * w + x] += step;
        const lo = Float64Array.from(pred); lo[y * w + x] -= step;
        const hiR = lossForwardBackward(hi, w, w, labels.px, labels.py, labels.h, labels.trackKeys, HUBER, false);
        const loR = lossForwardBackward(lo, w, w, labels.px, labels.py, labels.h, labels.trackKeys, HUBER, false);
        if (JSON.stringify(hiR.perTrack.map((t) => t.shift)) !== shifts) continue;
        if (JSON.stringify(loR.perTrack.map((t) => t.shift)) !== shifts) continue;
        const fd = (hiR.value - loR.value) / (2 * step);
        const an = report.gradient![y * w + x];
        expect(Math.abs(fd - an)).toBeLessThanOrEqual(Math.max(1e-4 * Math.max(Math.abs(fd), Math.abs(an)), 1e-9));
        checked++;
      }
    }
  });

  it("rejects malformed inputs", () => {
    const pred = new Float64Array(16);
    expect(() => lossForwardBackward(pred, 4, 5, [0], [0], [1], ["t"])).toThrow(RangeError);
    expect(() => lossForwardBackward(pred, 4, 4, [0, 1], [0], [1], ["t"])).toThrow(/length/);
    expect(() => lossForwardBackward(pred, 4, 4, [4], [0], [1], ["t"])).toThrow(/outside/);
    expect(() => lossForwardBackward(pred, 4, 4, [0], [0], [NaN], ["t"])).toThrow(/non-finite/);
    expect(() => lossForwardBackward(pred, 4, 4, [1, 1], [1, 1], [2, 3], ["t", "t"])).toThrow(/two measurements/);
    const bad = Float64Array.from(pred); bad[3] = Infinity;
    expect(() => lossForwardBackward(bad, 4, 4, [0], [0], [1], ["t"])).toThrow(/non-finite/);
  });
});

describe("ArrayLossHandle", () => {
  it("holds an immutable config and validates it", () => {
    const handle = new ArrayLossHandle({ radius: 2, pixelLoss: "l2" });
    expect(handle.config.radius).toBe(2);
    expect(handle.config.huberDelta).toBe(3);
    expect(() => new ArrayLossHandle({ radius: -1 })).toThrow(RangeError);
    expect(() => new ArrayLossHandle({ pixelLoss: "cauchy" as never })).toThrow(RangeError);
    expect(() => new ArrayLossHandle({ huberDelta: 0 })).toThrow(RangeError);
  });

  it("forward and forwardBackward agree on the value", () => {
    const rng = new Rng(4);
    const pred = gridOf(rng, 12, 12);
    const labels = randomLabels(rng, 12, 12, 2, 11);
    const handle = new ArrayLossHandle();
    const a = handle.forward(pred, 12, 12, labels.px, labels.py, labels.h, labels.trackKeys);
    const b = handle.forwardBackward(pred, 12, 12, labels.px, labels.py, labels.h, labels.trackKeys);
    expect(a.value).toBe(b.value);
    expect(a.gradient).toBeNull();
    expect(b.gradient).toHaveLength(144);
  });
});
