/**
 * Boundary equivalence: the bound loss must agree with the pipeline CLI
 * (the only external interface of the reference implementation) to 1e-12
 * on 1000 random instances, including gradients and chosen shifts.  In
 * practice agreement is exact because both sides accumulate strictly left
 * to right.
 */

import { describe, expect, it } from "vitest";

import { Instance, runPrimaryLossBatch } from "../src/primaryCli";
import { Rng } from "../src/rng";
import { DEFAULT_CONFIG, ShiftLossConfig, lossForwardBackward } from "../src/shiftLoss";

const KINDS = ["huber", "l2", "l1"] as const;

function randomInstance(rng: Rng, index: number): Instance {
  const width = rng.int(8, 20);
  const height = rng.int(8, 20);
  const pred = new Float64Array(width * height);
  for (let i = 0; i < pred.length; i++) pred[i] = rng.uniform(0, 35);

  const px: number[] = [];
  const py: number[] = [];
  const h: number[] = [];
  const trackKeys: string[] = [];
  const nTracks = rng.int(1, 4);
  for (let t = 0; t < nTracks; t++) {
    // measurements may hug the border so shift exclusions get exercised
    const n = rng.int(3, 26);
    const cells = new Set<number>();
    while (cells.size < n) {
      cells.add(rng.int(0, height) * width + rng.int(0, width));
    }
    for (const cell of cells) {
      px.push(cell % width);
      py.push(Math.floor(cell / width));
      h.push(rng.uniform(0, 35));
      trackKeys.push(`T${t}`);
    }
  }
  const cfg: ShiftLossConfig = {
    radius: [0, 1, Math.sqrt(2), 2][index % 4],
    pixelLoss: KINDS[index % KINDS.length],
    huberDelta: 3.0,
    minTrackSizeForShift: [10, 1, 5][index % 3],
  };
  return {
    pred, height, width,
    px: Int32Array.from(px), py: Int32Array.from(py), h: Float64Array.from(h),
    trackKeys, cfg,
  };
}

describe("boundary equivalence with the pipeline CLI", () => {
  it("agrees to 1e-12 on 1000 random instances (value, gradient, shifts)", () => {
    const rng = new Rng(2024);
    const instances: Instance[] = [];
    for (let i = 0; i < 1000; i++) instances.push(randomInstance(rng, i));

    const reports = runPrimaryLossBatch(instances, true);
    expect(reports).toHaveLength(1000);

    for (let i = 0; i < instances.length; i++) {
      const inst = instances[i];
      const primary = reports[i];
      const ours = lossForwardBackward(
        inst.pred, inst.height, inst.width, inst.px, inst.py, inst.h, inst.trackKeys, inst.cfg,
      );
      const scale = Math.max(1, Math.abs(primary.value));
      expect(Math.abs(ours.value - primary.value)).toBeLessThanOrEqual(1e-12 * scale);
      expect(ours.nEffective).toBe(primary.n_effective);
      expect(ours.perTrack).toHaveLength(primary.per_track.length);
      for (let t = 0; t < ours.perTrack.length; t++) {
        const a = ours.perTrack[t];
        const b = primary.per_track[t];
        expect(a.trackKey).toBe(b.track_key);
        expect([a.shift.dx, a.shift.dy]).toEqual(b.shift);
        expect(a.nInBounds).toBe(b.n_in_bounds);
        expect(Math.abs(a.lossSum - b.loss_sum)).toBeLessThanOrEqual(
          1e-12 * Math.max(1, Math.abs(b.loss_sum)),
        );
      }
      const grad = primary.gradient!;
      for (let y = 0; y < inst.height; y++) {
        for (let x = 0; x < inst.width; x++) {
          const diff = Math.abs(ours.gradient![y * inst.width + x] - grad[y][x]);
          expect(diff).toBeLessThanOrEqual(1e-12);
        }
      }
    }
  }, 120_000);

  it("matches the CLI exactly on a known displaced-track fixture", () => {
    const rng = new Rng(7);
    const w = 20;
    const pred = new Float64Array(w * w);
    for (let i = 0; i < pred.length; i++) pred[i] = rng.uniform(0, 35);
    const px: number[] = [];
    const py: number[] = [];
    const h: number[] = [];
    for (let i = 0; i < 12; i++) {
      px.push(4 + i + 1);   // displaced one pixel east
      py.push(10);
      h.push(pred[10 * w + 4 + i]);
    }
    const instance: Instance = {
      pred, height: w, width: w,
      px: Int32Array.from(px), py: Int32Array.from(py), h: Float64Array.from(h),
      trackKeys: Array(12).fill("track"),
      cfg: DEFAULT_CONFIG,
    };
    const [primary] = runPrimaryLossBatch([instance], false);
    const ours = lossForwardBackward(
      pred, w, w, instance.px, instance.py, instance.h, instance.trackKeys, DEFAULT_CONFIG, false,
    );
    expect(primary.per_track[0].shift).toEqual([-1, 0]);
    expect(ours.perTrack[0].shift).toEqual({ dx: -1, dy: 0 });
    expect(ours.value).toBe(primary.value);
    expect(primary.value).toBe(0);
  }, 30_000);
});
