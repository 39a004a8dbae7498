/**
 * Bridge to the pipeline CLI for cross-checking: serializes instances to
 * the `loss --instances` JSONL batch format, runs the CLI once, and parses
 * the reports back.  Set CANOPYKIT_BIN to override the executable.
 */

import { execFileSync } from "node:child_process";
import { mkdtempSync, readFileSync, rmSync, writeFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { ShiftLossConfig } from "./shiftLoss";

export interface Instance {
  pred: Float64Array;
  height: number;
  width: number;
  px: Int32Array;
  py: Int32Array;
  h: Float64Array;
  trackKeys: string[];
  cfg: ShiftLossConfig;
}

export interface PrimaryReport {
  value: number;
  n_effective: number;
  empty: boolean;
  per_track: Array<{ track_key: string; shift: [number, number]; loss_sum: number; n_in_bounds: number }>;
  gradient?: number[][];
}

function instanceToJson(instance: Instance): string {
  const tracks: Array<{ track_key: string; measurements: number[][] }> = [];
  const byKey = new Map<string, number[][]>();
  for (let i = 0; i < instance.px.length; i++) {
    const key = instance.trackKeys[i];
    let rows = byKey.get(key);
    if (!rows) {
      rows = [];
      byKey.set(key, rows);
      tracks.push({ track_key: key, measurements: rows });
    }
    rows.push([instance.px[i], instance.py[i], instance.h[i]]);
  }
  const pred: number[][] = [];
  for (let y = 0; y < instance.height; y++) {
    pred.push(Array.from(instance.pred.subarray(y * instance.width, (y + 1) * instance.width)));
  }
  return JSON.stringify({
    pred,
    labels: { width: instance.width, height: instance.height, tracks },
    radius: instance.cfg.radius,
    pixel_loss: instance.cfg.pixelLoss,
    huber_delta: instance.cfg.huberDelta,
    min_track_size: instance.cfg.minTrackSizeForShift,
  });
}

export function runPrimaryLossBatch(
  instances: Instance[], withGradient = true,
): PrimaryReport[] {
  const dir = mkdtempSync(join(tmpdir(), "lossx-"));
  try {
    const inPath = join(dir, "instances.jsonl");
    const outPath = join(dir, "reports.jsonl");
    writeFileSync(inPath, instances.map(instanceToJson).join("\n") + "\n");
    const bin = process.env.CANOPYKIT_BIN ?? "canopykit";
    const args = ["loss", "--instances", inPath, "--output", outPath];
    if (withGradient) args.push("--with-gradient");
    execFileSync(bin, args, { stdio: ["ignore", "inherit", "inherit"] });
    return readFileSync(outPath, "utf-8")
      .trim()
      .split("\n")
      .map((line) => JSON.parse(line) as PrimaryReport);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}
