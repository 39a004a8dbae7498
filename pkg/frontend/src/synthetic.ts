/**
 * Synthetic training scenes: smooth random height fields thresholded into
 * forest patches, input channels as noisy functions of height, and
 * straight-line label tracks (60 m shot spacing at 10 m pixels) carrying a
 * planted per-track geolocation shift from the radius-sqrt(2) candidate
 * set.  The dense noiseless truth exists only here, which is what makes
 * the loss-ablation comparison measurable.
 */

import { Rng } from "./rng";
import { Shift, shiftCandidates } from "./shiftLoss";

export const SCENE_SIZE = 64;
export const PIXEL_SIZE_M = 10;
export const SHOT_SPACING_M = 60;

export interface SceneLabels {
  px: Int32Array;
  py: Int32Array;
  h: Float64Array;
  trackKeys: string[];
  /** planted shift per track key (what the loss should undo, negated) */
  planted: Map<string, Shift>;
}

export interface Scene {
  channels: Float64Array;   // C x H x W, row-major per channel
  truth: Float64Array;      // H x W dense noiseless heights
  labels: SceneLabels;
}

export interface CorpusConfig {
  nScenes: number;
  nChannels: number;
  tracksPerScene: number;
  /** when false, tracks are planted with zero shift (clean geolocation) */
  plantShifts: boolean;
}

export const DEFAULT_CORPUS: CorpusConfig = {
  nScenes: 12,
  nChannels: 6,
  tracksPerScene: 4,
  plantShifts: true,
};

/** Separable box blurs approximate a Gaussian; output is zero-mean, unit-std. */
export function smoothField(rng: Rng, size: number, passes = 3, radius = 4): Float64Array {
  let field = new Float64Array(size * size);
  for (let i = 0; i < field.length; i++) field[i] = rng.gauss();
  const tmp = new Float64Array(size * size);
  for (let pass = 0; pass < passes; pass++) {
    // horizontal then vertical box blur
    for (let y = 0; y < size; y++) {
      for (let x = 0; x < size; x++) {
        let acc = 0;
        let n = 0;
        for (let k = -radius; k <= radius; k++) {
          const xx = x + k;
          if (xx < 0 || xx >= size) continue;
          acc += field[y * size + xx];
          n++;
        }
        tmp[y * size + x] = acc / n;
      }
    }
    for (let x = 0; x < size; x++) {
      for (let y = 0; y < size; y++) {
        let acc = 0;
        let n = 0;
        for (let k = -radius; k <= radius; k++) {
          const yy = y + k;
          if (yy < 0 || yy >= size) continue;
          acc += tmp[yy * size + x];
          n++;
        }
        field[y * size + x] = acc / n;
      }
    }
  }
  let mean = 0;
  for (const v of field) mean += v;
  mean /= field.length;
  let varAcc = 0;
  for (const v of field) varAcc += (v - mean) * (v - mean);
  const std = Math.sqrt(varAcc / field.length) || 1;
  for (let i = 0; i < field.length; i++) field[i] = (field[i] - mean) / std;
  return field;
}

export function heightField(rng: Rng, size = SCENE_SIZE): Float64Array {
  const coarse = smoothField(rng, size, 3, 6);
  const texture = smoothField(rng, size, 2, 2);
  const field = new Float64Array(size * size);
  for (let i = 0; i < field.length; i++) {
    const forest = coarse[i] > 0.1;
    const v = forest ? 16 + 7 * coarse[i] + 4 * texture[i] : 0.4 + 0.3 * texture[i];
    field[i] = Math.min(45, Math.max(0, v));
  }
  return field;
}

interface ChannelModel {
  gains: number[];
  offsets: number[];
}

/** Channel gains/offsets are corpus-level constants so the mapping is learnable. */
export function channelModel(rng: Rng, nChannels: number): ChannelModel {
  const gains: number[] = [];
  const offsets: number[] = [];
  for (let c = 0; c < nChannels; c++) {
    gains.push(rng.uniform(-0.04, 0.08));
    offsets.push(rng.uniform(0.05, 0.4));
  }
  return { gains, offsets };
}

function renderChannels(
  rng: Rng, truth: Float64Array, size: number, model: ChannelModel,
): Float64Array {
  const n = model.gains.length;
  const channels = new Float64Array(n * size * size);
  for (let c = 0; c < n; c++) {
    const structured = smoothField(rng, size, 2, 3);
    const base = c * size * size;
    for (let i = 0; i < size * size; i++) {
      channels[base + i] =
        model.offsets[c] + model.gains[c] * truth[i]
        + 0.02 * structured[i] + 0.01 * rng.gauss();
    }
  }
  return channels;
}

function lineTrack(rng: Rng, size: number, margin: number, spacingPx: number): Array<[number, number]> {
  const angle = rng.uniform(0, Math.PI);
  const ux = Math.cos(angle);
  const uy = Math.sin(angle);
  const ax = rng.uniform(margin, size - 1 - margin);
  const ay = rng.uniform(margin, size - 1 - margin);
  const pixels: Array<[number, number]> = [];
  const seen = new Set<number>();
  for (const dir of [1, -1]) {
    let t = dir > 0 ? 0 : spacingPx;
    for (;;) {
      const x = Math.floor(ax + dir * t * ux);
      const y = Math.floor(ay + dir * t * uy);
      if (x < margin || x >= size - margin || y < margin || y >= size - margin) break;
      const key = y * size + x;
      if (!seen.has(key)) {
        seen.add(key);
        pixels.push([x, y]);
      }
      t += spacingPx;
    }
  }
  return pixels;
}

export function makeScene(
  rng: Rng, model: ChannelModel, cfg: CorpusConfig, sceneIndex: number,
): Scene {
  const size = SCENE_SIZE;
  const truth = heightField(rng, size);
  const channels = renderChannels(rng, truth, size, model);

  const candidates = shiftCandidates(Math.sqrt(2));
  const nonZero = candidates.filter((s) => s.dx !== 0 || s.dy !== 0);
  const spacingPx = SHOT_SPACING_M / PIXEL_SIZE_M;
  const px: number[] = [];
  const py: number[] = [];
  const h: number[] = [];
  const trackKeys: string[] = [];
  const planted = new Map<string, Shift>();

  let made = 0;
  while (made < cfg.tracksPerScene) {
    const pixels = lineTrack(rng, size, 2, spacingPx);
    if (pixels.length < 10) continue;
    const key = `S${sceneIndex}-T${made}`;
    made++;
    const shift: Shift = cfg.plantShifts
      ? nonZero[rng.int(0, nonZero.length)]
      : { dx: 0, dy: 0 };
    planted.set(key, shift);
    for (const [x, y] of pixels) {
      px.push(x + shift.dx);
      py.push(y + shift.dy);
      h.push(truth[y * size + x]);
      trackKeys.push(key);
    }
  }
  return {
    channels,
    truth,
    labels: {
      px: Int32Array.from(px),
      py: Int32Array.from(py),
      h: Float64Array.from(h),
      trackKeys,
      planted,
    },
  };
}

export function makeCorpus(seed: number, cfg: CorpusConfig = DEFAULT_CORPUS): Scene[] {
  const rng = new Rng(seed);
  const model = channelModel(rng, cfg.nChannels);
  const scenes: Scene[] = [];
  for (let i = 0; i < cfg.nScenes; i++) scenes.push(makeScene(rng, model, cfg, i));
  return scenes;
}
