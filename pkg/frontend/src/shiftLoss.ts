/**
 * Shift-resilient regression loss over sparse track labels, bound to flat
 * typed arrays.
 *
 * Ground-truth tracks carry a systematic per-track geolocation error; the
 * loss evaluates every integer displacement of a track within a search
 * radius and scores the track at its best displacement.  Semantics match
 * the pipeline CLI's `loss` subcommand exactly:
 *
 * - candidates ordered by ascending norm, then (dx, dy); ties keep the
 *   earliest candidate,
 * - tracks smaller than `minTrackSizeForShift` never shift,
 * - displaced measurements falling off the grid are excluded per candidate,
 *   candidates compared by mean per-measurement loss,
 * - reported value = sum of chosen per-track loss sums / total retained
 *   measurements,
 * - all sums accumulate strictly left to right in storage order.
 *
 * The arithmetic mirrors the reference implementation expression by
 * expression (including evaluation order inside the Huber branches), so
 * values and gradients agree bit-for-bit, not just to tolerance.
 */

export type PixelLossKind = "l1" | "l2" | "huber";

export interface ShiftLossConfig {
  radius: number;
  pixelLoss: PixelLossKind;
  huberDelta: number;
  minTrackSizeForShift: number;
}

export const DEFAULT_CONFIG: ShiftLossConfig = {
  radius: Math.sqrt(2),
  pixelLoss: "huber",
  huberDelta: 3.0,
  minTrackSizeForShift: 10,
};

export interface Shift {
  dx: number;
  dy: number;
}

export interface TrackResult {
  trackKey: string;
  shift: Shift;
  lossSum: number;
  nInBounds: number;
}

export interface LossResult {
  value: number;
  nEffective: number;
  perTrack: TrackResult[];
  gradient: Float64Array | null;
  empty: boolean;
}

export function shiftCandidates(radius: number): Shift[] {
  if (!(radius >= 0)) {
    throw new RangeError(`radius must be nonnegative, got ${radius}`);
  }
  const reach = Math.floor(radius + 1e-9);
  const limit = radius * radius + 1e-9;
  const shifts: Shift[] = [];
  for (let dx = -reach; dx <= reach; dx++) {
    for (let dy = -reach; dy <= reach; dy++) {
      // dx + 0 canonicalizes the -0 produced by negating a zero reach
      if (dx * dx + dy * dy <= limit) shifts.push({ dx: dx + 0, dy: dy + 0 });
    }
  }
  shifts.sort(
    (a, b) =>
      a.dx * a.dx + a.dy * a.dy - (b.dx * b.dx + b.dy * b.dy) ||
      a.dx - b.dx ||
      a.dy - b.dy,
  );
  return shifts;
}

function pixelValue(kind: PixelLossKind, delta: number, r: number): number {
  if (kind === "l1") return Math.abs(r);
  if (kind === "l2") return r * r;
  return Math.abs(r) <= delta ? 0.5 * r * r : delta * (Math.abs(r) - 0.5 * delta);
}

function pixelGrad(kind: PixelLossKind, delta: number, r: number): number {
  if (kind === "l1") return Math.sign(r);
  if (kind === "l2") return 2.0 * r;
  return Math.abs(r) <= delta ? r : delta * Math.sign(r);
}

interface TrackView {
  key: string;
  /** indices into the flat measurement arrays, in input order */
  rows: number[];
}

function groupByTrack(trackKeys: ArrayLike<string | number>): TrackView[] {
  const order: TrackView[] = [];
  const byKey = new Map<string, TrackView>();
  for (let i = 0; i < trackKeys.length; i++) {
    const key = String(trackKeys[i]);
    let view = byKey.get(key);
    if (!view) {
      view = { key, rows: [] };
      byKey.set(key, view);
      order.push(view);
    }
    view.rows.push(i);
  }
  return order;
}

function validate(
  pred: Float64Array,
  height: number,
  width: number,
  px: ArrayLike<number>,
  py: ArrayLike<number>,
  h: ArrayLike<number>,
  trackKeys: ArrayLike<string | number>,
): void {
  if (!Number.isInteger(width) || !Number.isInteger(height) || width < 1 || height < 1) {
    throw new RangeError(`grid must be at least 1x1, got ${width}x${height}`);
  }
  if (pred.length !== width * height) {
    throw new RangeError(
      `prediction array has ${pred.length} values for a ${width}x${height} grid`,
    );
  }
  const n = px.length;
  if (py.length !== n || h.length !== n || trackKeys.length !== n) {
    throw new RangeError(
      `measurement arrays disagree in length: px=${px.length} py=${py.length} h=${h.length} keys=${trackKeys.length}`,
    );
  }
  for (let i = 0; i < pred.length; i++) {
    if (!Number.isFinite(pred[i])) {
      throw new RangeError(`prediction contains a non-finite value at ${i}`);
    }
  }
  const seen = new Set<string>();
  for (let i = 0; i < n; i++) {
    if (!Number.isInteger(px[i]) || !Number.isInteger(py[i])) {
      throw new RangeError(`measurement ${i} has non-integer pixel (${px[i]}, ${py[i]})`);
    }
    if (px[i] < 0 || px[i] >= width || py[i] < 0 || py[i] >= height) {
      throw new RangeError(`measurement ${i} at (${px[i]}, ${py[i]}) is outside the grid`);
    }
    if (!Number.isFinite(h[i])) {
      throw new RangeError(`measurement ${i} has non-finite height`);
    }
    const cell = `${trackKeys[i]}:${px[i]},${py[i]}`;
    if (seen.has(cell)) {
      throw new RangeError(`track ${trackKeys[i]} has two measurements at (${px[i]}, ${py[i]})`);
    }
    seen.add(cell);
  }
}

/**
 * Forward value and gradient of the shift-resilient loss.
 *
 * `pred` is a row-major height-by-width grid; `px`/`py`/`h`/`trackKeys`
 * are flat per-measurement arrays (used in place, no copies).  The
 * gradient has the prediction's shape and is zero away from the chosen
 * displaced measurement pixels.
 */
export function lossForwardBackward(
  pred: Float64Array,
  height: number,
  width: number,
  px: ArrayLike<number>,
  py: ArrayLike<number>,
  h: ArrayLike<number>,
  trackKeys: ArrayLike<string | number>,
  cfg: ShiftLossConfig = DEFAULT_CONFIG,
  withGrad = true,
): LossResult {
  validate(pred, height, width, px, py, h, trackKeys);
  const gradient = withGrad ? new Float64Array(width * height) : null;
  if (px.length === 0) {
    return { value: 0.0, nEffective: 0, perTrack: [], gradient, empty: true };
  }

  const candidates = shiftCandidates(cfg.radius);
  const zeroOnly: Shift[] = [{ dx: 0, dy: 0 }];
  const kind = cfg.pixelLoss;
  const delta = cfg.huberDelta;

  let total = 0.0;
  let nEffective = 0;
  const perTrack: TrackResult[] = [];
  const pendingGrad: Array<{ rows: number[]; shift: Shift }> = [];

  for (const track of groupByTrack(trackKeys)) {
    const rows = track.rows;
    const trackCandidates =
      rows.length >= cfg.minTrackSizeForShift ? candidates : zeroOnly;

    let best: { score: number; shift: Shift; lossSum: number; nIn: number } | null = null;
    for (const shift of trackCandidates) {
      let lossSum = 0.0;
      let nIn = 0;
      for (const i of rows) {
        const sx = (px[i] as number) + shift.dx;
        const sy = (py[i] as number) + shift.dy;
        if (sx < 0 || sx >= width || sy < 0 || sy >= height) continue;
        const residual = pred[sy * width + sx] - (h[i] as number);
        lossSum += pixelValue(kind, delta, residual);
        nIn += 1;
      }
      if (nIn === 0) continue;
      const score = lossSum / nIn;
      if (best === null || score < best.score) {
        best = { score, shift, lossSum, nIn };
      }
    }
    // (0, 0) keeps every measurement (validated in-bounds), so a best
    // candidate always exists.
    const chosen = best!;
    total += chosen.lossSum;
    nEffective += chosen.nIn;
    perTrack.push({
      trackKey: track.key,
      shift: chosen.shift,
      lossSum: chosen.lossSum,
      nInBounds: chosen.nIn,
    });
    if (gradient) pendingGrad.push({ rows, shift: chosen.shift });
  }

  const value = total / nEffective;
  if (gradient) {
    for (const { rows, shift } of pendingGrad) {
      for (const i of rows) {
        const sx = (px[i] as number) + shift.dx;
        const sy = (py[i] as number) + shift.dy;
        if (sx < 0 || sx >= width || sy < 0 || sy >= height) continue;
        const residual = pred[sy * width + sx] - (h[i] as number);
        gradient[sy * width + sx] += pixelGrad(kind, delta, residual);
      }
    }
    for (let i = 0; i < gradient.length; i++) gradient[i] /= nEffective;
  }
  return { value, nEffective, perTrack, gradient, empty: false };
}

/**
 * Immutable handle around a config; callable from concurrent callers, each
 * call independent.
 */
export class ArrayLossHandle {
  readonly config: ShiftLossConfig;

  constructor(config: Partial<ShiftLossConfig> = {}) {
    this.config = { ...DEFAULT_CONFIG, ...config };
    if (!(this.config.radius >= 0)) {
      throw new RangeError(`radius must be nonnegative, got ${this.config.radius}`);
    }
    if (!["l1", "l2", "huber"].includes(this.config.pixelLoss)) {
      throw new RangeError(`unknown pixel loss ${this.config.pixelLoss}`);
    }
    if (this.config.pixelLoss === "huber" && !(this.config.huberDelta > 0)) {
      throw new RangeError(`huber delta must be positive, got ${this.config.huberDelta}`);
    }
  }

  forwardBackward(
    pred: Float64Array,
    height: number,
    width: number,
    px: ArrayLike<number>,
    py: ArrayLike<number>,
    h: ArrayLike<number>,
    trackKeys: ArrayLike<string | number>,
  ): LossResult {
    return lossForwardBackward(pred, height, width, px, py, h, trackKeys, this.config, true);
  }

  forward(
    pred: Float64Array,
    height: number,
    width: number,
    px: ArrayLike<number>,
    py: ArrayLike<number>,
    h: ArrayLike<number>,
    trackKeys: ArrayLike<string | number>,
  ): LossResult {
    return lossForwardBackward(pred, height, width, px, py, h, trackKeys, this.config, false);
  }
}
