/**
 * A deliberately tiny fully-convolutional regressor: three 3x3 convolution
 * layers (ReLU between, linear output) mapping a C-channel grid to one
 * height estimate per pixel.  Well under 50k parameters; the point of the
 * demo is the loss, not the architecture.
 */

import { Rng } from "./rng";

function conv3x3Forward(
  x: Float64Array, inC: number, h: number, w: number,
  weight: Float64Array, bias: Float64Array, outC: number,
): Float64Array {
  const y = new Float64Array(outC * h * w);
  for (let oc = 0; oc < outC; oc++) {
    const wBase = oc * inC * 9;
    const yBase = oc * h * w;
    const b = bias[oc];
    for (let iy = 0; iy < h; iy++) {
      for (let ix = 0; ix < w; ix++) {
        let acc = b;
        for (let ic = 0; ic < inC; ic++) {
          const xBase = ic * h * w;
          const wBase2 = wBase + ic * 9;
          for (let ky = -1; ky <= 1; ky++) {
            const yy = iy + ky;
            if (yy < 0 || yy >= h) continue;
            for (let kx = -1; kx <= 1; kx++) {
              const xx = ix + kx;
              if (xx < 0 || xx >= w) continue;
              acc += weight[wBase2 + (ky + 1) * 3 + (kx + 1)] * x[xBase + yy * w + xx];
            }
          }
        }
        y[yBase + iy * w + ix] = acc;
      }
    }
  }
  return y;
}

function conv3x3Backward(
  x: Float64Array, inC: number, h: number, w: number,
  weight: Float64Array, outC: number, dy: Float64Array,
): { dx: Float64Array; dWeight: Float64Array; dBias: Float64Array } {
  const dx = new Float64Array(inC * h * w);
  const dWeight = new Float64Array(outC * inC * 9);
  const dBias = new Float64Array(outC);
  for (let oc = 0; oc < outC; oc++) {
    const wBase = oc * inC * 9;
    const yBase = oc * h * w;
    for (let iy = 0; iy < h; iy++) {
      for (let ix = 0; ix < w; ix++) {
        const g = dy[yBase + iy * w + ix];
        if (g === 0) continue;
        dBias[oc] += g;
        for (let ic = 0; ic < inC; ic++) {
          const xBase = ic * h * w;
          const wBase2 = wBase + ic * 9;
          for (let ky = -1; ky <= 1; ky++) {
            const yy = iy + ky;
            if (yy < 0 || yy >= h) continue;
            for (let kx = -1; kx <= 1; kx++) {
              const xx = ix + kx;
              if (xx < 0 || xx >= w) continue;
              const k = wBase2 + (ky + 1) * 3 + (kx + 1);
              dWeight[k] += g * x[xBase + yy * w + xx];
              dx[xBase + yy * w + xx] += g * weight[k];
            }
          }
        }
      }
    }
  }
  return { dx, dWeight, dBias };
}

interface ConvLayer {
  inC: number;
  outC: number;
  weight: Float64Array;
  bias: Float64Array;
}

function makeLayer(rng: Rng, inC: number, outC: number): ConvLayer {
  const weight = new Float64Array(outC * inC * 9);
  const scale = Math.sqrt(2.0 / (inC * 9));   // He initialization
  for (let i = 0; i < weight.length; i++) weight[i] = rng.gauss() * scale;
  return { inC, outC, weight, bias: new Float64Array(outC) };
}

interface ForwardCache {
  inputs: Float64Array[];   // input to each layer
  preActs: Float64Array[];  // pre-activation output of each layer
}

export class HeightNet {
  readonly layers: ConvLayer[];
  readonly inChannels: number;

  constructor(inChannels: number, hidden = 16, seed = 0) {
    const rng = new Rng(seed);
    this.inChannels = inChannels;
    this.layers = [
      makeLayer(rng, inChannels, hidden),
      makeLayer(rng, hidden, hidden),
      makeLayer(rng, hidden, 1),
    ];
  }

  get parameterCount(): number {
    return this.layers.reduce((n, l) => n + l.weight.length + l.bias.length, 0);
  }

  parameters(): Float64Array[] {
    return this.layers.flatMap((l) => [l.weight, l.bias]);
  }

  /** Forward pass; keeps per-layer inputs for the backward pass. */
  forward(x: Float64Array, h: number, w: number): { pred: Float64Array; cache: ForwardCache } {
    const cache: ForwardCache = { inputs: [], preActs: [] };
    let cur = x;
    for (let li = 0; li < this.layers.length; li++) {
      const layer = this.layers[li];
      cache.inputs.push(cur);
      const pre = conv3x3Forward(cur, layer.inC, h, w, layer.weight, layer.bias, layer.outC);
      cache.preActs.push(pre);
      if (li < this.layers.length - 1) {
        const act = new Float64Array(pre.length);
        for (let i = 0; i < pre.length; i++) act[i] = pre[i] > 0 ? pre[i] : 0;
        cur = act;
      } else {
        cur = pre;   // linear output layer
      }
    }
    return { pred: cur, cache };
  }

  /** Backward pass from dLoss/dPred; returns per-parameter gradients. */
  backward(
    dPred: Float64Array, h: number, w: number, cache: ForwardCache,
  ): Float64Array[] {
    const grads: Float64Array[] = [];
    let dy = dPred;
    for (let li = this.layers.length - 1; li >= 0; li--) {
      const layer = this.layers[li];
      const { dx, dWeight, dBias } = conv3x3Backward(
        cache.inputs[li], layer.inC, h, w, layer.weight, layer.outC, dy,
      );
      grads.unshift(dWeight, dBias);
      if (li > 0) {
        const pre = cache.preActs[li - 1];
        for (let i = 0; i < dx.length; i++) {
          if (pre[i] <= 0) dx[i] = 0;   // ReLU gate
        }
      }
      dy = dx;
    }
    return grads;
  }
}

/** Standard Adam with bias correction. */
export class Adam {
  private readonly m: Float64Array[];
  private readonly v: Float64Array[];
  private t = 0;

  constructor(
    private readonly params: Float64Array[],
    private readonly lr = 1e-3,
    private readonly beta1 = 0.9,
    private readonly beta2 = 0.999,
    private readonly eps = 1e-8,
  ) {
    this.m = params.map((p) => new Float64Array(p.length));
    this.v = params.map((p) => new Float64Array(p.length));
  }

  step(grads: Float64Array[]): void {
    this.t += 1;
    const c1 = 1 - Math.pow(this.beta1, this.t);
    const c2 = 1 - Math.pow(this.beta2, this.t);
    for (let pi = 0; pi < this.params.length; pi++) {
      const p = this.params[pi];
      const g = grads[pi];
      const m = this.m[pi];
      const v = this.v[pi];
      for (let i = 0; i < p.length; i++) {
        m[i] = this.beta1 * m[i] + (1 - this.beta1) * g[i];
        v[i] = this.beta2 * v[i] + (1 - this.beta2) * g[i] * g[i];
        p[i] -= (this.lr * (m[i] / c1)) / (Math.sqrt(v[i] / c2) + this.eps);
      }
    }
  }
}
