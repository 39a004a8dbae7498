/**
 * Desk-scale training demonstration: fit the tiny convnet on synthetic
 * scenes whose label tracks carry planted geolocation shifts, under either
 * the shift-resilient loss or its non-shifted special case (radius 0), and
 * evaluate against the dense noiseless truth.
 *
 * Runnable as a script:
 *
 *   node dist/trainDemo.js --mode both --epochs 30 --output report.json
 */

import { writeFileSync } from "node:fs";

import { Adam, HeightNet } from "./convnet";
import { Rng } from "./rng";
import { ArrayLossHandle } from "./shiftLoss";
import { CorpusConfig, DEFAULT_CORPUS, SCENE_SIZE, Scene, makeCorpus } from "./synthetic";

export type LossMode = "shifted" | "non-shifted";

export interface TrainDemoOptions {
  seed: number;
  epochs: number;
  lossMode: LossMode;
  corpus?: Partial<CorpusConfig>;
  learningRate?: number;
}

export interface TrainDemoReport {
  seed: number;
  epochs: number;
  lossMode: LossMode;
  parameterCount: number;
  batches: number;
  lossCurve: number[];          // mean training loss per epoch
  finalTrainLoss: number | null;
  dominanceViolations: number;  // batches where shifted > non-shifted
  maeVsTruth: number;           // against dense noiseless truth
  evalShiftedLoss: number;      // both evaluation losses, any training mode
  evalNonShiftedLoss: number;
}

function meanAbsError(pred: Float64Array, truth: Float64Array): number {
  let acc = 0;
  for (let i = 0; i < pred.length; i++) acc += Math.abs(pred[i] - truth[i]);
  return acc / pred.length;
}

function evaluate(
  net: HeightNet,
  scenes: Scene[],
  shifted: ArrayLossHandle,
  nonShifted: ArrayLossHandle,
): { mae: number; shiftedLoss: number; nonShiftedLoss: number } {
  let mae = 0;
  let sLoss = 0;
  let nsLoss = 0;
  for (const scene of scenes) {
    const { pred } = net.forward(scene.channels, SCENE_SIZE, SCENE_SIZE);
    mae += meanAbsError(pred, scene.truth);
    const l = scene.labels;
    sLoss += shifted.forward(pred, SCENE_SIZE, SCENE_SIZE, l.px, l.py, l.h, l.trackKeys).value;
    nsLoss += nonShifted.forward(pred, SCENE_SIZE, SCENE_SIZE, l.px, l.py, l.h, l.trackKeys).value;
  }
  return {
    mae: mae / scenes.length,
    shiftedLoss: sLoss / scenes.length,
    nonShiftedLoss: nsLoss / scenes.length,
  };
}

export function trainDemo(options: TrainDemoOptions): TrainDemoReport {
  const corpusCfg: CorpusConfig = { ...DEFAULT_CORPUS, ...options.corpus };
  const scenes = makeCorpus(options.seed, corpusCfg);
  const net = new HeightNet(corpusCfg.nChannels, 16, options.seed + 1);
  const adam = new Adam(net.parameters(), options.learningRate ?? 3e-3);
  const shifted = new ArrayLossHandle({ radius: Math.sqrt(2) });
  const nonShifted = new ArrayLossHandle({ radius: 0 });
  const trainHandle = options.lossMode === "shifted" ? shifted : nonShifted;

  const order = scenes.map((_, i) => i);
  const rng = new Rng(options.seed + 7);
  const lossCurve: number[] = [];
  let batches = 0;
  let dominanceViolations = 0;

  for (let epoch = 0; epoch < options.epochs; epoch++) {
    rng.shuffle(order);
    let epochLoss = 0;
    for (const idx of order) {
      const scene = scenes[idx];
      const l = scene.labels;
      const { pred, cache } = net.forward(scene.channels, SCENE_SIZE, SCENE_SIZE);
      let finite = true;
      for (let i = 0; i < pred.length; i++) {
        if (!Number.isFinite(pred[i])) {
          finite = false;
          break;
        }
      }
      const result = finite
        ? trainHandle.forwardBackward(pred, SCENE_SIZE, SCENE_SIZE, l.px, l.py, l.h, l.trackKeys)
        : null;
      if (result === null || !Number.isFinite(result.value)) {
        throw new Error(
          `training diverged: non-finite ${result === null ? "prediction" : "loss"} ` +
          `at epoch ${epoch}, scene ${idx} (mode ${options.lossMode}, batch ${batches})`,
        );
      }
      if (options.lossMode === "shifted") {
        const ns = nonShifted.forward(pred, SCENE_SIZE, SCENE_SIZE, l.px, l.py, l.h, l.trackKeys);
        if (result.value > ns.value) dominanceViolations++;
      }
      const grads = net.backward(result.gradient!, SCENE_SIZE, SCENE_SIZE, cache);
      adam.step(grads);
      epochLoss += result.value;
      batches++;
    }
    lossCurve.push(epochLoss / order.length);
  }

  const evalResult = evaluate(net, scenes, shifted, nonShifted);
  return {
    seed: options.seed,
    epochs: options.epochs,
    lossMode: options.lossMode,
    parameterCount: net.parameterCount,
    batches,
    lossCurve,
    finalTrainLoss: lossCurve.length ? lossCurve[lossCurve.length - 1] : null,
    dominanceViolations,
    maeVsTruth: evalResult.mae,
    evalShiftedLoss: evalResult.shiftedLoss,
    evalNonShiftedLoss: evalResult.nonShiftedLoss,
  };
}

export interface AblationReport {
  seed: number;
  epochs: number;
  shifted: TrainDemoReport;
  nonShifted: TrainDemoReport;
  shiftedArmWins: boolean;
}

/** Both arms at the same seed and budget, for the loss-ablation comparison. */
export function runAblation(
  seed: number, epochs: number, corpus?: Partial<CorpusConfig>,
): AblationReport {
  const shifted = trainDemo({ seed, epochs, lossMode: "shifted", corpus });
  const nonShifted = trainDemo({ seed, epochs, lossMode: "non-shifted", corpus });
  return {
    seed,
    epochs,
    shifted,
    nonShifted,
    shiftedArmWins: shifted.maeVsTruth < nonShifted.maeVsTruth,
  };
}

function parseArgs(argv: string[]): Map<string, string | boolean> {
  const args = new Map<string, string | boolean>();
  for (let i = 0; i < argv.length; i++) {
    const arg = argv[i];
    if (!arg.startsWith("--")) continue;
    const key = arg.slice(2);
    const next = argv[i + 1];
    if (next !== undefined && !next.startsWith("--")) {
      args.set(key, next);
      i++;
    } else {
      args.set(key, true);
    }
  }
  return args;
}

export function main(argv: string[]): number {
  const args = parseArgs(argv);
  const seed = Number(args.get("seed") ?? 0);
  const epochs = Number(args.get("epochs") ?? 30);
  const mode = String(args.get("mode") ?? "both");
  const quick = args.get("quick") === true;
  const corpus = quick ? { nScenes: 4 } : undefined;

  let report: object;
  if (mode === "both") {
    report = runAblation(seed, epochs, corpus);
  } else if (mode === "shifted" || mode === "non-shifted") {
    report = trainDemo({ seed, epochs, lossMode: mode, corpus });
  } else {
    process.stderr.write(`unknown --mode ${mode}; use shifted, non-shifted, or both\n`);
    return 2;
  }
  const text = JSON.stringify(report, null, 1) + "\n";
  const output = args.get("output");
  if (typeof output === "string") {
    writeFileSync(output, text);
  } else {
    process.stdout.write(text);
  }
  return 0;
}

if (require.main === module) {
  process.exit(main(process.argv.slice(2)));
}
