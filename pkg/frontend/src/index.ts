export {
  ArrayLossHandle,
  DEFAULT_CONFIG,
  LossResult,
  PixelLossKind,
  Shift,
  ShiftLossConfig,
  TrackResult,
  lossForwardBackward,
  shiftCandidates,
} from "./shiftLoss";
export { Adam, HeightNet } from "./convnet";
export { Rng } from "./rng";
export {
  CorpusConfig,
  DEFAULT_CORPUS,
  SCENE_SIZE,
  Scene,
  SceneLabels,
  heightField,
  makeCorpus,
  makeScene,
  smoothField,
} from "./synthetic";
export {
  AblationReport,
  LossMode,
  TrainDemoOptions,
  TrainDemoReport,
  runAblation,
  trainDemo,
} from "./trainDemo";
export { Instance, PrimaryReport, runPrimaryLossBatch } from "./primaryCli";
