/**
 * Bindings for the sdfrecon toolkit: query-set generation, validation
 * losses, and mesh evaluation for external training loops. Arrays travel as
 * LSTG containers; computation happens in the primary CLI.
 */

export {
  generateQuerySet,
  losses,
  metrics,
  evalOccluded,
} from "./bindings.js";
export type {
  QuerySet,
  QuerySetConfig,
  LossPrediction,
  LossTarget,
  LossReport,
  MetricReport,
  EvalOptions,
  OccludedEvalOptions,
} from "./bindings.js";
export { lookAt } from "./camera.js";
export type { CameraJson, LookAtOptions } from "./camera.js";
export {
  decode,
  encode,
  f32,
  f32Rows,
  u8,
  readEntry,
  readFile,
  writeFile,
  LstgParseError,
} from "./lstg.js";
export type { BoundArray, Dtype } from "./lstg.js";
export { runCli, CliError, InputError, NumericError, IoError } from "./runner.js";
export type { RunOptions } from "./runner.js";
