/**
 * bindings.ts — the operations training loops call: banded query-set
 * generation, validation losses, and mesh evaluation. Every call shells out
 * to the reconstruction CLI and exchanges arrays through LSTG containers,
 * so the numbers are the primary implementation's numbers by construction.
 *
 * Calls are blocking and reentrant; each uses its own temp directory and no
 * state survives the call.
 */

import { mkdtempSync, rmSync, writeFileSync, readFileSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import { CameraJson } from "./camera.js";
import { BoundArray, readEntry, readFile, writeFile } from "./lstg.js";
import { RunOptions, runCli } from "./runner.js";

function withTempDir<T>(fn: (dir: string) => T): T {
  const dir = mkdtempSync(join(tmpdir(), "sdfb-"));
  try {
    return fn(dir);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}

// ---------------------------------------------------------------------------
// query-set generation

export interface QuerySetConfig {
  /** Total query count (default 50000). */
  n?: number;
  seed?: number;
  /** Noise bands as [fraction, sigma] pairs; defaults to the standard
   *  0.45:0.003, 0.44:0.01, 0.10:0.07 schedule. */
  schedule?: Array<[number, number]>;
  /** Drop queries whose |sdf| exceeds this bound (pre-scale units). */
  maxBand?: number;
}

export interface QuerySet {
  /** (n, 3) f32 query positions in the normalized unit cube. */
  points: BoundArray;
  /** (n,) f32 stored signed distances (negative inside, scale applied). */
  sdf: BoundArray;
  /** Multiplier baked into sdf; divide to recover raw distances. */
  sdfScale: number;
}

/**
 * Generate the banded near-surface query set for one mesh. Numerically
 * identical to `prep` with the same seed: it is the same code path.
 */
export function generateQuerySet(
  meshPath: string,
  config: QuerySetConfig = {},
  opts: RunOptions = {},
): QuerySet {
  return withTempDir((dir) => {
    const args = ["prep", meshPath, "--out-dir", dir];
    args.push("--n", String(config.n ?? 50000));
    args.push("--seed", String(config.seed ?? 0));
    // keep prep light: the coarse cloud is a byproduct this binding discards
    args.push("--coarse-n", "64", "--vox-res", "16");
    if (config.schedule !== undefined) {
      args.push(
        "--schedule",
        config.schedule.map(([f, s]) => `${f}:${s}`).join(","),
      );
    }
    if (config.maxBand !== undefined) {
      args.push("--max-band", String(config.maxBand));
    }
    runCli(args, opts);
    const entries = readFile(join(dir, "queries.lstg"));
    const points = entries.get("points");
    const sdf = entries.get("sdf");
    const scale = entries.get("sdf_scale");
    if (points === undefined || sdf === undefined) {
      throw new Error("queries.lstg is missing points/sdf entries");
    }
    return {
      points,
      sdf,
      sdfScale: scale !== undefined ? Number(scale.data[0]) : 10.0,
    };
  });
}

// ---------------------------------------------------------------------------
// losses

export interface LossPrediction {
  /** (n, 3) predicted point cloud, paired with target.points. */
  points?: BoundArray;
  /** Occupancy probabilities in [0, 1], paired with target.occupancy. */
  occProb?: BoundArray;
  /** Predicted signed distances, paired with target.sdf. */
  sdf?: BoundArray;
}

export interface LossTarget {
  points?: BoundArray;
  /** Binary occupancy labels. */
  occupancy?: BoundArray;
  sdf?: BoundArray;
}

export interface LossReport {
  /** Squared-sum chamfer between the point clouds, or null if absent. */
  cd: number | null;
  /** Class-weighted binary cross-entropy, or null if absent. */
  bce: number | null;
  /** Mean squared SDF error, or null if absent. */
  sdfMse: number | null;
  /** bce + sdfMse when both are present. */
  total: number | null;
}

/**
 * Validation losses over any subset of {points, occupancy, sdf} pairs.
 * gamma weights the occupied BCE term (default 0.9).
 */
export function losses(
  pred: LossPrediction,
  target: LossTarget,
  gamma = 0.9,
  opts: RunOptions = {},
): LossReport {
  return withTempDir((dir) => {
    const predEntries: Record<string, BoundArray> = {};
    const targetEntries: Record<string, BoundArray> = {};
    if (pred.points !== undefined) predEntries["points"] = pred.points;
    if (pred.occProb !== undefined) predEntries["occ_prob"] = pred.occProb;
    if (pred.sdf !== undefined) predEntries["sdf"] = pred.sdf;
    if (target.points !== undefined) targetEntries["points"] = target.points;
    if (target.occupancy !== undefined) targetEntries["occupancy"] = target.occupancy;
    if (target.sdf !== undefined) targetEntries["sdf"] = target.sdf;

    const predPath = join(dir, "pred.lstg");
    const targetPath = join(dir, "target.lstg");
    writeFile(predPath, predEntries);
    writeFile(targetPath, targetEntries);

    const stdout = runCli(
      ["losses", "--pred", predPath, "--target", targetPath, "--gamma", String(gamma)],
      opts,
    );
    const parsed = JSON.parse(stdout) as {
      cd: number | null;
      bce: number | null;
      sdf_mse: number | null;
      total: number | null;
    };
    return { cd: parsed.cd, bce: parsed.bce, sdfMse: parsed.sdf_mse, total: parsed.total };
  });
}

// ---------------------------------------------------------------------------
// evaluation

export interface MetricReport {
  /** Chamfer distance, reported x1e3. */
  cd: number | null;
  iou: number | null;
  fscore: number | null;
  precision: number | null;
  recall: number | null;
  cd_raw: number | null;
  cd_squared_sum: number | null;
  samples: number;
  fscore_d: number;
  iou_resolution: number;
  decisions: Record<string, unknown>;
}

export interface EvalOptions extends RunOptions {
  samples?: number;
  seed?: number;
  /** F-score match threshold (strictly-below distance). */
  fscoreD?: number;
  iouRes?: number;
}

function evalArgs(base: string[], opts: EvalOptions, out: string): string[] {
  const args = [...base];
  if (opts.samples !== undefined) args.push("--samples", String(opts.samples));
  args.push("--seed", String(opts.seed ?? 0));
  if (opts.fscoreD !== undefined) args.push("--fscore-d", String(opts.fscoreD));
  if (opts.iouRes !== undefined) args.push("--iou-res", String(opts.iouRes));
  args.push("--out", out);
  return args;
}

/** Full-surface evaluation of a reconstruction against ground truth. */
export function metrics(
  predMesh: string,
  gtMesh: string,
  opts: EvalOptions = {},
): MetricReport {
  return withTempDir((dir) => {
    const out = join(dir, "report.json");
    runCli(evalArgs(["eval", predMesh, gtMesh], opts, out), opts);
    return JSON.parse(readFileSync(out, "utf-8")) as MetricReport;
  });
}

export interface OccludedEvalOptions extends EvalOptions {
  /** Square canvas override in pixels. */
  canvas?: number;
  /** Sub-face refinement bound in world units. */
  maxEdge?: number;
}

/**
 * Evaluation restricted to surface regions the camera cannot see. The
 * camera is a JSON file path or an in-memory description (see lookAt).
 */
export function evalOccluded(
  predMesh: string,
  gtMesh: string,
  camera: string | CameraJson,
  opts: OccludedEvalOptions = {},
): MetricReport {
  return withTempDir((dir) => {
    let cameraPath: string;
    if (typeof camera === "string") {
      cameraPath = camera;
    } else {
      cameraPath = join(dir, "camera.json");
      writeFileSync(cameraPath, JSON.stringify(camera));
    }
    const base = ["eval-occluded", predMesh, gtMesh, "--camera", cameraPath];
    if (opts.canvas !== undefined) base.push("--canvas", String(opts.canvas));
    if (opts.maxEdge !== undefined) base.push("--max-edge", String(opts.maxEdge));
    const out = join(dir, "report.json");
    runCli(evalArgs(base, opts, out), opts);
    // the report sits under an "occluded" key to mark the protocol
    const parsed = JSON.parse(readFileSync(out, "utf-8")) as {
      occluded: MetricReport;
    };
    return parsed.occluded;
  });
}
