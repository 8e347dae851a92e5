/**
 * Parity suite: the bindings must reproduce the primary CLI's numbers
 * exactly (same files in, same bytes out) and match independent references
 * computed here to 1e-9.
 */

import { rmSync } from "node:fs";
import { join } from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import {
  evalOccluded,
  generateQuerySet,
  losses,
  lookAt,
  metrics,
  f32,
  f32Rows,
  readFile,
  runCli,
} from "../src/index.js";
import { makeTempDir, mulberry32, writeCube } from "./fixtures.js";

let dir: string;
let cubePath: string;
let normPath: string;

beforeAll(() => {
  dir = makeTempDir();
  cubePath = writeCube(dir);
  // a normalized mesh for the evaluation tests
  runCli(["prep", cubePath, "--out-dir", join(dir, "prep"), "--n", "500",
    "--coarse-n", "64", "--vox-res", "16", "--seed", "0"]);
  normPath = join(dir, "prep", "normalized.obj");
});

afterAll(() => {
  rmSync(dir, { recursive: true, force: true });
});

describe("generateQuerySet", () => {
  it("returns the documented shapes at the default count", () => {
    const qs = generateQuerySet(cubePath, { seed: 3 });
    expect(qs.points.shape).toEqual([50000, 3]);
    expect(qs.sdf.shape).toEqual([50000]);
    expect(qs.sdfScale).toBe(10.0);
  });

  it("is deterministic for a fixed seed", () => {
    const a = generateQuerySet(cubePath, { n: 2000, seed: 5 });
    const b = generateQuerySet(cubePath, { n: 2000, seed: 5 });
    expect(Buffer.from(a.points.data.buffer).equals(Buffer.from(b.points.data.buffer))).toBe(true);
    expect(Buffer.from(a.sdf.data.buffer).equals(Buffer.from(b.sdf.data.buffer))).toBe(true);
  });

  it("matches a direct CLI prep run byte for byte", () => {
    const qs = generateQuerySet(cubePath, { n: 2000, seed: 5 });
    const cliDir = join(dir, "prep-parity");
    runCli(["prep", cubePath, "--out-dir", cliDir, "--n", "2000", "--seed", "5",
      "--coarse-n", "64", "--vox-res", "16"]);
    const cli = readFile(join(cliDir, "queries.lstg"));
    const cliPoints = cli.get("points")!;
    const cliSdf = cli.get("sdf")!;
    expect(Buffer.from(qs.points.data.buffer).equals(Buffer.from(cliPoints.data.buffer))).toBe(true);
    expect(Buffer.from(qs.sdf.data.buffer).equals(Buffer.from(cliSdf.data.buffer))).toBe(true);
  });

  it("honors a custom schedule and max band", () => {
    const qs = generateQuerySet(cubePath, {
      n: 1000,
      seed: 1,
      schedule: [[0.6, 0.005], [0.4, 0.02]],
      maxBand: 0.25,
    });
    expect(qs.points.shape).toEqual([1000, 3]);
    // stored values carry the x10 scale; bound is maxBand * scale
    for (const v of qs.sdf.data) {
      expect(Math.abs(v)).toBeLessThanOrEqual(0.25 * qs.sdfScale + 1e-6);
    }
  });
});

describe("losses", () => {
  it("reproduces the weighted-BCE hand value", () => {
    const out = losses({ occProb: f32([0.5]) }, { occupancy: f32([1.0]) }, 0.5);
    expect(out.bce).not.toBeNull();
    expect(Math.abs(out.bce! - 0.346574)).toBeLessThanOrEqual(1e-6);
    // the exact value is ln(2)/2; the CLI must agree to binding tolerance
    expect(Math.abs(out.bce! - Math.log(2) / 2)).toBeLessThanOrEqual(1e-9);
  });

  it("reproduces the two-point chamfer and the MSE fixture", () => {
    const out = losses(
      { points: f32Rows([[0, 0, 0]]), sdf: f32([0, 0]) },
      { points: f32Rows([[2, 0, 0]]), sdf: f32([1, 0]) },
    );
    expect(out.cd).toBe(8.0);
    expect(out.sdfMse).toBe(0.5);
  });

  it("computes total as bce + sdfMse exactly", () => {
    const out = losses(
      { occProb: f32([0.5]), sdf: f32([0, 0]) },
      { occupancy: f32([1.0]), sdf: f32([1, 0]) },
      0.5,
    );
    expect(out.total).toBe(out.bce! + out.sdfMse!);
    expect(out.cd).toBeNull();
  });

  it("is zero (bce post-clamp tiny) on identical inputs", () => {
    const pts = f32Rows([[0.1, 0.2, 0.3], [-0.4, 0.0, 0.2]]);
    const sdf = f32([0.5, -0.25, 0.0]);
    const out = losses(
      { points: pts, occProb: f32([1, 0]), sdf },
      { points: pts, occupancy: f32([1, 0]), sdf },
    );
    expect(out.cd).toBe(0.0);
    expect(out.sdfMse).toBe(0.0);
    expect(out.bce!).toBeLessThanOrEqual(1e-6);
  });

  it("matches independent references on random inputs within 1e-9", () => {
    const rand = mulberry32(99);
    const n = 64;
    const predPts: number[][] = [];
    const gtPts: number[][] = [];
    for (let i = 0; i < n; i++) {
      predPts.push([rand(), rand(), rand()]);
      gtPts.push([rand(), rand(), rand()]);
    }
    const probs = Array.from({ length: 50 }, () => 0.02 + 0.96 * rand());
    const labels = Array.from({ length: 50 }, () => (rand() < 0.5 ? 0 : 1));
    const sdfPred = Array.from({ length: 50 }, () => 2 * rand() - 1);
    const sdfGt = Array.from({ length: 50 }, () => 2 * rand() - 1);

    const gamma = 0.9;
    const pred = { points: f32Rows(predPts), occProb: f32(probs), sdf: f32(sdfPred) };
    const target = { points: f32Rows(gtPts), occupancy: f32(labels), sdf: f32(sdfGt) };
    const out = losses(pred, target, gamma);

    // references use the f32-quantized values actually sent over the wire
    const qp = pred.points.data;
    const qg = target.points.data;
    const sumMinSq = (a: Float32Array, b: Float32Array) => {
      let total = 0;
      for (let i = 0; i < a.length; i += 3) {
        let best = Infinity;
        for (let j = 0; j < b.length; j += 3) {
          const dx = a[i]! - b[j]!;
          const dy = a[i + 1]! - b[j + 1]!;
          const dz = a[i + 2]! - b[j + 2]!;
          best = Math.min(best, dx * dx + dy * dy + dz * dz);
        }
        total += best;
      }
      return total;
    };
    const cdRef = sumMinSq(qp, qg) + sumMinSq(qg, qp);
    expect(Math.abs(out.cd! - cdRef)).toBeLessThanOrEqual(1e-9);

    const clamp = (p: number) => Math.min(Math.max(p, 1e-7), 1 - 1e-7);
    let bceRef = 0;
    for (let i = 0; i < probs.length; i++) {
      const p = clamp(pred.occProb.data[i]!);
      const v = target.occupancy.data[i]!;
      bceRef -= gamma * v * Math.log(p) + (1 - gamma) * (1 - v) * Math.log(1 - p);
    }
    bceRef /= probs.length;
    expect(Math.abs(out.bce! - bceRef)).toBeLessThanOrEqual(1e-9);

    let mseRef = 0;
    for (let i = 0; i < sdfPred.length; i++) {
      const d = pred.sdf.data[i]! - target.sdf.data[i]!;
      mseRef += d * d;
    }
    mseRef /= sdfPred.length;
    expect(Math.abs(out.sdfMse! - mseRef)).toBeLessThanOrEqual(1e-9);
    expect(out.total).toBe(out.bce! + out.sdfMse!);
  });
});

describe("metrics", () => {
  it("self-evaluation is exact", () => {
    const rep = metrics(normPath, normPath, { samples: 2000, seed: 0 });
    expect(rep.cd).toBe(0.0);
    expect(rep.iou).toBe(100.0);
    expect(rep.fscore).toBe(100.0);
    expect(rep.precision).toBe(100.0);
    expect(rep.recall).toBe(100.0);
    expect(rep.samples).toBe(2000);
  });

  it("repeated calls return identical reports", () => {
    const a = metrics(normPath, normPath, { samples: 1000, seed: 4 });
    const b = metrics(normPath, normPath, { samples: 1000, seed: 4 });
    expect(a).toEqual(b);
  });
});

describe("evalOccluded", () => {
  it("self-evaluation on the hidden region is exact", () => {
    const cam = lookAt([0, 0, 3], [0, 0, 0], { canvas: [128, 128] });
    const rep = evalOccluded(normPath, normPath, cam, { samples: 2000, seed: 0 });
    expect(rep.cd).toBe(0.0);
    expect(rep.fscore).toBe(100.0);
    expect(rep.iou).toBe(100.0);
    expect(rep.decisions["canvas"]).toEqual([128, 128]);
  });

  it("accepts a canvas override", () => {
    const cam = lookAt([0, 0, 3], [0, 0, 0], { canvas: [128, 128] });
    const rep = evalOccluded(normPath, normPath, cam, {
      samples: 1000,
      canvas: 64,
    });
    expect(rep.decisions["canvas"]).toEqual([64, 64]);
    expect(rep.cd).toBe(0.0);
  });
});
