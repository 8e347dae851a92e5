/** Exit-code mapping: the CLI's taxonomy must surface as typed exceptions. */

import { rmSync } from "node:fs";
import { join } from "node:path";

import { afterAll, beforeAll, describe, expect, it } from "vitest";

import {
  generateQuerySet,
  losses,
  metrics,
  f32,
  runCli,
  InputError,
  IoError,
  NumericError,
} from "../src/index.js";
import { makeTempDir, writeCube } from "./fixtures.js";

let dir: string;
let cubePath: string;

beforeAll(() => {
  dir = makeTempDir();
  cubePath = writeCube(dir);
});

afterAll(() => {
  rmSync(dir, { recursive: true, force: true });
});

describe("input failures (exit 1)", () => {
  it("missing mesh", () => {
    let caught: unknown;
    try {
      generateQuerySet(join(dir, "missing.obj"), { n: 100 });
    } catch (err) {
      caught = err;
    }
    expect(caught).toBeInstanceOf(InputError);
    expect((caught as InputError).exitCode).toBe(1);
  });

  it("missing loss container entries still parse, missing file does not", () => {
    expect(() => metrics(join(dir, "nope.obj"), cubePath)).toThrow(InputError);
    // an empty pairing is legal: everything comes back null
    const out = losses({}, {});
    expect(out.cd).toBeNull();
    expect(out.total).toBeNull();
  });
});

describe("numeric failures (exit 2)", () => {
  it("nonpositive band sigma", () => {
    let caught: unknown;
    try {
      generateQuerySet(cubePath, { n: 100, schedule: [[0.5, -1], [0.5, 0.01]] });
    } catch (err) {
      caught = err;
    }
    expect(caught).toBeInstanceOf(NumericError);
    expect((caught as NumericError).exitCode).toBe(2);
  });
});

describe("filesystem failures (exit 3)", () => {
  it("unwritable report path", () => {
    let caught: unknown;
    try {
      runCli(["eval", cubePath, cubePath, "--samples", "100",
        "--out", "/proc/1/nonexistent/report.json"]);
    } catch (err) {
      caught = err;
    }
    expect(caught).toBeInstanceOf(IoError);
    expect((caught as IoError).exitCode).toBe(3);
  });
});

describe("spawn failures", () => {
  it("names the missing binary", () => {
    expect(() => runCli(["prep"], { bin: "definitely-not-installed-xyz" }))
      .toThrow(/could not spawn/);
  });
});

describe("loss input validation", () => {
  it("mismatched sdf lengths raise the input class", () => {
    expect(() => losses({ sdf: f32([1, 2, 3]) }, { sdf: f32([1]) }))
      .toThrow(InputError);
  });
});
