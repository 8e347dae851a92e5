/**
 * runner.ts — spawns the reconstruction CLI and maps its exit codes onto
 * typed exceptions, so callers in a training loop can tell bad inputs from
 * numeric failures without parsing stderr.
 *
 * Exit code contract: 1 bad input, 2 numeric failure, 3 filesystem error.
 */

import { spawnSync } from "node:child_process";

/** Base class for every nonzero CLI exit. */
export class CliError extends Error {
  constructor(
    readonly exitCode: number,
    readonly stderr: string,
    message?: string,
  ) {
    super(message ?? `sdfrecon exited with code ${exitCode}: ${stderr.trim()}`);
    this.name = new.target.name;
  }
}

/** Exit 1: missing file, malformed mesh or container, shape mismatch. */
export class InputError extends CliError {}

/** Exit 2: unresolvable signs, bad schedule sigma, subdivision overflow. */
export class NumericError extends CliError {}

/** Exit 3: unreadable or unwritable paths. */
export class IoError extends CliError {}

export interface RunOptions {
  /** Executable to spawn; SDFRECON_BIN env overrides, default "sdfrecon". */
  bin?: string;
  /** Worker-thread cap forwarded as the LIST_THREADS env override. */
  threads?: number;
}

function errorFor(code: number, stderr: string): CliError {
  switch (code) {
    case 1:
      return new InputError(code, stderr);
    case 2:
      return new NumericError(code, stderr);
    case 3:
      return new IoError(code, stderr);
    default:
      return new CliError(code, stderr);
  }
}

/** Run one subcommand to completion; returns captured stdout. */
export function runCli(args: string[], opts: RunOptions = {}): string {
  const bin = opts.bin ?? process.env["SDFRECON_BIN"] ?? "sdfrecon";
  const env = { ...process.env };
  if (opts.threads !== undefined) {
    env["LIST_THREADS"] = String(opts.threads);
  }
  const res = spawnSync(bin, args, {
    encoding: "utf-8",
    maxBuffer: 512 * 1024 * 1024,
    env,
  });
  if (res.error !== undefined) {
    throw new Error(
      `could not spawn '${bin}' (${res.error.message}); install the toolkit ` +
        "or point SDFRECON_BIN at it",
    );
  }
  if (res.status !== 0) {
    throw errorFor(res.status ?? -1, res.stderr ?? "");
  }
  return res.stdout ?? "";
}
