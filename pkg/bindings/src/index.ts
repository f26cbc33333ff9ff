/**
 * Thin bindings over the `panomesh` CLI.
 *
 * Each call marshals typed arrays through the CLI's binary formats in a
 * private temp directory and parses the tool's single-line JSON output.
 * Core errors come back as plain exceptions carrying the CLI's stderr.
 * Stateless and re-entrant; nothing is cached between calls.
 */

import { spawnSync } from "node:child_process";
import { mkdtempSync, rmSync } from "node:fs";
import { tmpdir } from "node:os";
import { join } from "node:path";

import {
  FaceArray,
  ImageArray,
  MeshArrays,
  mrFromFaceCount,
  readSfdm,
  readSfmf,
  readSfmh,
  writeSfdm,
  writeSfmf,
} from "./formats.js";

export * from "./formats.js";

/** Override with PANOMESH_BIN when the CLI is not on PATH. */
const BIN = process.env.PANOMESH_BIN ?? "panomesh";

export interface MetricsReport {
  mae: number;
  mre: number;
  rmse: number;
  rmse_log: number;
  delta1: number;
  delta2: number;
  delta3: number;
  n_valid: number;
}

export function runCli(args: string[]): string {
  const proc = spawnSync(BIN, args, { encoding: "utf-8", maxBuffer: 64 * 1024 * 1024 });
  if (proc.error) {
    throw new Error(`failed to run ${BIN}: ${proc.error.message}`);
  }
  if (proc.status !== 0) {
    const detail = (proc.stderr ?? "").trim() || `exit code ${proc.status}`;
    throw new Error(detail);
  }
  return proc.stdout;
}

function withTempDir<T>(body: (dir: string) => T): T {
  const dir = mkdtempSync(join(tmpdir(), "panomesh-"));
  try {
    return body(dir);
  } finally {
    rmSync(dir, { recursive: true, force: true });
  }
}

export class BoundMesh {
  constructor(readonly arrays: MeshArrays) {}

  get mr(): number {
    return this.arrays.mr;
  }

  get faceCount(): number {
    return this.arrays.faces.length / 3;
  }

  get vertexCount(): number {
    return this.arrays.vertices.length / 3;
  }

  get faces(): Uint32Array {
    return this.arrays.faces;
  }

  get vertices(): Float64Array {
    return this.arrays.vertices;
  }

  get centers(): Float64Array {
    return this.arrays.centers;
  }

  get faf(): Int32Array {
    return this.arrays.faf;
  }
}

/** Build the level-mr icosahedral mesh and pull its arrays across. */
export function mesh(mr: number): BoundMesh {
  return withTempDir((dir) => {
    const dump = join(dir, "mesh.sfmh");
    runCli(["mesh", "info", String(mr), "--dump", dump]);
    return new BoundMesh(readSfmh(dump));
  });
}

/** Resample an equirect image onto the faces of the level-mr mesh. */
export function e2s(image: ImageArray, mr: number): FaceArray {
  return withTempDir((dir) => {
    const src = join(dir, "in.sfdm");
    const dst = join(dir, "out.sfmf");
    writeSfdm(src, image);
    runCli(["project", "e2s", src, "--mr", String(mr), "-o", dst]);
    return readSfmf(dst);
  });
}

/** Paint per-face values back onto an equirect grid. mr comes from the length. */
export function s2e(faceValues: Float32Array, height: number, width = 2 * height): ImageArray {
  if (width !== 2 * height) {
    throw new Error(`equirect grid needs width == 2*height, got ${width}x${height}`);
  }
  const mr = mrFromFaceCount(faceValues.length);
  return withTempDir((dir) => {
    const src = join(dir, "in.sfmf");
    const dst = join(dir, "out.sfdm");
    writeSfmf(src, mr, faceValues);
    runCli(["project", "s2e", src, "--height", String(height), "-o", dst]);
    return readSfdm(dst);
  });
}

/** Score a prediction against ground truth over the valid-depth window. */
export function evaluate(gt: ImageArray, pred: ImageArray, lo = 0.1, hi = 10.0): MetricsReport {
  return withTempDir((dir) => {
    const gtPath = join(dir, "gt.sfdm");
    const predPath = join(dir, "pred.sfdm");
    writeSfdm(gtPath, gt);
    writeSfdm(predPath, pred);
    const out = runCli(["eval", predPath, gtPath, "--lo", String(lo), "--hi", String(hi)]);
    return JSON.parse(out) as MetricsReport;
  });
}
