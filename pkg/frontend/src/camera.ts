/**
 * camera.ts — pinhole camera description for the occluded-surface protocol.
 *
 * The JSON shape matches what `eval-occluded --camera` reads: flattened 3x3
 * intrinsics `K` (pixel units), flattened 4x4 world-to-camera `RT`, and the
 * `canvas` size in pixels. lookAt builds one with rows right/down/forward,
 * so +z in camera space points at the target.
 */

export interface CameraJson {
  K: number[];
  RT: number[];
  canvas: [number, number];
}

type Vec3 = [number, number, number];

function sub(a: Vec3, b: Vec3): Vec3 {
  return [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
}

function cross(a: Vec3, b: Vec3): Vec3 {
  return [
    a[1] * b[2] - a[2] * b[1],
    a[2] * b[0] - a[0] * b[2],
    a[0] * b[1] - a[1] * b[0],
  ];
}

function norm(a: Vec3): number {
  return Math.hypot(a[0], a[1], a[2]);
}

function unit(a: Vec3): Vec3 {
  const n = norm(a);
  return [a[0] / n, a[1] / n, a[2] / n];
}

function dot(a: Vec3, b: Vec3): number {
  return a[0] * b[0] + a[1] * b[1] + a[2] * b[2];
}

export interface LookAtOptions {
  up?: Vec3;
  /** Focal length in pixels; defaults to the canvas width. */
  focal?: number;
  canvas?: [number, number];
}

/** Camera at eye looking at target. Up defaults to +z with a +y fallback
 *  when the view direction is parallel to it. */
export function lookAt(eye: Vec3, target: Vec3, opts: LookAtOptions = {}): CameraJson {
  const canvas = opts.canvas ?? [1024, 1024];
  const fwd = unit(sub(target, eye));
  let up = opts.up ?? [0, 0, 1];
  let right = cross(fwd, up);
  if (norm(right) < 1e-12) {
    up = [0, 1, 0];
    right = cross(fwd, up);
  }
  right = unit(right);
  const down = cross(fwd, right);

  const r = [right, down, fwd];
  const t = r.map((row) => -dot(row as Vec3, eye));
  const rt = [
    ...right, t[0]!,
    ...down, t[1]!,
    ...fwd, t[2]!,
    0, 0, 0, 1,
  ];

  const [w, h] = canvas;
  const focal = opts.focal ?? w;
  const k = [focal, 0, w / 2, 0, focal, h / 2, 0, 0, 1];
  return { K: k, RT: rt, canvas };
}
