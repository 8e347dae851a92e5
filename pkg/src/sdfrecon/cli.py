"""Command-line front end.

Subcommands: prep, infer, extract, eval, eval-occluded, voxelize, losses.
Exit codes: 1 input problem, 2 numeric problem, 3 I/O problem. LIST_THREADS
overrides --threads.
"""

import argparse
import json
import logging
import sys
import time
from pathlib import Path

import numpy as np

from . import lstg
from .errors import MissingInput, ParseError, SdfReconError, exit_code_for
from .grids import UNIT_BOX, Box3, FeatureMap2D, ScalarGrid, voxelize_points
from .mesh import (
    farthest_point_sample,
    load_mesh,
    normalize_unit_cube,
    sample_surface,
    save_obj,
)
from .metrics import (
    DEFAULT_BCE_GAMMA,
    DEFAULT_FSCORE_D,
    DEFAULT_IOU_RES,
    chamfer_loss,
    evaluate_meshes,
    occupancy_bce,
    sdf_mse,
)
from .nn import PipelineConfig, PipelineInputs, WeightBundle, run_pipeline
from .occlusion import CameraSpec, eval_occluded
from .parallel import effective_threads
from .sdf import DEFAULT_SCHEDULE, QuerySamplingConfig, generate_query_set
from .surface import marching_cubes

log = logging.getLogger("sdfrecon")

BUNDLE_NAMES = ("occ_refiner", "grid_encoder", "localizer", "sdf_head")


def _require(path, what="input file"):
    p = Path(path)
    if not p.exists():
        raise MissingInput(f"missing {what}: {p}")
    return p


def _write_json(obj, out_path):
    text = json.dumps(obj, indent=2, sort_keys=True) + "\n"
    if out_path:
        Path(out_path).write_text(text)
        log.info("wrote %s", out_path)
    else:
        sys.stdout.write(text)


def _parse_schedule(text):
    try:
        bands = []
        for part in text.split(","):
            frac, rho = part.split(":")
            bands.append((float(frac), float(rho)))
        return tuple(bands)
    except ValueError as exc:
        raise ParseError(
            f"schedule must look like '0.45:0.003,0.44:0.01', got {text!r}"
        ) from exc


def _parse_extent(text):
    try:
        lo, hi = (float(v) for v in text.split(","))
    except ValueError as exc:
        raise ParseError(f"extent must be 'lo,hi', got {text!r}") from exc
    return Box3((lo,) * 3, (hi,) * 3)


def cmd_prep(args):
    threads = effective_threads(args.threads)
    out = Path(args.out_dir)
    mesh = load_mesh(_require(args.mesh, "mesh"))
    norm, xform = normalize_unit_cube(mesh)
    out.mkdir(parents=True, exist_ok=True)

    save_obj(out / "normalized.obj", norm)
    cfg = QuerySamplingConfig(
        n_total=args.n,
        schedule=_parse_schedule(args.schedule) if args.schedule else DEFAULT_SCHEDULE,
        max_band=args.max_band,
        seed=args.seed,
    )
    t0 = time.perf_counter()
    queries = generate_query_set(norm, cfg, threads=threads)
    log.info("query set: %d points in %.2fs", len(queries), time.perf_counter() - t0)
    queries.save(out / "queries.lstg")

    dense = sample_surface(norm, max(args.coarse_n * 4, args.coarse_n),
                           seed=args.seed + 1)
    coarse = farthest_point_sample(dense, args.coarse_n)
    lstg.write(out / "coarse.lstg", {"points": coarse.points})

    surf = sample_surface(norm, args.n, seed=args.seed + 2)
    occ = voxelize_points(surf.points, args.vox_res)
    occ.save(out / "occupancy.lstg")
    log.info(
        "prep done: scale %.6g, occupancy %d cells (%d clamped)",
        xform.scale, occ.count, occ.clamped_count,
    )
    return 0


def _load_bundles(bundle_dir):
    bundles = {}
    for name in BUNDLE_NAMES:
        path = _require(Path(bundle_dir) / f"{name}.lstg", f"bundle '{name}'")
        bundles[name] = WeightBundle.load(path)
    return bundles


def _load_pipeline_inputs(input_dir):
    d = Path(input_dir)
    coarse = lstg.read(_require(d / "coarse.lstg", "coarse cloud"))
    if "points" not in coarse:
        raise MissingInput(f"{d / 'coarse.lstg'}: no 'points' entry")
    fmap = lstg.read(_require(d / "local_map.lstg", "local feature map"))
    if "map" not in fmap:
        raise MissingInput(f"{d / 'local_map.lstg'}: no 'map' entry")
    glob = lstg.read(_require(d / "globals.lstg", "global features"))
    for entry in ("z_img", "z_pts"):
        if entry not in glob:
            raise MissingInput(f"{d / 'globals.lstg'}: no '{entry}' entry")
    return (
        np.asarray(coarse["points"], dtype=np.float64),
        FeatureMap2D(np.asarray(fmap["map"], dtype=np.float64)),
        np.asarray(glob["z_img"], dtype=np.float64),
        np.asarray(glob["z_pts"], dtype=np.float64),
    )


def cmd_infer(args):
    coarse, local_map, z_img, z_pts = _load_pipeline_inputs(args.inputs)
    bundles = _load_bundles(args.bundles)
    inputs = PipelineInputs(
        coarse_cloud=coarse,
        local_map=local_map,
        z_img=z_img,
        z_pts=z_pts,
        occ_refiner=bundles["occ_refiner"],
        grid_encoder=bundles["grid_encoder"],
        localizer=bundles["localizer"],
        sdf_head=bundles["sdf_head"],
    )
    extent = _parse_extent(args.extent) if args.extent else UNIT_BOX
    cfg = PipelineConfig(
        vox_res=args.vox_res,
        extent=extent,
        grid_res=(args.res,) * 3,
        neighbor_d=args.d,
        batch_size=args.batch,
    )
    t0 = time.perf_counter()
    sdf_grid = run_pipeline(inputs, cfg)
    log.info("pipeline: %s grid in %.2fs", sdf_grid.resolution,
             time.perf_counter() - t0)
    if args.sdf_out:
        sdf_grid.save(args.sdf_out)
    mesh = marching_cubes(sdf_grid, iso=args.iso)
    if mesh.empty_surface:
        log.warning("no zero crossing anywhere; writing an empty mesh")
    save_obj(args.out, mesh)
    log.info("wrote %s (%d vertices, %d faces)", args.out,
             mesh.n_vertices, mesh.n_faces)
    return 0


def cmd_extract(args):
    grid = ScalarGrid.load(_require(args.sdf, "sdf grid"))
    mesh = marching_cubes(grid, iso=args.iso)
    if mesh.empty_surface:
        log.warning("no zero crossing anywhere; writing an empty mesh")
    save_obj(args.out, mesh)
    return 0


def cmd_eval(args):
    pred = load_mesh(_require(args.pred, "predicted mesh"))
    gt = load_mesh(_require(args.gt, "ground-truth mesh"))
    report = evaluate_meshes(
        pred, gt,
        samples=args.samples,
        fscore_d=args.fscore_d,
        iou_res=args.iou_res,
        seed=args.seed,
    )
    if args.out:
        sys.stdout.write(report.table() + "\n")
    _write_json(report.to_dict(), args.out)
    return 0


def cmd_eval_occluded(args):
    pred = load_mesh(_require(args.pred, "predicted mesh"))
    gt = load_mesh(_require(args.gt, "ground-truth mesh"))
    cam = CameraSpec.load(_require(args.camera, "camera json"))
    if args.canvas:
        cam = CameraSpec(cam.intrinsics, cam.extrinsics,
                         (args.canvas, args.canvas))
    threads = effective_threads(args.threads)
    report = eval_occluded(
        pred, gt, cam,
        samples=args.samples,
        fscore_d=args.fscore_d,
        iou_res=args.iou_res,
        max_edge=args.max_edge,
        seed=args.seed,
        threads=threads,
    )
    _write_json({"occluded": report.to_dict()}, args.out)
    return 0


def cmd_voxelize(args):
    src = _require(args.input, "points or mesh")
    if src.suffix.lower() == ".lstg":
        data = lstg.read(src)
        if "points" not in data:
            raise MissingInput(f"{src}: no 'points' entry")
        pts = np.asarray(data["points"], dtype=np.float64)
    else:
        mesh = load_mesh(src)
        pts = sample_surface(mesh, args.samples, seed=args.seed).points
    extent = _parse_extent(args.extent) if args.extent else UNIT_BOX
    grid = voxelize_points(pts, args.res, extent)
    grid.save(args.out)
    log.info("%d occupied cells, %d points clamped", grid.count,
             grid.clamped_count)
    return 0


def cmd_losses(args):
    pred = lstg.read(_require(args.pred, "prediction container"))
    target = lstg.read(_require(args.target, "target container"))
    out = {"cd": None, "bce": None, "sdf_mse": None, "total": None,
           "decisions": {"gamma": args.gamma, "cd_form": "squared_sum"}}
    if "points" in pred and "points" in target:
        out["cd"] = chamfer_loss(np.asarray(pred["points"], dtype=np.float64),
                                 np.asarray(target["points"], dtype=np.float64))
    if "occ_prob" in pred and "occupancy" in target:
        out["bce"] = occupancy_bce(
            np.asarray(target["occupancy"], dtype=np.float64),
            np.asarray(pred["occ_prob"], dtype=np.float64),
            gamma=args.gamma,
        )
    if "sdf" in pred and "sdf" in target:
        out["sdf_mse"] = sdf_mse(np.asarray(target["sdf"], dtype=np.float64),
                                 np.asarray(pred["sdf"], dtype=np.float64))
    if out["bce"] is not None and out["sdf_mse"] is not None:
        out["total"] = out["bce"] + out["sdf_mse"]
    _write_json(out, args.out)
    return 0


def build_parser():
    parser = argparse.ArgumentParser(
        prog="sdfrecon",
        description="SDF training-data preparation, forward reconstruction, "
                    "and evaluation for single-view 3D reconstruction.",
    )
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--seed", type=int, default=0)
    common.add_argument("--threads", type=int, default=1,
                        help="worker threads (LIST_THREADS overrides)")
    common.add_argument("--log-level", default="warning",
                        choices=["debug", "info", "warning", "error"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("prep", parents=[common],
                       help="normalized mesh, query set, coarse cloud, occupancy")
    p.add_argument("mesh")
    p.add_argument("--out-dir", required=True)
    p.add_argument("--n", type=int, default=50000)
    p.add_argument("--coarse-n", type=int, default=4000)
    p.add_argument("--schedule", default=None,
                   help="comma list of frac:sigma bands")
    p.add_argument("--max-band", type=float, default=None,
                   help="resample displaced points until |sdf| <= this")
    p.add_argument("--vox-res", type=int, default=128)
    p.set_defaults(func=cmd_prep)

    p = sub.add_parser("infer", parents=[common],
                       help="coarse cloud + features + bundles to a mesh")
    p.add_argument("--inputs", required=True)
    p.add_argument("--bundles", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--res", type=int, default=128)
    p.add_argument("--vox-res", type=int, default=128)
    p.add_argument("--extent", default=None, help="cube extent 'lo,hi'")
    p.add_argument("--d", type=float, default=1.0 / 128.0,
                   help="neighbor offset distance")
    p.add_argument("--iso", type=float, default=0.0)
    p.add_argument("--batch", type=int, default=65536)
    p.add_argument("--sdf-out", default=None, help="also dump the SDF grid")
    p.set_defaults(func=cmd_infer)

    p = sub.add_parser("extract", parents=[common],
                       help="isosurface of a stored SDF grid")
    p.add_argument("--sdf", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--iso", type=float, default=0.0)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("eval", parents=[common],
                       help="CD / IoU / F-score between two meshes")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--fscore-d", type=float, default=DEFAULT_FSCORE_D)
    p.add_argument("--iou-res", type=int, default=DEFAULT_IOU_RES)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("eval-occluded", parents=[common],
                       help="metrics restricted to camera-occluded surface")
    p.add_argument("pred")
    p.add_argument("gt")
    p.add_argument("--camera", required=True)
    p.add_argument("--canvas", type=int, default=None,
                   help="override square canvas resolution")
    p.add_argument("--samples", type=int, default=100000)
    p.add_argument("--fscore-d", type=float, default=DEFAULT_FSCORE_D)
    p.add_argument("--iou-res", type=int, default=DEFAULT_IOU_RES)
    p.add_argument("--max-edge", type=float, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_eval_occluded)

    p = sub.add_parser("voxelize", parents=[common],
                       help="binary occupancy grid from points or a mesh")
    p.add_argument("input", help="LSTG points container or mesh file")
    p.add_argument("--out", required=True)
    p.add_argument("--res", type=int, default=128)
    p.add_argument("--extent", default=None)
    p.add_argument("--samples", type=int, default=100000,
                   help="surface samples when input is a mesh")
    p.set_defaults(func=cmd_voxelize)

    p = sub.add_parser("losses", parents=[common],
                       help="training losses from prediction/target containers")
    p.add_argument("--pred", required=True)
    p.add_argument("--target", required=True)
    p.add_argument("--gamma", type=float, default=DEFAULT_BCE_GAMMA)
    p.add_argument("--out", default=None)
    p.set_defaults(func=cmd_losses)

    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=getattr(logging, args.log_level.upper()),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return args.func(args)
    except SdfReconError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    except OSError as exc:
        print(f"i/o error: {exc}", file=sys.stderr)
        return exit_code_for(exc)


if __name__ == "__main__":
    sys.exit(main())
