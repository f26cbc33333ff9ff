"""Command-line front end.

Subcommands: mesh, project, pointcloud, eval, synth, train-toy, config,
bench. Machine-readable output is single-line JSON on stdout. Exit codes:
0 success, 2 usage or I/O trouble, 3 shape mismatch, 4 evaluation had
nothing valid to score.
"""

from __future__ import annotations

import argparse
import json
import os
import sys

import numpy as np

from .errors import ConfigError, EvaluationError, PanomeshError, ShapeError
from .formats import (
    dump_config_text,
    read_config,
    read_png,
    read_sfdm,
    read_sfmf,
    write_ply,
    write_png,
    write_sfdm,
    write_sfmf,
    write_sfmh,
)
from .fusion import PRESETS, config_from_dict, config_to_dict, make_train_state, train_step
from .icosphere import AdjacencyCache, MeshHierarchy, face_count, timed_faf, vertex_count
from .metrics import evaluate, valid_mask
from .projection import (
    EquirectGrid,
    build_projection_table,
    depth_to_pointcloud_grid,
    depth_to_pointcloud_mesh,
    e2s_resample,
    s2e_resample,
)
from .synth import make_scene


def _print_json(payload: dict):
    print(json.dumps(payload))


def _load_image(path: str) -> np.ndarray:
    """PNG -> float [0,1] HxWx3; SFDM -> float HxWx1."""
    if path.endswith(".png"):
        return read_png(path).astype(np.float64) / 255.0
    if path.endswith(".sfdm"):
        return read_sfdm(path).astype(np.float64)[:, :, None]
    raise ConfigError(f"cannot read {path!r}: expected .png or .sfdm")


def _grid_for(image: np.ndarray) -> EquirectGrid:
    return EquirectGrid(image.shape[1], image.shape[0])


# -- mesh -----------------------------------------------------------------

def _cmd_mesh_info(args) -> int:
    hierarchy = MeshHierarchy()
    cache = AdjacencyCache()
    mesh = cache.get_mesh(hierarchy, args.mr)
    _, seconds = timed_faf(mesh.faces)
    if args.dump:
        write_sfmh(args.dump, mesh)
    _print_json(
        {
            "mr": args.mr,
            "faces": face_count(args.mr),
            "vertices": vertex_count(args.mr),
            "faf_seconds": seconds,
            "dump": args.dump or None,
        }
    )
    return 0


# -- project ---------------------------------------------------------------

def _cmd_project_e2s(args) -> int:
    image = _load_image(args.image)
    hierarchy = MeshHierarchy()
    table = build_projection_table(_grid_for(image), hierarchy, args.mr)
    values = e2s_resample(table, image)
    write_sfmf(args.output, args.mr, values)
    _print_json({"mr": args.mr, "faces": values.shape[0], "channels": values.shape[1], "output": args.output})
    return 0


def _cmd_project_s2e(args) -> int:
    mr, values = read_sfmf(args.input)
    hierarchy = MeshHierarchy()
    grid = EquirectGrid(2 * args.height, args.height)
    table = build_projection_table(grid, hierarchy, mr)
    image = s2e_resample(table, values.astype(np.float64))
    if args.output.endswith(".sfdm"):
        if image.shape[2] != 1:
            raise ShapeError(f"depth output needs 1 channel, feature file has {image.shape[2]}")
        write_sfdm(args.output, image[:, :, 0])
    elif args.output.endswith(".png"):
        if image.shape[2] not in (1, 3):
            raise ShapeError(f"png output needs 1 or 3 channels, got {image.shape[2]}")
        write_png(args.output, np.clip(image[:, :, 0] if image.shape[2] == 1 else image, 0.0, 1.0))
    else:
        raise ConfigError(f"cannot write {args.output!r}: expected .sfdm or .png")
    payload = {"mr": mr, "height": args.height, "output": args.output}
    if args.ref:
        ref = _load_image(args.ref)
        if ref.shape != image.shape:
            raise ShapeError(f"reference is {ref.shape}, reconstruction is {image.shape}")
        payload["rmse"] = float(np.sqrt(np.mean((ref - image) ** 2)))
    _print_json(payload)
    return 0


# -- pointcloud --------------------------------------------------------------

def _cmd_pointcloud(args) -> int:
    colors = None
    if args.input.endswith(".sfdm"):
        depth = read_sfdm(args.input).astype(np.float64)
        if args.rgb:
            colors = read_png(args.rgb)
            if colors.shape[:2] != depth.shape:
                raise ShapeError(f"rgb is {colors.shape[:2]}, depth is {depth.shape}")
        cloud = depth_to_pointcloud_grid(_grid_for(depth[:, :, None]), depth, colors)
    elif args.input.endswith(".sfmf"):
        if args.rgb:
            raise ConfigError("--rgb applies to grid depth maps only")
        mr, values = read_sfmf(args.input)
        if values.shape[1] != 1:
            raise ShapeError(f"pointcloud needs 1-channel distances, got {values.shape[1]}")
        cloud = depth_to_pointcloud_mesh(MeshHierarchy(), mr, values[:, 0].astype(np.float64))
    else:
        raise ConfigError(f"cannot read {args.input!r}: expected .sfdm or .sfmf")
    write_ply(args.output, cloud.points, cloud.colors)
    _print_json({"points": int(cloud.points.shape[0]), "output": args.output})
    return 0


# -- eval --------------------------------------------------------------------

def _load_values(path: str) -> np.ndarray:
    if path.endswith(".sfdm"):
        return read_sfdm(path).astype(np.float64).ravel()
    if path.endswith(".sfmf"):
        _, values = read_sfmf(path)
        if values.shape[1] != 1:
            raise ShapeError(f"eval needs 1-channel values, {path!r} has {values.shape[1]}")
        return values[:, 0].astype(np.float64)
    raise ConfigError(f"cannot read {path!r}: expected .sfdm or .sfmf")


def _cmd_eval(args) -> int:
    pred = _load_values(args.pred)
    gt = _load_values(args.gt)
    report = evaluate(pred, gt, valid_mask(gt, args.lo, args.hi))
    print(report.to_json())
    return 0


# -- synth ---------------------------------------------------------------------

def _cmd_synth(args) -> int:
    grid = EquirectGrid(2 * args.height, args.height)
    rgb, depth = make_scene(grid, args.seed)
    os.makedirs(args.out, exist_ok=True)
    rgb_path = os.path.join(args.out, "rgb.png")
    depth_path = os.path.join(args.out, "depth.sfdm")
    write_png(rgb_path, rgb)
    write_sfdm(depth_path, depth)
    _print_json(
        {
            "seed": args.seed,
            "height": args.height,
            "rgb": rgb_path,
            "depth": depth_path,
            "min_depth": float(depth.min()),
            "max_depth": float(depth.max()),
        }
    )
    return 0


# -- config -----------------------------------------------------------------

def _cmd_config_init(args) -> int:
    if args.preset not in PRESETS:
        raise ConfigError(f"unknown preset {args.preset!r}; choices: {sorted(PRESETS)}")
    with open(args.output, "w") as f:
        f.write(dump_config_text(config_to_dict(PRESETS[args.preset])))
    _print_json({"preset": args.preset, "output": args.output})
    return 0


def _cmd_config_show(args) -> int:
    cfg = config_from_dict(read_config(args.config))
    _print_json(config_to_dict(cfg))
    return 0


# -- train-toy -----------------------------------------------------------------

def _cmd_train_toy(args) -> int:
    cfg = config_from_dict(read_config(args.config))
    grid = EquirectGrid(cfg.image_w, cfg.image_h)
    rgb, depth = make_scene(grid, args.scene_seed)
    state = make_train_state(cfg)

    losses = []
    for step in range(args.steps):
        loss = train_step(state, rgb, depth)
        losses.append(loss)
        if args.log_every and (step % args.log_every == 0 or step == args.steps - 1):
            print(f"step {step:4d}  loss {loss:.6f}", file=sys.stderr)

    os.makedirs(args.out, exist_ok=True)
    state.net.save(os.path.join(args.out, "checkpoint.sfck"))
    with open(os.path.join(args.out, "config.txt"), "w") as f:
        f.write(dump_config_text(config_to_dict(cfg)))
    with open(os.path.join(args.out, "history.json"), "w") as f:
        json.dump(losses, f)

    pred_faces = state.net.predict(rgb)
    pred_img = state.net.depth_image(pred_faces)
    write_sfdm(os.path.join(args.out, "pred.sfdm"), pred_img)
    report = evaluate(pred_img.ravel(), depth.ravel(), valid_mask(depth.ravel()))
    with open(os.path.join(args.out, "metrics.json"), "w") as f:
        f.write(report.to_json() + "\n")

    _print_json(
        {
            "steps": args.steps,
            "initial_loss": losses[0],
            "final_loss": losses[-1],
            "loss_ratio": losses[-1] / losses[0],
            "delta1": report.delta1,
            "out": args.out,
        }
    )
    return 0


# -- bench -----------------------------------------------------------------------

def _cmd_bench_faf(args) -> int:
    from .bench import bench_faf

    result = bench_faf(args.mr, args.repeats)
    _print_json(result)
    return 0


def _cmd_bench_kernels(args) -> int:
    from .bench import bench_kernels

    for row in bench_kernels(args.mr, args.points, args.repeats):
        _print_json(row)
    return 0


# -- parser -----------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="panomesh", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    mesh = sub.add_parser("mesh", help="mesh inspection").add_subparsers(dest="sub", required=True)
    info = mesh.add_parser("info", help="face/vertex counts, adjacency timing, optional binary dump")
    info.add_argument("mr", type=int)
    info.add_argument("--dump", help="write mesh geometry + adjacency to this .sfmh path")
    info.set_defaults(func=_cmd_mesh_info)

    project = sub.add_parser("project", help="equirect <-> sphere resampling").add_subparsers(dest="sub", required=True)
    e2s = project.add_parser("e2s", help="image (.png/.sfdm) -> per-face .sfmf")
    e2s.add_argument("image")
    e2s.add_argument("--mr", type=int, required=True)
    e2s.add_argument("-o", "--output", required=True)
    e2s.set_defaults(func=_cmd_project_e2s)
    s2e = project.add_parser("s2e", help="per-face .sfmf -> image (.sfdm/.png)")
    s2e.add_argument("input")
    s2e.add_argument("--height", type=int, required=True)
    s2e.add_argument("-o", "--output", required=True)
    s2e.add_argument("--ref", help="compare against this image and report RMSE")
    s2e.set_defaults(func=_cmd_project_s2e)

    cloud = sub.add_parser("pointcloud", help="depth -> ASCII PLY point cloud")
    cloud.add_argument("input", help=".sfdm grid depth or .sfmf per-face distances")
    cloud.add_argument("--rgb", help="PNG colors for grid depth")
    cloud.add_argument("-o", "--output", required=True)
    cloud.set_defaults(func=_cmd_pointcloud)

    ev = sub.add_parser("eval", help="score a prediction; prints one JSON line")
    ev.add_argument("pred")
    ev.add_argument("gt")
    ev.add_argument("--lo", type=float, default=0.1)
    ev.add_argument("--hi", type=float, default=10.0)
    ev.set_defaults(func=_cmd_eval)

    synth = sub.add_parser("synth", help="generate a procedural panorama + exact depth")
    synth.add_argument("--height", type=int, default=64)
    synth.add_argument("--seed", type=int, default=0)
    synth.add_argument("-o", "--out", required=True)
    synth.set_defaults(func=_cmd_synth)

    config = sub.add_parser("config", help="training config files").add_subparsers(dest="sub", required=True)
    init = config.add_parser("init", help="write a preset config")
    init.add_argument("--preset", default="toy")
    init.add_argument("-o", "--output", required=True)
    init.set_defaults(func=_cmd_config_init)
    show = config.add_parser("show", help="parse, validate, and echo a config")
    show.add_argument("--config", required=True)
    show.set_defaults(func=_cmd_config_show)

    train = sub.add_parser("train-toy", help="overfit one synthetic scene")
    train.add_argument("--config", required=True)
    train.add_argument("--steps", type=int, default=200)
    train.add_argument("--scene-seed", type=int, default=7)
    train.add_argument("--log-every", type=int, default=25)
    train.add_argument("-o", "--out", required=True)
    train.set_defaults(func=_cmd_train_toy)

    bench = sub.add_parser("bench", help="timing comparisons").add_subparsers(dest="sub", required=True)
    bfaf = bench.add_parser("faf", help="cached vs uncached adjacency")
    bfaf.add_argument("--mr", type=int, default=6)
    bfaf.add_argument("--repeats", type=int, default=3)
    bfaf.set_defaults(func=_cmd_bench_faf)
    bk = bench.add_parser("kernels", help="numba vs numpy kernel backends")
    bk.add_argument("--mr", type=int, default=6)
    bk.add_argument("--points", type=int, default=100_000)
    bk.add_argument("--repeats", type=int, default=3)
    bk.set_defaults(func=_cmd_bench_kernels)

    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ShapeError as e:
        print(f"error: {e}", file=sys.stderr)
        return 3
    except EvaluationError as e:
        print(f"error: {e}", file=sys.stderr)
        return 4
    except (PanomeshError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
