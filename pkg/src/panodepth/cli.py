"""Command-line interface.

Subcommands: metrics, e2c, grid-dump, gradcheck, train-toy, infer.
Every command is a pure function of its arguments, config and input files;
errors exit nonzero with a one-line ``error: ...`` message on stderr.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys

import numpy as np

from . import autodiff as ad
from . import fileio
from .attention import init_pst_block, pst_block, pst_block_params_list, psa_forward
from .geometry import FACE_NAMES, build_stlm_grid, erp_to_cube
from .losses import DepthMap, evaluate, final_loss
from .network import ModelConfig, PanoDepthModel
from .optim import TrainConfig, train_toy
from .scene import SceneSpec


def _cmd_metrics(args):
    gt = DepthMap(fileio.read_pfm(args.gt))
    pred = DepthMap(fileio.read_pfm(args.pred))
    gt.valid_mask &= gt.values > 0
    report = evaluate(gt, pred, face_size=args.face_size,
                      prmse_literal=args.prmse_literal)
    print(report.as_line())
    if args.table:
        for name in ("rmse", "delta1", "delta2", "delta3", "p_rmse", "lrce"):
            print(f"  {name:<8} {getattr(report, name):.6f}")
    return 0


def _cmd_e2c(args):
    import os

    img = fileio.read_pfm(getattr(args, "in"))
    faces = erp_to_cube(img, args.face_size)
    os.makedirs(args.out_dir, exist_ok=True)
    for name, face in zip(FACE_NAMES, faces.faces):
        fileio.write_pfm(os.path.join(args.out_dir, f"{name}.pfm"), face)
    print(f"wrote 6 faces of {faces.face_size}x{faces.face_size} to {args.out_dir}")
    return 0


def _cmd_grid_dump(args):
    grid = build_stlm_grid(args.width, args.height)
    fileio.write_grid_dump(args.out, grid)
    if args.overlay:
        canvas = np.full((3, args.height, args.width), 0.25)
        step = max(1, min(args.width, args.height) // 8)
        for i in range(step // 2, args.height, step):
            for j in range(step // 2, args.width, step):
                for k in range(9):
                    u, v = grid.positions[i, j, k]
                    col = int(np.rint(u)) % args.width
                    row = int(np.clip(np.rint(v), 0, args.height - 1))
                    canvas[:, row, col] = (1.0, 0.3, 0.3) if k == 4 else (0.3, 1.0, 0.3)
        fileio.write_ppm(args.overlay, canvas)
    print(f"wrote {args.width}x{args.height} grid to {args.out}")
    return 0


def _cmd_gradcheck(args):
    rng = np.random.default_rng(args.seed)
    if args.module == "psa":
        c, h, w = 8, 8, 16
        grid = build_stlm_grid(w, h)
        block = init_pst_block(c, 2, 1, rng)
        _randomize_flow_score(block, rng)
        x = ad.Tensor(rng.standard_normal((c, h, w)), requires_grad=True)
        probe = ad.Tensor(rng.standard_normal((c, h, w)))
        err = ad.gradcheck(
            lambda t: ad.tsum(ad.mul(psa_forward(t, grid, block.psa), probe)),
            [x], max_entries_per_input=200, rng=rng)
    elif args.module == "pst":
        c, h, w = 8, 8, 16
        grid = build_stlm_grid(w, h)
        block = init_pst_block(c, 2, 1, rng)
        _randomize_flow_score(block, rng)
        x = ad.Tensor(rng.standard_normal((c, h, w)), requires_grad=True)
        probe = ad.Tensor(rng.standard_normal((c, h, w)))
        params = [x] + [p.tensor for p in pst_block_params_list(block)]
        err = ad.gradcheck(
            lambda *ts: ad.tsum(ad.mul(pst_block(ts[0], grid, block), probe)),
            params, max_entries_per_input=20, rng=rng)
    elif args.module == "model":
        cfg = ModelConfig(width=16, height=8, base_channels=8, num_stages=2, leff_ratio=1)
        model = PanoDepthModel(cfg, seed=args.seed)
        rgb = rng.uniform(0, 1, size=(3, 8, 16))
        gt = DepthMap(rng.uniform(1, 3, size=(8, 16)))
        params = [p.tensor for p in model.parameters()]
        for t in params:
            if not np.any(t.data):
                t.data = rng.normal(0, 0.02, size=t.data.shape)
        err = ad.gradcheck(
            lambda *ts: final_loss(gt, ad.reshape(model.forward(rgb), (8, 16))),
            params, max_entries_per_input=3, rng=rng)
    else:
        raise ValueError(f"unknown module {args.module!r}")
    print(f"module={args.module} max_rel_err={err:.3e}")
    return 0 if err < 1e-4 else 1


def _randomize_flow_score(block, rng):
    # zero-initialized projections sit exactly on sampling-kernel knots;
    # checking derivatives there is meaningless, so perturb them first
    for p in (block.psa.score_w, block.psa.score_b, block.psa.flow_w, block.psa.flow_b):
        p.tensor.data = rng.normal(0, 0.05, size=p.data.shape)


def _cmd_train_toy(args):
    with open(args.config, encoding="utf-8") as fh:
        raw = json.load(fh)
    model_cfg = ModelConfig(**raw.get("model", {}))
    train_raw = raw.get("train", {})
    cfg = TrainConfig(model=model_cfg, **train_raw)
    scenes = [SceneSpec(**s) for s in raw.get("scenes", [])]
    if not scenes:
        scenes = [SceneSpec.random(cfg.seed)]
    model, trace = train_toy(cfg, scenes)
    fileio.save_checkpoint(args.out, model)
    with open(args.trace, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(["step", "loss"])
        writer.writerows((s, f"{v:.12g}") for s, v in trace)
    print(f"trained {cfg.steps} steps; final loss {trace[-1][1]:.6f}; "
          f"checkpoint {args.out}; trace {args.trace}")
    return 0


def _cmd_infer(args):
    model = fileio.load_checkpoint(args.ckpt)
    rgb = fileio.read_ppm(getattr(args, "in"))
    if rgb.shape[1:] != (model.config.height, model.config.width):
        raise ValueError(
            f"input is {rgb.shape[2]}x{rgb.shape[1]}, checkpoint expects "
            f"{model.config.width}x{model.config.height}")
    depth = model.forward(rgb).data[0]
    fileio.write_pfm(args.out, depth)
    print(f"wrote depth map to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="panodepth", description="Panoramic depth estimation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("metrics", help="evaluate a predicted depth map")
    p.add_argument("--gt", required=True)
    p.add_argument("--pred", required=True)
    p.add_argument("--prmse-literal", action="store_true",
                   help="root of mean absolute pole error instead of true RMSE")
    p.add_argument("--face-size", type=int, default=None)
    p.add_argument("--table", action="store_true", help="also print a human table")
    p.set_defaults(fn=_cmd_metrics)

    p = sub.add_parser("e2c", help="convert an ERP map to six cube faces")
    p.add_argument("--in", required=True)
    p.add_argument("--face-size", type=int, default=None)
    p.add_argument("--out-dir", required=True)
    p.set_defaults(fn=_cmd_e2c)

    p = sub.add_parser("grid-dump", help="dump the spherical sampling grid")
    p.add_argument("--width", type=int, required=True)
    p.add_argument("--height", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--overlay", default=None, help="optional PPM visualization")
    p.set_defaults(fn=_cmd_grid_dump)

    p = sub.add_parser("gradcheck", help="finite-difference gradient check")
    p.add_argument("--module", choices=["psa", "pst", "model"], default="pst")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(fn=_cmd_gradcheck)

    p = sub.add_parser("train-toy", help="overfit the network on synthetic scenes")
    p.add_argument("--config", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--trace", required=True)
    p.set_defaults(fn=_cmd_train_toy)

    p = sub.add_parser("infer", help="predict depth from a PPM panorama")
    p.add_argument("--ckpt", required=True)
    p.add_argument("--in", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(fn=_cmd_infer)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except Exception as exc:  # single-line machine-parsable failure
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
