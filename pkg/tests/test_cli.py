"""End-to-end CLI runs on temporary files."""

import json

import numpy as np
import pytest

from panodepth import fileio
from panodepth.cli import main
from panodepth.network import ModelConfig, PanoDepthModel
from panodepth.scene import SceneSpec, render_scene

MICRO = {"width": 16, "height": 8, "base_channels": 8, "num_stages": 2,
         "leff_ratio": 1}


def test_metrics_command(tmp_path, capsys):
    rng = np.random.default_rng(0)
    gt = rng.uniform(1, 3, (16, 32))
    fileio.write_pfm(tmp_path / "gt.pfm", gt)
    fileio.write_pfm(tmp_path / "pred.pfm", gt + 0.1)
    rc = main(["metrics", "--gt", str(tmp_path / "gt.pfm"),
               "--pred", str(tmp_path / "pred.pfm"), "--table"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "rmse=0.100" in out and "lrce=" in out and "prmse=" in out
    assert "d1" in out  # table section


def test_metrics_literal_flag_changes_prmse(tmp_path, capsys):
    rng = np.random.default_rng(1)
    gt = rng.uniform(1, 3, (16, 32))
    fileio.write_pfm(tmp_path / "gt.pfm", gt)
    fileio.write_pfm(tmp_path / "pred.pfm", gt + rng.uniform(0, 0.5, (16, 32)))
    main(["metrics", "--gt", str(tmp_path / "gt.pfm"),
          "--pred", str(tmp_path / "pred.pfm")])
    plain = capsys.readouterr().out
    main(["metrics", "--gt", str(tmp_path / "gt.pfm"),
          "--pred", str(tmp_path / "pred.pfm"), "--prmse-literal"])
    literal = capsys.readouterr().out
    assert plain != literal


def test_e2c_command(tmp_path, capsys):
    img = np.full((16, 32), 2.0, np.float32)
    fileio.write_pfm(tmp_path / "erp.pfm", img)
    rc = main(["e2c", "--in", str(tmp_path / "erp.pfm"), "--face-size", "4",
               "--out-dir", str(tmp_path / "faces")])
    assert rc == 0
    for name in ("front", "right", "back", "left", "top", "bottom"):
        face = fileio.read_pfm(tmp_path / "faces" / f"{name}.pfm")
        assert face.shape == (4, 4)
        assert np.max(np.abs(face - 2.0)) < 1e-6


def test_grid_dump_command(tmp_path, capsys):
    rc = main(["grid-dump", "--width", "16", "--height", "8",
               "--out", str(tmp_path / "grid.bin"),
               "--overlay", str(tmp_path / "grid.ppm")])
    assert rc == 0
    positions, w, h = fileio.read_grid_dump(tmp_path / "grid.bin")
    assert (w, h) == (16, 8)
    assert positions.shape == (8, 16, 9, 2)
    rgb = fileio.read_ppm(tmp_path / "grid.ppm")
    assert rgb.shape == (3, 8, 16)


def test_gradcheck_command(capsys):
    rc = main(["gradcheck", "--module", "psa", "--seed", "0"])
    out = capsys.readouterr().out
    assert rc == 0
    assert "module=psa" in out and "max_rel_err=" in out


def test_train_toy_and_infer(tmp_path, capsys):
    cfg = {"model": MICRO, "train": {"lr": 1e-3, "steps": 3, "seed": 0},
           "scenes": [{"room_half": [2.0, 2.0, 1.0], "camera": [0.0, 0.0, 0.0],
                       "boxes": [], "seed": 0}]}
    (tmp_path / "cfg.json").write_text(json.dumps(cfg))
    rc = main(["train-toy", "--config", str(tmp_path / "cfg.json"),
               "--out", str(tmp_path / "model.pnfm"),
               "--trace", str(tmp_path / "loss.csv")])
    assert rc == 0
    lines = (tmp_path / "loss.csv").read_text().strip().splitlines()
    assert lines[0] == "step,loss" and len(lines) == 4

    rgb, _ = render_scene(SceneSpec(room_half=(2.0, 2.0, 1.0)), 16, 8)
    fileio.write_ppm(tmp_path / "pano.ppm", rgb)
    rc = main(["infer", "--ckpt", str(tmp_path / "model.pnfm"),
               "--in", str(tmp_path / "pano.ppm"),
               "--out", str(tmp_path / "depth.pfm")])
    assert rc == 0
    depth = fileio.read_pfm(tmp_path / "depth.pfm")
    assert depth.shape == (8, 16) and np.all(np.isfinite(depth))


def test_infer_rejects_size_mismatch(tmp_path, capsys):
    model = PanoDepthModel(ModelConfig(width=16, height=8, base_channels=8,
                                       num_stages=2, leff_ratio=1), seed=0)
    fileio.save_checkpoint(tmp_path / "m.pnfm", model)
    fileio.write_ppm(tmp_path / "big.ppm", np.zeros((3, 16, 32)))
    rc = main(["infer", "--ckpt", str(tmp_path / "m.pnfm"),
               "--in", str(tmp_path / "big.ppm"),
               "--out", str(tmp_path / "d.pfm")])
    err = capsys.readouterr().err
    assert rc == 1 and err.startswith("error:")


def test_missing_file_gives_one_line_error(tmp_path, capsys):
    rc = main(["metrics", "--gt", str(tmp_path / "none.pfm"),
               "--pred", str(tmp_path / "none.pfm")])
    err = capsys.readouterr().err
    assert rc == 1
    assert err.startswith("error:") and err.count("\n") == 1
