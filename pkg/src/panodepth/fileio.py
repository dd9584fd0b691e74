"""Binary file formats: PFM depth maps, P6 PPM images, sampling-grid and
flow-field dumps, and model checkpoints.

All multi-byte values are little-endian.  PFM follows the portable-float-map
convention (bottom-to-top scanlines, negative scale marks little-endian).
"""

from __future__ import annotations

import struct

import numpy as np

from .geometry import SamplingGrid
from .network import ModelConfig, PanoDepthModel


class FileFormatError(ValueError):
    pass


# ---------------------------------------------------------------------------
# PFM (grayscale "Pf")
# ---------------------------------------------------------------------------

def write_pfm(path, values: np.ndarray):
    values = np.asarray(values, dtype=np.float32)
    if values.ndim != 2:
        raise FileFormatError("PFM writer handles single-channel maps only")
    h, w = values.shape
    with open(path, "wb") as fh:
        fh.write(f"Pf\n{w} {h}\n-1.0\n".encode("ascii"))
        fh.write(np.flipud(values).astype("<f4").tobytes())


def _read_token(fh) -> bytes:
    tok = b""
    while True:
        ch = fh.read(1)
        if not ch:
            raise FileFormatError("truncated PFM header")
        if ch in b" \t\r\n":
            if tok:
                return tok
            continue
        tok += ch


def read_pfm(path) -> np.ndarray:
    with open(path, "rb") as fh:
        magic = _read_token(fh)
        if magic != b"Pf":
            raise FileFormatError(f"unsupported PFM magic {magic!r} (grayscale Pf only)")
        try:
            w = int(_read_token(fh))
            h = int(_read_token(fh))
            scale = float(_read_token(fh))
        except ValueError as exc:
            raise FileFormatError("malformed PFM header") from exc
        if w <= 0 or h <= 0 or scale == 0:
            raise FileFormatError("malformed PFM header")
        payload = fh.read(4 * w * h)
        if len(payload) != 4 * w * h:
            raise FileFormatError("truncated PFM payload")
    dt = "<f4" if scale < 0 else ">f4"
    data = np.frombuffer(payload, dtype=dt).reshape(h, w)
    return np.flipud(data).astype(np.float64)


# ---------------------------------------------------------------------------
# PPM (binary P6, maxval 255)
# ---------------------------------------------------------------------------

def write_ppm(path, rgb: np.ndarray):
    """Write a (3,H,W) float image in [0,1] as 8-bit binary PPM."""
    rgb = np.asarray(rgb, dtype=np.float64)
    if rgb.ndim != 3 or rgb.shape[0] != 3:
        raise FileFormatError("expected a (3,H,W) image")
    _, h, w = rgb.shape
    quantized = np.clip(np.rint(rgb * 255.0), 0, 255).astype(np.uint8)
    with open(path, "wb") as fh:
        fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        fh.write(np.moveaxis(quantized, 0, -1).tobytes())


def read_ppm(path) -> np.ndarray:
    """Read a binary P6 PPM into a (3,H,W) float image in [0,1]."""
    with open(path, "rb") as fh:
        if fh.read(2) != b"P6":
            raise FileFormatError("not a binary P6 PPM")
        fields = []
        while len(fields) < 3:
            tok = _read_token(fh)
            if tok.startswith(b"#"):
                fh.readline()
                continue
            fields.append(tok)
        try:
            w, h, maxval = (int(f) for f in fields)
        except ValueError as exc:
            raise FileFormatError("malformed PPM header") from exc
        if maxval != 255:
            raise FileFormatError(f"unsupported PPM maxval {maxval} (only 255)")
        payload = fh.read(3 * w * h)
        if len(payload) != 3 * w * h:
            raise FileFormatError("truncated PPM payload")
    img = np.frombuffer(payload, dtype=np.uint8).reshape(h, w, 3)
    return np.moveaxis(img, -1, 0).astype(np.float64) / 255.0


# ---------------------------------------------------------------------------
# grid / flow dumps
# ---------------------------------------------------------------------------

def write_grid_dump(path, grid: SamplingGrid):
    with open(path, "wb") as fh:
        fh.write(b"STLM")
        fh.write(struct.pack("<III", grid.width, grid.height, 9))
        fh.write(grid.positions.astype("<f8").tobytes())


def read_grid_dump(path):
    with open(path, "rb") as fh:
        if fh.read(4) != b"STLM":
            raise FileFormatError("not a grid dump")
        w, h, k = struct.unpack("<III", fh.read(12))
        if k != 9:
            raise FileFormatError("unexpected token count")
        data = np.frombuffer(fh.read(8 * h * w * 9 * 2), dtype="<f8")
        if data.size != h * w * 9 * 2:
            raise FileFormatError("truncated grid dump")
    return data.reshape(h, w, 9, 2).astype(np.float64), w, h


def write_flow_dump(path, flows: np.ndarray):
    """Dump a (M,H,W,9,2) flow field; layout mirrors the grid dump."""
    flows = np.asarray(flows, dtype=np.float64)
    m, h, w, k, two = flows.shape
    if (k, two) != (9, 2):
        raise FileFormatError("flow field must be (M,H,W,9,2)")
    with open(path, "wb") as fh:
        fh.write(b"FLOW")
        fh.write(struct.pack("<IIII", m, w, h, 9))
        fh.write(flows.astype("<f8").tobytes())


def read_flow_dump(path) -> np.ndarray:
    with open(path, "rb") as fh:
        if fh.read(4) != b"FLOW":
            raise FileFormatError("not a flow dump")
        m, w, h, k = struct.unpack("<IIII", fh.read(16))
        if k != 9:
            raise FileFormatError("unexpected token count")
        data = np.frombuffer(fh.read(8 * m * h * w * 9 * 2), dtype="<f8")
        if data.size != m * h * w * 9 * 2:
            raise FileFormatError("truncated flow dump")
    return data.reshape(m, h, w, 9, 2).astype(np.float64)


# ---------------------------------------------------------------------------
# checkpoints ("PNFM")
# ---------------------------------------------------------------------------

_ACTIVATIONS = ("linear", "softplus")


def save_checkpoint(path, model: PanoDepthModel):
    cfg = model.config
    with open(path, "wb") as fh:
        fh.write(b"PNFM")
        fh.write(struct.pack(
            "<8I", 1, cfg.width, cfg.height, cfg.base_channels, cfg.num_stages,
            cfg.blocks_per_stage, cfg.leff_ratio, _ACTIVATIONS.index(cfg.output_activation)))
        params = model.parameters()
        fh.write(struct.pack("<I", len(params)))
        for p in params:
            name = p.name.encode("utf-8")
            fh.write(struct.pack("<I", len(name)))
            fh.write(name)
            fh.write(struct.pack("<I", p.data.ndim))
            fh.write(struct.pack(f"<{p.data.ndim}I", *p.data.shape))
            fh.write(p.data.astype("<f8").tobytes())


def load_checkpoint(path) -> PanoDepthModel:
    with open(path, "rb") as fh:
        if fh.read(4) != b"PNFM":
            raise FileFormatError("not a checkpoint file")
        (version, width, height, base_channels, num_stages, blocks_per_stage,
         leff_ratio, act) = struct.unpack("<8I", fh.read(32))
        if version != 1:
            raise FileFormatError(f"unsupported checkpoint version {version}")
        cfg = ModelConfig(width=width, height=height, base_channels=base_channels,
                          num_stages=num_stages, blocks_per_stage=blocks_per_stage,
                          leff_ratio=leff_ratio, output_activation=_ACTIVATIONS[act])
        model = PanoDepthModel(cfg, seed=0)
        (count,) = struct.unpack("<I", fh.read(4))
        by_name = {p.name: p for p in model.parameters()}
        if count != len(by_name):
            raise FileFormatError("parameter count mismatch")
        for _ in range(count):
            (nlen,) = struct.unpack("<I", fh.read(4))
            name = fh.read(nlen).decode("utf-8")
            (ndim,) = struct.unpack("<I", fh.read(4))
            shape = struct.unpack(f"<{ndim}I", fh.read(4 * ndim))
            n = int(np.prod(shape)) if ndim else 1
            payload = fh.read(8 * n)
            if len(payload) != 8 * n:
                raise FileFormatError("truncated checkpoint payload")
            if name not in by_name:
                raise FileFormatError(f"unknown parameter {name!r}")
            p = by_name[name]
            if tuple(shape) != p.data.shape:
                raise FileFormatError(f"shape mismatch for {name!r}")
            p.tensor.data = np.frombuffer(payload, dtype="<f8").reshape(shape).astype(np.float64)
    return model
