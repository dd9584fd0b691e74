"""Training objective and evaluation metrics for panoramic depth maps.

The objective is a reverse-Huber (BerHu) term on depth plus BerHu terms on
Sobel-style horizontal and vertical gradients.  The metric suite covers the
classic RMSE and delta-threshold accuracies plus two panorama-specific
measures: pole RMSE over the top/bottom cube faces and the left-right
consistency error across the horizontal seam.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .geometry import erp_to_cube

K_H = np.array([[-1.0, 0.0, 1.0],
                [-2.0, 0.0, 2.0],
                [-1.0, 0.0, 1.0]])
K_V = K_H.T.copy()

BERHU_DELTA = 0.2


@dataclass
class DepthMap:
    """Single-channel depth image with a validity mask."""

    values: np.ndarray              # (H, W) meters
    valid_mask: np.ndarray = None   # (H, W) bool

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError("depth map must be 2-D")
        if self.valid_mask is None:
            self.valid_mask = np.isfinite(self.values)
        else:
            self.valid_mask = np.asarray(self.valid_mask, dtype=bool)
            if self.valid_mask.shape != self.values.shape:
                raise ValueError("mask shape mismatch")
        if not np.all(np.isfinite(self.values[self.valid_mask])):
            raise ValueError("non-finite depth inside the valid mask")

    @property
    def height(self):
        return self.values.shape[0]

    @property
    def width(self):
        return self.values.shape[1]


@dataclass
class MetricReport:
    rmse: float
    delta1: float
    delta2: float
    delta3: float
    p_rmse: float
    lrce: float
    valid_pixel_count: int

    def as_line(self) -> str:
        return (f"rmse={self.rmse:.6f} d1={self.delta1:.6f} d2={self.delta2:.6f} "
                f"d3={self.delta3:.6f} prmse={self.p_rmse:.6f} lrce={self.lrce:.6f} "
                f"n={self.valid_pixel_count}")


def _as_maybe_tensor(x):
    return x if isinstance(x, Tensor) else ad.constant(np.asarray(x, dtype=np.float64))


def berhu(g, p, delta: float = BERHU_DELTA, mask: np.ndarray | None = None):
    """Mean reverse-Huber loss: |r| below delta, (r^2 + delta^2)/(2 delta) above.

    ``p`` may be a Tensor (differentiable); ``g`` is treated as constant.
    """
    if delta <= 0:
        raise ValueError("delta must be positive")
    g = _as_maybe_tensor(g)
    p = _as_maybe_tensor(p)
    if g.shape != p.shape:
        raise ValueError("shape mismatch")
    if mask is None:
        mask = np.ones(g.shape, dtype=bool)
    count = int(mask.sum())
    if count == 0:
        raise ValueError("empty valid set")
    r = ad.sub(g, p)
    a = ad.absolute(r)
    quad = ad.scale(ad.add(ad.square(r), ad.constant(np.full(g.shape, delta * delta))),
                    1.0 / (2.0 * delta))
    elem = ad.where_mask(a.data <= delta, a, quad)
    masked = ad.where_mask(mask, elem, ad.constant(np.zeros(g.shape)))
    return ad.scale(ad.tsum(masked), 1.0 / count)


def image_gradients(x):
    """Horizontal and vertical Sobel responses, circular-horizontal padding."""
    x = _as_maybe_tensor(x)
    if x.data.ndim != 2 or min(x.shape) < 3:
        raise ValueError("need a 2-D map of at least 3x3")
    x3 = ad.reshape(x, (1,) + tuple(x.shape))
    gh = ad.conv2d(x3, ad.constant(K_H[None, None]))
    gv = ad.conv2d(x3, ad.constant(K_V[None, None]))
    return ad.reshape(gh, x.shape), ad.reshape(gv, x.shape)


def gradient_support_mask(mask: np.ndarray) -> np.ndarray:
    """Pixels whose full 3x3 neighborhood (circular in u, clipped in v) is valid."""
    m = np.asarray(mask, dtype=bool)
    out = np.zeros_like(m)
    out[1:-1, :] = True
    for dy in (-1, 0, 1):
        rolled = np.zeros_like(m)
        if dy == 0:
            rolled = m
        elif dy == -1:
            rolled[:-1] = m[1:]
        else:
            rolled[1:] = m[:-1]
        for dx in (-1, 0, 1):
            out &= np.roll(rolled, dx, axis=1)
    return out


def final_loss(g: DepthMap, p, delta: float = BERHU_DELTA):
    """BerHu on depth plus BerHu on horizontal and vertical gradients."""
    pt = _as_maybe_tensor(p.values if isinstance(p, DepthMap) else p)
    gv = g.values if isinstance(g, DepthMap) else np.asarray(g, dtype=np.float64)
    mask = g.valid_mask if isinstance(g, DepthMap) else np.ones(gv.shape, dtype=bool)
    if pt.shape != gv.shape:
        raise ValueError("shape mismatch")
    loss = berhu(gv, pt, delta, mask)
    gmask = gradient_support_mask(mask)
    if gmask.any():
        gt = ad.constant(gv)
        gh_g, gv_g = image_gradients(gt)
        gh_p, gv_p = image_gradients(pt)
        loss = ad.add(loss, berhu(gh_g, gh_p, delta, gmask))
        loss = ad.add(loss, berhu(gv_g, gv_p, delta, gmask))
    return loss


def _masked_pair(g: DepthMap, p: DepthMap):
    if g.values.shape != p.values.shape:
        raise ValueError("shape mismatch")
    mask = g.valid_mask & p.valid_mask
    if not mask.any():
        raise ValueError("no valid pixels")
    return g.values[mask], p.values[mask], mask


def rmse_and_deltas(g: DepthMap, p: DepthMap):
    gv, pv, _ = _masked_pair(g, p)
    rmse = float(np.sqrt(np.mean((gv - pv) ** 2)))
    if np.any(gv <= 0):
        raise ValueError("non-positive ground truth inside the valid mask")
    ratio = np.maximum(gv / pv, pv / gv)
    deltas = tuple(float(np.mean(ratio < 1.25 ** i)) for i in (1, 2, 3))
    return rmse, deltas


def p_rmse(g: DepthMap, p: DepthMap, face_size: int | None = None,
           literal: bool = False) -> float:
    """Pole error over the top/bottom cube faces.

    Default is a true RMSE (mean of squared errors under the root); with
    ``literal=True`` the root is taken over the mean of absolute errors
    instead, matching the printed formula this metric is sometimes quoted as.
    """
    if face_size is None:
        face_size = g.values.shape[1] // 4
    cg = erp_to_cube(g.values, face_size).faces[4:]
    cp = erp_to_cube(p.values, face_size).faces[4:]
    err = cg - cp
    if literal:
        return float(np.sqrt(np.mean(np.abs(err))))
    return float(np.sqrt(np.mean(err ** 2)))


def lrce(g: DepthMap, p: DepthMap) -> float:
    """Mean absolute difference between seam gradients of truth and prediction.

    The seam gradient of a row is first-column minus last-column; rows enter
    the mean only when both boundary pixels are valid in both maps.
    """
    if g.values.shape != p.values.shape:
        raise ValueError("shape mismatch")
    if g.values.shape[1] < 2:
        raise ValueError("need at least two columns")
    rows = (g.valid_mask[:, 0] & g.valid_mask[:, -1]
            & p.valid_mask[:, 0] & p.valid_mask[:, -1])
    if not rows.any():
        raise ValueError("no valid boundary rows")
    grad_g = g.values[rows, 0] - g.values[rows, -1]
    grad_p = p.values[rows, 0] - p.values[rows, -1]
    return float(np.mean(np.abs(grad_g - grad_p)))


def evaluate(g: DepthMap, p: DepthMap, face_size: int | None = None,
             prmse_literal: bool = False) -> MetricReport:
    rmse, (d1, d2, d3) = rmse_and_deltas(g, p)
    return MetricReport(
        rmse=rmse, delta1=d1, delta2=d2, delta3=d3,
        p_rmse=p_rmse(g, p, face_size, literal=prmse_literal),
        lrce=lrce(g, p),
        valid_pixel_count=int((g.valid_mask & p.valid_mask).sum()),
    )
