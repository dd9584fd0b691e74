"""Synthetic panorama scenes with analytic ground-truth depth.

A scene is an axis-aligned box room viewed from inside, with a few axis-aligned
box obstacles.  Every ERP pixel casts the ray of its (theta, phi) direction
from the camera; depth is the Euclidean distance to the nearest surface and
color is Lambert-shaded albedo.  Rendering is exact (slab intersections) and
fully deterministic.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .geometry import erp_to_sphere

LIGHT_DIR = np.array([0.48, 0.6, 0.64])  # unit vector, fixed scene light
AMBIENT = 0.35


@dataclass
class Box:
    center: tuple
    half: tuple
    albedo: tuple = (0.7, 0.7, 0.7)

    def __post_init__(self):
        self.center = np.asarray(self.center, dtype=np.float64)
        self.half = np.asarray(self.half, dtype=np.float64)
        self.albedo = np.asarray(self.albedo, dtype=np.float64)
        if np.any(self.half <= 0):
            raise ValueError("box half-extents must be positive")


@dataclass
class SceneSpec:
    room_half: tuple = (2.0, 2.0, 1.0)
    camera: tuple = (0.0, 0.0, 0.0)
    boxes: list = field(default_factory=list)
    wall_albedo: tuple = (0.75, 0.72, 0.65)
    seed: int = 0

    def __post_init__(self):
        self.room_half = np.asarray(self.room_half, dtype=np.float64)
        self.camera = np.asarray(self.camera, dtype=np.float64)
        self.wall_albedo = np.asarray(self.wall_albedo, dtype=np.float64)
        self.boxes = [b if isinstance(b, Box) else Box(**b) for b in self.boxes]
        self.validate()

    def validate(self):
        if np.any(self.room_half <= 0):
            raise ValueError("room half-extents must be positive")
        if np.any(np.abs(self.camera) >= self.room_half):
            raise ValueError("camera must be strictly inside the room")
        for b in self.boxes:
            if np.all(np.abs(self.camera - b.center) < b.half):
                raise ValueError("camera inside an obstacle")

    @classmethod
    def random(cls, seed: int, max_boxes: int = 3) -> "SceneSpec":
        """Deterministic random room with 0..max_boxes obstacles."""
        rng = np.random.default_rng(seed)
        room = rng.uniform([1.5, 1.5, 0.9], [3.0, 3.0, 1.6])
        cam = rng.uniform(-0.3, 0.3, size=3) * room
        boxes = []
        for _ in range(rng.integers(0, max_boxes + 1)):
            half = rng.uniform(0.15, 0.45, size=3) * room
            lo = -room + half
            hi = room - half
            center = rng.uniform(lo, hi)
            if np.all(np.abs(cam - center) < half + 0.2):
                continue  # keep the camera clear of obstacles
            boxes.append(Box(center, half, rng.uniform(0.2, 0.9, size=3)))
        return cls(room_half=room, camera=cam, boxes=boxes, seed=seed)


def _ray_directions(width: int, height: int) -> np.ndarray:
    cols, rows = np.meshgrid(np.arange(width, dtype=np.float64),
                             np.arange(height, dtype=np.float64))
    theta, phi = erp_to_sphere(cols, rows, width, height)
    return np.stack([np.cos(phi) * np.cos(theta),
                     np.cos(phi) * np.sin(theta),
                     np.sin(phi)], axis=-1)


def _room_exit(origin: np.ndarray, dirs: np.ndarray, half: np.ndarray):
    """Distance to the room walls (from inside) and the wall normal axis/sign."""
    t_best = np.full(dirs.shape[:-1], np.inf)
    axis = np.zeros(dirs.shape[:-1], dtype=np.int64)
    sign = np.zeros(dirs.shape[:-1])
    for ax in range(3):
        d = dirs[..., ax]
        with np.errstate(divide="ignore"):
            t = np.where(d != 0.0,
                         (np.sign(d) * half[ax] - origin[ax]) / np.where(d != 0, d, 1.0),
                         np.inf)
        closer = t < t_best
        t_best = np.where(closer, t, t_best)
        axis = np.where(closer, ax, axis)
        sign = np.where(closer, np.sign(d), sign)
    return t_best, axis, sign


def _box_entry(origin: np.ndarray, dirs: np.ndarray, box: Box):
    """Slab-test entry distance into an obstacle, inf where the ray misses."""
    t_near = np.full(dirs.shape[:-1], -np.inf)
    t_far = np.full(dirs.shape[:-1], np.inf)
    near_axis = np.zeros(dirs.shape[:-1], dtype=np.int64)
    for ax in range(3):
        d = dirs[..., ax]
        o = origin[ax] - box.center[ax]
        h = box.half[ax]
        parallel = d == 0.0
        with np.errstate(divide="ignore", invalid="ignore"):
            t1 = (-h - o) / np.where(parallel, 1.0, d)
            t2 = (h - o) / np.where(parallel, 1.0, d)
        lo = np.minimum(t1, t2)
        hi = np.maximum(t1, t2)
        lo = np.where(parallel, np.where(np.abs(o) < h, -np.inf, np.inf), lo)
        hi = np.where(parallel, np.where(np.abs(o) < h, np.inf, -np.inf), hi)
        take = lo > t_near
        near_axis = np.where(take, ax, near_axis)
        t_near = np.maximum(t_near, lo)
        t_far = np.minimum(t_far, hi)
    hit = (t_near <= t_far) & (t_near > 0.0)
    return np.where(hit, t_near, np.inf), near_axis


def render_scene(spec: SceneSpec, width: int, height: int):
    """Render (rgb, depth) for an ERP camera at the scene's viewpoint.

    rgb has shape (3, H, W) with values in [0, 1]; depth is (H, W) meters.
    """
    spec.validate()
    dirs = _ray_directions(width, height)
    t_wall, wall_axis, wall_sign = _room_exit(spec.camera, dirs, spec.room_half)

    depth = t_wall
    normal = np.zeros(dirs.shape)
    for ax in range(3):
        sel = wall_axis == ax
        normal[sel, ax] = -wall_sign[sel]  # room walls face inward
    albedo = np.broadcast_to(spec.wall_albedo, dirs.shape).copy()

    for box in spec.boxes:
        t_box, near_axis = _box_entry(spec.camera, dirs, box)
        closer = t_box < depth
        depth = np.where(closer, t_box, depth)
        for ax in range(3):
            sel = closer & (near_axis == ax)
            if not sel.any():
                continue
            normal[sel] = 0.0
            entry = spec.camera[ax] + t_box[sel] * dirs[sel, ax]
            normal[sel, ax] = np.sign(entry - box.center[ax])
        albedo[closer] = box.albedo

    shade = AMBIENT + (1.0 - AMBIENT) * np.maximum(0.0, -(normal @ LIGHT_DIR))
    rgb = np.clip(albedo * shade[..., None], 0.0, 1.0)
    return np.moveaxis(rgb, -1, 0).copy(), depth
