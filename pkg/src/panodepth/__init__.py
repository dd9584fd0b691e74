"""Panoramic depth estimation toolkit: spherical tangent-patch geometry,
deformable panorama self-attention, a hierarchical depth network, the
BerHu+gradient objective, and panorama-specific evaluation metrics."""

from .geometry import (
    SamplingGrid, CubeFaceSet, build_stlm_grid, erp_to_sphere, sphere_to_erp,
    gnomonic_forward, gnomonic_inverse, erp_to_cube,
)
from .losses import DepthMap, MetricReport, berhu, final_loss, evaluate, p_rmse, lrce
from .network import ModelConfig, PanoDepthModel
from .optim import Adam, TrainConfig, train_toy
from .scene import Box, SceneSpec, render_scene

__all__ = [
    "SamplingGrid", "CubeFaceSet", "build_stlm_grid", "erp_to_sphere",
    "sphere_to_erp", "gnomonic_forward", "gnomonic_inverse", "erp_to_cube",
    "DepthMap", "MetricReport", "berhu", "final_loss", "evaluate", "p_rmse",
    "lrce", "ModelConfig", "PanoDepthModel", "Adam", "TrainConfig",
    "train_toy", "Box", "SceneSpec", "render_scene",
]

__version__ = "0.1.0"
