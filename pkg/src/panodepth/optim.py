"""Adam optimizer and the toy training loop."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .losses import DepthMap, final_loss
from .network import ModelConfig, PanoDepthModel
from .scene import SceneSpec, render_scene


class Adam:
    """Standard Adam with bias correction."""

    def __init__(self, params, lr: float = 1e-4, beta1: float = 0.9,
                 beta2: float = 0.999, eps: float = 1e-8):
        if lr <= 0:
            raise ValueError("learning rate must be positive")
        self.params = list(params)
        self.lr = lr
        self.beta1 = beta1
        self.beta2 = beta2
        self.eps = eps
        self.t = 0
        self.m = [np.zeros_like(p.data) for p in self.params]
        self.v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        self.t += 1
        b1c = 1.0 - self.beta1 ** self.t
        b2c = 1.0 - self.beta2 ** self.t
        for i, p in enumerate(self.params):
            g = p.tensor.grad
            if g is None:
                g = np.zeros_like(p.data)
            self.m[i] = self.beta1 * self.m[i] + (1.0 - self.beta1) * g
            self.v[i] = self.beta2 * self.v[i] + (1.0 - self.beta2) * g * g
            mhat = self.m[i] / b1c
            vhat = self.v[i] / b2c
            p.tensor.data = p.data - self.lr * mhat / (np.sqrt(vhat) + self.eps)

    def zero_grad(self):
        for p in self.params:
            p.tensor.zero_grad()


@dataclass
class TrainConfig:
    model: ModelConfig = field(default_factory=ModelConfig)
    lr: float = 1e-4
    batch_size: int = 1
    steps: int = 2000
    seed: int = 0

    def __post_init__(self):
        if self.lr <= 0 or self.steps < 1:
            raise ValueError("learning rate must be > 0 and steps >= 1")


class TrainingDiverged(RuntimeError):
    pass


def train_toy(cfg: TrainConfig, scenes, progress=None):
    """Deterministic render -> forward -> loss -> backward -> Adam loop.

    Returns (model, trace) where trace is a list of (step, loss) pairs.
    Scenes are cycled one per step (batch size 1 at this scale).
    """
    model = PanoDepthModel(cfg.model, seed=cfg.seed)
    rendered = []
    for spec in scenes:
        rgb, depth = render_scene(spec, cfg.model.width, cfg.model.height)
        rendered.append((rgb, DepthMap(depth)))
    if not rendered:
        raise ValueError("need at least one scene")
    opt = Adam(model.parameters(), lr=cfg.lr)
    trace = []
    for step in range(cfg.steps):
        rgb, gt = rendered[step % len(rendered)]
        opt.zero_grad()
        pred = model.forward(rgb)
        loss = final_loss(gt, _squeeze_pred(pred))
        value = loss.item()
        if not np.isfinite(value):
            norms = {p.name: float(np.linalg.norm(p.data)) for p in model.parameters()}
            worst = max(norms, key=norms.get)
            raise TrainingDiverged(
                f"non-finite loss at step {step}; largest parameter {worst} "
                f"norm {norms[worst]:.3e}")
        loss.backward()
        opt.step()
        trace.append((step, value))
        if progress is not None:
            progress(step, value)
    return model, trace


def _squeeze_pred(pred):
    from . import autodiff as ad

    return ad.reshape(pred, pred.shape[1:])


def predict_depth(model: PanoDepthModel, rgb: np.ndarray) -> np.ndarray:
    """Plain-array inference wrapper."""
    return model.forward(rgb).data[0]
