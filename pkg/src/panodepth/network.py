"""Hierarchical U-shaped panorama depth network.

An input stem lifts the RGB panorama to ``base_channels`` features.  Each
encoder stage adds a learnable positional embedding, runs its PST blocks at
the current resolution, and downsamples with a 4x4 stride-2 convolution that
doubles the width.  The bottleneck runs blocks at the coarsest resolution.
Each decoder stage upsamples with a 2x2 stride-2 transposed convolution,
concatenates the matching encoder skip, fuses with a 1x1 convolution, embeds,
and runs its blocks.  A 3x3 output stem recovers the single-channel depth map.
All convolutions pad circularly along the horizontal seam.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from . import attention as attn
from .geometry import SamplingGrid, build_stlm_grid


@dataclass
class ModelConfig:
    width: int = 64
    height: int = 32
    base_channels: int = 16
    num_stages: int = 4
    blocks_per_stage: int = 2
    leff_ratio: int = 2
    output_activation: str = "linear"  # or "softplus"
    encoder_heads: list = field(default_factory=list)
    bottleneck_heads: int = 0
    decoder_heads: list = field(default_factory=list)

    def __post_init__(self):
        if not self.encoder_heads:
            self.encoder_heads = [2 ** s for s in range(self.num_stages)]
        if not self.bottleneck_heads:
            self.bottleneck_heads = 2 ** self.num_stages
        if not self.decoder_heads:
            self.decoder_heads = [2 ** (self.num_stages - s) for s in range(self.num_stages)]
        self.validate()

    def validate(self):
        if self.height * 2 != self.width:
            raise ValueError("input must be a 2:1 equirectangular image")
        div = 2 ** self.num_stages
        if self.width % div or self.height % div:
            raise ValueError(f"input extents must be divisible by 2^{self.num_stages}")
        if self.height // div < 1:
            raise ValueError("too many stages for this input height")
        if len(self.encoder_heads) != self.num_stages or len(self.decoder_heads) != self.num_stages:
            raise ValueError("head lists must have one entry per stage")
        for s, heads in enumerate(self.encoder_heads):
            if (self.base_channels * 2 ** s) % heads:
                raise ValueError(f"encoder stage {s}: heads do not divide channels")
        if (self.base_channels * 2 ** self.num_stages) % self.bottleneck_heads:
            raise ValueError("bottleneck heads do not divide channels")
        for s, heads in enumerate(self.decoder_heads):
            ch = self.base_channels * 2 ** (self.num_stages - 1 - s)
            if ch % heads:
                raise ValueError(f"decoder stage {s}: heads do not divide channels")
        if self.output_activation not in ("linear", "softplus"):
            raise ValueError("output_activation must be linear or softplus")
        if self.blocks_per_stage < 1 or self.leff_ratio < 1:
            raise ValueError("blocks_per_stage and leff_ratio must be >= 1")

    def stage_shape(self, s: int):
        """(channels, height, width) at which encoder stage s runs its blocks."""
        return (self.base_channels * 2 ** s, self.height >> s, self.width >> s)


def _uniform(rng, shape, fan_in):
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class _Stage:
    pos_embed: Parameter
    blocks: list  # PSTBlockParams
    grid: SamplingGrid


class PanoDepthModel:
    """Built network: configuration, parameters, and precomputed grids."""

    def __init__(self, config: ModelConfig, seed: int = 0):
        config.validate()
        self.config = config
        self.seed = seed
        rng = np.random.default_rng(seed)
        c0 = config.base_channels
        self._grids = {}

        def grid_for(h, w):
            if (h, w) not in self._grids:
                self._grids[(h, w)] = build_stlm_grid(w, h)
            return self._grids[(h, w)]

        self.stem_in_k = Parameter("stem_in.k", _uniform(rng, (c0, 3, 3, 3), 27))
        self.stem_in_b = Parameter("stem_in.b", _uniform(rng, (c0, 1, 1), 27))

        self.encoder = []
        self.down = []
        for s in range(config.num_stages):
            ch, h, w = config.stage_shape(s)
            blocks = [attn.init_pst_block(ch, config.encoder_heads[s], config.leff_ratio,
                                          rng, prefix=f"enc{s}.block{b}")
                      for b in range(config.blocks_per_stage)]
            self.encoder.append(_Stage(
                Parameter(f"enc{s}.pos", np.zeros((ch, h, w))), blocks, grid_for(h, w)))
            self.down.append((
                Parameter(f"down{s}.k", _uniform(rng, (2 * ch, ch, 4, 4), ch * 16)),
                Parameter(f"down{s}.b", _uniform(rng, (2 * ch, 1, 1), ch * 16)),
            ))

        cb = c0 * 2 ** config.num_stages
        hb, wb = config.height >> config.num_stages, config.width >> config.num_stages
        self.bottleneck = _Stage(
            Parameter("bott.pos", np.zeros((cb, hb, wb))),
            [attn.init_pst_block(cb, config.bottleneck_heads, config.leff_ratio,
                                 rng, prefix=f"bott.block{b}")
             for b in range(config.blocks_per_stage)],
            grid_for(hb, wb))

        self.decoder = []
        self.up = []
        self.fuse = []
        for s in range(config.num_stages):
            enc_s = config.num_stages - 1 - s
            ch, h, w = config.stage_shape(enc_s)
            self.up.append((
                Parameter(f"up{s}.k", _uniform(rng, (2 * ch, ch, 2, 2), 2 * ch * 4)),
                Parameter(f"up{s}.b", _uniform(rng, (ch, 1, 1), 2 * ch * 4)),
            ))
            self.fuse.append((
                Parameter(f"fuse{s}.k", _uniform(rng, (ch, 2 * ch, 1, 1), 2 * ch)),
                Parameter(f"fuse{s}.b", _uniform(rng, (ch, 1, 1), 2 * ch)),
            ))
            blocks = [attn.init_pst_block(ch, config.decoder_heads[s], config.leff_ratio,
                                          rng, prefix=f"dec{s}.block{b}")
                      for b in range(config.blocks_per_stage)]
            self.decoder.append(_Stage(
                Parameter(f"dec{s}.pos", np.zeros((ch, h, w))), blocks, grid_for(h, w)))

        self.stem_out_k = Parameter("stem_out.k", _uniform(rng, (1, c0, 3, 3), c0 * 9))
        self.stem_out_b = Parameter("stem_out.b", _uniform(rng, (1, 1, 1), c0 * 9))

    # -- parameter plumbing -------------------------------------------------

    def parameters(self) -> list:
        params = [self.stem_in_k, self.stem_in_b]
        for s, stage in enumerate(self.encoder):
            params.append(stage.pos_embed)
            for b in stage.blocks:
                params.extend(attn.pst_block_params_list(b))
            params.extend(self.down[s])
        params.append(self.bottleneck.pos_embed)
        for b in self.bottleneck.blocks:
            params.extend(attn.pst_block_params_list(b))
        for s, stage in enumerate(self.decoder):
            params.extend(self.up[s])
            params.extend(self.fuse[s])
            params.append(stage.pos_embed)
            for b in stage.blocks:
                params.extend(attn.pst_block_params_list(b))
        params.extend([self.stem_out_k, self.stem_out_b])
        names = [p.name for p in params]
        assert len(names) == len(set(names)), "duplicate parameter names"
        return params

    def param_count(self) -> int:
        return sum(p.data.size for p in self.parameters())

    def zero_grad(self):
        for p in self.parameters():
            p.tensor.zero_grad()

    # -- forward ------------------------------------------------------------

    def forward(self, rgb) -> Tensor:
        cfg = self.config
        x = rgb if isinstance(rgb, Tensor) else ad.constant(np.asarray(rgb, dtype=np.float64))
        if x.shape != (3, cfg.height, cfg.width):
            raise ValueError(f"expected input of shape (3, {cfg.height}, {cfg.width})")
        f = ad.add(ad.conv2d(x, self.stem_in_k), self.stem_in_b)

        skips = []
        for s, stage in enumerate(self.encoder):
            f = ad.add(f, stage.pos_embed)
            for b in stage.blocks:
                f = attn.pst_block(f, stage.grid, b)
            skips.append(f)
            dk, db = self.down[s]
            f = ad.add(ad.conv2d(f, dk, stride=2), db)

        f = ad.add(f, self.bottleneck.pos_embed)
        for b in self.bottleneck.blocks:
            f = attn.pst_block(f, self.bottleneck.grid, b)

        for s, stage in enumerate(self.decoder):
            uk, ub = self.up[s]
            f = ad.add(ad.conv_transpose2d(f, uk), ub)
            fk, fb = self.fuse[s]
            f = ad.add(ad.conv2d(ad.concat([f, skips[-1 - s]], axis=0), fk), fb)
            f = ad.add(f, stage.pos_embed)
            for b in stage.blocks:
                f = attn.pst_block(f, stage.grid, b)

        out = ad.add(ad.conv2d(f, self.stem_out_k), self.stem_out_b)
        if cfg.output_activation == "softplus":
            out = ad.softplus(out)
        return out

    def first_block_flows(self, rgb) -> np.ndarray:
        """Token-flow field of the first PST block, shape (M,H,W,9,2)."""
        cfg = self.config
        x = ad.constant(np.asarray(rgb, dtype=np.float64))
        f = ad.add(ad.conv2d(x, self.stem_in_k), self.stem_in_b)
        stage = self.encoder[0]
        f = ad.add(f, stage.pos_embed)
        block = stage.blocks[0]
        normed = attn._norm_spatial(f, block.norm1_g, block.norm1_b)
        return attn.extract_token_flows(normed, stage.grid, block.psa)
