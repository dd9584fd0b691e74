"""Panorama self-attention with learnable token flow, and the PST block.

Each pixel attends to 9 tokens: its tangent-patch sampling positions from the
spherical grid, displaced by a learned per-head 2D flow, looked up in the
value map by bilinear interpolation with horizontal wrap.  The block wraps the
attention and a locally-enhanced feed-forward in pre-norm residuals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Parameter, Tensor
from .geometry import SamplingGrid


def _uniform(rng: np.random.Generator, shape, fan_in: int) -> np.ndarray:
    bound = 1.0 / np.sqrt(fan_in)
    return rng.uniform(-bound, bound, size=shape)


@dataclass
class PSAParams:
    """Weights of one panorama self-attention layer.

    ``score`` produces heads*9 attention logits per token and ``flow``
    produces heads*18 flow components; both start at zero so the layer begins
    as uniform attention over the undisturbed spherical grid positions.
    """

    channels: int
    heads: int
    q_w: Parameter
    q_b: Parameter
    v_w: Parameter
    v_b: Parameter
    score_w: Parameter
    score_b: Parameter
    flow_w: Parameter
    flow_b: Parameter
    head_out: Parameter  # stacked per-head (M, d, d) weights
    merge_w: Parameter
    merge_b: Parameter

    @property
    def head_dim(self) -> int:
        return self.channels // self.heads


def init_psa_params(channels: int, heads: int, rng: np.random.Generator,
                    prefix: str = "psa") -> PSAParams:
    if channels % heads:
        raise ValueError(f"channels {channels} not divisible by heads {heads}")
    d = channels // heads
    return PSAParams(
        channels=channels,
        heads=heads,
        q_w=Parameter(f"{prefix}.q.w", _uniform(rng, (channels, channels), channels)),
        q_b=Parameter(f"{prefix}.q.b", _uniform(rng, (channels,), channels)),
        v_w=Parameter(f"{prefix}.v.w", _uniform(rng, (channels, channels), channels)),
        v_b=Parameter(f"{prefix}.v.b", _uniform(rng, (channels,), channels)),
        score_w=Parameter(f"{prefix}.score.w", np.zeros((channels, heads * 9))),
        score_b=Parameter(f"{prefix}.score.b", np.zeros(heads * 9)),
        flow_w=Parameter(f"{prefix}.flow.w", np.zeros((channels, heads * 18))),
        flow_b=Parameter(f"{prefix}.flow.b", np.zeros(heads * 18)),
        head_out=Parameter(f"{prefix}.heads.w", _uniform(rng, (heads, d, d), d)),
        merge_w=Parameter(f"{prefix}.merge.w", _uniform(rng, (channels, channels), channels)),
        merge_b=Parameter(f"{prefix}.merge.b", _uniform(rng, (channels,), channels)),
    )


def psa_params_list(p: PSAParams) -> list:
    return [p.q_w, p.q_b, p.v_w, p.v_b, p.score_w, p.score_b,
            p.flow_w, p.flow_b, p.head_out, p.merge_w, p.merge_b]


def _tokens(f: Tensor) -> Tensor:
    """(C,H,W) -> (H*W, C)."""
    c, h, w = f.shape
    return ad.reshape(ad.moveaxis(f, 0, 2), (h * w, c))


def _spatial(t: Tensor, h: int, w: int) -> Tensor:
    """(H*W, C) -> (C,H,W)."""
    return ad.moveaxis(ad.reshape(t, (h, w, t.shape[-1])), 2, 0)


def _attention_and_flows(tokens: Tensor, params: PSAParams):
    n = tokens.shape[0]
    m = params.heads
    q = ad.linear(tokens, params.q_w, params.q_b)
    logits = ad.reshape(ad.linear(q, params.score_w, params.score_b), (n, m, 9))
    attn = ad.softmax_last(logits)
    flows = ad.reshape(ad.linear(q, params.flow_w, params.flow_b), (n, m, 9, 2))
    return q, attn, flows


def psa_forward(f: Tensor, grid: SamplingGrid, params: PSAParams) -> Tensor:
    """Panorama self-attention over a (C,H,W) feature map."""
    c, h, w = f.shape
    if c != params.channels:
        raise ValueError(f"feature channels {c} != params channels {params.channels}")
    if (grid.height, grid.width) != (h, w):
        raise ValueError("sampling grid extents do not match the feature map")
    m = params.heads
    n = h * w
    tokens = _tokens(f)
    _, attn, flows = _attention_and_flows(tokens, params)
    v = ad.linear(tokens, params.v_w, params.v_b)
    base = ad.constant(grid.positions.reshape(1, n, 9, 2))

    pos = ad.add(base, ad.moveaxis(flows, 1, 0))                  # (M,N,9,2)
    pooled = ad.multihead_sample_pool(v, pos, attn, h, w)         # (M,N,d)
    headed = ad.bmm(pooled, params.head_out)                      # (M,N,d)
    stacked = ad.reshape(ad.moveaxis(headed, 0, 1), (n, c))       # heads -> channels
    merged = ad.linear(stacked, params.merge_w, params.merge_b)
    return _spatial(merged, h, w)


def extract_token_flows(f: Tensor, grid: SamplingGrid, params: PSAParams) -> np.ndarray:
    """Return the learned flow field as a plain (M,H,W,9,2) array of ERP pixels."""
    c, h, w = f.shape
    if (grid.height, grid.width) != (h, w):
        raise ValueError("sampling grid extents do not match the feature map")
    tokens = np.moveaxis(np.asarray(f.data), 0, 2).reshape(h * w, c)
    q = tokens @ params.q_w.data + params.q_b.data
    flows = (q @ params.flow_w.data + params.flow_b.data).reshape(h * w, params.heads, 9, 2)
    return np.moveaxis(flows.reshape(h, w, params.heads, 9, 2), 2, 0).copy()


@dataclass
class LeFFParams:
    """Locally-enhanced feed-forward: expand, depthwise 3x3, GELU, project."""

    channels: int
    ratio: int
    expand_w: Parameter
    expand_b: Parameter
    depthwise: Parameter  # (r*C, 3, 3)
    project_w: Parameter
    project_b: Parameter


def init_leff_params(channels: int, ratio: int, rng: np.random.Generator,
                     prefix: str = "leff") -> LeFFParams:
    if ratio < 1:
        raise ValueError("expansion ratio must be >= 1")
    hidden = channels * ratio
    return LeFFParams(
        channels=channels,
        ratio=ratio,
        expand_w=Parameter(f"{prefix}.expand.w", _uniform(rng, (channels, hidden), channels)),
        expand_b=Parameter(f"{prefix}.expand.b", _uniform(rng, (hidden,), channels)),
        depthwise=Parameter(f"{prefix}.dw.k", _uniform(rng, (hidden, 3, 3), 9)),
        project_w=Parameter(f"{prefix}.project.w", _uniform(rng, (hidden, channels), hidden)),
        project_b=Parameter(f"{prefix}.project.b", _uniform(rng, (channels,), hidden)),
    )


def leff_params_list(p: LeFFParams) -> list:
    return [p.expand_w, p.expand_b, p.depthwise, p.project_w, p.project_b]


def leff_forward(f: Tensor, params: LeFFParams) -> Tensor:
    c, h, w = f.shape
    hidden = ad.linear(_tokens(f), params.expand_w, params.expand_b)
    hidden = ad.gelu(ad.depthwise_conv3x3(_spatial(hidden, h, w), params.depthwise))
    out = ad.linear(_tokens(hidden), params.project_w, params.project_b)
    return _spatial(out, h, w)


@dataclass
class PSTBlockParams:
    """One transformer block: pre-norm PSA and pre-norm LeFF, both residual."""

    psa: PSAParams
    leff: LeFFParams
    norm1_g: Parameter
    norm1_b: Parameter
    norm2_g: Parameter
    norm2_b: Parameter


def init_pst_block(channels: int, heads: int, leff_ratio: int,
                   rng: np.random.Generator, prefix: str = "pst") -> PSTBlockParams:
    return PSTBlockParams(
        psa=init_psa_params(channels, heads, rng, prefix=f"{prefix}.psa"),
        leff=init_leff_params(channels, leff_ratio, rng, prefix=f"{prefix}.leff"),
        norm1_g=Parameter(f"{prefix}.norm1.g", np.ones(channels)),
        norm1_b=Parameter(f"{prefix}.norm1.b", np.zeros(channels)),
        norm2_g=Parameter(f"{prefix}.norm2.g", np.ones(channels)),
        norm2_b=Parameter(f"{prefix}.norm2.b", np.zeros(channels)),
    )


def pst_block_params_list(p: PSTBlockParams) -> list:
    return (psa_params_list(p.psa) + leff_params_list(p.leff)
            + [p.norm1_g, p.norm1_b, p.norm2_g, p.norm2_b])


def _norm_spatial(f: Tensor, gain: Parameter, bias: Parameter) -> Tensor:
    c, h, w = f.shape
    return _spatial(ad.layer_norm(_tokens(f), gain, bias), h, w)


def pst_block(f: Tensor, grid: SamplingGrid, params: PSTBlockParams) -> Tensor:
    f1 = ad.add(f, psa_forward(_norm_spatial(f, params.norm1_g, params.norm1_b),
                               grid, params.psa))
    return ad.add(f1, leff_forward(_norm_spatial(f1, params.norm2_g, params.norm2_b),
                                   params.leff))
