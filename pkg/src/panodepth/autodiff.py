"""Minimal reverse-mode autodiff on dense float64 arrays.

A :class:`Tensor` wraps a numpy array plus an optional gradient slot.  Every
operation records its parents and a vector-Jacobian closure; ``backward()``
walks the recorded graph in reverse topological order.  Only the kernels the
panorama network needs are provided; no broadcasting tricks beyond what those
kernels use.
"""

from __future__ import annotations

import numpy as np
from scipy.special import erf

__all__ = [
    "Tensor", "Parameter", "constant",
    "add", "sub", "mul", "neg", "scale", "square", "sqrt", "absolute",
    "where_mask", "tsum", "tmean", "reshape", "moveaxis", "narrow", "concat",
    "matmul", "linear", "softmax_last", "layer_norm", "gelu", "softplus",
    "conv2d", "conv_transpose2d", "depthwise_conv3x3", "bilinear_sample",
    "bmm", "multihead_sample_pool", "gradcheck", "GradcheckKinkError",
]


class Tensor:
    """Dense float64 array with an additive gradient accumulator."""

    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp")

    def __init__(self, data, requires_grad: bool = False):
        self.data = np.asarray(data, dtype=np.float64)
        self.requires_grad = bool(requires_grad)
        self.grad = None
        self._parents = ()
        self._vjp = None

    @property
    def shape(self):
        return self.data.shape

    @property
    def size(self):
        return self.data.size

    def zero_grad(self):
        self.grad = None

    def backward(self, grad=None):
        if grad is None:
            if self.data.size != 1:
                raise ValueError("backward() without a seed needs a scalar output")
            grad = np.ones_like(self.data)
        order = []
        visited = set()
        stack = [(self, False)]
        while stack:
            node, expanded = stack.pop()
            if expanded:
                order.append(node)
                continue
            if id(node) in visited:
                continue
            visited.add(id(node))
            stack.append((node, True))
            for p in node._parents:
                if p.requires_grad and id(p) not in visited:
                    stack.append((p, False))
        self.grad = np.asarray(grad, dtype=np.float64).reshape(self.data.shape)
        for node in reversed(order):
            if node._vjp is None or node.grad is None:
                continue
            for parent, g in zip(node._parents, node._vjp(node.grad)):
                if g is None or not parent.requires_grad:
                    continue
                # vjp outputs are fresh arrays (or views of them); summing with
                # + keeps accumulation alias-safe without preallocating zeros
                parent.grad = g if parent.grad is None else parent.grad + g

    # arithmetic sugar
    def __add__(self, other):
        return add(self, _as_tensor(other))

    __radd__ = __add__

    def __sub__(self, other):
        return sub(self, _as_tensor(other))

    def __rsub__(self, other):
        return sub(_as_tensor(other), self)

    def __mul__(self, other):
        if np.isscalar(other):
            return scale(self, float(other))
        return mul(self, _as_tensor(other))

    __rmul__ = __mul__

    def __neg__(self):
        return neg(self)

    def __truediv__(self, other):
        if np.isscalar(other):
            return scale(self, 1.0 / float(other))
        raise TypeError("tensor/tensor division not supported")

    def item(self):
        return float(self.data.reshape(()))

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"


class Parameter:
    """Named learnable tensor."""

    __slots__ = ("name", "tensor")

    def __init__(self, name: str, data):
        self.name = name
        self.tensor = Tensor(data, requires_grad=True)

    @property
    def data(self):
        return self.tensor.data

    def __repr__(self):
        return f"Parameter({self.name!r}, shape={self.tensor.shape})"


def constant(data) -> Tensor:
    return Tensor(data, requires_grad=False)


def _as_tensor(x) -> Tensor:
    if isinstance(x, Tensor):
        return x
    if isinstance(x, Parameter):
        return x.tensor
    return Tensor(x)


def _make(data, parents, vjp) -> Tensor:
    parents = tuple(_as_tensor(p) for p in parents)
    out = Tensor(data, requires_grad=any(p.requires_grad for p in parents))
    if out.requires_grad:
        out._parents = parents
        out._vjp = vjp
    return out


def _unbroadcast(g: np.ndarray, shape) -> np.ndarray:
    """Reduce a broadcasted gradient back to ``shape``."""
    if g.shape == tuple(shape):
        return g
    extra = g.ndim - len(shape)
    if extra:
        g = g.sum(axis=tuple(range(extra)))
    axes = tuple(i for i, s in enumerate(shape) if s == 1 and g.shape[i] != 1)
    if axes:
        g = g.sum(axis=axes, keepdims=True)
    return g


# ---------------------------------------------------------------------------
# elementwise and structural ops
# ---------------------------------------------------------------------------

def add(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    return _make(a.data + b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(g, b.shape)))


def sub(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    return _make(a.data - b.data, (a, b),
                 lambda g: (_unbroadcast(g, a.shape), _unbroadcast(-g, b.shape)))


def mul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    return _make(a.data * b.data, (a, b),
                 lambda g: (_unbroadcast(g * b.data, a.shape),
                            _unbroadcast(g * a.data, b.shape)))


def neg(a):
    a = _as_tensor(a)
    return _make(-a.data, (a,), lambda g: (-g,))


def scale(a, s: float):
    a = _as_tensor(a)
    return _make(a.data * s, (a,), lambda g: (g * s,))


def square(a):
    a = _as_tensor(a)
    return _make(a.data * a.data, (a,), lambda g: (2.0 * a.data * g,))


def sqrt(a):
    a = _as_tensor(a)
    out = np.sqrt(a.data)
    return _make(out, (a,), lambda g: (0.5 * g / np.maximum(out, 1e-300),))


def absolute(a):
    a = _as_tensor(a)
    return _make(np.abs(a.data), (a,), lambda g: (g * np.sign(a.data),))


def where_mask(mask: np.ndarray, a, b):
    """Select elementwise by a constant boolean mask (not differentiated)."""
    a, b = _as_tensor(a), _as_tensor(b)
    mask = np.asarray(mask, dtype=bool)
    return _make(np.where(mask, a.data, b.data), (a, b),
                 lambda g: (_unbroadcast(np.where(mask, g, 0.0), a.shape),
                            _unbroadcast(np.where(mask, 0.0, g), b.shape)))


def tsum(a, axis=None, keepdims: bool = False):
    a = _as_tensor(a)
    out = a.data.sum(axis=axis, keepdims=keepdims)

    def vjp(g):
        gg = g
        if axis is not None and not keepdims:
            axes = axis if isinstance(axis, tuple) else (axis,)
            gg = np.expand_dims(g, axes)
        return (np.broadcast_to(gg, a.shape).copy(),)

    return _make(out, (a,), vjp)


def tmean(a, axis=None, keepdims: bool = False):
    a = _as_tensor(a)
    n = a.data.size if axis is None else np.prod(
        [a.shape[ax] for ax in (axis if isinstance(axis, tuple) else (axis,))])
    return scale(tsum(a, axis=axis, keepdims=keepdims), 1.0 / float(n))


def reshape(a, shape):
    a = _as_tensor(a)
    return _make(a.data.reshape(shape), (a,), lambda g: (g.reshape(a.shape),))


def moveaxis(a, src, dst):
    a = _as_tensor(a)
    return _make(np.ascontiguousarray(np.moveaxis(a.data, src, dst)), (a,),
                 lambda g: (np.ascontiguousarray(np.moveaxis(g, dst, src)),))


def narrow(a, axis: int, start: int, length: int):
    """Contiguous slice along one axis."""
    a = _as_tensor(a)
    idx = [slice(None)] * a.data.ndim
    idx[axis] = slice(start, start + length)
    idx = tuple(idx)

    def vjp(g):
        full = np.zeros_like(a.data)
        full[idx] = g
        return (full,)

    return _make(a.data[idx].copy(), (a,), vjp)


def concat(parts, axis: int):
    parts = [_as_tensor(p) for p in parts]
    sizes = [p.shape[axis] for p in parts]
    offs = np.cumsum([0] + sizes)

    def vjp(g):
        outs = []
        for p, lo, hi in zip(parts, offs[:-1], offs[1:]):
            idx = [slice(None)] * g.ndim
            idx[axis] = slice(lo, hi)
            outs.append(g[tuple(idx)].copy())
        return tuple(outs)

    return _make(np.concatenate([p.data for p in parts], axis=axis), parts, vjp)


# ---------------------------------------------------------------------------
# dense algebra
# ---------------------------------------------------------------------------

def matmul(a, b):
    a, b = _as_tensor(a), _as_tensor(b)
    return _make(a.data @ b.data, (a, b),
                 lambda g: (g @ b.data.T, a.data.T @ g))


def linear(x, weight, bias=None):
    """Row-wise affine map: x[N,Din] @ W[Din,Dout] (+ b[Dout])."""
    x, w = _as_tensor(x), _as_tensor(weight)
    if x.shape[-1] != w.shape[0]:
        raise ValueError(f"linear: inner extents {x.shape[-1]} vs {w.shape[0]}")
    y = matmul(x, w)
    if bias is not None:
        y = add(y, bias)
    return y


def softmax_last(x):
    x = _as_tensor(x)
    if not np.all(np.isfinite(x.data)):
        raise ValueError("softmax of non-finite input")
    shifted = x.data - x.data.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    s = e / e.sum(axis=-1, keepdims=True)

    def vjp(g):
        dot = (g * s).sum(axis=-1, keepdims=True)
        return (s * (g - dot),)

    return _make(s, (x,), vjp)


def layer_norm(x, gain, bias, eps: float = 1e-5):
    """Standardize each row of x[N,C] then apply a per-channel affine."""
    x, gv, bv = _as_tensor(x), _as_tensor(gain), _as_tensor(bias)
    mu = x.data.mean(axis=-1, keepdims=True)
    xc = x.data - mu
    var = (xc * xc).mean(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + eps)
    xhat = xc * inv
    out = xhat * gv.data + bv.data
    c = x.shape[-1]

    def vjp(g):
        gxhat = g * gv.data
        gx = inv * (gxhat - gxhat.mean(axis=-1, keepdims=True)
                    - xhat * (gxhat * xhat).mean(axis=-1, keepdims=True))
        axes = tuple(range(g.ndim - 1))
        return (gx, (g * xhat).sum(axis=axes), g.sum(axis=axes))

    return _make(out, (x, gv, bv), vjp)


_INV_SQRT2 = 1.0 / np.sqrt(2.0)
_INV_SQRT2PI = 1.0 / np.sqrt(2.0 * np.pi)


def gelu(x):
    x = _as_tensor(x)
    cdf = 0.5 * (1.0 + erf(x.data * _INV_SQRT2))
    pdf = _INV_SQRT2PI * np.exp(-0.5 * x.data * x.data)
    return _make(x.data * cdf, (x,), lambda g: (g * (cdf + x.data * pdf),))


def softplus(x):
    x = _as_tensor(x)
    out = np.logaddexp(0.0, x.data)
    sig = 1.0 / (1.0 + np.exp(-x.data))
    return _make(out, (x,), lambda g: (g * sig,))


# ---------------------------------------------------------------------------
# convolutions (channel-first, circular horizontal / zero vertical padding)
# ---------------------------------------------------------------------------

def _pad_chw(x: np.ndarray, ph: int, pw: int, circular_h: bool) -> np.ndarray:
    if ph:
        x = np.pad(x, ((0, 0), (ph, ph), (0, 0)))
    if pw:
        if circular_h:
            x = np.concatenate([x[:, :, -pw:], x, x[:, :, :pw]], axis=2)
        else:
            x = np.pad(x, ((0, 0), (0, 0), (pw, pw)))
    return x


def _unpad_chw(g: np.ndarray, ph: int, pw: int, circular_h: bool) -> np.ndarray:
    if pw:
        w = g.shape[2] - 2 * pw
        core = g[:, :, pw:pw + w].copy()
        if circular_h:
            core[:, :, -pw:] += g[:, :, :pw]
            core[:, :, :pw] += g[:, :, pw + w:]
        g = core
    if ph:
        g = g[:, ph:g.shape[1] - ph, :]
    return g


def conv2d(x, kernel, stride: int = 1, pad_mode: str = "circular_h_zero_v"):
    """Cross-correlation of x[Cin,H,W] with kernel[Cout,Cin,kh,kw].

    Padding is (kh-1)//2 vertically and (kw-1)//2 horizontally, so a stride-1
    3x3 preserves the extent and a stride-2 4x4 halves it.
    """
    x, k = _as_tensor(x), _as_tensor(kernel)
    cout, cin, kh, kw = k.shape
    if cin != x.shape[0]:
        raise ValueError("conv2d: channel mismatch")
    circular = pad_mode == "circular_h_zero_v"
    ph, pw = (kh - 1) // 2, (kw - 1) // 2
    xp = _pad_chw(x.data, ph, pw, circular)
    hp, wp = xp.shape[1], xp.shape[2]
    ho, wo = (hp - kh) // stride + 1, (wp - kw) // stride + 1
    if (hp - kh) % stride or (wp - kw) % stride:
        raise ValueError("conv2d: extent not divisible by stride")
    # im2col: one matmul per conv instead of a tap loop
    windows = np.lib.stride_tricks.sliding_window_view(xp, (kh, kw), axis=(1, 2))
    col = windows[:, ::stride, ::stride].transpose(0, 3, 4, 1, 2).reshape(
        cin * kh * kw, ho * wo)
    out = (k.data.reshape(cout, -1) @ col).reshape(cout, ho, wo)

    def vjp(g):
        gmat = g.reshape(cout, -1)
        gk = (gmat @ col.T).reshape(k.shape)
        gcol = (k.data.reshape(cout, -1).T @ gmat).reshape(cin, kh, kw, ho, wo)
        gxp = np.zeros_like(xp)
        for dy in range(kh):
            for dx in range(kw):
                gxp[:, dy:dy + stride * (ho - 1) + 1:stride,
                    dx:dx + stride * (wo - 1) + 1:stride] += gcol[:, dy, dx]
        return (_unpad_chw(gxp, ph, pw, circular), gk)

    return _make(out, (x, k), vjp)


def conv_transpose2d(x, kernel):
    """Stride-2 2x2 transposed convolution: exact adjoint of the 2x2/stride-2 conv.

    x[Cin,H,W], kernel[Cin,Cout,2,2] -> [Cout,2H,2W].
    """
    x, k = _as_tensor(x), _as_tensor(kernel)
    cin, cout, kh, kw = k.shape
    if (kh, kw) != (2, 2):
        raise ValueError("conv_transpose2d supports only 2x2 kernels")
    if cin != x.shape[0]:
        raise ValueError("conv_transpose2d: channel mismatch")
    _, h, w = x.shape
    out = np.zeros((cout, 2 * h, 2 * w))
    xmat = x.data.reshape(cin, -1)
    for dy in range(2):
        for dx in range(2):
            out[:, dy::2, dx::2] = (k.data[:, :, dy, dx].T @ xmat).reshape(cout, h, w)

    def vjp(g):
        gx = np.zeros_like(x.data)
        gk = np.zeros_like(k.data)
        for dy in range(2):
            for dx in range(2):
                gs = g[:, dy::2, dx::2].reshape(cout, -1)
                gx += (k.data[:, :, dy, dx] @ gs).reshape(x.shape)
                gk[:, :, dy, dx] = xmat @ gs.T
        return (gx, gk)

    return _make(out, (x, k), vjp)


def depthwise_conv3x3(x, kernel):
    """Per-channel 3x3 convolution, circular horizontal / zero vertical pad."""
    x, k = _as_tensor(x), _as_tensor(kernel)
    c, h, w = x.shape
    if k.shape != (c, 3, 3):
        raise ValueError("depthwise kernel must be (C,3,3)")
    xp = _pad_chw(x.data, 1, 1, True)
    out = np.zeros((c, h, w))
    for dy in range(3):
        for dx in range(3):
            out += k.data[:, dy, dx][:, None, None] * xp[:, dy:dy + h, dx:dx + w]

    def vjp(g):
        gk = np.zeros_like(k.data)
        gxp = np.zeros_like(xp)
        for dy in range(3):
            for dx in range(3):
                xs = xp[:, dy:dy + h, dx:dx + w]
                gk[:, dy, dx] = (g * xs).sum(axis=(1, 2))
                gxp[:, dy:dy + h, dx:dx + w] += k.data[:, dy, dx][:, None, None] * g
        return (_unpad_chw(gxp, 1, 1, True), gk)

    return _make(out, (x, k), vjp)


# ---------------------------------------------------------------------------
# continuous-position sampling
# ---------------------------------------------------------------------------

def bilinear_sample(feat, pos):
    """Sample feat[C,H,W] at continuous positions pos[P,2] of (u,v).

    Horizontal wrap (u modulo W), vertical clamp.  Differentiable w.r.t. both
    the feature map and the positions.
    """
    feat, pos = _as_tensor(feat), _as_tensor(pos)
    c, h, w = feat.shape
    u = np.mod(pos.data[:, 0], w)
    v_raw = pos.data[:, 1]
    v = np.clip(v_raw, -0.5, h - 0.5)
    u0 = np.floor(u)
    v0 = np.floor(v)
    fu = u - u0
    fv = v - v0
    c0 = u0.astype(np.int64) % w
    c1 = (c0 + 1) % w
    r0 = np.clip(v0.astype(np.int64), 0, h - 1)
    r1 = np.clip(v0.astype(np.int64) + 1, 0, h - 1)
    f00 = feat.data[:, r0, c0]
    f01 = feat.data[:, r0, c1]
    f10 = feat.data[:, r1, c0]
    f11 = feat.data[:, r1, c1]
    w00 = (1 - fu) * (1 - fv)
    w01 = fu * (1 - fv)
    w10 = (1 - fu) * fv
    w11 = fu * fv
    out = f00 * w00 + f01 * w01 + f10 * w10 + f11 * w11
    v_live = (v_raw > -0.5) & (v_raw < h - 0.5)

    i00 = r0 * w + c0
    i01 = r0 * w + c1
    i10 = r1 * w + c0
    i11 = r1 * w + c1

    def vjp(g):
        # scatter-add via bincount over (channel, pixel) flat indices, one
        # pass per bilinear corner (concatenating them first is much slower)
        chan = np.arange(c)[:, None] * (h * w)
        gf = np.zeros(c * h * w)
        for idx, wc in ((i00, w00), (i01, w01), (i10, w10), (i11, w11)):
            gf += np.bincount((chan + idx[None, :]).ravel(),
                              weights=(g * wc).ravel(), minlength=c * h * w)
        gf = gf.reshape(c, h, w)
        du = ((f01 - f00) * (1 - fv) + (f11 - f10) * fv)
        dv = ((f10 - f00) * (1 - fu) + (f11 - f01) * fu)
        gp = np.stack([(g * du).sum(axis=0),
                       (g * dv).sum(axis=0) * v_live], axis=1)
        return (gf, gp)

    return _make(out, (feat, pos), vjp)


def bmm(a, b):
    """Batched matmul: a[M,N,d] @ b[M,d,e] -> [M,N,e]."""
    a, b = _as_tensor(a), _as_tensor(b)
    return _make(a.data @ b.data, (a, b),
                 lambda g: (g @ b.data.transpose(0, 2, 1),
                            a.data.transpose(0, 2, 1) @ g))


def multihead_sample_pool(v, pos, attn, height: int, width: int):
    """Fused per-head attention pooling over bilinear samples.

    v[N,C] are value tokens of an (height x width) map in row-major order,
    split into M heads of width d = C/M; pos[M,N,9,2] are per-head sampling
    positions (horizontal wrap, vertical clamp, as in bilinear_sample); and
    attn[N,M,9] the attention scores.  Returns [M,N,d] with
    out[m,n] = sum_k attn[n,m,k] * sample(V_m, pos[m,n,k]).
    """
    v, pos, attn = _as_tensor(v), _as_tensor(pos), _as_tensor(attn)
    n, c = v.shape
    m = pos.shape[0]
    d = c // m
    hw = height * width
    if n != hw or pos.shape != (m, n, 9, 2) or attn.shape != (n, m, 9):
        raise ValueError("multihead_sample_pool: inconsistent shapes")
    vg = np.ascontiguousarray(v.data.reshape(hw, m, d).transpose(1, 0, 2))  # (M,HW,d)
    u = np.mod(pos.data[..., 0], width)
    v_raw = pos.data[..., 1]
    vc = np.clip(v_raw, -0.5, height - 0.5)
    u0 = np.floor(u)
    v0 = np.floor(vc)
    fu = u - u0
    fv = vc - v0
    c0 = u0.astype(np.int64) % width
    c1 = (c0 + 1) % width
    r0 = np.clip(v0.astype(np.int64), 0, height - 1)
    r1 = np.clip(v0.astype(np.int64) + 1, 0, height - 1)
    i00 = r0 * width + c0
    i01 = r0 * width + c1
    i10 = r1 * width + c0
    i11 = r1 * width + c1
    midx = np.arange(m)[:, None, None]
    f00 = vg[midx, i00]
    f01 = vg[midx, i01]
    f10 = vg[midx, i10]
    f11 = vg[midx, i11]
    w00 = ((1 - fu) * (1 - fv))[..., None]
    w01 = (fu * (1 - fv))[..., None]
    w10 = ((1 - fu) * fv)[..., None]
    w11 = (fu * fv)[..., None]
    samples = f00 * w00 + f01 * w01 + f10 * w10 + f11 * w11   # (M,N,9,d)
    att = np.ascontiguousarray(attn.data.transpose(1, 0, 2))  # (M,N,9)
    out = (samples * att[..., None]).sum(axis=2)              # (M,N,d)
    v_live = (v_raw > -0.5) & (v_raw < height - 0.5)

    def vjp(g):
        gexp = g[:, :, None, :]                               # (M,N,1,d)
        gattn = (gexp * samples).sum(-1).transpose(1, 0, 2)
        gsam = att[..., None] * gexp                          # (M,N,9,d)
        base = (midx * d)[..., None] + np.arange(d)           # channel offsets of head m
        gv = np.zeros(n * c)
        for itok, wc in ((i00, w00), (i01, w01), (i10, w10), (i11, w11)):
            gv += np.bincount(((itok * c)[..., None] + base).ravel(),
                              weights=(gsam * wc).ravel(), minlength=n * c)
        gv = gv.reshape(n, c)
        du = (gsam * ((f01 - f00) * (1 - fv)[..., None]
                      + (f11 - f10) * fv[..., None])).sum(-1)
        dv = (gsam * ((f10 - f00) * (1 - fu)[..., None]
                      + (f11 - f01) * fu[..., None])).sum(-1) * v_live
        return (gv, np.stack([du, dv], axis=-1), gattn)

    return _make(out, (v, pos, attn), vjp)


# ---------------------------------------------------------------------------
# finite-difference checking
# ---------------------------------------------------------------------------

class GradcheckKinkError(RuntimeError):
    """A finite-difference probe straddled a non-differentiable point."""


def gradcheck(fn, inputs, step: float = 1e-6, max_entries_per_input: int | None = None,
              rng: np.random.Generator | None = None) -> float:
    """Compare reverse-mode gradients of a scalar ``fn(*inputs)`` against
    central finite differences.

    Returns the max relative error over the probed entries.  When
    ``max_entries_per_input`` is set, a random subset of entries is probed
    per input (needed to keep whole-model checks fast).
    """
    inputs = [_as_tensor(x) for x in inputs]
    for x in inputs:
        x.requires_grad = True
        x.zero_grad()
    out = fn(*inputs)
    out.backward()
    analytic = [x.grad.copy() if x.grad is not None else np.zeros_like(x.data)
                for x in inputs]
    if rng is None:
        rng = np.random.default_rng(0)
    worst = 0.0
    for x, an in zip(inputs, analytic):
        flat = x.data.reshape(-1)
        n = flat.size
        if max_entries_per_input is not None and n > max_entries_per_input:
            idxs = rng.choice(n, size=max_entries_per_input, replace=False)
        else:
            idxs = range(n)
        base = out.item()
        for i in idxs:
            orig = flat[i]
            flat[i] = orig + step
            fp = fn(*inputs).item()
            flat[i] = orig - step
            fm = fn(*inputs).item()
            flat[i] = orig
            num = (fp - fm) / (2.0 * step)
            sp = (fp - base) / step
            sm = (base - fm) / step
            mag = max(abs(sp), abs(sm))
            if mag > 1e-3 and abs(sp - sm) > 0.2 * mag and abs(sp - sm) > 100 * step * max(1.0, mag):
                raise GradcheckKinkError(
                    f"one-sided slopes disagree ({sp:.6g} vs {sm:.6g}) at entry {i}")
            a = an.reshape(-1)[i]
            err = abs(a - num) / max(abs(a), abs(num), 1e-3)
            worst = max(worst, err)
    return worst
