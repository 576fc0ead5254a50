"""Temporal attentional feature aggregation over a stack of ROI features.

Channels are split into N groups. Each group owns a 3x3 convolution that
embeds every frame; per-position dot products between each frame's embedding
and the target's embedding are softmax-normalized across frames and used to
mix the *raw* group features. The aggregated groups are concatenated back.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .tensor import seq_dot, seq_sum, softmax, softmax_vjp

DEFAULT_BLOCKS = 4
WEIGHT_SUM_TOL = 1e-9


@dataclass
class ConvParams:
    """One 3x3 embedding conv: ``weight`` is (3, 3, C_in, C_out), ``bias`` is (C_out,)."""

    weight: np.ndarray
    bias: np.ndarray

    def __post_init__(self):
        self.weight = np.asarray(self.weight)
        self.bias = np.asarray(self.bias)
        if self.weight.ndim != 4 or self.weight.shape[:2] != (3, 3):
            raise ValueError(f"conv weight must be (3, 3, Cin, Cout), got {self.weight.shape}")
        if self.bias.shape != (self.weight.shape[3],):
            raise ValueError("bias length must equal output channels")
        if not (np.all(np.isfinite(self.weight)) and np.all(np.isfinite(self.bias))):
            raise ValueError("non-finite conv parameters")

    @classmethod
    def identity(cls, channels: int, dtype=np.float64) -> "ConvParams":
        weight = np.zeros((3, 3, channels, channels), dtype=dtype)
        weight[1, 1] = np.eye(channels, dtype=dtype)
        return cls(weight, np.zeros(channels, dtype=dtype))

    @classmethod
    def zeros(cls, channels: int, dtype=np.float64) -> "ConvParams":
        return cls(np.zeros((3, 3, channels, channels), dtype=dtype), np.zeros(channels, dtype=dtype))


@dataclass
class TemporalRoiStack:
    """Ordered ROI features of the target and its support frames, all (h, w, C)."""

    frames: list
    target_index: int = 0
    _array: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        if len(self.frames) == 0:
            raise ValueError("empty ROI stack")
        arr = np.stack([np.asarray(f) for f in self.frames])
        if arr.ndim != 4:
            raise ValueError("stack entries must be (h, w, C)")
        if not 0 <= self.target_index < len(self.frames):
            raise ValueError(f"target_index {self.target_index} out of range")
        self._array = arr

    @property
    def array(self) -> np.ndarray:
        return self._array

    @property
    def target(self) -> np.ndarray:
        return self._array[self.target_index]

    def __len__(self):
        return len(self.frames)


def init_params(channels: int, blocks: int = DEFAULT_BLOCKS, rng=None, dtype=np.float64) -> list[ConvParams]:
    """Independent uniform(-a, a) conv parameters per block, a = 1/sqrt(9 * C/N).

    ``rng`` is anything with ``uniform(low, high, size)``; defaults to a seeded
    :class:`troi.prng.SplitMix64`.
    """
    from .prng import SplitMix64

    if channels % blocks:
        raise ValueError(f"{blocks} blocks do not divide {channels} channels")
    rng = rng if rng is not None else SplitMix64(0)
    cg = channels // blocks
    bound = 1.0 / np.sqrt(9.0 * cg)
    params = []
    for _ in range(blocks):
        weight = np.asarray(rng.uniform(-bound, bound, size=(3, 3, cg, cg)), dtype=dtype)
        bias = np.asarray(rng.uniform(-bound, bound, size=(cg,)), dtype=dtype)
        params.append(ConvParams(weight, bias))
    return params


def channel_split(x, blocks: int) -> list[np.ndarray]:
    x = np.asarray(x)
    channels = x.shape[-1]
    if blocks < 1 or channels % blocks:
        raise ValueError(f"{blocks} groups do not divide {channels} channels")
    cg = channels // blocks
    return [x[..., n * cg:(n + 1) * cg] for n in range(blocks)]


def channel_concat(groups) -> np.ndarray:
    return np.concatenate(list(groups), axis=-1)


# ---------------------------------------------------------------------------
# 3x3 embedding


def embed(x, params: ConvParams) -> np.ndarray:
    """3x3 conv, stride 1, zero padding 1, plus bias; no activation.

    ``x`` is (h, w, Cin) or a batch (F, h, w, Cin).
    """
    x = np.asarray(x)
    weight, bias = params.weight, params.bias
    if x.shape[-1] != weight.shape[2]:
        raise ValueError(f"embed: input has {x.shape[-1]} channels, kernel expects {weight.shape[2]}")
    single = x.ndim == 3
    if single:
        x = x[None]
    frames, h, w, cin = x.shape
    dtype = np.result_type(x, weight)
    # channel-major padded copy so every tap reads one contiguous plane
    pad = np.zeros((cin, frames, h + 2, w + 2), dtype=dtype)
    pad[:, :, 1:-1, 1:-1] = np.moveaxis(x, -1, 0)
    acc = np.zeros((frames, h, w, weight.shape[3]), dtype=dtype)
    tmp = np.empty_like(acc)
    plane = np.empty((frames, h, w, 1), dtype=dtype)
    for dy in range(3):
        for dx in range(3):
            for ci in range(cin):
                plane[..., 0] = pad[ci, :, dy:dy + h, dx:dx + w]
                np.multiply(plane, weight[dy, dx, ci], out=tmp)
                acc += tmp
    out = acc + bias
    return out[0] if single else out


def embed_vjp(g, x, params: ConvParams) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Return ``(dx, d_weight, d_bias)`` for :func:`embed`."""
    x = np.asarray(x)
    g = np.asarray(g)
    single = x.ndim == 3
    if single:
        x, g = x[None], g[None]
    _, h, w, _ = x.shape
    pad = np.pad(x, ((0, 0), (1, 1), (1, 1), (0, 0)))
    d_pad = np.zeros_like(pad)
    d_weight = np.zeros_like(params.weight)
    for dy in range(3):
        for dx in range(3):
            window = pad[:, dy:dy + h, dx:dx + w]
            d_weight[dy, dx] = np.einsum("fyxi,fyxo->io", window, g)
            d_pad[:, dy:dy + h, dx:dx + w] += np.einsum("fyxo,io->fyxi", g, params.weight[dy, dx])
    dx_ = d_pad[:, 1:-1, 1:-1]
    d_bias = g.sum(axis=(0, 1, 2))
    return (dx_[0] if single else dx_), d_weight, d_bias


# ---------------------------------------------------------------------------
# attention and aggregation


def temporal_attention_weights(embedded, target_index: int) -> np.ndarray:
    """Softmax across frames of per-position dot products with the target embedding.

    ``embedded`` is (F, h, w, c) or a list of (h, w, c); returns (F, h, w).
    """
    emb = np.stack(list(embedded)) if isinstance(embedded, (list, tuple)) else np.asarray(embedded)
    if emb.ndim != 4:
        raise ValueError("embedded groups must be (h, w, c) each")
    if not 0 <= target_index < emb.shape[0]:
        raise ValueError(f"target_index {target_index} out of range")
    scores = seq_dot(emb, emb[target_index][None])
    return softmax(scores, axis=0)


def temporal_attention_weights_vjp(g, embedded, target_index: int) -> np.ndarray:
    emb = np.stack(list(embedded)) if isinstance(embedded, (list, tuple)) else np.asarray(embedded)
    weights = temporal_attention_weights(emb, target_index)
    d_scores = softmax_vjp(np.asarray(g), weights, axis=0)
    d_emb = d_scores[..., None] * emb[target_index][None]
    d_emb[target_index] += np.sum(d_scores[..., None] * emb, axis=0)
    return d_emb


def aggregate(groups, weights) -> np.ndarray:
    """Per-position convex combination of the frames' raw group features."""
    groups = np.stack(list(groups)) if isinstance(groups, (list, tuple)) else np.asarray(groups)
    weights = np.asarray(weights)
    if weights.shape != groups.shape[:3]:
        raise ValueError(f"weights {weights.shape} do not match groups {groups.shape[:3]}")
    total = seq_sum(weights, axis=0)
    tol = max(WEIGHT_SUM_TOL, 64 * float(np.finfo(total.dtype).eps))
    if np.max(np.abs(total - 1.0)) > tol:
        raise ValueError("aggregate: frame weights are not normalized per position")
    return seq_sum(weights[..., None] * groups, axis=0)


def aggregate_vjp(g, groups, weights) -> tuple[np.ndarray, np.ndarray]:
    groups = np.stack(list(groups)) if isinstance(groups, (list, tuple)) else np.asarray(groups)
    weights = np.asarray(weights)
    g = np.asarray(g)
    return weights[..., None] * g[None], np.sum(groups * g[None], axis=-1)


def aggregate_average(stack: TemporalRoiStack) -> np.ndarray:
    """Arithmetic mean over frames (the averaging baseline)."""
    arr = stack.array
    return seq_sum(arr, axis=0) / arr.dtype.type(arr.shape[0])


# ---------------------------------------------------------------------------
# full block


def _check_params(params, channels: int):
    if len(params) < 1 or channels % len(params):
        raise ValueError(f"{len(params)} blocks do not divide {channels} channels")
    cg = channels // len(params)
    for p in params:
        if p.weight.shape != (3, 3, cg, cg):
            raise ValueError(f"block kernel {p.weight.shape} does not match group width {cg}")


def tafa_forward(stack: TemporalRoiStack, params: list[ConvParams], return_weights: bool = False):
    """Aggregate the stack into temporal ROI features with the target's dims.

    With ``return_weights`` the (N, F, h, w) attention weights are returned too.
    """
    arr = stack.array
    _check_params(params, arr.shape[-1])
    outs, all_weights = [], []
    for group, p in zip(channel_split(arr, len(params)), params):
        weights = temporal_attention_weights(embed(group, p), stack.target_index)
        outs.append(aggregate(group, weights))
        all_weights.append(weights)
    out = channel_concat(outs)
    if return_weights:
        return out, np.stack(all_weights)
    return out


def tafa_forward_loop(stack: TemporalRoiStack, params: list[ConvParams]) -> np.ndarray:
    """Frame-by-frame, block-by-block variant of :func:`tafa_forward`."""
    _check_params(params, stack.array.shape[-1])
    blocks = len(params)
    split = [channel_split(f, blocks) for f in stack.frames]
    outs = []
    for n, p in enumerate(params):
        groups = [np.asarray(s[n]) for s in split]
        embedded = [embed(gr, p) for gr in groups]
        outs.append(aggregate(groups, temporal_attention_weights(embedded, stack.target_index)))
    return channel_concat(outs)


def tafa_forward_vjp(g, stack: TemporalRoiStack, params: list[ConvParams]):
    """Return ``(d_frames, d_params)``.

    ``d_frames`` is (F, h, w, C); ``d_params`` a list of ConvParams holding
    gradients for each block.
    """
    arr = stack.array
    _check_params(params, arr.shape[-1])
    t = stack.target_index
    g_groups = channel_split(np.asarray(g), len(params))
    d_groups, d_params = [], []
    for group, gg, p in zip(channel_split(arr, len(params)), g_groups, params):
        emb = embed(group, p)
        weights = temporal_attention_weights(emb, t)
        d_group, d_weights = aggregate_vjp(gg, group, weights)
        d_emb = temporal_attention_weights_vjp(d_weights, emb, t)
        d_x, d_w, d_b = embed_vjp(d_emb, group, p)
        d_groups.append(d_group + d_x)
        d_params.append(ConvParams(d_w, d_b))
    return channel_concat(d_groups), d_params
