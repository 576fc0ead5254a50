"""End-to-end Temporal ROI Align for a set of proposals on one target frame."""

from __future__ import annotations

import bisect
from dataclasses import dataclass

import numpy as np

from . import reference
from .ms_roi_align import DEFAULT_TOP_K, most_similar_roi_align, most_similar_roi_align_loop
from .prng import SplitMix64
from .roi import DEFAULT_POOL, DEFAULT_SAMPLING_RATIO, RoiBox, roi_align
from .sampling import DEFAULT_STRATEGY, DEFAULT_SUPPORT, SamplingPlan, Strategy, sample_support_frames
from .tafa import DEFAULT_BLOCKS, ConvParams, TemporalRoiStack, init_params, tafa_forward, tafa_forward_loop


@dataclass
class RunConfig:
    k: int = DEFAULT_TOP_K
    blocks: int = DEFAULT_BLOCKS
    pool: int = DEFAULT_POOL
    num_support: int = DEFAULT_SUPPORT
    strategy: Strategy = DEFAULT_STRATEGY
    stride: int = 1
    sampling_ratio: int = DEFAULT_SAMPLING_RATIO
    seed: int = 0
    dtype: str = "f64"

    def __post_init__(self):
        self.strategy = Strategy(self.strategy)
        if self.dtype not in ("f32", "f64"):
            raise ValueError(f"dtype must be f32 or f64, got {self.dtype}")
        for name in ("k", "blocks", "pool", "sampling_ratio", "stride"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.num_support < 0:
            raise ValueError("num_support must be >= 0")

    @property
    def np_dtype(self):
        return np.float32 if self.dtype == "f32" else np.float64

    def plan(self, length: int, target: int) -> SamplingPlan:
        return sample_support_frames(length, target, self.num_support, self.strategy, self.stride)


def target_position(plan: SamplingPlan) -> int:
    """Slot of the target inside the stack: after supports with smaller frame index."""
    return bisect.bisect_left(plan.indices, plan.target)


@dataclass
class ProposalResult:
    features: np.ndarray  # (h, w, C)
    attention: np.ndarray  # (N, F, h, w)

    def attention_entropy(self) -> float:
        """Mean over blocks and positions of the entropy of the frame weights."""
        w = self.attention
        ent = -np.sum(np.where(w > 0, w * np.log(np.where(w > 0, w, 1.0)), 0.0), axis=1)
        return float(ent.mean())


def temporal_roi_align(frames, target: int, box: RoiBox, params: list[ConvParams], config: RunConfig,
                       vectorized: bool = True) -> ProposalResult:
    """ROI Align on the target, MS ROI Align on every support frame, then TAFA."""
    plan = config.plan(len(frames), target)
    roi = roi_align(frames[target], box, config.pool, config.pool, config.sampling_ratio)
    ms = most_similar_roi_align if vectorized else most_similar_roi_align_loop
    support = [ms(roi, frames[i], config.k) for i in plan.indices]
    slot = target_position(plan)
    stack = TemporalRoiStack(support[:slot] + [roi] + support[slot:], slot)
    if vectorized:
        out, weights = tafa_forward(stack, params, return_weights=True)
    else:
        out = tafa_forward_loop(stack, params)
        _, weights = tafa_forward(stack, params, return_weights=True)
    return ProposalResult(out, weights)


def run_proposals(frames, target: int, boxes, params, config: RunConfig, vectorized: bool = True):
    return [temporal_roi_align(frames, target, b, params, config, vectorized) for b in boxes]


def reference_temporal_roi_align(frames, target: int, box: RoiBox, params: list[ConvParams],
                                 config: RunConfig) -> np.ndarray:
    """Naive-oracle run of the same pipeline, converted back to an array."""
    plan = config.plan(len(frames), target)
    out = reference.temporal_roi_align(
        [np.asarray(f).tolist() for f in frames],
        target,
        (box.x1, box.y1, box.x2, box.y2),
        list(plan.indices),
        [(p.weight.tolist(), p.bias.tolist()) for p in params],
        config.k, config.pool, config.pool, config.sampling_ratio,
    )
    return np.asarray(out, dtype=np.float64)


def make_params(channels: int, config: RunConfig) -> list[ConvParams]:
    """Seeded embedding parameters; the stream is offset from the feature stream."""
    rng = SplitMix64((config.seed ^ 0x5EED_C0DE_7A7A_0001) & 0xFFFFFFFFFFFFFFFF)
    return init_params(channels, config.blocks, rng, dtype=config.np_dtype)
