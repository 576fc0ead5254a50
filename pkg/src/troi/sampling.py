"""Support-frame sampling plans: consecutive, fixed stride, uniform over the video."""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum


class Strategy(str, Enum):
    CONSECUTIVE = "consecutive"
    STRIDED = "strided"
    UNIFORM = "uniform"


DEFAULT_STRATEGY = Strategy.UNIFORM
DEFAULT_SUPPORT = 14


@dataclass(frozen=True)
class SamplingPlan:
    indices: tuple[int, ...]
    strategy: Strategy
    num_support: int
    video_length: int
    target: int
    stride: int = 1

    def __len__(self):
        return len(self.indices)


def _round_half_up(num: int, den: int) -> int:
    # exact round-half-away-from-zero of num/den for num, den >= 0
    return (2 * num + den) // (2 * den)


def sample_support_frames(length: int, target: int, num_support: int,
                          strategy: Strategy | str = DEFAULT_STRATEGY, stride: int = 1) -> SamplingPlan:
    """Support-frame indices for ``target`` in a video of ``length`` frames.

    Symmetric strategies take offsets -T/2..-1, 1..T/2 (times ``stride``) and
    clamp out-of-range frames to the first/last frame. The uniform strategy
    spreads T indices over [0, L-1], endpoints included, and may coincide
    with the target.
    """
    strategy = Strategy(strategy)
    if length < 1:
        raise ValueError("empty video")
    if not 0 <= target < length:
        raise ValueError(f"target {target} outside video of length {length}")
    if num_support < 0:
        raise ValueError("number of support frames must be >= 0")
    if stride < 1:
        raise ValueError("stride must be >= 1")

    if strategy is Strategy.UNIFORM:
        if num_support == 0:
            idx = []
        elif num_support == 1:
            idx = [0]
        else:
            idx = [_round_half_up(j * (length - 1), num_support - 1) for j in range(num_support)]
    else:
        if num_support % 2:
            raise ValueError(f"{strategy.value} sampling needs an even number of support frames")
        step = 1 if strategy is Strategy.CONSECUTIVE else stride
        half = num_support // 2
        offsets = list(range(-half, 0)) + list(range(1, half + 1))
        idx = [min(max(target + i * step, 0), length - 1) for i in offsets]
    return SamplingPlan(tuple(idx), strategy, num_support, length, target, stride)
