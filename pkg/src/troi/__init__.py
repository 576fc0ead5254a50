"""Temporal ROI Align: most-similar cross-frame ROI features plus temporal attention."""

from .ms_roi_align import (
    SimilarityResult,
    most_similar_roi_align,
    most_similar_roi_align_loop,
    similarity_map,
    top_k,
    weight_and_gather,
)
from .pipeline import RunConfig, make_params, temporal_roi_align
from .roi import RoiBox, bilinear_sample, roi_align
from .sampling import SamplingPlan, Strategy, sample_support_frames
from .tafa import ConvParams, TemporalRoiStack, aggregate_average, init_params, tafa_forward

__all__ = [
    "ConvParams",
    "RoiBox",
    "RunConfig",
    "SamplingPlan",
    "SimilarityResult",
    "Strategy",
    "TemporalRoiStack",
    "aggregate_average",
    "bilinear_sample",
    "init_params",
    "make_params",
    "most_similar_roi_align",
    "most_similar_roi_align_loop",
    "roi_align",
    "sample_support_frames",
    "similarity_map",
    "tafa_forward",
    "temporal_roi_align",
    "top_k",
    "weight_and_gather",
]
