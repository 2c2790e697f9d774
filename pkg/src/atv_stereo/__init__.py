"""Multi-view stereo with uncertainty-driven adaptive thin volumes.

A three-stage plane-sweep cascade over deterministic filter-bank features.
Each stage turns its probability volume into a per-pixel confidence
interval, and the next stage samples a thin volume inside that interval.
"""

from .cascade import CascadeConfig, StageOutput, run_cascade
from .costvol import CostVolume, HypothesisVolume, build_cost_volume, uniform_hypotheses
from .errors import InputError, ParseError, PipelineError, StatisticsError
from .evalkit import ReconstructionScore, accuracy_completeness, depth_error
from .features import FeatureConfig, FeatureMap, build_feature_pyramid
from .fusion import FusionConfig, PointCloud, fuse_depth_maps
from .geometry import CameraModel, compose_warp, warp_pixel
from .probability import DepthEstimate, ProbabilityVolume
from .uncertainty import IntervalMap, UncertaintyStats, confidence_interval, uncertainty_stats

__version__ = "0.1.0"

__all__ = [
    "CameraModel",
    "CascadeConfig",
    "CostVolume",
    "DepthEstimate",
    "FeatureConfig",
    "FeatureMap",
    "FusionConfig",
    "HypothesisVolume",
    "InputError",
    "IntervalMap",
    "ParseError",
    "PipelineError",
    "PointCloud",
    "ProbabilityVolume",
    "ReconstructionScore",
    "StageOutput",
    "StatisticsError",
    "UncertaintyStats",
    "accuracy_completeness",
    "build_cost_volume",
    "build_feature_pyramid",
    "compose_warp",
    "confidence_interval",
    "depth_error",
    "fuse_depth_maps",
    "run_cascade",
    "uncertainty_stats",
    "uniform_hypotheses",
    "warp_pixel",
]
