"""Canopy-height mapping toolkit.

Library and CLI for the desk-scale canopy-height pipeline: median
composites with cloud/shadow masking, LiDAR shot filtering and
rasterization, terrain-slope label filtering, the shift-resilient training
loss with analytic gradients, deterministic dataset splitting, tiled
inference mosaicking, and the evaluation metric suite.
"""

__version__ = "0.1.0"

from .raster import GeoRef, MultiBandRaster, Window, extract_window, read_raster, write_raster
from .composite import MaskParams, Scene, mask_scene, median_composite, s1_four_channel, scene_admissible
from .gedi import (
    GediFilterConfig, GediShot, GediTrack, SparseLabels,
    filter_shots, group_tracks, label_stats, rasterize_tracks,
)
from .terrain import filter_by_slope, slope_5x5
from .shiftloss import (
    LossReport, PixelLoss, Shift, ShiftLossConfig,
    loss_ns, loss_s, loss_s_grad, shift_candidates,
)
from .sampler import PatchWeight, assign_split, compute_weights
from .evaluate import BinStats, MetricsReport, PairSet, bin_errors, compute_metrics, scatter_summary
from .tiler import TilePlan, plan_tiles, predict_mosaic

__all__ = [
    "GeoRef", "MultiBandRaster", "Window", "extract_window", "read_raster", "write_raster",
    "MaskParams", "Scene", "mask_scene", "median_composite", "s1_four_channel", "scene_admissible",
    "GediFilterConfig", "GediShot", "GediTrack", "SparseLabels",
    "filter_shots", "group_tracks", "label_stats", "rasterize_tracks",
    "filter_by_slope", "slope_5x5",
    "LossReport", "PixelLoss", "Shift", "ShiftLossConfig",
    "loss_ns", "loss_s", "loss_s_grad", "shift_candidates",
    "PatchWeight", "assign_split", "compute_weights",
    "BinStats", "MetricsReport", "PairSet", "bin_errors", "compute_metrics", "scatter_summary",
    "TilePlan", "plan_tiles", "predict_mosaic",
]
