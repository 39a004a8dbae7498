"""Tile-disjoint dataset splitting and height-balanced sample weighting.

Splitting hashes the tile id mixed with a seed onto [0, 1) and cuts at the
cumulative ratios, so every patch of a tile inherits the same label, the
assignment is independent of input order, and the empirical fractions track
the targets in expectation.

Weighting counters the skew of the label distribution (low vegetation
dominates): a patch is weighted by the inverse frequency of its mean-height
bin, clipped so a near-empty bin cannot dominate a batch.  Weighted
sampling is a configurable policy and is off by default in the pipeline.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

SPLIT_NAMES = ("train", "val", "test")
DEFAULT_RATIOS = (0.8, 0.1, 0.1)
WEIGHT_CLIP = (0.1, 10.0)


@dataclass(frozen=True)
class PatchWeight:
    patch_id: str
    weight: float


def _unit_hash(tile_id: str, seed: int) -> float:
    digest = hashlib.sha256(f"{seed}:{tile_id}".encode("utf-8")).digest()
    return int.from_bytes(digest[:8], "big") / 2**64


def assign_split(
    tile_id: str,
    ratios: tuple[float, float, float] = DEFAULT_RATIOS,
    seed: int = 0,
) -> str:
    """Deterministic train/val/test label for a tile id."""
    if len(ratios) != len(SPLIT_NAMES):
        raise ValueError(f"need {len(SPLIT_NAMES)} ratios, got {len(ratios)}")
    if any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be nonnegative and sum to 1, got {ratios}")
    u = _unit_hash(tile_id, seed)
    acc = 0.0
    for name, ratio in zip(SPLIT_NAMES, ratios):
        acc += ratio
        if u < acc:
            return name
    return SPLIT_NAMES[-1]


def compute_weights(
    patch_stats: list[tuple[str, float]], bin_width: float = 10.0
) -> list[PatchWeight]:
    """Inverse-bin-frequency weights from (patch_id, mean height) stats.

    Weights are scaled to mean 1, clipped to ``WEIGHT_CLIP``, and rescaled
    to mean 1, so downstream samplers can use them directly as relative
    draw probabilities.
    """
    if not patch_stats:
        raise ValueError("patch_stats is empty")
    if bin_width <= 0:
        raise ValueError(f"bin_width must be positive, got {bin_width}")
    bins = np.array([math.floor(mean / bin_width) for _, mean in patch_stats])
    _, inverse, counts = np.unique(bins, return_inverse=True, return_counts=True)

    # Inverse bin frequency scaled to mean 1; the mean of 1/count over all
    # patches is exactly n_bins/N, so fold it in analytically.
    n = len(patch_stats)
    weights = n / (len(counts) * counts[inverse].astype(np.float64))
    clipped = np.clip(weights, *WEIGHT_CLIP)
    if not np.array_equal(clipped, weights):
        clipped = clipped / clipped.mean()
    return [
        PatchWeight(patch_id, float(w))
        for (patch_id, _), w in zip(patch_stats, clipped)
    ]
