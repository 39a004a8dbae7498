"""Tiled inference: disjoint output cores driven by overlapping context windows.

Inference models want spatial context, but predictions near a window border
are unreliable.  The plan therefore covers the extent with disjoint core
windows and hands the predictor an enlarged context window per core; the
border predictions are discarded and each output pixel is owned by exactly
one core.  With the default 312 px cores and 100 px margins, interior
context windows are 512 x 512.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import StructuralError
from .raster import MultiBandRaster, Window, extract_window

DEFAULT_CORE_SIZE = 312
DEFAULT_CONTEXT_MARGIN = 100

Predictor = Callable[[MultiBandRaster], np.ndarray]


@dataclass(frozen=True)
class Tile:
    core: Window
    context: Window


@dataclass
class TilePlan:
    extent_w: int
    extent_h: int
    core_size: int
    context_margin: int
    tiles: list[Tile] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "extent": [self.extent_w, self.extent_h],
            "core_size": self.core_size,
            "context_margin": self.context_margin,
            "tiles": [
                {
                    "core": [t.core.x0, t.core.y0, t.core.width, t.core.height],
                    "context": [t.context.x0, t.context.y0, t.context.width, t.context.height],
                }
                for t in self.tiles
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "TilePlan":
        plan = cls(
            extent_w=int(data["extent"][0]),
            extent_h=int(data["extent"][1]),
            core_size=int(data["core_size"]),
            context_margin=int(data["context_margin"]),
        )
        for t in data["tiles"]:
            plan.tiles.append(Tile(core=Window(*t["core"]), context=Window(*t["context"])))
        return plan


def plan_tiles(
    extent_w: int,
    extent_h: int,
    core_size: int = DEFAULT_CORE_SIZE,
    context_margin: int = DEFAULT_CONTEXT_MARGIN,
) -> TilePlan:
    """Row-major core grid over the extent, final row/column truncated to fit.

    Every context window is its core expanded by the margin on each side;
    parts reaching past the extent are filled with nodata at extraction
    time rather than clipped here.
    """
    if extent_w < 1 or extent_h < 1:
        raise ValueError(f"extent must be at least 1x1, got {extent_w}x{extent_h}")
    if core_size < 1 or context_margin < 0:
        raise ValueError("core_size must be positive and context_margin nonnegative")
    plan = TilePlan(extent_w, extent_h, core_size, context_margin)
    for y0 in range(0, extent_h, core_size):
        for x0 in range(0, extent_w, core_size):
            core = Window(
                x0, y0, min(core_size, extent_w - x0), min(core_size, extent_h - y0)
            )
            plan.tiles.append(Tile(core=core, context=core.expanded(context_margin)))
    return plan


def predict_mosaic(
    plan: TilePlan, raster: MultiBandRaster, predictor: Predictor
) -> MultiBandRaster:
    """Run the predictor per context window and mosaic the core regions.

    The output pixel at (x, y) always comes from the unique tile whose core
    contains it; the context border predictions are dropped.  Tiles are
    independent, so any execution order produces the same mosaic.
    """
    if (raster.width, raster.height) != (plan.extent_w, plan.extent_h):
        raise StructuralError(
            f"raster extent {raster.width}x{raster.height} does not match "
            f"plan extent {plan.extent_w}x{plan.extent_h}"
        )
    mosaic = np.full((plan.extent_h, plan.extent_w), np.nan, dtype=np.float32)
    for tile in plan.tiles:
        context = extract_window(raster, tile.context, pad_policy="nodata-pad")
        prediction = np.asarray(predictor(context))
        if prediction.shape != (context.height, context.width):
            raise StructuralError(
                f"predictor returned {prediction.shape} for a "
                f"{context.height}x{context.width} context window"
            )
        cx = tile.core.x0 - tile.context.x0
        cy = tile.core.y0 - tile.context.y0
        mosaic[tile.core.y0 : tile.core.y1, tile.core.x0 : tile.core.x1] = prediction[
            cy : cy + tile.core.height, cx : cx + tile.core.width
        ]
    return MultiBandRaster(mosaic, None, raster.georef)


def identity_band_predictor(band: int = 0) -> Predictor:
    """Passes one input band through unchanged (a test predictor)."""
    return lambda raster: raster.band(band)


def constant_predictor(value: float) -> Predictor:
    return lambda raster: np.full((raster.height, raster.width), value, dtype=np.float32)


def linear_predictor(weights: list[float], bias: float = 0.0) -> Predictor:
    """Pixelwise linear combination of the input bands (a test predictor)."""

    def predict(raster: MultiBandRaster) -> np.ndarray:
        if len(weights) != raster.bands:
            raise StructuralError(f"{len(weights)} weights for {raster.bands} bands")
        out = np.full((raster.height, raster.width), bias, dtype=np.float64)
        for w, band in zip(weights, raster.values):
            out += w * band
        return out.astype(np.float32)

    return predict
