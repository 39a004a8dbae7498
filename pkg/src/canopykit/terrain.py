"""Terrain slope from surface-elevation rasters and steep-slope label filtering.

Slope at a pixel is the elevation range (max minus min) over the centered
5x5 window, taken against the full window extent as the run.  At 30 m
pixels the run is 150 m, so a 40 m range works out to roughly 15 degrees.
This range-over-extent definition is deliberately conservative: a forest
edge shows up as a height step in surface elevation, and the 20 degree
default threshold leaves such edges alone.
"""

from __future__ import annotations

import math

import numpy as np
from scipy import ndimage

from .errors import StructuralError
from .raster import MultiBandRaster
from .gedi import GediShot

SLOPE_WINDOW = 5
DEFAULT_SLOPE_THRESHOLD_DEG = 20.0


def slope_5x5(elevation: MultiBandRaster) -> MultiBandRaster:
    """Slope in degrees from a single-band elevation raster.

    A pixel's slope is ``atan(range / run)`` with the range taken over the
    centered 5x5 window and ``run = 5 * pixel_size``.  Pixels whose window
    is truncated by the border, or touches any invalid elevation, come back
    invalid.
    """
    if elevation.bands != 1:
        raise StructuralError(f"elevation raster must have one band, got {elevation.bands}")
    dem = elevation.band(0).astype(np.float64)
    run = SLOPE_WINDOW * elevation.georef.pixel_size

    # Invalid cells poison the window extremes; substitute +-inf and knock
    # the affected windows out afterwards.
    hi = np.where(elevation.valid, dem, -np.inf)
    lo = np.where(elevation.valid, dem, np.inf)
    wmax = ndimage.maximum_filter(hi, size=SLOPE_WINDOW, mode="constant", cval=-np.inf)
    wmin = ndimage.minimum_filter(lo, size=SLOPE_WINDOW, mode="constant", cval=np.inf)

    window_ok = ndimage.minimum_filter(
        elevation.valid.astype(np.uint8), size=SLOPE_WINDOW, mode="constant", cval=0
    ).astype(bool)
    with np.errstate(invalid="ignore"):
        slope = np.degrees(np.arctan((wmax - wmin) / run))
    slope[~window_ok] = np.nan
    return MultiBandRaster(slope.astype(np.float32), window_ok, elevation.georef)


def filter_by_slope(
    shots: list[GediShot],
    slope: MultiBandRaster,
    threshold_deg: float = DEFAULT_SLOPE_THRESHOLD_DEG,
) -> tuple[list[GediShot], int]:
    """Drop shots whose containing slope pixel exceeds the threshold.

    A shot sitting exactly on the threshold is kept ("exceeds" is strict).
    Shots over invalid slope pixels or outside the grid are kept, fail-open,
    and counted in the returned unknown-slope tally so missing elevation
    tiles degrade gracefully.
    """
    grid = slope.band(0)
    kept = []
    n_unknown = 0
    for shot in shots:
        px, py = slope.georef.geo_to_pixel(shot.x, shot.y)
        if not (0 <= px < slope.width and 0 <= py < slope.height) or not slope.valid[py, px]:
            n_unknown += 1
            kept.append(shot)
            continue
        if not grid[py, px] > threshold_deg:
            kept.append(shot)
    return kept, n_unknown
