"""Deterministic synthetic fixtures: scenes, terrain, and shifted GEDI tracks.

Real composites, LiDAR archives, and elevation tiles are not shippable, so
every pipeline stage is exercised against generated stand-ins: smooth random
height fields thresholded into forest patches, input channels derived from
height plus noise, straight-line tracks with a planted per-track geolocation
shift, cloudy optical stacks, and hilly elevation grids.  Everything is a
pure function of the seed.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np
from scipy import ndimage

from .composite import Scene
from .gedi import GediShot, write_shots, write_labels, group_tracks, rasterize_tracks
from .raster import GeoRef, MultiBandRaster, write_raster
from .shiftloss import Shift, shift_candidates

PIXEL_SIZE = 10.0           # meters, the working grid
ELEVATION_PIXEL_SIZE = 30.0
SHOT_SPACING = 60.0         # meters along a track
DEFAULT_BANDS = 14


def smooth_field(rng: np.random.Generator, height: int, width: int, sigma: float) -> np.ndarray:
    """Gaussian-filtered white noise, rescaled to zero mean and unit std."""
    field = ndimage.gaussian_filter(rng.standard_normal((height, width)), sigma)
    std = field.std()
    if std > 0:
        field = (field - field.mean()) / std
    return field


def height_field(rng: np.random.Generator, height: int, width: int) -> np.ndarray:
    """Plausible canopy heights: forest patches over near-zero ground.

    A coarse field decides where forest stands, a finer field modulates the
    canopy surface inside it.  Heights stay within [0, 45] m.
    """
    coarse = smooth_field(rng, height, width, sigma=max(4.0, min(height, width) / 12))
    texture = smooth_field(rng, height, width, sigma=1.5)
    forest = coarse > 0.1
    canopy = 16.0 + 7.0 * coarse + 4.0 * texture
    ground = 0.4 + 0.3 * texture
    field = np.where(forest, canopy, ground)
    return np.clip(field, 0.0, 45.0)


def input_channels(
    rng: np.random.Generator, heights: np.ndarray, n_bands: int = DEFAULT_BANDS
) -> np.ndarray:
    """Input bands as distinct noisy functions of the height field."""
    h, w = heights.shape
    bands = np.empty((n_bands, h, w), dtype=np.float64)
    for b in range(n_bands):
        gain = rng.uniform(-0.04, 0.08)
        offset = rng.uniform(0.05, 0.4)
        bands[b] = (
            offset
            + gain * heights
            + 0.02 * smooth_field(rng, h, w, sigma=3.0)
            + rng.normal(scale=0.01, size=(h, w))
        )
    return bands


@dataclass
class SyntheticTrack:
    track_key: str
    planted_shift: Shift
    pixels: list[tuple[int, int]]   # true (px, py) of each shot


@dataclass
class TrackFixture:
    shots: list[GediShot] = field(default_factory=list)
    tracks: list[SyntheticTrack] = field(default_factory=list)


def _line_pixels(
    rng: np.random.Generator, width: int, height: int, margin: int, spacing_px: float
) -> list[tuple[int, int]]:
    """Integer pixels sampled along a random straight line within the margin box."""
    angle = rng.uniform(0, math.pi)
    ux, uy = math.cos(angle), math.sin(angle)
    ax = rng.uniform(margin, width - 1 - margin)
    ay = rng.uniform(margin, height - 1 - margin)
    pixels = []
    seen = set()
    for direction in (1.0, -1.0):
        t = 0.0 if direction > 0 else spacing_px
        while True:
            x = ax + direction * t * ux
            y = ay + direction * t * uy
            px, py = int(math.floor(x)), int(math.floor(y))
            if not (margin <= px < width - margin and margin <= py < height - margin):
                break
            if (px, py) not in seen:
                seen.add((px, py))
                pixels.append((px, py))
            t += spacing_px
    return pixels


def synth_tracks(
    rng: np.random.Generator,
    heights: np.ndarray,
    georef: GeoRef,
    n_tracks: int = 4,
    shift_radius: float = math.sqrt(2.0),
    min_shots: int = 10,
    max_shots: int | None = None,
    junk_fraction: float = 0.0,
    start_index: int = 0,
) -> TrackFixture:
    """Straight-line tracks with a planted per-track geolocation shift.

    Each shot reports the height of its true pixel but a location displaced
    by the track's planted shift, mimicking systematic geolocation error.
    With ``junk_fraction`` > 0, extra shots that fail the quality filters
    (daytime, poor quality, coverage beam) are interleaved.
    """
    grid_h, grid_w = heights.shape
    margin = int(math.floor(shift_radius)) + 1
    spacing_px = SHOT_SPACING / georef.pixel_size
    candidates = shift_candidates(shift_radius)
    fixture = TrackFixture()

    index = start_index
    while len(fixture.tracks) < n_tracks:
        pixels = _line_pixels(rng, grid_w, grid_h, margin, spacing_px)
        if len(pixels) < min_shots:
            continue
        if max_shots is not None and len(pixels) > max_shots:
            pixels = pixels[:max_shots]
        key = f"T{index:03d}"
        index += 1
        shift = candidates[rng.integers(len(candidates))]
        fixture.tracks.append(SyntheticTrack(key, shift, pixels))
        for i, (px, py) in enumerate(pixels):
            x, y = georef.pixel_to_geo(px + shift.dx, py + shift.dy)
            fixture.shots.append(
                GediShot(
                    x=x, y=y,
                    rh100=float(heights[py, px]),
                    beam_id=int(rng.integers(6, 12)),
                    quality_flag=1,
                    solar_elevation=float(rng.uniform(-60, -10)),
                    track_key=key,
                    time=f"2020-06-01T0{index % 10}:{i // 60:02d}:{i % 60:02d}",
                )
            )
            if rng.random() < junk_fraction:
                kind = rng.integers(3)
                fixture.shots.append(
                    GediShot(
                        x=x, y=y,
                        rh100=float(heights[py, px]),
                        beam_id=3 if kind == 0 else int(rng.integers(6, 12)),
                        quality_flag=0 if kind == 1 else 1,
                        solar_elevation=25.0 if kind == 2 else float(rng.uniform(-60, -10)),
                        track_key=key,
                        time=f"2020-06-01T0{index % 10}:{i // 60:02d}:{i % 60:02d}",
                    )
                )
    return fixture


def synth_optical_stack(
    rng: np.random.Generator,
    heights: np.ndarray,
    georef: GeoRef,
    n_scenes: int = 5,
    n_bands: int = 4,
    cloud_fraction: float = 0.15,
) -> list[Scene]:
    """Optical scenes over one height field with synthetic cloud cover.

    Band 0 plays the near-infrared role ("B8").  Cloudy areas get high
    cloud probability and brightened values; a shadow-class streak south of
    each cloud blob gets the dark SCL class.
    """
    grid_h, grid_w = heights.shape
    base = input_channels(rng, heights, n_bands)
    scenes = []
    for k in range(n_scenes):
        values = base + rng.normal(scale=0.01, size=base.shape)
        cloud_prob = np.full((grid_h, grid_w), 5.0)
        scl = np.full((grid_h, grid_w), 4, dtype=np.int64)   # vegetation
        n_blobs = rng.poisson(cloud_fraction * grid_h * grid_w / 400.0)
        for _ in range(n_blobs):
            cy, cx = rng.integers(0, grid_h), rng.integers(0, grid_w)
            r = rng.integers(3, max(4, grid_h // 8))
            yy, xx = np.ogrid[:grid_h, :grid_w]
            blob = (yy - cy) ** 2 + (xx - cx) ** 2 <= r * r
            cloud_prob[blob] = 95.0
            values[:, blob] += 0.5
            # shadow streak a few pixels south of the blob
            sy = min(grid_h - 1, cy + 2 * r)
            shadow = (yy - sy) ** 2 + (xx - cx) ** 2 <= (r // 2 + 1) ** 2
            scl[shadow] = 3
            values[0][shadow] = 0.05
        scenes.append(
            Scene(
                raster=MultiBandRaster(values.astype(np.float32), None, georef),
                timestamp=datetime(2020, 5 + k % 5, 1 + k),
                orbit="none",
                band_roles=tuple(["B8"] + [f"B{i}" for i in range(1, n_bands)]),
                cloud_prob=cloud_prob,
                scl=scl,
                sun_azimuth=180.0,
                sun_elevation=45.0,
            )
        )
    return scenes


def synth_elevation(
    rng: np.random.Generator, height: int, width: int, georef: GeoRef
) -> MultiBandRaster:
    """Hilly elevation with one steep ridge, for slope filtering."""
    hills = 35.0 * smooth_field(rng, height, width, sigma=max(4.0, height / 5))
    ridge_col = width // 2
    ridge = np.zeros((height, width))
    ridge[:, ridge_col:] = 90.0   # sharp step: slopes > 20 degrees at 30 m pixels
    dem = 500.0 + hills + ndimage.gaussian_filter(ridge, 1.0)
    return MultiBandRaster(dem.astype(np.float32), None, georef)


def write_fixture_set(
    out_dir,
    seed: int = 0,
    size: int = 128,
    n_bands: int = DEFAULT_BANDS,
    n_tracks: int = 4,
    pred_noise: float = 0.0,
    junk_fraction: float = 0.25,
    crs_id: str = "synthetic-utm",
) -> dict:
    """Write the full fixture family for one synthetic patch.

    Produces the dense truth raster, an input stack, a prediction raster
    (truth plus optional noise), a shot table with junk shots interleaved,
    rasterized labels for the clean shots, an optical scene stack with
    manifest, an elevation grid, and a metadata record with the planted
    shifts.  Returns the metadata dict.
    """
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rng = np.random.default_rng(seed)
    georef = GeoRef(0.0, 0.0, PIXEL_SIZE, crs_id)

    # Quantize to storage precision up front so a noise-free prediction
    # raster reproduces the shot heights exactly.
    heights = height_field(rng, size, size).astype(np.float32)
    write_raster(MultiBandRaster(heights, None, georef), out / "truth.tif")

    bands = input_channels(rng, heights, n_bands)
    write_raster(MultiBandRaster(bands.astype(np.float32), None, georef), out / "input.tif")

    pred = heights.copy()
    if pred_noise > 0:
        pred = pred + rng.normal(scale=pred_noise, size=pred.shape)
    write_raster(MultiBandRaster(pred.astype(np.float32), None, georef), out / "pred.tif")

    fixture = synth_tracks(
        rng, heights, georef, n_tracks=n_tracks, junk_fraction=junk_fraction
    )
    write_shots(fixture.shots, out / "shots.csv")

    clean = [s for s in fixture.shots if s.beam_id > 5 and s.quality_flag == 1 and s.solar_elevation < 0]
    labels = rasterize_tracks(group_tracks(clean), georef, size, size)
    write_labels(labels, out / "labels.json")

    scenes = synth_optical_stack(rng, heights, georef, n_bands=4)
    scene_dir = out / "scenes"
    scene_dir.mkdir(exist_ok=True)
    with open(out / "manifest.csv", "w", newline="") as fh:
        fh.write("path,timestamp,orbit,bands,sun_azimuth,sun_elevation\n")
        for i, scene in enumerate(scenes):
            name = f"scenes/s2_{i:02d}.tif"
            stacked = np.concatenate(
                [scene.raster.values,
                 scene.cloud_prob[None].astype(np.float32),
                 scene.scl[None].astype(np.float32)]
            )
            write_raster(MultiBandRaster(stacked, scene.raster.valid, georef), out / name)
            roles = ";".join(scene.band_roles) + ";CLOUD_PROB;SCL"
            fh.write(
                f"{name},{scene.timestamp.isoformat()},{scene.orbit},{roles},"
                f"{scene.sun_azimuth},{scene.sun_elevation}\n"
            )

    elev_size = max(8, int(size * PIXEL_SIZE / ELEVATION_PIXEL_SIZE))
    elev_georef = GeoRef(0.0, 0.0, ELEVATION_PIXEL_SIZE, crs_id)
    write_raster(synth_elevation(rng, elev_size, elev_size, elev_georef), out / "elevation.tif")

    meta = {
        "seed": seed,
        "size": size,
        "n_bands": n_bands,
        "pixel_size": PIXEL_SIZE,
        "pred_noise": pred_noise,
        "tracks": [
            {
                "track_key": t.track_key,
                "planted_shift": [t.planted_shift.dx, t.planted_shift.dy],
                "n_shots": len(t.pixels),
            }
            for t in fixture.tracks
        ],
    }
    with open(out / "meta.json", "w") as fh:
        json.dump(meta, fh, indent=1, sort_keys=True)
        fh.write("\n")
    return meta
