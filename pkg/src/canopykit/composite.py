"""Temporal median composites with cloud and shadow masking.

A composite is built from a stack of co-registered scenes.  Optical stacks
go through a three-stage cleanup before aggregation: scenes with almost no
cloud-free pixels are dropped, cloudy pixels and the shadows they cast are
removed per scene, and the survivors are reduced with a per-pixel temporal
median.  Radar stacks skip the masking and are aggregated per (orbit,
polarization) group into a fixed four-channel layout.
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from datetime import datetime
from pathlib import Path

import numpy as np
from scipy import ndimage

from .errors import InputError, StructuralError
from .raster import GeoRef, MultiBandRaster, read_raster

# Special role names a scene file may carry alongside its value bands.
ROLE_CLOUD_PROB = "CLOUD_PROB"
ROLE_SCL = "SCL"

# Fixed band order contract of the radar composite.
S1_BAND_ORDER = (
    ("VV", "ascending"),
    ("VV", "descending"),
    ("VH", "ascending"),
    ("VH", "descending"),
)

MANIFEST_COLUMNS = ("path", "timestamp", "orbit", "bands", "sun_azimuth", "sun_elevation")


@dataclass
class Scene:
    """One co-registered acquisition.

    ``band_roles`` names the value bands of ``raster`` in order (e.g.
    ``("VV",)`` or ``("B2", "B3", "B4", "B8")``).  Rows of the grid run
    north to south; ``sun_azimuth`` is degrees clockwise from north.
    """

    raster: MultiBandRaster
    timestamp: datetime
    orbit: str = "none"
    band_roles: tuple[str, ...] = ()
    cloud_prob: np.ndarray | None = None
    scl: np.ndarray | None = None
    sun_azimuth: float | None = None
    sun_elevation: float | None = None

    def __post_init__(self):
        if len(self.band_roles) != self.raster.bands:
            raise StructuralError(
                f"{len(self.band_roles)} band roles for a {self.raster.bands}-band raster"
            )
        if self.cloud_prob is not None:
            probs = self.cloud_prob[self.raster.valid]
            if probs.size and (probs.min() < 0 or probs.max() > 100):
                raise StructuralError("cloud_prob outside [0, 100] on valid pixels")
        if self.sun_azimuth is not None and not 0 <= self.sun_azimuth < 360:
            raise StructuralError(f"sun_azimuth {self.sun_azimuth} outside [0, 360)")

    def band_by_role(self, role: str) -> np.ndarray:
        try:
            index = self.band_roles.index(role)
        except ValueError:
            raise InputError(f"scene has no {role!r} band (roles: {self.band_roles})") from None
        return self.raster.band(index)


@dataclass(frozen=True)
class MaskParams:
    """Thresholds for the optical cloud/shadow cleanup."""

    min_cloud_free_fraction: float = 0.10
    cloud_prob_threshold: float = 30.0
    shadow_search_distance: float = 1000.0   # meters along the anti-solar ray
    dilation_radius: float = 300.0           # meters around cloud/shadow pixels
    dark_pixel_nir_threshold: float = 0.15   # reflectance, 0..1 scale
    dark_scl_classes: frozenset = frozenset({2, 3})
    nir_band_role: str = "B8"

    def __post_init__(self):
        if self.shadow_search_distance <= 0 or self.dilation_radius <= 0:
            raise ValueError("search and dilation distances must be positive")
        if not 0 <= self.min_cloud_free_fraction <= 1:
            raise ValueError("min_cloud_free_fraction must be in [0, 1]")
        if not 0 <= self.cloud_prob_threshold <= 100:
            raise ValueError("cloud_prob_threshold must be in [0, 100]")


def scene_admissible(scene: Scene, params: MaskParams) -> bool:
    """Whether enough of the scene is cloud-free to be worth masking.

    A pixel counts as cloud-free when its cloud probability is strictly
    below the threshold; the required fraction is inclusive.
    """
    if scene.cloud_prob is None:
        raise InputError("scene has no cloud probability band")
    valid = scene.raster.valid
    n_valid = int(valid.sum())
    if n_valid == 0:
        return False
    n_clear = int((valid & (scene.cloud_prob < params.cloud_prob_threshold)).sum())
    return n_clear / n_valid >= params.min_cloud_free_fraction


def _mark_ray_hits(grid: np.ndarray, points_x: np.ndarray, points_y: np.ndarray) -> None:
    """Set grid pixels whose center lies within half a pixel of any point."""
    h, w = grid.shape
    fx, fy = np.floor(points_x), np.floor(points_y)
    for ox in (0.0, 1.0):
        for oy in (0.0, 1.0):
            cx, cy = fx + ox, fy + oy
            close = (cx - points_x) ** 2 + (cy - points_y) ** 2 <= 0.25 + 1e-9
            inside = close & (cx >= 0) & (cx < w) & (cy >= 0) & (cy < h)
            grid[cy[inside].astype(int), cx[inside].astype(int)] = True


def _shadow_reach(cloud: np.ndarray, sun_azimuth: float, max_steps: int) -> np.ndarray:
    """Pixels touched by anti-solar rays traced from every cloud pixel.

    Rays are sampled at one-pixel steps.  Rows run north to south, so the
    pixel-space direction for azimuth theta (clockwise from north) is
    ``(sin theta, -cos theta)``.
    """
    reach = np.zeros_like(cloud)
    ys, xs = np.nonzero(cloud)
    if xs.size == 0 or max_steps == 0:
        return reach
    theta = math.radians((sun_azimuth + 180.0) % 360.0)
    ux, uy = math.sin(theta), -math.cos(theta)
    xs = xs.astype(np.float64)
    ys = ys.astype(np.float64)
    for t in range(1, max_steps + 1):
        _mark_ray_hits(reach, xs + t * ux, ys + t * uy)
    return reach


def _disk(radius: float) -> np.ndarray:
    r = int(math.floor(radius + 1e-9))
    dy, dx = np.mgrid[-r : r + 1, -r : r + 1]
    return dx * dx + dy * dy <= radius * radius + 1e-9


def mask_scene(scene: Scene, params: MaskParams) -> np.ndarray:
    """Per-pixel keep mask for one optical scene.

    A pixel is rejected when it is cloudy, when it is a dark pixel lying in
    the shadow zone traced anti-solar from any cloud pixel (up to the search
    distance), or when it falls within the dilation radius of any pixel
    rejected for either reason.  The returned mask does not fold in the
    raster's own validity; consumers intersect the two.
    """
    if scene.cloud_prob is None:
        raise InputError("scene has no cloud probability band")
    if scene.sun_azimuth is None or scene.sun_elevation is None:
        raise InputError("scene has no sun geometry")
    if scene.scl is None:
        raise InputError("scene has no scene-classification band")
    nir = scene.band_by_role(params.nir_band_role)
    valid = scene.raster.valid
    pixel_size = scene.raster.georef.pixel_size

    cloud = valid & (scene.cloud_prob > params.cloud_prob_threshold)

    dark = (
        valid
        & (nir < params.dark_pixel_nir_threshold)
        & np.isin(scene.scl, list(params.dark_scl_classes))
    )
    max_steps = int(math.floor(params.shadow_search_distance / pixel_size + 1e-9))
    shadow = dark & _shadow_reach(cloud, scene.sun_azimuth, max_steps)

    seed = cloud | shadow
    rejected = ndimage.binary_dilation(seed, structure=_disk(params.dilation_radius / pixel_size))
    return ~rejected


def median_composite(scenes: list[Scene], masks: list[np.ndarray]) -> MultiBandRaster:
    """Per-pixel, per-band temporal median of the masked scene stack.

    Even observation counts use the midpoint of the two central order
    statistics.  Pixels with no valid observation in any scene come back
    with ``valid=False``.
    """
    if not scenes:
        raise InputError("empty scene stack")
    if len(masks) != len(scenes):
        raise StructuralError(f"{len(scenes)} scenes but {len(masks)} masks")
    shape = scenes[0].raster.values.shape
    for scene, mask in zip(scenes, masks):
        if scene.raster.values.shape != shape:
            raise StructuralError(
                f"scene shape {scene.raster.values.shape} does not match stack shape {shape}"
            )
        if mask.shape != shape[1:]:
            raise StructuralError(f"mask shape {mask.shape} does not match grid {shape[1:]}")

    stack = np.empty((len(scenes),) + shape, dtype=np.float64)
    observed = np.zeros(shape[1:], dtype=bool)
    for i, (scene, mask) in enumerate(zip(scenes, masks)):
        keep = mask & scene.raster.valid
        layer = scene.raster.values.astype(np.float64)
        layer[:, ~keep] = np.nan
        stack[i] = layer
        observed |= keep

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)  # all-NaN pixels are expected
        values = np.nanmedian(stack, axis=0)
    return MultiBandRaster(values.astype(np.float32), observed, scenes[0].raster.georef)


def s1_four_channel(scenes: list[Scene]) -> MultiBandRaster:
    """Radar composite in the fixed band order VV-asc, VV-desc, VH-asc, VH-desc.

    Each band is the per-pixel median over the scenes of its (polarization,
    orbit) group; a group with no scenes yields an all-NaN band.  A pixel is
    valid when at least one group observed it.
    """
    if not scenes:
        raise InputError("empty scene stack")
    shape = scenes[0].raster.valid.shape
    georef = scenes[0].raster.georef
    bands = []
    band_valid = []
    for role, orbit in S1_BAND_ORDER:
        layers = []
        for scene in scenes:
            if scene.orbit != orbit or role not in scene.band_roles:
                continue
            if scene.raster.valid.shape != shape:
                raise StructuralError("scene grids in the stack differ in shape")
            layer = scene.band_by_role(role).astype(np.float64).copy()
            layer[~scene.raster.valid] = np.nan
            layers.append(layer)
        if layers:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                median = np.nanmedian(np.stack(layers), axis=0)
            bands.append(median)
            band_valid.append(~np.isnan(median))
        else:
            bands.append(np.full(shape, np.nan))
            band_valid.append(np.zeros(shape, dtype=bool))
    valid = np.logical_or.reduce(band_valid)
    return MultiBandRaster(np.stack(bands).astype(np.float32), valid, georef)


def load_scene_manifest(path, start: datetime | None = None, end: datetime | None = None) -> list[Scene]:
    """Load a scene stack described by a delimited-text manifest.

    Columns: ``path`` (raster file, relative to the manifest), ``timestamp``
    (ISO 8601), ``orbit`` (``ascending``/``descending``/``none``), ``bands``
    (semicolon-separated roles for every band in file order; the special
    roles ``CLOUD_PROB`` and ``SCL`` are split out of the value bands), and
    optional ``sun_azimuth``/``sun_elevation`` in degrees.  ``start``/``end``
    keep only scenes acquired inside the window (inclusive).
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"scene manifest not found: {path}")
    scenes = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in MANIFEST_COLUMNS[:4] if c not in (reader.fieldnames or [])]
        if missing:
            raise InputError(f"manifest {path.name} lacks columns: {', '.join(missing)}")
        for row in reader:
            timestamp = datetime.fromisoformat(row["timestamp"])
            if start is not None and timestamp < start:
                continue
            if end is not None and timestamp > end:
                continue
            raster = read_raster(path.parent / row["path"])
            roles = tuple(r.strip() for r in row["bands"].split(";") if r.strip())
            if len(roles) != raster.bands:
                raise StructuralError(
                    f"{row['path']}: {len(roles)} roles for {raster.bands} bands"
                )
            cloud_prob = scl = None
            value_indices = []
            value_roles = []
            for i, role in enumerate(roles):
                if role == ROLE_CLOUD_PROB:
                    cloud_prob = raster.band(i).astype(np.float64)
                elif role == ROLE_SCL:
                    scl = raster.band(i).astype(np.int64)
                else:
                    value_indices.append(i)
                    value_roles.append(role)
            values = MultiBandRaster(
                raster.values[value_indices], raster.valid, raster.georef
            )
            scenes.append(
                Scene(
                    raster=values,
                    timestamp=timestamp,
                    orbit=(row.get("orbit") or "none").strip(),
                    band_roles=tuple(value_roles),
                    cloud_prob=cloud_prob,
                    scl=scl,
                    sun_azimuth=float(row["sun_azimuth"]) if row.get("sun_azimuth") else None,
                    sun_elevation=float(row["sun_elevation"]) if row.get("sun_elevation") else None,
                )
            )
    return scenes
