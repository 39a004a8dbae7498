"""Spaceborne LiDAR shots: ingestion, quality filtering, and rasterization.

Shots arrive as delimited text with columns ``lon, lat, rh100_m, beam_id,
quality_flag, solar_elevation_deg, track_key, time_iso8601``.  The lon/lat
pair is treated as planar map coordinates in the raster CRS throughout the
pipeline.  A track is one laser pass (all shots sharing ``track_key``) and
is the unit over which a geolocation shift is assumed consistent.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import InputError, StructuralError
from .raster import GeoRef

# Shots outside this height range are physically implausible and rejected
# at ingestion.
RH100_MIN = 0.0
RH100_MAX = 120.0

SHOT_COLUMNS = (
    "lon", "lat", "rh100_m", "beam_id", "quality_flag",
    "solar_elevation_deg", "track_key", "time_iso8601",
)


@dataclass(frozen=True)
class GediShot:
    x: float                 # map coordinate ("lon" column)
    y: float                 # map coordinate ("lat" column)
    rh100: float             # canopy height, meters
    beam_id: int
    quality_flag: int
    solar_elevation: float   # degrees; negative means night
    track_key: str
    time: str                # ISO 8601 acquisition time


@dataclass
class GediTrack:
    track_key: str
    shots: list[GediShot]


@dataclass(frozen=True)
class GediFilterConfig:
    """Which quality predicates to enforce.

    Power beams carry ids above 5; the low-power coverage beams are noisy
    and dropped by default.  Daytime shots (solar elevation >= 0) are
    disturbed by sunlight and dropped by default.
    """

    require_power_beam: bool = True
    require_quality: bool = True
    require_night: bool = True
    power_beam_min_id: int = 5


@dataclass
class Measurement:
    px: int
    py: int
    h: float


@dataclass
class LabeledTrack:
    track_key: str
    measurements: list[Measurement]


@dataclass
class SparseLabels:
    """Rasterized track measurements for one patch.

    Within a track there is at most one measurement per pixel and all pixel
    coordinates are in bounds.
    """

    width: int
    height: int
    tracks: list[LabeledTrack] = field(default_factory=list)

    @property
    def n_measurements(self) -> int:
        return sum(len(t.measurements) for t in self.tracks)

    def heights(self) -> np.ndarray:
        return np.array(
            [m.h for t in self.tracks for m in t.measurements], dtype=np.float64
        )

    def to_dict(self) -> dict:
        return {
            "width": self.width,
            "height": self.height,
            "tracks": [
                {
                    "track_key": t.track_key,
                    "measurements": [[m.px, m.py, m.h] for m in t.measurements],
                }
                for t in self.tracks
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SparseLabels":
        labels = cls(width=int(data["width"]), height=int(data["height"]))
        for t in data["tracks"]:
            measurements = [Measurement(int(px), int(py), float(h)) for px, py, h in t["measurements"]]
            labels.tracks.append(LabeledTrack(str(t["track_key"]), measurements))
        labels.validate()
        return labels

    def validate(self) -> None:
        for track in self.tracks:
            seen = set()
            for m in track.measurements:
                if not (0 <= m.px < self.width and 0 <= m.py < self.height):
                    raise StructuralError(
                        f"measurement ({m.px}, {m.py}) outside {self.width}x{self.height} patch"
                    )
                if (m.px, m.py) in seen:
                    raise StructuralError(
                        f"track {track.track_key} has two measurements at ({m.px}, {m.py})"
                    )
                seen.add((m.px, m.py))


def read_shots(path) -> list[GediShot]:
    """Read shots from delimited text, rejecting implausible heights."""
    path = Path(path)
    if not path.exists():
        raise InputError(f"shot file not found: {path}")
    shots = []
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = [c for c in SHOT_COLUMNS if c not in (reader.fieldnames or [])]
        if missing:
            raise InputError(f"{path.name} lacks columns: {', '.join(missing)}")
        for row in reader:
            rh100 = float(row["rh100_m"])
            if not (RH100_MIN <= rh100 <= RH100_MAX) or not math.isfinite(rh100):
                continue
            shots.append(
                GediShot(
                    x=float(row["lon"]),
                    y=float(row["lat"]),
                    rh100=rh100,
                    beam_id=int(row["beam_id"]),
                    quality_flag=int(row["quality_flag"]),
                    solar_elevation=float(row["solar_elevation_deg"]),
                    track_key=row["track_key"],
                    time=row["time_iso8601"],
                )
            )
    return shots


def write_shots(shots: list[GediShot], path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(SHOT_COLUMNS)
        for s in shots:
            writer.writerow(
                [s.x, s.y, s.rh100, s.beam_id, s.quality_flag, s.solar_elevation, s.track_key, s.time]
            )


def filter_shots(shots: list[GediShot], cfg: GediFilterConfig = GediFilterConfig()) -> list[GediShot]:
    """Keep shots passing every enabled quality predicate, preserving order."""
    kept = []
    for s in shots:
        if cfg.require_power_beam and not s.beam_id > cfg.power_beam_min_id:
            continue
        if cfg.require_quality and s.quality_flag != 1:
            continue
        if cfg.require_night and not s.solar_elevation < 0:
            continue
        kept.append(s)
    return kept


def group_tracks(shots: list[GediShot]) -> list[GediTrack]:
    """One track per distinct key, shots sorted by acquisition time."""
    by_key: dict[str, list[GediShot]] = {}
    for s in shots:
        by_key.setdefault(s.track_key, []).append(s)
    return [
        GediTrack(key, sorted(by_key[key], key=lambda s: s.time))
        for key in sorted(by_key)
    ]


def rasterize_tracks(
    tracks: list[GediTrack], georef: GeoRef, width: int, height: int
) -> SparseLabels:
    """Snap each shot to the pixel containing its footprint center.

    Shots outside the patch are dropped; when two shots of one track snap to
    the same pixel the larger height wins (canopy top is the quantity of
    interest).  Tracks left without any in-bounds shot are omitted.
    """
    labels = SparseLabels(width=width, height=height)
    for track in tracks:
        cells: dict[tuple[int, int], float] = {}
        for shot in track.shots:
            px, py = georef.geo_to_pixel(shot.x, shot.y)
            if not (0 <= px < width and 0 <= py < height):
                continue
            key = (px, py)
            if key not in cells or shot.rh100 > cells[key]:
                cells[key] = shot.rh100
        if cells:
            measurements = [Measurement(px, py, h) for (px, py), h in cells.items()]
            labels.tracks.append(LabeledTrack(track.track_key, measurements))
    return labels


def label_stats(labels: SparseLabels) -> dict:
    """Count, mean, population std, and 1 m histogram of the label heights."""
    heights = labels.heights()
    if heights.size == 0:
        return {"count": 0, "mean": None, "std": None, "histogram": {}}
    edges = np.arange(0.0, math.floor(heights.max()) + 2.0)
    counts, _ = np.histogram(heights, bins=edges)
    return {
        "count": int(heights.size),
        "mean": float(heights.mean()),
        "std": float(heights.std()),
        "histogram": {int(edges[i]): int(c) for i, c in enumerate(counts) if c},
    }


def write_labels(labels: SparseLabels, path) -> None:
    with open(path, "w") as fh:
        json.dump(labels.to_dict(), fh, indent=1, sort_keys=True)
        fh.write("\n")


def read_labels(path) -> SparseLabels:
    path = Path(path)
    if not path.exists():
        raise InputError(f"label file not found: {path}")
    with open(path) as fh:
        try:
            return SparseLabels.from_dict(json.load(fh))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise InputError(f"{path.name}: malformed label record ({exc})") from exc
