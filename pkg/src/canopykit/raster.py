"""Multi-band raster grids with validity masks and geo-referencing.

Arrays follow the numpy raster convention: ``values`` has shape
``(bands, height, width)`` and is indexed ``[band, row, col]``; a pixel
coordinate ``(px, py)`` means column ``px``, row ``py``.  Rows run north to
south, so row 0 is the northernmost row of the grid.

Two on-disk containers are supported:

* GeoTIFF-compatible TIFF (``.tif``/``.tiff``): multi-band, one declared
  nodata sentinel, pixel scale and tiepoint carried in the standard GeoTIFF
  tags, CRS identifier in the image description.
* A raw little-endian container (``.mbr``) for synthetic test fixtures::

      magic      4s   b"MBR1"
      bands      u4
      width      u4
      height     u4
      pixel_size f8
      origin_x   f8
      origin_y   f8
      nodata     f4   (NaN allowed and the default)
      crs_len    u2
      crs        crs_len bytes, utf-8
      data       bands*height*width f4, band-major, row-major within a band

Invalid pixels are stored as the nodata sentinel in every band; a pixel is
read back as invalid iff every band carries the sentinel.  With the default
NaN sentinel the round trip is bit-exact for all finite values.
"""

from __future__ import annotations

import json
import math
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import tifffile

from .errors import RasterFormatError, StructuralError

RAW_MAGIC = b"MBR1"

# TIFF tag ids: GeoTIFF pixel scale / tiepoint, GDAL's nodata convention.
TAG_MODEL_PIXEL_SCALE = 33550
TAG_MODEL_TIEPOINT = 33922
TAG_GDAL_NODATA = 42113


@dataclass(frozen=True)
class GeoRef:
    """Affine grid geo-referencing with the pixel-center convention.

    The map coordinate of pixel ``(0, 0)`` is ``origin + pixel_size / 2`` on
    each axis, i.e. ``origin`` is the outer corner of the first pixel.
    """

    origin_x: float
    origin_y: float
    pixel_size: float
    crs_id: str = "local"

    def __post_init__(self):
        if not self.pixel_size > 0:
            raise ValueError(f"pixel_size must be positive, got {self.pixel_size}")

    def pixel_to_geo(self, px: float, py: float) -> tuple[float, float]:
        """Map coordinates of the center of pixel ``(px, py)``."""
        return (
            self.origin_x + (px + 0.5) * self.pixel_size,
            self.origin_y + (py + 0.5) * self.pixel_size,
        )

    def geo_to_pixel(self, x: float, y: float) -> tuple[int, int]:
        """Pixel containing the map point ``(x, y)``.

        Inverse of :meth:`pixel_to_geo` on integer pixels: the center of a
        pixel always maps back to that pixel.
        """
        return (
            int(math.floor((x - self.origin_x) / self.pixel_size)),
            int(math.floor((y - self.origin_y) / self.pixel_size)),
        )

    def shifted(self, dx_pixels: int, dy_pixels: int) -> "GeoRef":
        """GeoRef translated by a whole number of pixels."""
        return GeoRef(
            origin_x=self.origin_x + dx_pixels * self.pixel_size,
            origin_y=self.origin_y + dy_pixels * self.pixel_size,
            pixel_size=self.pixel_size,
            crs_id=self.crs_id,
        )


@dataclass(frozen=True)
class Window:
    """Pixel-aligned rectangular window, possibly exceeding its parent grid."""

    x0: int
    y0: int
    width: int
    height: int

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ValueError(f"window dimensions must be positive, got {self}")

    @property
    def x1(self) -> int:
        return self.x0 + self.width

    @property
    def y1(self) -> int:
        return self.y0 + self.height

    def contains(self, other: "Window") -> bool:
        return (
            self.x0 <= other.x0
            and self.y0 <= other.y0
            and other.x1 <= self.x1
            and other.y1 <= self.y1
        )

    def expanded(self, border: int) -> "Window":
        return Window(
            self.x0 - border, self.y0 - border,
            self.width + 2 * border, self.height + 2 * border,
        )


class MultiBandRaster:
    """Immutable C-band grid of float32 values with a shared validity mask.

    ``values`` at invalid pixels must never be read by consumers; they hold
    NaN internally.  A valid pixel has data in at least one band — stacked
    composites from different sources may still carry NaN in individual
    bands of a valid pixel (e.g. a radar group with no scenes).
    """

    def __init__(self, values, valid=None, georef: GeoRef | None = None):
        values = np.asarray(values, dtype=np.float32)
        if values.ndim == 2:
            values = values[None, :, :]
        if values.ndim != 3:
            raise StructuralError(f"values must be (bands, height, width), got shape {values.shape}")
        c, h, w = values.shape
        if c < 1 or h < 1 or w < 1:
            raise StructuralError(f"raster dimensions must be >= 1, got {values.shape}")
        if valid is None:
            valid = np.ones((h, w), dtype=bool)
        else:
            valid = np.asarray(valid, dtype=bool)
            if valid.shape != (h, w):
                raise StructuralError(
                    f"valid mask shape {valid.shape} does not match grid {(h, w)}"
                )
        values = values.copy()
        values[:, ~valid] = np.nan
        valid = valid.copy()
        values.setflags(write=False)
        valid.setflags(write=False)
        self.values = values
        self.valid = valid
        self.georef = georef if georef is not None else GeoRef(0.0, 0.0, 1.0)

    @property
    def bands(self) -> int:
        return self.values.shape[0]

    @property
    def height(self) -> int:
        return self.values.shape[1]

    @property
    def width(self) -> int:
        return self.values.shape[2]

    def band(self, index: int) -> np.ndarray:
        """Read-only (height, width) view of one band."""
        return self.values[index]

    def full_window(self) -> Window:
        return Window(0, 0, self.width, self.height)

    def __eq__(self, other) -> bool:
        if not isinstance(other, MultiBandRaster):
            return NotImplemented
        return (
            self.georef == other.georef
            and np.array_equal(self.valid, other.valid)
            and np.array_equal(self.values, other.values, equal_nan=True)
        )


def extract_window(
    raster: MultiBandRaster, window: Window, pad_policy: str = "reject"
) -> MultiBandRaster:
    """Extract a sub-raster, translating the georef to the window origin.

    ``pad_policy`` is ``"reject"`` (out-of-bounds windows raise) or
    ``"nodata-pad"`` (out-of-bounds pixels come back with ``valid=False``).
    """
    if pad_policy not in ("reject", "nodata-pad"):
        raise ValueError(f"unknown pad policy {pad_policy!r}")
    parent = raster.full_window()
    if pad_policy == "reject" and not parent.contains(window):
        raise StructuralError(f"window {window} exceeds raster extent {parent} under reject policy")

    values = np.full((raster.bands, window.height, window.width), np.nan, dtype=np.float32)
    valid = np.zeros((window.height, window.width), dtype=bool)

    ix0, ix1 = max(window.x0, 0), min(window.x1, raster.width)
    iy0, iy1 = max(window.y0, 0), min(window.y1, raster.height)
    if ix0 < ix1 and iy0 < iy1:
        ox0, oy0 = ix0 - window.x0, iy0 - window.y0
        values[:, oy0 : oy0 + (iy1 - iy0), ox0 : ox0 + (ix1 - ix0)] = raster.values[
            :, iy0:iy1, ix0:ix1
        ]
        valid[oy0 : oy0 + (iy1 - iy0), ox0 : ox0 + (ix1 - ix0)] = raster.valid[iy0:iy1, ix0:ix1]

    return MultiBandRaster(values, valid, raster.georef.shifted(window.x0, window.y0))


def _format_for_path(path: Path, format: str | None) -> str:
    if format is not None:
        if format not in ("geotiff", "raw"):
            raise ValueError(f"unknown raster format {format!r}")
        return format
    suffix = path.suffix.lower()
    if suffix in (".tif", ".tiff"):
        return "geotiff"
    if suffix in (".mbr", ".raw"):
        return "raw"
    raise ValueError(f"cannot infer raster format from {path.name!r}; pass format=")


def write_raster(
    raster: MultiBandRaster,
    path, format: str | None = None,
    nodata: float = float("nan"),
) -> None:
    """Write a raster to disk, encoding invalid pixels as ``nodata``."""
    path = Path(path)
    fmt = _format_for_path(path, format)
    values = np.array(raster.values, dtype=np.float32)
    values[:, ~raster.valid] = nodata

    if fmt == "raw":
        crs = raster.georef.crs_id.encode("utf-8")
        header = RAW_MAGIC + struct.pack(
            "<IIIdddfH",
            raster.bands, raster.width, raster.height,
            raster.georef.pixel_size,
            raster.georef.origin_x, raster.georef.origin_y,
            nodata, len(crs),
        )
        with open(path, "wb") as fh:
            fh.write(header)
            fh.write(crs)
            fh.write(values.astype("<f4").tobytes())
        return

    g = raster.georef
    extratags = [
        (TAG_MODEL_PIXEL_SCALE, "d", 3, (g.pixel_size, g.pixel_size, 0.0)),
        (TAG_MODEL_TIEPOINT, "d", 6, (0.0, 0.0, 0.0, g.origin_x, g.origin_y, 0.0)),
        (TAG_GDAL_NODATA, "s", 0, str(nodata)),
    ]
    single = values.shape[0] == 1
    tifffile.imwrite(
        path,
        values[0] if single else values,
        photometric="minisblack",
        planarconfig=None if single else "separate",
        metadata=None,
        description=json.dumps({"crs_id": g.crs_id}),
        extratags=extratags,
        software=False,
    )


def read_raster(path, format: str | None = None) -> MultiBandRaster:
    """Load a raster, mapping the declared nodata sentinel to ``valid=False``."""
    path = Path(path)
    if not path.exists():
        raise RasterFormatError(f"raster file not found: {path}")
    fmt = _format_for_path(path, format)
    if fmt == "raw":
        return _read_raw(path)
    return _read_geotiff(path)


def _nodata_to_valid(values: np.ndarray, nodata: float) -> np.ndarray:
    if math.isnan(nodata):
        hit = np.isnan(values)
    else:
        hit = values == np.float32(nodata)
    return ~hit.all(axis=0)


def _read_raw(path: Path) -> MultiBandRaster:
    data = path.read_bytes()
    head = struct.calcsize("<IIIdddfH")
    if len(data) < 4 + head:
        raise RasterFormatError(f"{path.name}: truncated header")
    if data[:4] != RAW_MAGIC:
        raise RasterFormatError(f"{path.name}: bad magic {data[:4]!r}")
    bands, width, height, pixel_size, ox, oy, nodata, crs_len = struct.unpack_from(
        "<IIIdddfH", data, 4
    )
    if bands < 1 or width < 1 or height < 1:
        raise RasterFormatError(f"{path.name}: non-positive dimensions in header")
    off = 4 + head
    crs = data[off : off + crs_len].decode("utf-8")
    off += crs_len
    n_expected = bands * height * width * 4
    if len(data) - off != n_expected:
        raise StructuralError(
            f"{path.name}: payload is {len(data) - off} bytes, header implies {n_expected}"
        )
    values = np.frombuffer(data[off:], dtype="<f4").reshape(bands, height, width)
    valid = _nodata_to_valid(values, nodata)
    return MultiBandRaster(values, valid, GeoRef(ox, oy, pixel_size, crs))


def _read_geotiff(path: Path) -> MultiBandRaster:
    try:
        with tifffile.TiffFile(path) as tif:
            values = tif.asarray()
            page = tif.pages[0]
            tags = {tag.code: tag.value for tag in page.tags}
    except tifffile.TiffFileError as exc:
        raise RasterFormatError(f"{path.name}: not a readable TIFF ({exc})") from exc
    except ValueError as exc:
        raise StructuralError(f"{path.name}: inconsistent band pages ({exc})") from exc

    if values.ndim == 2:
        values = values[None, :, :]
    elif values.ndim != 3:
        raise StructuralError(f"{path.name}: unsupported array shape {values.shape}")

    if TAG_MODEL_PIXEL_SCALE not in tags or TAG_MODEL_TIEPOINT not in tags:
        raise RasterFormatError(f"{path.name}: missing GeoTIFF pixel scale / tiepoint tags")
    scale = tags[TAG_MODEL_PIXEL_SCALE]
    tiepoint = tags[TAG_MODEL_TIEPOINT]
    if abs(scale[0] - scale[1]) > 1e-9 * abs(scale[0]):
        raise RasterFormatError(f"{path.name}: anisotropic pixels are not supported")
    if tiepoint[0] != 0 or tiepoint[1] != 0:
        raise RasterFormatError(f"{path.name}: tiepoint must anchor pixel (0, 0)")

    crs_id = "local"
    description = tags.get(270)
    if description:
        try:
            crs_id = json.loads(description).get("crs_id", crs_id)
        except (json.JSONDecodeError, AttributeError):
            pass

    nodata = float("nan")
    if TAG_GDAL_NODATA in tags:
        try:
            nodata = float(tags[TAG_GDAL_NODATA])
        except ValueError as exc:
            raise RasterFormatError(f"{path.name}: unparseable nodata tag") from exc

    values = values.astype(np.float32, copy=False)
    valid = _nodata_to_valid(values, nodata)
    georef = GeoRef(float(tiepoint[3]), float(tiepoint[4]), float(scale[0]), crs_id)
    return MultiBandRaster(values, valid, georef)
