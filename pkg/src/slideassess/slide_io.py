"""Slide and patch raster I/O plus grid tiling.

Supported formats are PNG (via Pillow) and binary PPM (P6).  A slide is a
plain 8-bit RGB raster; tiling lays a regular grid of square tiles over it,
and tiles that extend past the border are completed by mirroring pixels
about the image edge, so no artificial black borders are introduced.
"""

from __future__ import annotations

import io
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image, UnidentifiedImageError

from .errors import CorruptImageError, UnsupportedFormatError, UsageError

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_PPM_MAGIC = b"P6"

MIN_TILE_SIZE = 8


@dataclass(frozen=True)
class SlideImage:
    """An RGB raster held as a (height, width, 3) uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = self.pixels
        if not isinstance(px, np.ndarray) or px.dtype != np.uint8:
            raise ValueError("SlideImage requires a uint8 pixel array")
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"SlideImage requires shape (h, w, 3), got {px.shape}")
        if px.shape[0] < 1 or px.shape[1] < 1:
            raise ValueError("SlideImage must be at least 1x1")

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])


@dataclass(frozen=True)
class TileGrid:
    """Row-major enumeration of square tiles covering a slide."""

    tile_size: int
    stride: int
    rows: int
    cols: int

    def origin(self, row: int, col: int) -> tuple[int, int]:
        """Pixel (x, y) of a tile's top-left corner."""
        self._check_index(row, col)
        return col * self.stride, row * self.stride

    def origins(self):
        """Yield (row, col, x, y) for every tile in row-major order."""
        for row in range(self.rows):
            for col in range(self.cols):
                yield row, col, col * self.stride, row * self.stride

    def _check_index(self, row: int, col: int) -> None:
        if not (0 <= row < self.rows and 0 <= col < self.cols):
            raise IndexError(f"tile ({row}, {col}) outside {self.rows}x{self.cols} grid")


@dataclass(frozen=True)
class Patch:
    """One tile's pixels together with its grid position."""

    row: int
    col: int
    pixels: np.ndarray  # (tile_size, tile_size, 3) uint8


def load_image(path) -> SlideImage:
    """Decode a PNG or binary PPM file into an RGB slide.

    Grayscale inputs are expanded to three identical channels.  Raises
    FileNotFoundError/OSError for unreadable files, UnsupportedFormatError
    for unknown formats, and CorruptImageError for broken headers/payloads.
    """
    data = Path(path).read_bytes()
    if data[:8] == _PNG_MAGIC:
        return _decode_png(data, path)
    if data[:2] == _PPM_MAGIC:
        return _decode_ppm(data, path)
    raise UnsupportedFormatError(f"{path}: not a PNG or binary PPM (P6) file")


def write_image(image: SlideImage, path) -> None:
    """Write a slide as PNG or PPM P6, chosen by file extension.

    The written file decodes back (via load_image) to a byte-identical
    raster; both formats here are lossless.
    """
    p = Path(path)
    suffix = p.suffix.lower()
    if suffix == ".png":
        Image.fromarray(image.pixels, mode="RGB").save(p, format="PNG")
    elif suffix in (".ppm", ".pnm"):
        header = f"P6\n{image.width} {image.height}\n255\n".encode("ascii")
        p.write_bytes(header + image.pixels.tobytes())
    else:
        raise UnsupportedFormatError(f"{path}: unsupported output extension {suffix!r} (use .png or .ppm)")


def make_grid(slide: SlideImage, tile_size: int, stride: int) -> TileGrid:
    """Lay a regular tile grid over the slide so every pixel is covered.

    rows = ceil(max(height - tile_size, 0) / stride) + 1, and likewise for
    columns; the last row/column of tiles may extend past the border and is
    completed by reflection when extracted.
    """
    if tile_size < MIN_TILE_SIZE:
        raise UsageError(f"tile_size must be >= {MIN_TILE_SIZE}, got {tile_size}")
    if not (1 <= stride <= tile_size):
        raise UsageError(f"stride must be in [1, tile_size], got {stride}")
    rows = -(-max(slide.height - tile_size, 0) // stride) + 1
    cols = -(-max(slide.width - tile_size, 0) // stride) + 1
    return TileGrid(tile_size=tile_size, stride=stride, rows=rows, cols=cols)


def extract_patch(slide: SlideImage, grid: TileGrid, row: int, col: int) -> Patch:
    """Cut one tile out of the slide, mirroring at the borders if needed.

    Pure function of its arguments; safe to call concurrently.
    """
    x0, y0 = grid.origin(row, col)
    ys = _mirror_indices(y0, grid.tile_size, slide.height)
    xs = _mirror_indices(x0, grid.tile_size, slide.width)
    return Patch(row=row, col=col, pixels=slide.pixels[np.ix_(ys, xs)])


def _mirror_indices(start: int, length: int, n: int) -> np.ndarray:
    """Map [start, start+length) onto [0, n) by reflecting about the borders.

    Edge-inclusive reflection: a 2-pixel row [A, B] extended to length 4
    reads A, B, B, A; a 1-pixel source repeats indefinitely.
    """
    idx = np.arange(start, start + length)
    period = 2 * n
    j = idx % period
    return np.where(j < n, j, period - 1 - j)


def _decode_png(data: bytes, path) -> SlideImage:
    try:
        with Image.open(io.BytesIO(data)) as img:
            rgb = img.convert("RGB")
            arr = np.asarray(rgb, dtype=np.uint8)
    except (UnidentifiedImageError, OSError, SyntaxError, ValueError) as exc:
        raise CorruptImageError(f"{path}: broken PNG payload ({exc})") from exc
    return SlideImage(pixels=arr)


def _decode_ppm(data: bytes, path) -> SlideImage:
    pos = 2  # past the P6 magic
    fields = []
    while len(fields) < 3:
        pos = _skip_ppm_separators(data, pos)
        start = pos
        while pos < len(data) and data[pos : pos + 1].isdigit():
            pos += 1
        if pos == start:
            raise CorruptImageError(f"{path}: malformed PPM header")
        fields.append(int(data[start:pos]))
    if pos >= len(data) or data[pos : pos + 1] not in b" \t\r\n":
        raise CorruptImageError(f"{path}: PPM header not terminated by whitespace")
    pos += 1  # exactly one whitespace byte before the raster
    width, height, maxval = fields
    if width < 1 or height < 1:
        raise CorruptImageError(f"{path}: non-positive PPM dimensions {width}x{height}")
    if maxval != 255:
        raise UnsupportedFormatError(f"{path}: only maxval 255 PPM supported, got {maxval}")
    expected = width * height * 3
    body = data[pos : pos + expected]
    if len(body) < expected:
        raise CorruptImageError(
            f"{path}: truncated PPM payload, expected {expected} bytes, got {len(body)}"
        )
    arr = np.frombuffer(body, dtype=np.uint8).reshape(height, width, 3)
    return SlideImage(pixels=arr.copy())


def _skip_ppm_separators(data: bytes, pos: int) -> int:
    # whitespace runs and '#' comments may separate header fields
    while pos < len(data):
        c = data[pos : pos + 1]
        if c in b" \t\r\n":
            pos += 1
        elif c == b"#":
            while pos < len(data) and data[pos : pos + 1] != b"\n":
                pos += 1
        else:
            break
    return pos
