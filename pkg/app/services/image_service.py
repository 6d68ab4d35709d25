"""Radiograph preprocessing: decoding, CLAHE, seeded augmentation, resizing."""
from __future__ import annotations

import logging
from dataclasses import dataclass
from enum import Enum

import cv2
import numpy as np

from app.core.config import HISTOGRAM_BINS
from app.core.errors import DecodeError, ShapeError, ToolkitError
from app.schemas.image import AugmentSpec, ClaheSpec, PreprocessSpec

logger = logging.getLogger(__name__)

PNG_SIGNATURE = b"\x89PNG\r\n\x1a\n"
PNG_TRAILER = b"IEND\xaeB`\x82"


class ImageFormat(str, Enum):
    PGM = "pgm-p5"
    PNG_GRAY = "png-8bit-gray"
    PNG_RGB = "png-8bit-rgb"


@dataclass(frozen=True)
class GrayImage:
    """8-bit single-channel raster, ``pixels`` shaped (height, width)."""
    pixels: np.ndarray

    def __post_init__(self):
        pixels = np.asarray(self.pixels)
        if pixels.ndim != 2 or pixels.shape[0] < 1 or pixels.shape[1] < 1:
            raise ShapeError(f"gray image needs a non-empty 2-D raster, got shape {pixels.shape}")
        if pixels.dtype != np.uint8:
            if pixels.min() < 0 or pixels.max() > 255:
                raise ShapeError("gray image pixels must lie in [0, 255]")
            pixels = pixels.astype(np.uint8)
        pixels = np.ascontiguousarray(pixels)
        pixels.flags.writeable = False
        object.__setattr__(self, "pixels", pixels)

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @property
    def height(self) -> int:
        return self.pixels.shape[0]


@dataclass(frozen=True)
class ChannelImage:
    """Channel-last float raster with values in [0, 1]."""
    data: np.ndarray

    @property
    def width(self) -> int:
        return self.data.shape[1]

    @property
    def height(self) -> int:
        return self.data.shape[0]

    @property
    def channels(self) -> int:
        return self.data.shape[2]


def _round_to_uint8(values: np.ndarray) -> np.ndarray:
    return np.clip(np.floor(values + 0.5), 0, 255).astype(np.uint8)


# ---------------------------------------------------------------------------
# Decoding
# ---------------------------------------------------------------------------

def detect_format(data: bytes) -> ImageFormat:
    if data[:2] == b"P5":
        return ImageFormat.PGM
    if data[:8] == PNG_SIGNATURE:
        if len(data) < 33 or data[12:16] != b"IHDR":
            raise DecodeError("truncated PNG header")
        color_type = data[25]
        if color_type == 0:
            return ImageFormat.PNG_GRAY
        if color_type == 2:
            return ImageFormat.PNG_RGB
        raise DecodeError(f"unsupported PNG color type {color_type}; only 8-bit gray or RGB is read")
    raise DecodeError("unsupported image format; expected PGM (P5) or PNG")


def _decode_pgm(data: bytes) -> GrayImage:
    tokens: list[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and (data[pos:pos + 1].isspace() or data[pos:pos + 1] == b"#"):
            if data[pos:pos + 1] == b"#":
                end = data.find(b"\n", pos)
                pos = len(data) if end < 0 else end + 1
            else:
                pos += 1
        start = pos
        while pos < len(data) and not data[pos:pos + 1].isspace() and data[pos:pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise DecodeError("truncated PGM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise DecodeError(f"unsupported PGM magic {tokens[0]!r}")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError:
        raise DecodeError("malformed PGM header")
    if width < 1 or height < 1:
        raise DecodeError(f"invalid PGM extents {width}x{height}")
    if maxval != 255:
        raise DecodeError(f"bit depth is not 8 (maxval {maxval})")
    pos += 1  # single whitespace byte after maxval
    raster = data[pos:pos + width * height]
    if len(raster) < width * height:
        raise DecodeError(f"truncated PGM raster: {len(raster)} of {width * height} bytes")
    return GrayImage(np.frombuffer(raster, dtype=np.uint8).reshape(height, width))


def _decode_png(data: bytes, fmt: ImageFormat) -> GrayImage:
    bit_depth = data[24]
    if bit_depth != 8:
        raise DecodeError(f"bit depth is {bit_depth}, not 8")
    if not data.endswith(PNG_TRAILER):
        raise DecodeError("truncated PNG stream")
    decoded = cv2.imdecode(np.frombuffer(data, dtype=np.uint8), cv2.IMREAD_UNCHANGED)
    if decoded is None:
        raise DecodeError("corrupt PNG stream")
    if fmt is ImageFormat.PNG_GRAY:
        return GrayImage(decoded)
    blue, green, red = (decoded[..., i].astype(np.float64) for i in range(3))
    return GrayImage(_round_to_uint8(0.299 * red + 0.587 * green + 0.114 * blue))


def decode_image(data: bytes, fmt: ImageFormat | None = None) -> GrayImage:
    """Decode PGM (P5) or 8-bit PNG bytes; RGB is reduced to rounded luma."""
    detected = detect_format(data)
    if fmt is not None and ImageFormat(fmt) is not detected:
        raise DecodeError(f"expected {ImageFormat(fmt).value}, found {detected.value}")
    if detected is ImageFormat.PGM:
        return _decode_pgm(data)
    return _decode_png(data, detected)


def encode_pgm(img: GrayImage) -> bytes:
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    return header + img.pixels.tobytes()


# ---------------------------------------------------------------------------
# CLAHE
# ---------------------------------------------------------------------------

def _clip_histogram(hist: np.ndarray, limit: int) -> np.ndarray:
    """Clip at ``limit`` and spread the excess uniformly over all bins."""
    excess = int(np.maximum(hist - limit, 0).sum())
    clipped = np.minimum(hist, limit)
    if excess == 0:
        return clipped
    bins = clipped.size
    clipped = clipped + excess // bins
    residual = excess % bins
    if residual:
        step = max(bins // residual, 1)
        clipped[::step][:residual] += 1
    return clipped


def _tile_mapping(tile: np.ndarray, spec: ClaheSpec) -> np.ndarray:
    hist = np.bincount(tile.ravel(), minlength=HISTOGRAM_BINS)
    # A single-intensity tile maps every level to itself.
    if np.count_nonzero(hist) <= 1:
        return np.arange(HISTOGRAM_BINS, dtype=np.float64)
    total = tile.size
    if not spec.unclipped:
        limit = max(int(spec.clip_limit * total / HISTOGRAM_BINS), 1)
        hist = _clip_histogram(hist, limit)
    cdf = np.cumsum(hist)
    cdf_min = cdf[np.flatnonzero(hist)[0]]
    mapping = np.floor((cdf - cdf_min) / (total - cdf_min) * 255.0 + 0.5)
    return np.clip(mapping, 0, 255)


def _interpolation_axis(length: int, centers: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    positions = np.arange(length, dtype=np.float64)
    upper = np.searchsorted(centers, positions, side="right")
    lower = np.clip(upper - 1, 0, len(centers) - 1)
    upper = np.clip(upper, 0, len(centers) - 1)
    span = centers[upper] - centers[lower]
    weight = np.where(span > 0, (positions - centers[lower]) / np.where(span > 0, span, 1.0), 0.0)
    return lower, upper, weight


def clahe(img: GrayImage, spec: ClaheSpec | None = None) -> GrayImage:
    """Contrast-limited adaptive histogram equalization.

    Each tile of the grid gets a clipped-histogram equalization mapping; every
    output pixel bilinearly blends the mappings of the four nearest tile
    centers (nearest tile only along the image border).
    """
    spec = spec or ClaheSpec()
    rows, cols = spec.tile_grid
    if rows > img.height or cols > img.width:
        raise ShapeError(f"tile grid {rows}x{cols} is larger than image {img.height}x{img.width}")

    row_edges = (np.arange(rows + 1) * img.height) // rows
    col_edges = (np.arange(cols + 1) * img.width) // cols
    mappings = np.empty((rows, cols, HISTOGRAM_BINS), dtype=np.float64)
    for r in range(rows):
        for c in range(cols):
            tile = img.pixels[row_edges[r]:row_edges[r + 1], col_edges[c]:col_edges[c + 1]]
            mappings[r, c] = _tile_mapping(tile, spec)

    row_lo, row_hi, row_w = _interpolation_axis(img.height, (row_edges[:-1] + row_edges[1:] - 1) / 2.0)
    col_lo, col_hi, col_w = _interpolation_axis(img.width, (col_edges[:-1] + col_edges[1:] - 1) / 2.0)
    levels = img.pixels.astype(np.intp)

    def blend(tile_rows: np.ndarray) -> np.ndarray:
        left = mappings[tile_rows[:, None], col_lo[None, :], levels]
        right = mappings[tile_rows[:, None], col_hi[None, :], levels]
        return (1.0 - col_w)[None, :] * left + col_w[None, :] * right

    out = (1.0 - row_w)[:, None] * blend(row_lo) + row_w[:, None] * blend(row_hi)
    return GrayImage(_round_to_uint8(out))


# ---------------------------------------------------------------------------
# Augmentation
# ---------------------------------------------------------------------------

def flip_horizontal(img: GrayImage) -> GrayImage:
    return GrayImage(img.pixels[:, ::-1])


def flip_vertical(img: GrayImage) -> GrayImage:
    return GrayImage(img.pixels[::-1, :])


def random_flip(img: GrayImage, spec: AugmentSpec, rng: np.random.Generator) -> GrayImage:
    # Both draws always happen so the stream position never depends on the outcome.
    mirror_columns = rng.random() < spec.flip_horizontal_prob
    mirror_rows = rng.random() < spec.flip_vertical_prob
    if mirror_columns:
        img = flip_horizontal(img)
    if mirror_rows:
        img = flip_vertical(img)
    return img


def _bilinear_sample(pixels: np.ndarray, xs: np.ndarray, ys: np.ndarray, fill: float) -> np.ndarray:
    height, width = pixels.shape
    # Snap float noise from trigonometry onto the lattice.
    xs = np.where(np.abs(xs - np.rint(xs)) < 1e-9, np.rint(xs), xs)
    ys = np.where(np.abs(ys - np.rint(ys)) < 1e-9, np.rint(ys), ys)
    x0 = np.floor(xs).astype(np.intp)
    y0 = np.floor(ys).astype(np.intp)
    wx = xs - x0
    wy = ys - y0
    source = pixels.astype(np.float64)

    def at(yy: np.ndarray, xx: np.ndarray) -> np.ndarray:
        inside = (xx >= 0) & (xx < width) & (yy >= 0) & (yy < height)
        values = np.full(xx.shape, float(fill))
        values[inside] = source[yy[inside], xx[inside]]
        return values

    top = (1 - wx) * at(y0, x0) + wx * at(y0, x0 + 1)
    bottom = (1 - wx) * at(y0 + 1, x0) + wx * at(y0 + 1, x0 + 1)
    return (1 - wy) * top + wy * bottom


def rotate(img: GrayImage, angle_degrees: float, border_value: int = 0) -> GrayImage:
    """Rotate counter-clockwise about the image center, extents unchanged."""
    theta = np.deg2rad(angle_degrees)
    cos, sin = np.cos(theta), np.sin(theta)
    cx, cy = (img.width - 1) / 2.0, (img.height - 1) / 2.0
    ys, xs = np.mgrid[0:img.height, 0:img.width].astype(np.float64)
    dx, dy = xs - cx, ys - cy
    src_x = cx + cos * dx - sin * dy
    src_y = cy + sin * dx + cos * dy
    return GrayImage(_round_to_uint8(_bilinear_sample(img.pixels, src_x, src_y, border_value)))


def random_rotate(img: GrayImage, spec: AugmentSpec, rng: np.random.Generator) -> GrayImage:
    limit = spec.rotation_limit_degrees
    angle = rng.uniform(-limit, limit)
    return rotate(img, angle, spec.border_value)


def brightness_contrast(img: GrayImage, alpha: float, beta: float) -> GrayImage:
    """``(1 + alpha) * pixel + beta * 255``, clamped and rounded."""
    return GrayImage(_round_to_uint8((1.0 + alpha) * img.pixels.astype(np.float64) + beta * 255.0))


def random_brightness_contrast(img: GrayImage, spec: AugmentSpec, rng: np.random.Generator) -> GrayImage:
    alpha = rng.uniform(-spec.contrast_limit, spec.contrast_limit)
    beta = rng.uniform(-spec.brightness_limit, spec.brightness_limit)
    return brightness_contrast(img, alpha, beta)


def augment(img: GrayImage, spec: AugmentSpec, rng: np.random.Generator) -> GrayImage:
    img = random_flip(img, spec, rng)
    img = random_rotate(img, spec, rng)
    return random_brightness_contrast(img, spec, rng)


def augment_upsample(images: list[GrayImage], target_count: int, spec: AugmentSpec) -> list[GrayImage]:
    """Keep every original and top up to ``target_count`` with augmented copies.

    Copies cycle through the originals; copy ``k`` (output index ``n + k``)
    uses the seed ``spec.rng_seed ^ (n + k)``.
    """
    if not images:
        raise ToolkitError("nothing to upsample: the image list is empty", stage="augment")
    if target_count < len(images):
        raise ToolkitError(f"target count {target_count} is below the {len(images)} inputs", stage="augment")
    count = len(images)
    upsampled = list(images)
    for k in range(target_count - count):
        rng = np.random.default_rng(spec.rng_seed ^ (count + k))
        upsampled.append(augment(images[k % count], spec, rng))
    logger.info("Upsampled %d images to %d", count, target_count)
    return upsampled


# ---------------------------------------------------------------------------
# Geometry and channels
# ---------------------------------------------------------------------------

def _resize_axis(src: int, dst: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    coords = (np.arange(dst, dtype=np.float64) + 0.5) * (src / dst) - 0.5
    coords = np.clip(coords, 0, src - 1)
    lower = np.floor(coords).astype(np.intp)
    upper = np.minimum(lower + 1, src - 1)
    return lower, upper, coords - lower


def resize_bilinear(img: GrayImage, size: tuple[int, int] = (224, 224)) -> GrayImage:
    """Bilinear resize with half-pixel centers; ``size`` is (width, height)."""
    width, height = size
    if width < 1 or height < 1:
        raise ShapeError(f"resize target must be positive, got {width}x{height}")
    if (width, height) == (img.width, img.height):
        return img
    row_lo, row_hi, row_w = _resize_axis(img.height, height)
    col_lo, col_hi, col_w = _resize_axis(img.width, width)
    source = img.pixels.astype(np.float64)
    rows = (1 - row_w)[:, None] * source[row_lo] + row_w[:, None] * source[row_hi]
    out = (1 - col_w)[None, :] * rows[:, col_lo] + col_w[None, :] * rows[:, col_hi]
    return GrayImage(_round_to_uint8(out))


def stack_channels(img: GrayImage, channels: int = 3) -> ChannelImage:
    scaled = img.pixels.astype(np.float64) / 255.0
    return ChannelImage(np.repeat(scaled[:, :, None], channels, axis=2))


def preprocess_image(img: GrayImage, spec: PreprocessSpec, rng: np.random.Generator | None = None) -> GrayImage:
    """CLAHE and (when ``rng`` is given) augmentation in the configured order, then resize."""
    steps = []
    if spec.apply_clahe:
        steps.append(lambda image: clahe(image, spec.clahe))
    if rng is not None:
        augment_step = lambda image: augment(image, spec.augment, rng)
        if spec.clahe_first:
            steps.append(augment_step)
        else:
            steps.insert(0, augment_step)
    for step in steps:
        img = step(img)
    return resize_bilinear(img, spec.target_size)
