from __future__ import annotations

import csv
import io
import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Tuple

import numpy as np

from .constants import MAX_IMAGE_PIXELS, PGM_MAXVAL, ImageFormat
from .converters import format_decimal, parse_decimal
from .errors import ImageFormatError
from .helpers import PathLike, atomic_write, atomic_write_json, read_json
from .rng import SweepSeed
from .types import ManifestDocument

log = logging.getLogger("robustgrid")

BLOB_AMPLITUDE = 0.35
JITTER = 0.05

Sample = Tuple["Image", int]


@dataclass(frozen=True, eq=False)
class Image:
    """Grayscale image with row-major pixels in [0, 1]."""

    width: int
    height: int
    pixels: np.ndarray

    def __post_init__(self):
        if self.width < 1 or self.height < 1:
            raise ImageFormatError("image dimensions must be positive")
        if self.width * self.height > MAX_IMAGE_PIXELS:
            raise ImageFormatError(f"image of {self.width}x{self.height} pixels is too large")
        pixels = np.array(self.pixels, dtype=np.float64).reshape(-1)
        if pixels.shape[0] != self.width * self.height:
            raise ImageFormatError(f"expected {self.width * self.height} pixels, got {pixels.shape[0]}")
        if not np.all((pixels >= 0.0) & (pixels <= 1.0)):
            raise ImageFormatError("pixel values must lie in [0, 1]")
        pixels.setflags(write=False)
        object.__setattr__(self, "pixels", pixels)

    def as_matrix(self) -> np.ndarray:
        return self.pixels.reshape(self.height, self.width)

    def __eq__(self, other):
        if not isinstance(other, Image):
            return NotImplemented
        return (self.width, self.height) == (other.width, other.height) and np.array_equal(self.pixels, other.pixels)

    __hash__ = None


def _pgm_header(data: bytes) -> Tuple[List[int], int]:
    """Return (width, height, maxval) and the offset of the raster."""
    tokens: List[bytes] = []
    pos = 0
    while len(tokens) < 4:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos < len(data) and data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace() and data[pos : pos + 1] != b"#":
            pos += 1
        if start == pos:
            raise ImageFormatError("truncated PGM header")
        tokens.append(data[start:pos])
    if tokens[0] != b"P5":
        raise ImageFormatError(f"expected a binary PGM (P5), got {tokens[0][:8]!r}")
    try:
        values = [int(t) for t in tokens[1:]]
    except ValueError as exc:
        raise ImageFormatError("malformed PGM header") from exc
    # exactly one whitespace byte separates the header from the raster
    if pos >= len(data) or not data[pos : pos + 1].isspace():
        raise ImageFormatError("malformed PGM header")
    return values, pos + 1


def parse_pgm(data: bytes) -> Image:
    (width, height, maxval), offset = _pgm_header(data)
    if width < 1 or height < 1:
        raise ImageFormatError("PGM dimensions must be positive")
    if width * height > MAX_IMAGE_PIXELS:
        raise ImageFormatError(f"PGM of {width}x{height} pixels is too large")
    if maxval != PGM_MAXVAL:
        raise ImageFormatError(f"only maxval {PGM_MAXVAL} is supported, got {maxval}")
    raster = data[offset:]
    if len(raster) != width * height:
        raise ImageFormatError(f"PGM raster holds {len(raster)} bytes, expected {width * height}")
    pixels = np.frombuffer(raster, dtype=np.uint8).astype(np.float64) / PGM_MAXVAL
    return Image(width, height, pixels)


def parse_csv(text: str) -> Image:
    rows = [row for row in csv.reader(io.StringIO(text)) if any(cell.strip() for cell in row)]
    if not rows:
        raise ImageFormatError("empty CSV image")
    width = len(rows[0])
    if any(len(row) != width for row in rows):
        raise ImageFormatError("CSV rows must all have the same length")
    if width * len(rows) > MAX_IMAGE_PIXELS:
        raise ImageFormatError(f"CSV of {width}x{len(rows)} pixels is too large")
    try:
        pixels = [parse_decimal(cell, what="pixel") for row in rows for cell in row]
    except ValueError as exc:
        raise ImageFormatError(str(exc)) from exc
    for value in pixels:
        if not 0.0 <= value <= 1.0:
            raise ImageFormatError(f"pixel value {value!r} is outside [0, 1]")
    return Image(width, len(rows), np.array(pixels))


def image_format(path: PathLike) -> ImageFormat:
    try:
        return ImageFormat.get_from_name(Path(path).suffix)
    except KeyError as exc:
        raise ImageFormatError(f"{path}: unsupported image extension") from exc


def load_image(path: PathLike) -> Image:
    if image_format(path) is ImageFormat.pgm:
        with open(path, "rb") as fp:
            return parse_pgm(fp.read())
    with open(path, "r", encoding="utf-8", newline="") as fp:
        return parse_csv(fp.read())


def encode_pgm(img: Image) -> bytes:
    raster = np.rint(img.pixels * PGM_MAXVAL).astype(np.uint8).tobytes()
    return f"P5\n{img.width} {img.height}\n{PGM_MAXVAL}\n".encode("ascii") + raster


def encode_csv(img: Image) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    for row in img.as_matrix():
        writer.writerow([format_decimal(p) for p in row])
    return buf.getvalue()


def save_image(img: Image, path: PathLike) -> Path:
    if image_format(path) is ImageFormat.pgm:
        return atomic_write(path, encode_pgm(img))
    return atomic_write(path, encode_csv(img))


def downscale(img: Image, factor: int) -> Image:
    """Block-mean pooling by an integer factor."""
    if factor < 1:
        raise ValueError("downscale factor must be positive")
    if img.width % factor or img.height % factor:
        raise ImageFormatError(f"{img.width}x{img.height} image is not divisible by {factor}")
    if factor == 1:
        return img
    blocks = img.as_matrix().reshape(img.height // factor, factor, img.width // factor, factor)
    pooled = np.clip(blocks.mean(axis=(1, 3)), 0.0, 1.0)
    return Image(img.width // factor, img.height // factor, pooled.reshape(-1))


def class_cell(row: int, col: int, side: int, num_classes: int) -> int:
    """Index of the cell holding (row, col) when the image is split into a g x g layout."""
    g = math.ceil(math.sqrt(num_classes))
    return (row * g // side) * g + (col * g // side)


def synth_dataset(seed: int, count: int, side: int, num_classes: int) -> List[Sample]:
    """
    Generate `count` labelled images of `side` x `side` pixels.

    Labels are assigned round-robin. Class `c` gets a base intensity of
    ``0.1 + 0.05 * (c % 4)`` and a blob filling cell `c` of a g x g layout
    (g = ceil(sqrt(num_classes))), then every pixel receives uniform jitter.
    """
    if count < 1 or side < 4 or num_classes < 2:
        raise ValueError("synth_dataset needs count >= 1, side >= 4 and num_classes >= 2")
    rng = SweepSeed(seed).generator()
    cells = np.array([[class_cell(r, c, side, num_classes) for c in range(side)] for r in range(side)])
    samples: List[Sample] = []
    for i in range(count):
        label = i % num_classes
        base = 0.1 + 0.05 * (label % 4)
        pixels = np.where(cells == label, base + BLOB_AMPLITUDE, base)
        pixels = pixels + rng.uniform(-JITTER, JITTER, size=pixels.shape)
        samples.append((Image(side, side, np.clip(pixels, 0.0, 1.0).reshape(-1)), label))
    return samples


def load_manifest(path: PathLike, factor: int = 1) -> List[Sample]:
    path = Path(path)
    doc: ManifestDocument = read_json(path)
    if not isinstance(doc, dict) or not isinstance(doc.get("images"), list):
        raise ImageFormatError(f"{path}: manifest needs an 'images' list")
    samples: List[Sample] = []
    for entry in doc["images"]:
        label = entry.get("label") if isinstance(entry, dict) else None
        if isinstance(label, bool) or not isinstance(label, int) or label < 0:
            raise ImageFormatError(f"{path}: every entry needs a 'path' and a non-negative integer 'label'")
        samples.append((downscale(load_image(path.parent / entry["path"]), factor), label))
    log.info(f"loaded {len(samples)} images from {path}")
    return samples


def write_dataset(
    samples: List[Sample], directory: PathLike, fmt: ImageFormat = ImageFormat.csv, name: Optional[str] = None
) -> Path:
    """Write every image plus a manifest; returns the manifest path."""
    directory = Path(directory)
    entries = []
    for i, (img, label) in enumerate(samples):
        filename = f"image-{i:04d}.{fmt.value}"
        save_image(img, directory / filename)
        entries.append({"path": filename, "label": label})
    return atomic_write_json(directory / (name or "manifest.json"), {"images": entries})
