"""Grayscale image I/O, resizing, and class-labelled dataset scanning.

Inputs are 8-bit images: binary PGM (P5) is parsed natively, PNG is decoded
through Pillow. Colour PNGs are reduced to grayscale by integer luma. Pixel
data stays on the raw 0..255 integer scale throughout; no normalisation
happens here.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

__all__ = [
    "GrayImage",
    "LabeledSample",
    "ImageFormatError",
    "DatasetError",
    "load_image",
    "write_pgm",
    "resize_to",
    "scan_dataset",
]

_PNG_MAGIC = b"\x89PNG\r\n\x1a\n"
_IMAGE_SUFFIXES = (".png", ".pgm")

# luma weights (R, G, B); they sum to exactly 1
_LUMA = np.array([0.299, 0.587, 0.114])


class ImageFormatError(ValueError):
    """Unreadable file, unsupported bit depth, or invalid dimensions."""


class DatasetError(ValueError):
    """Dataset tree violates the ``<root>/<class>/<images>`` contract."""


@dataclass(frozen=True, eq=False)
class GrayImage:
    """An H x W grid of 8-bit intensities (uint8, row-major, read-only)."""

    pixels: np.ndarray

    def __post_init__(self) -> None:
        px = np.asarray(self.pixels)
        if px.ndim != 2 or min(px.shape) < 1:
            raise ImageFormatError(
                f"expected a 2-D image with positive size, got shape {px.shape}"
            )
        if px.dtype != np.uint8:
            if not np.issubdtype(px.dtype, np.integer):
                raise ImageFormatError(f"intensities must be integers, got {px.dtype}")
            if px.min() < 0 or px.max() > 255:
                raise ImageFormatError("intensities must lie in [0, 255]")
            px = px.astype(np.uint8)
        px = np.ascontiguousarray(px)
        px.setflags(write=False)
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        return int(self.pixels.shape[1])


@dataclass(frozen=True, eq=False)
class LabeledSample:
    """One dataset entry: image, class index, and its stable identifier."""

    image: GrayImage
    label: int
    sample_id: str


def load_image(path: str | Path) -> GrayImage:
    """Load an 8-bit grayscale PNG or binary PGM (P5).

    Colour PNGs are converted by integer luma (0.299 R + 0.587 G + 0.114 B,
    rounded half up). 16-bit inputs are rejected.
    """
    path = Path(path)
    try:
        raw = path.read_bytes()
    except OSError as exc:
        raise ImageFormatError(f"cannot read {path}: {exc}") from exc
    if raw[:2] == b"P5":
        return _decode_pgm(raw, path)
    if raw[:8] == _PNG_MAGIC:
        return _decode_png(path)
    raise ImageFormatError(f"{path}: not a binary PGM (P5) or PNG file")


def write_pgm(img: GrayImage, path: str | Path) -> None:
    """Write a binary PGM (P5, maxval 255); byte-stable for identical pixels."""
    header = f"P5\n{img.width} {img.height}\n255\n".encode("ascii")
    Path(path).write_bytes(header + img.pixels.tobytes())


def resize_to(img: GrayImage, target: int) -> GrayImage:
    """Bilinear resize to ``target x target``, rounding half up.

    Sampling uses half-pixel centres clamped to the source extent, so output
    intensities never leave the input range; an image already at the target
    size is returned unchanged.
    """
    if target < 1:
        raise ValueError(f"target side must be >= 1, got {target}")
    if img.height == target and img.width == target:
        return img
    src = img.pixels.astype(np.float64)
    rows = _sample_coords(img.height, target)
    cols = _sample_coords(img.width, target)
    r0 = np.floor(rows).astype(np.int64)
    c0 = np.floor(cols).astype(np.int64)
    r1 = np.minimum(r0 + 1, img.height - 1)
    c1 = np.minimum(c0 + 1, img.width - 1)
    fr = (rows - r0)[:, None]
    fc = (cols - c0)[None, :]
    top = src[np.ix_(r0, c0)] * (1.0 - fc) + src[np.ix_(r0, c1)] * fc
    bottom = src[np.ix_(r1, c0)] * (1.0 - fc) + src[np.ix_(r1, c1)] * fc
    out = top * (1.0 - fr) + bottom * fr
    return GrayImage(np.floor(out + 0.5).astype(np.uint8))


def scan_dataset(
    root: str | Path,
    side: int,
    expected_classes: Sequence[str] | None = None,
) -> tuple[list[LabeledSample], list[str]]:
    """Scan ``<root>/<class>/<images>`` into labelled, resized samples.

    Class indices follow ascending lexicographic order of the class directory
    names; files within a class are ordered lexicographically by name, so two
    scans of the same tree produce identical output. Returns the samples and
    the ordered class names.
    """
    root = Path(root)
    if not root.is_dir():
        raise DatasetError(f"dataset root {root} is not a directory")
    class_names = sorted(p.name for p in root.iterdir() if p.is_dir())
    if not class_names:
        raise DatasetError(f"dataset root {root} contains no class directories")
    if expected_classes is not None:
        expected = sorted(expected_classes)
        if class_names != expected:
            missing = sorted(set(expected) - set(class_names))
            extra = sorted(set(class_names) - set(expected))
            parts = []
            if missing:
                parts.append(f"missing class directories: {', '.join(missing)}")
            if extra:
                parts.append(f"unexpected class directories: {', '.join(extra)}")
            raise DatasetError(f"{root}: " + "; ".join(parts))
    samples: list[LabeledSample] = []
    for label, name in enumerate(class_names):
        class_dir = root / name
        files = sorted(
            p
            for p in class_dir.iterdir()
            if p.is_file() and p.suffix.lower() in _IMAGE_SUFFIXES
        )
        if not files:
            raise DatasetError(f"class directory {class_dir} contains no readable images")
        for file in files:
            image = resize_to(load_image(file), side)
            samples.append(
                LabeledSample(image=image, label=label, sample_id=f"{name}/{file.name}")
            )
    return samples, class_names


def _sample_coords(size: int, target: int) -> np.ndarray:
    coords = (np.arange(target) + 0.5) * (size / target) - 0.5
    return np.clip(coords, 0.0, size - 1.0)


def _decode_pgm(raw: bytes, path: Path) -> GrayImage:
    width, height, maxval, offset = _read_pgm_header(raw, path)
    if maxval > 255:
        raise ImageFormatError(
            f"{path}: maxval {maxval} PGM; only 8-bit (maxval <= 255) is supported"
        )
    if maxval < 1:
        raise ImageFormatError(f"{path}: invalid PGM maxval {maxval}")
    if width < 1 or height < 1:
        raise ImageFormatError(f"{path}: zero-dimension image ({width}x{height})")
    data = raw[offset : offset + width * height]
    if len(data) < width * height:
        raise ImageFormatError(f"{path}: truncated PGM raster")
    return GrayImage(np.frombuffer(data, dtype=np.uint8).reshape(height, width))


def _read_pgm_header(raw: bytes, path: Path) -> tuple[int, int, int, int]:
    # magic "P5" already checked; read width, height, maxval with '#' comments
    pos = 2
    values: list[int] = []
    while len(values) < 3:
        while pos < len(raw) and raw[pos : pos + 1].isspace():
            pos += 1
        if pos < len(raw) and raw[pos : pos + 1] == b"#":
            while pos < len(raw) and raw[pos] != 0x0A:
                pos += 1
            continue
        start = pos
        while pos < len(raw) and raw[pos : pos + 1].isdigit():
            pos += 1
        if pos == start:
            raise ImageFormatError(f"{path}: malformed PGM header")
        values.append(int(raw[start:pos]))
    pos += 1  # exactly one whitespace byte separates header and raster
    return values[0], values[1], values[2], pos


def _decode_png(path: Path) -> GrayImage:
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode == "L":
                return GrayImage(np.asarray(im, dtype=np.uint8))
            if mode in ("RGB", "RGBA", "LA", "P"):
                rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
                return GrayImage(_luma(rgb))
    except UnidentifiedImageError as exc:
        raise ImageFormatError(f"{path}: undecodable PNG: {exc}") from exc
    raise ImageFormatError(f"{path}: unsupported PNG mode {mode!r} (needs 8-bit depth)")


def _luma(rgb: np.ndarray) -> np.ndarray:
    y = rgb @ _LUMA
    return np.clip(np.floor(y + 0.5), 0, 255).astype(np.uint8)
