"""Raw RGB images and decoding.

PNG and JPEG go through Pillow. Binary PPM (P6) is parsed here directly so
test fixtures never depend on an image codec.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .errors import ImageDecodeError


@dataclass(frozen=True, eq=False)
class RawImage:
    """An 8-bit RGB raster, stored as a ``(height, width, 3)`` uint8 array."""

    pixels: np.ndarray

    def __post_init__(self):
        px = np.asarray(self.pixels, dtype=np.uint8)
        if px.ndim != 3 or px.shape[2] != 3:
            raise ValueError(f"expected (height, width, 3) pixels, got {px.shape}")
        object.__setattr__(self, "pixels", px)

    @property
    def height(self) -> int:
        return self.pixels.shape[0]

    @property
    def width(self) -> int:
        return self.pixels.shape[1]

    @classmethod
    def filled(cls, width: int, height: int, rgb) -> "RawImage":
        px = np.empty((height, width, 3), dtype=np.uint8)
        px[...] = rgb
        return cls(px)

    def __eq__(self, other):
        if not isinstance(other, RawImage):
            return NotImplemented
        return np.array_equal(self.pixels, other.pixels)


def _ppm_tokens(data: bytes, count: int):
    # header tokens are whitespace separated; '#' starts a comment to end of line
    tokens = []
    pos = 0
    while len(tokens) < count:
        while pos < len(data) and data[pos : pos + 1].isspace():
            pos += 1
        if pos >= len(data):
            raise ImageDecodeError("truncated PPM header")
        if data[pos : pos + 1] == b"#":
            while pos < len(data) and data[pos : pos + 1] not in (b"\n", b"\r"):
                pos += 1
            continue
        start = pos
        while pos < len(data) and not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    # exactly one whitespace byte separates maxval from the raster
    return tokens, pos + 1


def decode_ppm(data: bytes) -> RawImage:
    tokens, offset = _ppm_tokens(data, 4)
    if tokens[0] != b"P6":
        raise ImageDecodeError("not a binary PPM (P6) file")
    try:
        width, height, maxval = (int(t) for t in tokens[1:])
    except ValueError as exc:
        raise ImageDecodeError(f"bad PPM header: {exc}") from None
    if maxval != 255:
        raise ImageDecodeError(f"only 8-bit PPM supported, maxval={maxval}")
    need = width * height * 3
    raster = data[offset : offset + need]
    if len(raster) != need:
        raise ImageDecodeError(f"PPM raster truncated: {len(raster)} of {need} bytes")
    px = np.frombuffer(raster, dtype=np.uint8).reshape(height, width, 3)
    return RawImage(px.copy())


def encode_ppm(image: RawImage) -> bytes:
    header = f"P6\n{image.width} {image.height}\n255\n".encode("ascii")
    return header + image.pixels.tobytes()


def write_ppm(path, image: RawImage) -> None:
    Path(path).write_bytes(encode_ppm(image))


def read_image(path) -> RawImage:
    """Decode a PPM (P6), PNG or JPEG file into RGB."""
    path = Path(path)
    try:
        data = path.read_bytes()
    except OSError as exc:
        raise ImageDecodeError(f"{path}: {exc}") from exc
    if data[:2] == b"P6":
        return decode_ppm(data)

    from io import BytesIO

    from PIL import Image, UnidentifiedImageError

    try:
        with Image.open(BytesIO(data)) as im:
            rgb = im.convert("RGB")
            return RawImage(np.asarray(rgb, dtype=np.uint8))
    except (UnidentifiedImageError, OSError, ValueError) as exc:
        raise ImageDecodeError(f"{path}: {exc}") from exc


IMAGE_SUFFIXES = frozenset({".ppm", ".png", ".jpg", ".jpeg"})
