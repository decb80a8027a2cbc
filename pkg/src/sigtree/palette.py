"""Fixed reference palettes and palette-binned color histograms."""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from importlib import resources
from pathlib import Path
from typing import Sequence, Tuple

import numpy as np

from .errors import EmptyImage, InvalidPalette
from .images import RawImage

RGB = Tuple[int, int, int]

DEFAULT_PALETTE_FILE = "palette_v1.csv"


@dataclass(frozen=True)
class Palette:
    """Ordered named reference colors. Bin index is list position."""

    colors: Tuple[Tuple[str, RGB], ...]

    def __post_init__(self):
        colors = tuple((str(name), tuple(int(c) for c in rgb)) for name, rgb in self.colors)
        if len(colors) < 2:
            raise InvalidPalette(f"palette needs at least 2 colors, got {len(colors)}")
        for name, rgb in colors:
            if len(rgb) != 3 or not all(0 <= c <= 255 for c in rgb):
                raise InvalidPalette(f"{name}: RGB components must be 3 integers in 0..255")
            if "," in name or "\n" in name:
                raise InvalidPalette(f"color name may not contain ',' or newline: {name!r}")
        if len({rgb for _, rgb in colors}) != len(colors):
            raise InvalidPalette("palette RGB triples must be distinct")
        object.__setattr__(self, "colors", colors)

    def __len__(self) -> int:
        return len(self.colors)

    @property
    def names(self) -> Tuple[str, ...]:
        return tuple(name for name, _ in self.colors)

    @property
    def rgb(self) -> np.ndarray:
        return np.array([rgb for _, rgb in self.colors], dtype=np.int64)

    def index(self, name: str) -> int:
        return self.names.index(name)


def parse_palette(text: str) -> Palette:
    """Parse ``name,R,G,B`` lines; blank lines are ignored."""
    colors = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.strip()
        if not line:
            continue
        parts = [p.strip() for p in line.split(",")]
        if len(parts) != 4:
            raise InvalidPalette(f"line {lineno}: expected name,R,G,B")
        try:
            rgb = tuple(int(p) for p in parts[1:])
        except ValueError:
            raise InvalidPalette(f"line {lineno}: RGB must be integers") from None
        colors.append((parts[0], rgb))
    return Palette(tuple(colors))


def format_palette(palette: Palette) -> str:
    return "".join(f"{name},{r},{g},{b}\n" for name, (r, g, b) in palette.colors)


def load_palette(path) -> Palette:
    return parse_palette(Path(path).read_text(encoding="utf-8"))


@lru_cache(maxsize=None)
def default_palette() -> Palette:
    """The 16-color palette: 4 achromatic levels plus 12 hues 30 degrees apart."""
    text = resources.files("sigtree").joinpath("data").joinpath(DEFAULT_PALETTE_FILE).read_text("utf-8")
    return parse_palette(text)


def quantize(pixels: np.ndarray, palette: Palette) -> np.ndarray:
    """Map an ``(..., 3)`` array of RGB pixels to nearest palette bins.

    Distances are exact integer squared distances, so equidistant pixels
    deterministically fall into the lowest bin index (``argmin`` keeps the
    first minimum).
    """
    px = np.asarray(pixels, dtype=np.int64)
    shape = px.shape[:-1]
    flat = px.reshape(-1, 3)
    ref = palette.rgb
    d2 = ((flat[:, None, :] - ref[None, :, :]) ** 2).sum(axis=2)
    return d2.argmin(axis=1).reshape(shape)


def quantize_pixel(pixel: Sequence[int], palette: Palette) -> int:
    return int(quantize(np.asarray(pixel).reshape(1, 3), palette)[0])


def histogram(image: RawImage, palette: Palette, dominant_threshold: float = 0.0) -> np.ndarray:
    """Normalized per-bin pixel fractions of ``image``.

    Bins whose raw fraction is below ``dominant_threshold`` are dropped and
    the survivors renormalized. If nothing survives, the threshold is
    ignored.
    """
    if not 0.0 <= dominant_threshold < 1.0:
        raise ValueError(f"dominant_threshold must be in [0, 1), got {dominant_threshold}")
    total = image.width * image.height
    if total == 0:
        raise EmptyImage("image has no pixels")

    # quantize unique colors only; photos repeat colors heavily
    flat = image.pixels.reshape(-1, 3)
    packed = (flat[:, 0].astype(np.uint32) << 16) | (flat[:, 1].astype(np.uint32) << 8) | flat[:, 2]
    uniq, counts = np.unique(packed, return_counts=True)
    uniq_rgb = np.stack([(uniq >> 16) & 255, (uniq >> 8) & 255, uniq & 255], axis=1)
    bins = quantize(uniq_rgb, palette)
    raw = np.bincount(bins, weights=counts, minlength=len(palette)) / total

    kept = np.where(raw < dominant_threshold, 0.0, raw)
    if kept.sum() == 0.0:
        kept = raw
    return kept / kept.sum()

