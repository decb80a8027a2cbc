import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sigtree.errors import EmptyImage, InvalidPalette
from sigtree.images import RawImage
from sigtree.palette import (
    Palette,
    default_palette,
    format_palette,
    histogram,
    parse_palette,
    quantize,
    quantize_pixel,
)

rgb = st.tuples(*[st.integers(0, 255)] * 3)


def test_default_palette_has_16_distinct_colors():
    p = default_palette()
    assert len(p) == 16
    assert len({c for _, c in p.colors}) == 16


def test_default_palette_named_colors():
    p = default_palette()
    for name in ("BLACK", "SILVER", "WHITE", "GRAY", "RED", "ORANGE", "YELLOW", "LIME GREEN",
                 "TURQUOISE", "CYAN", "OCEAN", "BLUE", "VIOLET", "MAGENTA", "RASPBERRY", "GREEN"):
        assert name in p.names
    assert p.colors[p.index("BLACK")][1] == (0, 0, 0)
    assert p.colors[p.index("WHITE")][1] == (255, 255, 255)


def test_palette_file_round_trip():
    p = default_palette()
    assert parse_palette(format_palette(p)) == p


@pytest.mark.parametrize("text", [
    "A,0,0,0\n",                       # fewer than 2 colors
    "A,0,0,0\nB,0,0,0\n",              # duplicate RGB
    "A,0,0,256\nB,1,1,1\n",            # out of range
    "A,0,0\nB,1,1,1\n",                # missing channel
    "A,x,0,0\nB,1,1,1\n",
])
def test_bad_palettes_rejected(text):
    with pytest.raises(InvalidPalette):
        parse_palette(text)


def test_quantize_exact_colors(palette):
    assert quantize_pixel((255, 0, 0), palette) == palette.index("RED")
    for k, (_, c) in enumerate(palette.colors):
        assert quantize_pixel(c, palette) == k


def test_quantize_tie_goes_to_lowest_index():
    colors = [(f"C{i}", (200, 20 * i, 0)) for i in range(8)]
    colors[3] = ("C3", (90, 100, 100))
    colors[7] = ("C7", (110, 100, 100))
    p = Palette(tuple(colors))
    assert quantize_pixel((100, 100, 100), p) == 3


@settings(max_examples=200, deadline=None)
@given(st.lists(rgb, min_size=2, max_size=8, unique=True), st.lists(rgb, min_size=1, max_size=20), st.randoms())
def test_quantize_permutation_covariant(colors, pixels, rnd):
    p = Palette(tuple((f"c{i}", c) for i, c in enumerate(colors)))
    order = list(range(len(colors)))
    rnd.shuffle(order)
    q = Palette(tuple(p.colors[i] for i in order))
    # relabeling the palette relabels every bin; exact ties may legitimately move
    px = np.array(pixels)
    base = quantize(px, p)
    moved = quantize(px, q)
    d2 = ((px[:, None, :] - p.rgb[None]) ** 2).sum(axis=2)
    for row, b, m in zip(d2, base, moved):
        if (row == row.min()).sum() == 1:
            assert order[m] == b


def img(pixels_rgb, width, height):
    return RawImage(np.array(pixels_rgb, dtype=np.uint8).reshape(height, width, 3))


def test_histogram_single_color(palette):
    h = histogram(RawImage.filled(2, 2, (255, 0, 0)), palette)
    expected = np.zeros(16)
    expected[palette.index("RED")] = 1.0
    assert np.array_equal(h, expected)


def test_histogram_two_colors(palette):
    h = histogram(img([(255, 0, 0), (0, 0, 255)] * 2, 2, 2), palette)
    assert h[palette.index("RED")] == 0.5
    assert h[palette.index("BLUE")] == 0.5
    assert h.sum() == 1.0


def test_histogram_dominant_threshold_drops_minor_bin(palette):
    pixels = [(255, 0, 0)] * 96 + [(0, 0, 255)] * 4
    image = img(pixels, 10, 10)
    kept = histogram(image, palette, 0.05)
    assert kept[palette.index("RED")] == 1.0
    assert kept[palette.index("BLUE")] == 0.0
    plain = histogram(image, palette)
    assert plain[palette.index("BLUE")] == pytest.approx(0.04)


def test_histogram_threshold_falls_back_when_everything_drops(palette):
    colors = [c for _, c in palette.colors[:4]]
    h = histogram(img(colors, 2, 2), palette, 0.5)
    assert np.allclose(h[:4], 0.25)


def test_histogram_rejects_empty_image(palette):
    with pytest.raises(EmptyImage):
        histogram(RawImage(np.zeros((0, 4, 3), dtype=np.uint8)), palette)


@settings(max_examples=100, deadline=None)
@given(st.integers(1, 12), st.integers(1, 12), st.integers(0, 2**32 - 1))
def test_histogram_is_normalized(w, h, seed):
    rng = np.random.default_rng(seed)
    image = RawImage(rng.integers(0, 256, (h, w, 3), dtype=np.uint8))
    for threshold in (0.0, 0.2):
        hist = histogram(image, default_palette(), threshold)
        assert abs(hist.sum() - 1.0) < 1e-9
        assert np.all((hist >= 0) & (hist <= 1))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 10), st.integers(1, 10), st.integers(0, 2**32 - 1))
def test_histogram_of_concatenation_is_mean(w, h, seed):
    rng = np.random.default_rng(seed)
    a = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
    b = rng.integers(0, 256, (h, w, 3), dtype=np.uint8)
    p = default_palette()
    joined = histogram(RawImage(np.concatenate([a, b], axis=1)), p)
    assert np.allclose(joined, (histogram(RawImage(a), p) + histogram(RawImage(b), p)) / 2, atol=1e-12)
