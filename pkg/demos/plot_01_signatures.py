"""
From pixels to a binary color signature
=======================================

Quantize a small synthetic image onto the 16-color palette, turn the
histogram into a signature and read the weights back out.
"""

import numpy as np

from sigtree import default_palette, encode, histogram, weight_vector
from sigtree.engine import synthetic_image
from sigtree.palette import quantize

palette = default_palette()
for i, (name, rgb) in enumerate(palette.colors):
    print(f"{i:>2} {name:<11} {rgb}")

# a 64x64 image painted in a few flat bands
rng = np.random.default_rng(7)
image = synthetic_image(rng, palette)
print(image.width, "x", image.height)

# nearest palette color per pixel, then the share of each color
labels = quantize(image.pixels.reshape(-1, 3), palette)
print("colors present:", sorted(set(labels.tolist())))

h = histogram(image, palette)
print("histogram:", np.round(h, 3))

# one bit per color block: bit ceil(h * m)
sig = encode(h, m=8)
print("signature:", sig)
print("bytes:", sig.nbytes, "vs", 4 * len(palette), "for a float32 histogram")

# the signature only keeps h rounded up to the next 1/8
print("weights (%):", weight_vector(sig))
