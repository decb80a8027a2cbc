"""Image retrieval with binary color signatures, exact EMD and an EMD-guided S-tree."""

from .emd import FlowPlan, cost_matrix, emd, emd_signatures, oracle_transport, solve_transport
from .engine import (
    Index,
    IndexConfig,
    QueryResult,
    bench,
    build_index,
    linear_scan,
    load_index,
    query,
    save_index,
    synthetic_corpus,
)
from .images import RawImage, read_image, write_ppm
from .palette import Palette, default_palette, histogram, quantize_pixel
from .signature import Signature, covers, encode, union, weight_vector
from .stree import STree

__version__ = "0.1.0"
