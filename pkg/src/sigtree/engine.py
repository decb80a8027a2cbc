"""Index build, query, persistence and benchmarking.

Build: image -> palette histogram -> signature -> S-tree insert.
Query: image -> signature -> S-tree candidates -> exact EMD re-ranking.
``linear_scan`` is the exhaustive baseline the tree is measured against.
"""

from __future__ import annotations

import csv
import io
import logging
import struct
import time
import zlib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Union

import numpy as np

from .emd import cost_matrix, emd_signatures
from .errors import (
    CorruptIndex,
    ImageDecodeError,
    IndexNotFound,
    MalformedSignature,
    NoValidImages,
    VersionMismatch,
)
from .images import RawImage, read_image
from .palette import Palette, default_palette, histogram
from .signature import DEFAULT_BITS_PER_BLOCK, Signature, encode
from .stree import MULTI, SEARCH_MODES, SINGLE, Entry, Node, STree

log = logging.getLogger(__name__)

MAGIC = b"STR1"
FORMAT_VERSION = 1

BENCH_COLUMNS = (
    "size",
    "build_emd_comparisons",
    "build_ms",
    "query_emd_comparisons_single",
    "query_emd_comparisons_multi",
    "query_emd_comparisons_linear",
    "query_ms_each",
    "recall_at_10_vs_linear",
)

SYNTHETIC_SIZE = 64


@dataclass(frozen=True)
class IndexConfig:
    palette: Palette = field(default_factory=default_palette)
    bits_per_color: int = DEFAULT_BITS_PER_BLOCK
    max_node: int = 6
    min_node: int = 2
    dominant_threshold: float = 0.0
    mode: str = SINGLE
    seed: int = 42

    def __post_init__(self):
        if self.mode not in SEARCH_MODES:
            raise ValueError(f"mode must be one of {SEARCH_MODES}")
        if not 1 <= self.bits_per_color <= 64:
            raise ValueError("bits_per_color must be in 1..64")
        if not 0.0 <= self.dominant_threshold < 1.0:
            raise ValueError("dominant_threshold must be in [0, 1)")
        if self.max_node < 2 or not 1 <= self.min_node <= self.max_node // 2:
            raise ValueError("need max_node >= 2 and 1 <= min_node <= max_node / 2")


@dataclass
class BuildStats:
    emd_comparisons: int
    elapsed_ms: float
    skipped: List[str] = field(default_factory=list)


@dataclass(frozen=True)
class Hit:
    rank: int
    oid: int
    distance: float
    path: str


@dataclass
class QueryResult:
    hits: List[Hit]
    candidates: int
    emd_evaluations: int
    coverage_tests: int
    elapsed_ms: float

    def to_json(self) -> list:
        return [{"rank": h.rank, "oid": h.oid, "path": h.path, "distance": h.distance} for h in self.hits]


class Index:
    """An S-tree plus the configuration and path table it was built with."""

    def __init__(self, config: IndexConfig, paths: List[str], tree: STree):
        self.config = config
        self.paths = paths
        self.tree = tree
        self.build_stats: Optional[BuildStats] = None
        self._signatures: Optional[Dict[int, Signature]] = None

    @property
    def cost(self) -> np.ndarray:
        return self.tree.cost

    @property
    def count(self) -> int:
        return self.tree.count

    def signatures(self) -> Dict[int, Signature]:
        if self._signatures is None:
            self._signatures = dict((oid, sig) for sig, oid in self.tree.items())
        return self._signatures

    def path(self, oid: int) -> str:
        return self.paths[oid]

    def validate(self) -> List[str]:
        problems = self.tree.validate()
        if len(self.paths) != self.tree.count:
            problems.append(f"path table has {len(self.paths)} rows for {self.tree.count} images")
        return problems


def new_tree(config: IndexConfig) -> STree:
    return STree(
        cost_matrix(config.palette),
        n=len(config.palette),
        m=config.bits_per_color,
        max_entries=config.max_node,
        min_entries=config.min_node,
    )


def image_signature(image: Union[RawImage, str, Path, Signature], config: IndexConfig) -> Signature:
    if isinstance(image, Signature):
        return image
    if not isinstance(image, RawImage):
        image = read_image(image)
    h = histogram(image, config.palette, config.dominant_threshold)
    return encode(h, config.bits_per_color)


def index_signatures(sigs: Sequence[Signature], paths: Sequence[str], config: IndexConfig) -> Index:
    """Insert pre-computed signatures in order; oid = position."""
    tree = new_tree(config)
    start = time.perf_counter()
    for oid, sig in enumerate(sigs):
        tree.insert(sig, oid)
    elapsed = (time.perf_counter() - start) * 1000.0
    index = Index(config, list(paths), tree)
    index.build_stats = BuildStats(tree.emd_evaluations, elapsed)
    return index


def build_index(paths: Iterable, config: Optional[IndexConfig] = None, out=None) -> Index:
    """Index image files in lexicographic path order, skipping undecodable ones."""
    config = config or IndexConfig()
    ordered = sorted(str(p) for p in paths)
    sigs, kept, skipped = [], [], []
    for p in ordered:
        try:
            sigs.append(image_signature(p, config))
        except ImageDecodeError as exc:
            log.warning("skipping %s: %s", p, exc)
            skipped.append(p)
            continue
        kept.append(p)
    if not sigs:
        raise NoValidImages(f"none of {len(ordered)} inputs could be decoded")
    index = index_signatures(sigs, kept, config)
    index.build_stats.skipped = skipped
    log.info(
        "indexed %d images (%d skipped): %d EMD comparisons, %.1f ms, height %d",
        index.count, len(skipped), index.build_stats.emd_comparisons,
        index.build_stats.elapsed_ms, index.tree.height,
    )
    if out is not None:
        save_index(index, out)
    return index


def _ensure_index(index) -> Index:
    if isinstance(index, Index):
        return index
    return load_index(index)


def _rank(pairs, index: Index, k: int) -> List[Hit]:
    pairs.sort(key=lambda t: (t[1], t[0]))
    return [Hit(r, oid, d, index.path(oid)) for r, (oid, d) in enumerate(pairs[:k], 1)]


def query(index, image, k: int = 10, mode: Optional[str] = None, strict_coverage: bool = False) -> QueryResult:
    """Top-``k`` images by exact EMD among the S-tree's candidates."""
    if k < 1:
        raise ValueError("k must be at least 1")
    index = _ensure_index(index)
    sig = image_signature(image, index.config)
    start = time.perf_counter()
    found = index.tree.search(sig, mode or index.config.mode, strict_coverage)
    pairs = [(oid, emd_signatures(s, sig, index.cost)) for s, oid in found.entries]
    hits = _rank(pairs, index, k)
    elapsed = (time.perf_counter() - start) * 1000.0
    return QueryResult(
        hits,
        candidates=len(found.entries),
        emd_evaluations=found.emd_evaluations + len(pairs),
        coverage_tests=found.coverage_tests,
        elapsed_ms=elapsed,
    )


def linear_scan(index, image, k: int = 10) -> QueryResult:
    """Exhaustive EMD against every stored signature."""
    if k < 1:
        raise ValueError("k must be at least 1")
    index = _ensure_index(index)
    sig = image_signature(image, index.config)
    start = time.perf_counter()
    pairs = [(oid, emd_signatures(s, sig, index.cost)) for oid, s in index.signatures().items()]
    hits = _rank(pairs, index, k)
    elapsed = (time.perf_counter() - start) * 1000.0
    return QueryResult(hits, len(pairs), len(pairs), 0, elapsed)


def recall_at_k(found: QueryResult, truth: QueryResult, k: int = 10) -> float:
    """Share of the true top-``k`` recovered, counting ties at the k-th distance as hits."""
    top = truth.hits[:k]
    if not top:
        return 1.0
    cutoff = top[-1].distance + 1e-9
    got = sum(1 for h in found.hits[:k] if h.distance <= cutoff)
    return min(got, len(top)) / len(top)


# -- persistence ---------------------------------------------------------------

_U8 = struct.Struct("<B")
_U16 = struct.Struct("<H")
_U32 = struct.Struct("<I")
_U64 = struct.Struct("<Q")
_CONFIG = struct.Struct("<HHHdBQ")
_NODE = struct.Struct("<BH")
LEAF, INTERNAL = 0, 1


def _subtree_sizes(node: Node, sizes: dict) -> int:
    size = _NODE.size
    for e in node.entries:
        size += len(e.sig.to_bytes()) + 8
    total = size
    if not node.leaf:
        for e in node.entries:
            total += _subtree_sizes(e.child, sizes)
    sizes[id(node)] = (size, total)
    return total


def _write_node(node: Node, sizes: dict, out: bytearray) -> None:
    # children follow their parent in pre-order, so offsets are buffer positions
    start = len(out)
    out += _NODE.pack(LEAF if node.leaf else INTERNAL, len(node.entries))
    child_at = start + sizes[id(node)][0]
    for e in node.entries:
        out += e.sig.to_bytes()
        if node.leaf:
            out += _U64.pack(e.oid)
        else:
            out += _U64.pack(child_at)
            child_at += sizes[id(e.child)][1]
    if not node.leaf:
        for e in node.entries:
            _write_node(e.child, sizes, out)


def serialize_tree(tree: STree) -> bytes:
    out = bytearray()
    out += _U64.pack(tree.count)
    if tree.root is None:
        out += _U8.pack(0)
        return bytes(out)
    out += _U8.pack(1)
    sizes: dict = {}
    _subtree_sizes(tree.root, sizes)
    nodes = bytearray()
    _write_node(tree.root, sizes, nodes)
    out += nodes
    return bytes(out)


def index_to_bytes(index: Index) -> bytes:
    cfg = index.config
    out = bytearray(MAGIC)
    out += _U32.pack(FORMAT_VERSION)
    out += _CONFIG.pack(
        cfg.bits_per_color, cfg.max_node, cfg.min_node, cfg.dominant_threshold,
        SEARCH_MODES.index(cfg.mode), cfg.seed,
    )
    out += _U16.pack(len(cfg.palette))
    for name, (r, g, b) in cfg.palette.colors:
        raw = name.encode("utf-8")
        out += _U16.pack(len(raw)) + raw + bytes((r, g, b))
    out += _U64.pack(len(index.paths))
    for oid, p in enumerate(index.paths):
        raw = p.encode("utf-8")
        out += _U64.pack(oid) + _U32.pack(len(raw)) + raw
    out += serialize_tree(index.tree)
    out += _U32.pack(zlib.crc32(out))
    return bytes(out)


def save_index(index: Index, path) -> None:
    Path(path).write_bytes(index_to_bytes(index))


class _Reader:
    def __init__(self, data: bytes, pos: int = 0):
        self.data = data
        self.pos = pos

    def take(self, fmt: struct.Struct):
        if self.pos + fmt.size > len(self.data):
            raise CorruptIndex("unexpected end of index data")
        vals = fmt.unpack_from(self.data, self.pos)
        self.pos += fmt.size
        return vals if len(vals) > 1 else vals[0]

    def raw(self, size: int) -> bytes:
        if self.pos + size > len(self.data):
            raise CorruptIndex("unexpected end of index data")
        chunk = self.data[self.pos : self.pos + size]
        self.pos += size
        return chunk

    def sig(self) -> Signature:
        try:
            s, self.pos = Signature.unpack_from(self.data, self.pos)
        except MalformedSignature as exc:
            raise CorruptIndex(f"bad signature: {exc}") from None
        return s


def _read_node(data: bytes, offset: int, parent: Optional[Node], tree: STree, depth: int) -> Node:
    if depth > 64:
        raise CorruptIndex("tree deeper than any valid index")
    r = _Reader(data, offset)
    kind, count = r.take(_NODE)
    if kind not in (LEAF, INTERNAL):
        raise CorruptIndex(f"unknown node kind {kind}")
    node = Node(kind == LEAF, parent=parent)
    links = []
    for _ in range(count):
        sig = r.sig()
        if sig.n != tree.n or sig.m != tree.m:
            raise CorruptIndex("signature shape disagrees with index config")
        target = r.take(_U64)
        entry = Entry(sig, oid=target) if node.leaf else Entry(sig)
        node.entries.append(entry)
        links.append(target)
    if not node.leaf:
        for entry, child_at in zip(node.entries, links):
            if child_at <= offset or child_at >= len(data):
                raise CorruptIndex("child offset out of range")
            entry.child = _read_node(data, child_at, node, tree, depth + 1)
    return node


def index_from_bytes(data: bytes) -> Index:
    if len(data) < len(MAGIC) + 8 or data[: len(MAGIC)] != MAGIC:
        raise CorruptIndex("not a sigtree index (bad magic)")
    body, (crc,) = data[:-4], _U32.unpack(data[-4:])
    if zlib.crc32(body) != crc:
        raise CorruptIndex("checksum mismatch (truncated or damaged file)")
    r = _Reader(body, len(MAGIC))
    version = r.take(_U32)
    if version != FORMAT_VERSION:
        raise VersionMismatch(f"index format version {version}, expected {FORMAT_VERSION}")

    bits, max_node, min_node, threshold, mode, seed = r.take(_CONFIG)
    colors = []
    for _ in range(r.take(_U16)):
        name = r.raw(r.take(_U16)).decode("utf-8")
        colors.append((name, tuple(r.raw(3))))
    try:
        config = IndexConfig(
            Palette(tuple(colors)), bits, max_node, min_node, threshold, SEARCH_MODES[mode], seed
        )
    except (ValueError, IndexError) as exc:
        raise CorruptIndex(f"bad config block: {exc}") from None

    paths = []
    for expected in range(r.take(_U64)):
        oid = r.take(_U64)
        if oid != expected:
            raise CorruptIndex("path table out of order")
        paths.append(r.raw(r.take(_U32)).decode("utf-8"))

    tree = new_tree(config)
    tree.count = r.take(_U64)
    if r.take(_U8):
        nodes = body[r.pos :]
        tree.root = _read_node(nodes, 0, None, tree, 0)
    tree._oids = {oid for _, oid in tree.items()}
    if len(tree._oids) != tree.count:
        raise CorruptIndex("leaf count disagrees with header")
    return Index(config, paths, tree)


def load_index(path) -> Index:
    path = Path(path)
    if not path.is_file():
        raise IndexNotFound(f"no index at {path}")
    return index_from_bytes(path.read_bytes())


# -- synthetic corpora and benchmarking -------------------------------------------


def synthetic_image(rng: np.random.Generator, palette: Palette, size: int = SYNTHETIC_SIZE) -> RawImage:
    """A square image of 1-4 palette-colored bands with random proportions."""
    k = int(rng.integers(1, 5))
    colors = rng.choice(len(palette), size=k, replace=False)
    shares = rng.dirichlet(np.ones(k))
    cuts = np.rint(np.cumsum(shares) * size).astype(int)
    cuts[-1] = size
    band = np.zeros(size, dtype=np.int64)
    start = 0
    for c, stop in zip(colors, cuts):
        band[start:stop] = c
        start = stop
    layout = np.broadcast_to(band, (size, size))
    if rng.integers(2):
        layout = layout.T
    return RawImage(palette.rgb[layout].astype(np.uint8))


def synthetic_corpus(count: int, seed: int, palette: Optional[Palette] = None) -> List[RawImage]:
    palette = palette or default_palette()
    rng = np.random.default_rng(seed)
    return [synthetic_image(rng, palette) for _ in range(count)]


@dataclass
class BenchRow:
    size: int
    build_emd_comparisons: int
    build_ms: float
    query_emd_comparisons_single: float
    query_emd_comparisons_multi: float
    query_emd_comparisons_linear: float
    query_ms_each: float
    recall_single: float
    recall_multi: float
    height: int
    max_single_emd_evaluations: int

    def csv_cells(self) -> list:
        return [
            self.size,
            self.build_emd_comparisons,
            f"{self.build_ms:.3f}",
            f"{self.query_emd_comparisons_single:.3f}",
            f"{self.query_emd_comparisons_multi:.3f}",
            f"{self.query_emd_comparisons_linear:.3f}",
            f"{self.query_ms_each:.3f}",
            f"{self.recall_single:.4f}/{self.recall_multi:.4f}",
        ]


def bench_corpus(index: Index, queries: Sequence[Signature], k: int = 10) -> dict:
    """Query stats for one built index: both tree modes against the linear baseline."""
    single, multi, linear, ms, rs, rm = [], [], [], [], [], []
    for q in queries:
        truth = linear_scan(index, q, k)
        a = query(index, q, k, SINGLE)
        b = query(index, q, k, MULTI)
        single.append(a.emd_evaluations)
        multi.append(b.emd_evaluations)
        linear.append(truth.emd_evaluations)
        ms.append(a.elapsed_ms)
        rs.append(recall_at_k(a, truth, k))
        rm.append(recall_at_k(b, truth, k))
    return dict(
        single=float(np.mean(single)),
        multi=float(np.mean(multi)),
        linear=float(np.mean(linear)),
        ms=float(np.mean(ms)),
        recall_single=float(np.mean(rs)),
        recall_multi=float(np.mean(rm)),
        max_single=int(max(single)),
    )


def bench(
    sizes: Sequence[int],
    query_count: int = 50,
    config: Optional[IndexConfig] = None,
    out=None,
    corpus: Optional[Sequence] = None,
) -> List[BenchRow]:
    """Build and query synthetic (or supplied) corpora of growing size.

    With ``corpus`` given, each size uses its first ``size`` items (images
    or paths). Query images are drawn from a separate synthetic stream, so
    they are generally not in the index.
    """
    config = config or IndexConfig()
    sizes = list(sizes)
    if sizes != sorted(sizes):
        raise ValueError("sizes must be ascending")
    rng = np.random.default_rng(config.seed + 1)
    queries = [image_signature(synthetic_image(rng, config.palette), config) for _ in range(query_count)]

    if corpus is None:
        images = synthetic_corpus(sizes[-1] if sizes else 0, config.seed, config.palette)
        names = [f"synthetic/{i:06d}" for i in range(len(images))]
    else:
        images = list(corpus)
        names = [str(p) if not isinstance(p, RawImage) else f"memory/{i:06d}" for i, p in enumerate(images)]
        if sizes and sizes[-1] > len(images):
            raise ValueError(f"corpus holds {len(images)} images, largest size is {sizes[-1]}")
    sigs = [image_signature(im, config) for im in images]

    rows = []
    for size in sizes:
        index = index_signatures(sigs[:size], names[:size], config)
        stats = bench_corpus(index, queries)
        row = BenchRow(
            size=size,
            build_emd_comparisons=index.build_stats.emd_comparisons,
            build_ms=index.build_stats.elapsed_ms,
            query_emd_comparisons_single=stats["single"],
            query_emd_comparisons_multi=stats["multi"],
            query_emd_comparisons_linear=stats["linear"],
            query_ms_each=stats["ms"],
            recall_single=stats["recall_single"],
            recall_multi=stats["recall_multi"],
            height=index.tree.height,
            max_single_emd_evaluations=stats["max_single"],
        )
        log.info("bench size=%d height=%d %s", size, row.height, row.csv_cells())
        rows.append(row)
    if out is not None:
        Path(out).write_text(bench_csv(rows), encoding="utf-8")
    return rows


def bench_csv(rows: Sequence[BenchRow]) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(BENCH_COLUMNS)
    for row in rows:
        writer.writerow(row.csv_cells())
    return buf.getvalue()
