"""EMD-guided signature tree (S-tree).

A balanced multiway tree. Leaf entries pair an image signature with its
oid; internal entries pair the OR of every signature below them with a
child link. Insertion descends towards the child whose signature is
closest in EMD, splits overfull nodes around the two most distant entries
and grows at the root, B-tree style, so all leaves stay at one depth.
"""

from __future__ import annotations

import threading
from dataclasses import dataclass
from typing import Iterator, List, Optional, Tuple

import numpy as np

from .emd import emd_signatures
from .errors import DimensionMismatch, DuplicateOid, NotOverfull
from .signature import Signature, union_all

SINGLE = "single"
MULTI = "multi"
SEARCH_MODES = (SINGLE, MULTI)

DEFAULT_MAX_ENTRIES = 6
DEFAULT_MIN_ENTRIES = 2


class Entry:
    __slots__ = ("sig", "child", "oid")

    def __init__(self, sig: Signature, child: Optional["Node"] = None, oid: Optional[int] = None):
        self.sig = sig
        self.child = child
        self.oid = oid

    def __repr__(self):
        target = f"oid={self.oid}" if self.child is None else "child"
        return f"Entry({self.sig.hex()}, {target})"


class Node:
    __slots__ = ("leaf", "entries", "parent")

    def __init__(self, leaf: bool, entries=None, parent: Optional["Node"] = None):
        self.leaf = leaf
        self.entries: List[Entry] = entries if entries is not None else []
        self.parent = parent

    def parent_entry(self) -> Entry:
        for e in self.parent.entries:
            if e.child is self:
                return e
        raise RuntimeError("node is not linked from its parent")

    def __len__(self):
        return len(self.entries)


@dataclass
class SearchResult:
    entries: List[Tuple[Signature, int]]
    emd_evaluations: int = 0
    coverage_tests: int = 0
    leaves_visited: int = 0


class STree:
    """Signature tree over ``n`` x ``m`` signatures.

    ``max_entries`` is the node capacity M and ``min_entries`` the minimum
    fill of non-root nodes; ``1 <= min_entries <= max_entries / 2``.
    ``cost`` is the ground-distance matrix used for every EMD decision.
    """

    def __init__(
        self,
        cost: np.ndarray,
        n: int,
        m: int,
        max_entries: int = DEFAULT_MAX_ENTRIES,
        min_entries: int = DEFAULT_MIN_ENTRIES,
    ):
        if max_entries < 2:
            raise ValueError("max_entries must be at least 2")
        if not 1 <= min_entries <= max_entries // 2:
            raise ValueError(f"min_entries must be in 1..{max_entries // 2}")
        cost = np.ascontiguousarray(cost, dtype=np.float64)
        if cost.shape != (n, n):
            raise DimensionMismatch(f"cost is {cost.shape}, expected {(n, n)}")
        self.cost = cost
        self.n = n
        self.m = m
        self.max_entries = max_entries
        self.min_entries = min_entries
        self.root: Optional[Node] = None
        self.count = 0
        self.emd_evaluations = 0
        self.coverage_tests = 0
        self._oids = set()
        self._lock = threading.Lock()

    # -- helpers -------------------------------------------------------------

    def _emd(self, a: Signature, b: Signature) -> float:
        self.emd_evaluations += 1
        return emd_signatures(a, b, self.cost)

    def _check_sig(self, sig: Signature) -> None:
        if sig.n != self.n or sig.m != self.m:
            raise DimensionMismatch(f"signature is {sig.n}x{sig.m}, tree holds {self.n}x{self.m}")

    @property
    def height(self) -> int:
        """Edges from root to any leaf; 0 for a lone leaf or an empty tree."""
        h = 0
        node = self.root
        while node is not None and not node.leaf:
            node = node.entries[0].child
            h += 1
        return h

    def nodes(self) -> Iterator[Tuple[Node, int]]:
        """Pre-order walk yielding ``(node, depth)``."""
        if self.root is None:
            return
        stack = [(self.root, 0)]
        while stack:
            node, depth = stack.pop()
            yield node, depth
            if not node.leaf:
                for e in reversed(node.entries):
                    stack.append((e.child, depth + 1))

    def items(self) -> Iterator[Tuple[Signature, int]]:
        """Every stored ``(signature, oid)`` in leaf order."""
        for node, _ in self.nodes():
            if node.leaf:
                for e in node.entries:
                    yield e.sig, e.oid

    # -- insertion -------------------------------------------------------------

    def choose_leaf(self, sig: Signature) -> Node:
        node = self.root
        while not node.leaf:
            best = None
            best_d = 0.0
            for e in node.entries:
                d = self._emd(e.sig, sig)
                if best is None or d < best_d:
                    best, best_d = e, d
            node = best.child
        return node

    def insert(self, sig: Signature, oid: int) -> None:
        self._check_sig(sig)
        if oid in self._oids:
            raise DuplicateOid(f"oid {oid} already stored")
        if self.root is None:
            self.root = Node(leaf=True)
        leaf = self.choose_leaf(sig)
        leaf.entries.append(Entry(sig, oid=oid))
        self._oids.add(oid)
        self.count += 1
        self.union_signature_up(leaf)
        if len(leaf) > self.max_entries:
            self.split_node(leaf)

    def union_signature_up(self, node: Node) -> None:
        """Refresh ancestor entry signatures as the OR of each child's entries."""
        while node.parent is not None:
            entry = node.parent_entry()
            merged = union_all(e.sig for e in node.entries)
            if merged == entry.sig:
                # ancestors are unions of unchanged children
                return
            entry.sig = merged
            node = node.parent

    def _pick_seeds(self, entries: List[Entry]):
        # most distant pair; first pair in index order wins ties
        size = len(entries)
        dist = [[0.0] * size for _ in range(size)]
        seeds = (0, 1)
        far = -1.0
        for i in range(size):
            for j in range(i + 1, size):
                d = self._emd(entries[i].sig, entries[j].sig)
                dist[i][j] = dist[j][i] = d
                if d > far:
                    far, seeds = d, (i, j)
        return seeds, dist

    def split_node(self, node: Node) -> None:
        if len(node) <= self.max_entries:
            raise NotOverfull(f"node holds {len(node)} of at most {self.max_entries} entries")
        entries = node.entries
        (a, b), dist = self._pick_seeds(entries)

        group_a, group_b = [a], [b]
        for i in range(len(entries)):
            if i in (a, b):
                continue
            # strictly nearer to alpha goes there, ties go to beta
            (group_a if dist[i][a] < dist[i][b] else group_b).append(i)

        # keep both halves at minimum fill by pulling the entries nearest the short seed
        for short, long_, seed in ((group_a, group_b, a), (group_b, group_a, b)):
            while len(short) < self.min_entries:
                movable = [i for i in long_ if i not in (a, b)]
                pick = min(movable, key=lambda i: (dist[i][seed], i))
                long_.remove(pick)
                short.append(pick)

        node_a = Node(node.leaf, [entries[i] for i in sorted(group_a)], node.parent)
        node_b = Node(node.leaf, [entries[i] for i in sorted(group_b)], node.parent)
        if not node.leaf:
            for half in (node_a, node_b):
                for e in half.entries:
                    e.child.parent = half
        entry_a = Entry(union_all(e.sig for e in node_a.entries), child=node_a)
        entry_b = Entry(union_all(e.sig for e in node_b.entries), child=node_b)

        parent = node.parent
        if parent is None:
            self.root = Node(leaf=False, entries=[entry_a, entry_b])
            node_a.parent = node_b.parent = self.root
            return
        pos = next(k for k, e in enumerate(parent.entries) if e.child is node)
        parent.entries[pos : pos + 1] = [entry_a, entry_b]
        self.union_signature_up(parent)
        if len(parent) > self.max_entries:
            self.split_node(parent)

    # -- search ----------------------------------------------------------------

    def search(self, query: Signature, mode: str = SINGLE, strict_coverage: bool = False) -> SearchResult:
        """Collect leaf entries reachable under the containment filter.

        Internal entries must cover ``query``. ``single`` follows only the
        covering entry closest in EMD; ``multi`` follows every covering
        entry. When no entry of a node covers the query, descent falls back
        to the closest entry by EMD unless ``strict_coverage`` is set, in
        which case that branch ends.
        """
        if mode not in SEARCH_MODES:
            raise ValueError(f"mode must be one of {SEARCH_MODES}, got {mode!r}")
        self._check_sig(query)
        result = SearchResult([])
        if self.root is None:
            return result

        def nearest(candidates):
            best, best_d = None, 0.0
            for e in candidates:
                result.emd_evaluations += 1
                d = emd_signatures(e.sig, query, self.cost)
                if best is None or d < best_d:
                    best, best_d = e, d
            return best

        stack = [self.root]
        while stack:
            node = stack.pop()
            if node.leaf:
                result.leaves_visited += 1
                result.entries.extend((e.sig, e.oid) for e in node.entries)
                continue
            result.coverage_tests += len(node.entries)
            passing = [e for e in node.entries if query.bits & e.sig.bits == query.bits]
            if passing and mode == MULTI:
                stack.extend(e.child for e in reversed(passing))
            elif passing:
                stack.append(nearest(passing).child)
            elif not strict_coverage:
                stack.append(nearest(node.entries).child)

        with self._lock:
            self.emd_evaluations += result.emd_evaluations
            self.coverage_tests += result.coverage_tests
        return result

    # -- diagnostics -------------------------------------------------------------

    def validate(self) -> List[str]:
        """List every violated structural invariant; empty means healthy."""
        problems = []
        if self.root is None:
            if self.count:
                problems.append(f"count mismatch: tree is empty but count is {self.count}")
            return problems
        if self.root.parent is not None:
            problems.append("root has a parent link")

        leaf_depths = set()
        seen_oids = set()
        stored = 0
        for node, depth in self.nodes():
            size = len(node)
            where = f"node at depth {depth}"
            if node is self.root:
                low = 0 if node.leaf else 2
            else:
                low = self.min_entries
            if not low <= size <= self.max_entries:
                problems.append(f"occupancy: {where} holds {size} entries, allowed {low}..{self.max_entries}")
            for e in node.entries:
                if e.sig.n != self.n or e.sig.m != self.m:
                    problems.append(f"dimension mismatch: {where} has a {e.sig.n}x{e.sig.m} signature")
            if node.leaf:
                leaf_depths.add(depth)
                for e in node.entries:
                    stored += 1
                    if e.child is not None or e.oid is None:
                        problems.append(f"leaf entry without oid in {where}")
                    if e.oid in seen_oids:
                        problems.append(f"duplicate oid {e.oid}")
                    seen_oids.add(e.oid)
                    if not e.sig.is_one_hot():
                        problems.append(f"leaf signature for oid {e.oid} has a multi-bit block")
            else:
                for e in node.entries:
                    if e.child is None:
                        problems.append(f"internal entry without child in {where}")
                        continue
                    if e.child.parent is not node:
                        problems.append(f"parent link broken below {where}")
                    if e.child.entries and e.sig != union_all(c.sig for c in e.child.entries):
                        problems.append(f"union mismatch: entry in {where} is not the OR of its child")

        if len(leaf_depths) > 1:
            problems.append(f"unbalanced: leaves at depths {sorted(leaf_depths)}")
        if stored != self.count:
            problems.append(f"count mismatch: {stored} leaf entries, count is {self.count}")
        if self.min_entries >= 2 and self.count >= self.min_entries:
            bound = _ceil_log(self.count, self.min_entries)
            if self.height > bound:
                problems.append(f"height {self.height} exceeds ceil(log_{self.min_entries} {self.count}) = {bound}")
        return problems


def _ceil_log(x: int, base: int) -> int:
    # smallest h with base**h >= x, in exact integer arithmetic
    h, p = 0, 1
    while p < x:
        p *= base
        h += 1
    return h
