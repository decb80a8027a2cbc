"""
Building and searching an S-tree
================================

Signatures go into a balanced tree whose internal entries are the OR of
everything below them. A query only descends into entries that contain
all of its bits.
"""

from sigtree import IndexConfig, linear_scan, query
from sigtree.engine import image_signature, index_signatures, synthetic_corpus

config = IndexConfig(max_node=6, min_node=2)
images = synthetic_corpus(500, seed=3)
sigs = [image_signature(img, config) for img in images]
index = index_signatures(sigs, [f"img{i:03d}" for i in range(len(sigs))], config)
tree = index.tree

print("images:", tree.count, "height:", tree.height)
print("problems:", tree.validate())

# the root's entries and how many bits each union holds
for e in tree.root.entries:
    print(bin(e.sig.bits).count("1"), "bits set")

# single-path follows the first covering entry it meets: unions contain the
# query, so every covering entry is at EMD 0 and the tie picks the first one
probe = images[42]
for mode in ("single", "multi"):
    r = query(index, probe, k=5, mode=mode)
    print(mode, [h.path for h in r.hits], r.candidates, "candidates,", r.emd_evaluations, "EMDs")

truth = linear_scan(index, probe, k=5)
print("linear", [h.path for h in truth.hits], truth.emd_evaluations, "EMDs")
