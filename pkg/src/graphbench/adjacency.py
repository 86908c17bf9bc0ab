"""Sparse adjacency in canonical edge-list form.

Edges are directed (src -> dst) and stored sorted by (dst, src), so all
in-edges of a node are contiguous and kernels accumulate per destination
in ascending neighbor order. Undirected graphs store both directions.
"""

import numpy as np

from .errors import GraphStructureError


class SparseAdjacency:
    """Directed edge list with per-destination row offsets.

    Attributes:
        n_nodes: node count.
        src, dst: int64 arrays of equal length E, sorted by (dst, src).
        offsets: int64 array of length n_nodes + 1; in-edges of node i are
            the slice offsets[i]:offsets[i+1].
    """

    __slots__ = ("n_nodes", "src", "dst", "offsets")

    def __init__(self, n_nodes, src, dst):
        src = np.asarray(src, dtype=np.int64)
        dst = np.asarray(dst, dtype=np.int64)
        if src.shape != dst.shape or src.ndim != 1:
            raise GraphStructureError("src/dst must be 1-d arrays of equal length")
        if src.size:
            if src.min() < 0 or dst.min() < 0:
                raise GraphStructureError("negative node index")
            if src.max() >= n_nodes or dst.max() >= n_nodes:
                raise GraphStructureError("node index out of range")
        order = np.lexsort((src, dst))
        src = src[order]
        dst = dst[order]
        if src.size > 1:
            same = (src[1:] == src[:-1]) & (dst[1:] == dst[:-1])
            if same.any():
                raise GraphStructureError("duplicate directed edge")
        self.n_nodes = int(n_nodes)
        self.src = src
        self.dst = dst
        self.offsets = np.zeros(n_nodes + 1, dtype=np.int64)
        np.add.at(self.offsets, dst + 1, 1)
        np.cumsum(self.offsets, out=self.offsets)

    @classmethod
    def from_undirected(cls, n_nodes, pairs):
        """Build from unordered node pairs; both directions are stored.

        Rejects self-loops and duplicate pairs.
        """
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        if pairs.size and (pairs[:, 0] == pairs[:, 1]).any():
            raise GraphStructureError("self-loop in undirected edge list")
        lo = pairs.min(axis=1)
        hi = pairs.max(axis=1)
        if pairs.size:
            keys = lo * n_nodes + hi
            if np.unique(keys).size != keys.size:
                raise GraphStructureError("duplicate undirected edge")
        src = np.concatenate([lo, hi])
        dst = np.concatenate([hi, lo])
        return cls(n_nodes, src, dst)

    @property
    def n_edges(self):
        return int(self.src.size)

    def in_degree(self):
        return np.diff(self.offsets)

    def in_neighbors(self, i):
        return self.src[self.offsets[i]:self.offsets[i + 1]]

    def undirected_pairs(self):
        """Unique (i, j) pairs with i < j, sorted. Requires a symmetric edge set."""
        keep = self.src < self.dst
        pairs = np.stack([self.src[keep], self.dst[keep]], axis=1)
        order = np.lexsort((pairs[:, 1], pairs[:, 0]))
        return pairs[order]

    def is_symmetric(self):
        fwd = set(zip(self.src.tolist(), self.dst.tolist()))
        return all((d, s) in fwd for s, d in fwd)

    def to_dense(self):
        a = np.zeros((self.n_nodes, self.n_nodes))
        a[self.dst, self.src] = 1.0
        return a

    def __repr__(self):
        return f"SparseAdjacency(n_nodes={self.n_nodes}, n_edges={self.n_edges})"
