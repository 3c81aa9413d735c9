"""Nonparametric state-density estimation over replay buffers.

Density is the inverse K-nearest-neighbor distance, computed by an exact
exhaustive scan (vectorised and chunked, but bit-equal to the naive loop).
The same buffer type serves both lifecycles: the per-iteration fresh buffer
and the union buffer of everything ever visited.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "InsufficientPoints",
    "CoverBuffer",
    "DensityEstimate",
    "estimate_density",
    "entropy_estimate",
]

DEFAULT_C0 = 1e-6
_CHUNK = 128


class InsufficientPoints(ValueError):
    """The buffer does not hold enough eligible neighbors for the query."""


class CoverBuffer:
    """Flat store of visited states with insertion-iteration tags.

    Supports exact KNN queries in (optionally) per-dimension standardised
    coordinates; the running statistics cover every point ever inserted,
    including points later evicted by the reservoir. With ``capacity`` unset
    the buffer grows without bound; otherwise reservoir sampling keeps a
    uniform subsample of the insertion stream.
    """

    def __init__(self, dim: int, normalize: bool = True, capacity: int | None = None, seed: int = 0):
        if dim <= 0:
            raise ValueError("dim must be positive")
        if capacity is not None and capacity <= 0:
            raise ValueError("capacity must be positive when set")
        self.dim = int(dim)
        self.normalize = bool(normalize)
        self.capacity = capacity
        self._rng = np.random.default_rng(seed)
        self._store = np.empty((256, dim))
        self._tags = np.empty(256, dtype=np.int64)
        self._size = 0
        self._seen = 0
        self._mean = np.zeros(dim)
        self._m2 = np.zeros(dim)

    def __len__(self) -> int:
        return self._size

    @property
    def states(self) -> np.ndarray:
        return self._store[: self._size]

    @property
    def tags(self) -> np.ndarray:
        return self._tags[: self._size]

    def _grow(self, needed: int) -> None:
        cap = self._store.shape[0]
        if needed <= cap:
            return
        new_cap = max(needed, 2 * cap)
        store = np.empty((new_cap, self.dim))
        tags = np.empty(new_cap, dtype=np.int64)
        store[: self._size] = self._store[: self._size]
        tags[: self._size] = self._tags[: self._size]
        self._store, self._tags = store, tags

    def insert(self, states: np.ndarray, iteration: int) -> np.ndarray:
        """Add a block of states tagged with ``iteration``.

        Returns the slot index of each inserted point, or -1 where the
        reservoir dropped it; slots stay valid until a later insert evicts
        them, which is exactly what per-point self-exclusion needs.
        """
        block = np.atleast_2d(np.asarray(states, dtype=np.float64))
        if block.shape[1] != self.dim:
            raise ValueError(f"state dim {block.shape[1]} != buffer dim {self.dim}")
        slots = np.full(block.shape[0], -1, dtype=np.int64)
        owner: dict[int, int] = {}  # slot -> block index, to invalidate within-block evictions
        for i, x in enumerate(block):
            self._seen += 1
            delta = x - self._mean
            self._mean += delta / self._seen
            self._m2 += delta * (x - self._mean)
            if self.capacity is None or self._size < self.capacity:
                self._grow(self._size + 1)
                self._store[self._size] = x
                self._tags[self._size] = iteration
                slots[i] = self._size
                owner[self._size] = i
                self._size += 1
            else:
                j = int(self._rng.integers(0, self._seen))
                if j < self.capacity:
                    self._store[j] = x
                    self._tags[j] = iteration
                    if j in owner:
                        slots[owner[j]] = -1
                    slots[i] = j
                    owner[j] = i
        return slots

    def scale(self, dims: np.ndarray | None = None) -> np.ndarray:
        """Per-dimension standard deviation used for normalised distances."""
        if not self.normalize or self._seen < 2:
            n = self.dim if dims is None else len(dims)
            return np.ones(n)
        std = np.sqrt(self._m2 / self._seen)
        if dims is not None:
            std = std[dims]
        return np.maximum(std, 1e-8)

    def knn_distances(
        self,
        queries: np.ndarray,
        k: int,
        exclude: np.ndarray | None = None,
        dims: np.ndarray | None = None,
    ) -> np.ndarray:
        """Distance to the k-th nearest stored point for each query row.

        ``exclude[i]`` removes one slot (the query's own) from query i's
        candidates. ``dims`` restricts the distance to a coordinate subset
        (projection queries for the two-player mixing).
        """
        if k <= 0:
            raise ValueError("k must be positive")
        q = np.atleast_2d(np.asarray(queries, dtype=np.float64))
        pts = self.states
        if dims is not None:
            dims = np.asarray(dims, dtype=np.int64)
            q = q[:, dims]
            pts = pts[:, dims]
        if q.shape[1] != pts.shape[1]:
            raise ValueError(f"query dim {q.shape[1]} != {pts.shape[1]}")
        if exclude is not None:
            exclude = np.asarray(exclude, dtype=np.int64)
            if exclude.shape[0] != q.shape[0]:
                raise ValueError("exclude must provide one slot per query")
        excludes_member = exclude is not None and bool(np.any((exclude >= 0) & (exclude < self._size)))
        eligible = self._size - (1 if excludes_member else 0)
        if eligible < k:
            raise InsufficientPoints(f"need {k} eligible points, buffer has {self._size}")
        scale = self.scale(dims)
        pts = pts / scale
        q = q / scale
        out = np.empty(q.shape[0])
        for lo in range(0, q.shape[0], _CHUNK):
            hi = min(lo + _CHUNK, q.shape[0])
            # Accumulate squared distances one coordinate at a time so the
            # summation order matches the naive per-point loop bit-for-bit.
            d2 = np.zeros((hi - lo, pts.shape[0]))
            for d in range(pts.shape[1]):
                diff = q[lo:hi, d, None] - pts[None, :, d]
                d2 += diff * diff
            dist = np.sqrt(d2)
            if exclude is not None:
                for r, ex in enumerate(exclude[lo:hi]):
                    if 0 <= ex < self._size:
                        dist[r, ex] = np.inf
            out[lo:hi] = np.partition(dist, k - 1, axis=1)[:, k - 1]
        return out

    def knn_distance(self, query: np.ndarray, k: int, exclude_index: int | None = None) -> float:
        ex = None if exclude_index is None else np.array([exclude_index])
        return float(self.knn_distances(np.asarray(query)[None, :], k, exclude=ex)[0])


@dataclass
class DensityEstimate:
    distances: np.ndarray
    densities: np.ndarray


def estimate_density(
    buffer: CoverBuffer,
    states: np.ndarray,
    k: int,
    c0: float = DEFAULT_C0,
    exclude: np.ndarray | None = None,
    dims: np.ndarray | None = None,
) -> DensityEstimate:
    """Inverse-KNN-distance density, regularised by ``c0`` against duplicates."""
    if c0 <= 0:
        raise ValueError("c0 must be positive")
    distances = buffer.knn_distances(states, k, exclude=exclude, dims=dims)
    return DensityEstimate(distances=distances, densities=1.0 / (distances + c0))


def entropy_estimate(buffer: CoverBuffer, k: int, c0: float = DEFAULT_C0) -> float:
    """Relative entropy proxy: mean log KNN distance over the stored states.

    Monotone in the true differential entropy of the underlying distribution;
    each stored point is self-excluded from its own neighbor search.
    """
    n = len(buffer)
    if n < k + 1:
        raise InsufficientPoints(f"entropy proxy needs at least {k + 1} points, buffer has {n}")
    idx = np.arange(n)
    distances = buffer.knn_distances(buffer.states, k, exclude=idx)
    return float(np.log(distances + c0).mean())
