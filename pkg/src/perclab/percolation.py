"""Cluster structure of the active set.

Two active sites belong to the same cluster when they are joined by a path
of active sites stepping only along stencil offsets with nonzero
coefficient.  Clusters that reach the outer boundary ring of a box stand in
for "possibly infinite": their true size is not visible in the window, so
density estimators classify them as not-finite.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import PreconditionError, ResourceGuardError
from .model import Configuration, HoppingKernel

SUBGRAPH_GUARD = 10 ** 7


class UnionFind:
    """Path compression + union by size over integer elements."""

    def __init__(self, n: int):
        self.parent = list(range(n))
        self.size = [1] * n

    def find(self, x: int) -> int:
        parent = self.parent
        root = x
        while parent[root] != root:
            root = parent[root]
        while parent[x] != root:
            parent[x], x = root, parent[x]
        return root

    def union(self, a: int, b: int):
        ra, rb = self.find(a), self.find(b)
        if ra == rb:
            return
        if self.size[ra] < self.size[rb]:
            ra, rb = rb, ra
        self.parent[rb] = ra
        self.size[ra] += self.size[rb]


@dataclass
class ClusterLabeling:
    """Deterministic labeling of active sites over core + collar.

    labels[i] is the smallest region index in site i's cluster, or -1 for
    inactive sites.  Sizes count active sites over the whole sampled window.
    """

    config: Configuration
    hop_range: int
    labels: np.ndarray
    cluster_ids: np.ndarray        # sorted unique labels
    cluster_sizes: np.ndarray      # aligned with cluster_ids
    touches_outer: np.ndarray      # aligned bool: cluster reaches the outer R-ring

    def size_of(self, label: int) -> int:
        k = np.searchsorted(self.cluster_ids, label)
        return int(self.cluster_sizes[k])

    def touches(self, label: int) -> bool:
        k = np.searchsorted(self.cluster_ids, label)
        return bool(self.touches_outer[k])


def label_clusters(config: Configuration, kernel: HoppingKernel) -> ClusterLabeling:
    """Union-find labeling of the active sites of core + collar."""
    region = config.region
    if region.collar < kernel.hop_range:
        raise PreconditionError(
            f"collar {region.collar} < hopping range {kernel.hop_range}: "
            "boundary connectedness is undecidable"
        )
    active = config.active
    n = len(region)
    uf = UnionFind(n)
    idx = np.flatnonzero(active)
    for v, _ in kernel.half_offsets():
        targets = region.shift_indices(idx, v)
        ok = targets >= 0
        ok[ok] = active[targets[ok]]
        for a, b in zip(idx[ok].tolist(), targets[ok].tolist()):
            uf.union(a, b)

    labels = np.full(n, -1, dtype=np.int64)
    roots = np.fromiter((uf.find(i) for i in idx.tolist()), dtype=np.int64, count=len(idx))
    # deterministic ids: smallest member index per cluster
    root_min = {}
    for i, r in zip(idx.tolist(), roots.tolist()):
        if r not in root_min:
            root_min[r] = i
    labels[idx] = np.fromiter((root_min[r] for r in roots.tolist()),
                              dtype=np.int64, count=len(idx))

    ids, counts = np.unique(labels[idx], return_counts=True)
    ring = idx[(region.shell[idx] >= 1) & (region.shell[idx] <= kernel.hop_range)]
    touching = np.zeros(len(ids), dtype=bool)
    if len(ring):
        touching[np.searchsorted(ids, np.unique(labels[ring]))] = True
    return ClusterLabeling(config, kernel.hop_range, labels, ids, counts, touching)


def connected_region(config: Configuration, kernel: HoppingKernel,
                     labeling: Optional[ClusterLabeling] = None) -> np.ndarray:
    """Core indices of active sites whose cluster reaches the outer R-ring.

    This depends only on values in the box and its outer R-boundary, which is
    why it serves as the local stand-in for the infinite-cluster restriction.
    """
    if labeling is None:
        labeling = label_clusters(config, kernel)
    region = config.region
    core_labels = labeling.labels[: region.n_core]
    touch_ids = labeling.cluster_ids[labeling.touches_outer]
    mask = (core_labels >= 0) & np.isin(core_labels, touch_ids)
    return np.flatnonzero(mask)


def finite_cluster_fraction(labeling: ClusterLabeling, n: int) -> float:
    """Fraction of core sites in finite clusters of size >= n.

    Normalized by the full box size, inactive sites included.  A cluster that
    reaches the outer ring is not finite for this purpose; any other cluster
    containing a core site lies entirely inside the window, so its size is
    exact.
    """
    if n < 1:
        raise PreconditionError("n must be a positive integer")
    region = labeling.config.region
    core_labels = labeling.labels[: region.n_core]
    act = core_labels >= 0
    if not act.any():
        return 0.0
    pos = np.searchsorted(labeling.cluster_ids, core_labels[act])
    good = (~labeling.touches_outer[pos]) & (labeling.cluster_sizes[pos] >= n)
    return float(good.sum()) / region.n_core


def boundary_cluster_fraction(labeling: ClusterLabeling) -> float:
    """Fraction of core sites in clusters that reach the outer ring."""
    region = labeling.config.region
    core_labels = labeling.labels[: region.n_core]
    act = core_labels >= 0
    if not act.any():
        return 0.0
    pos = np.searchsorted(labeling.cluster_ids, core_labels[act])
    return float(labeling.touches_outer[pos].sum()) / region.n_core


# ---------------------------------------------------------------------------
# abstract connected subgraphs


@dataclass(frozen=True)
class SubgraphCatalog:
    """Translation classes of connected site sets under a stencil adjacency.

    Each stored set is translated so its lexicographically smallest site is
    the origin; no rotation or reflection quotient is taken, since general
    stencils are not isotropic.
    """

    kernel: HoppingKernel
    max_size: int
    by_size: tuple  # tuple over sizes 1..max_size of tuples of site tuples

    def classes(self, size: int):
        return self.by_size[size - 1]

    def counts(self):
        return [len(c) for c in self.by_size]

    def all_classes(self):
        for classes in self.by_size:
            yield from classes

    def to_json(self) -> str:
        import json
        return json.dumps([[list(s) for s in cls] for cls in self.all_classes()])


def _canonical(sites) -> tuple:
    ordered = sorted(sites)
    base = ordered[0]
    return tuple(tuple(x - b for x, b in zip(s, base)) for s in ordered)


def enumerate_connected_subgraphs(kernel: HoppingKernel, max_size: int) -> SubgraphCatalog:
    """All translation classes of connected sets of size <= max_size.

    Growth enumeration: every class of size s+1 is some class of size s plus
    one adjacent site, so breadth-first growth with canonical deduplication
    is exhaustive.
    """
    if max_size < 1:
        raise PreconditionError("max_size must be >= 1")
    moves = [v for v, _ in kernel.offsets if any(v)]
    origin = (0,) * kernel.dim
    current = {(origin,)}
    levels = [tuple(sorted(current))]
    visited = 1
    for _ in range(max_size - 1):
        grown = set()
        for cls in current:
            members = set(cls)
            for s in cls:
                for v in moves:
                    t = tuple(a + b for a, b in zip(s, v))
                    if t in members:
                        continue
                    cand = _canonical(cls + (t,))
                    if cand not in grown:
                        grown.add(cand)
                        visited += 1
                        if visited > SUBGRAPH_GUARD:
                            raise ResourceGuardError(
                                f"subgraph enumeration exceeded guard ({SUBGRAPH_GUARD})",
                                reached=visited,
                            )
        current = grown
        levels.append(tuple(sorted(current)))
    return SubgraphCatalog(kernel, max_size, tuple(levels))
