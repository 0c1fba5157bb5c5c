"""Shortest paths on a 2-D latent grid, used to cross-check spline geodesics."""

from __future__ import annotations

import heapq

import numpy as np

from ..errors import BoundsError, CapabilityError
from ..tensor import Tensor

# king moves plus knight moves
NEIGHBORHOOD_16 = [
    (-1, -1), (-1, 0), (-1, 1), (0, -1), (0, 1), (1, -1), (1, 0), (1, 1),
    (-2, -1), (-2, 1), (-1, -2), (-1, 2), (1, -2), (1, 2), (2, -1), (2, 1),
]  # fmt: skip


def dijkstra(n_nodes, neighbors, source, target):
    """Length of the shortest source-target path; `neighbors(u)` yields (v, weight)."""
    dist = np.full(n_nodes, np.inf)
    dist[source] = 0.0
    heap = [(0.0, source)]
    done = np.zeros(n_nodes, dtype=bool)
    while heap:
        d, u = heapq.heappop(heap)
        if done[u]:
            continue
        if u == target:
            return d
        done[u] = True
        for v, w in neighbors(u):
            nd = d + w
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return float(dist[target])


def grid_graph_geodesic(evaluator, bounds, resolution, z0, z1):
    """Shortest-path length between z0 and z1 on an m x m grid over `bounds`.

    `bounds` is ((lo_1, hi_1), (lo_2, hi_2)). Edges connect each node to its 16
    king and knight neighbours with weight sqrt(exact segment value). The
    endpoints snap to their nearest nodes.
    """
    (lo1, hi1), (lo2, hi2) = bounds
    z0 = np.asarray(z0, dtype=np.float64).reshape(-1)
    z1 = np.asarray(z1, dtype=np.float64).reshape(-1)
    if z0.size != 2 or z1.size != 2:
        raise CapabilityError("the grid oracle only supports 2-D latent spaces")
    for z in (z0, z1):
        if not (lo1 <= z[0] <= hi1 and lo2 <= z[1] <= hi2):
            raise BoundsError(f"endpoint {z.tolist()} outside grid bounds {bounds}")
    m = int(resolution)
    g1 = np.linspace(lo1, hi1, m)
    g2 = np.linspace(lo2, hi2, m)
    nodes = np.stack(np.meshgrid(g1, g2, indexing="ij"), axis=-1).reshape(-1, 2)
    feats = evaluator.features(Tensor(nodes))

    # precompute all edge weights, one vectorized pass per offset
    ii, jj = np.divmod(np.arange(m * m), m)
    weights = []
    for di, dj in NEIGHBORHOOD_16:
        ni, nj = ii + di, jj + dj
        ok = (ni >= 0) & (ni < m) & (nj >= 0) & (nj < m)
        w = np.full(m * m, np.inf)
        src = np.flatnonzero(ok)
        dst = ni[ok] * m + nj[ok]
        w[src] = np.sqrt(np.maximum(evaluator.pair_values(feats, src, dst), 0.0))
        weights.append(w)
    weights = np.stack(weights, axis=1)
    offsets = [di * m + dj for di, dj in NEIGHBORHOOD_16]

    def neighbors(u):
        row = weights[u]
        for k, off in enumerate(offsets):
            if row[k] < np.inf:
                yield u + off, row[k]

    def snap(z):
        return int(np.abs(g1 - z[0]).argmin()) * m + int(np.abs(g2 - z[1]).argmin())

    return dijkstra(m * m, neighbors, snap(z0), snap(z1))
