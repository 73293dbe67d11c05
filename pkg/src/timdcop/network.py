"""Grid road network with travel times on links.

Cells are indexed row-major: cell = row * cols + col. Links exist between
horizontal and vertical neighbours only, weighted by free-flow travel time
in hours. Shortest-path travel times are computed with Dijkstra and cached
per source cell; the network is immutable after construction.
"""
from __future__ import annotations

import heapq
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InputError

CellId = int

DEFAULT_EDGE_RANGE = (0.1, 1.5)


def cell_index(row: int, col: int, cols: int) -> CellId:
    return row * cols + col


def cell_rowcol(cell: CellId, cols: int) -> tuple[int, int]:
    return divmod(cell, cols)


@dataclass
class GridNetwork:
    rows: int
    cols: int
    # edge key is (min(a,b), max(a,b)) -> travel time in hours
    edge_time: dict[tuple[CellId, CellId], float]
    _dist_cache: dict[CellId, list[float]] = field(
        default_factory=dict, repr=False, compare=False
    )

    @property
    def n_cells(self) -> int:
        return self.rows * self.cols

    def cells(self) -> range:
        return range(self.n_cells)

    def neighbors(self, cell: CellId) -> list[CellId]:
        r, c = cell_rowcol(cell, self.cols)
        out = []
        if r > 0:
            out.append(cell - self.cols)
        if r < self.rows - 1:
            out.append(cell + self.cols)
        if c > 0:
            out.append(cell - 1)
        if c < self.cols - 1:
            out.append(cell + 1)
        return out

    def edge(self, a: CellId, b: CellId) -> float:
        return self.edge_time[(a, b) if a < b else (b, a)]


def build_grid(
    rows: int,
    cols: int,
    edge_time_range: tuple[float, float] = DEFAULT_EDGE_RANGE,
    seed: int = 0,
) -> GridNetwork:
    """Build a rows x cols grid with uniform random link travel times.

    Links are drawn in a fixed order (row-major, east link then south link)
    so a seed fully determines the network.
    """
    if rows < 2 or cols < 2:
        raise InputError(f"grid must be at least 2x2, got {rows}x{cols}")
    lo, hi = edge_time_range
    if lo <= 0 or hi < lo:
        raise InputError(f"bad edge time range ({lo}, {hi})")
    rng = np.random.default_rng(seed)
    edge_time: dict[tuple[CellId, CellId], float] = {}
    for r in range(rows):
        for c in range(cols):
            a = cell_index(r, c, cols)
            if c < cols - 1:
                edge_time[(a, a + 1)] = float(rng.uniform(lo, hi))
            if r < rows - 1:
                edge_time[(a, a + cols)] = float(rng.uniform(lo, hi))
    net = GridNetwork(rows=rows, cols=cols, edge_time=edge_time)
    # 2*r*c - r - c links on a full grid
    assert len(edge_time) == 2 * rows * cols - rows - cols
    return net


def _dijkstra(net: GridNetwork, source: CellId) -> list[float]:
    dist = [float("inf")] * net.n_cells
    dist[source] = 0.0
    heap = [(0.0, source)]
    while heap:
        d, u = heapq.heappop(heap)
        if d > dist[u]:
            continue
        for v in net.neighbors(u):
            nd = d + net.edge(u, v)
            if nd < dist[v]:
                dist[v] = nd
                heapq.heappush(heap, (nd, v))
    return dist


def travel_time(net: GridNetwork, a: CellId, b: CellId) -> float:
    """Shortest-path travel time in hours between two cells."""
    n = net.n_cells
    if not (0 <= a < n and 0 <= b < n):
        raise InputError(f"cell out of range: {a}, {b} (grid has {n} cells)")
    if a == b:
        return 0.0
    row = net._dist_cache.get(a)
    if row is None:
        row = _dijkstra(net, a)
        net._dist_cache[a] = row
    return row[b]


def to_json(net: GridNetwork) -> str:
    payload = {
        "rows": net.rows,
        "cols": net.cols,
        "edges": [[a, b, t] for (a, b), t in sorted(net.edge_time.items())],
    }
    return json.dumps(payload, sort_keys=True)


def from_json(text: str) -> GridNetwork:
    try:
        payload = json.loads(text)
        rows, cols = int(payload["rows"]), int(payload["cols"])
        edges = payload["edges"]
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise InputError(f"bad network JSON: {exc}") from exc
    edge_time = {(int(a), int(b)): float(t) for a, b, t in edges}
    net = GridNetwork(rows=rows, cols=cols, edge_time=edge_time)
    if len(edge_time) != 2 * rows * cols - rows - cols:
        raise InputError("network JSON does not describe a full grid")
    return net
