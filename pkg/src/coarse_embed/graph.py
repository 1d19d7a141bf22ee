"""Finite metric graphs with a basepoint, Cayley-ball construction and geodesic queries.

Vertex ids are ints ``0..n-1``.  Distances are hop counts computed on demand one
row at a time and kept in a bounded cache.  For Cayley balls the basepoint is the
identity and vertex ids follow BFS discovery order, so the basepoint is 0.
"""
from __future__ import annotations

import threading
from collections import OrderedDict, deque
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, Hashable, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components, shortest_path

from .groups import FreeProduct, Group, GroupSpec

ROW_CACHE_SIZE = 4096
ROW_CACHE_BYTES = 256 * 2 ** 20


class GraphError(ValueError):
    pass


class MetricGraph:
    """Connected simple undirected graph with basepoint ``e`` and optional word labels."""

    def __init__(
        self,
        adjacency: Sequence[Iterable[int]],
        basepoint: int = 0,
        labels: Optional[Sequence[str]] = None,
        group: Optional[Group] = None,
        elements: Optional[Sequence[Hashable]] = None,
        spec: Optional[GroupSpec] = None,
    ):
        raw = [list(nb) for nb in adjacency]
        for v, nb in enumerate(raw):
            if len(set(nb)) != len(nb):
                raise GraphError(f"multi-edge at vertex {v}")
        adj = [tuple(sorted(nb)) for nb in raw]
        n = len(adj)
        if n == 0:
            raise GraphError("graph must have at least one vertex")
        if not 0 <= basepoint < n:
            raise GraphError(f"basepoint {basepoint} out of range")
        rows, cols = [], []
        for v, nb in enumerate(adj):
            for u in nb:
                if u == v:
                    raise GraphError(f"loop at vertex {v}")
                if not 0 <= u < n:
                    raise GraphError(f"neighbor {u} of {v} out of range")
                rows.append(v)
                cols.append(u)
        for v, nb in enumerate(adj):
            for u in nb:
                if v not in adj[u]:
                    raise GraphError(f"edge {v}-{u} is not symmetric")
        self.adjacency: Tuple[Tuple[int, ...], ...] = tuple(adj)
        self.vertex_count = n
        self.basepoint = basepoint
        self.csr = csr_matrix((np.ones(len(rows), dtype=np.int8), (rows, cols)), shape=(n, n))
        ncomp, _ = connected_components(self.csr, directed=False)
        if ncomp != 1:
            raise GraphError(f"graph is disconnected ({ncomp} components)")
        self.max_degree = max(len(nb) for nb in adj)
        self.edge_count = len(rows) // 2
        self.labels = list(labels) if labels is not None else None
        self.label_index: Dict[str, int] = {}
        if self.labels is not None:
            if len(self.labels) != n:
                raise GraphError("labels length does not match vertex count")
            self.label_index = {lab: v for v, lab in enumerate(self.labels)}
        self.group = group
        self.elements = list(elements) if elements is not None else None
        self.element_index = {el: v for v, el in enumerate(self.elements)} if self.elements else {}
        self.spec = spec
        self._rows: "OrderedDict[int, np.ndarray]" = OrderedDict()
        self._row_limit = max(64, min(ROW_CACHE_SIZE, ROW_CACHE_BYTES // (4 * n)))
        self._lock = threading.Lock()
        self._matrix: Optional[np.ndarray] = None
        self.levels = self.distances_from(basepoint)
        lev = self.levels
        self.down = tuple(tuple(u for u in nb if lev[u] < lev[v]) for v, nb in enumerate(adj))
        self.up = tuple(tuple(u for u in nb if lev[u] > lev[v]) for v, nb in enumerate(adj))

    # -- basic queries -------------------------------------------------------
    @property
    def n(self) -> int:
        return self.vertex_count

    @property
    def radius(self) -> int:
        """Eccentricity of the basepoint (the ball radius for Cayley balls)."""
        return int(self.levels.max())

    def vertex(self, key) -> int:
        """Resolve a vertex id, a word label or a group element to a vertex id."""
        if isinstance(key, (int, np.integer)):
            if not 0 <= key < self.n:
                raise KeyError(f"vertex {key} out of range")
            return int(key)
        if isinstance(key, str) and key in self.label_index:
            return self.label_index[key]
        if key in self.element_index:
            return self.element_index[key]
        raise KeyError(f"unknown vertex {key!r}")

    def label(self, v: int) -> str:
        return self.labels[v] if self.labels is not None else str(v)

    def edges(self) -> Iterator[Tuple[int, int]]:
        for v, nb in enumerate(self.adjacency):
            for u in nb:
                if v < u:
                    yield v, u

    def is_tree(self) -> bool:
        return self.edge_count == self.vertex_count - 1

    def distances_from(self, v: int) -> np.ndarray:
        """Exact hop distances from ``v`` (read-only int32 row, cached)."""
        with self._lock:
            row = self._rows.get(v)
            if row is not None:
                self._rows.move_to_end(v)
                return row
        if self._matrix is not None:
            return self._matrix[v]
        # the adjacency is symmetric, so the directed search avoids a symmetrising copy
        row = shortest_path(self.csr, directed=True, unweighted=True, indices=v).astype(np.int32)
        row.setflags(write=False)
        with self._lock:
            self._rows[v] = row
            if len(self._rows) > self._row_limit:
                self._rows.popitem(last=False)
        return row

    def distance(self, u: int, v: int) -> int:
        if u == self.basepoint:
            return int(self.levels[v])
        if v == self.basepoint:
            return int(self.levels[u])
        return int(self.distances_from(u)[v])

    def distance_matrix(self) -> np.ndarray:
        """Full distance matrix; only sensible for small graphs."""
        if self._matrix is None:
            mat = shortest_path(self.csr, directed=False, unweighted=True).astype(np.int32)
            mat.setflags(write=False)
            self._matrix = mat
        return self._matrix

    def ball(self, center: int, radius: int) -> Dict[int, int]:
        """Truncated BFS: ``{vertex: distance}`` for the closed ball."""
        dist = {center: 0}
        frontier = [center]
        for r in range(1, radius + 1):
            nxt = []
            for v in frontier:
                for u in self.adjacency[v]:
                    if u not in dist:
                        dist[u] = r
                        nxt.append(u)
            if not nxt:
                break
            frontier = nxt
        return dist

    def set_distance(self, sources: Iterable[int], limit: Optional[int] = None) -> Dict[int, int]:
        """Multi-source BFS distances to a vertex set, optionally truncated at ``limit``."""
        dist = {}
        frontier = []
        for s in sources:
            if s not in dist:
                dist[s] = 0
                frontier.append(s)
        r = 0
        while frontier and (limit is None or r < limit):
            r += 1
            nxt = []
            for v in frontier:
                for u in self.adjacency[v]:
                    if u not in dist:
                        dist[u] = r
                        nxt.append(u)
            frontier = nxt
        return dist

    def sphere_sizes(self) -> List[int]:
        return np.bincount(self.levels).tolist()

    def safe_ball(self, radius: Optional[int] = None) -> List[int]:
        """Vertices within ``radius`` (default half the ball radius) of the basepoint."""
        r = self.radius // 2 if radius is None else radius
        return [int(v) for v in np.nonzero(self.levels <= r)[0]]

    def max_ball_size(self, radius: int) -> int:
        """Largest closed ball of the given radius (the bounded-geometry bound)."""
        if radius <= 0:
            return 1
        if self.group is not None:
            # Cayley graphs are vertex transitive; the ball at e is unaffected by truncation
            # as long as it sits inside the generated ball.
            if radius <= self.radius:
                return int(np.count_nonzero(self.levels <= radius))
        return max(len(self.ball(v, radius)) for v in range(self.n))


# ---------------------------------------------------------------------------
# construction


def from_edges(n: int, edges: Iterable[Tuple[int, int]], basepoint: int = 0,
               labels: Optional[Sequence[str]] = None) -> MetricGraph:
    adj: List[set] = [set() for _ in range(n)]
    for u, v in edges:
        if u == v:
            raise GraphError(f"loop at vertex {u}")
        if not (0 <= u < n and 0 <= v < n):
            raise GraphError(f"edge {u}-{v} out of range")
        if v in adj[u]:
            raise GraphError(f"duplicate edge {u}-{v}")
        adj[u].add(v)
        adj[v].add(u)
    return MetricGraph([sorted(a) for a in adj], basepoint=basepoint, labels=labels)


def path_graph(n: int) -> MetricGraph:
    """Path on vertices ``0..n-1`` with basepoint 0."""
    return from_edges(n, [(i, i + 1) for i in range(n - 1)])


def cycle_graph(n: int) -> MetricGraph:
    """Cycle on vertices ``0..n-1`` with basepoint 0."""
    if n < 3:
        raise GraphError("cycle needs at least 3 vertices")
    return from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def build_graph(spec: GroupSpec) -> MetricGraph:
    """Ball of radius ``spec.radius`` in the Cayley graph of the described group."""
    group = spec.build()
    gens = group.generators()
    ident = group.identity()
    index = {ident: 0}
    elements = [ident]
    adjacency: List[set] = [set()]
    frontier = [ident]
    for r in range(spec.radius):
        nxt = []
        for el in frontier:
            v = index[el]
            for s in gens:
                w = group.mul_gen(el, s)
                u = index.get(w)
                if u is None:
                    u = len(elements)
                    index[w] = u
                    elements.append(w)
                    adjacency.append(set())
                    nxt.append(w)
                adjacency[v].add(u)
                adjacency[u].add(v)
        frontier = nxt
    # close edges among the outermost sphere
    for el in frontier:
        v = index[el]
        for s in gens:
            u = index.get(group.mul_gen(el, s))
            if u is not None:
                adjacency[v].add(u)
                adjacency[u].add(v)
    labels = [group.label(el) for el in elements]
    return MetricGraph([sorted(a) for a in adjacency], basepoint=0, labels=labels,
                       group=group, elements=elements, spec=spec)


def load_graph(path) -> MetricGraph:
    """Read the plain-text format: ``n m e0`` then ``m`` lines ``u v``; ``# label v word`` lines."""
    text = Path(path).read_text().splitlines()
    header = None
    edges, labels = [], {}
    for lineno, raw in enumerate(text, 1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            parts = line[1:].split()
            if len(parts) == 3 and parts[0] == "label":
                labels[int(parts[1])] = parts[2]
            continue
        parts = line.split()
        try:
            nums = [int(t) for t in parts]
        except ValueError:
            raise GraphError(f"{path}:{lineno}: expected integers, got {raw!r}") from None
        if header is None:
            if len(nums) != 3:
                raise GraphError(f"{path}:{lineno}: header must be 'n m e0'")
            header = nums
        else:
            if len(nums) != 2:
                raise GraphError(f"{path}:{lineno}: edge line must be 'u v'")
            edges.append((nums[0], nums[1]))
    if header is None:
        raise GraphError(f"{path}: empty graph file")
    n, m, e0 = header
    if len(edges) != m:
        raise GraphError(f"{path}: header declares {m} edges, found {len(edges)}")
    lab = None
    if labels:
        lab = [labels.get(v, str(v)) for v in range(n)]
    return from_edges(n, edges, basepoint=e0, labels=lab)


def save_graph(g: MetricGraph, path) -> None:
    lines = [f"{g.n} {g.edge_count} {g.basepoint}"]
    lines += [f"{u} {v}" for u, v in g.edges()]
    if g.labels is not None:
        lines += [f"# label {v} {lab}" for v, lab in enumerate(g.labels)]
    Path(path).write_text("\n".join(lines) + "\n")


# ---------------------------------------------------------------------------
# geodesics


def on_geodesic(g: MetricGraph, y: int, v: int, z: int) -> bool:
    """True iff ``v`` lies on some geodesic from ``y`` to ``z``."""
    row = g.distances_from(v)
    return int(row[y]) + int(row[z]) == g.distance(y, z)


@dataclass(frozen=True)
class GeodesicDAG:
    """Union of all geodesics from ``source`` to ``sink``.

    ``parents[v]`` lists the neighbours one step closer to the sink (sorted by id);
    ``level[v]`` is the distance from ``v`` to the sink.  Only vertices on some
    geodesic appear as keys.
    """

    source: int
    sink: int
    parents: Dict[int, Tuple[int, ...]]
    level: Dict[int, int]

    def __contains__(self, v: int) -> bool:
        return v in self.level

    @property
    def length(self) -> int:
        return self.level[self.source]

    def vertices(self) -> List[int]:
        return sorted(self.level)

    def path_count(self) -> int:
        count = {self.sink: 1}
        for v in sorted(self.level, key=self.level.__getitem__):
            if v != self.sink:
                count[v] = sum(count[u] for u in self.parents[v])
        return count[self.source]

    def paths(self) -> Iterator[List[int]]:
        """All geodesics, in lexicographic order of vertex ids."""
        stack = [(self.source, [self.source])]
        while stack:
            v, path = stack.pop()
            if v == self.sink:
                yield path
                continue
            for u in reversed(self.parents[v]):
                stack.append((u, path + [u]))


def _levels_to(g: MetricGraph, sink: int) -> np.ndarray:
    return g.levels if sink == g.basepoint else g.distances_from(sink)


def geodesic_dag(g: MetricGraph, y: int, sink: Optional[int] = None) -> GeodesicDAG:
    """All geodesics from ``y`` to ``sink`` (default the basepoint).

    A neighbour one level closer to the sink of a vertex on a geodesic is itself on a
    geodesic, so a descending BFS from ``y`` finds exactly the union.
    """
    sink = g.basepoint if sink is None else sink
    lev = _levels_to(g, sink)
    parents: Dict[int, Tuple[int, ...]] = {}
    level: Dict[int, int] = {y: int(lev[y])}
    frontier = [y]
    while frontier:
        nxt = []
        for v in frontier:
            if sink == g.basepoint:
                ps = g.down[v]
            else:
                ps = tuple(u for u in g.adjacency[v] if lev[u] == lev[v] - 1)
            parents[v] = ps
            for u in ps:
                if u not in level:
                    level[u] = int(lev[u])
                    nxt.append(u)
        frontier = nxt
    return GeodesicDAG(y, sink, parents, level)


def canonical_geodesic(dag: GeodesicDAG) -> List[int]:
    """The geodesic that always steps to the smallest-id parent."""
    path = [dag.source]
    while path[-1] != dag.sink:
        path.append(dag.parents[path[-1]][0])
    return path


def geodesic_path(g: MetricGraph, y: int, z: int) -> List[int]:
    """Canonical geodesic from ``y`` to ``z`` without materialising the DAG."""
    lev = _levels_to(g, z)
    path = [y]
    while path[-1] != z:
        v = path[-1]
        path.append(min(u for u in g.adjacency[v] if lev[u] == lev[v] - 1))
    return path


def is_geodesic(g: MetricGraph, path: Sequence[int]) -> bool:
    if any(b not in g.adjacency[a] for a, b in zip(path, path[1:])):
        return False
    return g.distance(path[0], path[-1]) == len(path) - 1


def descent_cone(g: MetricGraph, sources: Iterable[int]) -> List[int]:
    """Vertices on some geodesic from a source to the basepoint, sorted by decreasing level."""
    seen = set(sources)
    order = sorted(seen, key=lambda v: -g.levels[v])
    buckets: Dict[int, List[int]] = {}
    for v in order:
        buckets.setdefault(int(g.levels[v]), []).append(v)
    out = []
    top = max(buckets) if buckets else -1
    for lv in range(top, -1, -1):
        layer = buckets.get(lv, [])
        out.extend(layer)
        for v in layer:
            for u in g.down[v]:
                if u not in seen:
                    seen.add(u)
                    buckets.setdefault(lv - 1, []).append(u)
    return out
