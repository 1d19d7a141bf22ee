"""Tree-graded graphs: axiom validation, geodesic decomposition into pieces, the
basepoint distance tree, the split metric ``d' = sigma_T + sigma_I`` and the
embeddings ``phi_T`` (weighted anchor coordinates) and ``phi_I`` (piece maps).
"""
from __future__ import annotations

from dataclasses import dataclass, field
from itertools import combinations
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np

from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import shortest_path

from .graph import MetricGraph, geodesic_dag
from .lp import CompressionFunction, LpVector, label
from .pieces import PieceSystem

CYCLE_CROSSCHECK_MAX = 30


class TreeGradedError(ValueError):
    pass


@dataclass
class TreeGradedReport:
    uncovered: List[int] = field(default_factory=list)
    disconnected: List[int] = field(default_factory=list)
    loose_blocks: List[Tuple[int, ...]] = field(default_factory=list)
    overlaps: List[Tuple[int, int, int]] = field(default_factory=list)
    containments: List[Tuple[int, int]] = field(default_factory=list)
    cycle_crosscheck: Optional[bool] = None

    @property
    def axiom1(self) -> bool:
        return not (self.uncovered or self.disconnected or self.loose_blocks)

    @property
    def axiom2(self) -> bool:
        return not (self.overlaps or self.containments)

    @property
    def passed(self) -> bool:
        return self.axiom1 and self.axiom2

    def to_dict(self) -> dict:
        return {"passed": self.passed, "axiom1": self.axiom1, "axiom2": self.axiom2,
                "uncovered": self.uncovered[:20], "disconnected_pieces": self.disconnected[:20],
                "blocks_across_pieces": [list(b) for b in self.loose_blocks[:20]],
                "overlaps": [list(o) for o in self.overlaps[:20]],
                "containments": [list(c) for c in self.containments[:20]],
                "cycle_crosscheck": self.cycle_crosscheck}


def _all_pieces(ps: PieceSystem) -> List[np.ndarray]:
    return [ps.members(i) for i in range(len(ps))]


def _common_piece(ps: PieceSystem, verts: Sequence[int]) -> bool:
    it = iter(verts)
    common = set(ps.pieces_containing(next(it)))
    for v in it:
        common &= set(ps.pieces_containing(v))
        if not common:
            return False
    return True


def validate_tree_graded(g: MetricGraph, ps: PieceSystem) -> TreeGradedReport:
    """Check the two tree-graded axioms.

    Axiom 1 (vertices and simple loops inside pieces) is reduced to: every
    biconnected block with at least two edges lies inside one piece; on graphs with at
    most 30 vertices the reduction is cross-checked by enumerating simple cycles.
    Axiom 2: distinct pieces share at most one vertex and none contains another.
    """
    rep = TreeGradedReport()
    pieces = _all_pieces(ps)
    covered = np.zeros(g.n, dtype=bool)
    for p in pieces:
        covered[p] = True
    rep.uncovered = [int(v) for v in np.nonzero(~covered)[0]]
    for i, p in enumerate(pieces):
        if len(p) > 1 and not _induced_connected(g, p):
            rep.disconnected.append(i)
    G = nx.Graph(list(g.edges()))
    G.add_nodes_from(range(g.n))
    if not rep.uncovered:
        for comp in nx.biconnected_components(G):
            if len(comp) >= 3 and not _common_piece(ps, sorted(comp)):
                rep.loose_blocks.append(tuple(sorted(comp)))
    shared: Dict[Tuple[int, int], int] = {}
    member_lists: List[List[int]] = [[] for _ in range(g.n)]
    for i, p in enumerate(pieces):
        for v in p:
            member_lists[v].append(i)
    for v, ids in enumerate(member_lists):
        for a, b in combinations(ids, 2):
            shared[(a, b)] = shared.get((a, b), 0) + 1
    for (a, b), c in sorted(shared.items()):
        if c > 1:
            rep.overlaps.append((a, b, c))
        if c == len(pieces[a]) or c == len(pieces[b]):
            rep.containments.append((a, b) if c == len(pieces[a]) else (b, a))
    if g.n <= CYCLE_CROSSCHECK_MAX and not rep.uncovered:
        direct = all(_common_piece(ps, cyc) for cyc in nx.simple_cycles(G))
        rep.cycle_crosscheck = direct == (not rep.loose_blocks)
    return rep


def _induced_connected(g: MetricGraph, verts: np.ndarray) -> bool:
    vs = set(int(v) for v in verts)
    start = next(iter(vs))
    seen = {start}
    stack = [start]
    while stack:
        v = stack.pop()
        for u in g.adjacency[v]:
            if u in vs and u not in seen:
                seen.add(u)
                stack.append(u)
    return len(seen) == len(vs)


def require_tree_graded(g: MetricGraph, ps: PieceSystem) -> None:
    """Validate once per piece system; raise if the axioms fail."""
    rep = getattr(ps, "_tg_report", None)
    if rep is None:
        rep = validate_tree_graded(g, ps)
        ps._tg_report = rep
    if not rep.passed:
        raise TreeGradedError("piece system is not tree-graded: " + str(rep.to_dict()))


# ---------------------------------------------------------------------------
# decomposition


@dataclass(frozen=True)
class TGDecomposition:
    piece_indices: Tuple[int, ...]
    transition_vertices: Tuple[int, ...]
    entries: Tuple[int, ...]

    def transitions(self) -> Dict[int, int]:
        return dict(zip(self.piece_indices, self.transition_vertices))


def _extreme_geodesic(g: MetricGraph, x: int, largest: bool) -> List[int]:
    path = [x]
    while path[-1] != g.basepoint:
        down = g.down[path[-1]]
        path.append(down[-1] if largest else down[0])
    path.reverse()
    return path


def decompose_path(g: MetricGraph, ps: PieceSystem, path: Sequence[int]) -> TGDecomposition:
    """Split a geodesic starting at the basepoint into maximal runs inside pieces.

    At each vertex the run continues in the piece containing the next edge that
    covers the most subsequent vertices; an edge inside no piece is a gap of
    length one, and a vertex isolated by gaps forms its own run.
    """
    L = len(path) - 1
    runs: List[Tuple[int, int, int]] = []   # (piece, start, end)

    def single(t: int) -> None:
        v = path[t]
        cands = ps.pieces_containing(v)
        own = [i for i in cands if ps.anchor(i) == v]
        runs.append(((own or cands)[0], t, t))

    t = 0
    while True:
        if t == L:
            if not runs or runs[-1][2] < L:
                single(L)
            break
        cands = set(ps.pieces_containing(path[t])) & set(ps.pieces_containing(path[t + 1]))
        if cands:
            best = None
            for i in sorted(cands):
                s = t + 1
                while s < L and ps.contains(i, path[s + 1]):
                    s += 1
                if best is None or s > best[1]:
                    best = (i, s)
            runs.append((best[0], t, best[1]))
            t = best[1]
        else:
            if not runs or runs[-1][2] < t:
                single(t)
            t += 1
    pieces = tuple(r[0] for r in runs)
    entries = tuple(path[r[1]] for r in runs)
    trans = tuple(path[r[2]] for r in runs)
    lev = g.levels
    for i, e_j in zip(pieces, entries):
        if ps.anchor(i) != e_j:
            raise TreeGradedError(f"run in piece {ps.label(i)} starts at {g.label(e_j)}, "
                                  f"not at its anchor {g.label(ps.anchor(i))}")
    if any(lev[a] >= lev[b] for a, b in zip(entries, entries[1:])):
        raise TreeGradedError("anchor distances along the decomposition are not strictly increasing")
    return TGDecomposition(pieces, trans, entries)


def decompose_geodesic(g: MetricGraph, ps: PieceSystem, x: int, check_unique: bool = True) -> TGDecomposition:
    """Pieces, anchors and transition vertices along any geodesic from the basepoint to
    ``x``.  With ``check_unique`` the smallest-id and largest-id geodesics are both
    decomposed and must agree."""
    require_tree_graded(g, ps)
    dec = decompose_path(g, ps, _extreme_geodesic(g, x, largest=False))
    if check_unique:
        other = decompose_path(g, ps, _extreme_geodesic(g, x, largest=True))
        if other != dec:
            raise TreeGradedError(f"geodesics to {g.label(x)} decompose differently")
    return dec


class DecompositionCache:
    """Memoised decompositions for repeated metric and embedding queries."""

    def __init__(self, g: MetricGraph, ps: PieceSystem, check_unique: bool = False):
        require_tree_graded(g, ps)
        self.g, self.ps, self.check_unique = g, ps, check_unique
        self._store: Dict[int, TGDecomposition] = {}

    def __call__(self, x: int) -> TGDecomposition:
        d = self._store.get(x)
        if d is None:
            d = decompose_geodesic(self.g, self.ps, x, self.check_unique)
            self._store[x] = d
        return d


# ---------------------------------------------------------------------------
# distance tree


@dataclass
class DistanceTree:
    classes: List[List[int]]
    projection: np.ndarray
    adjacency: List[Tuple[int, ...]]
    depth: np.ndarray
    parent: np.ndarray

    def distance(self, u: int, v: int) -> int:
        """Tree distance between the classes of two vertices."""
        a, b = int(self.projection[u]), int(self.projection[v])
        total = int(self.depth[a] + self.depth[b])
        while self.depth[a] > self.depth[b]:
            a = int(self.parent[a])
        while self.depth[b] > self.depth[a]:
            b = int(self.parent[b])
        while a != b:
            a, b = int(self.parent[a]), int(self.parent[b])
        return total - 2 * int(self.depth[a])

    def distance_matrix(self) -> np.ndarray:
        """All class-to-class tree distances."""
        child = np.nonzero(self.parent >= 0)[0]
        m = len(self.parent)
        edges = csr_matrix((np.ones(len(child)), (child, self.parent[child])), shape=(m, m))
        return shortest_path(edges, directed=False, unweighted=True).astype(np.int64)


def build_distance_tree(g: MetricGraph, ps: PieceSystem) -> DistanceTree:
    """Quotient of ``g`` identifying vertices of a common piece at equal distance from
    its anchor.  Inside a tree-graded piece that distance is the level difference,
    since geodesics from the basepoint enter the piece through its anchor."""
    require_tree_graded(g, ps)
    n = g.n
    lev = g.levels
    parent = list(range(n))

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for i in range(len(ps)):
        mem = ps.members(i)
        if len(mem) < 2:
            continue
        firsts: Dict[int, int] = {}
        for v in mem:
            v = int(v)
            key = int(lev[v])
            if key in firsts:
                ra, rb = find(firsts[key]), find(v)
                if ra != rb:
                    parent[max(ra, rb)] = min(ra, rb)
            else:
                firsts[key] = v
    roots = [find(v) for v in range(n)]
    ids: Dict[int, int] = {}
    proj = np.empty(n, dtype=np.int64)
    classes: List[List[int]] = []
    for v in range(n):
        r = roots[v]
        if r not in ids:
            ids[r] = len(classes)
            classes.append([])
        proj[v] = ids[r]
        classes[ids[r]].append(v)
    m = len(classes)
    adj = [set() for _ in range(m)]
    for u, v in g.edges():
        a, b = int(proj[u]), int(proj[v])
        if a != b:
            adj[a].add(b)
            adj[b].add(a)
    n_edges = sum(len(s) for s in adj) // 2
    if n_edges != m - 1:
        raise TreeGradedError(f"distance quotient has a cycle ({m} classes, {n_edges} edges)")
    depth = np.array([int(lev[c[0]]) for c in classes], dtype=np.int64)
    par = np.full(m, -1, dtype=np.int64)
    for c in range(m):
        ups = [b for b in adj[c] if depth[b] == depth[c] - 1]
        if depth[c] > 0:
            if len(ups) != 1:
                raise TreeGradedError("distance quotient is not graded by level")
            par[c] = ups[0]
    return DistanceTree(classes, proj, [tuple(sorted(s)) for s in adj], depth, par)


# ---------------------------------------------------------------------------
# split metric


class SplitMetric:
    """``d'(x, y) = sigma_T(x, y) + sigma_I(x, y)`` with shared caches."""

    def __init__(self, g: MetricGraph, ps: PieceSystem, tree: Optional[DistanceTree] = None,
                 decomp: Optional[DecompositionCache] = None):
        self.g, self.ps = g, ps
        self.tree = build_distance_tree(g, ps) if tree is None else tree
        self.decomp = DecompositionCache(g, ps) if decomp is None else decomp

    def sigma_T(self, x: int, y: int) -> int:
        return self.tree.distance(x, y)

    def sigma_I(self, x: int, y: int) -> int:
        tx, ty = self.decomp(x).transitions(), self.decomp(y).transitions()
        total = 0
        for i in set(tx) | set(ty):
            a = tx.get(i, self.ps.anchor(i))
            b = ty.get(i, self.ps.anchor(i))
            if a != b:
                total += self.g.distance(a, b)
        return total

    def __call__(self, x: int, y: int) -> Tuple[int, int, int]:
        st, si = self.sigma_T(x, y), self.sigma_I(x, y)
        return st, si, st + si

    def matrix(self, xs: Sequence[int]) -> np.ndarray:
        """``d'`` on all ordered pairs of ``xs`` as an integer matrix."""
        xs = np.asarray(list(xs), dtype=np.int64)
        n = len(xs)
        proj = self.tree.projection[xs]
        out = self.tree.distance_matrix()[np.ix_(proj, proj)]
        hits: Dict[int, List[Tuple[int, int]]] = {}
        for a, x in enumerate(xs):
            for i, t in self.decomp(int(x)).transitions().items():
                hits.setdefault(i, []).append((a, t))
        for i, pairs in hits.items():
            rows = np.array([a for a, _ in pairs])
            col = np.full(n, self.ps.anchor(i), dtype=np.int64)
            col[rows] = [t for _, t in pairs]
            block = np.stack([self.g.distances_from(int(t))[col] for t in col[rows]]).astype(np.int64)
            # pairs where neither point leaves through this piece both sit at its anchor
            out[rows, :] += block
            rest = np.ones(n, dtype=bool)
            rest[rows] = False
            out[np.ix_(rest, rows)] += block[:, rest].T
        return out


def split_metrics(g: MetricGraph, ps: PieceSystem, x: int, y: int) -> Tuple[int, int, int]:
    """``(sigma_T, sigma_I, d')`` for one pair (builds the tree; use :class:`SplitMetric`
    for many pairs)."""
    return SplitMetric(g, ps)(x, y)


@dataclass
class BilipschitzReport:
    pairs: int
    violations: List[Tuple[int, int, int, int]]
    min_ratio: float
    max_ratio: float

    @property
    def passed(self) -> bool:
        return not self.violations


def check_bilipschitz(g: MetricGraph, ps: PieceSystem, xs: Optional[Sequence[int]] = None,
                      metric: Optional[SplitMetric] = None) -> BilipschitzReport:
    """Exhaustive ``d/2 <= d' <= 2d`` over pairs of ``xs`` (default the safe ball), in
    exact integer arithmetic."""
    metric = SplitMetric(g, ps) if metric is None else metric
    xs = g.safe_ball() if xs is None else list(xs)
    viol = []
    lo, hi, count = np.inf, 0.0, 0
    for a, x in enumerate(xs):
        row = g.distances_from(x)
        for y in xs[a + 1:]:
            d = int(row[y])
            dp = metric(x, y)[2]
            count += 1
            lo, hi = min(lo, dp / d), max(hi, dp / d)
            if not (d <= 2 * dp and dp <= 2 * d):
                viol.append((x, y, d, dp))
    return BilipschitzReport(count, viol, float(lo) if count else float("nan"), hi if count else float("nan"))


# ---------------------------------------------------------------------------
# embeddings


def embed_phi_T(g: MetricGraph, ps: PieceSystem, x: int, f: CompressionFunction, p: Optional[float] = None,
                decomp: Optional[DecompositionCache] = None) -> LpVector:
    """Coordinate ``f(d(e_k, x)) (d(e_k, e_{k+1}) / d(e_k, x))^(1/p)`` for each piece of the
    decomposition with anchor ``e_k != x``; the anchor after the last one is ``x`` itself.
    Keys are piece indices in namespace ``phiT``."""
    p = f.p if p is None else p
    dec = decomp(x) if decomp is not None else decompose_geodesic(g, ps, x)
    lev = g.levels
    lx = int(lev[x])
    nxt = list(dec.entries[1:]) + [x]
    out = {}
    for i, ek, ek1 in zip(dec.piece_indices, dec.entries, nxt):
        dist = lx - int(lev[ek])
        if dist > 0:
            out[label("phiT", i)] = f(dist) * ((int(lev[ek1]) - int(lev[ek])) / dist) ** (1 / p)
    return LpVector(out, p)


def embed_phi_I(g: MetricGraph, ps: PieceSystem, x: int, p: float,
                decomp: Optional[DecompositionCache] = None) -> LpVector:
    """``sum_{i in I_x} psi_i(x_i)``, each piece in its own namespace ``phiI:i``."""
    dec = decomp(x) if decomp is not None else decompose_geodesic(g, ps, x)
    out = {}
    for i, xi in zip(dec.piece_indices, dec.transition_vertices):
        for key, val in ps.psi(i, xi).items():
            out[label(f"phiI:{i}", key)] = val
    return LpVector(out, p)


def embed_tree_graded(g: MetricGraph, ps: PieceSystem, x: int, f: CompressionFunction,
                      p: Optional[float] = None, decomp: Optional[DecompositionCache] = None) -> LpVector:
    """``phi_T(x) + phi_I(x)`` (disjoint namespaces)."""
    p = f.p if p is None else p
    return embed_phi_T(g, ps, x, f, p, decomp) + embed_phi_I(g, ps, x, p, decomp)


# ---------------------------------------------------------------------------
# exhaustive structural checks


@dataclass
class UniquenessReport:
    points: int
    geodesics: int
    mismatches: List[int]
    capped: List[int]

    @property
    def passed(self) -> bool:
        return not self.mismatches


def check_decomposition_uniqueness(g: MetricGraph, ps: PieceSystem, xs: Optional[Sequence[int]] = None,
                                   max_paths: int = 10000) -> UniquenessReport:
    """Decompose every geodesic from the basepoint to each ``x`` and compare.

    Points with more than ``max_paths`` geodesics are checked on the first
    ``max_paths`` only and listed in ``capped``.
    """
    require_tree_graded(g, ps)
    xs = g.safe_ball() if xs is None else list(xs)
    mismatches, capped, total = [], [], 0
    for x in xs:
        ref = None
        for count, path in enumerate(geodesic_dag(g, x).paths()):
            if count >= max_paths:
                capped.append(x)
                break
            total += 1
            dec = decompose_path(g, ps, path[::-1])
            if ref is None:
                ref = dec
            elif dec != ref:
                mismatches.append(x)
                break
    return UniquenessReport(len(xs), total, mismatches, capped)


@dataclass
class MetricAxiomReport:
    points: int
    zero_violations: List[Tuple[int, int]]
    symmetry_violations: List[Tuple[int, int]]
    triangle_violations: List[Tuple[int, int, int]]

    @property
    def passed(self) -> bool:
        return not (self.zero_violations or self.symmetry_violations or self.triangle_violations)


def check_metric_axioms(metric, xs: Sequence[int], max_witnesses: int = 50) -> MetricAxiomReport:
    """Exhaustive identity, symmetry and triangle checks for an integer-valued function
    on ``xs`` (the full ordered-pair matrix is evaluated, so symmetry is tested too).

    ``metric`` is either a callable on vertex pairs or the precomputed matrix over ``xs``.
    """
    xs = list(xs)
    n = len(xs)
    if callable(metric):
        D = np.array([[metric(x, y) for y in xs] for x in xs], dtype=np.int64)
    else:
        D = np.asarray(metric, dtype=np.int64)
        if D.shape != (n, n):
            raise ValueError(f"metric matrix has shape {D.shape}, expected {(n, n)}")
    zero = [(xs[a], xs[b]) for a, b in zip(*np.nonzero((D == 0) != np.eye(n, dtype=bool)))][:max_witnesses]
    sym = [(xs[a], xs[b]) for a, b in zip(*np.nonzero(D != D.T)) if a < b][:max_witnesses]
    tri = []
    D32 = D.astype(np.int32)
    via, worse = np.empty_like(D32), np.empty((n, n), dtype=bool)
    for k in range(n):
        np.add(D32[:, k:k + 1], D32[k:k + 1, :], out=via)
        np.greater(D32, via, out=worse)
        if not worse.any():
            continue
        for a, b in zip(*np.nonzero(worse)):
            if len(tri) >= max_witnesses:
                break
            tri.append((xs[a], xs[k], xs[b]))
    return MetricAxiomReport(n, zero, sym, tri)
