"""Embeddings of graphs that are relatively hyperbolic with respect to a piece system.

For a geodesic ``g`` from ``y`` to the basepoint and a piece ``A_i``, the i-domain is
the stretch of ``g`` between its first vertex in ``A_i`` (the entry, seen from ``y``)
and its last one (the exit).  Everything below is driven by the set of
(exit, entry) pairs achievable over *all* geodesics from ``y``, computed exactly by
dynamic programming over the geodesic DAG.

The boundary ``d_i(G_{x,k})`` collects entries of geodesics from the ball
``B(x, k)``, discarding entries whose level lies deep inside a long domain
(length ``>= 5K``) of some geodesic of the same family.  The embedding is
``phi = phi_s + phi_l``: capped trumpets on pieces ``x`` sees from outside, plus
averaged piece embeddings of boundary points.
"""
from __future__ import annotations

import math
from collections import OrderedDict
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Set, Tuple

import numpy as np

from .graph import MetricGraph, geodesic_dag, is_geodesic
from .lp import CompressionFunction, LpVector, label
from .pieces import PieceSystem

PROFILE_CACHE_SIZE = 20000
BOUNDARY_CACHE_SIZE = 4096
# the lower bound for the full map only covers pairs at distance >= C K with C at least this
SEPARATION_CONSTANT = 35


@dataclass(frozen=True)
class DomainRecord:
    piece: int
    entry: int
    exit: int
    length: int


def i_domain(g: MetricGraph, ps: PieceSystem, path: Sequence[int], i: int) -> Optional[DomainRecord]:
    """i-domain of a geodesic given as a vertex path ending at the basepoint."""
    if path[-1] != g.basepoint or not is_geodesic(g, path):
        raise ValueError("expected a geodesic ending at the basepoint")
    hits = [t for t, v in enumerate(path) if ps.contains(i, v)]
    if not hits:
        return None
    entry, exit_ = path[hits[0]], path[hits[-1]]
    return DomainRecord(i, entry, exit_, hits[-1] - hits[0] + 1)


@dataclass(frozen=True)
class DomainProfile:
    """All ``(exit_level, entry_level, entry, exit)`` tuples realised by geodesics from
    ``source`` that meet piece ``piece``; ``can_miss`` records whether some geodesic
    from ``source`` avoids the piece entirely."""

    piece: int
    source: int
    pairs: FrozenSet[Tuple[int, int, int, int]]
    can_miss: bool

    @property
    def entries(self) -> Set[int]:
        return {t[2] for t in self.pairs}

    @property
    def exits(self) -> Set[int]:
        return {t[3] for t in self.pairs}

    @property
    def max_length(self) -> int:
        return max((t[1] - t[0] + 1 for t in self.pairs), default=0)


def _profiles_for(g: MetricGraph, ps: PieceSystem, y: int) -> Dict[int, DomainProfile]:
    """Profiles of every piece met by a geodesic from ``y``.

    Work per piece is confined to the band of levels the piece occupies: above the
    band every cone vertex is reachable from ``y`` without touching the piece, and
    below it every path misses the piece.
    """
    dag = geodesic_dag(g, y)
    by_level: Dict[int, List[int]] = {}
    inside: Dict[int, Set[int]] = {}
    for v in sorted(dag.level):
        by_level.setdefault(dag.level[v], []).append(v)
        for i in ps.pieces_containing(v):
            inside.setdefault(i, set()).add(v)
    none_only = frozenset([None])
    out = {}
    for i in sorted(inside):
        ins = inside[i]
        lo = min(dag.level[v] for v in ins)
        hi = max(dag.level[v] for v in ins)
        free = set(by_level[hi])
        for lv in range(hi, lo - 1, -1):
            for v in by_level[lv]:
                if v in free and v not in ins:
                    free.update(dag.parents[v])
        can_miss = lo > 0 and any(v in free for v in by_level[lo - 1])
        lasts: Dict[int, FrozenSet] = {}
        for lv in range(lo, hi + 1):
            for v in by_level[lv]:
                acc: Set = set()
                if lv == 0:
                    acc.add(None)
                for u in dag.parents[v]:
                    acc |= lasts.get(u, none_only)
                if v in ins and None in acc:
                    acc.discard(None)
                    acc.add(v)
                lasts[v] = frozenset(acc)
        pairs = frozenset((int(dag.level[w]), int(dag.level[v]), v, w)
                          for v in ins if v in free for w in lasts[v])
        out[i] = DomainProfile(i, y, pairs, can_miss)
    return out


class ProfileCache:
    """Per-source memo of domain profiles for every piece the source's geodesics meet."""

    def __init__(self, g: MetricGraph, ps: PieceSystem, size: int = PROFILE_CACHE_SIZE):
        self.g, self.ps, self.size = g, ps, size
        self._store: "OrderedDict[int, Dict[int, DomainProfile]]" = OrderedDict()

    def __call__(self, y: int) -> Dict[int, DomainProfile]:
        prof = self._store.get(y)
        if prof is None:
            prof = _profiles_for(self.g, self.ps, y)
            self._store[y] = prof
            if len(self._store) > self.size:
                self._store.popitem(last=False)
        else:
            self._store.move_to_end(y)
        return prof


def domain_profiles(g: MetricGraph, ps: PieceSystem, y: int, i: int,
                    cache: Optional[ProfileCache] = None) -> DomainProfile:
    prof = (cache or ProfileCache(g, ps))(y).get(i)
    if prof is None:
        return DomainProfile(i, y, frozenset(), True)
    return prof


# ---------------------------------------------------------------------------
# boundary sets


@dataclass
class BoundaryData:
    """Boundary sets of every piece seen from ``x``.

    ``dists[i] = d(x, A_i)``; ``sets[i][k]`` is the boundary of piece ``i`` for the
    geodesics from ``B(x, k)``, for ``k = 0 .. floor(d(x, A_i) / 4)``.
    """

    x: int
    K: int
    dists: Dict[int, int]
    sets: Dict[int, List[FrozenSet[int]]]
    levels: np.ndarray = field(repr=False)

    def boundary(self, i: int) -> FrozenSet[int]:
        out: Set[int] = set()
        for s in self.sets.get(i, ()):
            out |= s
        return frozenset(out)

    def is_relevant(self, i: int) -> bool:
        b = self.boundary(i)
        return bool(b) and min(int(self.levels[v]) for v in b) >= 3 * self.K

    @property
    def relevant(self) -> List[int]:
        return [i for i in sorted(self.sets) if self.is_relevant(i)]

    @property
    def relevant_outside(self) -> List[int]:
        return [i for i in self.relevant if self.dists[i] > 0]

    def n_xi(self, i: int, a: int) -> int:
        return sum(1 for s in self.sets.get(i, ()) if a in s)

    def normaliser(self, i: int) -> Tuple[int, int]:
        sets = self.sets.get(i, [frozenset()])
        a = sum(len(s) for s in sets)
        return a, min(a, 1 + self.dists.get(i, 0) // 4)


def compute_boundaries(g: MetricGraph, ps: PieceSystem, x: int, K: Optional[int] = None,
                       cache: Optional[ProfileCache] = None) -> BoundaryData:
    """Exact boundary sets for all pieces and all admissible ``k``.

    A piece met by a geodesic from ``B(x, k)`` lies within ``lev(x) + 2k`` of ``x``,
    so ``k <= d(x, A_i) / 4`` forces ``k <= lev(x) / 2``; larger balls are never needed.
    """
    K = ps.K if K is None else K
    cache = cache or ProfileCache(g, ps)
    lev = g.levels
    kmax = int(lev[x]) // 2
    shells: Dict[int, List[int]] = {}
    for y, d in g.ball(x, kmax).items():
        shells.setdefault(d, []).append(y)
    row = g.distances_from(x)
    entries: Dict[int, Set[int]] = {}
    dists: Dict[int, int] = {}
    sets: Dict[int, List[FrozenSet[int]]] = {}
    forbidden: Set[int] = set()
    for k in range(kmax + 1):
        for y in sorted(shells.get(k, ())):
            for i, prof in cache(y).items():
                if i not in dists:
                    dists[i] = ps.distance_to(row, i)
                    entries[i] = set()
                    sets[i] = []
                entries[i].update(t[2] for t in prof.pairs)
                for lo, hi, _, _ in prof.pairs:
                    if hi - lo + 1 >= 5 * K:
                        forbidden.update(range(lo + 2 * K, hi - 2 * K + 1))
        for i, ents in entries.items():
            top = dists[i] // 4
            if k > top:
                continue
            while len(sets[i]) < k:
                sets[i].append(frozenset())
            sets[i].append(frozenset(v for v in ents if int(lev[v]) not in forbidden))
    for i in list(sets):
        if not sets[i]:
            del sets[i]
    return BoundaryData(x, K, {i: dists[i] for i in sets}, sets, lev)


def boundary_set(g: MetricGraph, ps: PieceSystem, x: int, k: int, i: int, K: Optional[int] = None,
                 data: Optional[BoundaryData] = None) -> FrozenSet[int]:
    data = data or compute_boundaries(g, ps, x, K)
    if i in data.dists and k > data.dists[i] // 4:
        raise ValueError(f"k={k} exceeds floor(d(x, A_i)/4) = {data.dists[i] // 4}")
    seq = data.sets.get(i, [])
    return seq[k] if k < len(seq) else frozenset()


@dataclass
class RelevantPieces:
    I_x: List[int]
    I_prime_x: List[int]
    boundary: Dict[int, FrozenSet[int]]
    dists: Dict[int, int]


def relevant_pieces(g: MetricGraph, ps: PieceSystem, x: int, K: Optional[int] = None,
                    data: Optional[BoundaryData] = None) -> RelevantPieces:
    data = data or compute_boundaries(g, ps, x, K)
    rel = data.relevant
    return RelevantPieces(rel, [i for i in rel if data.dists[i] > 0],
                          {i: data.boundary(i) for i in rel}, {i: data.dists[i] for i in rel})


def n_xi(g: MetricGraph, ps: PieceSystem, x: int, i: int, a: int, K: Optional[int] = None,
         data: Optional[BoundaryData] = None) -> int:
    """Number of ``k <= floor(d(x, A_i)/4)`` whose boundary contains ``a``."""
    data = data or compute_boundaries(g, ps, x, K)
    return data.n_xi(i, a)


# ---------------------------------------------------------------------------
# embedding


@dataclass(frozen=True)
class RelhypParams:
    f: CompressionFunction
    p: float
    K: int
    shared_small: bool = False   # one coordinate space for every piece's capped trumpets

    def __post_init__(self):
        if self.p <= 1:
            raise ValueError("p > 1 required")
        if self.K < 1:
            raise ValueError("K >= 1 required")


def anchor_distance(ps: PieceSystem, i: int, v: int) -> int:
    """``d(v, e_i)``; ball pieces use a small ball, other pieces the anchor's cached row."""
    a = ps.anchor(i)
    if ps.is_ball(i):
        return ps.g.ball(a, 2 * ps.ball_radius)[v]
    return int(ps.g.distances_from(a)[v])


class RelhypEmbedder:
    """Shared caches for evaluating ``phi_s``, ``phi_l`` and their ingredients."""

    def __init__(self, g: MetricGraph, ps: PieceSystem, params: RelhypParams):
        self.g, self.ps, self.params = g, ps, params
        self.profiles = ProfileCache(g, ps)
        self._bd: "OrderedDict[int, BoundaryData]" = OrderedDict()

    def boundaries(self, x: int) -> BoundaryData:
        bd = self._bd.get(x)
        if bd is None:
            bd = compute_boundaries(self.g, self.ps, x, self.params.K, self.profiles)
            self._bd[x] = bd
            if len(self._bd) > BOUNDARY_CACHE_SIZE:
                self._bd.popitem(last=False)
        return bd

    def capped_depth(self, x: int, i: int, v: int) -> int:
        """``d_{x,i}(v) = min(d(x, A_i), d(v, e_i) + 1)``."""
        d = self.boundaries(x).dists[i]
        return min(d, anchor_distance(self.ps, i, v) + 1)

    def small_trumpet(self, x: int, k: int, i: int) -> Dict[int, float]:
        bd = self.boundaries(x)
        if i not in bd.relevant_outside:
            raise ValueError(f"piece {i} is not relevant from outside at {self.g.label(x)}")
        inv = 1 / self.params.p
        return {v: self.capped_depth(x, i, v) ** inv for v in bd.sets[i][k]} if k < len(bd.sets[i]) else {}

    def H_small(self, x: int, i: int) -> Dict[int, float]:
        bd = self.boundaries(x)
        d = bd.dists.get(i, 0)
        if d == 0:
            raise ValueError("H_small needs d(x, A_i) >= 1")
        out: Dict[int, float] = {}
        for k in range(len(bd.sets[i])):
            for v, val in self.small_trumpet(x, k, i).items():
                out[v] = out.get(v, 0.0) + val
        return {v: val / d for v, val in out.items()}

    def embed_small(self, x: int) -> LpVector:
        pr = self.params
        bd = self.boundaries(x)
        out: Dict = {}
        for i in bd.relevant_outside:
            d = bd.dists[i]
            w = pr.f(d) / d ** (1 / pr.p)
            for v, val in self.H_small(x, i).items():
                key = label("phis", v) if pr.shared_small else label(f"phis:{i}", v)
                out[key] = out.get(key, 0.0) + w * val
        return LpVector(out, pr.p)

    def thick_normaliser(self, x: int, i: int) -> Tuple[int, int]:
        return self.boundaries(x).normaliser(i)

    def H_large(self, x: int, i: int) -> Dict[str, float]:
        bd = self.boundaries(x)
        _, kx = bd.normaliser(i)
        if kx == 0:
            return {}
        out: Dict[str, float] = {}
        for s in bd.sets.get(i, ()):
            for a in s:
                for key, val in self.ps.psi(i, a).items():
                    out[key] = out.get(key, 0.0) + val
        return {k: v / kx for k, v in out.items() if v}

    def embed_large(self, x: int) -> LpVector:
        out = {}
        for i in self.boundaries(x).relevant:
            for key, val in self.H_large(x, i).items():
                out[label(f"phil:{i}", key)] = val
        return LpVector(out, self.params.p)

    def embed(self, x: int) -> LpVector:
        return self.embed_small(x) + self.embed_large(x)


def embed_relhyp(g: MetricGraph, ps: PieceSystem, x: int, f: CompressionFunction, p: Optional[float] = None,
                 K: Optional[int] = None, embedder: Optional[RelhypEmbedder] = None) -> LpVector:
    if embedder is None:
        embedder = RelhypEmbedder(g, ps, RelhypParams(f, f.p if p is None else p, ps.K if K is None else K))
    return embedder.embed(x)


# ---------------------------------------------------------------------------
# SPQR conditions


@dataclass
class SPQRReport:
    K: int
    constants: Dict[str, int]
    witnesses: Dict[str, tuple]
    uncovered: List[int]

    def passed_condition(self, name: str) -> bool:
        if name == "C3" and self.uncovered:
            return False
        return self.constants[name] <= self.K

    @property
    def passed(self) -> bool:
        return all(self.passed_condition(c) for c in ("C1", "C2", "C3", "C4"))

    def to_dict(self) -> dict:
        return {"K": self.K, "passed": self.passed,
                "conditions": {c: {"minimal_constant": self.constants[c], "passed": self.passed_condition(c),
                                   "witness": list(self.witnesses.get(c, ()))} for c in ("C1", "C2", "C3", "C4")},
                "uncovered": self.uncovered[:20]}


def _diameter(g: MetricGraph, verts: Iterable[int]) -> Tuple[int, tuple]:
    vs = sorted(set(verts))
    best, wit = 0, ()
    for a, u in enumerate(vs):
        if len(vs) > 1:
            row = g.distances_from(u)
            for v in vs[a + 1:]:
                if row[v] > best:
                    best, wit = int(row[v]), (u, v)
    return best, wit


def check_spqr(g: MetricGraph, ps: PieceSystem, K: Optional[int] = None, xs: Optional[Sequence[int]] = None,
               embedder: Optional[RelhypEmbedder] = None) -> SPQRReport:
    """Minimal constants for the four conditions over sources in ``xs`` (default the
    safe ball).  Each condition passes when its minimal constant is at most ``K``.

    C1: diameter of the exit set of each piece over all geodesics from ``xs``.
    C2: entry distance for geodesics from ``x`` and from ``y`` with
        ``d(x, y) <= max(floor(d(x, A_i)/4), 1)``, and ``l_i(g_x)`` whenever some
        geodesic from ``y`` misses ``A_i``.
    C3: pieces per vertex, and the diameter of pairwise piece intersections.
    C4: pieces of ``I_x(K)`` at a common distance from ``x``.
    """
    K = ps.K if K is None else K
    xs = g.safe_ball() if xs is None else list(xs)
    if embedder is None:
        embedder = RelhypEmbedder(g, ps, RelhypParams(CompressionFunction("power", 0.5, 2.0), 2.0, K))
    cache = embedder.profiles
    consts = dict.fromkeys(("C1", "C2", "C3", "C4"), 0)
    wit: Dict[str, tuple] = {}

    def bump(name, val, w):
        if val > consts[name]:
            consts[name] = val
            wit[name] = w

    exits: Dict[int, Set[int]] = {}
    for y in xs:
        for i, prof in cache(y).items():
            exits.setdefault(i, set()).update(prof.exits)
    for i, ex in exits.items():
        d, w = _diameter(g, ex)
        bump("C1", d, (i,) + w)

    for x in xs:
        row = g.distances_from(x)
        px = cache(x)
        for i, prof in px.items():
            radius = max(ps.distance_to(row, i) // 4, 1)
            ex_entries = sorted(prof.entries)
            for y in g.ball(x, radius):
                qy = cache(y).get(i)
                if qy is None or qy.can_miss:
                    bump("C2", prof.max_length, (x, y, i, "length"))
                if qy is not None:
                    for a in ex_entries:
                        ra = g.distances_from(a)
                        for b in qy.entries:
                            bump("C2", int(ra[b]), (x, y, i, a, b))

    uncovered = []
    pairs_seen: Set[Tuple[int, int]] = set()
    for v in xs:
        here = ps.pieces_containing(v)
        if not here:
            uncovered.append(v)
        bump("C3", len(here), (v, "count"))
        for a in range(len(here)):
            for b in range(a + 1, len(here)):
                key = (here[a], here[b])
                if key in pairs_seen:
                    continue
                pairs_seen.add(key)
                common = ps.member_set(key[0]) & ps.member_set(key[1])
                d, w = _diameter(g, common)
                bump("C3", d, key + w)

    for x in xs:
        bd = embedder.boundaries(x)
        counts: Dict[int, int] = {}
        for i in bd.relevant:
            t = bd.dists[i]
            counts[t] = counts.get(t, 0) + 1
        for t, c in counts.items():
            bump("C4", c, (x, t))
    return SPQRReport(K, consts, wit, uncovered)


# ---------------------------------------------------------------------------
# numeric lemma checks


@dataclass
class RelhypLemmaReport:
    checked: Dict[str, int]
    violations: Dict[str, List[tuple]]
    constants: Dict[str, float]

    @property
    def passed(self) -> bool:
        return not any(self.violations.values())


def check_nxi_bound(g: MetricGraph, ps: PieceSystem, R: int, xs: Optional[Sequence[int]] = None,
                    embedder: Optional[RelhypEmbedder] = None, K: Optional[int] = None) -> RelhypLemmaReport:
    """``|n_{x,i}(a) - n_{y,i}(a)| <= 4R`` for all ``x, y`` in ``xs`` within distance ``R``,
    every piece and every boundary point of either."""
    K = ps.K if K is None else K
    xs = g.safe_ball() if xs is None else list(xs)
    xset = set(xs)
    emb = embedder or RelhypEmbedder(g, ps, RelhypParams(CompressionFunction("power", 0.5, 2.0), 2.0, K))
    viol, checked, worst = [], 0, 0
    for x in xs:
        bx = emb.boundaries(x)
        for y, d in g.ball(x, R).items():
            if y <= x or y not in xset:
                continue
            by = emb.boundaries(y)
            for i in set(bx.sets) | set(by.sets):
                for a in bx.boundary(i) | by.boundary(i):
                    diff = abs(bx.n_xi(i, a) - by.n_xi(i, a))
                    checked += 1
                    worst = max(worst, diff)
                    if diff > 4 * R:
                        viol.append((x, y, i, a, diff))
    return RelhypLemmaReport({"nxi": checked}, {"nxi": viol}, {"max_difference": float(worst)})


def _canonical_entry(g: MetricGraph, ps: PieceSystem, x: int, i: int) -> Optional[int]:
    v = x
    while True:
        if ps.contains(i, v):
            return v
        if v == g.basepoint:
            return None
        v = g.down[v][0]


def check_small_piece_lemmas(emb: RelhypEmbedder, xs: Sequence[int], tol: float = 1e-9) -> RelhypLemmaReport:
    """Trumpet norm bounds, the thick-trumpet norm lower bound (both the stated ``1/4``
    factor and the ``4^-p`` factor that the averaging argument yields) and measured
    constants for the adjacent-pair difference bounds of ``H_i`` and ``H'_i``."""
    g, ps, p, K = emb.g, emb.ps, emb.params.p, emb.params.K
    names = ("F_lower", "F_upper", "H_lower_quarter", "H_lower_power")
    checked = dict.fromkeys(names, 0)
    viol: Dict[str, List[tuple]] = {n: [] for n in names}
    consts = {"H_diff": 0.0, "H_large_diff": 0.0}

    def rec(name, ok, item):
        checked[name] += 1
        if not ok and len(viol[name]) < 50:
            viol[name].append(item)

    xset = set(xs)
    for x in xs:
        bd = emb.boundaries(x)
        for i in bd.relevant_outside:
            c = _canonical_entry(g, ps, x, i)
            if c is None:
                continue
            dc = emb.capped_depth(x, i, c)
            in_all = all(c in s for s in bd.sets[i])
            for k in range(len(bd.sets[i])):
                F = emb.small_trumpet(x, k, i)
                norm = sum(v ** p for v in F.values())
                rec("F_upper", norm <= len(F) * (dc + K) * (1 + tol), (x, i, k, norm))
                if in_all:
                    rec("F_lower", dc <= norm * (1 + tol), (x, i, k, norm))
            if in_all:
                hn = sum(v ** p for v in emb.H_small(x, i).values())
                rec("H_lower_quarter", dc / 4 <= hn * (1 + tol), (x, i, hn, dc))
                rec("H_lower_power", dc / 4 ** p <= hn * (1 + tol), (x, i, hn, dc))
        for y in g.adjacency[x]:
            if y < x or y not in xset:
                continue
            by = emb.boundaries(y)
            for i in set(bd.relevant_outside) | set(by.relevant_outside):
                hx = emb.H_small(x, i) if i in bd.relevant_outside else {}
                hy = emb.H_small(y, i) if i in by.relevant_outside else {}
                diff = sum(abs(hx.get(v, 0.0) - hy.get(v, 0.0)) ** p for v in set(hx) | set(hy))
                src = x if i in bd.relevant_outside else y
                c = _canonical_entry(g, ps, src, i)
                dsrc = emb.boundaries(src).dists[i]
                if c is not None and diff > 0:
                    consts["H_diff"] = max(consts["H_diff"], diff * dsrc ** p / emb.capped_depth(src, i, c))
            for i in set(bd.relevant) | set(by.relevant):
                hx = emb.H_large(x, i) if i in bd.relevant else {}
                hy = emb.H_large(y, i) if i in by.relevant else {}
                diff = sum(abs(hx.get(v, 0.0) - hy.get(v, 0.0)) ** p for v in set(hx) | set(hy)) ** (1 / p)
                dd = bd.dists.get(i, by.dists.get(i, 0))
                consts["H_large_diff"] = max(consts["H_large_diff"], diff * (dd + 1))
    return RelhypLemmaReport(checked, viol, consts)
