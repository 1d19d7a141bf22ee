"""Embedding of a hyperbolic graph built from averaged "trumpets".

For a vertex ``x``, a radius ``k`` and a scale ``n``, the trumpet is the set of
vertices lying on some geodesic from a point ``z`` of ``B(x, k)`` to the basepoint,
at distance ``[n, 2n]`` from ``z`` and outside ``B(e, 3 delta)``.  Averaging the
indicator over ``k <= n/4`` gives the level function ``H(x, n)``; the embedding is
the weighted sum of level functions over dyadic scales.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .graph import MetricGraph
from .hyperbolicity import gromov_product2
from .lp import CompressionFunction, LpVector, label

INF = 1 << 30


@dataclass(frozen=True)
class TrumpetParams:
    delta: float
    scales: Tuple[int, ...]
    f: CompressionFunction
    p: float

    def __post_init__(self):
        if self.p <= 1:
            raise ValueError("p > 1 required")
        floor = max(1.0, 3 * self.delta)
        bad = [n for n in self.scales if n < floor]
        if bad:
            raise ValueError(f"scales {bad} below max(1, 3*delta)")

    @property
    def max_k(self) -> int:
        return max((n // 4 for n in self.scales), default=0)


def default_scales(delta: float, diameter: int) -> Tuple[int, ...]:
    """Powers of two ``2^j`` (``j >= 1``) from ``max(1, 3 delta)`` up to ``2^ceil(log2 diameter)``."""
    top = 2 ** max(1, math.ceil(math.log2(max(diameter, 2))))
    floor = max(1.0, 3 * delta)
    return tuple(n for n in (2 ** j for j in range(1, int(math.log2(top)) + 1)) if n >= floor)


def make_params(g: MetricGraph, delta: float, f: CompressionFunction, p: Optional[float] = None,
                scales: Optional[Sequence[int]] = None, safe_radius: Optional[int] = None) -> TrumpetParams:
    p = f.p if p is None else p
    if scales is None:
        r = g.radius // 2 if safe_radius is None else safe_radius
        scales = default_scales(delta, 2 * r)
    return TrumpetParams(float(delta), tuple(int(n) for n in scales), f.with_p(p), float(p))


class ReachTable:
    """For each vertex ``v`` below ``B(x, kmax)``, the smallest ``d(x, z)`` over points
    ``z`` of the ball at each level that have a geodesic to the basepoint through ``v``."""

    def __init__(self, g: MetricGraph, x: int, kmax: int):
        self.g, self.x, self.kmax = g, x, kmax
        lev = g.levels
        ball = g.ball(x, kmax)
        self.base = int(lev[x]) - kmax
        width = 2 * kmax + 1
        table: Dict[int, np.ndarray] = {}
        buckets: Dict[int, List[int]] = {}
        for z, dz in ball.items():
            row = table.get(z)
            if row is None:
                row = np.full(width, INF, dtype=np.int64)
                table[z] = row
                buckets.setdefault(int(lev[z]), []).append(z)
            row[int(lev[z]) - self.base] = dz
        top = max(buckets)
        for lv in range(top, 0, -1):
            for v in buckets.get(lv, ()):
                row = table[v]
                for u in g.down[v]:
                    ru = table.get(u)
                    if ru is None:
                        table[u] = row.copy()
                        buckets.setdefault(lv - 1, []).append(u)
                    else:
                        np.minimum(ru, row, out=ru)
        self.table = table

    def kmin(self, n: int, delta: float) -> Dict[int, int]:
        """``{v: smallest k with v in F(x, k, n)}`` (vertices in no trumpet omitted)."""
        lev = self.g.levels
        out = {}
        cut2 = int(round(6 * delta))  # 3 delta, doubled
        width = 2 * self.kmax + 1
        for v, row in self.table.items():
            lv = int(lev[v])
            if 2 * lv <= cut2:
                continue
            lo = max(lv + n - self.base, 0)
            hi = min(lv + 2 * n - self.base, width - 1)
            if lo > hi:
                continue
            m = int(row[lo:hi + 1].min())
            if m < INF:
                out[v] = m
        return out


def trumpet_set(g: MetricGraph, x: int, k: int, n: int, delta: float) -> List[int]:
    """The trumpet ``F(x, k, n)`` as a sorted vertex list."""
    if k < 0 or 4 * k > n:
        raise ValueError(f"need 0 <= k <= n/4; got k={k}, n={n}")
    return sorted(v for v, m in ReachTable(g, x, k).kmin(n, delta).items() if m <= k)


def _level_entries(kmins: Dict[int, int], n: int) -> Dict[int, float]:
    top = n // 4
    return {v: (top + 1 - m) / n for v, m in kmins.items() if m <= top}


def level_function(g: MetricGraph, x: int, n: int, params: TrumpetParams,
                   table: Optional[ReachTable] = None) -> LpVector:
    """``H(x, n) = (1/n) sum_{k <= n/4} F(x, k, n)``, namespace ``H:n``."""
    if table is None or table.kmax < n // 4:
        table = ReachTable(g, x, n // 4)
    ns = f"H:{n}"
    return LpVector({label(ns, v): val for v, val in _level_entries(table.kmin(n, params.delta), n).items()},
                    params.p)


def embed_hyperbolic(g: MetricGraph, x: int, params: TrumpetParams) -> LpVector:
    """``phi(x) = sum_n f(n) / n^(1/p) H(x, n)`` over the configured scales."""
    table = ReachTable(g, x, params.max_k)
    entries = {}
    for n in params.scales:
        w = params.f(n) / n ** (1 / params.p)
        ns = f"H:{n}"
        for v, val in _level_entries(table.kmin(n, params.delta), n).items():
            entries[label(ns, v)] = w * val
    return LpVector(entries, params.p)


def scale_cutoff(g: MetricGraph, x: int, y: int, delta: float) -> Optional[int]:
    """``floor(log2(q - 5 delta))`` with ``q = (d(x,e) + d(x,y) - d(y,e)) / 2``, taking ``x``
    as the point farther from the basepoint.  ``None`` when ``q <= 5 delta``."""
    e = g.basepoint
    if g.levels[y] > g.levels[x]:
        x, y = y, x
    q2 = gromov_product2(g, e, y, x)
    return cutoff_from_product(q2 / 2, delta)


def cutoff_from_product(q: float, delta: float) -> Optional[int]:
    gap = q - 5 * delta
    if gap <= 0:
        return None
    return int(math.floor(math.log2(gap)))


# ---------------------------------------------------------------------------
# numeric lemma checks


@dataclass
class TrumpetLemmaReport:
    C: float
    ball_bound: int
    checked: Dict[str, int]
    violations: Dict[str, List[tuple]]
    worst_ratio: Dict[str, float]

    @property
    def passed(self) -> bool:
        return not any(self.violations.values())


def _leq(a: float, b: float, tol: float = 1e-9) -> bool:
    return a <= b + tol * max(abs(a), abs(b), 1.0)


def check_trumpet_lemmas(g: MetricGraph, params: TrumpetParams, xs: Sequence[int],
                         C: Optional[float] = None, max_violations: int = 50) -> TrumpetLemmaReport:
    """Size bounds on trumpets, the adjacent-pair Lipschitz bound on level functions and
    the two-sided norm bound on level functions, over ``xs`` and every scale.

    ``C`` defaults to ``3 N(3 delta)`` with ``N(r)`` the largest ball of radius ``r``.
    """
    p, delta = params.p, params.delta
    nb = g.max_ball_size(int(math.floor(3 * delta)))
    C = 3 * nb if C is None else C
    names = ("size_upper", "size_lower", "lipschitz", "norm_lower", "norm_upper")
    checked = dict.fromkeys(names, 0)
    viol: Dict[str, List[tuple]] = {k: [] for k in names}
    worst = dict.fromkeys(names, 0.0)

    def record(name, ok, ratio, item):
        checked[name] += 1
        worst[name] = max(worst[name], ratio)
        if not ok and len(viol[name]) < max_violations:
            viol[name].append(item)

    xset = set(xs)
    levels: Dict[int, Dict[int, Dict[int, float]]] = {}
    for x in xs:
        table = ReachTable(g, x, params.max_k)
        lx = int(g.levels[x])
        per_scale = {}
        for n in params.scales:
            kmins = table.kmin(n, delta)
            for k in range(n // 4 + 1):
                size = sum(1 for m in kmins.values() if m <= k)
                record("size_upper", _leq(size, C * n), size / (C * n), (x, k, n, size))
                if lx >= 2 * n:
                    record("size_lower", _leq(n - 3 * delta, size),
                           (n - 3 * delta) / size if size else math.inf, (x, k, n, size))
            h = _level_entries(kmins, n)
            per_scale[n] = h
            hp = sum(v ** p for v in h.values())
            upper = (n / 4 + 1) * (C * n) ** (1 / p) / n
            record("norm_upper", _leq(hp ** (1 / p), upper), hp ** (1 / p) / upper, (x, n))
            if lx >= 2 * n:
                lower = (n - 3 * delta) / 4 ** p
                record("norm_lower", _leq(lower, hp), lower / hp if hp else math.inf, (x, n))
        levels[x] = per_scale
    for x in xs:
        for y in g.adjacency[x]:
            if y < x or y not in xset:
                continue
            for n in params.scales:
                hx, hy = levels[x][n], levels[y][n]
                diff = sum(abs(hx.get(v, 0.0) - hy.get(v, 0.0)) ** p for v in set(hx) | set(hy))
                bound = (2 * C * 2) ** (1 / p) * n ** (-(p - 1) / p)
                record("lipschitz", _leq(diff ** (1 / p), bound), diff ** (1 / p) / bound, (x, y, n))
    return TrumpetLemmaReport(C, nb, checked, viol, worst)


def support_overlap_scales(g: MetricGraph, x: int, y: int, params: TrumpetParams) -> List[int]:
    """Scales at which ``H(x, n)`` and ``H(y, n)`` share a support vertex."""
    tx, ty = ReachTable(g, x, params.max_k), ReachTable(g, y, params.max_k)
    out = []
    for n in params.scales:
        sx = _level_entries(tx.kmin(n, params.delta), n)
        sy = _level_entries(ty.kmin(n, params.delta), n)
        if set(sx) & set(sy):
            out.append(n)
    return out
