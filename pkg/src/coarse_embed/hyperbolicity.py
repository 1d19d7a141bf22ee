"""Hyperbolicity constants, Gromov products and the geodesic-stability check.

Half-integer quantities are carried as doubled ints (suffix ``2``) internally and
exposed as floats, which represent halves exactly.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .graph import MetricGraph, geodesic_dag, geodesic_path

EXHAUSTIVE_LIMIT = 200


def gromov_product(g: MetricGraph, x: int, y: int, base: int) -> float:
    """``(x.y)_base = (d(x,base) + d(y,base) - d(x,y)) / 2``."""
    return gromov_product2(g, x, y, base) / 2


def gromov_product2(g: MetricGraph, x: int, y: int, base: int) -> int:
    row = g.distances_from(base)
    return int(row[x]) + int(row[y]) - g.distance(x, y)


@dataclass
class HyperbolicityReport:
    delta_four_point: Optional[float]
    delta_rips_estimate: Optional[float]
    method_params: Dict[str, object]
    witnesses: Dict[str, Tuple[int, ...]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "delta_four_point": self.delta_four_point,
            "delta_rips_estimate": self.delta_rips_estimate,
            "method_params": self.method_params,
            "witnesses": {k: list(v) for k, v in self.witnesses.items()},
        }


def four_point_defect2(D: np.ndarray, x: int, y: int, z: int, w: int) -> int:
    """Doubled four-point defect: largest pair sum minus the middle one."""
    s = sorted((D[x, y] + D[z, w], D[x, z] + D[y, w], D[x, w] + D[y, z]))
    return int(s[2] - s[1])


def _four_point_exhaustive(D: np.ndarray) -> Tuple[int, Tuple[int, int, int, int]]:
    """Exact max of the doubled defect.

    A quadruple is found when its largest-sum pair ``(x, y)`` is scanned; since the
    doubled defect never exceeds ``d(x, y)``, pairs are visited by decreasing
    distance and the scan stops once ``d(x, y)`` cannot beat the incumbent.
    """
    n = D.shape[0]
    iu, ju = np.triu_indices(n, k=1)
    order = np.argsort(-D[iu, ju], kind="stable")
    best, wit = 0, (0, 0, 0, 0)
    for idx in order:
        x, y = int(iu[idx]), int(ju[idx])
        dxy = int(D[x, y])
        if dxy <= best:
            break
        s1 = dxy + D
        s2 = D[x][:, None] + D[y][None, :]
        s3 = s2.T
        mid = np.maximum(s2, s3)
        defect = np.where(s1 >= mid, s1 - mid, 0)
        k = int(np.argmax(defect))
        if defect.flat[k] > best:
            best = int(defect.flat[k])
            wit = (x, y, k // n, k % n)
    return best, wit


def four_point_delta(g: MetricGraph, exhaustive: bool = True, samples: int = 20000,
                     seed: int = 0) -> HyperbolicityReport:
    """Four-point constant.

    Trees are certified 0 directly.  Exhaustive mode is exact (intended for
    ``|V| <= 200``); otherwise quadruples are sampled, which gives a lower bound.
    """
    if g.is_tree():
        return HyperbolicityReport(0.0, None, {"method": "tree-certificate"},
                                   {"four_point": (g.basepoint,) * 4})
    if exhaustive:
        D = g.distance_matrix()
        best, wit = _four_point_exhaustive(D)
        return HyperbolicityReport(best / 2, None, {"method": "exhaustive", "n": g.n},
                                   {"four_point": wit})
    rng = np.random.default_rng(seed)
    best, wit = 0, (g.basepoint,) * 4
    quads = rng.integers(0, g.n, size=(samples, 4))
    rows: Dict[int, np.ndarray] = {}
    for x, y, z, w in quads:
        for v in (x, y, z):
            if v not in rows:
                rows[v] = g.distances_from(int(v))
        s = sorted((rows[x][y] + rows[z][w], rows[x][z] + rows[y][w], rows[x][w] + rows[y][z]))
        d2 = int(s[2] - s[1])
        if d2 > best:
            best, wit = d2, (int(x), int(y), int(z), int(w))
    return HyperbolicityReport(best / 2, None, {"method": "sampled", "samples": samples, "seed": seed},
                               {"four_point": wit})


# ---------------------------------------------------------------------------
# Rips constant


def _farthest_geodesic_table(g: MetricGraph, D: np.ndarray) -> np.ndarray:
    """``F[c, b, p]`` = max over geodesics from ``b`` to ``c`` of the distance from ``p`` to it."""
    n = g.n
    F = np.empty((n, n, n), dtype=np.int16)
    for c in range(n):
        order = np.argsort(D[c], kind="stable")
        Fc = F[c]
        for v in order:
            v = int(v)
            if v == c:
                Fc[v] = D[v]
                continue
            best = None
            for u in g.adjacency[v]:
                if D[c, u] == D[c, v] - 1:
                    best = Fc[u] if best is None else np.maximum(best, Fc[u])
            Fc[v] = np.minimum(D[v], best)
    return F


def rips_delta_exhaustive(g: MetricGraph) -> Tuple[float, Tuple[int, int, int, int]]:
    """Exact vertex-Rips constant over all geodesic triangles (any choice of sides).

    Returns ``(delta, (a, b, c, p))`` where ``p`` lies on a geodesic ``a-b`` and is
    ``delta`` away from the worst choice of the other two sides.
    """
    if g.is_tree():
        return 0.0, (g.basepoint,) * 4
    D = g.distance_matrix()
    F = _farthest_geodesic_table(g, D)
    n = g.n
    best, wit = 0, (0, 0, 0, 0)
    for a in range(n):
        for b in range(a + 1, n):
            interval = np.nonzero(D[a] + D[b] == D[a, b])[0]
            # F[c, b, p] for p in the interval, all c
            vals = np.minimum(F[:, b, interval], F[:, a, interval])
            k = int(np.argmax(vals))
            if vals.flat[k] > best:
                best = int(vals.flat[k])
                c, pi = divmod(k, len(interval))
                wit = (a, b, c, int(interval[pi]))
    return float(best), wit


def _side_distance(g: MetricGraph, side: Sequence[int], others: Sequence[int]) -> Tuple[int, int]:
    dist = g.set_distance(others, limit=len(side) + len(others))
    worst, where = 0, side[0]
    for p in side:
        d = dist.get(p, len(side) + len(others))
        if d > worst:
            worst, where = d, p
    return worst, where


def rips_delta_estimate(g: MetricGraph, samples: int = 200, seed: int = 0,
                        exhaustive: Optional[bool] = None) -> HyperbolicityReport:
    """Lower bound on the Rips constant from sampled geodesic triangles.

    Sides are canonical geodesics; the sample stream is prefix-stable, so the estimate
    is nondecreasing in ``samples``.  Small graphs (or ``exhaustive=True``) get the
    exact value instead.
    """
    if samples < 1:
        raise ValueError("samples >= 1 required")
    if exhaustive is None:
        exhaustive = g.n <= EXHAUSTIVE_LIMIT
    if exhaustive or g.n == 1:
        delta, wit = rips_delta_exhaustive(g)
        return HyperbolicityReport(None, delta, {"method": "rips-exhaustive", "n": g.n}, {"rips": wit})
    rng = np.random.default_rng(seed)
    best, wit = 0, (g.basepoint,) * 4
    for _ in range(samples):
        a, b, c = (int(t) for t in rng.integers(0, g.n, size=3))
        ab, bc, ca = geodesic_path(g, a, b), geodesic_path(g, b, c), geodesic_path(g, c, a)
        for side, o1, o2, tri in ((ab, bc, ca, (a, b, c)), (bc, ca, ab, (b, c, a)), (ca, ab, bc, (c, a, b))):
            d, p = _side_distance(g, side, list(o1) + list(o2))
            if d > best:
                best, wit = d, tri + (p,)
    return HyperbolicityReport(None, float(best), {"method": "rips-sampled", "samples": samples, "seed": seed},
                               {"rips": wit})


def hyperbolicity(g: MetricGraph, samples: int = 200, seed: int = 0) -> HyperbolicityReport:
    """Both constants, using exact methods where affordable."""
    small = g.n <= EXHAUSTIVE_LIMIT
    fp = four_point_delta(g, exhaustive=small, seed=seed)
    rips = rips_delta_estimate(g, samples=samples, seed=seed, exhaustive=small)
    params = {"four_point": fp.method_params, "rips": rips.method_params}
    return HyperbolicityReport(fp.delta_four_point, rips.delta_rips_estimate, params,
                               {**fp.witnesses, **rips.witnesses})


def working_delta(g: MetricGraph, override: Optional[float] = None, samples: int = 200, seed: int = 0) -> float:
    """The constant used downstream: exact Rips for small graphs, else the max of the
    sampled Rips estimate and the four-point value."""
    if override is not None:
        return float(override)
    if g.is_tree():
        return 0.0
    rep = hyperbolicity(g, samples=samples, seed=seed)
    if g.n <= EXHAUSTIVE_LIMIT:
        return rep.delta_rips_estimate
    return max(rep.delta_rips_estimate, rep.delta_four_point)


# ---------------------------------------------------------------------------
# geodesic stability


@dataclass
class StabilityReport:
    delta: float
    scales: List[int]
    triples_checked: int = 0
    points_checked: int = 0
    violations: List[Tuple[int, int, int, int]] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.violations


def _window_escape(g: MetricGraph, x: int, lo: int, hi: int, blocked: set) -> bool:
    """True if some geodesic from ``x`` to the basepoint avoids ``blocked`` at every
    vertex whose distance from ``x`` lies in ``[lo, hi]``."""
    lx = int(g.levels[x])
    hi = min(hi, lx)
    if lo > hi:
        return True
    frontier = {x}
    for t in range(0, hi + 1):
        if t >= lo:
            frontier = {v for v in frontier if v not in blocked}
            if not frontier:
                return False
        if t == hi:
            return True
        frontier = {u for v in frontier for u in g.down[v]}
    return True


def check_geodesic_stability(g: MetricGraph, delta: float, n: int, trials: Optional[int] = None,
                             seed: int = 0, xs: Optional[Sequence[int]] = None,
                             report: Optional[StabilityReport] = None) -> StabilityReport:
    """Check that points at parameter ``[n, 2n]`` of any geodesic from ``y`` stay within
    ``3 delta`` of every geodesic from ``x`` restricted to ``[n/2, 5n/2]``.

    Pairs range over ``d(x,e) >= n`` and ``d(x,y) <= n/4``; exhaustive unless
    ``trials`` caps the number of sampled ``x``.  Geodesic parameters are measured
    from the start point.
    """
    delta2 = int(round(2 * delta))
    if n < 1 or 2 * n < 3 * delta2:
        raise ValueError(f"need n >= max(1, 3*delta); got n={n}, delta={delta}")
    rep = report or StabilityReport(delta, [])
    rep.scales.append(n)
    radius3 = (3 * delta2) // 2
    cand = [int(v) for v in np.nonzero(g.levels >= n)[0]] if xs is None else [v for v in xs if g.levels[v] >= n]
    if trials is not None and trials < len(cand):
        rng = np.random.default_rng(seed)
        cand = sorted(int(v) for v in rng.choice(cand, size=trials, replace=False))
    lo, hi = math.ceil(n / 2), math.floor(5 * n / 2)
    near_cache: Dict[int, set] = {}
    for x in cand:
        verdict: Dict[int, bool] = {}
        for y in g.ball(x, n // 4):
            rep.triples_checked += 1
            ly = int(g.levels[y])
            dag = geodesic_dag(g, y)
            for p, lp in dag.level.items():
                if not n <= ly - lp <= 2 * n:
                    continue
                ok = verdict.get(p)
                if ok is None:
                    near = near_cache.get(p)
                    if near is None:
                        near = set(g.ball(p, radius3))
                        if len(near_cache) < 100000:
                            near_cache[p] = near
                    ok = not _window_escape(g, x, lo, hi, near)
                    verdict[p] = ok
                rep.points_checked += 1
                if not ok:
                    rep.violations.append((x, y, n, p))
    return rep


def check_stability_suite(g: MetricGraph, delta: float, max_n: int, trials: Optional[int] = None,
                          seed: int = 0) -> StabilityReport:
    rep = StabilityReport(delta, [])
    start = max(1, math.ceil(3 * delta))
    for n in range(start, max_n + 1):
        check_geodesic_stability(g, delta, n, trials=trials, seed=seed, report=rep)
    return rep
