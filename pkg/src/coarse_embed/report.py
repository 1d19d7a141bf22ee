"""Distortion curves, compression-exponent estimates and lower-bound fits."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.sparse import csr_matrix

from .graph import MetricGraph
from .lp import LpVector, distance


@dataclass
class DistortionCurve:
    """Per graph distance ``r``: smallest and largest embedded distance over pairs
    at distance ``r``, and the number of such pairs."""

    r: np.ndarray
    rho_minus: np.ndarray
    rho_plus: np.ndarray
    pairs: np.ndarray
    p: float

    @property
    def lipschitz(self) -> float:
        """``max rho_plus(r) / r``."""
        if len(self.r) == 0:
            return 0.0
        return float(np.max(self.rho_plus / self.r))

    def rows(self) -> List[Tuple[int, float, float, int]]:
        return [(int(a), float(b), float(c), int(d)) for a, b, c, d in
                zip(self.r, self.rho_minus, self.rho_plus, self.pairs)]

    def min_ratio(self, rho: Callable[[int], float]) -> float:
        """``min_r rho_minus(r) / rho(r)``, i.e. the smallest embedded-to-model ratio
        over all pairs."""
        vals = [m / rho(int(r)) for r, m in zip(self.r, self.rho_minus) if rho(int(r)) > 0]
        return float(min(vals)) if vals else float("nan")

    def to_dict(self) -> dict:
        return {"p": self.p, "r": [int(v) for v in self.r], "rho_minus": [float(v) for v in self.rho_minus],
                "rho_plus": [float(v) for v in self.rho_plus], "pairs": [int(v) for v in self.pairs]}


def coordinate_matrix(vectors: Sequence[LpVector]) -> Tuple[csr_matrix, list]:
    """Stack sparse vectors into a CSR matrix over the union of their coordinates."""
    index: Dict = {}
    rows, cols, vals = [], [], []
    for a, v in enumerate(vectors):
        for key, val in v:
            c = index.setdefault(key, len(index))
            rows.append(a)
            cols.append(c)
            vals.append(val)
    mat = csr_matrix((np.asarray(vals, dtype=float), (rows, cols)), shape=(len(vectors), max(len(index), 1)))
    return mat, list(index)


def pairwise_row(mat: csr_matrix, norms_p: np.ndarray, a: int, p: float, start: int) -> np.ndarray:
    """``||v_a - v_b||_p`` for ``b >= start``, touching only the columns ``v_a`` uses.

    ``sum_c |x_c - y_c|^p`` splits into the columns in the support of ``x`` and the
    remaining mass of ``y``, which is its full p-th power norm minus the part on
    those columns.
    """
    lo, hi = mat.indptr[a], mat.indptr[a + 1]
    cols = mat.indices[lo:hi]
    xv = mat.data[lo:hi]
    tail = norms_p[start:]
    if len(cols) == 0:
        return np.maximum(tail, 0.0) ** (1 / p)
    block = mat[start:, :][:, cols].toarray()
    inside = np.abs(block - xv) ** p
    rest = tail - (np.abs(block) ** p).sum(axis=1)
    total = inside.sum(axis=1) + np.maximum(rest, 0.0)
    return total ** (1 / p)


def measure_distortion(g: MetricGraph, xs: Sequence[int], vectors: Sequence[LpVector],
                       p: Optional[float] = None) -> DistortionCurve:
    """Exhaustive pair scan over ``xs`` with exact graph distances."""
    if len(xs) == 0:
        raise ValueError("empty vertex set")
    if len(xs) != len(vectors):
        raise ValueError("one vector per vertex required")
    p = vectors[0].p if p is None else p
    xs = list(xs)
    idx = np.asarray(xs, dtype=np.int64)
    mat, _ = coordinate_matrix(vectors)
    norms_p = np.asarray(abs(mat).power(p).sum(axis=1)).ravel()
    rmin = np.full(0, np.inf)
    rmax = np.zeros(0)
    cnt = np.zeros(0, dtype=np.int64)
    for a in range(len(xs) - 1):
        dist = g.distances_from(xs[a])[idx[a + 1:]].astype(np.int64)
        emb = pairwise_row(mat, norms_p, a, p, a + 1)
        need = int(dist.max()) + 1
        if need > len(cnt):
            rmin = np.concatenate([rmin, np.full(need - len(rmin), np.inf)])
            rmax = np.concatenate([rmax, np.zeros(need - len(rmax))])
            cnt = np.concatenate([cnt, np.zeros(need - len(cnt), dtype=np.int64)])
        np.minimum.at(rmin, dist, emb)
        np.maximum.at(rmax, dist, emb)
        np.add.at(cnt, dist, 1)
    keep = np.nonzero(cnt > 0)[0]
    keep = keep[keep > 0]
    return DistortionCurve(keep.astype(np.int64), rmin[keep], rmax[keep], cnt[keep], float(p))


def estimate_compression(curve: DistortionCurve) -> float:
    """Least-squares slope of ``log rho_minus`` against ``log r`` over the upper half
    of the realised distances, clamped to ``[0, 1]``."""
    if len(curve.r) < 5:
        raise ValueError(f"need at least 5 distinct distances, got {len(curve.r)}")
    half = len(curve.r) // 2
    r = curve.r[half:].astype(float)
    m = curve.rho_minus[half:]
    if np.any(m <= 0):
        return 0.0
    slope = np.polyfit(np.log(r), np.log(m), 1)[0]
    return float(min(1.0, max(0.0, slope)))


@dataclass
class LowerFit:
    c: float
    c_prime: float
    alpha: float

    def __call__(self, r) -> np.ndarray:
        return self.c * np.asarray(r, dtype=float) ** self.alpha - self.c_prime


def lower_fit(curve: DistortionCurve, alpha: Optional[float] = None) -> LowerFit:
    """``c r^alpha - c'`` lying under ``rho_minus`` at every realised distance.

    ``alpha`` defaults to :func:`estimate_compression`; ``c`` comes from the
    log-log intercept on the upper half, and ``c'`` is the smallest shift that
    keeps the curve below ``rho_minus``.
    """
    alpha = estimate_compression(curve) if alpha is None else alpha
    half = len(curve.r) // 2
    r = curve.r[half:].astype(float)
    m = curve.rho_minus[half:]
    pos = m > 0
    if pos.any():
        c = float(np.exp(np.mean(np.log(m[pos]) - alpha * np.log(r[pos]))))
    else:
        c = 0.0
    gap = c * curve.r.astype(float) ** alpha - curve.rho_minus
    return LowerFit(c, float(max(0.0, gap.max())), float(alpha))


@dataclass
class EmbeddingReport:
    fixture: str
    curve: DistortionCurve
    lipschitz: float
    compression: Optional[float]
    fit: Optional[LowerFit]
    lemma_results: Dict[str, bool] = field(default_factory=dict)
    runtime: Dict[str, float] = field(default_factory=dict)
    short_range: Optional[int] = None     # distances below this are outside the lower-bound regime

    def to_dict(self, timing: bool = False) -> dict:
        out = {"fixture": self.fixture, "curve": self.curve.to_dict(), "lipschitz": self.lipschitz,
               "compression_estimate": self.compression,
               "lower_fit": None if self.fit is None else
               {"c": self.fit.c, "c_prime": self.fit.c_prime, "alpha": self.fit.alpha},
               "lemma_results": dict(sorted(self.lemma_results.items()))}
        if self.short_range is not None:
            below = self.curve.r < self.short_range
            out["short_range"] = {"threshold": self.short_range, "rows_below": int(below.sum()),
                                  "pairs_below": int(self.curve.pairs[below].sum())}
        if timing:
            out["runtime"] = self.runtime
        return out


def build_report(fixture: str, g: MetricGraph, xs: Sequence[int], vectors: Sequence[LpVector],
                 lemma_results: Optional[Dict[str, bool]] = None,
                 short_range: Optional[int] = None) -> EmbeddingReport:
    """``short_range`` marks distances that the lower bound does not cover; they stay
    in the curve and are counted separately in the document."""
    curve = measure_distortion(g, xs, vectors)
    alpha = fit = None
    if len(curve.r) >= 5:
        alpha = estimate_compression(curve)
        fit = lower_fit(curve, alpha)
    return EmbeddingReport(fixture, curve, curve.lipschitz, alpha, fit, dict(lemma_results or {}),
                           short_range=short_range)


def adjacent_lipschitz(g: MetricGraph, xs: Sequence[int], vectors: Sequence[LpVector]) -> float:
    """Largest ``||phi(x) - phi(y)||_p`` over edges with both ends in ``xs``."""
    pos = {x: a for a, x in enumerate(xs)}
    best = 0.0
    for x, a in pos.items():
        for y in g.adjacency[x]:
            b = pos.get(y)
            if b is not None and b > a:
                best = max(best, distance(vectors[a], vectors[b]))
    return best
