"""Sparse l^p vectors and the compression-function class used by every embedding.

A compression function ``f`` must be concave in the discrete sense
``f(n+m) - f(n) <= f(n) - f(n-m)``, satisfy the summability condition
``sum_n (1/n) (f(n)/n)^p < inf`` and, for the stronger class, have ``f(n)^p / n``
eventually nondecreasing.
"""
from __future__ import annotations

import math
import warnings
from functools import lru_cache
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, NamedTuple, Optional, Sequence, Tuple

import numpy as np

REL_TOL = 1e-9
LEMMA_SUM_N = 10 ** 6


class CoordLabel(NamedTuple):
    namespace: str
    key: str


def label(namespace, key) -> CoordLabel:
    return CoordLabel(str(namespace), str(key))


class LpVector:
    """Finitely supported vector in a direct sum of l^p spaces.

    Entries are keyed by :class:`CoordLabel`; zero entries are never stored.
    """

    __slots__ = ("entries", "p")

    def __init__(self, entries: Optional[Dict[CoordLabel, float]] = None, p: float = 2.0):
        if p <= 1:
            raise ValueError("p > 1 required")
        self.p = float(p)
        self.entries: Dict[CoordLabel, float] = {}
        if entries:
            for k, v in entries.items():
                if v != 0:
                    self.entries[k] = float(v)

    @classmethod
    def indicator(cls, namespace, keys: Iterable, p: float, value: float = 1.0) -> "LpVector":
        return cls({label(namespace, k): value for k in keys}, p)

    def __len__(self):
        return len(self.entries)

    def __iter__(self):
        return iter(self.entries.items())

    def __getitem__(self, key) -> float:
        if not isinstance(key, CoordLabel):
            key = label(*key)
        return self.entries.get(key, 0.0)

    def __eq__(self, other):
        return isinstance(other, LpVector) and self.p == other.p and self.entries == other.entries

    def __repr__(self):
        return f"LpVector(p={self.p}, nnz={len(self.entries)})"

    def _check(self, other: "LpVector"):
        if self.p != other.p:
            raise ValueError(f"mismatched exponents {self.p} and {other.p}")

    def __add__(self, other: "LpVector") -> "LpVector":
        return vec_add(self, other)

    def __sub__(self, other: "LpVector") -> "LpVector":
        return vec_sub(self, other)

    def __mul__(self, c: float) -> "LpVector":
        return vec_scale(self, c)

    __rmul__ = __mul__

    def namespaces(self) -> List[str]:
        return sorted({k.namespace for k in self.entries})

    def restrict(self, namespace_prefix: str) -> "LpVector":
        return LpVector({k: v for k, v in self.entries.items()
                         if k.namespace.startswith(namespace_prefix)}, self.p)

    def values(self) -> np.ndarray:
        return np.fromiter(self.entries.values(), dtype=float, count=len(self.entries))

    def norm_p(self) -> float:
        """Sum of |entry|^p."""
        if not self.entries:
            return 0.0
        return float(np.sum(np.abs(self.values()) ** self.p))


def p_norm(v: LpVector) -> float:
    return v.norm_p() ** (1.0 / v.p)


def vec_add(v: LpVector, w: LpVector) -> LpVector:
    v._check(w)
    out = dict(v.entries)
    for k, x in w.entries.items():
        y = out.get(k, 0.0) + x
        if y == 0:
            out.pop(k, None)
        else:
            out[k] = y
    res = LpVector(p=v.p)
    res.entries = out
    return res


def vec_sub(v: LpVector, w: LpVector) -> LpVector:
    return vec_add(v, vec_scale(w, -1.0))


def vec_scale(v: LpVector, c: float) -> LpVector:
    if c == 0:
        return LpVector(p=v.p)
    res = LpVector(p=v.p)
    res.entries = {k: x * c for k, x in v.entries.items()}
    return res


def vec_sum(vectors: Iterable[LpVector], p: float) -> LpVector:
    out = LpVector(p=p)
    for v in vectors:
        out = vec_add(out, v)
    return out


def distance(v: LpVector, w: LpVector) -> float:
    """``||v - w||_p`` without building the difference vector."""
    v._check(w)
    acc = 0.0
    p = v.p
    for k, x in v.entries.items():
        acc += abs(x - w.entries.get(k, 0.0)) ** p
    for k, y in w.entries.items():
        if k not in v.entries:
            acc += abs(y) ** p
    return acc ** (1.0 / p)


# ---------------------------------------------------------------------------
# compression functions


@dataclass(frozen=True)
class CompressionFunction:
    """``power:a`` is ``n^a``; ``paperlog:eps`` is
    ``n / (log2(n+2) * log2(log2(n+2))^(1+eps))^(1/p)``; ``table`` is explicit values
    ``f(0), f(1), ...``.  ``f(0)`` is always 0."""

    family: str
    param: float = 0.5
    p: float = 2.0
    table: Tuple[float, ...] = field(default=(), repr=False)

    def __post_init__(self):
        if self.family not in ("power", "paperlog", "table"):
            raise ValueError(f"unknown compression family {self.family!r}")
        if self.p <= 1:
            raise ValueError("p > 1 required")
        if self.family == "power" and not 0 <= self.param <= 1:
            raise ValueError("power exponent must lie in [0, 1]")
        if self.family == "paperlog" and self.param <= 0:
            raise ValueError("paperlog epsilon must be > 0")
        if self.family == "table" and len(self.table) < 2:
            raise ValueError("table needs at least f(0) and f(1)")

    @classmethod
    def parse(cls, text: str, p: float) -> "CompressionFunction":
        kind, _, arg = text.partition(":")
        kind = kind.strip().lower()
        if kind == "power":
            return cls("power", float(arg), p)
        if kind in ("paperlog", "paper_log"):
            return cls("paperlog", float(arg or 1.0), p)
        if kind == "table":
            vals = [float(t) for t in Path(arg).read_text().split()]
            return cls("table", 0.0, p, tuple(vals))
        raise ValueError(f"unknown compression function {text!r}")

    def with_p(self, p: float) -> "CompressionFunction":
        return CompressionFunction(self.family, self.param, p, self.table)

    def describe(self) -> str:
        if self.family == "table":
            return f"table[{len(self.table)}]"
        return f"{self.family}:{self.param:g}"

    def __call__(self, n) -> float:
        return float(self.values(np.asarray([n], dtype=float))[0])

    def values(self, n: np.ndarray) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        if self.family == "power":
            out = np.power(n, self.param)
        elif self.family == "paperlog":
            with np.errstate(divide="ignore", invalid="ignore"):
                l2 = np.log2(n + 2)
                denom = l2 * np.log2(l2) ** (1 + self.param)
                out = n / denom ** (1 / self.p)
        else:
            idx = n.astype(int)
            if np.any(idx >= len(self.table)):
                raise ValueError("table compression function evaluated beyond its range")
            out = np.asarray(self.table, dtype=float)[idx]
        return np.where(n <= 0, 0.0, out)

    @property
    def has_certificate(self) -> bool:
        return self.family in ("power", "paperlog")


@dataclass
class FunctionClassReport:
    concave: bool
    Cp: bool
    Ccp: bool
    n0: Optional[int]
    numeric_only: bool
    partial_sum: float
    certificate: str
    first_concavity_violation: Optional[int] = None


def check_function_class(f: CompressionFunction, p: Optional[float] = None, N: int = 10 ** 4) -> FunctionClassReport:
    """Classify ``f`` on ``1..N``.

    Concavity is checked on first differences (equivalent to the two-sided condition
    for all ``m <= n``).  Summability uses an analytic certificate for built-in
    families; tables are flagged numeric-only.  ``n0`` is the smallest start of the
    nondecreasing tail of ``f(n)^p / n`` on the checked range.
    """
    if N < 4:
        raise ValueError("N >= 4 required")
    p = f.p if p is None else p
    if p <= 1:
        raise ValueError("p > 1 required")
    f = f.with_p(p)
    n = np.arange(0, N + 1, dtype=float)
    vals = f.values(n)
    diffs = np.diff(vals)
    tol = REL_TOL * np.maximum(1.0, np.abs(diffs[:-1]))
    bad = np.nonzero(diffs[1:] > diffs[:-1] + tol)[0]
    concave = bad.size == 0 and bool(np.all(diffs >= -REL_TOL))
    first_bad = int(bad[0]) + 1 if bad.size else None

    ns = n[1:]
    terms = (vals[1:] / ns) ** p / ns
    partial = float(np.sum(terms))
    numeric_only = not f.has_certificate
    if f.family == "power":
        cp = f.param < 1
        cert = f"sum n^(-1-{(1 - f.param) * p:g}) {'converges' if cp else 'diverges'}"
    elif f.family == "paperlog":
        cp = True
        cert = "terms ~ 1/(n log n (log log n)^(1+eps)) converge"
    else:
        tail = terms[len(terms) // 2:]
        cp = bool(tail.sum() <= REL_TOL * max(partial, 1.0) * len(tail) + 1e-3 * partial)
        cert = "numeric-only"
        warnings.warn("table compression function: summability checked numerically only")

    ratio = vals[1:] ** p / ns
    dec = np.nonzero(ratio[1:] < ratio[:-1] * (1 - REL_TOL))[0]
    n0 = int(dec[-1]) + 2 if dec.size else 1
    if n0 >= N:
        n0 = None
    if f.family == "power":
        # f^p/n = n^(ap-1): nondecreasing iff ap >= 1, analytically
        n0 = 1 if f.param * p >= 1 - REL_TOL else None
    ccp = bool(cp and n0 is not None)
    return FunctionClassReport(concave, bool(cp), ccp, n0, numeric_only, partial, cert, first_bad)


def summability_constant(f: CompressionFunction, p: Optional[float] = None, N: int = LEMMA_SUM_N) -> float:
    """``C = sum_{n<=N} (1/n) (f(n)/n)^p`` (memoised; functions are immutable)."""
    p = f.p if p is None else p
    return _summability_constant(f.with_p(p), int(N))


@lru_cache(maxsize=64)
def _summability_constant(f: CompressionFunction, N: int) -> float:
    n = np.arange(1, N + 1, dtype=float)
    return float(np.sum((f.values(n) / n) ** f.p / n))


@dataclass
class SumLemmaReport:
    lower_lhs: float
    lower_rhs: float
    lower_applicable: bool
    lower_pass: Optional[bool]
    upper_lhs: float
    upper_bound: float
    upper_pass: bool
    doubling_applicable: bool
    doubling_lhs: Optional[float]
    doubling_bound: float
    doubling_pass: Optional[bool]

    @property
    def passed(self) -> bool:
        return all(v is not False for v in (self.lower_pass, self.upper_pass, self.doubling_pass))

    @property
    def lower_slack(self) -> float:
        return self.lower_lhs - self.lower_rhs

    @property
    def upper_slack(self) -> float:
        return self.upper_bound - self.upper_lhs


def _leq(a: float, b: float) -> bool:
    return a <= b + REL_TOL * max(abs(a), abs(b), 1e-300)


def verify_sum_lemmas(M: Sequence[int], f: CompressionFunction, p: Optional[float] = None,
                      C: Optional[float] = None,
                      lower_applicable: Optional[bool] = None) -> SumLemmaReport:
    """Evaluate both sides of the two summation inequalities on ``M = m_1 < ... < m_2k``.

    Lower: ``sum f(m_2i)^p/m_2i (m_2i - m_2i-1) >= 2^-(3+p) f(sum gaps)^p``.
    Upper: ``sum (f(m_2i)/m_2i)^p gap/m_2i <= C`` and, when every ``m_2i <= 2 m_2i-1``,
    ``sum (f(m_2i-1)/m_2i-1)^p gap/m_2i-1 <= 2^(p+1) C``.
    """
    p = f.p if p is None else p
    f = f.with_p(p)
    m = np.asarray(M, dtype=np.int64)
    if m.size % 2:
        raise ValueError("M must have even size")
    if m.size == 0:
        raise ValueError("M must be nonempty")
    if m[0] < 1 or np.any(np.diff(m) <= 0):
        raise ValueError("M must be strictly increasing positive integers")
    lo, hi = m[0::2].astype(float), m[1::2].astype(float)
    gaps = hi - lo
    f_hi, f_lo = f.values(hi), f.values(lo)
    if C is None:
        C = summability_constant(f, p)
    if lower_applicable is None:
        lower_applicable = check_function_class(f, p, N=max(4, int(m[-1]))).Ccp

    lower_lhs = float(np.sum(f_hi ** p / hi * gaps))
    lower_rhs = 0.5 ** (3 + p) * f(float(gaps.sum())) ** p
    lower_pass = _leq(lower_rhs, lower_lhs) if lower_applicable else None

    upper_lhs = float(np.sum((f_hi / hi) ** p * gaps / hi))
    upper_pass = _leq(upper_lhs, C)

    doubling = bool(np.all(hi <= 2 * lo))
    dbl_bound = 2 ** (p + 1) * C
    dbl_lhs = float(np.sum((f_lo / lo) ** p * gaps / lo)) if doubling else None
    dbl_pass = _leq(dbl_lhs, dbl_bound) if doubling else None
    return SumLemmaReport(lower_lhs, lower_rhs, bool(lower_applicable), lower_pass,
                          upper_lhs, float(C), upper_pass, doubling, dbl_lhs, dbl_bound, dbl_pass)
