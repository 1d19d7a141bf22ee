"""Piece systems: indexed covers of a graph by subsets with anchors and piece embeddings.

Explicit pieces (coset neighbourhoods, file-defined sets) are stored as sorted
vertex arrays.  Balls of a fixed radius around every vertex can be added
implicitly: the ball around vertex ``c`` has piece index ``len(explicit) + c`` and
is materialised on demand, which keeps large Cayley balls affordable.

Each piece carries a map ``psi`` into its own coordinates (a dict ``key -> value``),
translated so the anchor maps to zero.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .graph import MetricGraph
from .groups import AbelianGroup, CyclicGroup, FreeGroup, FreeProduct, Group

BALL_MODES = ("all", "uncovered", "none")


@dataclass
class PieceMeta:
    kind: str                      # "coset", "ball" or "custom"
    label: str
    psi: str = "depth"             # "coset", "zero" or "depth"
    factor: Optional[int] = None
    core: Optional[np.ndarray] = field(default=None, repr=False)
    scale: float = 1.0
    radius: int = 0


class PieceSystem:
    """Cover ``{A_i}`` of the vertex set with anchors ``e_i`` (closest to the basepoint,
    smallest id on ties) and constant ``K``."""

    def __init__(self, g: MetricGraph, pieces: Sequence[Iterable[int]], meta: Optional[Sequence[PieceMeta]] = None,
                 K: int = 1, ball_radius: Optional[int] = None):
        if K < 1:
            raise ValueError("K >= 1 required")
        self.g = g
        self.K = int(K)
        self.explicit: List[np.ndarray] = [np.array(sorted(set(int(v) for v in p)), dtype=np.int64) for p in pieces]
        if any(len(p) == 0 for p in self.explicit):
            raise ValueError("pieces must be nonempty")
        self.meta: List[PieceMeta] = list(meta) if meta is not None else [
            PieceMeta("custom", f"P{i}") for i in range(len(self.explicit))]
        if len(self.meta) != len(self.explicit):
            raise ValueError("meta length mismatch")
        self.ball_radius = ball_radius
        self.n_explicit = len(self.explicit)
        member_of: List[List[int]] = [[] for _ in range(g.n)]
        for i, p in enumerate(self.explicit):
            for v in p:
                member_of[v].append(i)
        self._member_of = member_of
        lev = g.levels
        self._anchors: Dict[int, int] = {}
        for i, p in enumerate(self.explicit):
            self._anchors[i] = int(p[np.lexsort((p, lev[p]))[0]])
        self._ball_cache: Dict[int, np.ndarray] = {}
        self._sets: Dict[int, frozenset] = {}
        self._psi_base: Dict[int, Dict[str, float]] = {}

    # -- indexing ------------------------------------------------------------
    def __len__(self) -> int:
        return self.n_explicit + (self.g.n if self.ball_radius is not None else 0)

    def is_ball(self, i: int) -> bool:
        return i >= self.n_explicit

    def ball_center(self, i: int) -> int:
        return i - self.n_explicit

    def ball_index(self, center: int) -> int:
        return self.n_explicit + center

    def members(self, i: int) -> np.ndarray:
        if i < self.n_explicit:
            return self.explicit[i]
        arr = self._ball_cache.get(i)
        if arr is None:
            arr = np.array(sorted(self.g.ball(self.ball_center(i), self.ball_radius)), dtype=np.int64)
            if len(self._ball_cache) > 200000:
                self._ball_cache.clear()
            self._ball_cache[i] = arr
        return arr

    def member_set(self, i: int) -> frozenset:
        s = self._sets.get(i)
        if s is None:
            s = frozenset(int(v) for v in self.members(i))
            if len(self._sets) > 200000:
                self._sets.clear()
            self._sets[i] = s
        return s

    def contains(self, i: int, v: int) -> bool:
        if i < self.n_explicit:
            return i in self._member_of[v]
        return v in self.member_set(i)

    def pieces_containing(self, v: int) -> List[int]:
        out = list(self._member_of[v])
        if self.ball_radius is not None:
            out += [self.n_explicit + c for c in self.g.ball(v, self.ball_radius)]
        return sorted(out)

    def anchor(self, i: int) -> int:
        a = self._anchors.get(i)
        if a is None:
            p = self.members(i)
            lev = self.g.levels
            a = int(p[np.lexsort((p, lev[p]))[0]])
            self._anchors[i] = a
        return a

    def piece_meta(self, i: int) -> PieceMeta:
        if i < self.n_explicit:
            return self.meta[i]
        c = self.ball_center(i)
        return PieceMeta("ball", f"B({self.g.label(c)},{self.ball_radius})", psi="zero")

    def label(self, i: int) -> str:
        return self.piece_meta(i).label

    def distance_to(self, row: np.ndarray, i: int) -> int:
        """``d(x, A_i)`` given the distance row of ``x``."""
        return int(row[self.members(i)].min())

    def covered(self) -> np.ndarray:
        mask = np.zeros(self.g.n, dtype=bool)
        for p in self.explicit:
            mask[p] = True
        if self.ball_radius is not None:
            mask[:] = True
        return mask

    # -- piece embeddings ----------------------------------------------------
    def psi(self, i: int, v: int) -> Dict[str, float]:
        """Image of ``v`` under the embedding of piece ``i`` (anchor maps to 0)."""
        meta = self.piece_meta(i)
        if meta.psi == "zero":
            return {}
        if meta.psi == "depth":
            val = float(self.g.distance(self.anchor(i), v))
            return {"0": val} if val else {}
        base = self._psi_base.get(i)
        if base is None:
            base = self._coset_coords(i, self.anchor(i))
            self._psi_base[i] = base
        raw = self._coset_coords(i, v)
        out = {}
        for k in set(raw) | set(base):
            val = (raw.get(k, 0.0) - base.get(k, 0.0)) * meta.scale
            if val:
                out[k] = val
        return out

    def _project(self, i: int, v: int) -> int:
        meta = self.meta[i]
        core = meta.core
        if core is None or len(core) == len(self.explicit[i]):
            return v
        cs = set(int(c) for c in core)
        if v in cs:
            return v
        ball = self.g.ball(v, meta.radius)
        best = min((d, u) for u, d in ball.items() if u in cs)
        return best[1]

    def _coset_coords(self, i: int, v: int) -> Dict[str, float]:
        meta = self.meta[i]
        group = self.g.group
        u = self._project(i, v)
        h = group.factor_part(self.g.elements[u], meta.factor)
        return factor_coordinates(group.factors[meta.factor], h)


def factor_coordinates(factor: Group, h) -> Dict[str, float]:
    """Integer coordinates of a factor element for the built-in isometric maps."""
    if isinstance(factor, AbelianGroup):
        return {str(k): float(c) for k, c in enumerate(h) if c}
    if isinstance(factor, FreeGroup) and factor.rank == 1:
        s = float(sum(h))
        return {"0": s} if s else {}
    if isinstance(factor, CyclicGroup):
        return {"0": float(h)} if h else {}
    raise ValueError(f"no coordinate map for factor {factor}")


def _coset_psi_kind(factor: Group) -> Tuple[str, float]:
    if isinstance(factor, AbelianGroup):
        return "coset", 1.0 / factor.rank
    if isinstance(factor, FreeGroup) and factor.rank == 1:
        return "coset", 1.0
    return "depth", 1.0


def pieces_from_cosets(g: MetricGraph, peripherals: Optional[Sequence[int]] = None, radius: int = 0,
                       balls: str = "all", ball_radius: Optional[int] = None, K: int = 1) -> PieceSystem:
    """Radius-``radius`` neighbourhoods of cosets of the peripheral factors, plus balls.

    ``balls='all'`` adds a ball around every vertex (the trivial-subgroup cosets),
    ``'uncovered'`` only around vertices no coset piece covers, ``'none'`` adds none.
    Coset pieces clipped to a single vertex are dropped when that vertex is covered
    by another coset piece or by the ball pieces.
    """
    if balls not in BALL_MODES:
        raise ValueError(f"balls must be one of {BALL_MODES}")
    ball_radius = radius if ball_radius is None else ball_radius
    group = g.group
    if peripherals is None:
        peripherals = g.spec.peripheral_factors() if g.spec is not None else ()
    peripherals = tuple(peripherals)
    if peripherals and not isinstance(group, FreeProduct):
        raise ValueError("coset pieces need a free-product group")
    cores: Dict[Tuple[int, tuple], List[int]] = {}
    for v, el in enumerate(g.elements or []):
        for j in peripherals:
            cores.setdefault((j, group.coset_prefix(el, j)), []).append(v)
    big_cover = np.zeros(g.n, dtype=bool)
    for (j, _), core in cores.items():
        if len(core) > 1:
            big_cover[core] = True
    pieces, meta = [], []
    for (j, prefix), core in sorted(cores.items(), key=lambda kv: (min(kv[1]), kv[0][0])):
        if len(core) == 1 and (big_cover[core[0]] or balls == "all"):
            continue
        members = sorted(g.set_distance(core, limit=radius)) if radius > 0 else core
        kind, scale = _coset_psi_kind(group.factors[j])
        lab = group.label(prefix) + "<" + "".join(
            "abcdefghijklmnopqrstuvwxyz"[group.letter_offset(j) + t] for t in range(group.factors[j].n_letters)) + ">"
        if radius:
            lab = f"N{radius}({lab})"
        meta.append(PieceMeta("coset", lab, kind, j, np.array(sorted(core)), scale, radius))
        pieces.append(members)
    implicit = None
    if balls == "all":
        implicit = ball_radius
    elif balls == "uncovered":
        covered = np.zeros(g.n, dtype=bool)
        for p in pieces:
            covered[p] = True
        for v in np.nonzero(~covered)[0]:
            v = int(v)
            pieces.append(sorted(g.ball(v, ball_radius)))
            meta.append(PieceMeta("ball", f"B({g.label(v)},{ball_radius})", "zero"))
    return PieceSystem(g, pieces, meta, K=K, ball_radius=implicit)


def load_pieces(g: MetricGraph, path, K: int = 1, ball_radius: Optional[int] = None,
                psi: str = "depth") -> PieceSystem:
    """Pieces file: one line per piece, ``label: v1 v2 ...`` (``#`` starts a comment)."""
    pieces, meta = [], []
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        lab, sep, rest = line.partition(":")
        if not sep:
            raise ValueError(f"{path}:{lineno}: expected 'label: v1 v2 ...'")
        try:
            verts = [g.vertex(int(t)) for t in rest.split()]
        except (ValueError, KeyError) as exc:
            raise ValueError(f"{path}:{lineno}: {exc}") from None
        if not verts:
            raise ValueError(f"{path}:{lineno}: empty piece")
        pieces.append(verts)
        meta.append(PieceMeta("custom", lab.strip(), psi))
    return PieceSystem(g, pieces, meta, K=K, ball_radius=ball_radius)


def single_piece(g: MetricGraph, K: int = 1, psi: str = "depth") -> PieceSystem:
    return PieceSystem(g, [range(g.n)], [PieceMeta("custom", "V", psi)], K=K)
