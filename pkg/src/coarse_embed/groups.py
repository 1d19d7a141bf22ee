"""Model groups with canonical normal forms, used to build Cayley-graph balls.

Every group exposes the same small surface: ``identity``, a symmetric list of
``generators``, right multiplication by a generator (``mul_gen``) and a
rendering of an element as letter syllables.  Elements are hashable tuples or
ints so they can key dictionaries directly.
"""
from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Any, Hashable, List, Sequence, Tuple

LETTERS = "abcdefghijklmnopqrstuvwxyz"


def render_word(syllables: Sequence[Tuple[int, int]]) -> str:
    """Render ``[(letter_index, exponent), ...]`` as ``a^2b^-1``; empty word is ``e``."""
    if not syllables:
        return "e"
    out = []
    for letter, exp in syllables:
        ch = LETTERS[letter]
        out.append(ch if exp == 1 else f"{ch}^{exp}")
    return "".join(out)


_SYL = re.compile(r"([a-z])(?:\^(-?\d+))?")


def parse_word(label: str) -> List[Tuple[int, int]]:
    """Inverse of :func:`render_word` (syllables are not merged)."""
    label = label.replace(" ", "")
    if label in ("", "e", "1"):
        return []
    pos, out = 0, []
    while pos < len(label):
        m = _SYL.match(label, pos)
        if not m:
            raise ValueError(f"cannot parse word {label!r} at position {pos}")
        out.append((LETTERS.index(m.group(1)), int(m.group(2) or 1)))
        pos = m.end()
    return out


class Group:
    n_letters: int = 1

    def identity(self) -> Hashable:
        raise NotImplementedError

    def generators(self) -> List[Hashable]:
        raise NotImplementedError

    def mul_gen(self, elem, gen):
        raise NotImplementedError

    def syllables(self, elem, offset: int = 0) -> List[Tuple[int, int]]:
        raise NotImplementedError

    def label(self, elem) -> str:
        return render_word(self.syllables(elem))

    def word_length(self, elem) -> int:
        return sum(abs(e) for _, e in self.syllables(elem))


@dataclass(frozen=True)
class FreeGroup(Group):
    rank: int

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("free group rank must be >= 1")

    @property
    def n_letters(self):
        return self.rank

    def identity(self):
        return ()

    def generators(self):
        gens = []
        for i in range(1, self.rank + 1):
            gens += [i, -i]
        return gens

    def mul_gen(self, elem, gen):
        if elem and elem[-1] == -gen:
            return elem[:-1]
        return elem + (gen,)

    def syllables(self, elem, offset=0):
        out: List[Tuple[int, int]] = []
        for s in elem:
            letter = abs(s) - 1 + offset
            step = 1 if s > 0 else -1
            if out and out[-1][0] == letter:
                out[-1] = (letter, out[-1][1] + step)
            else:
                out.append((letter, step))
        return out


@dataclass(frozen=True)
class AbelianGroup(Group):
    rank: int

    def __post_init__(self):
        if self.rank < 1:
            raise ValueError("abelian group rank must be >= 1")

    @property
    def n_letters(self):
        return self.rank

    def identity(self):
        return (0,) * self.rank

    def generators(self):
        gens = []
        for i in range(self.rank):
            gens += [(i, 1), (i, -1)]
        return gens

    def mul_gen(self, elem, gen):
        axis, step = gen
        out = list(elem)
        out[axis] += step
        return tuple(out)

    def syllables(self, elem, offset=0):
        return [(i + offset, c) for i, c in enumerate(elem) if c != 0]


@dataclass(frozen=True)
class CyclicGroup(Group):
    order: int

    def __post_init__(self):
        if self.order < 2:
            raise ValueError("cyclic group order must be >= 2")

    def identity(self):
        return 0

    def generators(self):
        return [1] if self.order == 2 else [1, -1]

    def mul_gen(self, elem, gen):
        return (elem + gen) % self.order

    def syllables(self, elem, offset=0):
        return [(offset, elem)] if elem else []

    def word_length(self, elem):
        return min(elem, self.order - elem)


@dataclass(frozen=True)
class FreeProduct(Group):
    """Free product of factors; elements are tuples of ``(factor, factor_elem)`` syllables
    with consecutive factors distinct and no trivial syllables."""

    factors: Tuple[Group, ...]
    _offsets: Tuple[int, ...] = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if len(self.factors) < 2:
            raise ValueError("free product needs at least 2 factors")
        offs, acc = [], 0
        for f in self.factors:
            offs.append(acc)
            acc += f.n_letters
        if acc > len(LETTERS):
            raise ValueError("too many generators to label")
        object.__setattr__(self, "_offsets", tuple(offs))

    @property
    def n_letters(self):
        return sum(f.n_letters for f in self.factors)

    def identity(self):
        return ()

    def generators(self):
        return [(j, s) for j, f in enumerate(self.factors) for s in f.generators()]

    def mul_gen(self, elem, gen):
        j, s = gen
        fac = self.factors[j]
        if elem and elem[-1][0] == j:
            new = fac.mul_gen(elem[-1][1], s)
            if new == fac.identity():
                return elem[:-1]
            return elem[:-1] + ((j, new),)
        return elem + ((j, fac.mul_gen(fac.identity(), s)),)

    def syllables(self, elem, offset=0):
        out: List[Tuple[int, int]] = []
        for j, h in elem:
            out += self.factors[j].syllables(h, offset + self._offsets[j])
        return out

    def letter_offset(self, j: int) -> int:
        return self._offsets[j]

    def word_length(self, elem):
        return sum(self.factors[j].word_length(h) for j, h in elem)

    def coset_prefix(self, elem, j: int):
        """Normal form of the left-coset representative of ``elem`` modulo factor ``j``."""
        if elem and elem[-1][0] == j:
            return elem[:-1]
        return elem

    def factor_part(self, elem, j: int):
        """The factor-``j`` element ``h`` with ``elem = coset_prefix(elem, j) * h``."""
        if elem and elem[-1][0] == j:
            return elem[-1][1]
        return self.factors[j].identity()


# ---------------------------------------------------------------------------
# declarative specs


@dataclass(frozen=True)
class GroupSpec:
    """Declarative description of a model group plus the ball radius to generate.

    ``family`` is one of ``free``, ``abelian``, ``cyclic``, ``free_product`` or
    ``rh_model``.  ``rh_model`` is the free product of the peripheral factors with
    a free group of rank ``free_rank``; the peripheral factors come first.
    """

    family: str
    rank: int = 1
    factors: Tuple["GroupSpec", ...] = ()
    radius: int = 0
    free_rank: int = 1

    def validate(self) -> None:
        if self.radius < 0:
            raise ValueError("radius must be >= 0")
        fam = self.family
        if fam in ("free", "abelian"):
            if self.rank < 1:
                raise ValueError(f"{fam}: rank must be >= 1")
        elif fam == "cyclic":
            if self.rank < 2:
                raise ValueError("cyclic: order must be >= 2")
        elif fam == "free_product":
            if len(self.factors) < 2:
                raise ValueError("free_product: needs >= 2 factors")
        elif fam == "rh_model":
            if len(self.factors) < 1:
                raise ValueError("rh_model: needs >= 1 peripheral factor")
            if self.free_rank < 1:
                raise ValueError("rh_model: free_rank must be >= 1")
        else:
            raise ValueError(f"unknown group family {fam!r}")
        for f in self.factors:
            f.validate()

    def build(self) -> Group:
        self.validate()
        fam = self.family
        if fam == "free":
            return FreeGroup(self.rank)
        if fam == "abelian":
            return AbelianGroup(self.rank)
        if fam == "cyclic":
            return CyclicGroup(self.rank)
        if fam == "free_product":
            return FreeProduct(tuple(f.build() for f in self.factors))
        return FreeProduct(tuple(f.build() for f in self.factors) + (FreeGroup(self.free_rank),))

    def peripheral_factors(self) -> Tuple[int, ...]:
        """Default peripheral factor indices: all factors of a free product, the
        declared peripherals of an rh_model, none otherwise."""
        if self.family == "free_product":
            return tuple(range(len(self.factors)))
        if self.family == "rh_model":
            return tuple(range(len(self.factors)))
        return ()

    def describe(self) -> str:
        fam = self.family
        if fam in ("free", "abelian", "cyclic"):
            body = str(self.rank)
        elif fam == "free_product":
            body = ",".join(f.describe() for f in self.factors)
        else:
            body = ",".join(f.describe() for f in self.factors) + f";free={self.free_rank}"
        return f"{fam}({body})"

    def with_radius(self, radius: int) -> "GroupSpec":
        return GroupSpec(self.family, self.rank, self.factors, radius, self.free_rank)


_TOKEN = re.compile(r"\s*([A-Za-z_]+|\d+|[(),;=])")


def parse_group_spec(text: str, radius: int | None = None) -> GroupSpec:
    """Parse ``free_product(abelian(2), free(1))`` style group expressions.

    ``rh_model(abelian(2); free=1)`` sets the free rank.  An optional trailing
    integer argument on a top-level ``free``/``abelian``/``cyclic`` is ignored
    here; radius is passed separately.
    """
    toks = _TOKEN.findall(text)
    if "".join(toks) != re.sub(r"\s+", "", text):
        raise ValueError(f"unexpected characters in group spec {text!r}")
    pos = 0

    def expect(tok):
        nonlocal pos
        if pos >= len(toks) or toks[pos] != tok:
            raise ValueError(f"expected {tok!r} in group spec {text!r}")
        pos += 1

    def parse() -> GroupSpec:
        nonlocal pos
        if pos >= len(toks):
            raise ValueError(f"truncated group spec {text!r}")
        name = toks[pos]
        pos += 1
        expect("(")
        if name in ("free", "abelian", "cyclic"):
            n = int(toks[pos])
            pos += 1
            expect(")")
            return GroupSpec(name, rank=n)
        if name in ("free_product", "rh_model"):
            facs = [parse()]
            free_rank = 1
            while toks[pos] == ",":
                pos += 1
                facs.append(parse())
            if toks[pos] == ";":
                pos += 1
                expect("free")
                expect("=")
                free_rank = int(toks[pos])
                pos += 1
            expect(")")
            return GroupSpec(name, factors=tuple(facs), free_rank=free_rank)
        raise ValueError(f"unknown group family {name!r}")

    spec = parse()
    if pos != len(toks):
        raise ValueError(f"trailing tokens in group spec {text!r}")
    if radius is not None:
        spec = spec.with_radius(radius)
    spec.validate()
    return spec
