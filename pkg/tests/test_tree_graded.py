import itertools
from functools import lru_cache

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import ball
from oracles import dense_distances, free_product_tg_coordinates, sqrt_function
from coarse_embed.graph import cycle_graph, path_graph
from coarse_embed.lp import CompressionFunction, distance
from coarse_embed.pieces import PieceSystem, pieces_from_cosets, single_piece
from coarse_embed.tree_graded import (
    DecompositionCache, SplitMetric, TreeGradedError, build_distance_tree, check_bilipschitz, check_decomposition_uniqueness,
    check_metric_axioms, decompose_geodesic, decompose_path, embed_phi_I, embed_phi_T, embed_tree_graded,
    split_metrics, validate_tree_graded,
)

SQRT = CompressionFunction.parse("power:0.5", 2)


def lines(name, radius, peripherals=(0, 1), balls="uncovered"):
    g = ball(name, radius)
    return g, pieces_from_cosets(g, peripherals, radius=0, balls=balls, ball_radius=0)


# -- validation --------------------------------------------------------------

def test_free_product_lines_are_tree_graded():
    g, ps = lines("zxz", 6)
    rep = validate_tree_graded(g, ps)
    assert rep.passed and rep.axiom1 and rep.axiom2


def test_singletons_inside_lines_break_the_containment_axiom():
    g, ps = lines("zxz", 4, balls="all")
    rep = validate_tree_graded(g, ps)
    assert rep.axiom1 and not rep.axiom2
    assert rep.containments and not rep.overlaps


def test_overlapping_pieces_fail_axiom_two():
    g = path_graph(4)
    ps = PieceSystem(g, [[0, 1, 2], [1, 2, 3]])
    rep = validate_tree_graded(g, ps)
    assert not rep.axiom2 and rep.overlaps == [(0, 1, 2)]


def test_duplicate_pieces_fail_axiom_two():
    g = path_graph(3)
    ps = PieceSystem(g, [[0, 1], [0, 1], [1, 2]])
    assert not validate_tree_graded(g, ps).axiom2


def test_missing_vertex_fails_axiom_one():
    g = path_graph(4)
    ps = PieceSystem(g, [[0, 1], [1, 2]])
    rep = validate_tree_graded(g, ps)
    assert not rep.axiom1 and rep.uncovered == [3]


def test_cycle_across_pieces_fails_axiom_one():
    g = cycle_graph(6)
    ps = PieceSystem(g, [[0, 1, 2, 3], [3, 4, 5, 0]])
    rep = validate_tree_graded(g, ps)
    assert not rep.axiom1 and rep.loose_blocks
    assert rep.cycle_crosscheck is True


@pytest.mark.parametrize("pieces,ok", [
    ([[0, 1, 2, 3, 4, 5]], True),
    ([[0, 1], [1, 2], [2, 3], [3, 4], [4, 5], [5, 0]], False),
])
def test_block_reduction_agrees_with_cycle_enumeration(pieces, ok):
    g = cycle_graph(6)
    rep = validate_tree_graded(g, PieceSystem(g, pieces))
    assert rep.axiom1 is ok
    assert rep.cycle_crosscheck is True


def test_block_reduction_on_small_cayley_balls():
    # both graphs have at most 30 vertices, so the cycle enumeration runs too
    z2 = ball("z2", 3)
    g, ps = lines("zxz", 2)
    for graph, system in ((z2, single_piece(z2)), (g, ps)):
        assert graph.n <= 30
        assert validate_tree_graded(graph, system).cycle_crosscheck is True


def test_disconnected_piece_reported():
    g = path_graph(5)
    ps = PieceSystem(g, [[0, 2], [0, 1], [1, 2, 3, 4]])
    assert validate_tree_graded(g, ps).disconnected == [0]


# -- decomposition -----------------------------------------------------------

def test_decomposition_examples():
    g, ps = lines("zxz", 6)
    V = g.vertex
    d = decompose_geodesic(g, ps, V("ab"))
    assert [ps.label(i) for i in d.piece_indices] == ["e<a>", "a<b>"]
    assert d.transition_vertices == (V("a"), V("ab"))
    assert d.entries == (V("e"), V("a"))
    d = decompose_geodesic(g, ps, V("e"))
    assert len(d.piece_indices) == 1 and d.transition_vertices == (V("e"),)
    d = decompose_geodesic(g, ps, V("a^3"))
    assert [ps.label(i) for i in d.piece_indices] == ["e<a>"] and d.transition_vertices == (V("a^3"),)


def test_decomposition_requires_valid_system():
    g = cycle_graph(6)
    ps = PieceSystem(g, [[0, 1, 2, 3], [3, 4, 5, 0]])
    with pytest.raises(TreeGradedError):
        decompose_geodesic(g, ps, 3)


@pytest.mark.parametrize("name,radius", [("zxz", 6), ("z2xz", 4)])
def test_decomposition_matches_word_structure(name, radius):
    g, ps = lines(name, radius)
    for x in g.safe_ball(radius):
        word = g.group.syllables(g.elements[x])
        d = decompose_geodesic(g, ps, x)
        grp = g.group
        offsets = [grp.letter_offset(j) for j in range(len(grp.factors))]
        factors = [max(j for j, o in enumerate(offsets) if o <= letter) for letter, _ in word]
        blocks = 1 + sum(a != b for a, b in zip(factors, factors[1:])) if factors else 1
        assert len(d.piece_indices) == blocks
        lev = g.levels
        assert all(lev[a] < lev[b] for a, b in zip(d.entries, d.entries[1:]))
        assert d.transition_vertices[-1] == x
        for i, xi, ei in zip(d.piece_indices, d.transition_vertices, d.entries):
            assert ps.contains(i, xi) and ps.contains(i, ei)
        assert len(set(zip(d.piece_indices[1:], d.piece_indices))) == len(d.piece_indices) - 1


def test_uniqueness_across_all_geodesics():
    for name, radius in (("zxz", 6), ("z2xz", 4)):
        g, ps = lines(name, radius)
        rep = check_decomposition_uniqueness(g, ps, g.safe_ball(radius))
        assert rep.passed and rep.geodesics >= rep.points
    g, ps = lines("z2xz", 4)
    rep = check_decomposition_uniqueness(g, ps, g.safe_ball(4))
    assert rep.geodesics > rep.points  # the square pieces really have several geodesics


def test_path_decomposition_with_gap_edges():
    # singleton pieces on a path: every vertex is its own run
    g = path_graph(5)
    ps = PieceSystem(g, [[v] for v in range(5)])
    d = decompose_path(g, ps, [0, 1, 2, 3])
    assert d.piece_indices == (0, 1, 2, 3) and d.entries == (0, 1, 2, 3)


# -- distance tree -----------------------------------------------------------

def quotient_oracle(g, ps):
    """Union-find over the defining relation, then a networkx quotient graph."""
    parent = list(range(g.n))

    def find(v):
        while parent[v] != v:
            parent[v] = parent[parent[v]]
            v = parent[v]
        return v

    for i in range(len(ps)):
        members = [int(v) for v in ps.members(i)]
        a = ps.anchor(i)
        row = g.distances_from(a)
        by_level = {}
        for v in members:
            by_level.setdefault(int(row[v]), []).append(v)
        for group in by_level.values():
            for v in group[1:]:
                parent[find(v)] = find(group[0])
    Q = nx.Graph()
    Q.add_nodes_from({find(v) for v in range(g.n)})
    Q.add_edges_from((find(u), find(v)) for u, v in g.edges() if find(u) != find(v))
    return find, Q


def test_distance_tree_examples():
    g, ps = lines("zxz", 2)
    t = build_distance_tree(g, ps)
    assert len(t.classes) == 9
    V = g.vertex
    assert sorted(sorted(g.label(v) for v in c) for c in t.classes if len(c) == 2 and 0 < g.levels[c[0]] == 1) == \
        [["a", "a^-1"], ["b", "b^-1"]]
    p9 = path_graph(9)
    assert len(build_distance_tree(p9, single_piece(p9)).classes) == 9
    z2 = ball("z2", 4)
    assert len(build_distance_tree(z2, single_piece(z2)).classes) == 5


def test_interval_pieces_on_path_give_path():
    g = path_graph(7)
    ps = PieceSystem(g, [[0, 1, 2], [2, 3], [3, 4, 5, 6]])
    t = build_distance_tree(g, ps)
    assert len(t.classes) == 7
    assert all(t.distance(u, v) == abs(u - v) for u in range(7) for v in range(7))


@pytest.mark.parametrize("name,radius", [("zxz", 3), ("z2xz", 3)])
def test_distance_tree_matches_quotient_oracle(name, radius):
    g, ps = lines(name, radius)
    t = build_distance_tree(g, ps)
    find, Q = quotient_oracle(g, ps)
    assert nx.is_tree(Q)
    assert len(t.classes) == Q.number_of_nodes()
    lengths = dict(nx.all_pairs_shortest_path_length(Q))
    for u, v in itertools.combinations(range(g.n), 2):
        assert t.distance(u, v) == lengths[find(u)][find(v)]


# -- split metric ------------------------------------------------------------

def test_split_metric_examples():
    g, ps = lines("zxz", 6)
    V = g.vertex
    assert split_metrics(g, ps, V("ab"), V("e")) == (2, 2, 4)
    assert split_metrics(g, ps, V("ab"), V("ab")) == (0, 0, 0)
    m = SplitMetric(g, ps)
    for u, v in (("a^2", "a^-1"), ("a^3", "a")):
        sT, sI, _ = m(V(u), V(v))
        d = g.distance(V(u), V(v))
        assert sI == d
        assert sT == abs(int(g.levels[V(u)]) - int(g.levels[V(v)]))


def test_bilipschitz_on_free_product():
    g, ps = lines("zxz", 6)
    rep = check_bilipschitz(g, ps)
    assert rep.passed and rep.pairs == len(g.safe_ball()) * (len(g.safe_ball()) - 1) // 2
    assert 0.5 <= rep.min_ratio and rep.max_ratio <= 2


def test_bilipschitz_single_piece_and_tree():
    g = ball("z2", 6)
    assert check_bilipschitz(g, single_piece(g)).passed
    t = ball("free2", 4)
    rep = check_bilipschitz(t, PieceSystem(t, [[v] for v in range(t.n)]), t.safe_ball(4))
    assert rep.passed


def test_split_metric_is_a_metric():
    g, ps = lines("zxz", 4)
    m = SplitMetric(g, ps)
    rep = check_metric_axioms(lambda x, y: m(x, y)[2], list(range(g.n)))
    assert rep.passed


@pytest.mark.parametrize("name,radius", [("zxz", 4), ("z2xz", 3)])
def test_split_metric_matrix_matches_pairwise(name, radius):
    g, ps = lines(name, radius)
    m = SplitMetric(g, ps)
    xs = list(range(g.n))
    want = np.array([[m(x, y)[2] for y in xs] for x in xs])
    np.testing.assert_array_equal(m.matrix(xs), want)
    sub = xs[::3]
    np.testing.assert_array_equal(m.matrix(sub), want[np.ix_(sub, sub)])


def test_metric_axiom_checker_accepts_a_matrix():
    assert check_metric_axioms(np.array([[0, 1], [1, 0]]), [5, 7]).passed
    rep = check_metric_axioms(np.array([[0, 1, 5], [1, 0, 1], [5, 1, 0]]), [0, 1, 2])
    assert rep.triangle_violations == [(0, 1, 2), (2, 1, 0)]
    with pytest.raises(ValueError):
        check_metric_axioms(np.zeros((2, 2)), [0, 1, 2])


def test_metric_axiom_checker_detects_failures():
    rep = check_metric_axioms(lambda x, y: 0 if x == y else (5 if {x, y} == {0, 2} else 1), [0, 1, 2])
    assert rep.triangle_violations and not rep.passed
    rep = check_metric_axioms(lambda x, y: x - y if x > y else 0, [0, 1])
    assert not rep.passed


# -- embeddings --------------------------------------------------------------

def test_phi_T_examples():
    g, ps = lines("zxz", 6)
    V = g.vertex
    assert len(embed_phi_T(g, ps, V("e"), SQRT)) == 0
    vals = sorted(v for _, v in embed_phi_T(g, ps, V("ab"), SQRT))
    assert vals == pytest.approx([1.0, 1.0], rel=1e-15)
    a3 = dict(embed_phi_T(g, ps, V("a^3"), SQRT))
    assert list(a3.values()) == pytest.approx([3 ** 0.5], rel=1e-15)


def test_phi_I_examples():
    g, ps = lines("zxz", 6)
    V = g.vertex
    assert len(embed_phi_I(g, ps, V("e"), 2.0)) == 0
    assert sorted(v for _, v in embed_phi_I(g, ps, V("ab"), 2.0)) == [1.0, 1.0]
    (key, val), = list(embed_phi_I(g, ps, V("a^-2"), 2.0))
    assert val == -2.0


def test_tree_graded_embedding_matches_word_oracle():
    g, ps = lines("zxz", 4)
    xs = list(range(g.n))
    sparse = [embed_tree_graded(g, ps, x, SQRT) for x in xs]
    dense = [free_product_tg_coordinates(g.label(x), sqrt_function, 2.0, {0: 0, 1: 1}) for x in xs]
    keys = sorted({k for d in dense for k in d}, key=repr)
    arr = np.array([[d.get(k, 0.0) for k in keys] for d in dense])
    want = dense_distances(list(arr), 2.0)
    for a, b in itertools.combinations(range(len(xs)), 2):
        assert distance(sparse[a], sparse[b]) == pytest.approx(want[a, b], rel=1e-12, abs=1e-12)


@lru_cache(maxsize=None)
def _zxz8():
    g, ps = lines("zxz", 8)
    return g, ps, DecompositionCache(g, ps)


@given(st.integers(0, 10 ** 6))
def test_tree_graded_embedding_adjacent_pairs_bounded(seed):
    # sqrt(2) is the measured constant, stable across radii 6, 8 and 10
    g, ps, decomp = _zxz8()
    xs = g.safe_ball()
    x = xs[seed % len(xs)]
    phi = lambda v: embed_tree_graded(g, ps, v, SQRT, decomp=decomp)
    for y in g.adjacency[x]:
        if g.levels[y] <= 4:
            assert distance(phi(x), phi(int(y))) <= 2 ** 0.5 + 1e-12
