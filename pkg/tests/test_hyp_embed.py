import math
from functools import lru_cache

import numpy as np
import pytest
from hypothesis import given, strategies as st

from conftest import ball
from oracles import dense_level, dense_phi_hyp, dense_trumpet, to_networkx
from coarse_embed.graph import cycle_graph, path_graph
from coarse_embed.hyp_embed import (
    TrumpetParams, check_trumpet_lemmas, cutoff_from_product, default_scales, embed_hyperbolic,
    level_function, make_params, scale_cutoff, support_overlap_scales, trumpet_set,
)
from coarse_embed.lp import CompressionFunction, distance, label

SQRT2 = CompressionFunction.parse("power:0.5", 2)


def params(delta, scales, f=SQRT2, p=2.0):
    return TrumpetParams(delta, tuple(scales), f.with_p(p), p)


# -- trumpet sets ------------------------------------------------------------

def test_trumpet_on_path_counts_from_the_start_point():
    # geodesics run from a point near x towards e and are read at times n..2n from that point
    g = path_graph(9)
    assert trumpet_set(g, 8, 0, 2, 0) == [4, 5, 6]
    assert trumpet_set(g, 8, 1, 4, 0) == [1, 2, 3, 4]


def test_trumpet_of_basepoint_is_empty():
    g = ball("free2", 4)
    assert trumpet_set(g, g.basepoint, 0, 4, 0) == []
    # neighbours of e have geodesics of length 1, which never reach time n
    assert trumpet_set(g, g.basepoint, 1, 4, 0) == []


def test_trumpet_near_basepoint_excludes_basepoint_ball():
    g = path_graph(9)
    # from x=2 every geodesic point at time >= 2 is e itself, which is excluded
    assert trumpet_set(g, 2, 0, 2, 0) == []


def test_trumpet_free_group_example():
    g = ball("free2", 8)
    x = int(np.nonzero(g.levels == 8)[0][0])
    out = trumpet_set(g, x, 0, 2, 0)
    assert len(out) == 3
    assert sorted(int(g.levels[v]) for v in out) == [4, 5, 6]


def test_trumpet_rejects_large_k():
    with pytest.raises(ValueError):
        trumpet_set(path_graph(9), 8, 2, 4, 0)
    with pytest.raises(ValueError):
        trumpet_set(path_graph(9), 8, -1, 4, 0)


@pytest.mark.parametrize("name,radius,delta", [("free2", 4, 0), ("z2", 3, 0), ("zxz", 4, 0)])
def test_trumpet_matches_path_enumeration(name, radius, delta):
    g = ball(name, radius)
    G = to_networkx(g)
    for x in g.safe_ball(radius):
        for n in (1, 2, 4):
            for k in range(n // 4 + 1):
                assert set(trumpet_set(g, x, k, n, delta)) == dense_trumpet(G, g.basepoint, x, k, n, delta)


def test_trumpet_matches_path_enumeration_on_cycle_with_delta():
    g = cycle_graph(8)
    G = to_networkx(g)
    for x in range(8):
        for n in (3, 4, 6):
            for k in range(n // 4 + 1):
                assert set(trumpet_set(g, x, k, n, 1.0)) == dense_trumpet(G, 0, x, k, n, 1.0)


# -- level functions ---------------------------------------------------------

def test_level_function_path_examples():
    g = path_graph(9)
    pr = params(0, (2, 4))
    h2 = level_function(g, 8, 2, pr)
    assert dict(h2) == {label("H:2", v): 0.5 for v in (4, 5, 6)}
    h4 = level_function(g, 8, 4, pr)
    assert dict(h4) == {label("H:4", v): 0.5 for v in (1, 2, 3, 4)}
    assert h4.norm_p() == pytest.approx(4 / 2 ** 2)


def test_level_function_of_basepoint_is_zero():
    g = ball("free2", 4)
    assert len(level_function(g, g.basepoint, 4, params(0, (4,)))) == 0


@pytest.mark.parametrize("name,radius", [("free2", 4), ("zxz", 4)])
def test_level_function_matches_dense(name, radius):
    g = ball(name, radius)
    G = to_networkx(g)
    pr = params(0, (2, 4, 8))
    for x in g.safe_ball(radius):
        for n in pr.scales:
            arr = np.zeros(g.n)
            for (ns, v), val in level_function(g, x, n, pr):
                assert ns == f"H:{n}"
                arr[int(v)] = val
            np.testing.assert_allclose(arr, dense_level(G, g.basepoint, x, n, 0), rtol=0, atol=1e-15)


# -- the embedding -----------------------------------------------------------

def test_embedding_of_basepoint_is_zero():
    g = ball("free2", 6)
    assert len(embed_hyperbolic(g, g.basepoint, make_params(g, 0, SQRT2))) == 0


def test_path_embedding_matches_dense_oracle():
    g = path_graph(9)
    G = to_networkx(g)
    pr = params(0, (2, 4, 8))
    sparse = distance(embed_hyperbolic(g, 8, pr), embed_hyperbolic(g, 0, pr))
    f = lambda n: math.sqrt(n)
    a = dense_phi_hyp(G, 0, 8, pr.scales, 0, f, 2.0)
    b = dense_phi_hyp(G, 0, 0, pr.scales, 0, f, 2.0)
    dense = float(np.sqrt(np.sum((a - b) ** 2)))
    assert sparse == pytest.approx(dense, rel=1e-12)
    # H(8,2) is 1/2 on 3 points, H(8,4) is 1/2 on 4 points, H(8,8) is empty since
    # time 8 from 8 or 7 only reaches e; each scale has weight f(n)^2/n = 1
    assert not a[2].any()
    assert sparse == pytest.approx(math.sqrt(3 / 4 + 4 / 4), rel=1e-12)


def test_each_scale_has_its_own_namespace():
    g = ball("free2", 6)
    pr = make_params(g, 0, SQRT2)
    x = int(np.nonzero(g.levels == 3)[0][0])
    spaces = {ns for (ns, _), _ in embed_hyperbolic(g, x, pr)}
    assert spaces <= {f"H:{n}" for n in pr.scales}


def test_params_validation():
    with pytest.raises(ValueError):
        params(1.0, (2, 4))          # 2 < 3 delta
    with pytest.raises(ValueError):
        TrumpetParams(0, (2,), SQRT2, 1.0)
    assert default_scales(0, 8) == (2, 4, 8)
    assert default_scales(0, 9) == (2, 4, 8, 16)
    assert default_scales(1, 8) == (4, 8)


# -- scale cutoff ------------------------------------------------------------

def test_scale_cutoff_examples():
    g = path_graph(9)
    assert scale_cutoff(g, 8, 5, 0) == 1       # product 3 at the farther point
    assert scale_cutoff(g, 5, 8, 0) == 1       # symmetric in argument order
    assert cutoff_from_product(8, 0) == 3
    assert cutoff_from_product(5, 1) is None
    assert cutoff_from_product(5.5, 1) == -1


def test_scale_cutoff_undefined_for_nested_points():
    g = path_graph(9)
    assert scale_cutoff(g, 3, 3, 0) is None


@lru_cache(maxsize=None)
def _tree_supports():
    """Per safe-ball point of a free(2) ball, the support of each level function."""
    g = ball("free2", 8)
    pr = make_params(g, 0, SQRT2, scales=(2, 4, 8, 16))
    xs = g.safe_ball(4)
    supp = {x: {n: {key for key, _ in level_function(g, x, n, pr)} for n in pr.scales} for x in xs}
    pairs = []
    for x in xs:
        for y in xs:
            if x < y:
                k = scale_cutoff(g, x, y, 0)
                if k is not None:
                    # both supports live in the same namespace, so keys compare directly
                    overlap = [int(math.log2(n)) for n in pr.scales if supp[x][n] & supp[y][n]]
                    pairs.append((x, y, k, overlap))
    return pairs


def test_support_overlap_helper_agrees():
    g = ball("free2", 8)
    pr = make_params(g, 0, SQRT2, scales=(2, 4, 8, 16))
    for x, y, k, overlap in _tree_supports()[::97]:
        assert [int(math.log2(n)) for n in support_overlap_scales(g, x, y, pr)] == overlap


def test_supports_disjoint_below_the_cutoff_on_trees():
    pairs = _tree_supports()
    assert len(pairs) > 1000
    for x, y, k, overlap in pairs:
        assert all(j >= k for j in overlap), (x, y, k, overlap)


def test_supports_can_meet_at_the_cutoff_scale():
    # the top scale 2^k can already reach past the branch point
    assert any(k in overlap for _, _, k, overlap in _tree_supports())


# -- lemma checks ------------------------------------------------------------

def test_trumpet_lemmas_on_tree():
    g = ball("free2", 8)
    pr = make_params(g, 0, SQRT2, safe_radius=4)
    rep = check_trumpet_lemmas(g, pr, g.safe_ball(4))
    assert rep.C == 3
    assert all(not v for v in rep.violations.values())
    assert all(c > 0 for c in rep.checked.values())


def test_trumpet_lemmas_on_cycle():
    g = cycle_graph(8)
    pr = params(1.0, (4,))
    rep = check_trumpet_lemmas(g, pr, list(range(8)))
    assert all(not v for v in rep.violations.values())


def test_trumpet_lemma_checker_catches_small_constant():
    g = ball("free2", 8)
    pr = make_params(g, 0, SQRT2, safe_radius=4)
    rep = check_trumpet_lemmas(g, pr, g.safe_ball(4), C=0.1)
    assert rep.violations["size_upper"]


@given(st.integers(0, 160))
def test_adjacent_level_functions_are_close(a):
    g = ball("free2", 4)
    pr = params(0, (2, 4, 8))
    xs = g.safe_ball(4)
    x = xs[a % len(xs)]
    for y in g.adjacency[x]:
        y = int(y)
        for n in pr.scales:
            d = distance(level_function(g, x, n, pr), level_function(g, y, n, pr))
            assert d <= (2 * 3 * 2) ** 0.5 * n ** (-0.5) + 1e-12
