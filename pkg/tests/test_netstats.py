import math
from itertools import combinations, product

import numpy as np
import pytest
from hypothesis import given, strategies as st

import oracles
from copulaabc import netstats as ns
from copulaabc.models import grow_nlpa
from copulaabc.netstats import ErgmStatSpec, MPLEDivergenceError, Term
from copulaabc.network import Network


def complete(n):
    return Network(n, list(combinations(range(n), 2)))


def star(k):
    return Network(k + 1, [(0, i) for i in range(1, k + 1)])


@st.composite
def graphs(draw, n_min=2, n_max=9):
    n = draw(st.integers(n_min, n_max))
    pairs = list(combinations(range(n), 2))
    bits = draw(st.lists(st.booleans(), min_size=len(pairs), max_size=len(pairs)))
    return Network(n, [p for p, b in zip(pairs, bits) if b])


# --- degree, density, paths ------------------------------------------------------------------

def test_k4_degrees():
    assert ns.degree_summaries(complete(4)) == (3.0, 0.0, 3.0, 0.0)


def test_directed_path_degree_means():
    m_in, _, m_out, _ = ns.degree_summaries(Network(3, [(0, 1), (1, 2)], directed=True))
    assert m_in == m_out == pytest.approx(2 / 3)


@given(st.integers(2, 8), st.data())
def test_in_and_out_means_agree(n, data):
    bits = data.draw(st.lists(st.booleans(), min_size=n * n, max_size=n * n))
    net = Network.from_adjacency(np.array(bits).reshape(n, n), directed=True)
    m_in, _, m_out, _ = ns.degree_summaries(net)
    assert m_in == pytest.approx(m_out)


def test_large_network_density_formula():
    d = ns.density_from_counts(65_608_366, 1_806_067_135)
    assert f"{d:.5e}" == "8.39161e-07"


def test_reciprocity():
    assert ns.reciprocity(Network(2, [(0, 1), (1, 0)], directed=True)) == 1.0
    assert ns.reciprocity(Network(2, [(0, 1)], directed=True)) == 0.0


def test_path_p3_mean_path():
    p3 = Network(3, [(0, 1), (1, 2)])
    assert ns.mean_path(p3) == pytest.approx(4 / 3)
    assert ns.max_eccentricity(p3) == 2.0


@given(graphs())
def test_mean_path_matches_bfs(net):
    want = oracles.bfs_mean_path(net)
    if math.isnan(want):
        with pytest.raises(ValueError):
            ns.mean_path(net)
    else:
        assert ns.mean_path(net) == pytest.approx(want, rel=1e-12)


# --- counts and clustering -------------------------------------------------------------------

def test_small_complete_counts():
    assert (ns.count_kstar2(complete(3)), ns.count_triangles(complete(3))) == (3, 1)
    assert (ns.count_kstar2(complete(4)), ns.count_triangles(complete(4))) == (12, 4)


def test_clustering_examples():
    assert ns.clustering_global(complete(4)) == ns.clustering_avg_local(complete(4)) == 1.0
    assert ns.clustering_global(star(4)) == ns.clustering_avg_local(star(4)) == 0.0
    chorded = Network(4, [(0, 1), (1, 2), (2, 3), (3, 0), (0, 2)])
    closed, total = oracles.connected_triples(chorded)
    assert ns.clustering_global(chorded) == pytest.approx(closed / total) == pytest.approx(0.75)


@given(graphs())
def test_counts_match_enumeration(net):
    assert ns.count_triangles(net) == oracles.triangles(net)
    assert ns.count_kstar2(net) == oracles.kstar2(net)
    assert 3 * ns.count_triangles(net) <= ns.count_kstar2(net)
    c = ns.clustering_global(net)
    assert 0.0 <= c <= 1.0
    assert 0.0 <= ns.clustering_avg_local(net) <= 1.0


def test_gw_degree_direct_sum(rng):
    for _ in range(5):
        net = Network.from_adjacency(np.triu(rng.random((8, 8)) < 0.4, 1))
        for decay in (0.2, math.log(1.5), 2.0):
            assert abs(ns.gw_degree(net, decay) - oracles.gw_degree_direct(net, decay)) < 1e-12


def test_assortativity_examples():
    assert math.isnan(ns.assortativity_degree(complete(4)))
    for k in (3, 5, 8):
        assert ns.assortativity_degree(star(k)) == pytest.approx(-1.0)
    k3_k2 = Network(5, [(0, 1), (1, 2), (0, 2), (3, 4)])
    assert ns.assortativity_degree(k3_k2) == pytest.approx(1.0)
    assert ns.assortativity_degree(k3_k2) == pytest.approx(oracles.pearson_assortativity(k3_k2))


@given(graphs(4, 9))
def test_assortativity_matches_pearson(net):
    got = ns.assortativity_degree(net)
    if not math.isnan(got):
        assert got == pytest.approx(oracles.pearson_assortativity(net), abs=1e-12)


@given(graphs(3, 8), st.randoms(use_true_random=False))
def test_relabel_invariance(net, rnd):
    perm = list(range(net.n))
    rnd.shuffle(perm)
    other = net.relabel(perm)
    for name in ("density", "clustering_global", "clustering_avg_local", "var_degree"):
        assert ns.SUMMARY_FUNCTIONS[name](other) == pytest.approx(ns.SUMMARY_FUNCTIONS[name](net))
    assert ns.count_triangles(other) == ns.count_triangles(net)
    if oracles.bfs_mean_path(net) == oracles.bfs_mean_path(net):
        assert ns.mean_path(other) == pytest.approx(ns.mean_path(net))


def test_size_comparable_summaries():
    # the dimensionless summaries stay on the same scale when n doubles
    small = [ns.stats_by_name(grow_nlpa(1.2, 0.02, 150, 149, s), ["density", "clustering_avg_local", "mean_path"])
             for s in range(5)]
    big = [ns.stats_by_name(grow_nlpa(1.2, 0.02, 300, 299, s), ["density", "clustering_avg_local", "mean_path"])
           for s in range(5)]
    small, big = np.mean(small, axis=0), np.mean(big, axis=0)
    assert 0 < small[0] < 1 and 0 < big[0] < 1
    assert 0.5 < small[2] / big[2] < 2


# --- change statistics -----------------------------------------------------------------------

SPEC_ALL = ErgmStatSpec((Term("edges"), Term("kstar2"), Term("triangles"), Term("gwdegree"),
                         Term("meandeg")))


def test_change_stat_examples():
    spec = ErgmStatSpec.of("kstar2", "triangles", "edges")
    assert ns.change_stats(Network.empty(4), (0, 1), spec).stats[0] == 0
    k4_minus = complete(4).with_edge(0, 1, False)
    assert ns.change_stats(k4_minus, (0, 1), spec).stats[1] == 2
    assert ns.change_stats(k4_minus, (2, 3), spec).stats[2] == 1


def _all_graphs(n):
    pairs = list(combinations(range(n), 2))
    for bits in product([0, 1], repeat=len(pairs)):
        yield Network(n, [p for p, b in zip(pairs, bits) if b])


@pytest.mark.parametrize("n", [2, 3, 4, 5])
def test_change_stats_exhaustive(n):
    counts = ErgmStatSpec.of("edges", "kstar2", "triangles")
    for net in _all_graphs(n):
        for i, j in combinations(range(n), 2):
            d = ns.change_stats(net, (i, j), SPEC_ALL).stats
            want = ns.global_stats(net.with_edge(i, j, True), SPEC_ALL) - ns.global_stats(net.with_edge(i, j, False), SPEC_ALL)
            assert np.array_equal(d[:3], want[:3])       # integer counts: exact
            assert np.allclose(d[3:], want[3:], atol=1e-12)
            dc = ns.change_stats(net, (i, j), counts).stats
            assert dc.tolist() == [oracles_count_diff(net, i, j, f) for f in ("e", "k", "t")]


def oracles_count_diff(net, i, j, which):
    on, off = net.with_edge(i, j, True), net.with_edge(i, j, False)
    f = {"e": lambda g: g.n_edges, "k": oracles.kstar2, "t": oracles.triangles}[which]
    return f(on) - f(off)


def test_dyad_design_rows_match_change_stats(rng):
    spec = ErgmStatSpec.of("kstar2", "triangles", "gwdegree")
    net = Network.from_adjacency(np.triu(rng.random((7, 7)) < 0.4, 1))
    X, y = ns.dyad_design(net, spec)
    for r, (i, j) in enumerate(combinations(range(7), 2)):
        assert np.allclose(X[r], ns.change_stats(net, (i, j), spec).stats)
        assert y[r] == net.has_edge(i, j)


# --- MPLE ------------------------------------------------------------------------------------

def test_empty_graph_diverges():
    with pytest.raises(MPLEDivergenceError):
        ns.mple(Network.empty(6), ErgmStatSpec.of("edges"))


def test_triangle_free_graph_diverges():
    path = Network(6, [(0, 1), (1, 2), (2, 3), (3, 4), (4, 5), (0, 2)]).with_edge(0, 2, False)
    with pytest.raises(MPLEDivergenceError):
        ns.mple(path, ErgmStatSpec.of("kstar2", "triangles"))


def test_mple_gradient_small(rng):
    spec = ErgmStatSpec.of("kstar2", "triangles")
    done = 0
    for _ in range(30):
        net = Network.from_adjacency(np.triu(rng.random((12, 12)) < 0.35, 1))
        try:
            beta = ns.mple(net, spec)
        except MPLEDivergenceError:
            continue
        X, y = ns.dyad_design(net, spec)
        g, _ = ns.pseudo_grad_hess(beta, X, y, np.full(len(y), math.log(1 / 12)))
        assert np.max(np.abs(g)) < 1e-8
        done += 1
    assert done >= 5


def test_mple_matches_grid_oracle_examples():
    spec = ErgmStatSpec.of("kstar2", "triangles")
    rng = np.random.default_rng(77)
    checked = 0
    while checked < 3:
        net = Network.from_adjacency(np.triu(rng.random((6, 6)) < 0.5, 1))
        X, y = ns.dyad_design(net, spec)
        off = np.full(len(y), math.log(1 / 6))
        oracle, boundary = ns.mple_grid_oracle(X, y, off)
        if boundary:
            continue
        assert np.max(np.abs(ns.mple(net, spec) - oracle)) < 1e-3
        checked += 1


def test_offset_moves_optimum_continuously():
    spec = ErgmStatSpec.of("kstar2", "triangles")
    net = Network.from_adjacency(np.triu(np.random.default_rng(3).random((10, 10)) < 0.4, 1))
    offs = np.linspace(-2.5, -2.0, 6)
    betas = np.array([ns.mple(net, spec, o) for o in offs])
    assert np.all(np.max(np.abs(np.diff(betas, axis=0)), axis=1) < 0.2)


def test_joint_name_parsing():
    spec, k = ns.parse_joint_mple("mple:kstar2+gwdegree@0.5:1")
    assert k == 1 and spec.terms[1].decay == 0.5
    with pytest.raises(ValueError):
        ns.parse_joint_mple("mple:kstar2:3")
    with pytest.raises(ValueError):
        ns.check_summary_names(["nope"])
