import math
from fractions import Fraction

import pytest
from hypothesis import given, settings, strategies as st

from gplab import feynman_graphs as fg
from gplab.hierarchy_check import duhamel_counts


def brute_count(k, m):
    # oracle: number of ordered forests of 2k ternary plane trees with m internal vertices,
    # by direct recursion on the first tree (independent of the enumerator)
    @__import__("functools").lru_cache(None)
    def trees(v):
        if v == 0:
            return 1
        return sum(trees(a) * trees(b) * trees(v - 1 - a - b) for a in range(v) for b in range(v - a))

    @__import__("functools").lru_cache(None)
    def forests(r, v):
        if r == 0:
            return 1 if v == 0 else 0
        return sum(trees(a) * forests(r - 1, v - a) for a in range(v + 1))

    return forests(2 * k, m) * 3 ** m  # each vertex carries one of three marks


def test_zero_vertex_graphs():
    gs = fg.enumerate_graphs(2, 0)
    assert len(gs) == 1
    g = gs[0]
    assert g.k == 2 and g.m == 0 and len(g.edges) == 4
    assert g.leaf_pairing == [(0, 1), (2, 3)]


@pytest.mark.parametrize("k,m", [(k, m) for k in (1, 2, 3) for m in range(0, 4)])
def test_count_matches_oracle_and_bound(k, m):
    gs = fg.enumerate_graphs(k, m)
    n_shapes = fg.fuss_catalan_count(k, m)
    assert len(gs) == n_shapes
    # the enumerator fixes the mark on the first son; the full marked class is 3^m larger
    assert n_shapes * 3 ** m == brute_count(k, m)
    assert len(gs) <= 2 ** (4 * m + k)
    assert len({g.encode() for g in gs}) == len(gs)


def test_known_small_counts():
    assert [len(fg.enumerate_graphs(1, m)) for m in range(5)] == [1, 2, 7, 30, 143]
    assert [len(fg.enumerate_graphs(2, m)) for m in range(4)] == [1, 4, 18, 88]


@pytest.mark.parametrize("k,m", [(1, 3), (2, 2), (3, 1), (3, 4)])
def test_structure_and_pairing(k, m):
    for g in fg.enumerate_graphs(k, m):
        assert len(g.edges) == 2 * k + 3 * m
        assert len(g.leaves) == 2 * k + 2 * m
        assert len(g.roots) == 2 * k
        rep = fg.validate_pairing(g)
        assert rep.ok, rep.failures
        flat = sorted(sum(g.leaf_pairing, ()))
        assert flat == list(range(len(g.leaves)))
        assert fg.decode(g.encode()) == g


def test_leaf_pairing_rule_single_vertex():
    g = fg.FeynmanGraph((fg.Vertex((None, None, None)), None))
    # leaves 0,1,2 under the vertex (leaf 0 on the marked son), leaf 3 on the partner root
    assert g.leaf_pairing == [(0, 3), (1, 2)]
    assert str(g) == "(*.,.,.)|.;roots=0-1;leaves=0-3,1-2"


def test_decode_rejects_bad_text():
    with pytest.raises(ValueError):
        fg.decode("(*.,.,.)|.;roots=0-1;leaves=0-1,2-3")
    with pytest.raises(ValueError):
        fg.decode("(*.,.)|.;roots=0-1;leaves=0-1")
    with pytest.raises(ValueError):
        fg.decode(".x|.;roots=0-1;leaves=0-1")


def test_fault_injection_moved_mark():
    g = next(g for g in fg.enumerate_graphs(1, 2) if g.m == 2)
    bad = fg.move_mark(g, 0, 1)
    rep = fg.validate_pairing(bad)
    assert not rep.ok and "marked_son" in rep.failures
    with pytest.raises(fg.InvariantError) as exc:
        rep.raise_if_failed()
    assert "marked_son" in exc.value.names


def test_size_limit():
    with pytest.raises(fg.GraphLimitError):
        fg.enumerate_graphs(4, 5)
    with pytest.raises(ValueError):
        fg.enumerate_graphs(0, 1)


@given(k=st.integers(1, 10), m=st.integers(0, 10))
def test_power_counting_total(k, m):
    pc = fg.power_counting(k, m)
    assert pc["total"] == -(5 * k + m)
    assert isinstance(pc["total"], int)
    assert pc["volume"] + pc["leaf"] + pc["propagator"] + pc["observable"] == pc["total"]


def test_power_counting_custom_decay():
    pc = fg.power_counting(1, 1, leaf_decay=Fraction(3), observable_decay=0)
    assert pc["total"] == 20 - 12 - 10


@given(k=st.integers(1, 4), m=st.integers(0, 4))
@settings(max_examples=30)
def test_summand_counts(k, m):
    assert duhamel_counts(k, m)["xi_summands"] == math.factorial(m + k) // math.factorial(k)


def test_amplitude_bound_and_table():
    rec = fg.amplitude_bound(2, 2, 0.5)
    assert rec["graph_count"] == 18 and rec["count_source"] == "enumerated"
    assert rec["t_exponent"] == 0.5 and rec["constant_exponent"] == 4
    assert fg.amplitude_bound(5, 6, 1.0)["count_source"] == "bound"
    with pytest.raises(ValueError):
        fg.amplitude_bound(1, 1, -1.0)
    rows = fg.counts_table(2, 2)
    assert len(rows) == 6 and all(r["count"] <= r["bound"] for r in rows)


def test_power_counting_examples():
    assert fg.power_counting(1, 0)["total"] == -5
    pc = fg.power_counting(1, 1)
    assert (pc["volume"], pc["leaf"], pc["propagator"], pc["observable"], pc["total"]) == (20, -10, -10, -6, -6)
    assert fg.power_counting(2, 3)["total"] == -13
    assert fg.amplitude_bound(1, 0, 2.0)["t_exponent"] == 0
    rec = fg.amplitude_bound(1, 4, 2.0)
    assert rec["t_exponent"] == 1.0 and rec["constant_exponent"] == 5


def test_counts_monotone_and_canonical_idempotent():
    for k in (1, 2, 3):
        counts = [len(fg.enumerate_graphs(k, m)) for m in range(4)]
        assert counts == sorted(counts)
    for g in fg.enumerate_graphs(2, 2):
        text = fg.canonical(g)
        assert fg.canonical(fg.decode(text)) == text


def test_edge_orientation_by_side():
    g = fg.enumerate_graphs(2, 1)[0]
    assert all(e.tau == (1 if e.tree % 2 == 0 else -1) for e in g.edges)
