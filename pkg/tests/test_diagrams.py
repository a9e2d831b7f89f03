from fractions import Fraction

import pytest
from hypothesis import given, strategies as st

from okl import diagrams as d


def test_table_size_and_roundtrip():
    table = d.symbol_table()
    assert len(table) == 25
    for s in table:
        assert s.recomputed() == (s.homogeneity, s.parity), s.name


@pytest.mark.parametrize("name,hom,par", [
    ("noise", (Fraction(-3, 2), -1), 1),
    ("x", (Fraction(1), 0), -1),
    ("cherry_rr", (Fraction(-1), -2), 1),
    ("lollipop_r", (Fraction(-1, 2), -1), -1),
    ("ip_lollipop_r", (Fraction(1, 2), -1), 1),
])
def test_symbol_examples(name, hom, par):
    s = d.symbol(name)
    assert s.homogeneity == hom
    assert d.parity(name) == par


def test_product_examples():
    assert d.product("lollipop_r", "lollipop_r").name == "cherry_rr"
    assert d.product("x", "lollipop_r") is None
    for t in d.product_operands():
        assert d.product("one", t).name == t
    with pytest.raises(ValueError):
        d.product("cherry_rr", "one")


OPS = d.product_operands()


@given(st.sampled_from(OPS), st.sampled_from(OPS))
def test_product_grid_consistency(a, b):
    out = d.product(a, b)
    assert (out is None) == (d.product(b, a) is None)
    if out is None:
        return
    assert out.name == d.product(b, a).name
    ha, hb = d.symbol(a).homogeneity, d.symbol(b).homogeneity
    assert out.homogeneity == (ha[0] + hb[0], ha[1] + hb[1])
    assert d.parity(out) == d.parity(a) * d.parity(b)


def test_contraction_counts():
    cc = d.enumerate_contractions("cherry_rr", "cherry_rr")
    assert len(cc) == 3 and sum(g.is_cross for g in cc) == 2
    assert len(d.enumerate_contractions("moose", "moose")) == 105
    # One noise leaf against none: an odd leaf count admits no pairing.
    assert d.enumerate_contractions("lollipop_r", "lollipop_b") == []


def test_elk_cross_contraction_shape():
    crosses = [d.simplify(g) for g in d.enumerate_contractions("elk_rrb", "elk_rrb") if g.is_cross]
    for sg in crosses:
        ones = [e for e in sg.edges if e[2] == 1]
        assert len(ones) == 2 and ones[0][:2] == ones[1][:2]
        assert all(v not in sg.roots for v in ones[0][:2])
        assert len(sg.vertices) == 4  # two roots plus the two cherry roots


def test_degree_examples():
    v, w = (0, ()), (1, ())
    g = d.SimplifiedMultigraph((v, w), (v, w), ((v, w, 1), (v, w, 1)))
    assert d.degree(g, [v, w]) == 1
    assert d.degree(g, [v]) == 0
    single = d.SimplifiedMultigraph((v, w), (v, w), ((v, w, 1),))
    assert d.gamma(single) == 1
    heavy = d.SimplifiedMultigraph((v, w), (v, w), ((v, w, 3),))
    assert not d.check_convergent(heavy).passed
    with pytest.raises(ValueError):
        d.gamma(heavy)


def test_claw_divergent_with_witness():
    (g,) = d.enumerate_contractions("claw_rr")
    sg = d.simplify(g)
    verdict = d.check_convergent(sg)
    assert not verdict.passed
    assert len(verdict.witness) == 2 and d.degree(sg, verdict.witness) == 0


def test_golden_tables():
    t = d.candelabra_tables()
    assert t["candelabra_cross"] == [0, 1, 2, 1, 1, 0]
    assert t["candelabra_mixed"] == [0, 1, 1, 2, 1, 1, 0]
    assert d.moose_table() == [0, 0, 2, 0, 2, 3, 1, 1, 2, 0]


def test_candelabra_cross_contractions_pass():
    for g in d.enumerate_contractions("candelabra", "candelabra"):
        if g.is_cross:
            assert d.check_convergent(d.simplify(g)).passed


def test_sweep_agreement_and_budget():
    rows = d.sweep()  # raises on any shortcut/exhaustive disagreement
    assert len(rows) == 495
    assert max(r["total_weight"] for r in rows) <= 12
    assert all((r["witness"] is None) == r["passed"] for r in rows)
