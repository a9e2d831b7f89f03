"""Truncated regularity-structure symbols and Feynman-diagram power counting.

Homogeneities are pairs ``(a, b)`` meaning ``a + b*kappa`` for the small
regularity exponent kappa, which is never given a numerical value.  Ordering
compares ``a`` first, then ``b``, valid for any kappa below 1/100.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cache
from typing import Iterable, Iterator, Literal

from .errors import ConsistencyError

Edge = Literal["I", "Ip"]
Kind = Literal["poly", "bullet", "I", "Ip", "star"]

# Regularity gained by an integration edge; a kernel with gain g has
# parabolic singularity 3 - g.
_GAIN = {"I": 2, "Ip": 1}
_LEAF_HOM = {"noise": (Fraction(-3, 2), -1), "potential": (Fraction(-1), -1),
             "x": (Fraction(1), 0)}
_LEAF_SGN = {"noise": 1, "potential": 1, "x": -1}


@dataclass(frozen=True)
class Tree:
    """A vertex with an optional leaf label and planted children."""

    label: str | None = None
    children: tuple[tuple[Edge, "Tree"], ...] = ()

    def homogeneity(self) -> tuple[Fraction, int]:
        if self.label is not None:
            return _LEAF_HOM[self.label]
        a, b = Fraction(0), 0
        for edge, child in self.children:
            ca, cb = child.homogeneity()
            a += ca + _GAIN[edge]
            b += cb
        return a, b

    def parity(self) -> int:
        if self.label is not None:
            return _LEAF_SGN[self.label]
        s = 1
        for edge, child in self.children:
            s *= child.parity() * (-1 if edge == "Ip" else 1)
        return s

    def times(self, other: "Tree") -> "Tree":
        if self.label is not None or other.label is not None:
            raise ValueError("only rooted products of planted trees can be multiplied")
        return Tree(None, self.children + other.children)

    def noise_count(self) -> int:
        if self.label == "noise":
            return 1
        return sum(c.noise_count() for _, c in self.children)


NOISE = Tree("noise")
POTENTIAL = Tree("potential")
ONE = Tree()
X = Tree("x")


def I(t: Tree) -> Tree:  # noqa: E743
    return Tree(None, (("I", t),))


def Ip(t: Tree) -> Tree:
    return Tree(None, (("Ip", t),))


@dataclass(frozen=True)
class TreeSymbol:
    name: str
    kind: Kind
    homogeneity: tuple[Fraction, int]
    parity: int
    structure: Tree = field(repr=False)
    coproduct: str = "0"
    integration: str | None = None
    derivative: str | None = None

    def recomputed(self) -> tuple[tuple[Fraction, int], int]:
        return self.structure.homogeneity(), self.structure.parity()


def _trees() -> dict[str, Tree]:
    t: dict[str, Tree] = {"noise": NOISE, "potential": POTENTIAL, "one": ONE, "x": X}
    t["lollipop_r"] = Ip(NOISE)
    t["lollipop_b"] = Ip(POTENTIAL)
    t["cherry_rr"] = t["lollipop_r"].times(t["lollipop_r"])
    t["cherry_rb"] = t["lollipop_r"].times(t["lollipop_b"])
    t["cherry_bb"] = t["lollipop_b"].times(t["lollipop_b"])
    t["ip_cherry_rr"] = Ip(t["cherry_rr"])
    t["ip_cherry_rb"] = Ip(t["cherry_rb"])
    t["ip_lollipop_r"] = Ip(t["lollipop_r"])
    t["elk_rrr"] = t["lollipop_r"].times(t["ip_cherry_rr"])
    t["ip_elk_rrr"] = Ip(t["elk_rrr"])
    t["elk_rbr"] = t["lollipop_r"].times(t["ip_cherry_rb"])
    t["elk_rrb"] = t["lollipop_b"].times(t["ip_cherry_rr"])
    t["candelabra"] = t["ip_cherry_rr"].times(t["ip_cherry_rr"])
    t["moose"] = t["lollipop_r"].times(t["ip_elk_rrr"])
    t["claw_rr"] = t["ip_lollipop_r"].times(t["lollipop_r"])
    t["balloon_r"] = I(NOISE)
    t["balloon_b"] = I(POTENTIAL)
    t["icherry_rr"] = I(t["cherry_rr"])
    t["icherry_rb"] = I(t["cherry_rb"])
    t["ielk_rrr"] = I(t["elk_rrr"])
    t["ilollipop_r"] = I(t["lollipop_r"])
    return t


def _h(a: str, b: int) -> tuple[Fraction, int]:
    return Fraction(a), b


# name, kind, |tau| as (a, b), sgn, coproduct minus tau x 1, varpi(I tau), derivative
_TABLE: list[tuple[str, Kind, tuple[Fraction, int], int, str, str | None, str | None]] = [
    ("noise", "bullet", _h("-3/2", -1), 1, "0", "balloon_r", None),
    ("potential", "bullet", _h("-1", -1), 1, "0", "balloon_b", None),
    ("one", "poly", _h("0", 0), 1, "0", "0", "0"),
    ("x", "poly", _h("1", 0), -1, "one (x) x", "0", "one"),
    ("balloon_r", "I", _h("1/2", -1), 1, "one (x) J00(noise)", "0", "lollipop_r"),
    ("icherry_rr", "I", _h("1", -2), 1, "one (x) J00(cherry_rr)", "0", "ip_cherry_rr"),
    ("balloon_b", "I", _h("1", -1), 1, "one (x) J00(potential)", "0", "lollipop_b"),
    ("ielk_rrr", "I", _h("3/2", -3), 1,
     "one (x) J00(elk_rrr) + x (x) J01(elk_rrr)", "0", "ip_elk_rrr"),
    ("icherry_rb", "I", _h("3/2", -2), 1,
     "one (x) J00(cherry_rb) + x (x) J01(cherry_rb)", "0", "ip_cherry_rb"),
    ("ilollipop_r", "I", _h("3/2", -1), -1,
     "one (x) J00(lollipop_r) + x (x) J01(lollipop_r)", "0", "ip_lollipop_r"),
    ("lollipop_r", "Ip", _h("-1/2", -1), -1, "0", "ilollipop_r", None),
    ("ip_cherry_rr", "Ip", _h("0", -2), -1, "0", "0", None),
    ("lollipop_b", "Ip", _h("0", -1), -1, "0", "0", None),
    ("ip_elk_rrr", "Ip", _h("1/2", -3), -1, "one (x) J01(elk_rrr)", "0", None),
    ("ip_cherry_rb", "Ip", _h("1/2", -2), -1, "one (x) J01(cherry_rb)", "0", None),
    ("ip_lollipop_r", "Ip", _h("1/2", -1), 1, "one (x) J01(lollipop_r)", "0", None),
    ("cherry_rr", "star", _h("-1", -2), 1, "0", "icherry_rr", None),
    ("cherry_rb", "star", _h("-1/2", -2), 1, "0", "icherry_rb", None),
    ("elk_rrr", "star", _h("-1/2", -3), 1, "0", "ielk_rrr", None),
    ("candelabra", "star", _h("0", -4), 1, "0", "0", None),
    ("moose", "star", _h("0", -4), 1, "lollipop_r (x) J01(elk_rrr)", "0", None),
    ("elk_rbr", "star", _h("0", -3), 1, "lollipop_r (x) J01(cherry_rb)", "0", None),
    ("elk_rrb", "star", _h("0", -3), 1, "0", "0", None),
    ("cherry_bb", "star", _h("0", -2), 1, "0", "0", None),
    ("claw_rr", "star", _h("0", -2), -1, "lollipop_r (x) J01(lollipop_r)", "0", None),
]


@cache
def _symbols() -> dict[str, TreeSymbol]:
    trees = _trees()
    return {
        name: TreeSymbol(name, kind, hom, sgn, trees[name], cop, integ, der)
        for name, kind, hom, sgn, cop, integ, der in _TABLE
    }


def symbol_table() -> list[TreeSymbol]:
    return list(_symbols().values())


def symbol(name: str) -> TreeSymbol:
    try:
        return _symbols()[name]
    except KeyError:
        raise KeyError(f"unknown symbol {name!r}") from None


def parity(t: TreeSymbol | str) -> int:
    s = symbol(t) if isinstance(t, str) else t
    return s.structure.parity()


# Table of the truncated product on the integrated and polynomial symbols.
_PRODUCT_ORDER = ["lollipop_r", "ip_cherry_rr", "lollipop_b", "one",
                  "ip_elk_rrr", "ip_cherry_rb", "ip_lollipop_r", "x"]
_PRODUCT_ROWS = [
    ["cherry_rr", "elk_rrr", "cherry_rb", "lollipop_r", "moose", "elk_rbr", "claw_rr", None],
    ["elk_rrr", "candelabra", "elk_rrb", "ip_cherry_rr", None, None, None, None],
    ["cherry_rb", "elk_rrb", "cherry_bb", "lollipop_b", None, None, None, None],
    ["lollipop_r", "ip_cherry_rr", "lollipop_b", "one", "ip_elk_rrr", "ip_cherry_rb",
     "ip_lollipop_r", "x"],
    ["moose", None, None, "ip_elk_rrr", None, None, None, None],
    ["elk_rbr", None, None, "ip_cherry_rb", None, None, None, None],
    ["claw_rr", None, None, "ip_lollipop_r", None, None, None, None],
    [None, None, None, "x", None, None, None, None],
]


def product_operands() -> list[str]:
    return list(_PRODUCT_ORDER)


def product(t1: TreeSymbol | str, t2: TreeSymbol | str) -> TreeSymbol | None:
    """Truncated star product; None stands for zero."""
    a = t1.name if isinstance(t1, TreeSymbol) else t1
    b = t2.name if isinstance(t2, TreeSymbol) else t2
    for n in (a, b):
        if n not in _PRODUCT_ORDER:
            raise ValueError(f"{n!r} is not an admissible product operand")
    out = _PRODUCT_ROWS[_PRODUCT_ORDER.index(a)][_PRODUCT_ORDER.index(b)]
    return None if out is None else symbol(out)


# --------------------------------------------------------------------------
# Contractions and the simplified multigraph
# --------------------------------------------------------------------------

Vertex = tuple[int, tuple[int, ...]]  # (tree index, path of child indices)


@dataclass(frozen=True)
class ContractionGraph:
    trees: tuple[str, ...]
    roots: tuple[Vertex, ...]
    internal: tuple[Vertex, ...]
    edges: tuple[tuple[Vertex, Vertex, Edge], ...]  # parent, child, decoration
    noise: tuple[Vertex, ...]
    potential: tuple[Vertex, ...]
    matching: tuple[tuple[Vertex, Vertex], ...]

    def parent(self, v: Vertex) -> tuple[Vertex, Edge] | None:
        for p, c, e in self.edges:
            if c == v:
                return p, e
        return None

    @property
    def is_cross(self) -> bool:
        return all(a[0] != b[0] for a, b in self.matching)


def _walk(tree: Tree, ti: int, path: tuple[int, ...], out: dict) -> None:
    v = (ti, path)
    if tree.label == "noise":
        out["noise"].append(v)
    elif tree.label == "potential":
        out["potential"].append(v)
    elif tree.label is None:
        if path:
            out["internal"].append(v)
    for i, (edge, child) in enumerate(tree.children):
        out["edges"].append((v, (ti, path + (i,)), edge))
        _walk(child, ti, path + (i,), out)


def _matchings(items: list) -> Iterator[list[tuple]]:
    if not items:
        yield []
        return
    first, rest = items[0], items[1:]
    for i, other in enumerate(rest):
        for m in _matchings(rest[:i] + rest[i + 1:]):
            yield [(first, other)] + m


def enumerate_contractions(t1: TreeSymbol | str, t2: TreeSymbol | str | None = None
                           ) -> list[ContractionGraph]:
    """All pairings of the noise leaves of one tree (expectation) or two trees (covariance)."""
    syms = [symbol(t) if isinstance(t, str) else t for t in (t1, t2) if t is not None]
    for s in syms:
        if s.kind not in ("star", "bullet", "Ip"):
            raise ValueError(f"{s.name} has kind {s.kind}; contractions need star/bullet trees")
    acc: dict = {"noise": [], "potential": [], "internal": [], "edges": []}
    for i, s in enumerate(syms):
        _walk(s.structure, i, (), acc)
    roots = tuple((i, ()) for i in range(len(syms)))
    base = dict(
        trees=tuple(s.name for s in syms), roots=roots, internal=tuple(acc["internal"]),
        edges=tuple(acc["edges"]), noise=tuple(acc["noise"]), potential=tuple(acc["potential"]),
    )
    if len(acc["noise"]) % 2:
        return []
    return [ContractionGraph(matching=tuple(m), **base) for m in _matchings(list(acc["noise"]))]


@dataclass(frozen=True)
class SimplifiedMultigraph:
    vertices: tuple[Vertex, ...]
    roots: tuple[Vertex, ...]
    edges: tuple[tuple[Vertex, Vertex, int], ...]

    def Q(self, u: Vertex, v: Vertex) -> int:
        return sum(w for a, b, w in self.edges if {a, b} == {u, v} and a != b)

    @property
    def total_weight(self) -> int:
        return sum(w for a, b, w in self.edges if a != b)

    def q_matrix(self) -> dict[frozenset, int]:
        q: dict[frozenset, int] = {}
        for a, b, w in self.edges:
            if a != b:
                key = frozenset((a, b))
                q[key] = q.get(key, 0) + w
        return q


def simplify(g: ContractionGraph) -> SimplifiedMultigraph:
    """Drop potential leaves, turn contracted pairs into parent-parent edges.

    A contracted pair whose legs carry gains g1, g2 becomes an edge of weight
    3 - g1 - g2 between the leaves' parents (1 for two I' legs); self-loops
    are dropped.  Edges between non-leaf vertices keep weight 3 - gain.
    """
    leafset = set(g.noise) | set(g.potential)
    vertices = g.roots + g.internal
    edges: list[tuple[Vertex, Vertex, int]] = []
    for p, c, e in g.edges:
        if c not in leafset:
            edges.append((p, c, 3 - _GAIN[e]))
    for a, b in g.matching:
        pa, pb = g.parent(a), g.parent(b)
        va, ga = (pa[0], _GAIN[pa[1]]) if pa else (a, 0)
        vb, gb = (pb[0], _GAIN[pb[1]]) if pb else (b, 0)
        w = 3 - ga - gb
        if va != vb and w > 0:
            edges.append((va, vb, w))
    return SimplifiedMultigraph(vertices, g.roots, tuple(edges))


def degree(g: SimplifiedMultigraph, subset: Iterable[Vertex]) -> int:
    s = list(dict.fromkeys(subset))
    if not s:
        raise ValueError("degree of the empty vertex set is undefined")
    for v in s:
        if v not in g.vertices:
            raise ValueError(f"{v} is not a vertex of the graph")
    q = g.q_matrix()
    inner = sum(q.get(frozenset(p), 0) for p in itertools.combinations(s, 2))
    return 3 * (len(s) - 1) - inner


@dataclass(frozen=True)
class ConvergenceVerdict:
    passed: bool
    witness: tuple[Vertex, ...] | None = None
    shortcut_passed: bool | None = None


def _exhaustive(g: SimplifiedMultigraph) -> tuple[Vertex, ...] | None:
    for r in range(2, len(g.vertices) + 1):
        for s in itertools.combinations(g.vertices, r):
            if degree(g, s) <= 0:
                return s
    return None


def shortcut_conditions(g: SimplifiedMultigraph) -> bool:
    """Pair, triangle and four-vertex conditions, plus the global weight budget."""
    q = g.q_matrix()

    def Q(a, b):
        return q.get(frozenset((a, b)), 0)

    V = g.vertices
    if any(Q(a, b) > 2 for a, b in itertools.combinations(V, 2)):
        return False
    if any(Q(a, b) + Q(b, c) + Q(a, c) > 5 for a, b, c in itertools.combinations(V, 3)):
        return False
    for quad in itertools.combinations(V, 4):
        total = sum(Q(a, b) for a, b in itertools.combinations(quad, 2))
        hit = False
        for a, b, c, d in itertools.permutations(quad):
            if Q(a, b) + Q(b, c) + Q(c, d) == 6 or Q(a, b) + Q(a, c) + Q(a, d) == 6:
                hit = True
                break
        if hit and total > 8:
            return False
    # Subsets of five or more vertices: degree is at least 12 - weight.
    if len(V) >= 5:
        if g.total_weight > 12:
            return False
        for five in itertools.combinations(V, 5):
            if sum(Q(a, b) for a, b in itertools.combinations(five, 2)) >= 12:
                return False
    return True


def check_convergent(g: SimplifiedMultigraph) -> ConvergenceVerdict:
    """Exhaustive positivity of deg over all subsets of size >= 2, cross-checked."""
    witness = _exhaustive(g)
    short = shortcut_conditions(g)
    if short != (witness is None):
        raise ConsistencyError(
            f"shortcut verdict {short} disagrees with exhaustive check (witness {witness})"
        )
    return ConvergenceVerdict(witness is None, witness, short)


def gamma(g: SimplifiedMultigraph) -> int:
    if not check_convergent(g).passed:
        raise ValueError("gamma is only defined for convergent graphs")
    others = [v for v in g.vertices if v not in g.roots]
    best = None
    for r in range(len(others) + 1):
        for s in itertools.combinations(others, r):
            val = 3 - degree(g, g.roots + s)
            best = val if best is None else max(best, val)
    return best


def gamma_table(g: SimplifiedMultigraph, subsets: Iterable[Iterable[Vertex]]) -> list[int]:
    """deg(roots + subset) - 3 for each listed subset of non-root vertices."""
    return [degree(g, g.roots + tuple(s)) - 3 for s in subsets]


# --------------------------------------------------------------------------
# Named contractions of the fourth-chaos trees
# --------------------------------------------------------------------------

# Candelabra vertices: two roots, two cherry roots per copy.
CANDELABRA_V = {"C": (0, ()), "L": (0, (0,)), "R": (0, (1,)),
                "D": (1, ()), "L1": (1, (0,)), "R1": (1, (1,))}
# Moose vertices: root, middle vertex, top vertex for each copy.
MOOSE_V = {"L1": (0, ()), "L2": (0, (1,)), "L3": (0, (1, 1)),
           "R1": (1, ()), "R2": (1, (1,)), "R3": (1, (1, 1))}


def contraction_by_parents(t: str, pairs: list[tuple[str, str]],
                           names: dict[str, Vertex]) -> ContractionGraph:
    """Find the contraction whose pairs join leaves with the given parent names."""
    want = sorted(tuple(sorted((names[a], names[b]))) for a, b in pairs)
    for g in enumerate_contractions(t, t):
        got = sorted(tuple(sorted((g.parent(a)[0], g.parent(b)[0]))) for a, b in g.matching)
        if got == want:
            return g
    raise ValueError("no contraction with those parent pairs")


def candelabra_tables() -> dict[str, list[int]]:
    """Degree tables of the two candelabra covariance contractions."""
    V = CANDELABRA_V
    gB = simplify(contraction_by_parents(
        "candelabra", [("R", "L1"), ("L", "L1"), ("R", "R1"), ("L", "R1")], V))
    subsB = [[], ["L"], ["L", "R"], ["L", "L1"], ["L", "R", "L1"], ["L", "R", "L1", "R1"]]
    gD = simplify(contraction_by_parents(
        "candelabra", [("R", "L1"), ("L", "R"), ("R1", "L1"), ("L", "R1")], V))
    top = ["L", "R", "L1", "R1"]
    subsD = [[], [0], [0, 1], [0, 2], [0, 3], [0, 1, 2], [0, 1, 2, 3]]
    return {
        "candelabra_cross": gamma_table(gB, [[V[n] for n in s] for s in subsB]),
        "candelabra_mixed": gamma_table(gD, [[V[top[i]] for i in s] for s in subsD]),
    }


MOOSE_SUBSETS = [
    ["L1", "R1"], ["L1", "L2", "R1"], ["L1", "L3", "R1"], ["L1", "L2", "R1", "R2"],
    ["L1", "L3", "R1", "R2"], ["L1", "L3", "R1", "R3"], ["L1", "L2", "L3", "R1"],
    ["L1", "L2", "L3", "R1", "R2"], ["L1", "L2", "L3", "R1", "R3"],
    ["L1", "L2", "L3", "R1", "R2", "R3"],
]


def moose_cross_family() -> list[ContractionGraph]:
    """Cross-only contractions of moose with moose, excluding root-leaf to root-leaf."""
    V = MOOSE_V
    out = []
    for g in enumerate_contractions("moose", "moose"):
        if not g.is_cross:
            continue
        pairs = {(g.parent(a)[0], g.parent(b)[0]) for a, b in g.matching}
        pairs |= {(b, a) for a, b in pairs}
        if (V["L1"], V["R1"]) in pairs:
            continue
        out.append(g)
    return out


def moose_table() -> list[int]:
    """Minimum over the family of deg - 3 for each listed vertex subset."""
    graphs = [simplify(g) for g in moose_cross_family()]
    vals = []
    for names in MOOSE_SUBSETS:
        sub = [MOOSE_V[n] for n in names]
        vals.append(min(degree(g, sub) - 3 for g in graphs))
    return vals


def sweep() -> list[dict]:
    """Convergence check of every contraction of every ordered pair of star trees."""
    stars = [s.name for s in symbol_table() if s.kind == "star"]
    rows = []
    for a, b in itertools.combinations_with_replacement(stars, 2):
        for i, g in enumerate(enumerate_contractions(a, b)):
            sg = simplify(g)
            v = check_convergent(sg)
            rows.append({"t1": a, "t2": b, "index": i, "passed": v.passed,
                         "witness": v.witness, "total_weight": sg.total_weight})
    return rows
