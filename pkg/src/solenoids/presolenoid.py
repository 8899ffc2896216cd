"""Finite graphs carrying expanding wrapping rules.

A wrapping rule sends every vertex to a vertex and every edge to an edge
path, written as a word in signed letters e / e^-1.  This module holds the
rule model and its validation, iterated substitution (powers of the rule),
the germ calculus at vertices (half-edge germs, turns), the edge-covering
matrix, the five structural axiom checks, and the orientation decision.

Conventions used throughout the package:
  - a positive letter traverses the edge from source to target;
  - the germ map sends the start germ of e to the germ carried by the first
    letter of the word for e, and the terminal germ to the germ carried by
    the last letter, with start/terminal swapped on negative letters;
  - a turn is the unordered pair {arrival germ, departure germ} read at an
    interior junction of a word; a one-element pair is a degenerate turn and
    signals a fold.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

from .exact import PerronData, perron_data

START = "start"
TERMINAL = "terminal"


class SolenoidError(Exception):
    """Base class for all input and analysis errors in this package."""


class ParseError(SolenoidError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = ""
        if line is not None:
            where = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + where)


class ValidationError(SolenoidError):
    """The input violates a structural invariant."""


class ConsistencyError(SolenoidError):
    """Two independent computation routes disagreed; this is a bug, not bad input."""


class WordLengthError(SolenoidError):
    def __init__(self, required: int, budget: int):
        self.required = required
        self.budget = budget
        super().__init__(
            f"substituted words need {required} letters, over the budget of {budget}"
        )


class Letter(NamedTuple):
    edge: str
    sign: int

    def inverse(self) -> "Letter":
        return Letter(self.edge, -self.sign)

    def __str__(self):
        return self.edge if self.sign > 0 else f"{self.edge}^-1"


class Germ(NamedTuple):
    """Half-edge germ: the direction along `edge` seen from one endpoint."""

    edge: str
    end: str  # START or TERMINAL

    def __str__(self):
        return f"{self.edge}.{self.end}"


def make_turn(g1: Germ, g2: Germ) -> frozenset:
    return frozenset((g1, g2))


def is_degenerate(turn: frozenset) -> bool:
    return len(turn) == 1


@dataclass(frozen=True)
class Graph:
    vertices: tuple
    edges: tuple  # entries (edge id, source vertex, target vertex)

    @property
    def edge_ids(self) -> tuple:
        return tuple(e[0] for e in self.edges)

    def source(self, edge_id: str) -> str:
        return self._lookup(edge_id)[1]

    def target(self, edge_id: str) -> str:
        return self._lookup(edge_id)[2]

    def _lookup(self, edge_id: str):
        for e in self.edges:
            if e[0] == edge_id:
                return e
        raise KeyError(edge_id)

    def edge_index(self, edge_id: str) -> int:
        return self.edge_ids.index(edge_id)


def graph(vertices, edges) -> Graph:
    vertices = tuple(str(v) for v in vertices)
    edges = tuple((str(e), str(s), str(t)) for e, s, t in edges)
    if not edges:
        raise ValidationError("a graph needs at least one edge")
    ids = [e[0] for e in edges]
    if len(set(ids)) != len(ids):
        raise ValidationError("duplicate edge ids")
    if len(set(vertices)) != len(vertices):
        raise ValidationError("duplicate vertex ids")
    if set(ids) & set(vertices):
        raise ValidationError("edge ids and vertex ids must not collide")
    for e, s, t in edges:
        if s not in vertices or t not in vertices:
            raise ValidationError(f"edge {e} uses an undeclared vertex")
    return Graph(vertices=vertices, edges=edges)


def letter_start(g: Graph, letter: Letter) -> str:
    return g.source(letter.edge) if letter.sign > 0 else g.target(letter.edge)


def letter_end(g: Graph, letter: Letter) -> str:
    return g.target(letter.edge) if letter.sign > 0 else g.source(letter.edge)


def germ_vertex(g: Graph, germ: Germ) -> str:
    return g.source(germ.edge) if germ.end == START else g.target(germ.edge)


def germs_of(g: Graph) -> tuple:
    out = []
    for e in g.edge_ids:
        out.append(Germ(e, START))
        out.append(Germ(e, TERMINAL))
    return tuple(out)


class WrappingRule:
    """A graph map: vertex images plus one edge path per edge.

    Instances are immutable by convention and always structurally valid;
    build them through `wrapping_rule` or the parser.
    """

    __slots__ = ("graph", "vertex_image", "words")

    def __init__(self, graph: Graph, vertex_image, words):
        self.graph = graph
        self.vertex_image = dict(vertex_image)
        self.words = {e: tuple(w) for e, w in words.items()}

    @property
    def edge_ids(self) -> tuple:
        return self.graph.edge_ids

    def word(self, edge_id: str) -> tuple:
        return self.words[edge_id]

    def __eq__(self, other):
        if not isinstance(other, WrappingRule):
            return NotImplemented
        return (
            self.graph == other.graph
            and self.vertex_image == other.vertex_image
            and self.words == other.words
        )

    def __repr__(self):
        rules = "; ".join(f"{e} -> {word_str(self.words[e])}" for e in self.edge_ids)
        return f"WrappingRule({rules})"


def word_str(word) -> str:
    return " ".join(str(letter) for letter in word)


def wrapping_rule(g: Graph, vertex_image, words) -> WrappingRule:
    vertex_image = {str(k): str(v) for k, v in vertex_image.items()}
    for v in g.vertices:
        if v not in vertex_image:
            raise ValidationError(f"vertex {v} has no image")
        if vertex_image[v] not in g.vertices:
            raise ValidationError(f"vertex image of {v} is not a vertex")
    norm = {}
    for e in g.edge_ids:
        if e not in words:
            raise ValidationError(f"edge {e} has no word")
        word = tuple(Letter(str(l[0]), int(l[1])) for l in words[e])
        if not word:
            raise ValidationError(f"edge {e} has an empty word")
        for letter in word:
            if letter.edge not in g.edge_ids:
                raise ValidationError(f"word for {e} uses unknown edge {letter.edge}")
            if letter.sign not in (1, -1):
                raise ValidationError("letter signs must be +1 or -1")
        for k in range(len(word) - 1):
            # positions are 0-based; k+1 names the second letter of the pair
            if word[k].edge == word[k + 1].edge and word[k].sign == -word[k + 1].sign:
                raise ValidationError(
                    f"adjacent cancellation in word for {e} at word position {k + 1}"
                )
            if letter_end(g, word[k]) != letter_start(g, word[k + 1]):
                raise ValidationError(
                    f"word for {e} is not a path at word position {k + 1}"
                )
        if letter_start(g, word[0]) != vertex_image[g.source(e)]:
            raise ValidationError(f"word for {e} does not start at the image of its source")
        if letter_end(g, word[-1]) != vertex_image[g.target(e)]:
            raise ValidationError(f"word for {e} does not end at the image of its target")
        norm[e] = word
    extra = set(words) - set(g.edge_ids)
    if extra:
        raise ValidationError(f"words given for unknown edges: {sorted(extra)}")
    return WrappingRule(g, vertex_image, norm)


def wedge_rule(word_map) -> WrappingRule:
    """Convenience constructor: all edges are loops at a single vertex "v".

    `word_map` maps edge id to a word written as [(edge, sign), ...].
    """
    g = graph(["v"], [(e, "v", "v") for e in word_map])
    return wrapping_rule(g, {"v": "v"}, word_map)


# --- substitution ----------------------------------------------------------


def substitute_word(rule: WrappingRule, word) -> tuple:
    """Image of an edge path under the rule (no validity checks)."""
    out = []
    for letter in word:
        base = rule.words[letter.edge]
        if letter.sign > 0:
            out.extend(base)
        else:
            out.extend(l.inverse() for l in reversed(base))
    return tuple(out)


def power(rule: WrappingRule, m: int, max_letters: int = 10**7) -> WrappingRule:
    """The m-fold substitution rule h^m; validates the result."""
    if m < 1:
        raise ValueError("power requires m >= 1")
    from .intlinalg import mat_pow_int  # local to avoid import cycles at module load

    h = edge_cover_matrix(rule)
    hm = mat_pow_int(h, m)
    required = max(sum(hm[i][j] for i in range(len(hm))) for j in range(len(hm)))
    if required > max_letters:
        raise WordLengthError(required, max_letters)
    words = {e: rule.words[e] for e in rule.edge_ids}
    for _ in range(m - 1):
        words = {e: substitute_word(rule, w) for e, w in words.items()}
    image = {v: v for v in rule.graph.vertices}
    for _ in range(m):
        image = {v: rule.vertex_image[image[v]] for v in image}
    return wrapping_rule(rule.graph, image, words)


def flip_edges(rule: WrappingRule, edges) -> WrappingRule:
    """Conjugate the rule by reversing the orientation of the given edges.

    A letter x^s becomes x^{-s} wherever x is flipped, and the word of a
    flipped edge is additionally reversed with all signs negated.
    """
    flip = frozenset(edges)
    unknown = flip - set(rule.edge_ids)
    if unknown:
        raise ValueError(f"unknown edges: {sorted(unknown)}")

    def relabel(word):
        return tuple(
            Letter(l.edge, -l.sign if l.edge in flip else l.sign) for l in word
        )

    words = {}
    for e in rule.edge_ids:
        w = relabel(rule.words[e])
        if e in flip:
            w = tuple(l.inverse() for l in reversed(w))
        words[e] = w
    edges_spec = [
        (e, t, s) if e in flip else (e, s, t)
        for e, s, t in ((e, rule.graph.source(e), rule.graph.target(e)) for e in rule.edge_ids)
    ]
    g = graph(rule.graph.vertices, edges_spec)
    return wrapping_rule(g, dict(rule.vertex_image), words)


# --- germ calculus ---------------------------------------------------------


def germ_map(rule: WrappingRule) -> dict:
    """The derivative of the rule on half-edge germs."""
    out = {}
    for e in rule.edge_ids:
        word = rule.words[e]
        first, last = word[0], word[-1]
        out[Germ(e, START)] = Germ(first.edge, START if first.sign > 0 else TERMINAL)
        out[Germ(e, TERMINAL)] = Germ(last.edge, TERMINAL if last.sign > 0 else START)
    return out


def map_turn(gm: dict, turn: frozenset) -> frozenset:
    return frozenset(gm[g] for g in turn)


def arrival_germ(letter: Letter) -> Germ:
    """Direction pointing back along the just-traversed letter."""
    return Germ(letter.edge, TERMINAL if letter.sign > 0 else START)


def departure_germ(letter: Letter) -> Germ:
    """Direction pointing forward along the next letter."""
    return Germ(letter.edge, START if letter.sign > 0 else TERMINAL)


def word_turn_counts(word) -> dict:
    """Multiset of turns at the interior junctions of a word."""
    counts = {}
    for k in range(len(word) - 1):
        t = make_turn(arrival_germ(word[k]), departure_germ(word[k + 1]))
        counts[t] = counts.get(t, 0) + 1
    return counts


def rule_turns(rule: WrappingRule) -> set:
    out = set()
    for e in rule.edge_ids:
        out.update(word_turn_counts(rule.words[e]))
    return out


# --- edge cover matrix -----------------------------------------------------


def edge_cover_matrix(rule: WrappingRule) -> tuple:
    """H[i][j] = occurrences of edge i (either sign) in the word for edge j."""
    ids = rule.edge_ids
    index = {e: i for i, e in enumerate(ids)}
    n = len(ids)
    h = [[0] * n for _ in range(n)]
    for j, e in enumerate(ids):
        for letter in rule.words[e]:
            h[index[letter.edge]][j] += 1
    return tuple(tuple(row) for row in h)


# --- axiom checks ----------------------------------------------------------


@dataclass
class MixingResult:
    passed: bool
    exponent: int | None  # minimal m with H^m strictly positive


@dataclass
class ExpansionResult:
    passed: bool
    status: str  # "pass" or "not_certified"
    perron: PerronData
    lengths: tuple | None  # positive left eigenvector, largest entry 1


@dataclass
class NonfoldingResult:
    passed: bool
    witness_turn: frozenset | None
    witness_iteration: int | None
    brute_bound: int
    brute_agrees: bool


@dataclass
class FlatteningResult:
    passed: bool
    depth: int | None
    limit_germs: dict | None  # vertex -> sorted germ pair


@dataclass
class AxiomReport:
    markov: bool
    nonfolding: NonfoldingResult
    mixing: MixingResult
    expansion: ExpansionResult
    flattening: FlatteningResult

    @property
    def all_passed(self) -> bool:
        return (
            self.markov
            and self.nonfolding.passed
            and self.mixing.passed
            and self.expansion.passed
            and self.flattening.passed
        )

    def failed_axioms(self) -> tuple:
        out = []
        if not self.expansion.passed:
            out.append("expansion")
        if not self.nonfolding.passed:
            out.append("nonfolding")
        if not self.markov:
            out.append("markov")
        if not self.mixing.passed:
            out.append("mixing")
        if not self.flattening.passed:
            out.append("flattening")
        return tuple(out)


def _mixing_check(h) -> MixingResult:
    n = len(h)
    bound = (n - 1) * (n - 1) + 1  # Wielandt exponent bound
    cur = tuple(tuple(1 if x else 0 for x in row) for row in h)
    base = cur
    for m in range(1, bound + 1):
        if all(all(x for x in row) for row in cur):
            return MixingResult(passed=True, exponent=m)
        cur = tuple(
            tuple(1 if any(cur[i][k] and base[k][j] for k in range(n)) else 0 for j in range(n))
            for i in range(n)
        )
    return MixingResult(passed=False, exponent=None)


def _expansion_check(h) -> ExpansionResult:
    pd = perron_data(h)
    ok = (pd.value - 1).sign() > 0
    lengths = None
    if ok and pd.left is not None and all(x.sign() > 0 for x in pd.left):
        lengths = pd.left
    status = "pass" if (ok and lengths is not None) else "not_certified"
    return ExpansionResult(passed=status == "pass", status=status, perron=pd, lengths=lengths)


def _raw_power_words(rule: WrappingRule, m: int, letter_budget: int):
    """Substituted words without validation, for the brute fold scan."""
    words = dict(rule.words)
    for _ in range(m - 1):
        words = {e: substitute_word(rule, w) for e, w in words.items()}
        if sum(len(w) for w in words.values()) > letter_budget:
            break
    return words


def _brute_fold_scan(rule: WrappingRule, bound: int, letter_budget: int = 200_000) -> bool:
    """True when some iterate's raw word shows an adjacent cancellation."""
    words = dict(rule.words)
    for _ in range(bound):
        for w in words.values():
            for k in range(len(w) - 1):
                if w[k].edge == w[k + 1].edge and w[k].sign == -w[k + 1].sign:
                    return True
        if sum(len(w) for w in words.values()) > letter_budget:
            break
        words = {e: substitute_word(rule, w) for e, w in words.items()}
    return False


def _nonfolding_check(rule: WrappingRule, fold_bound: int) -> NonfoldingResult:
    gm = germ_map(rule)
    seen = set(rule_turns(rule))
    frontier = set(seen)
    witness = None
    iteration = 0
    for t in seen:
        if is_degenerate(t):
            witness = t
    while frontier and witness is None:
        iteration += 1
        nxt = {map_turn(gm, t) for t in frontier}
        for t in nxt:
            if is_degenerate(t):
                witness = t
                break
        frontier = nxt - seen
        seen |= frontier
    closure_ok = witness is None
    brute_found = _brute_fold_scan(rule, fold_bound)
    if closure_ok and brute_found:
        raise ConsistencyError(
            "turn closure reports no fold but brute-force expansion found one"
        )
    # a bounded scan cannot contradict a closure failure, only a pass
    return NonfoldingResult(
        passed=closure_ok,
        witness_turn=witness,
        witness_iteration=None if closure_ok else iteration,
        brute_bound=fold_bound,
        brute_agrees=True,
    )


def _flattening_check(rule: WrappingRule) -> FlatteningResult:
    g = rule.graph
    gm = germ_map(rule)
    per_vertex = {v: frozenset(gr for gr in germs_of(g) if germ_vertex(g, gr) == v) for v in g.vertices}
    per_vertex = {v: s for v, s in per_vertex.items() if s}
    images = dict(per_vertex)
    for d in range(1, 2 * len(g.edges) + 1):
        images = {v: frozenset(gm[gr] for gr in s) for v, s in images.items()}
        sizes = [len(s) for s in images.values()]
        if all(size == 2 for size in sizes):
            limit = {v: tuple(sorted(s)) for v, s in images.items()}
            return FlatteningResult(passed=True, depth=d, limit_germs=limit)
        if any(size < 2 for size in sizes):
            break  # image sizes only ever shrink
    return FlatteningResult(passed=False, depth=None, limit_germs=None)


def validate_axioms(rule: WrappingRule, fold_bound: int = 5) -> AxiomReport:
    """Check the five structural axioms; failures are report entries."""
    h = edge_cover_matrix(rule)
    return AxiomReport(
        markov=True,  # guaranteed by the representation: vertex images are vertices
        nonfolding=_nonfolding_check(rule, fold_bound),
        mixing=_mixing_check(h),
        expansion=_expansion_check(h),
        flattening=_flattening_check(rule),
    )


# --- orientation -----------------------------------------------------------


@dataclass
class OrientationVerdict:
    positively_oriented: bool
    negatively_oriented: bool
    positive_witness: dict | None
    negative_witness: dict | None

    @property
    def orientable(self) -> bool:
        return self.positively_oriented or self.negatively_oriented


def _parity_solve(n: int, constraints):
    """Assign s in {+-1}^n with s_i*s_j = rhs for every (i, j, rhs); or None."""
    parent = list(range(n))
    parity = [0] * n  # parity of node relative to its parent

    def find_full(x):
        root = x
        acc = 0
        while parent[root] != root:
            acc ^= parity[root]
            root = parent[root]
        return root, acc

    for i, j, rhs in constraints:
        want = 0 if rhs == 1 else 1
        ri, pi = find_full(i)
        rj, pj = find_full(j)
        if ri == rj:
            if pi ^ pj != want:
                return None
        else:
            parent[ri] = rj
            parity[ri] = pi ^ pj ^ want
    signs = []
    for i in range(n):
        _, p = find_full(i)
        signs.append(-1 if p else 1)
    return signs


def orientation_check(rule: WrappingRule) -> OrientationVerdict:
    ids = rule.edge_ids
    index = {e: i for i, e in enumerate(ids)}
    occurrences = []
    for e in ids:
        for letter in rule.words[e]:
            occurrences.append((index[letter.edge], index[e], letter.sign))
    pos = _parity_solve(len(ids), [(i, j, s) for i, j, s in occurrences])
    neg = _parity_solve(len(ids), [(i, j, -s) for i, j, s in occurrences])
    return OrientationVerdict(
        positively_oriented=pos is not None,
        negatively_oriented=neg is not None,
        positive_witness=None if pos is None else {e: pos[index[e]] for e in ids},
        negative_witness=None if neg is None else {e: neg[index[e]] for e in ids},
    )
