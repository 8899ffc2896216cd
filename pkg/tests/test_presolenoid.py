"""Core rule model: parsing, powers, germs, axioms, orientation."""

from fractions import Fraction

import pytest

from solenoids.corpus import corpus_rule
from solenoids.dsl import format_rule, parse_solenoid_file
from solenoids.intlinalg import mat_pow_int
from solenoids.presolenoid import (
    START,
    TERMINAL,
    Germ,
    Letter,
    ParseError,
    ValidationError,
    WordLengthError,
    edge_cover_matrix,
    germ_map,
    graph,
    orientation_check,
    power,
    validate_axioms,
    word_str,
    wrapping_rule,
)

W1 = "edges: a b\nrule a = a^-1 b^-1\nrule b = a^-1 b^-1\n"
W2 = "edges: a b\nrule a = b a\nrule b = b a\n"
W4 = "edges: a b\nrule a = b a b^-1\nrule b = a^-1 b a\n"
DYADIC = "edges: a\nrule a = a a\n"


def rule_of(text):
    return parse_solenoid_file(text)


class TestParser:
    def test_w2_shape(self):
        r = rule_of(W2)
        assert r.edge_ids == ("a", "b")
        assert r.graph.vertices == ("v",)
        assert word_str(r.word("a")) == "b a"
        assert r.vertex_image == {"v": "v"}

    def test_exponent_shorthand(self):
        r = rule_of("edges: a b\nrule a = a^3 b\nrule b = a^-2 b b\n")
        assert word_str(r.word("a")) == "a a a b"
        assert word_str(r.word("b")) == "a^-1 a^-1 b b"

    def test_multi_vertex(self):
        r = corpus_rule("w2sub")
        assert r.graph.vertices == ("u", "w")
        assert r.vertex_image == {"u": "u", "w": "u"}

    def test_comments_and_blanks(self):
        r = rule_of("# heading\n\nedges: a  # trailing\nrule a = a a\n")
        assert r.edge_ids == ("a",)

    def test_cancellation_error(self):
        with pytest.raises(ParseError) as info:
            rule_of("edges: a\nrule a = a a^-1 a\n")
        assert info.value.kind == "cancellation"
        assert "word position 1" in str(info.value)
        assert info.value.line == 2

    def test_unknown_edge_error(self):
        with pytest.raises(ParseError) as info:
            rule_of("edges: a\nrule a = a c\n")
        assert info.value.kind == "unknown-edge"

    def test_continuity_error(self):
        text = "vertices: u w\nedge a: u -> w\nedge b: w -> w\nrule a = b\nrule b = b b\n"
        # word for a starts at w, but the image of u is pinned to w by b? no:
        # image(w) = w from b's rule; a's rule makes image(u) = w and image(w) = w; fine
        r = rule_of(text)
        assert r.vertex_image == {"u": "w", "w": "w"}
        # inconsistent vertex images across two rules
        bad = "vertices: u w\nedge a: u -> w\nedge b: w -> u\nrule a = a b\nrule b = b a\n"
        with pytest.raises(ParseError) as info:
            rule_of(bad)
        assert info.value.kind == "continuity"
        # word that is not a path
        broken = "vertices: u w\nedge a: u -> w\nedge b: w -> u\nrule a = a a\nrule b = b b\n"
        with pytest.raises(ParseError) as info:
            rule_of(broken)
        assert info.value.kind == "continuity"
        assert "word position 1" in str(info.value)

    def test_syntax_error_position(self):
        with pytest.raises(ParseError) as info:
            rule_of("edges: a\nrule a = a a^0\n")
        assert info.value.kind == "syntax"
        assert info.value.line == 2

    def test_missing_rule(self):
        with pytest.raises(ParseError) as info:
            rule_of("edges: a b\nrule a = a b\n")
        assert info.value.kind == "structure"

    def test_roundtrip_through_format(self):
        for name in ("w1", "w2", "w3", "w4", "dyadic", "disjoint", "w2sub"):
            r = corpus_rule(name)
            assert parse_solenoid_file(format_rule(r)) == r


class TestPower:
    def test_identity(self):
        r = rule_of(W2)
        assert power(r, 1) == r

    def test_square_coincidence(self):
        p1 = power(rule_of(W1), 2)
        p2 = power(rule_of(W2), 2)
        assert p1 == p2
        assert word_str(p1.word("a")) == "b a b a"
        assert word_str(p1.word("b")) == "b a b a"

    def test_power_composes(self):
        for name in ("w2", "w4", "dyadic", "w2sub"):
            r = corpus_rule(name)
            assert power(power(r, 2), 2) == power(r, 4)
            assert power(power(r, 3), 2) == power(r, 6)

    def test_cover_matrix_multiplicativity(self):
        for name in ("w1", "w2", "w3", "w4", "dyadic", "disjoint", "w2sub"):
            r = corpus_rule(name)
            h = edge_cover_matrix(r)
            for m in (2, 3):
                assert edge_cover_matrix(power(r, m)) == mat_pow_int(h, m)

    def test_length_budget(self):
        with pytest.raises(WordLengthError) as info:
            power(rule_of(W2), 40, max_letters=1000)
        assert info.value.required > 1000

    def test_vertex_image_composes(self):
        r = corpus_rule("w2sub")
        assert power(r, 2).vertex_image == {"u": "u", "w": "u"}


class TestGerms:
    def test_w2_germ_map(self):
        gm = germ_map(rule_of(W2))
        assert gm[Germ("a", START)] == Germ("b", START)
        assert gm[Germ("a", TERMINAL)] == Germ("a", TERMINAL)
        assert gm[Germ("b", START)] == Germ("b", START)
        assert gm[Germ("b", TERMINAL)] == Germ("a", TERMINAL)

    def test_w4_germ_map(self):
        gm = germ_map(rule_of(W4))
        assert gm[Germ("a", START)] == Germ("b", START)
        assert gm[Germ("a", TERMINAL)] == Germ("b", START)
        assert gm[Germ("b", START)] == Germ("a", TERMINAL)
        assert gm[Germ("b", TERMINAL)] == Germ("a", TERMINAL)

    def test_positive_loop_is_identity_on_germs(self):
        gm = germ_map(rule_of(DYADIC))
        assert gm == {
            Germ("a", START): Germ("a", START),
            Germ("a", TERMINAL): Germ("a", TERMINAL),
        }

    def test_functoriality(self):
        for name in ("w1", "w2", "w4", "w2sub"):
            r = corpus_rule(name)
            gm = germ_map(r)
            for m in (2, 3):
                gm_m = germ_map(power(r, m))
                for germ, img in gm_m.items():
                    cur = germ
                    for _ in range(m):
                        cur = gm[cur]
                    assert cur == img


class TestCoverMatrix:
    def test_frozen(self):
        assert edge_cover_matrix(rule_of(W2)) == ((1, 1), (1, 1))
        assert edge_cover_matrix(rule_of(W4)) == ((1, 2), (2, 1))
        assert edge_cover_matrix(corpus_rule("w3")) == ((65, 24), (7, 67))
        assert edge_cover_matrix(rule_of(DYADIC)) == ((2,),)
        assert edge_cover_matrix(corpus_rule("disjoint")) == ((0, 2), (2, 0))


class TestAxioms:
    def test_w2(self):
        rep = validate_axioms(rule_of(W2))
        assert rep.all_passed
        assert rep.expansion.perron.value.as_fraction() == 2
        assert [x.as_fraction() for x in rep.expansion.lengths] == [1, 1]
        assert rep.flattening.depth == 1
        assert rep.flattening.limit_germs["v"] == (Germ("a", TERMINAL), Germ("b", START))

    def test_w4(self):
        rep = validate_axioms(rule_of(W4))
        assert rep.all_passed
        assert rep.expansion.perron.value.as_fraction() == 3
        assert rep.flattening.depth == 1
        assert rep.flattening.limit_germs["v"] == (Germ("a", TERMINAL), Germ("b", START))

    def test_disjoint_fails_exactly_mixing(self):
        rep = validate_axioms(corpus_rule("disjoint"))
        assert not rep.mixing.passed
        assert rep.markov
        assert rep.nonfolding.passed
        assert rep.expansion.passed
        assert rep.flattening.passed
        assert rep.failed_axioms() == ("mixing",)

    def test_mixing_exponents(self):
        assert validate_axioms(rule_of(W2)).mixing.exponent == 1
        assert validate_axioms(rule_of(W4)).mixing.exponent == 1
        assert validate_axioms(corpus_rule("w2sub")).mixing.exponent == 2

    def test_perron_length_identity(self):
        # total image length of each edge is lambda times its own length
        for name in ("w2", "w4", "w3", "w2sub", "dyadic"):
            r = corpus_rule(name)
            rep = validate_axioms(r)
            h = edge_cover_matrix(r)
            lam = rep.expansion.perron.value
            lengths = rep.expansion.lengths
            n = len(h)
            for j in range(n):
                acc = rep.expansion.perron.field.zero
                for i in range(n):
                    acc = acc + lengths[i] * h[i][j]
                assert acc == lam * lengths[j]

    def test_nonfolding_failure_with_witness(self):
        r = rule_of("edges: a b\nrule a = a b\nrule b = a b^-1\n")
        rep = validate_axioms(r, fold_bound=6)
        assert not rep.nonfolding.passed
        assert rep.nonfolding.witness_turn == frozenset({Germ("a", START)})
        assert rep.nonfolding.witness_iteration is not None

    def test_flattening_failure(self):
        r = rule_of("edges: a b\nrule a = a b a\nrule b = b a b\n")
        rep = validate_axioms(r)
        assert not rep.flattening.passed
        assert rep.flattening.depth is None
        assert rep.failed_axioms() == ("flattening",)

    def test_expansion_not_certified_on_slow_rule(self):
        r = rule_of("vertices: u w\nedge a: u -> w\nedge b: w -> u\nrule a = b\nrule b = a\n")
        rep = validate_axioms(r)
        assert rep.expansion.status == "not_certified"
        assert not rep.all_passed


class TestOrientation:
    def test_frozen_verdicts(self):
        cases = {
            "w1": (False, True),
            "w2": (True, False),
            "w3": (True, False),
            "w4": (False, False),
            "dyadic": (True, False),
            # both hold: s_a = +1, s_b = -1 satisfies the negative system too
            "disjoint": (True, True),
            "w2sub": (True, False),
        }
        for name, (pos, neg) in cases.items():
            v = orientation_check(corpus_rule(name))
            assert (v.positively_oriented, v.negatively_oriented) == (pos, neg), name

    def test_witness_satisfies_constraints(self):
        for name in ("w1", "w2", "w3", "dyadic", "w2sub"):
            r = corpus_rule(name)
            v = orientation_check(r)
            for witness, flip in ((v.positive_witness, 1), (v.negative_witness, -1)):
                if witness is None:
                    continue
                for e in r.edge_ids:
                    for letter in r.words[e]:
                        assert witness[letter.edge] * witness[e] == flip * letter.sign

    def test_negative_square_is_positive(self):
        r = corpus_rule("w1")
        v = orientation_check(power(r, 2))
        assert v.positively_oriented

    def test_relabel_invariance(self):
        r = corpus_rule("w4")
        swapped = parse_solenoid_file("edges: b a\nrule b = a b a^-1\nrule a = b^-1 a b\n")
        v1, v2 = orientation_check(r), orientation_check(swapped)
        assert v1.positively_oriented == v2.positively_oriented
        assert v1.negatively_oriented == v2.negatively_oriented

    def test_reversal_invariance(self):
        for name in ("w1", "w2", "w4", "w2sub", "dyadic"):
            r = corpus_rule(name)
            for eid in r.edge_ids:
                rev = reverse_edge(r, eid)
                v1, v2 = orientation_check(r), orientation_check(rev)
                assert v1.positively_oriented == v2.positively_oriented, (name, eid)
                assert v1.negatively_oriented == v2.negatively_oriented, (name, eid)


def reverse_edge(rule, eid):
    """Re-encode the same rule with one edge's direction reversed."""
    g = rule.graph
    edges = [(e, t, s) if e == eid else (e, s, t) for e, s, t in g.edges]

    def flip(letter):
        return letter.inverse() if letter.edge == eid else letter

    words = {}
    for e in rule.edge_ids:
        w = [flip(l) for l in rule.words[e]]
        if e == eid:
            w = [l.inverse() for l in reversed(w)]
        words[e] = w
    return wrapping_rule(graph(g.vertices, edges), rule.vertex_image, words)


class TestConstruction:
    def test_empty_word_rejected(self):
        g = graph(["v"], [("a", "v", "v")])
        with pytest.raises(ValidationError):
            wrapping_rule(g, {"v": "v"}, {"a": []})

    def test_no_edges_rejected(self):
        with pytest.raises(ValidationError):
            graph(["v"], [])

    def test_duplicate_edge_ids_rejected(self):
        with pytest.raises(ValidationError):
            graph(["v"], [("a", "v", "v"), ("a", "v", "v")])

    def test_bad_endpoint_rejected(self):
        with pytest.raises(ValidationError):
            graph(["v"], [("a", "v", "x")])
