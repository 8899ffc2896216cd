"""Metric model: frozen Perron data, a letter-expansion oracle, exact decay.

The oracle expands wrapping words as plain letter lists by textual
substitution, nothing shared with the package beyond the word tables.
The k-th depth-n interval of an edge must map onto the k-th letter of
the expanded word, with matching orientation, so subdivision geometry is
checked letter for letter against the oracle.  Distances on wedges are
re-derived from the two-route formula (stay on the edge, or go through
the vertex both ways).
"""

import random
from fractions import Fraction

import pytest

from solenoids.corpus import corpus_rule
from solenoids.pl_model import (
    BranchAmbiguity,
    GraphPoint,
    PLRealization,
    decay_checks,
    eval_h,
    inverse_branch,
    metric_D,
    random_point,
    random_solenoid_point,
    solenoid_point,
)
from solenoids.presolenoid import ValidationError


# --- oracles -------------------------------------------------------------------


def oracle_expand(rule, edge, n):
    """Letters of the n-fold substituted word for `edge`, as (edge, sign)."""
    word = [(edge, 1)]
    for _ in range(n):
        out = []
        for e, s in word:
            base = [(l.edge, l.sign) for l in rule.words[e]]
            if s > 0:
                out.extend(base)
            else:
                out.extend((f, -t) for f, t in reversed(base))
        word = out
    return word


def oracle_wedge_distance(p, p1, p2):
    """Geodesic distance on a one-vertex graph: along the edge, or via the
    vertex from whichever ends are nearer."""
    to_vertex = lambda pt: min(pt.offset, p.lengths[pt.edge] - pt.offset)
    through = to_vertex(p1) + to_vertex(p2)
    if p1.edge == p2.edge:
        return min(abs(p1.offset - p2.offset), through)
    return through


_REALS = {}


def real(name):
    if name not in _REALS:
        _REALS[name] = PLRealization(corpus_rule(name))
    return _REALS[name]


WEDGES = ["dyadic", "w1", "w2", "w3", "w4"]
CORPUS = WEDGES + ["w2sub"]


# --- construction ---------------------------------------------------------------


class TestRealization:
    def test_frozen_perron_data(self):
        expected = {
            "dyadic": (2, {"a": Fraction(1)}),
            "w1": (2, {"a": Fraction(1), "b": Fraction(1)}),
            "w2": (2, {"a": Fraction(1), "b": Fraction(1)}),
            "w3": (79, {"a": Fraction(1, 2), "b": Fraction(1)}),
            "w4": (3, {"a": Fraction(1), "b": Fraction(1)}),
            "w2sub": (2, {"a1": Fraction(1, 2), "a2": Fraction(1, 2), "b": Fraction(1)}),
        }
        for name, (slope, lengths) in expected.items():
            p = real(name)
            assert p.slope == slope
            assert p.lengths == lengths

    def test_lengths_solve_the_eigen_equation(self):
        # sum of letter-target lengths along each word = slope * edge length
        for name in CORPUS:
            p = real(name)
            for e in p.edge_ids:
                total = sum(p.lengths[l.edge] for l in p.rule.words[e])
                assert total == p.slope * p.lengths[e]

    def test_branch_tables_tile_each_edge(self):
        for name in CORPUS:
            p = real(name)
            for e in p.edge_ids:
                bs = p.branches[e]
                assert bs[0].lo == 0
                assert bs[-1].hi == p.lengths[e]
                for left, right in zip(bs, bs[1:]):
                    assert left.hi == right.lo
                for b in bs:
                    assert b.hi - b.lo == p.lengths[b.letter.edge] / p.slope

    def test_point_validation(self):
        p = real("w3")
        with pytest.raises(ValidationError):
            p.point("c", Fraction(0))
        with pytest.raises(ValidationError):
            p.point("a", Fraction(-1, 7))
        with pytest.raises(ValidationError):
            p.point("a", Fraction(2, 3))  # edge a only has length 1/2
        assert p.point("a", Fraction(1, 3)) == GraphPoint("a", Fraction(1, 3))

    def test_disjoint_rule_builds_but_has_no_diameter(self):
        p = PLRealization(corpus_rule("disjoint"))
        assert all(v > 0 for v in p.lengths.values())
        with pytest.raises(ValidationError, match="disconnected"):
            p.diameter_bound()


# --- evaluation ------------------------------------------------------------------


class TestEval:
    def test_dyadic_doubles_offsets(self):
        p = real("dyadic")
        assert p.eval_h(GraphPoint("a", Fraction(3, 10))) == GraphPoint("a", Fraction(3, 5))
        assert p.eval_h(GraphPoint("a", Fraction(7, 10))) == GraphPoint("a", Fraction(2, 5))

    def test_w4_frozen_images(self):
        # word for a is b a b^-1, word for b is a^-1 b a, all lengths 1
        p = real("w4")
        assert p.eval_h(GraphPoint("a", Fraction(1, 2))) == GraphPoint("a", Fraction(1, 2))
        assert p.eval_h(GraphPoint("b", Fraction(1, 6))) == GraphPoint("a", Fraction(1, 2))
        assert p.eval_h(GraphPoint("a", Fraction(5, 6))) == GraphPoint("b", Fraction(1, 2))

    def test_w2_midpoint_of_a_is_a_branch_boundary(self):
        # the image travels slope * offset = 1 into the word b a: end of b,
        # equally the start of a
        p = real("w2")
        mid = GraphPoint("a", Fraction(1, 2))
        with pytest.raises(BranchAmbiguity) as info:
            eval_h(p, mid)
        err = info.value
        assert err.point == mid
        assert err.candidates == (
            GraphPoint("b", Fraction(1)),
            GraphPoint("a", Fraction(0)),
        )
        assert p.same_point(*err.candidates)

    def test_dyadic_halfway_cut_names_the_vertex_twice(self):
        p = real("dyadic")
        with pytest.raises(BranchAmbiguity) as info:
            p.eval_h(GraphPoint("a", Fraction(1, 2)))
        assert info.value.candidates == (
            GraphPoint("a", Fraction(1)),
            GraphPoint("a", Fraction(0)),
        )

    def test_the_vertex_is_fixed(self):
        for name in WEDGES:
            p = real(name)
            e = p.edge_ids[0]
            image = p.eval_h(GraphPoint(e, Fraction(0)))
            assert p.same_point(image, GraphPoint(e, Fraction(0)))

    def test_endpoints_evaluate_without_ambiguity(self):
        p = real("w4")
        assert p.eval_h(GraphPoint("a", Fraction(0))) == GraphPoint("b", Fraction(0))
        assert p.eval_h(GraphPoint("a", Fraction(1))) == GraphPoint("b", Fraction(0))


# --- inverse branches --------------------------------------------------------------


class TestInverseBranches:
    def test_inverse_then_forward_is_the_identity(self):
        rng = random.Random(31)
        done = 0
        while done < 1000:
            p = real(CORPUS[done % len(CORPUS)])
            pt = random_point(p, rng)
            edge, index = rng.choice(p.preimage_branches(pt.edge))
            back = inverse_branch(p, pt, edge, index)
            assert eval_h(p, back) == pt
            done += 1

    def test_contraction_is_exactly_one_over_slope(self):
        rng = random.Random(32)
        for name in ["w3", "w4"]:
            p = real(name)
            for _ in range(50):
                x = random_point(p, rng)
                y = random_point(p, rng)
                if x.edge != y.edge:
                    continue
                edge, index = rng.choice(p.preimage_branches(x.edge))
                bx = p.inverse_branch(x, edge, index)
                by = p.inverse_branch(y, edge, index)
                assert abs(bx.offset - by.offset) * p.slope == abs(x.offset - y.offset)

    def test_bad_choices_are_rejected(self):
        p = real("w4")
        pt = GraphPoint("a", Fraction(1, 3))
        with pytest.raises(ValidationError, match="traverses"):
            p.inverse_branch(pt, "a", 0)  # letter 0 of a's word runs over b
        with pytest.raises(ValidationError, match="letters"):
            p.inverse_branch(pt, "a", 3)
        with pytest.raises(ValidationError, match="unknown"):
            p.inverse_branch(pt, "c", 0)

    def test_preimage_branches_list_every_occurrence(self):
        for name in CORPUS:
            p = real(name)
            for g in p.edge_ids:
                wanted = sum(
                    1 for e in p.edge_ids for l in p.rule.words[e] if l.edge == g
                )
                assert len(p.preimage_branches(g)) == wanted


# --- graph distance ------------------------------------------------------------------


class TestDistance:
    def test_matches_the_wedge_oracle(self):
        rng = random.Random(33)
        for name in WEDGES:
            p = real(name)
            for _ in range(60):
                x = random_point(p, rng)
                y = random_point(p, rng)
                assert p.distance(x, y) == oracle_wedge_distance(p, x, y)

    def test_triangle_inequality(self):
        rng = random.Random(34)
        p = real("w3")
        for _ in range(100):
            x, y, z = (random_point(p, rng) for _ in range(3))
            assert p.distance(x, z) <= p.distance(x, y) + p.distance(y, z)

    def test_wedge_diameters_are_exact(self):
        assert real("dyadic").diameter_bound() == Fraction(1, 2)
        assert real("w2").diameter_bound() == 1
        assert real("w3").diameter_bound() == Fraction(3, 4)
        assert real("w4").diameter_bound() == 1

    def test_distance_across_components_raises(self):
        p = PLRealization(corpus_rule("disjoint"))
        e, f = p.edge_ids
        with pytest.raises(ValidationError, match="components"):
            p.distance(GraphPoint(e, Fraction(1, 3) * p.lengths[e]),
                       GraphPoint(f, Fraction(1, 3) * p.lengths[f]))


# --- solenoid points and the metric ---------------------------------------------------


class TestSolenoidPoints:
    def test_random_truncations_are_compatible(self):
        rng = random.Random(35)
        for name in CORPUS:
            p = real(name)
            x = random_solenoid_point(p, 8, rng)
            assert x.depth == 8
            for i in range(8):
                assert p.eval_h(x.coords[i + 1]) == x.coords[i]

    def test_incompatible_coordinates_are_rejected(self):
        p = real("w4")
        good = GraphPoint("a", Fraction(1, 5))
        bad = GraphPoint("a", Fraction(1, 5))  # maps to (b, 2/5), not back onto itself
        with pytest.raises(ValidationError, match="does not map onto"):
            solenoid_point(p, (good, bad))

    def test_metric_of_a_point_with_itself_is_zero(self):
        rng = random.Random(36)
        p = real("w2")
        x = random_solenoid_point(p, 6, rng)
        value = metric_D(x, x)
        assert value.truncated == 0
        assert value.tail_bound == Fraction(1, 64) * p.diameter_bound()
        assert value.lower == 0 and value.upper == value.tail_bound

    def test_single_difference_at_depth_8(self):
        rng = random.Random(37)
        p = real("w4")
        x = random_solenoid_point(p, 8, rng)
        deepest = x.coords[7]
        used = None
        for edge, index in p.preimage_branches(deepest.edge):
            candidate = p.inverse_branch(deepest, edge, index)
            if candidate != x.coords[8]:
                used = candidate
                break
        y = solenoid_point(p, x.coords[:8] + (used,))
        value = metric_D(x, y)
        gap = p.distance(x.coords[8], used)
        assert value.truncated == Fraction(1, 256) * gap
        assert value.truncated <= Fraction(1, 256) * p.diameter_bound()

    def test_triangle_inequality_for_truncations(self):
        rng = random.Random(38)
        p = real("w3")
        for _ in range(25):
            x, y, z = (random_solenoid_point(p, 5, rng) for _ in range(3))
            dxz = metric_D(x, z).truncated
            dxy = metric_D(x, y).truncated
            dyz = metric_D(y, z).truncated
            assert dxz <= dxy + dyz

    def test_depth_mismatch_and_foreign_points_are_rejected(self):
        rng = random.Random(39)
        p = real("w2")
        x = random_solenoid_point(p, 3, rng)
        y = random_solenoid_point(p, 4, rng)
        with pytest.raises(ValidationError, match="depths differ"):
            metric_D(x, y)
        other = PLRealization(corpus_rule("w2"))
        z = random_solenoid_point(other, 3, rng)
        with pytest.raises(ValidationError, match="different realizations"):
            metric_D(x, z)


# --- subdivision geometry ---------------------------------------------------------------


class TestSubdivision:
    DEPTHS = {"dyadic": 4, "w2": 5, "w4": 3, "w3": 1, "w2sub": 3}

    def test_intervals_follow_the_expanded_word(self):
        for name, n in self.DEPTHS.items():
            p = real(name)
            for e in p.edge_ids:
                subs = p.subdivision(e, n)
                letters = oracle_expand(p.rule, e, n)
                assert len(subs) == len(letters)
                prev = Fraction(0) * p.lengths[e]
                for s, (edge, sign) in zip(subs, letters):
                    assert s.target == edge
                    assert s.orient == sign
                    assert s.lo == prev
                    assert s.hi - s.lo == p.lengths[edge] * p.slope ** (-n)
                    prev = s.hi
                assert prev == p.lengths[e]

    def test_dyadic_level_5_is_the_dyadic_partition(self):
        p = real("dyadic")
        subs = p.subdivision("a", 5)
        assert [s.lo for s in subs] == [Fraction(k, 32) for k in range(32)]
        assert all(s.orient == 1 for s in subs)

    def test_counts_match_matrix_powers(self):
        for name, n in self.DEPTHS.items():
            p = real(name)
            for depth in range(n + 1):
                counts = p.interval_counts(depth)
                for e in p.edge_ids:
                    assert counts[e] == len(p.subdivision(e, depth))
                    assert counts[e] == len(oracle_expand(p.rule, e, depth))

    def test_w3_counts_without_enumeration(self):
        # column sums of the cover matrix powers; level 2 checked against
        # the oracle expansion, level 6 is far beyond enumeration
        p = real("w3")
        assert p.interval_counts(1) == {"a": 72, "b": 91}
        level2 = p.interval_counts(2)
        assert level2 == {
            e: len(oracle_expand(p.rule, e, 2)) for e in p.edge_ids
        }
        half = oracle_expand(p.rule, "a", 3)
        lens = {f: len(oracle_expand(p.rule, f, 3)) for f in p.edge_ids}
        occurrences = {f: sum(1 for e, _ in half if e == f) for f in p.edge_ids}
        assert p.interval_counts(6)["a"] == sum(
            lens[f] * occurrences[f] for f in p.edge_ids
        )

    def test_max_interval_length_is_structural(self):
        p = real("w3")
        # all of level 10 would be ~10^19 intervals; the bound is still exact
        assert p.max_interval_length(10) == Fraction(1, 79**10)
        assert p.max_interval_length(0) == 1


# --- decay reports -------------------------------------------------------------------------


class TestDecayChecks:
    def test_w2_level_5_bound_is_an_exact_equality(self):
        rep = decay_checks(real("w2"), depth=5, samples=10, seed=3)
        level = rep.levels[5]
        assert level.max_length == Fraction(1, 32)
        assert level.bound == Fraction(1, 32)
        assert level.within_bound

    def test_level_0_bound_is_the_longest_edge(self):
        rep = decay_checks(real("w3"), depth=0, samples=0)
        assert rep.k_const == 1
        assert rep.levels[0].max_length == 1
        assert rep.levels[0].bound == 1
        assert rep.levels[0].within_bound

    def test_w4_sampled_ratio_is_exactly_one_third(self):
        rep = decay_checks(real("w4"), depth=4, samples=100, seed=11)
        assert rep.pairs_checked == 100
        assert rep.arc_ratio_exact
        assert rep.geodesic_within_k
        assert rep.fitted_constant <= rep.k_const
        # replay one chain by hand: arc gaps triple per level
        p = real("w4")
        interval = p.subdivision("a", 4)[0]
        width = interval.hi - interval.lo
        x = GraphPoint("a", interval.lo + Fraction(1, 64) * width)
        y = GraphPoint("a", interval.lo + Fraction(5, 64) * width)
        for i in range(4, 0, -1):
            assert p.distance(x, y) <= Fraction(1, 3**i)
            nx, ny = p.eval_h(x), p.eval_h(y)
            assert abs(nx.offset - ny.offset) == 3 * abs(x.offset - y.offset)
            x, y = nx, ny

    def test_every_corpus_rule_passes(self):
        for name in CORPUS:
            rep = decay_checks(real(name), depth=6, samples=10, seed=7)
            assert rep.all_passed, name
            assert all(s.counts_match for s in rep.levels)
            assert rep.levels[1].routes == ("matrix", "enumeration", "substitution")

    def test_cylinder_metric_bound_holds(self):
        rep = decay_checks(real("w4"), depth=7, samples=5, seed=9)
        assert rep.cylinder_bound_ok

    def test_failing_axioms_are_refused(self):
        with pytest.raises(ValidationError, match="mixing"):
            decay_checks(PLRealization(corpus_rule("disjoint")), depth=2, samples=1)

    def test_reports_replay_under_the_same_seed(self):
        a = decay_checks(real("w3"), depth=4, samples=8, seed=21)
        b = decay_checks(real("w3"), depth=4, samples=8, seed=21)
        assert a == b
