"""Stabilized passage systems and the interval substitution data.

A passage is an unordered pair of distinct half-edge germs at a common
vertex that some edge word traverses at an interior junction.  After
replacing the rule by a suitable power (stabilization) the passage set is
closed under the germ derivative and every edge word visits every passage.
This module computes that stable combinatorial picture: the entry/exit
matrices I and U, the derivative matrix X, the turn-count matrix N, the
interval substitution levels (a_i, b_i), building-block records, and the
projection witness and variation bounds built on top of them.
"""

from dataclasses import dataclass
from fractions import Fraction

from .exact import PerronData, dyadic_enclosure
from .intlinalg import mat, mat_vec_int
from .presolenoid import (
    START,
    TERMINAL,
    AxiomReport,
    ConsistencyError,
    Germ,
    ValidationError,
    WordLengthError,
    WrappingRule,
    _parity_solve,
    edge_cover_matrix,
    flip_edges,
    germ_map,
    map_turn,
    power,
    rule_turns,
    substitute_word,
    validate_axioms,
    word_turn_counts,
)


def turn_label(turn) -> str:
    """Stable human-readable name for a passage, e.g. 'a.start|b.terminal'."""
    return "|".join(f"{e}.{end}" for e, end in sorted((g.edge, g.end) for g in turn))


# --- stabilization ----------------------------------------------------------


def _stability_gaps(rule: WrappingRule) -> tuple:
    """Which of (mixing2, stab1, stab2) the rule itself still violates."""
    gaps = []
    h = edge_cover_matrix(rule)
    if any(x == 0 for row in h for x in row):
        gaps.append("mixing2")
    turns = rule_turns(rule)
    gm = germ_map(rule)
    if any(map_turn(gm, t) not in turns for t in turns):
        gaps.append("stab1")
    if any(set(word_turn_counts(rule.words[e])) != turns for e in rule.edge_ids):
        gaps.append("stab2")
    return tuple(gaps)


def _passage_order(rule: WrappingRule) -> tuple:
    """Turns in first-occurrence order: edge words in edge order, junctions
    left to right."""
    out = []
    seen = set()
    for e in rule.edge_ids:
        for t in word_turn_counts(rule.words[e]):
            if t not in seen:
                seen.add(t)
                out.append(t)
    return tuple(out)


@dataclass
class PassageSystem:
    """A stabilized power of a wrapping rule with its passage matrices.

    Matrix conventions (edges and passages in the stored orders):
      I[e][q] = 1 iff passage q contains the start germ of edge e
      U[e][q] = 1 iff passage q contains the terminal germ of edge e
      X[p][q] = 1 iff the germ derivative sends passage q to passage p
      N[q][e] = number of junctions of word(e) whose turn is q
      H[e][f] = number of occurrences of edge e in word(f)
    """

    base_rule: WrappingRule
    rule: WrappingRule
    power: int
    passages: tuple
    I: tuple
    U: tuple
    X: tuple
    N: tuple
    H: tuple
    base_axioms: AxiomReport

    @property
    def edge_ids(self) -> tuple:
        return self.rule.edge_ids

    @property
    def base_perron(self) -> PerronData:
        return self.base_axioms.expansion.perron

    def passage_index(self, turn) -> int:
        return self.passages.index(turn)

    def passage_labels(self) -> tuple:
        return tuple(turn_label(t) for t in self.passages)


def _assemble_system(base_rule: WrappingRule, rule: WrappingRule, exponent: int,
                     base_axioms: AxiomReport) -> PassageSystem:
    ids = rule.edge_ids
    passages = _passage_order(rule)
    pindex = {p: k for k, p in enumerate(passages)}
    i_mat = mat([[1 if Germ(e, START) in p else 0 for p in passages] for e in ids])
    u_mat = mat([[1 if Germ(e, TERMINAL) in p else 0 for p in passages] for e in ids])
    gm = germ_map(rule)
    x_cols = []
    for p in passages:
        img = map_turn(gm, p)
        if img not in pindex:
            raise ConsistencyError(
                f"germ derivative leaves the passage set at {turn_label(p)}"
            )
        x_cols.append(pindex[img])
    x_mat = mat([[1 if x_cols[q] == p else 0 for q in range(len(passages))]
                 for p in range(len(passages))])
    counts = {e: word_turn_counts(rule.words[e]) for e in ids}
    n_mat = mat([[counts[e].get(p, 0) for e in ids] for p in passages])
    for k in range(len(passages)):
        total = sum(i_mat[i][k] for i in range(len(ids)))
        total += sum(u_mat[i][k] for i in range(len(ids)))
        if total != 2:
            raise ConsistencyError(f"passage column {k} has germ count {total}, not 2")
    if any(x == 0 for row in n_mat for x in row):
        raise ConsistencyError("a passage is missing from some edge word after stabilization")
    return PassageSystem(
        base_rule=base_rule,
        rule=rule,
        power=exponent,
        passages=passages,
        I=i_mat,
        U=u_mat,
        X=x_mat,
        N=n_mat,
        H=edge_cover_matrix(rule),
        base_axioms=base_axioms,
    )


def stabilize(rule: WrappingRule, max_exponent: int = 1024,
              max_letters: int = 10**6) -> PassageSystem:
    """The minimal power of the rule that is mixing on edges with a stable
    passage set visited by every edge word."""
    report = validate_axioms(rule)
    if not report.all_passed:
        raise ValidationError(
            "axioms fail (" + ", ".join(report.failed_axioms()) + "); cannot stabilize"
        )
    for m in range(1, max_exponent + 1):
        candidate = rule if m == 1 else power(rule, m, max_letters=max_letters)
        if not _stability_gaps(candidate):
            return _assemble_system(rule, candidate, m, report)
    raise ValidationError(f"no stabilized power found up to exponent {max_exponent}")


# --- orientation normalization and the interval system ----------------------


def occurrence_signs(rule: WrappingRule) -> dict:
    """(i, j) -> signs, in order, of the occurrences of edge j in word(i)."""
    out = {}
    for i in rule.edge_ids:
        for letter in rule.words[i]:
            out.setdefault((i, letter.edge), []).append(letter.sign)
    return {k: tuple(v) for k, v in out.items()}


def _normalize_orientations(system: PassageSystem, max_letters: int):
    """Square/flip until every occurrence is increasing or every pair mixed.

    Flipping an edge set F multiplies the sign of each occurrence of j in
    word(i) by f_i*f_j, so pure-signed systems reduce to a parity problem;
    squaring turns one mixed pair into mixed pairs everywhere within two
    rounds because the cover matrix is strictly positive.
    """
    rule = system.rule
    exponent = system.power
    log = []
    for _ in range(8):
        signs = occurrence_signs(rule)
        kinds = {k: frozenset(v) for k, v in signs.items()}
        mixed = sum(1 for s in kinds.values() if len(s) == 2)
        if mixed == len(kinds):
            return rule, exponent, tuple(log), "mixed"
        if mixed:
            rule = power(rule, 2, max_letters=max_letters)
            exponent *= 2
            log.append({"op": "square", "reason": "spread mixed orientations"})
            continue
        ids = rule.edge_ids
        index = {e: k for k, e in enumerate(ids)}
        constraints = [
            (index[i], index[j], next(iter(s))) for (i, j), s in kinds.items()
        ]
        solution = _parity_solve(len(ids), constraints)
        if solution is None:
            rule = power(rule, 2, max_letters=max_letters)
            exponent *= 2
            log.append({"op": "square", "reason": "orientation parity unsolvable"})
            continue
        flips = tuple(e for e in ids if solution[index[e]] < 0)
        if flips:
            rule = flip_edges(rule, flips)
            log.append({"op": "flip", "edges": flips})
        if any(s != 1 for ss in occurrence_signs(rule).values() for s in ss):
            raise ConsistencyError("orientation flips left a decreasing occurrence")
        return rule, exponent, tuple(log), "all_increasing"
    raise ConsistencyError("orientation normalization did not settle in 8 rounds")


@dataclass
class Level:
    """Counts for one expansion of the start interval: a by passage, b by edge."""

    a: tuple
    b: tuple


@dataclass
class IntervalSystem:
    """The substitution system of a start interval under a normalized rule."""

    system: PassageSystem
    outcome: str  # "all_increasing" or "mixed"
    log: tuple
    start_edge: str
    start_slot: int  # 0-based position in the first edge word
    start_letter: str  # the edge the start interval maps onto
    d0: int
    levels: tuple
    orientations: dict  # (i, j) -> signs of occurrences of j in word(i)

    def level(self, i: int) -> Level:
        if not 1 <= i <= len(self.levels):
            raise ValidationError(
                f"level {i} outside the computed range 1..{len(self.levels)}"
            )
        return self.levels[i - 1]


def _mixing_exponent(h) -> int:
    n = len(h)
    bound = (n - 1) * (n - 1) + 1
    cur = tuple(tuple(1 if x else 0 for x in row) for row in h)
    base = cur
    for m in range(1, bound + 1):
        if all(all(x for x in row) for row in cur):
            return m
        cur = tuple(
            tuple(1 if any(cur[i][k] and base[k][j] for k in range(n)) else 0
                  for j in range(n))
            for i in range(n)
        )
    raise ConsistencyError("stabilized cover matrix is not primitive")


def _slot_depth(h, edge_index: int) -> int:
    """Least d with the d-th image of the slot's interval covering every edge."""
    n = len(h)
    vec = [1 if i == edge_index else 0 for i in range(n)]
    bound = (n - 1) * (n - 1) + 2
    for d in range(1, bound + 1):
        if all(x > 0 for x in vec):
            return d
        vec = list(mat_vec_int(h, vec))
    raise ConsistencyError("slot image never covers the graph")


def _choose_start_slot(rule: WrappingRule, h) -> tuple:
    """(slot, letter edge, d0) for the start interval inside the first edge.

    Slots are scanned left to right; a slot qualifies when its coverage
    depth is within the primitivity exponent, and when none qualifies (the
    usual case for two or more edges) the leftmost slot of minimal depth is
    used instead.
    """
    ids = rule.edge_ids
    first = ids[0]
    exponent = _mixing_exponent(h)
    depths = []
    for slot, letter in enumerate(rule.words[first]):
        d = _slot_depth(h, ids.index(letter.edge))
        if d <= exponent:
            return slot, letter.edge, d
        depths.append((d, slot, letter.edge))
    d, slot, edge = min(depths)
    return slot, edge, d


def interval_system(ps: PassageSystem, levels: int,
                    max_letters: int = 10**7) -> IntervalSystem:
    """Expand the start interval `levels` times and record (a_i, b_i).

    The rule is first normalized: after optional edge flips and squarings
    either every occurrence of every edge in every word is increasing, or
    every (i, j) pair carries both orientations.  Level i counts the turns
    (a_i, by passage) and letters (b_i, by edge) of the i-fold expansion of
    the start interval, and the recurrences b_{i+1} = H b_i and
    a_{i+1} = X a_i + N b_i are re-verified against the expanded words.
    """
    if levels < 1:
        raise ValidationError("interval_system needs levels >= 1")
    rule, exponent, log, outcome = _normalize_orientations(ps, max_letters)
    if rule is not ps.rule:
        base = ps.base_rule
        for entry in log:
            if entry["op"] == "flip":
                base = flip_edges(base, entry["edges"])
        system = _assemble_system(base, rule, exponent, validate_axioms(base))
    else:
        system = ps
    ids = system.edge_ids
    pindex = {p: k for k, p in enumerate(system.passages)}
    slot, start_letter, d0 = _choose_start_slot(rule, system.H)

    word = rule.words[start_letter]
    out = []
    prev = None
    for i in range(levels):
        if i:
            required = sum(len(rule.words[l.edge]) for l in word)
            if required > max_letters:
                raise WordLengthError(required, max_letters)
            word = substitute_word(rule, word)
        counts = word_turn_counts(word)
        if any(t not in pindex for t in counts):
            raise ConsistencyError("level word contains a turn outside the passage set")
        a = [0] * len(system.passages)
        for t, c in counts.items():
            a[pindex[t]] = c
        b = [0] * len(ids)
        for letter in word:
            b[ids.index(letter.edge)] += 1
        level = Level(a=tuple(a), b=tuple(b))
        if prev is not None:
            want_b = mat_vec_int(system.H, prev.b)
            want_a = tuple(
                x + y
                for x, y in zip(mat_vec_int(system.X, prev.a),
                                mat_vec_int(system.N, prev.b))
            )
            if level.b != want_b or level.a != want_a:
                raise ConsistencyError(f"level {i + 1} counts break the recurrence")
        out.append(level)
        prev = level
    return IntervalSystem(
        system=system,
        outcome=outcome,
        log=log,
        start_edge=ids[0],
        start_slot=slot,
        start_letter=start_letter,
        d0=d0,
        levels=tuple(out),
        orientations=occurrence_signs(rule),
    )


def extend_levels(iv: IntervalSystem, upto: int) -> tuple:
    """Levels 1..upto: the expanded prefix continued by the exact recurrences.

    Useful when direct expansion would blow the letter budget; the
    recurrences are cross-checked against expansion on the computed prefix.
    """
    out = list(iv.levels)
    if upto <= len(out):
        return tuple(out[:upto])
    system = iv.system
    while len(out) < upto:
        prev = out[-1]
        b = mat_vec_int(system.H, prev.b)
        a = tuple(
            x + y
            for x, y in zip(mat_vec_int(system.X, prev.a),
                            mat_vec_int(system.N, prev.b))
        )
        out.append(Level(a=a, b=b))
    return tuple(out)


# --- building blocks ---------------------------------------------------------


@dataclass
class BuildingBlock:
    """Dimension data (a, b, I, U) of one interval-algebra stage."""

    a: tuple
    b: tuple
    I: tuple
    U: tuple
    unital: bool
    full: bool | None  # None when no turn-count matrix is available

    @property
    def n(self) -> int:
        return len(self.b)

    @property
    def m(self) -> int:
        return len(self.a)


def building_block(a, b, i_mat, u_mat, n_mat=None) -> BuildingBlock:
    a = tuple(int(x) for x in a)
    b = tuple(int(x) for x in b)
    i_mat = mat(i_mat)
    u_mat = mat(u_mat)
    n, m = len(b), len(a)
    for name, matrix in (("entry", i_mat), ("exit", u_mat)):
        if len(matrix) != n or any(len(row) != m for row in matrix):
            raise ValidationError(f"{name} matrix is not {n} x {m}")
        if any(x not in (0, 1) for row in matrix for x in row):
            raise ValidationError(f"{name} matrix entries must be 0 or 1")
    if any(x < 1 for x in a) or any(x < 1 for x in b):
        raise ValidationError("a and b must be strictly positive")
    for k in range(m):
        total = sum(i_mat[i][k] + u_mat[i][k] for i in range(n))
        if total != 2:
            raise ValidationError(
                f"column {k} of entry+exit sums to {total}, not 2"
            )
    ia = mat_vec_int(i_mat, a)
    ua = mat_vec_int(u_mat, a)
    for i in range(n):
        if ia[i] > b[i]:
            raise ConsistencyError(f"entry load {ia[i]} exceeds b({i}) = {b[i]}")
        if ua[i] > b[i]:
            raise ConsistencyError(f"exit load {ua[i]} exceeds b({i}) = {b[i]}")
    unital = all(ia[i] == b[i] == ua[i] for i in range(n))
    full = None
    if n_mat is not None:
        full = all(x > 0 for row in n_mat for x in row)
    return BuildingBlock(a=a, b=b, I=i_mat, U=u_mat, unital=unital, full=full)


def building_block_at(iv: IntervalSystem, level: int) -> BuildingBlock:
    data = iv.level(level)
    return building_block(data.a, data.b, iv.system.I, iv.system.U, iv.system.N)


# --- projection witness ------------------------------------------------------

FWD = "fwd"
REV = "rev"


@dataclass
class ProjectionWitness:
    """A loop in the entry/exit graph certifying a small projection.

    Vertices are (row, direction); an arrow labeled by column j runs from
    (i, d) to (i', d') when the arrival germ of (i, d) and the departure
    germ of (i', d') are exactly the two germ slots of column j.
    """

    vertices: tuple
    arrows: tuple  # (column, from_vertex, to_vertex)
    loop: tuple  # arrow subsequence forming a cycle
    plan: tuple  # one slot description per loop arrow
    trace_bound: Fraction


def _witness_arrows(i_mat, u_mat):
    n = len(i_mat)
    m = len(i_mat[0]) if i_mat else 0
    arrows = []
    for j in range(m):
        starts = [i for i in range(n) if i_mat[i][j]]
        terms = [i for i in range(n) if u_mat[i][j]]
        if len(starts) == 1 and len(terms) == 1:
            p, q = starts[0], terms[0]
            arrows.append((j, (q, FWD), (p, FWD)))
            arrows.append((j, (p, REV), (q, REV)))
        elif len(starts) == 2:
            p, q = starts
            arrows.append((j, (p, REV), (q, FWD)))
            arrows.append((j, (q, REV), (p, FWD)))
        else:
            p, q = terms
            arrows.append((j, (p, FWD), (q, REV)))
            arrows.append((j, (q, FWD), (p, REV)))
    return tuple(arrows)


def projection_witness(block: BuildingBlock) -> ProjectionWitness:
    n = block.n
    for i in range(n):
        if sum(block.I[i]) < 1:
            raise ValidationError(f"row {i} of the entry matrix has no ones")
        if sum(block.U[i]) < 1:
            raise ValidationError(f"row {i} of the exit matrix has no ones")
    least = min(range(block.m), key=lambda k: block.a[k])
    if block.a[least] < 2 * n + 1:
        raise ValidationError(
            f"a({least}) = {block.a[least]} is below 2n+1 = {2 * n + 1}"
        )
    vertices = tuple((i, d) for i in range(n) for d in (FWD, REV))
    arrows = _witness_arrows(block.I, block.U)
    successor = {}
    for arrow in sorted(arrows):
        successor.setdefault(arrow[1], arrow)
    # walk until a vertex repeats; out-degrees are >= 1, so this finds a cycle
    path = []
    seen = {}
    v = vertices[0]
    while v not in seen:
        seen[v] = len(path)
        arrow = successor[v]
        path.append(arrow)
        v = arrow[2]
    loop = tuple(path[seen[v]:])
    if not 0 < len(loop) <= 2 * n:
        raise ConsistencyError("witness loop length escaped the pigeonhole bound")
    plan = tuple(
        {
            "step": k,
            "column": arrow[0],
            "from": list(arrow[1]),
            "to": list(arrow[2]),
            "slot": f"rank-1 corner in summand {arrow[2][0]} via column {arrow[0]}",
        }
        for k, arrow in enumerate(loop)
    )
    return ProjectionWitness(
        vertices=vertices,
        arrows=arrows,
        loop=loop,
        plan=plan,
        trace_bound=Fraction(2 * n + 1, min(block.a)),
    )


# --- variation decay ---------------------------------------------------------


def char_variation(ps: PassageSystem, k: int, bits: int = 64) -> Fraction:
    """Upper bound for the diameter of a k-fold inverse-branch image.

    Edge lengths are the left Perron vector scaled to maximum 1, so the
    bound is lambda^(-k) for the base expansion factor lambda; exact when
    lambda is rational, an outward-rounded dyadic bound otherwise.
    """
    if k < 0:
        raise ValidationError("char_variation needs k >= 0")
    expansion = ps.base_axioms.expansion
    if expansion.status != "pass":
        raise ValidationError("expansion is not certified for the base rule")
    if k == 0:
        return Fraction(1)
    lam = expansion.perron.value
    if lam.is_rational():
        return Fraction(1) / lam.as_fraction() ** k
    lo, _ = dyadic_enclosure(lam, bits)
    while lo <= 1:
        bits *= 2
        lo, _ = dyadic_enclosure(lam, bits)
    return Fraction(1) / lo**k
