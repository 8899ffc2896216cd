"""Finite-depth simulator for the boundary dynamics of a flattened wedge rule.

A single-vertex rule that passes the axioms acts on a Cantor set of
"directed germs": an element is a sign (direction of travel) together with a
nested chain of subdivision intervals, one per depth level.  This module
realises that set as the path space of a stationary ordered Bratteli diagram
whose first level is sign-doubled, and implements the three interacting maps
on truncated paths:

* ``vershik`` -- the adic successor map of the ordered diagram,
* ``sigma_path`` / ``S`` -- the direction flip,
* ``phi_path`` / ``phi`` -- the "move past the forward endpoint" map.

All computations are exact: paths are tuples of arrow ids, clopen sets are
canonical unions of cylinders, and the unique invariant measure is kept in
rational (or algebraic) arithmetic.  Truncation effects are explicit: maps
that need more levels than the input carries either refine internally (set
images), return ``None`` (cylinder images), or raise a typed error (points).
"""

import math
import random
from dataclasses import dataclass
from fractions import Fraction

from .blocks import PassageSystem, stabilize
from .exact import perron_data
from .presolenoid import (
    START,
    TERMINAL,
    ConsistencyError,
    Germ,
    SolenoidError,
    ValidationError,
    WrappingRule,
    flip_edges,
    germ_map,
    orientation_check,
    power,
)


class MaxPathError(SolenoidError):
    """The adic successor is not determined by the truncated path."""


class UndeterminedAtDepth(SolenoidError):
    """A point-level operation needs more levels than the truncation has."""

    def __init__(self, depth: int, what: str = "phi"):
        self.depth = depth
        super().__init__(f"{what} is undetermined at depth {depth}; refine the truncation")


class RefinementNeeded(SolenoidError):
    """A cylinder-level construction needs a finer partition to proceed."""


# ---------------------------------------------------------------------------
# normalization of the stabilized rule
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Normalization:
    """How the stabilized rule was massaged into diagram position.

    ``edge_order`` lists original edge ids; position 0 becomes vertex 1 (its
    start germ absorbs a neighbourhood of the wedge point) and the last
    position becomes the terminal-absorbing vertex j.  ``j_case`` is 1 when
    both absorbing germs sit on a single edge, n otherwise.
    """

    edge_order: tuple
    j_case: int
    extra_squaring: bool
    flipped: tuple
    absorb_steps: int
    oriented: bool


def _eventual_germs(gm: dict) -> dict:
    """Map each germ to its eventual fixed image under the germ dynamics."""

    out = {}
    for g in gm:
        cur, seen = g, set()
        while gm[cur] != cur:
            if cur in seen:
                raise ValidationError("the germ dynamics cycle without flattening")
            seen.add(cur)
            cur = gm[cur]
        out[g] = cur
    return out


def _absorb_steps(gm: dict) -> int:
    worst = 0
    for g in gm:
        cur, steps = g, 0
        while gm[cur] != cur:
            cur = gm[cur]
            steps += 1
        worst = max(worst, steps)
    return worst


def _normalize(rule: WrappingRule) -> tuple:
    """Return (normalized rule, Normalization) for a stabilized wedge rule."""

    extra = False
    verdict = orientation_check(rule)
    if verdict.orientable and not verdict.positively_oriented:
        # a negatively oriented rule flips every occurrence; its square is
        # positively oriented, which the endpoint analysis below needs
        rule = power(rule, 2)
        extra = True
        verdict = orientation_check(rule)
    if verdict.positively_oriented:
        bad = tuple(e for e in rule.edge_ids if verdict.positive_witness[e] < 0)
        if bad:
            rule = flip_edges(rule, bad)
        if any(lt.sign < 0 for w in rule.words.values() for lt in w):
            raise ConsistencyError("a positively oriented rule kept negative letters after flipping")

    gm = germ_map(rule)
    eventual = _eventual_germs(gm)
    targets = set(eventual.values())
    if len(targets) != 2:
        raise ValidationError(
            f"the germ dynamics settle on {len(targets)} germs instead of 2; flattening fails"
        )
    t1, t2 = sorted(targets)
    if gm[t1] == t2:  # the absorbing pair is swapped; one extra squaring fixes it
        if extra:
            raise ValidationError("normalization would need more than one extra squaring")
        rule = power(rule, 2)
        extra = True
        gm = germ_map(rule)
        eventual = _eventual_germs(gm)
        targets = set(eventual.values())
        if len(targets) != 2 or any(gm[t] != t for t in targets):
            raise ConsistencyError("squaring did not fix the absorbing germ pair")

    fixed = sorted(targets)
    starts = [g for g in fixed if g.end == START]
    terms = [g for g in fixed if g.end == TERMINAL]
    flipped = ()
    if len(starts) == 1:
        alpha, beta = starts[0], terms[0]
    elif len(starts) == 2:
        # both absorbing germs look outward; reverse the second edge
        alpha, other = starts
        flipped = (other.edge,)
        rule = flip_edges(rule, flipped)
        beta = Germ(other.edge, TERMINAL)
    else:
        other, beta = terms
        flipped = (other.edge,)
        rule = flip_edges(rule, flipped)
        alpha = Germ(other.edge, START)
    if flipped:
        gm = germ_map(rule)
        if gm[alpha] != alpha or gm[beta] != beta:
            raise ConsistencyError("flipping an edge disturbed the absorbing germs")

    ids = list(rule.edge_ids)
    rest = [e for e in ids if e not in (alpha.edge, beta.edge)]
    if alpha.edge == beta.edge:
        order = tuple([alpha.edge] + rest)
        j_case = 1
    else:
        order = tuple([alpha.edge] + rest + [beta.edge])
        j_case = len(order)

    meta = Normalization(
        edge_order=order,
        j_case=j_case,
        extra_squaring=extra,
        flipped=flipped,
        absorb_steps=_absorb_steps(gm),
        oriented=orientation_check(rule).orientable,
    )
    return rule, meta


# ---------------------------------------------------------------------------
# the ordered diagram
# ---------------------------------------------------------------------------


class OrderedBratteli:
    """Stationary ordered Bratteli diagram of a normalized wedge rule.

    Vertices beyond the first level are the edges 1..n of the normalized
    rule; the arrows into vertex v are the letter positions of word(v), so
    the incidence matrix has a_{vk} = occurrences of edge k in word(v).  The
    first level doubles every arrow with a travel sign.  Arrow order is
    letter position, except that the first occurrence of edge 1 is promoted
    to the minimum and the last occurrence of edge j to the maximum; at the
    first level the minus copies rank below the plus copies.

    Paths are tuples of small integers: entry 0 indexes ``level1`` and later
    entries index ``deep``.  Entry k names the word position occupied at
    depth k+1; consecutive arrows must compose.
    """

    def __init__(self, rule: WrappingRule, meta: Normalization):
        self.rule = rule
        self.meta = meta
        order = meta.edge_order
        self.n = len(order)
        self.j = meta.j_case
        self.oriented = meta.oriented
        self.absorb = meta.absorb_steps
        pos_of = {e: i + 1 for i, e in enumerate(order)}
        words = []
        for e in order:
            words.append(tuple(pos_of[lt.edge] * lt.sign for lt in rule.word(e)))
        self.words = tuple(words)
        self.lengths = tuple(len(w) for w in self.words)
        if self.words[0][0] != 1:
            raise ConsistencyError("word(e1) does not start with e1 after normalization")
        if self.words[self.j - 1][-1] != self.j:
            raise ConsistencyError("word(ej) does not end with ej after normalization")
        self.incidence = tuple(
            tuple(sum(1 for lt in w if abs(lt) == k) for k in range(1, self.n + 1))
            for w in self.words
        )

        # promoted position order per receiving vertex
        self.tmin, self.tmax, self.order_of = [], [], []
        for v in range(1, self.n + 1):
            w = self.words[v - 1]
            first = next(t for t in range(1, len(w) + 1) if abs(w[t - 1]) == 1)
            last = next(t for t in range(len(w), 0, -1) if abs(w[t - 1]) == self.j)
            if first == last:
                raise ConsistencyError("the promoted extremes collide; the order is ambiguous")
            mids = [t for t in range(1, len(w) + 1) if t not in (first, last)]
            self.tmin.append(first)
            self.tmax.append(last)
            self.order_of.append((first,) + tuple(mids) + (last,))

        # deep arrows: ids grouped by receiving vertex, in rank order
        self.deep = []
        self.deep_id = {}
        for v in range(1, self.n + 1):
            for t in self.order_of[v - 1]:
                self.deep_id[(v, t)] = len(self.deep)
                self.deep.append((v, t))
        self.deep = tuple(self.deep)

        # first-level arrows: ids list the plus block of each vertex first,
        # while the rank tables put the whole minus block under the plus one
        self.level1 = []
        self.level1_id = {}
        self.lvl1_rank = []
        self.lvl1_by_rank = {}
        for v in range(1, self.n + 1):
            length = self.lengths[v - 1]
            block = []
            for sgn in (1, -1):
                for i, t in enumerate(self.order_of[v - 1]):
                    self.level1_id[(sgn, v, t)] = len(self.level1)
                    rank = i + (length if sgn > 0 else 0)
                    self.lvl1_rank.append(rank)
                    block.append((rank, len(self.level1)))
                    self.level1.append((sgn, v, t))
            self.lvl1_by_rank[v] = tuple(i for _, i in sorted(block))
        self.level1 = tuple(self.level1)
        self.sigma_flip = tuple(self.level1_id[(-s, v, t)] for (s, v, t) in self.level1)

        # extensions: deep arrow ids whose letter names a given source vertex
        ext = {v: [] for v in range(1, self.n + 1)}
        for i, (v, t) in enumerate(self.deep):
            ext[abs(self.words[v - 1][t - 1])].append(i)
        self.ext = {v: tuple(ids) for v, ids in ext.items()}

        pd = perron_data(
            tuple(tuple(self.incidence[i][j] for i in range(self.n)) for j in range(self.n))
        )
        if pd.right is None:
            raise ConsistencyError("the incidence transpose has no simple Perron pair")
        if pd.is_rational:
            self.lam = pd.value.as_fraction()
            self.weights = tuple(w.as_fraction() for w in pd.right)
        else:
            self.lam = pd.value
            self.weights = pd.right
        self._cyl = {}

    # -- small accessors ----------------------------------------------------

    def word(self, v: int) -> tuple:
        return self.words[v - 1]

    def arrow(self, path_index: int, arrow_id: int) -> tuple:
        """(sign, vertex, position) at index 0, else (vertex, position)."""
        return self.level1[arrow_id] if path_index == 0 else self.deep[arrow_id]

    def receiving(self, path_index: int, arrow_id: int) -> int:
        a = self.arrow(path_index, arrow_id)
        return a[1] if path_index == 0 else a[0]

    def path_counts(self, depth: int) -> tuple:
        """Number of depth-``depth`` paths ending at each vertex."""
        counts = [0] * self.n
        for s, v, t in self.level1:
            counts[v - 1] += 1
        for _ in range(depth - 1):
            counts = [
                sum(self.incidence[v][k] * counts[k] for k in range(self.n))
                for v in range(self.n)
            ]
        return tuple(counts)

    def check_path(self, path: tuple) -> None:
        if not path:
            return
        if not 0 <= path[0] < len(self.level1):
            raise ValidationError(f"level-1 arrow id {path[0]} out of range")
        prev = self.level1[path[0]][1]
        for k, a in enumerate(path[1:], start=1):
            if not 0 <= a < len(self.deep):
                raise ValidationError(f"arrow id {a} out of range at index {k}")
            v, t = self.deep[a]
            if abs(self.words[v - 1][t - 1]) != prev:
                raise ValidationError(
                    f"arrows do not compose at index {k}: letter {t} of word({v}) "
                    f"does not name vertex {prev}"
                )
            prev = v

    def __repr__(self):
        return (
            f"OrderedBratteli(n={self.n}, j={self.j}, lam={self.lam}, "
            f"oriented={self.oriented})"
        )


def build_diagram(ps) -> OrderedBratteli:
    """Ordered diagram of a stabilized single-vertex rule.

    Accepts a PassageSystem (its stabilized power is used) or a raw rule,
    which is stabilized first.  Renumbering and at most one extra squaring
    bring the rule into diagram position: word(1) starts with +1 and word(j)
    ends with +j, mirroring the two absorbing endpoint germs.
    """

    if isinstance(ps, WrappingRule):
        ps = stabilize(ps)
    if not isinstance(ps, PassageSystem):
        raise ValidationError("build_diagram expects a PassageSystem or WrappingRule")
    rule = ps.rule
    if len(rule.graph.vertices) != 1:
        raise ValidationError("the diagram construction needs a single-vertex (wedge) rule")
    if not ps.base_axioms.all_passed:
        raise ValidationError(
            "the base rule fails axioms: " + ", ".join(ps.base_axioms.failed_axioms())
        )
    normalized, meta = _normalize(rule)
    return OrderedBratteli(normalized, meta)


# ---------------------------------------------------------------------------
# cylinders and elementary path maps
# ---------------------------------------------------------------------------


def cylinders(diagram: OrderedBratteli, depth: int) -> list:
    """All depth-``depth`` paths, in a fixed enumeration order."""

    if depth < 0:
        raise ValidationError("depth must be nonnegative")
    if depth in diagram._cyl:
        return diagram._cyl[depth]
    if depth == 0:
        out = [()]
    elif depth == 1:
        out = [(i,) for i in range(len(diagram.level1))]
    else:
        out = []
        for p in cylinders(diagram, depth - 1):
            v = diagram.receiving(len(p) - 1, p[-1])
            for e in diagram.ext[v]:
                out.append(p + (e,))
    diagram._cyl[depth] = out
    return out


def sigma_path(diagram: OrderedBratteli, path: tuple) -> tuple:
    """Direction flip: toggles the sign component of the level-1 arrow."""

    if not path:
        return path
    return (diagram.sigma_flip[path[0]],) + tuple(path[1:])


def min_path(diagram: OrderedBratteli, depth: int) -> tuple:
    if depth < 1:
        return ()
    t = diagram.tmin[0]
    out = [diagram.level1_id[(-1, 1, t)]]
    for _ in range(depth - 1):
        out.append(diagram.deep_id[(1, t)])
    return tuple(out)


def max_path(diagram: OrderedBratteli, depth: int) -> tuple:
    if depth < 1:
        return ()
    j = diagram.j
    t = diagram.tmax[j - 1]
    out = [diagram.level1_id[(1, j, t)]]
    for _ in range(depth - 1):
        out.append(diagram.deep_id[(j, t)])
    return tuple(out)


def vershik(diagram: OrderedBratteli, path: tuple, wrap: bool = False) -> tuple:
    """Adic successor: bump the first non-maximal arrow, minimize below it.

    An all-maximal path has no successor inside the truncation.  The
    truncation of the unique infinite max path glues to the minimal path
    under the deepened map, which ``wrap=True`` returns; other all-maximal
    truncations bump at a deeper level, so they raise either way.
    """

    if not path:
        raise ValidationError("the empty path has no successor")
    diagram.check_path(path)
    for k, a in enumerate(path):
        if k == 0:
            v = diagram.level1[a][1]
            rank = diagram.lvl1_rank[a]
            if rank == 2 * diagram.lengths[v - 1] - 1:
                continue
            nxt = diagram.lvl1_by_rank[v][rank + 1]
            return (nxt,) + tuple(path[1:])
        v, t = diagram.deep[a]
        order = diagram.order_of[v - 1]
        idx = order.index(t)
        if idx == len(order) - 1:
            continue
        bumped = order[idx + 1]
        below = [diagram.deep_id[(v, bumped)]]
        # everything underneath resets to the minimal arrow chain
        w = abs(diagram.words[v - 1][bumped - 1])
        for _ in range(k - 1):
            below.append(diagram.deep_id[(w, diagram.tmin[w - 1])])
            w = abs(diagram.words[w - 1][diagram.tmin[w - 1] - 1])
        below.append(diagram.level1_id[(-1, w, diagram.tmin[w - 1])])
        below.reverse()
        return tuple(below) + tuple(path[k + 1 :])
    if wrap and path == max_path(diagram, len(path)):
        return min_path(diagram, len(path))
    raise MaxPathError(
        f"max-path at depth {len(path)}: the successor needs levels beyond the truncation"
    )


# ---------------------------------------------------------------------------
# the adjacency rewrite behind phi
# ---------------------------------------------------------------------------


def _decode(diagram: OrderedBratteli, path: tuple) -> tuple:
    """(sign, vertices, positions, letter signs) of a nonempty path."""

    s, v1, t1 = diagram.level1[path[0]]
    vs = [v1]
    ts = [t1]
    eps = [1 if diagram.words[v1 - 1][t1 - 1] > 0 else -1]
    for a in path[1:]:
        v, t = diagram.deep[a]
        vs.append(v)
        ts.append(t)
        eps.append(1 if diagram.words[v - 1][t - 1] > 0 else -1)
    return s, vs, ts, eps


def _encode(diagram: OrderedBratteli, sign: int, arrows: list) -> tuple:
    v, t = arrows[0]
    out = [diagram.level1_id[(sign, v, t)]]
    for v, t in arrows[1:]:
        out.append(diagram.deep_id[(v, t)])
    return tuple(out)


def _rewrite(diagram: OrderedBratteli, path: tuple, direction: int):
    """One adjacency step when the departure level lies inside the truncation.

    The moving endpoint leaves its interval at the first level whose
    position is not extreme for the travel side; everything above that level
    is copied, the departing position shifts by one, and the levels below
    follow the opposite wall down, signs tracking the orientation of each
    letter.  Returns None when every level is extreme (the endpoint sits
    over the wedge point throughout the truncation); otherwise the map is a
    bijection between the input and output cylinders.
    """

    s, vs, ts, eps = _decode(diagram, path)
    words, lens = diagram.words, diagram.lengths
    d = s
    jd = dj = None
    for k in range(len(path)):
        d *= eps[k]
        extreme = lens[vs[k] - 1] if direction * d > 0 else 1
        if ts[k] != extreme:
            jd, dj = k, d
            break
    if jd is None:
        return None
    u = ts[jd] + direction * dj
    lt = words[vs[jd] - 1][u - 1]
    prod = 1 if lt > 0 else -1
    c = -direction * dj * prod
    v = abs(lt)
    rebuilt = [(vs[jd], u)]
    for _ in range(jd - 1):
        pos = lens[v - 1] if c > 0 else 1
        rebuilt.append((v, pos))
        lt = words[v - 1][pos - 1]
        sgn = 1 if lt > 0 else -1
        prod *= sgn
        c *= sgn
        v = abs(lt)
    if jd > 0:
        pos = lens[v - 1] if c > 0 else 1
        lt = words[v - 1][pos - 1]
        prod *= 1 if lt > 0 else -1
        rebuilt.append((v, pos))
    rebuilt.reverse()
    return _encode(diagram, dj * prod, rebuilt) + tuple(path[jd + 1 :])


def _pure_germ(diagram: OrderedBratteli, path: tuple, direction: int):
    """The constant absorbing germ of an all-extreme path, or None."""

    s, vs, ts, eps = _decode(diagram, path)
    d = s
    germs = set()
    for k in range(len(path)):
        d *= eps[k]
        germs.add((vs[k], direction * d))
    if len(germs) != 1:
        return None
    g = germs.pop()
    if g == (1, -1) or g == (diagram.j, 1):
        return g
    return None


def _ray_atom(diagram: OrderedBratteli, kind: tuple, depth: int) -> tuple:
    """The pure extreme atom (sign, chain) of the given kind at a depth."""

    sign, which = kind
    if which == "min":
        arrows = [(1, diagram.tmin[0])] * depth
    else:
        j = diagram.j
        arrows = [(j, diagram.tmax[j - 1])] * depth
    return _encode(diagram, sign, arrows)


_RAY_TARGET = {
    # (direction, absorbing germ) -> the ray the limiting image runs along
    (1, "alpha"): (-1, "max"),
    (1, "beta"): (1, "min"),
    (-1, "alpha"): (1, "max"),
    (-1, "beta"): (-1, "min"),
}


def _extensions(diagram: OrderedBratteli, path: tuple) -> list:
    if not path:
        return [(i,) for i in range(len(diagram.level1))]
    v = diagram.receiving(len(path) - 1, path[-1])
    return [path + (e,) for e in diagram.ext[v]]


def _resolve_extreme(diagram: OrderedBratteli, path: tuple, direction: int, out_depth: int) -> set:
    """Cylinders at ``out_depth`` touched by images of an all-extreme atom.

    Expands the truncation level by level; a refinement either departs,
    contributing an exact rewrite, or stays extreme.  Departure images
    repeat once the germ walk has settled, so the expansion stops after a
    quiet stretch longer than the absorption bound.
    """

    images = set()
    frontier = [path]
    quiet = 0
    rounds = 0
    while frontier and quiet <= diagram.absorb + 2:
        rounds += 1
        if rounds > out_depth + 4 * diagram.absorb + 32:
            raise ConsistencyError("the extreme-chain expansion failed to stabilize")
        nxt = []
        fresh = False
        for q in frontier:
            for q2 in _extensions(diagram, q):
                rw = _rewrite(diagram, q2, direction)
                if rw is None:
                    # still all-extreme: a wall chain, kept for the next round
                    nxt.append(q2)
                    continue
                img = rw[:out_depth]
                if img not in images:
                    images.add(img)
                    fresh = True
        frontier = nxt
        quiet = 0 if fresh else quiet + 1
    return images


def phi_path(diagram: OrderedBratteli, path: tuple, inverse: bool = False):
    """Depth-preserving cylinder image of the adjacency map.

    When the departure level lies inside the truncation the result is exact:
    phi carries the input cylinder onto the returned one.  For an
    all-extreme path the returned cylinder merely contains the image; when
    even that much is ambiguous at this depth the result is None and the
    caller should refine.
    """

    if not path:
        raise ValidationError("phi needs at least one level")
    direction = -1 if inverse else 1
    rw = _rewrite(diagram, path, direction)
    if rw is not None:
        return rw
    images = _resolve_extreme(diagram, path, direction, len(path))
    if len(images) == 1:
        return images.pop()
    return None


def phi_inverse_path(diagram: OrderedBratteli, path: tuple):
    return phi_path(diagram, path, inverse=True)


def phi_prefix_image(diagram: OrderedBratteli, path: tuple, depth: int, inverse: bool = False):
    """The depth-``depth`` cylinder the phi image of a deeper path falls in.

    Same contract as phi_path, resolved only to the requested coarser depth,
    which a deep enough refinement always determines.
    """

    if len(path) < depth:
        raise ValidationError("the path is shallower than the requested depth")
    direction = -1 if inverse else 1
    rw = _rewrite(diagram, path, direction)
    if rw is not None:
        return rw[:depth]
    images = _resolve_extreme(diagram, path, direction, depth)
    if len(images) == 1:
        return images.pop()
    return None


# ---------------------------------------------------------------------------
# clopen sets as canonical cylinder unions
# ---------------------------------------------------------------------------


class CylinderSet:
    """A clopen set stored as its canonical antichain of cylinders.

    No stored path extends another and no complete sibling family is left
    unmerged, so two clopen sets are equal exactly when their stored path
    sets are.  All operations are exact.
    """

    __slots__ = ("diagram", "paths")

    def __init__(self, diagram: OrderedBratteli, paths=(), _canonical: bool = False):
        self.diagram = diagram
        if _canonical:
            self.paths = frozenset(paths)
        else:
            self.paths = self._canonicalize(diagram, paths)

    @staticmethod
    def _canonicalize(diagram, paths) -> frozenset:
        pool = {tuple(p) for p in paths}
        keep = set()
        for p in sorted(pool, key=len):
            if not any(p[:k] in keep for k in range(len(p))):
                keep.add(p)
        changed = True
        while changed:
            changed = False
            by_parent = {}
            for p in keep:
                if p:
                    by_parent.setdefault(p[:-1], set()).add(p)
            for parent, kids in by_parent.items():
                if parent in keep:
                    continue
                if parent:
                    v = diagram.receiving(len(parent) - 1, parent[-1])
                    family = len(diagram.ext[v])
                else:
                    family = len(diagram.level1)
                if len(kids) == family:
                    keep -= kids
                    keep.add(parent)
                    changed = True
        return frozenset(keep)

    @property
    def empty(self) -> bool:
        return not self.paths

    @property
    def whole(self) -> bool:
        return self.paths == frozenset({()})

    def __eq__(self, other):
        return isinstance(other, CylinderSet) and self.paths == other.paths

    def __hash__(self):
        return hash(self.paths)

    def __repr__(self):
        inside = ", ".join(map(str, sorted(self.paths)))
        return f"CylinderSet({{{inside}}})"

    def union(self, other: "CylinderSet") -> "CylinderSet":
        return CylinderSet(self.diagram, set(self.paths) | set(other.paths))

    def intersect(self, other: "CylinderSet") -> "CylinderSet":
        out = []
        for p in self.paths:
            for q in other.paths:
                if len(p) <= len(q):
                    if q[: len(p)] == p:
                        out.append(q)
                elif p[: len(q)] == q:
                    out.append(p)
        return CylinderSet(self.diagram, out, _canonical=True)

    def subtract(self, other: "CylinderSet") -> "CylinderSet":
        out = []
        for p in self.paths:
            pieces = [p]
            for q in other.paths:
                nxt = []
                for piece in pieces:
                    if len(q) >= len(piece):
                        if q[: len(piece)] == piece:
                            nxt.extend(self._carve(piece, q))
                        else:
                            nxt.append(piece)
                    elif piece[: len(q)] == q:
                        continue  # swallowed whole
                    else:
                        nxt.append(piece)
                pieces = nxt
            out.extend(pieces)
        return CylinderSet(self.diagram, out)

    def _carve(self, piece: tuple, removed: tuple) -> list:
        """piece minus one deeper cylinder, as a list of sibling cylinders."""
        out = []
        cur = piece
        for k in range(len(piece), len(removed)):
            target = removed[: k + 1]
            for ext in _extensions(self.diagram, cur):
                if ext != target:
                    out.append(ext)
            cur = target
        return out

    def refine_to(self, depth: int) -> list:
        """The set as a list of cylinders, each of length at least depth."""
        out = []
        stack = list(self.paths)
        while stack:
            p = stack.pop()
            if len(p) >= depth:
                out.append(p)
            else:
                stack.extend(_extensions(self.diagram, p))
        return out

    def measure(self, mu: "CylinderMeasure"):
        total = Fraction(0)
        for p in self.paths:
            total = total + mu.mass(p)
        return total


def sigma_set(cs: CylinderSet) -> CylinderSet:
    moved = []
    for p in cs.paths:
        if not p:
            return CylinderSet(cs.diagram, [()])
        moved.append(sigma_path(cs.diagram, p))
    return CylinderSet(cs.diagram, moved, _canonical=True)


def _exact_ray_image(diagram: OrderedBratteli, path: tuple, direction: int) -> list:
    """Exact image cylinders of a pure extreme atom.

    Departure rewrites rebuild along the opposite wall, so past the
    absorption window every image lands inside the opposite ray atom one
    window coarser than the input; rewrites also keep the deepest vertex,
    hence the mass, so that containment is onto up to finitely many
    extensions cut out: those whose pulled-back departure lands outside the
    input atom.  Extensions of the coarse target are classified by the
    exact inverse rewrite; undetermined ones are refined, and the pure
    chain itself counts as covered once it is past the absorption window,
    where the continuity of the limiting ray takes over.
    """

    depth = len(path)
    germ = _pure_germ(diagram, path, direction)
    if germ is None or depth <= diagram.absorb:
        raise ConsistencyError("_exact_ray_image needs a deep pure extreme atom")
    kind = "alpha" if germ == (1, -1) else "beta"
    target = _ray_atom(diagram, _RAY_TARGET[(direction, kind)], depth - diagram.absorb)
    settle = depth + diagram.absorb + 2
    covered, excluded = [], []
    stack = _extensions(diagram, target)
    while stack:
        q = stack.pop()
        pre = _rewrite(diagram, q, -direction)
        if pre is None:
            if _pure_germ(diagram, q, -direction) is not None and len(q) >= settle:
                covered.append(q)
            elif len(q) > settle + 2 * diagram.absorb + 8:
                raise ConsistencyError("an impure chain refused to depart near a ray image")
            else:
                stack.extend(_extensions(diagram, q))
        elif len(pre) < depth:
            if path[: len(pre)] == pre:
                # the preimage straddles the input atom; split it
                stack.extend(_extensions(diagram, q))
            else:
                excluded.append(q)
        elif pre[:depth] == path:
            covered.append(q)
        else:
            excluded.append(q)
    if not excluded:
        return [target]
    return covered


def exact_image(diagram: OrderedBratteli, cs: CylinderSet, inverse: bool = False) -> CylinderSet:
    """The exact phi (or phi inverse) image of a clopen set."""

    direction = -1 if inverse else 1
    out = []
    stack = []
    for p in cs.paths:
        if not p:
            return CylinderSet(diagram, [()])
        stack.append(p)
    guard = 0
    while stack:
        guard += 1
        if guard > 200000:
            raise ConsistencyError("exact_image expansion ran away")
        p = stack.pop()
        rw = _rewrite(diagram, p, direction)
        if rw is not None:
            out.append(rw)
        elif _pure_germ(diagram, p, direction) is not None and len(p) > diagram.absorb:
            out.extend(_exact_ray_image(diagram, p, direction))
        else:
            stack.extend(_extensions(diagram, p))
    return CylinderSet(diagram, out)


# ---------------------------------------------------------------------------
# points
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SigmaPoint:
    """A truncated directed germ: a travel sign and a composable arrow chain.

    ``arrows`` lists (vertex, position) pairs, one per level; construction
    validates composability against the diagram.
    """

    diagram: OrderedBratteli
    sign: int
    arrows: tuple

    def __post_init__(self):
        if self.sign not in (1, -1):
            raise ValidationError("the sign of a point must be +1 or -1")
        if not self.arrows:
            raise ValidationError("a point needs at least one level")
        object.__setattr__(self, "arrows", tuple(map(tuple, self.arrows)))
        self.diagram.check_path(self.path)

    @property
    def depth(self) -> int:
        return len(self.arrows)

    @property
    def path(self) -> tuple:
        return _encode(self.diagram, self.sign, list(self.arrows))

    @classmethod
    def from_path(cls, diagram: OrderedBratteli, path: tuple) -> "SigmaPoint":
        s, vs, ts, _ = _decode(diagram, path)
        return cls(diagram, s, tuple(zip(vs, ts)))

    def __eq__(self, other):
        return (
            isinstance(other, SigmaPoint)
            and self.diagram is other.diagram
            and self.sign == other.sign
            and self.arrows == other.arrows
        )

    def __hash__(self):
        return hash((id(self.diagram), self.sign, self.arrows))


def sigma_point(diagram: OrderedBratteli, sign: int, arrows) -> SigmaPoint:
    return SigmaPoint(diagram, sign, tuple(arrows))


def S(point: SigmaPoint) -> SigmaPoint:
    """The direction flip; an involution on points."""

    return SigmaPoint(point.diagram, -point.sign, point.arrows)


def phi(point: SigmaPoint, inverse: bool = False) -> SigmaPoint:
    """Move past the forward endpoint, when the truncation determines it.

    Points agreeing with a limiting ray through the whole truncation keep
    their departure level out of sight; that raises a typed error rather
    than guessing.
    """

    d = point.diagram
    rw = _rewrite(d, point.path, -1 if inverse else 1)
    if rw is None:
        raise UndeterminedAtDepth(point.depth, "phi inverse" if inverse else "phi")
    return SigmaPoint.from_path(d, rw)


def special_points(diagram: OrderedBratteli, depth: int) -> dict:
    """Truncations of the four limiting rays, keyed by their usual names.

    phi extends continuously to the rays by a_minus -> b_plus and
    b_minus -> a_plus; the set-level resolution of the corresponding atoms
    returns exactly those targets.
    """

    return {
        "a_minus": _ray_atom(diagram, (-1, "min"), depth),
        "a_plus": _ray_atom(diagram, (1, "min"), depth),
        "b_minus": _ray_atom(diagram, (1, "max"), depth),
        "b_plus": _ray_atom(diagram, (-1, "max"), depth),
    }


# ---------------------------------------------------------------------------
# invariant measure
# ---------------------------------------------------------------------------


class CylinderMeasure:
    """The unique invariant probability measure on the path space.

    A depth-d cylinder ending at vertex v has mass weight(v) / (2 lam^d),
    where the weights solve (incidence)^T w = lam w and sum to one.  Each
    sign half then carries mass 1/2 and masses add up along refinements.
    Arithmetic is rational when lam is, algebraic otherwise.
    """

    def __init__(self, diagram: OrderedBratteli):
        self.diagram = diagram
        self.lam = diagram.lam
        self.weights = diagram.weights

    def mass(self, path: tuple):
        if not path:
            return Fraction(1)
        v = self.diagram.receiving(len(path) - 1, path[-1])
        return self.weights[v - 1] * self.lam ** (-len(path)) / 2

    def __repr__(self):
        return f"CylinderMeasure(lam={self.lam}, weights={self.weights})"


def invariant_measure(diagram: OrderedBratteli) -> CylinderMeasure:
    return CylinderMeasure(diagram)


# ---------------------------------------------------------------------------
# minimality
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MinimalityReport:
    minimal: bool
    depth: int
    tracking_depth: int
    components: int
    f_atoms: tuple
    steps_bound: int
    threshold: int
    detail: str


def _atom_transitions(diagram: OrderedBratteli, depth: int) -> tuple:
    """(atoms, index, edges) of the phi transition graph at a depth."""

    atoms = cylinders(diagram, depth)
    index = {a: i for i, a in enumerate(atoms)}
    edges = set()
    for i, a in enumerate(atoms):
        pending = [a]
        budget = 0
        while pending:
            budget += 1
            if budget > 20000:
                raise ConsistencyError("transition resolution blew its refinement budget")
            cur = pending.pop()
            img = phi_prefix_image(diagram, cur, depth)
            if img is None:
                pending.extend(_extensions(diagram, cur))
            else:
                edges.add((i, index[img]))
    return atoms, index, sorted(edges)


def minimality_check(diagram: OrderedBratteli, depth: int) -> MinimalityReport:
    """Search for a phi-invariant clopen splitting at a tracked depth.

    The transition graph is built on cylinders at the deepest level whose
    atom count stays within budget.  A union of weak components whose flip
    is its complement certifies non-minimality (the oriented case); a single
    weak component is the reported evidence of minimality, together with an
    everyone-reaches-everyone step bound.  The verdict is cross-checked
    against orientability, which must agree.
    """

    if depth < 1:
        raise ValidationError("depth must be at least 1")
    budget = 30000
    tracking = 1
    for t in range(1, depth + 1):
        if sum(diagram.path_counts(t)) <= budget:
            tracking = t
        else:
            break
    atoms, index, edges = _atom_transitions(diagram, tracking)
    n = len(atoms)

    parent = list(range(n))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for a, b in edges:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[ra] = rb
    comp_of = [find(i) for i in range(n)]
    comps = sorted(set(comp_of))
    comp_idx = {c: k for k, c in enumerate(comps)}
    members = [[] for _ in comps]
    for i in range(n):
        members[comp_idx[comp_of[i]]].append(i)

    flip = [index[sigma_path(diagram, a)] for a in atoms]
    comp_flip = {}
    for k, mem in enumerate(members):
        targets = {comp_idx[comp_of[flip[i]]] for i in mem}
        if len(targets) != 1:
            raise ConsistencyError("the flip tore a phi component apart")
        comp_flip[k] = targets.pop()

    threshold = 10 * n * n
    if comp_flip and all(comp_flip[k] != k for k in comp_flip):
        chosen, used = [], set()
        for k in range(len(comps)):
            if k in used:
                continue
            chosen.append(k)
            used.add(k)
            used.add(comp_flip[k])
        f_atoms = tuple(sorted(atoms[i] for k in chosen for i in members[k]))
        f_idx = {index[a] for a in f_atoms}
        if any(flip[i] in f_idx for i in f_idx) or len(f_idx) * 2 != n:
            raise ConsistencyError("the invariant splitting is not a flip complement")
        if not diagram.oriented:
            raise ConsistencyError("an invariant splitting exists but the rule is not oriented")
        detail = (
            f"a phi-invariant union of {len(f_atoms)} of {n} depth-{tracking} cylinders "
            f"splits the space into a sign-coherent half and its flip (the rule is oriented)"
        )
        return MinimalityReport(
            minimal=False,
            depth=depth,
            tracking_depth=tracking,
            components=len(comps),
            f_atoms=f_atoms,
            steps_bound=0,
            threshold=threshold,
            detail=detail,
        )

    if len(comps) > 1:
        raise ConsistencyError(
            "the transition graph splits without a sign splitting; "
            "this contradicts the orientation dichotomy"
        )
    if diagram.oriented:
        raise ConsistencyError("an oriented rule produced no invariant splitting")

    fwd = [[] for _ in range(n)]
    rev = [[] for _ in range(n)]
    for a, b in edges:
        fwd[a].append(b)
        rev[b].append(a)

    def eccentricity(adj):
        dist = [-1] * n
        dist[0] = 0
        queue = [0]
        far = 0
        while queue:
            nxt = []
            for x in queue:
                for y in adj[x]:
                    if dist[y] < 0:
                        dist[y] = dist[x] + 1
                        far = max(far, dist[y])
                        nxt.append(y)
            queue = nxt
        if any(x < 0 for x in dist):
            raise ConsistencyError("a single weak component is not strongly connected")
        return far

    bound = eccentricity(fwd) + eccentricity(rev)
    detail = (
        f"no invariant splitting among {n} depth-{tracking} cylinders; every cylinder "
        f"reaches every other within {bound} steps (threshold {threshold})"
    )
    return MinimalityReport(
        minimal=True,
        depth=depth,
        tracking_depth=tracking,
        components=1,
        f_atoms=(),
        steps_bound=bound,
        threshold=threshold,
        detail=detail,
    )


# ---------------------------------------------------------------------------
# sampled orbit checks
# ---------------------------------------------------------------------------


def random_path(diagram: OrderedBratteli, depth: int, rng: random.Random) -> tuple:
    out = [rng.randrange(len(diagram.level1))]
    for _ in range(depth - 1):
        v = diagram.receiving(len(out) - 1, out[-1])
        out.append(rng.choice(diagram.ext[v]))
    return tuple(out)


@dataclass(frozen=True)
class ConjugacyReport:
    samples: int
    depth: int
    k_bound: int
    agreements: int
    undetermined: int
    seed: int


def conjugacy_check(
    diagram: OrderedBratteli,
    depth: int,
    samples: int = 100,
    k_bound: int = 3,
    seed: int = 0,
) -> ConjugacyReport:
    """Sampled check that the interval coding intertwines the two dynamics.

    Works each sample at depth plus a margin and applies phi up to k_bound
    times both ways.  Agreement means every iterate was determined and
    rewrote only arrows inside the margin window, leaving the tail beyond
    ``depth`` literally shared -- the path-space image then codes the same
    boundary point as the interval picture.  The flip needs no sampling
    beyond its sign bookkeeping: it never touches arrows at all.
    """

    rng = random.Random(seed)
    work = depth + 2 * k_bound + diagram.absorb + 2
    agreements = 0
    undetermined = 0
    for _ in range(samples):
        p = random_path(diagram, work, rng)
        verdict = "agree"
        for inverse in (False, True):
            cur = p
            for _ in range(k_bound):
                cur = phi_path(diagram, cur, inverse=inverse)
                if cur is None:
                    verdict = "undetermined"
                    break
                if cur[depth:] != p[depth:]:
                    verdict = "tail moved"
                    break
            if verdict != "agree":
                break
        if verdict == "agree":
            agreements += 1
        elif verdict == "undetermined":
            undetermined += 1
    return ConjugacyReport(
        samples=samples,
        depth=depth,
        k_bound=k_bound,
        agreements=agreements,
        undetermined=undetermined,
        seed=seed,
    )


@dataclass(frozen=True)
class FreenessReport:
    samples: int
    depth: int
    k_bound: int
    violations: int
    undetermined: int
    seed: int


def _periodic_path(diagram: OrderedBratteli, depth: int) -> tuple:
    """An adversarial sample: a deterministic eventually periodic chain."""

    out = [0]  # ids start with the plus block of vertex 1
    v = diagram.level1[0][1]
    for k in range(depth - 1):
        e = diagram.ext[v][0] if k % 2 else diagram.ext[v][-1]
        out.append(e)
        v = diagram.deep[e][0]
    return tuple(out)


def freeness_check(
    diagram: OrderedBratteli,
    depth: int,
    samples: int = 200,
    k_bound: int = 3,
    seed: int = 0,
) -> FreenessReport:
    """Sampled check that no nontrivial group element fixes a point.

    Compares S^j phi^k of each sample against the sample at the requested
    depth for every (j, k) != (0, 0) with |k| bounded; a deterministic
    eventually periodic path is always included among the samples, since
    a fixed point would hide in a periodic chain.
    """

    rng = random.Random(seed)
    work = depth + 2 * k_bound + diagram.absorb + 2
    pool = [_periodic_path(diagram, work)]
    for _ in range(samples - 1):
        pool.append(random_path(diagram, work, rng))
    violations = 0
    undetermined = 0
    for p in pool:
        images = {0: p}
        cur = p
        for k in range(1, k_bound + 1):
            cur = phi_path(diagram, cur) if cur is not None else None
            images[k] = cur
        cur = p
        for k in range(1, k_bound + 1):
            cur = phi_path(diagram, cur, inverse=True) if cur is not None else None
            images[-k] = cur
        for k in range(-k_bound, k_bound + 1):
            img = images[k]
            if img is None:
                undetermined += 1
                continue
            for j in (0, 1):
                if j == 0 and k == 0:
                    continue
                q = sigma_path(diagram, img) if j else img
                if q[:depth] == p[:depth]:
                    violations += 1
    return FreenessReport(
        samples=len(pool),
        depth=depth,
        k_bound=k_bound,
        violations=violations,
        undetermined=undetermined,
        seed=seed,
    )


# ---------------------------------------------------------------------------
# fundamental domains
# ---------------------------------------------------------------------------


def fundamental_domain(diagram: OrderedBratteli, involution: str, depth: int) -> CylinderSet:
    """Greedy clopen fundamental domain for S or phi after S, at a depth.

    Walks the depth-``depth`` cylinders in enumeration order, keeping what
    is not yet covered and reserving its image.  A piece meeting its own
    image stops the construction: the partition is too coarse there.
    """

    if involution not in ("S", "phiS"):
        raise ValidationError("involution must be 'S' or 'phiS'")
    if depth < 1:
        raise RefinementNeeded(
            f"a cylinder meets its own image at depth {depth}; refine the partition"
        )

    def image_of(cs: CylinderSet) -> CylinderSet:
        flipped = sigma_set(cs)
        if involution == "S":
            return flipped
        return exact_image(diagram, flipped)

    taken_full = {}
    partial = {}
    kept_paths = set()
    image_paths = set()
    for a in cylinders(diagram, depth):
        if a in taken_full:
            continue
        base = CylinderSet(diagram, [a], _canonical=True)
        if a in partial:
            base = base.subtract(CylinderSet(diagram, partial[a]))
            if base.empty:
                taken_full[a] = "covered"
                continue
        image = image_of(base)
        if not base.intersect(image).empty:
            raise RefinementNeeded(
                f"a cylinder meets its own image at depth {depth}; refine the partition"
            )
        kept_paths |= base.paths
        image_paths |= image.paths
        taken_full[a] = "kept"
        for q in image.paths:
            if len(q) <= depth:
                for r in CylinderSet(diagram, [q], _canonical=True).refine_to(depth):
                    taken_full[r] = "image"
            else:
                partial.setdefault(q[:depth], []).append(q)

    domain = CylinderSet(diagram, kept_paths)
    mirror = CylinderSet(diagram, image_paths)
    if not domain.intersect(mirror).empty:
        raise ConsistencyError("the greedy domain overlaps its image")
    if not domain.union(mirror).whole:
        raise ConsistencyError("the greedy domain misses part of the space")
    return domain


# ---------------------------------------------------------------------------
# castles
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class Tower:
    height: int
    base: CylinderSet
    levels: tuple


@dataclass(frozen=True)
class Castle:
    towers: tuple
    base: CylinderSet
    seed_atom: tuple
    pairing: tuple

    @property
    def min_height(self) -> int:
        return min(t.height for t in self.towers)


def _flow_decomposition(diagram, base: CylinderSet, least: int, cap: int):
    """First-return decomposition of a clopen base, or None if too coarse."""

    returns = []
    current = base
    for m in range(1, cap + 1):
        image = exact_image(diagram, current)
        back = image.intersect(base)
        current = image.subtract(base)
        if not back.empty:
            if m < least:
                return None
            returns.append((m, back))
        if current.empty:
            return returns
    return None


def castle(diagram: OrderedBratteli, R: int, max_depth: int = 8) -> Castle:
    """Return-time castle over a symmetric base, all heights at least R.

    The base is Y = Z u phi(flip(Z)) for a cylinder Z chosen deep enough
    that the first return time reaches R.  Towers are the return-time
    classes of Y split along its two pieces; the flip pairs the towers while
    reversing levels, and the castle properties are verified exactly: the
    bases partition Y, the levels partition the whole space, phi climbs each
    tower one level at a time, and the top layer maps back onto Y.
    """

    if R < 1:
        raise ValidationError("R must be at least 1")
    sampled = freeness_check(diagram, depth=4, samples=24, seed=0)
    if sampled.violations:
        raise ValidationError("the group action is not free at the sampled depth")
    mu = invariant_measure(diagram)
    chosen = None
    for depth in range(1, max_depth + 1):
        for a in cylinders(diagram, depth)[:64]:
            if _rewrite(diagram, a, 1) is None or _rewrite(diagram, a, -1) is None:
                continue
            partner = phi_path(diagram, sigma_path(diagram, a))
            if partner is None or partner == a:
                continue
            base = CylinderSet(diagram, [a, partner])
            bound = mu.mass(a)
            cap = 8 * int(1 / bound) + 8 if isinstance(bound, Fraction) else 4096
            flow = _flow_decomposition(diagram, base, R, cap)
            if flow is not None:
                chosen = (a, partner, base, flow)
                break
        if chosen:
            break
    if not chosen:
        raise ValidationError(f"R={R} exceeds what the depth-{max_depth} truncation supports")
    seed_atom, partner, Y, flow = chosen

    halves = (
        CylinderSet(diagram, [seed_atom], _canonical=True),
        CylinderSet(diagram, [partner], _canonical=True),
    )
    towers = []
    for height, back in flow:
        for half in halves:
            landing = back.intersect(half)
            if landing.empty:
                continue
            floor = landing
            for _ in range(height):
                floor = exact_image(diagram, floor, inverse=True)
            levels = [floor]
            for _ in range(height - 1):
                levels.append(exact_image(diagram, levels[-1]))
            towers.append(Tower(height=height, base=floor, levels=tuple(levels)))

    bases = None
    total = None
    for t in towers:
        if t.height < R:
            raise ConsistencyError("a tower is shorter than the requested R")
        bases = t.base if bases is None else bases.union(t.base)
        for lvl in t.levels:
            total = lvl if total is None else total.union(lvl)
    if bases != Y:
        raise ConsistencyError("the tower bases do not partition the castle base")
    if total is None or not total.whole:
        raise ConsistencyError("the castle levels do not partition the space")
    mass = None
    for t in towers:
        for lvl in t.levels:
            m = lvl.measure(mu)
            mass = m if mass is None else mass + m
    if mass != 1:
        raise ConsistencyError("the castle levels double-count mass")

    tops = None
    for t in towers:
        tops = t.levels[-1] if tops is None else tops.union(t.levels[-1])
    if exact_image(diagram, tops) != bases:
        raise ConsistencyError("phi does not send the tower tops onto the bases")

    pairing = [None] * len(towers)
    for i, t in enumerate(towers):
        flipped = sigma_set(t.base)
        for i2, t2 in enumerate(towers):
            if t2.height == t.height and flipped == t2.levels[-1]:
                pairing[i] = i2
                break
        if pairing[i] is None:
            raise ConsistencyError("the flip does not reverse any tower")
        t2 = towers[pairing[i]]
        for idx, lvl in enumerate(t.levels):
            if sigma_set(lvl) != t2.levels[t.height - 1 - idx]:
                raise ConsistencyError("the flip fails to reverse a tower level")
    for i, p in enumerate(pairing):
        if pairing[p] != i:
            raise ConsistencyError("the tower pairing is not an involution")

    return Castle(towers=tuple(towers), base=Y, seed_atom=seed_atom, pairing=tuple(pairing))


# ---------------------------------------------------------------------------
# tracial Rokhlin pairs
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RokhlinPair:
    f1: tuple
    f2: tuple
    eps: Fraction
    ramp: int
    returns: int
    castle: Castle
    phi_defect: Fraction
    leftover: Fraction


def _piece_value(pieces: tuple, cs: CylinderSet) -> Fraction:
    """Value of a castle-level step function on a single castle level."""

    for piece, val in pieces:
        inter = piece.intersect(cs)
        if inter == cs:
            return val
        if not inter.empty:
            raise ConsistencyError("a step function straddles a castle level")
    return Fraction(0)


def rokhlin_pair(diagram: OrderedBratteli, eps, max_depth: int = 12) -> RokhlinPair:
    """Two disjoint ramp functions witnessing the tracial Rokhlin estimate.

    Builds a castle with heights at least max(M, ceil(4M/eps)) for
    M = ceil(1/eps), puts a trapezoid profile on the lower half of every
    tower and flips it for the second function.  The four bounds are
    verified exactly: values in [0,1], sup |f o phi - f| <= eps, disjoint
    supports with f2 = f1 o S, and mass of 1 - f1 - f2 at most eps.
    """

    eps = Fraction(eps)
    if eps <= 0:
        raise ValidationError("eps must be positive")
    report = minimality_check(diagram, depth=3)
    if not report.minimal:
        raise ValidationError(f"phi is not minimal, so no Rokhlin pair exists: {report.detail}")
    M = max(1, math.ceil(1 / eps))
    R = max(M, math.ceil(4 * M / eps))
    cas = castle(diagram, R, max_depth=max_depth)
    mu = invariant_measure(diagram)

    f1 = []
    for t in cas.towers:
        half = (t.height - 1) // 2
        for i in range(half + 1):
            val = min(Fraction(1), Fraction(i, M), Fraction(half - i, M))
            if val > 0:
                f1.append((t.levels[i], val))
    f2 = [(sigma_set(piece), val) for piece, val in f1]

    for pieces in (f1, f2):
        for _, val in pieces:
            if not 0 <= val <= 1:
                raise ConsistencyError("a ramp value escaped [0, 1]")

    supp1 = supp2 = None
    for piece, _ in f1:
        supp1 = piece if supp1 is None else supp1.union(piece)
    for piece, _ in f2:
        supp2 = piece if supp2 is None else supp2.union(piece)
    if supp1 is not None and supp2 is not None and not supp1.intersect(supp2).empty:
        raise ConsistencyError("the two ramp functions overlap")

    # sup |f o phi - f| stepped through the tower levels; tops and bases all
    # carry the value 0, so the wrap transitions contribute nothing
    defect = Fraction(0)
    for pieces in (f1, f2):
        for t in cas.towers:
            prev = Fraction(0)
            for lvl in t.levels:
                here = _piece_value(pieces, lvl)
                defect = max(defect, abs(here - prev))
                prev = here
            defect = max(defect, prev)
    if defect > eps:
        raise ConsistencyError(f"the ramp steps exceed eps: {defect} > {eps}")

    mass1 = sum((piece.measure(mu) * val for piece, val in f1), Fraction(0))
    mass2 = sum((piece.measure(mu) * val for piece, val in f2), Fraction(0))
    leftover = 1 - mass1 - mass2
    if leftover > eps:
        raise ConsistencyError(f"the pair misses too much mass: {leftover} > {eps}")

    return RokhlinPair(
        f1=tuple(f1),
        f2=tuple(f2),
        eps=eps,
        ramp=M,
        returns=R,
        castle=cas,
        phi_defect=defect,
        leftover=leftover,
    )


# ---------------------------------------------------------------------------
# the endpoint collision map
# ---------------------------------------------------------------------------


def lambda_encoding(diagram: OrderedBratteli, path: tuple) -> tuple:
    """Symbolic trailing-endpoint data of a truncated point, level by level.

    At each level the trailing endpoint either sits over the wedge point
    (marker "v") or falls across an interior cut, recorded as the unordered
    pair of flanking interval chains with signs dropped.  Two truncations
    collide exactly when they share every level; the colliding pairs are
    {sigma, phi(S(sigma))}, which straddle a shared cut with opposite
    directions.
    """

    diagram.check_path(path)
    out = []
    for k in range(1, len(path) + 1):
        prefix = path[:k]
        neighbor = _rewrite(diagram, prefix, -1)
        if neighbor is None:
            out.append("v")
            continue
        out.append(frozenset((_signless(diagram, prefix), _signless(diagram, neighbor))))
    return tuple(out)


def _signless(diagram: OrderedBratteli, path: tuple) -> tuple:
    s, vs, ts, _ = _decode(diagram, path)
    return tuple(zip(vs, ts))
