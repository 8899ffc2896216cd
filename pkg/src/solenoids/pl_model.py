"""Piecewise-linear metric model of a wrapping rule.

Each edge e becomes a segment [0, len(e)] whose length is the e entry of
the positive left eigenvector of the edge cover matrix, scaled so the
longest edge has length 1.  In that metric the rule is affine with one
constant slope: the word for e splits [0, len(e)] into subintervals, one
per letter, and each subinterval is stretched by exactly the slope onto
its target edge, with direction reversed on negative letters.

Offsets, lengths and the slope are exact elements of the eigenvalue
field (plain Fractions whenever the eigenvalue is rational), so every
comparison in this module is a certified decision, not a float guess.
For presentation a value can be squeezed into an outward-rounded dyadic
enclosure of configurable width.

Two distances appear and they are not interchangeable.  The arc distance
is measured along a single edge and satisfies the exact identity
|h(x) - h(y)| = slope * |x - y| inside one branch.  The geodesic
distance on the graph is never larger, which is the direction every
bound in this module needs.
"""

from __future__ import annotations

import random
from dataclasses import dataclass
from fractions import Fraction
from typing import NamedTuple

from .exact import dyadic_enclosure, perron_data
from .intlinalg import mat_pow_int
from .presolenoid import (
    ConsistencyError,
    SolenoidError,
    ValidationError,
    WrappingRule,
    edge_cover_matrix,
    power,
    validate_axioms,
)


class BranchAmbiguity(SolenoidError):
    """A point on a branch boundary has two one-sided images.

    Both images represent the same vertex of the graph; they only differ
    as edge-local coordinates.  `candidates` lists them left to right.
    """

    def __init__(self, point, candidates):
        self.point = point
        self.candidates = tuple(candidates)
        sides = ", ".join(f"({c.edge}, {c.offset})" for c in self.candidates)
        super().__init__(
            f"offset {point.offset} on edge {point.edge} is a branch boundary; "
            f"one-sided images: {sides}"
        )


class GraphPoint(NamedTuple):
    edge: str
    offset: object  # Fraction, or a FieldElement of the slope field


class Branch(NamedTuple):
    """One letter of a wrapping word with its source subinterval."""

    index: int
    letter: object  # Letter
    lo: object
    hi: object


class Subinterval(NamedTuple):
    """A component of an edge minus the depth-n vertex preimages."""

    lo: object
    hi: object
    target: str  # edge the n-th iterate maps this interval onto
    orient: int  # +1 when that iterate is increasing here


class PLRealization:
    """Metric carrier for a wrapping rule with exact affine branch data."""

    def __init__(self, rule: WrappingRule, bits: int = 64):
        self.rule = rule
        self.bits = bits
        self._cover = edge_cover_matrix(rule)
        pd = perron_data(self._cover)
        if (pd.value - 1).sign() <= 0:
            raise ValidationError("the growth rate is not larger than 1; no expanding metric")
        if pd.left is None or any(x.sign() <= 0 for x in pd.left):
            raise ValidationError("the cover matrix has no positive left eigenvector")
        self.perron = pd
        if pd.field.is_rational:
            self.slope = pd.value.as_fraction()
            lengths = [x.as_fraction() for x in pd.left]
        else:
            self.slope = pd.value
            lengths = list(pd.left)
        self.lengths = {e: lengths[i] for i, e in enumerate(rule.edge_ids)}
        self._zero = self.slope * 0
        self.branches = {}
        for e in rule.edge_ids:
            acc = self._zero
            row = []
            for i, letter in enumerate(rule.words[e]):
                step = self.lengths[letter.edge] / self.slope
                row.append(Branch(i, letter, acc, acc + step))
                acc = acc + step
            if not acc == self.lengths[e]:
                raise ConsistencyError(f"the branch table for {e} does not close up")
            self.branches[e] = tuple(row)
        self._vdist = None
        self._diam = None
        self._subs = {}

    @property
    def edge_ids(self) -> tuple:
        return self.rule.edge_ids

    # -- points ------------------------------------------------------------

    def point(self, edge: str, offset) -> GraphPoint:
        if edge not in self.lengths:
            raise ValidationError(f"unknown edge {edge}")
        if isinstance(offset, int):
            offset = Fraction(offset)
        if offset < 0 or offset > self.lengths[edge]:
            raise ValidationError(f"offset {offset} is outside edge {edge}")
        return GraphPoint(edge, offset)

    def _check_point(self, pt: GraphPoint) -> None:
        if pt.edge not in self.lengths:
            raise ValidationError(f"unknown edge {pt.edge}")
        if pt.offset < 0 or pt.offset > self.lengths[pt.edge]:
            raise ValidationError(f"offset {pt.offset} is outside edge {pt.edge}")

    def is_cut(self, edge: str, offset) -> bool:
        """True when the offset is an interior branch boundary of the edge."""
        return any(b.lo == offset for b in self.branches[edge][1:])

    def enclosure(self, value) -> tuple:
        """Outward-rounded dyadic (lo, hi) for reports; exact when rational."""
        if isinstance(value, Fraction):
            return value, value
        return dyadic_enclosure(value, self.bits)

    # -- the map and its inverse branches -----------------------------------

    def _branch_image(self, b: Branch, x) -> GraphPoint:
        if b.letter.sign > 0:
            return GraphPoint(b.letter.edge, self.slope * (x - b.lo))
        return GraphPoint(b.letter.edge, self.slope * (b.hi - x))

    def eval_h(self, pt: GraphPoint) -> GraphPoint:
        """Image of a graph point under the rule.

        Interior branch boundaries raise BranchAmbiguity carrying both
        one-sided images (they name the same vertex on different edges).
        """
        self._check_point(pt)
        bs = self.branches[pt.edge]
        x = pt.offset
        for b in bs:
            if b.lo < x < b.hi:
                return self._branch_image(b, x)
        if x == bs[0].lo:
            return self._branch_image(bs[0], x)
        if x == bs[-1].hi:
            return self._branch_image(bs[-1], x)
        left = next(b for b in bs if b.hi == x)
        right = next(b for b in bs if b.lo == x)
        raise BranchAmbiguity(
            pt, (self._branch_image(left, x), self._branch_image(right, x))
        )

    def inverse_branch(self, pt: GraphPoint, edge: str, index: int) -> GraphPoint:
        """The preimage of pt inside letter `index` of the word for `edge`."""
        self._check_point(pt)
        if edge not in self.branches:
            raise ValidationError(f"unknown edge {edge}")
        bs = self.branches[edge]
        if not 0 <= index < len(bs):
            raise ValidationError(
                f"the word for {edge} has letters 0..{len(bs) - 1}; got {index}"
            )
        b = bs[index]
        if b.letter.edge != pt.edge:
            raise ValidationError(
                f"letter {index} of the word for {edge} traverses "
                f"{b.letter.edge}, not {pt.edge}"
            )
        if b.letter.sign > 0:
            return GraphPoint(edge, b.lo + pt.offset / self.slope)
        return GraphPoint(edge, b.hi - pt.offset / self.slope)

    def preimage_branches(self, edge: str) -> tuple:
        """All (edge, letter index) choices whose letter traverses `edge`."""
        out = []
        for e in self.edge_ids:
            for b in self.branches[e]:
                if b.letter.edge == edge:
                    out.append((e, b.index))
        return tuple(out)

    # -- graph geometry ------------------------------------------------------

    def _vertex_distances(self) -> dict:
        if self._vdist is not None:
            return self._vdist
        g = self.rule.graph
        vs = g.vertices
        d = {u: {w: (self._zero if u == w else None) for w in vs} for u in vs}
        for e, s, t in g.edges:
            length = self.lengths[e]
            if d[s][t] is None or length < d[s][t]:
                d[s][t] = length
                d[t][s] = length
        for k in vs:
            for i in vs:
                ik = d[i][k]
                if ik is None:
                    continue
                for j in vs:
                    kj = d[k][j]
                    if kj is None:
                        continue
                    via = ik + kj
                    if d[i][j] is None or via < d[i][j]:
                        d[i][j] = via
                        d[j][i] = via
        self._vdist = d
        return d

    def distance(self, p1: GraphPoint, p2: GraphPoint):
        """Geodesic distance between two graph points."""
        self._check_point(p1)
        self._check_point(p2)
        g = self.rule.graph
        best = None
        if p1.edge == p2.edge:
            best = abs(p1.offset - p2.offset)
        vd = self._vertex_distances()
        ends1 = (
            (g.source(p1.edge), p1.offset),
            (g.target(p1.edge), self.lengths[p1.edge] - p1.offset),
        )
        ends2 = (
            (g.source(p2.edge), p2.offset),
            (g.target(p2.edge), self.lengths[p2.edge] - p2.offset),
        )
        for u, da in ends1:
            for w, db in ends2:
                if vd[u][w] is None:
                    continue
                cand = da + vd[u][w] + db
                if best is None or cand < best:
                    best = cand
        if best is None:
            raise ValidationError("the points lie in different graph components")
        return best

    def same_point(self, p1: GraphPoint, p2: GraphPoint) -> bool:
        return self.distance(p1, p2) == 0

    def diameter_bound(self):
        """Diameter of the graph: exact for one-vertex graphs, else a
        certified upper bound (route through the nearer endpoints)."""
        if self._diam is not None:
            return self._diam
        g = self.rule.graph
        if len(g.vertices) == 1:
            tops = sorted(self.lengths.values(), reverse=True)
            if len(tops) == 1:
                self._diam = tops[0] / 2
            else:
                self._diam = (tops[0] + tops[1]) / 2
            return self._diam
        vd = self._vertex_distances()
        best = None
        for e in self.edge_ids:
            for f in self.edge_ids:
                legs = []
                for u in (g.source(e), g.target(e)):
                    for w in (g.source(f), g.target(f)):
                        if vd[u][w] is None:
                            raise ValidationError(
                                "the graph is disconnected; it has no finite diameter"
                            )
                        legs.append(vd[u][w])
                # min over four endpoint routes <= their average
                avg = (legs[0] + legs[1] + legs[2] + legs[3]) / 4
                cand = self.lengths[e] / 2 + self.lengths[f] / 2 + avg
                if best is None or best < cand:
                    best = cand
        self._diam = best
        return best

    # -- iterated subdivision ------------------------------------------------

    def subdivision(self, edge: str, n: int) -> tuple:
        """The depth-n intervals on `edge`, in increasing offset order.

        These are the components of the edge minus the n-fold vertex
        preimages; the n-th iterate maps each one affinely onto its
        target edge.
        """
        if n < 0:
            raise ValidationError("subdivision depth must be >= 0")
        key = (edge, n)
        cached = self._subs.get(key)
        if cached is not None:
            return cached
        if n == 0:
            out = (Subinterval(self._zero, self.lengths[edge], edge, 1),)
        else:
            rows = []
            for b in self.branches[edge]:
                inner = self.subdivision(b.letter.edge, n - 1)
                if b.letter.sign > 0:
                    for s in inner:
                        rows.append(
                            Subinterval(
                                b.lo + s.lo / self.slope,
                                b.lo + s.hi / self.slope,
                                s.target,
                                s.orient,
                            )
                        )
                else:
                    for s in reversed(inner):
                        rows.append(
                            Subinterval(
                                b.hi - s.hi / self.slope,
                                b.hi - s.lo / self.slope,
                                s.target,
                                -s.orient,
                            )
                        )
            out = tuple(rows)
        self._subs[key] = out
        return out

    def interval_counts(self, n: int) -> dict:
        """Number of depth-n intervals per edge, from cover matrix powers."""
        hn = mat_pow_int(self._cover, n)
        size = len(hn)
        return {
            e: sum(hn[i][j] for i in range(size))
            for j, e in enumerate(self.edge_ids)
        }

    def max_interval_length(self, n: int):
        """Largest depth-n interval length, without enumerating intervals.

        Every depth-n interval mapping onto edge f has exact length
        len(f) * slope**(-n), so the maximum only needs the set of
        reachable targets.
        """
        hn = mat_pow_int(self._cover, n)
        size = len(hn)
        best = None
        for i, f in enumerate(self.edge_ids):
            if not any(hn[i][j] for j in range(size)):
                continue
            if best is None or best < self.lengths[f]:
                best = self.lengths[f]
        if best is None:
            raise ConsistencyError("no reachable targets at this depth")
        return best * self.slope ** (-n)


def eval_h(p: PLRealization, point: GraphPoint) -> GraphPoint:
    return p.eval_h(point)


def inverse_branch(p: PLRealization, point: GraphPoint, edge: str, index: int) -> GraphPoint:
    return p.inverse_branch(point, edge, index)


# --- truncated solenoid points ----------------------------------------------


@dataclass(frozen=True, eq=False)
class SolenoidPoint:
    """A truncated backward orbit: coordinate i+1 maps onto coordinate i."""

    realization: PLRealization
    coords: tuple  # GraphPoint entries (x_0, ..., x_N)

    @property
    def depth(self) -> int:
        return len(self.coords) - 1


def solenoid_point(p: PLRealization, coords, check: bool = True) -> SolenoidPoint:
    pts = tuple(coords)
    if not pts:
        raise ValidationError("a solenoid point needs at least one coordinate")
    for pt in pts:
        p._check_point(pt)
    if check:
        for i in range(len(pts) - 1):
            try:
                candidates = (p.eval_h(pts[i + 1]),)
            except BranchAmbiguity as amb:
                candidates = amb.candidates
            if not any(p.same_point(c, pts[i]) for c in candidates):
                raise ValidationError(
                    f"coordinate {i + 1} does not map onto coordinate {i}"
                )
    return SolenoidPoint(p, pts)


def random_point(p: PLRealization, rng: random.Random, denominator: int = 1024) -> GraphPoint:
    """A random edge point, never a vertex or a branch boundary."""
    while True:
        e = rng.choice(p.edge_ids)
        offset = Fraction(rng.randrange(1, denominator), denominator) * p.lengths[e]
        if not p.is_cut(e, offset):
            return GraphPoint(e, offset)


def random_solenoid_point(p: PLRealization, depth: int, rng: random.Random) -> SolenoidPoint:
    """A random compatible truncation built from random inverse branches."""
    coords = [random_point(p, rng)]
    for _ in range(depth):
        edge, index = rng.choice(p.preimage_branches(coords[-1].edge))
        coords.append(p.inverse_branch(coords[-1], edge, index))
    return solenoid_point(p, coords)


@dataclass(frozen=True)
class MetricValue:
    """A truncated metric sum with a tail bound valid for any extension."""

    truncated: object
    tail_bound: object

    @property
    def lower(self):
        return self.truncated

    @property
    def upper(self):
        return self.truncated + self.tail_bound


def metric_D(x: SolenoidPoint, y: SolenoidPoint) -> MetricValue:
    """Weighted sum of coordinate distances, weight 2**-i at level i.

    The truncated sum is exact; any infinite extensions of the two
    truncations have a distance between `truncated` and
    `truncated + tail_bound`.
    """
    if x.realization is not y.realization:
        raise ValidationError("the points live in different realizations")
    p = x.realization
    if len(x.coords) != len(y.coords):
        raise ValidationError(
            f"truncation depths differ: {x.depth} vs {y.depth}"
        )
    total = p._zero
    for i in range(len(x.coords)):
        total = total + Fraction(1, 2**i) * p.distance(x.coords[i], y.coords[i])
    tail = Fraction(1, 2**x.depth) * p.diameter_bound()
    return MetricValue(truncated=total, tail_bound=tail)


# --- decay report -------------------------------------------------------------


@dataclass(frozen=True)
class LevelStat:
    n: int
    counts: tuple  # interval count per edge, rule edge order
    max_length: object
    bound: object  # k_const * slope**(-n)
    within_bound: bool
    routes: tuple  # counting routes compared at this level
    counts_match: bool


@dataclass(frozen=True)
class DecayReport:
    """Certified interval decay plus sampled backward-orbit decay.

    Every depth-n interval length is compared exactly against
    k_const * slope**(-n).  Sampled pairs drawn from one depth-n interval
    are pushed forward level by level: the arc identity asserts the exact
    factor `slope` per level, the geodesic bound asserts distance at
    level i at most k_const * slope**(-i), and fitted_constant is the
    largest observed distance * slope**i.  The cylinder bound asserts the
    truncated metric between points sharing coordinates up to level n is
    at most 2**-n times the graph diameter.
    """

    depth: int
    samples: int
    seed: int
    k_const: object
    levels: tuple
    pairs_checked: int
    arc_ratio_exact: bool
    geodesic_within_k: bool
    fitted_constant: object
    cylinder_bound_ok: bool

    @property
    def all_passed(self) -> bool:
        return (
            all(s.within_bound and s.counts_match for s in self.levels)
            and self.arc_ratio_exact
            and self.geodesic_within_k
            and self.cylinder_bound_ok
        )


def _random_chain_interval(p: PLRealization, depth: int, rng: random.Random):
    """A uniformly drawn depth-`depth` interval, without enumeration.

    Returns (edges, lo, hi): edges[k] carries the k-th forward image, so
    a point of the interval has coordinate k on edges[k].
    """
    edges = [rng.choice(p.edge_ids)]
    picks = []
    for _ in range(depth):
        b = rng.choice(p.branches[edges[-1]])
        picks.append(b)
        edges.append(b.letter.edge)
    lo, hi = p._zero, p.lengths[edges[-1]]
    for b in reversed(picks):
        if b.letter.sign > 0:
            lo, hi = b.lo + lo / p.slope, b.lo + hi / p.slope
        else:
            lo, hi = b.hi - hi / p.slope, b.hi - lo / p.slope
    return edges, lo, hi


def decay_checks(
    p: PLRealization,
    depth: int,
    samples: int,
    seed: int = 0,
    enumeration_cap: int = 4096,
    substitution_cap: int = 200_000,
) -> DecayReport:
    """Verify the interval decay bounds and sample backward-orbit decay."""
    report = validate_axioms(p.rule)
    if not report.all_passed:
        raise ValidationError(
            "decay checks need all axioms; failing: "
            + ", ".join(report.failed_axioms())
        )
    if depth < 0:
        raise ValidationError("depth must be >= 0")
    k_const = max(self_len for self_len in p.lengths.values())
    inv = 1 / p.slope

    levels = []
    for n in range(depth + 1):
        counts = p.interval_counts(n)
        max_len = p.max_interval_length(n)
        bound = k_const * inv**n
        routes = ["matrix"]
        ok = True
        if all(counts[e] <= enumeration_cap for e in p.edge_ids):
            routes.append("enumeration")
            seen_max = None
            for e in p.edge_ids:
                subs = p.subdivision(e, n)
                if len(subs) != counts[e]:
                    ok = False
                prev = p._zero
                for s in subs:
                    if not s.lo == prev:
                        raise ConsistencyError(
                            f"depth-{n} intervals on {e} do not tile the edge"
                        )
                    length = s.hi - s.lo
                    if not length == p.lengths[s.target] * inv**n:
                        raise ConsistencyError(
                            f"a depth-{n} interval on {e} has the wrong length"
                        )
                    if seen_max is None or seen_max < length:
                        seen_max = length
                    prev = s.hi
                if not prev == p.lengths[e]:
                    raise ConsistencyError(
                        f"depth-{n} intervals on {e} do not reach the far end"
                    )
            if not seen_max == max_len:
                raise ConsistencyError(
                    f"enumerated and structural maxima disagree at depth {n}"
                )
        if n == 0:
            ok = ok and all(counts[e] == 1 for e in p.edge_ids)
        elif sum(counts.values()) <= substitution_cap:
            routes.append("substitution")
            word_rule = power(p.rule, n, max_letters=substitution_cap)
            for e in p.edge_ids:
                if len(word_rule.words[e]) != counts[e]:
                    ok = False
        levels.append(
            LevelStat(
                n=n,
                counts=tuple(counts[e] for e in p.edge_ids),
                max_length=max_len,
                bound=bound,
                within_bound=max_len <= bound,
                routes=tuple(routes),
                counts_match=ok,
            )
        )

    rng = random.Random(seed)
    arc_exact = True
    geo_ok = True
    fitted = p._zero
    pairs = 0
    for _ in range(samples if depth > 0 else 0):
        edges, lo, hi = _random_chain_interval(p, depth, rng)
        r1, r2 = rng.sample(range(1, 64), 2)
        width = hi - lo
        xs = [GraphPoint(edges[0], lo + Fraction(r1, 64) * width)]
        ys = [GraphPoint(edges[0], lo + Fraction(r2, 64) * width)]
        for k in range(depth):
            xs.append(p.eval_h(xs[-1]))
            ys.append(p.eval_h(ys[-1]))
            if xs[-1].edge != edges[k + 1] or ys[-1].edge != edges[k + 1]:
                raise ConsistencyError("a sampled pair left its interval chain")
        for k in range(depth):
            step = abs(xs[k + 1].offset - ys[k + 1].offset)
            if not step == p.slope * abs(xs[k].offset - ys[k].offset):
                arc_exact = False
        for k in range(depth + 1):
            i = depth - k  # xs[k] is coordinate i of the backward orbit
            d = p.distance(xs[k], ys[k])
            if not d <= k_const * inv**i:
                geo_ok = False
            scaled = d * p.slope**i
            if fitted < scaled:
                fitted = scaled
        pairs += 1

    cylinder_ok = True
    for n in range(depth):
        x = random_solenoid_point(p, depth, rng)
        coords = list(x.coords[: n + 1])
        for _ in range(depth - n):
            edge, index = rng.choice(p.preimage_branches(coords[-1].edge))
            coords.append(p.inverse_branch(coords[-1], edge, index))
        y = SolenoidPoint(p, tuple(coords))
        dist = metric_D(x, y)
        if not dist.truncated <= Fraction(1, 2**n) * p.diameter_bound():
            cylinder_ok = False

    return DecayReport(
        depth=depth,
        samples=samples,
        seed=seed,
        k_const=k_const,
        levels=tuple(levels),
        pairs_checked=pairs,
        arc_ratio_exact=arc_exact,
        geodesic_within_k=geo_ok,
        fitted_constant=fitted,
        cylinder_bound_ok=cylinder_ok,
    )
