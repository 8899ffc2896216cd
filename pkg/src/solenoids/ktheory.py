"""K-groups of the stable and unstable algebras of a pre-solenoid.

For a stabilized passage system the stable algebra has K-theory readable
off the passage matrices: K1 is the cokernel of I - U, pinned to Z or Z/2
by the orientation dichotomy, and K0 is the stationary group driven by
X + N*I on the kernel lattice of I - U.  The unstable algebra is reached
through the inverse map: on an oriented one-vertex wedge it is stationary
with matrix the transpose of the edge cover matrix, while the
non-orientable case contributes a Z/2 summand plus a free part that can
only be sampled at finite cylinder depth.  A Kunneth pairing assembles
the two sides into the K-groups of the homoclinic algebra.

The comparison of two 2x2 stationary limits as plain groups is decided
with exact arithmetic in the real quadratic order Z[lambda]: equivalence
of the associated eigenvector modules is tested through reduced-form
cycles and Gauss composition, modulo twists by the primes dividing
(lambda), which act trivially on the underlying group.  When both
eigenvalues are rational integers the field collapses and an elementary
congruence-class analysis of the eigenvector lattice takes over.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Optional

from .exact import NumberField, charpoly, isolate_largest_real_root
from .intlinalg import (
    cokernel_group,
    identity_int,
    kernel_basis,
    lattice_basis,
    lattice_intersection,
    lattice_quotient,
    mat,
    mat_add_int,
    mat_pow_int,
    mat_sub_int,
    matmul_int,
    rank_int,
    restrict_endomorphism,
    smith_form,
    stable_image_group,
    transpose_int,
)
from .presolenoid import (
    ConsistencyError,
    ValidationError,
    edge_cover_matrix,
    orientation_check,
)

# The Smith normal form is the workhorse behind every cokernel here; the
# implementation lives with the other integer linear algebra.
smith_normal_form = smith_form


# --- small integer utilities -------------------------------------------------


def _prime_factors(n: int) -> tuple:
    n = abs(n)
    out = []
    d = 2
    while d * d <= n:
        if n % d == 0:
            out.append(d)
            while n % d == 0:
                n //= d
        d += 1 if d == 2 else 2
    if n > 1:
        out.append(n)
    return tuple(out)


def _is_square(n: int) -> bool:
    if n < 0:
        return False
    s = math.isqrt(n)
    return s * s == n


def _torsion_chain(factors) -> tuple:
    """Normalize a multiset of cyclic orders into invariant factors.

    Grouping prime powers: the k-th largest exponent of each prime lands in
    the k-th factor from the top, giving the unique chain d_1 | d_2 | ...
    """
    primes = {}
    for f in factors:
        f = int(f)
        if f < 2:
            raise ValueError("torsion factors must be at least 2")
        for p in _prime_factors(f):
            e = 0
            while f % p == 0:
                f //= p
                e += 1
            primes.setdefault(p, []).append(e)
    height = max((len(v) for v in primes.values()), default=0)
    chain = []
    for k in range(height):
        d = 1
        for p, exps in primes.items():
            exps.sort(reverse=True)
            if k < len(exps):
                d *= p ** exps[k]
        chain.append(d)
    return tuple(sorted(chain))


# --- group values ------------------------------------------------------------


@dataclass(frozen=True)
class StationaryGroup:
    """lim of a lattice L under an endomorphism M, kept symbolic.

    `basis` spans L inside its ambient integer lattice and `matrix` is the
    endomorphism in those coordinates (columns are images of basis
    vectors).  The direct limit itself is torsion-free; only the recorded
    invariants (rank, limit rank, Perron value, invertible primes) are
    ever compared.
    """

    basis: tuple
    matrix: tuple
    limit_rank: int
    perron: object

    @property
    def rank(self) -> int:
        return len(self.basis)

    def charpoly_coeffs(self) -> tuple:
        return tuple(charpoly(self.matrix))

    def invertible_primes(self) -> frozenset:
        """Primes acting invertibly on the limit.

        p is invertible iff M is nilpotent mod p, i.e. the characteristic
        polynomial reduces to x^n, i.e. p divides every non-leading
        coefficient.
        """
        cp = charpoly(self.matrix)
        g = 0
        for c in cp[:-1]:
            g = math.gcd(g, int(c))
        return frozenset(_prime_factors(g)) if g else frozenset()

    def serialize(self) -> dict:
        return {
            "basis": [list(v) for v in self.basis],
            "matrix": [list(r) for r in self.matrix],
            "limit_rank": self.limit_rank,
            "perron": str(self.perron),
        }


def stationary_group(basis, matrix) -> StationaryGroup:
    basis = tuple(tuple(int(x) for x in v) for v in basis)
    matrix = mat(matrix)
    if not basis or len(basis) != len(matrix):
        raise ValidationError("stationary group needs one basis vector per matrix column")
    r = len(matrix)
    lim_rank = rank_int(mat_pow_int(matrix, r))
    found = isolate_largest_real_root(charpoly(matrix))
    if found is None:
        raise ConsistencyError("stationary matrix has no real eigenvalue")
    if found[0] == "rational":
        perron = Fraction(found[1])
    else:
        perron = NumberField.from_largest_root(charpoly(matrix), name="mu").gen
    return StationaryGroup(basis=basis, matrix=matrix, limit_rank=lim_rank, perron=perron)


@dataclass(frozen=True)
class AbelianGroup:
    """A direct sum of free, stationary and finite cyclic summands.

    `torsion` holds invariant factors (each >= 2, each dividing the next);
    `stationary` is an optional torsion-free stationary summand; setting
    `unresolved` records that some summand could not be computed and says
    why.
    """

    free_rank: int = 0
    torsion: tuple = ()
    stationary: Optional[StationaryGroup] = None
    unresolved: Optional[str] = None

    def __post_init__(self):
        if self.free_rank < 0:
            raise ValueError("free rank cannot be negative")
        object.__setattr__(self, "torsion", _torsion_chain(self.torsion))

    def is_zero(self) -> bool:
        return (
            self.free_rank == 0
            and not self.torsion
            and self.stationary is None
            and self.unresolved is None
        )

    def signature(self) -> tuple:
        """Canonical invariants: equal signatures mean isomorphic groups
        (for the class produced here, where stationary parts are compared
        by their full matrix data up to simultaneous permutation)."""
        stat = None
        if self.stationary is not None:
            stat = (
                self.stationary.rank,
                self.stationary.limit_rank,
                self.stationary.charpoly_coeffs(),
                tuple(sorted(self.stationary.invertible_primes())),
            )
        return (self.free_rank, self.torsion, stat, self.unresolved is not None)

    def describe(self) -> str:
        parts = []
        if self.free_rank == 1:
            parts.append("Z")
        elif self.free_rank > 1:
            parts.append(f"Z^{self.free_rank}")
        if self.stationary is not None:
            s = self.stationary
            parts.append(f"lim(Z^{s.rank}, M) of limit rank {s.limit_rank}")
        for d in self.torsion:
            parts.append(f"Z/{d}")
        if self.unresolved is not None:
            parts.append(f"unresolved [{self.unresolved}]")
        return " (+) ".join(parts) if parts else "0"

    def serialize(self) -> dict:
        return {
            "free_rank": self.free_rank,
            "torsion": list(self.torsion),
            "stationary": None if self.stationary is None else self.stationary.serialize(),
            "unresolved": self.unresolved is not None,
        }


ZERO_GROUP = AbelianGroup()
Z_GROUP = AbelianGroup(free_rank=1)
Z2_GROUP = AbelianGroup(torsion=(2,))


# --- heteroclinic K-groups ---------------------------------------------------


def _difference_matrix(ps):
    return mat_sub_int(ps.I, ps.U)


def _check_difference_columns(d) -> None:
    # every passage meets start/terminal germs exactly twice in total, so a
    # column of I - U is either zero (one start and one terminal germ of the
    # same edge) or has exactly two entries from {1,-1}
    rows = len(d)
    cols = len(d[0]) if rows else 0
    for j in range(cols):
        col = [d[i][j] for i in range(rows)]
        nz = [x for x in col if x != 0]
        if not nz:
            continue
        if len(nz) != 2 or any(abs(x) != 1 for x in nz):
            raise ConsistencyError(
                f"column {j} of I - U has entries {col}; expected two entries from {{1,-1}}"
            )


def k1_heteroclinic(ps) -> AbelianGroup:
    """K1 of the stable algebra: the cokernel of I - U.

    The structure theorem allows exactly Z (oriented case) or Z/2; both the
    dichotomy and the agreement with the orientation test are enforced.
    """
    d = _difference_matrix(ps)
    _check_difference_columns(d)
    free, torsion = cokernel_group(d)
    if (free, torsion) == (1, ()):
        group = Z_GROUP
    elif (free, torsion) == (0, (2,)):
        group = Z2_GROUP
    else:
        raise ConsistencyError(
            f"coker(I - U) is Z^{free} (+) {torsion}, outside the Z / Z2 dichotomy"
        )
    oriented = orientation_check(ps.base_rule).orientable
    if oriented != (group.free_rank == 1):
        raise ConsistencyError(
            "orientation check disagrees with the K1 cokernel; "
            f"oriented={oriented} but K1 = {group.describe()}"
        )
    return group


def k0_heteroclinic(ps) -> StationaryGroup:
    """K0 of the stable algebra: lim of ker(I - U) under X + N*I."""
    d = _difference_matrix(ps)
    kernel = kernel_basis(d)
    if not kernel:
        raise ConsistencyError("kernel of I - U is trivial; no stationary K0 data")
    endo = mat_add_int(ps.X, matmul_int(ps.N, ps.I))
    try:
        restricted = restrict_endomorphism(endo, kernel)
    except ValueError as exc:
        raise ConsistencyError(f"X + N*I does not preserve ker(I - U): {exc}") from exc
    return stationary_group(kernel, restricted)


def heteroclinic_pair(ps) -> tuple:
    """(K0, K1) of the stable algebra, both as AbelianGroup values."""
    k0 = AbelianGroup(stationary=k0_heteroclinic(ps))
    return k0, k1_heteroclinic(ps)


# --- the inverse map's K-groups ---------------------------------------------


@dataclass(frozen=True)
class InverseKGroups:
    """(K0, K1) of the unstable algebra, plus the finite-depth free-part
    report in the non-orientable case."""

    k0: AbelianGroup
    k1: AbelianGroup
    oriented: bool
    depth_report: Optional[dict] = None

    def __iter__(self):
        yield self.k0
        yield self.k1


def k_inverse(rule, ps, depth: int = 4) -> InverseKGroups:
    """K-groups of the algebra built from the inverse of the wrapping map.

    Oriented wedges give K1 = Z and a stationary K0 with the transposed
    cover matrix.  Non-orientable wedges give K1 = 0 and K0 = Z/2 plus a
    torsion-free part with no finite description; the quotient of the
    symmetrized cylinder functions by the coboundaries is reported at the
    requested depth and flagged unresolved.
    """
    if depth < 1:
        raise ValidationError("depth must be at least 1")
    if len(rule.graph.vertices) != 1:
        raise ValidationError(
            "inverse-limit K-theory is implemented for one-vertex wedges only; "
            "collapse a spanning tree first (the Williams moves are out of scope)"
        )
    if not ps.base_axioms.all_passed:
        raise ValidationError("axioms fail; inverse K-theory undefined")
    verdict = orientation_check(rule)
    if verdict.orientable:
        a = transpose_int(edge_cover_matrix(rule))
        k0 = AbelianGroup(stationary=stationary_group(identity_int(len(a)), a))
        return InverseKGroups(k0=k0, k1=Z_GROUP, oriented=True)
    report = _symmetrized_quotient_report(ps, depth)
    k0 = AbelianGroup(
        torsion=(2,),
        unresolved=(
            "torsion-free part of K0 has no finite description; "
            f"see the depth-{depth} quotient report"
        ),
    )
    return InverseKGroups(k0=k0, k1=ZERO_GROUP, oriented=False, depth_report=report)


def _symmetrized_quotient_report(ps, depth: int) -> dict:
    """Finite-depth sample of (1 + flip)(cylinder functions) modulo the
    coboundaries (1 - shift)(cylinder functions).

    Indicator functions of depth-d cylinders span the depth-d functions;
    the flip acts exactly on them, the shift only where its image closes
    up into a single depth-d cylinder.  The quotient of the symmetrized
    lattice by its intersection with the coboundary lattice is honest
    finite-depth data, not a limit.
    """
    from .dihedral import build_diagram, cylinders, phi_path, sigma_path

    diagram = build_diagram(ps)
    atoms = cylinders(diagram, depth)
    index = {a: i for i, a in enumerate(atoms)}
    sigma_of = [index[sigma_path(diagram, a)] for a in atoms]
    phi_of = []
    for a in atoms:
        image = phi_path(diagram, a)
        phi_of.append(None if image is None else index[image])
    report = _sym_quotient_core(len(atoms), sigma_of, phi_of)
    report["depth"] = depth
    return report


def _sym_quotient_core(n: int, sigma_of, phi_of) -> dict:
    """sym / (sym meet cob) for sym = span{e_a + e_{sigma a}} and
    cob = span{e_a - e_{phi a} : phi a defined} inside Z^n.

    By the second isomorphism theorem the quotient is (sym + cob) / cob.
    The coboundary relations glue atoms along phi, so Z^n / cob is the
    free group on the phi-components (summing coordinates over each
    component), and the quotient is the subgroup generated by the images
    of the e_a + e_{sigma a}.  A subgroup of a free abelian group is
    free, so the torsion is empty without any Smith form work.  The
    images are columns f_c + f_{c'} of a signless incidence matrix, whose
    rank is vertices minus the number of bipartite loop-free pieces; a
    union-find with parities settles that without any linear algebra.
    """
    parent = list(range(n))

    def find(i):
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:
            parent[i], i = root, parent[i]
        return root

    determined = 0
    for a, image in enumerate(phi_of):
        if image is None:
            continue
        determined += 1
        parent[find(a)] = find(image)
    comp = {}
    for i in range(n):
        comp.setdefault(find(i), len(comp))
    m = len(comp)
    orbits = sum(1 for a in range(n) if a <= sigma_of[a])

    # parity union-find over the m phi-components; parity[i] is the color
    # of i relative to parent[i], kept valid under path compression
    par = list(range(m))
    parity = [0] * m
    odd = [False] * m

    def findp(i):
        path = []
        while par[i] != i:
            path.append(i)
            i = par[i]
        acc = 0
        for node in reversed(path):
            acc ^= parity[node]
            par[node] = i
            parity[node] = acc
        return i

    for a in range(n):
        u = comp[find(a)]
        w = comp[find(sigma_of[a])]
        ru, rw = findp(u), findp(w)
        if ru == rw:
            if parity[u] == parity[w]:
                odd[ru] = True
            continue
        par[ru] = rw
        parity[ru] = 1 ^ parity[u] ^ parity[w]
        odd[rw] = odd[rw] or odd[ru]
    roots = {findp(c) for c in range(m)}
    return {
        "atoms": n,
        "phi_determined": determined,
        "symmetrized_rank": orbits,
        "coboundary_rank": n - m,
        "free_rank": m - sum(1 for r in roots if not odd[r]),
        "torsion": [],
    }


# --- the Z/2 obstruction ----------------------------------------------------


@dataclass(frozen=True)
class Z2Result:
    status: str  # "unsat" | "witness"
    witness: Optional[dict]
    depth: int
    rhs: int
    constraints: int
    detail: str


def verify_z2_obstruction(diagram, depth: int, rhs: int = 1) -> Z2Result:
    """Solvability of h + h∘sigma = rhs = h + h∘(phi sigma) over depth-d
    cylinder functions with integer values.

    Every constraint ties two cylinder values to the sum `rhs`, so the
    system is a graph 2-coloring: solvable iff every odd cycle can take the
    constant value rhs/2, i.e. iff rhs is even or the constraint graph is
    bipartite.  Returns a witness assignment when solvable.
    """
    from .dihedral import cylinders, minimality_check, phi_prefix_image, sigma_path

    if depth < 1:
        raise ValidationError("depth must be at least 1")
    minimal = minimality_check(diagram, depth)
    if not minimal.minimal:
        raise ValidationError(
            f"the forward map is not minimal at depth {depth}: {minimal.detail}"
        )
    atoms = cylinders(diagram, depth)
    edges = set()
    for a in atoms:
        edges.add(frozenset_pair(a, sigma_path(diagram, a)))
    # phi(sigma x) may need extra resolution before its depth-d cylinder is
    # determined; refine those atoms, since a constraint on a sub-cylinder
    # still constrains the same two depth-d values
    pending = list(atoms)
    guard = depth + 8
    while pending:
        cur = pending.pop()
        if len(cur) > guard:
            raise ValidationError(
                f"depth {depth} cannot close the phi action within {guard} levels; "
                "increase the depth"
            )
        flipped = sigma_path(diagram, cur)
        image = phi_prefix_image(diagram, flipped, depth)
        if image is None:
            pending.extend(refine_cylinder(diagram, cur))
            continue
        edges.add(frozenset_pair(cur[:depth], image))
    # 2-color the constraint graph
    values = {}
    neighbours = {}
    for pair in edges:
        if len(pair) == 1:
            (u,) = pair
            v = u
        else:
            u, v = pair
        neighbours.setdefault(u, set()).add(v)
        neighbours.setdefault(v, set()).add(u)
    colour = {}
    for start in atoms:
        if start in colour:
            continue
        colour[start] = 0
        component = [start]
        queue = [start]
        odd = False
        while queue:
            u = queue.pop()
            for v in neighbours.get(u, ()):
                if v not in colour:
                    colour[v] = 1 - colour[u]
                    component.append(v)
                    queue.append(v)
                elif colour[v] == colour[u]:
                    odd = True
        if odd:
            if rhs % 2 != 0:
                return Z2Result(
                    status="unsat",
                    witness=None,
                    depth=depth,
                    rhs=rhs,
                    constraints=len(edges),
                    detail="an odd constraint cycle forces 2h = "
                    f"{rhs}, impossible over the integers",
                )
            for u in component:
                values[u] = rhs // 2
        else:
            hi = rhs - rhs // 2
            for u in component:
                values[u] = hi if colour[u] == 0 else rhs // 2
    for pair in edges:
        if len(pair) == 1:
            (u,) = pair
            v = u
        else:
            u, v = pair
        if values[u] + values[v] != rhs:
            raise ConsistencyError("witness fails a constraint it was built from")
    return Z2Result(
        status="witness",
        witness=dict(values),
        depth=depth,
        rhs=rhs,
        constraints=len(edges),
        detail="explicit cylinder function found",
    )


def frozenset_pair(a, b):
    """An unordered constraint edge; loops kept as singleton sets."""
    return frozenset((a, b))


def refine_cylinder(diagram, path):
    from .dihedral import cylinders

    return [c for c in cylinders(diagram, len(path) + 1) if c[: len(path)] == path]


# --- Kunneth assembly ---------------------------------------------------------


def _kron(a, b) -> tuple:
    if not a or not b:
        return ()
    ca, cb = len(a[0]), len(b[0])
    return tuple(
        tuple(a[i][j] * b[k][l] for j in range(ca) for l in range(cb))
        for i in range(len(a))
        for k in range(len(b))
    )


def _block_diag(mats) -> tuple:
    size = sum(len(m) for m in mats)
    out = [[0] * size for _ in range(size)]
    offset = 0
    for m in mats:
        for i, row in enumerate(m):
            for j, x in enumerate(row):
                out[offset + i][offset + j] = x
        offset += len(m)
    return tuple(tuple(row) for row in out)


def _stationary_from_blocks(blocks) -> Optional[StationaryGroup]:
    blocks = [b for b in blocks if b]
    if not blocks:
        return None
    m = _block_diag(blocks)
    return stationary_group(identity_int(len(m)), m)


def tensor_product(a: AbelianGroup, b: AbelianGroup) -> AbelianGroup:
    """Tensor product over Z within the representable class."""
    unresolved = None
    if a.unresolved is not None or b.unresolved is not None:
        unresolved = "tensor factor carries an unresolved summand"
    free = a.free_rank * b.free_rank
    torsion = []
    for m in a.torsion:
        torsion.extend([m] * b.free_rank)
    for m in b.torsion:
        torsion.extend([m] * a.free_rank)
    for m in a.torsion:
        for k in b.torsion:
            g = math.gcd(m, k)
            if g > 1:
                torsion.append(g)
    blocks = []
    if a.stationary is not None and b.stationary is not None:
        blocks.append(_kron(a.stationary.matrix, b.stationary.matrix))
    if a.stationary is not None:
        blocks.extend([a.stationary.matrix] * b.free_rank)
        for m in b.torsion:
            torsion.extend(stable_image_group(a.stationary.matrix, m))
    if b.stationary is not None:
        blocks.extend([b.stationary.matrix] * a.free_rank)
        for m in a.torsion:
            torsion.extend(stable_image_group(b.stationary.matrix, m))
    return AbelianGroup(
        free_rank=free,
        torsion=tuple(t for t in torsion if t > 1),
        stationary=_stationary_from_blocks(blocks),
        unresolved=unresolved,
    )


def tor_product(a: AbelianGroup, b: AbelianGroup) -> AbelianGroup:
    """Tor over Z: only the finite torsion parts interact."""
    unresolved = None
    if a.unresolved is not None or b.unresolved is not None:
        unresolved = "Tor against an unresolved summand"
    torsion = []
    for m in a.torsion:
        for k in b.torsion:
            g = math.gcd(m, k)
            if g > 1:
                torsion.append(g)
    return AbelianGroup(torsion=tuple(torsion), unresolved=unresolved)


def direct_sum(*groups) -> AbelianGroup:
    free = sum(g.free_rank for g in groups)
    torsion = []
    blocks = []
    unresolved = None
    for g in groups:
        torsion.extend(g.torsion)
        if g.stationary is not None:
            blocks.append(g.stationary.matrix)
        if g.unresolved is not None and unresolved is None:
            unresolved = g.unresolved
    return AbelianGroup(
        free_rank=free,
        torsion=tuple(torsion),
        stationary=_stationary_from_blocks(blocks),
        unresolved=unresolved,
    )


def kunneth(k_left, k_right) -> tuple:
    """K-groups of the tensor product from the K-groups of the factors.

    Both arguments are (K0, K1) pairs.  Degree zero collects the matching
    tensor products and the crossed Tor terms; degree one the crossed
    tensors and matching Tors.
    """
    k0l, k1l = k_left
    k0r, k1r = k_right
    degree0 = direct_sum(
        tensor_product(k0l, k0r),
        tensor_product(k1l, k1r),
        tor_product(k0l, k1r),
        tor_product(k1l, k0r),
    )
    degree1 = direct_sum(
        tensor_product(k0l, k1r),
        tensor_product(k1l, k0r),
        tor_product(k0l, k0r),
        tor_product(k1l, k1r),
    )
    return degree0, degree1


def homoclinic_kgroups(ps, depth: int = 4) -> tuple:
    """(K0, K1) of the homoclinic algebra via the Kunneth pairing."""
    left = heteroclinic_pair(ps)
    right = k_inverse(ps.base_rule, ps, depth)
    return kunneth(left, tuple(right))


# --- comparing 2x2 stationary groups ------------------------------------------


@dataclass(frozen=True)
class CompareResult:
    verdict: str  # "isomorphic" | "not_isomorphic" | "inconclusive"
    detail: str


def _validate_compare_input(m, label: str) -> tuple:
    m = mat(m)
    if len(m) != 2 or any(len(r) != 2 for r in m):
        raise ValidationError(f"{label} must be a 2x2 integer matrix")
    if any(x < 0 for row in m for x in row):
        raise ValidationError(f"{label} must be nonnegative")
    square = matmul_int(m, m)
    if not all(x > 0 for row in square for x in row) and not all(
        x > 0 for row in m for x in row
    ):
        raise ValidationError(f"{label} must be primitive")
    return m


def _trace_det(m) -> tuple:
    return m[0][0] + m[1][1], m[0][0] * m[1][1] - m[0][1] * m[1][0]


def _invertible_primes_2x2(t: int, n: int) -> frozenset:
    g = math.gcd(t, n)
    return frozenset(_prime_factors(g)) if g else frozenset()


def stationary_compare_2x2(a, b) -> CompareResult:
    """Are lim(Z^2, A) and lim(Z^2, B) isomorphic as plain groups?

    Strategy: dispose of the free cases (unimodular matrices), compare the
    cheap invariants (characteristic polynomial, invertible primes), then
    decide by the class of the eigenvector module -- an elementary
    congruence analysis when the eigenvalues are integers, a reduced-form
    cycle computation in Z[lambda] otherwise.  Twists by primes dividing
    (lambda) do not change the group and are quotiented out.
    """
    ma = _validate_compare_input(a, "first matrix")
    mb = _validate_compare_input(b, "second matrix")
    if ma == mb:
        return CompareResult("isomorphic", "identical matrices")
    ta, na = _trace_det(ma)
    tb, nb = _trace_det(mb)
    if abs(na) == 1 and abs(nb) == 1:
        return CompareResult("isomorphic", "both limits are free of rank two")
    if abs(na) == 1 or abs(nb) == 1:
        return CompareResult(
            "not_isomorphic",
            "one limit is free of rank two, the other has divisible elements",
        )
    if (ta, na) != (tb, nb):
        pa = _invertible_primes_2x2(ta, na)
        pb = _invertible_primes_2x2(tb, nb)
        if pa != pb:
            return CompareResult(
                "not_isomorphic",
                f"invertible prime sets differ: {sorted(pa)} vs {sorted(pb)}",
            )
        return CompareResult(
            "inconclusive",
            "characteristic polynomials differ and the invariants computed "
            "here do not separate the groups",
        )
    disc = ta * ta - 4 * na
    if disc <= 0:
        raise ValidationError("primitive input should have two distinct real eigenvalues")
    if na == 0:
        return CompareResult("isomorphic", "equal trace, both limits of rank one")
    if _is_square(disc):
        return _compare_split(ma, mb, ta, na, disc)
    return _compare_quadratic(ma, mb, ta, na, disc)


# -- split (integer eigenvalue) branch --


def _reduce_vec(v) -> tuple:
    g = math.gcd(v[0], v[1])
    return (v[0] // g, v[1] // g) if g else v


def _split_class_data(m, lam: int, mu: int):
    """Congruence invariant of the eigencoordinate lattice.

    Writing Z^2 in the eigenbasis gives a lattice C with Z^2 <= C <=
    (1/D) Z^2, D = |det of the eigenvector matrix|; C/Z^2 has order D and,
    in the favourable cyclic case, is cut out by alpha = c*beta (mod D).
    The class of c modulo the unit action is a complete isomorphism
    invariant of the limit group.
    """
    p, q = m[0]
    r, _ = m[1]
    v1 = _reduce_vec((q, lam - p))
    v2 = _reduce_vec((q, mu - p))
    det = v1[0] * v2[1] - v2[0] * v1[1]
    d = abs(det)
    if d == 1:
        return {"index": 1, "cls": None}
    adj = ((v2[1], -v2[0]), (-v1[1], v1[0]))
    g1 = (adj[0][0] % d, adj[1][0] % d)
    g2 = (adj[0][1] % d, adj[1][1] % d)
    group = {(0, 0)}
    frontier = [(0, 0)]
    while frontier:
        x, y = frontier.pop()
        for gx, gy in (g1, g2):
            nxt = ((x + gx) % d, (y + gy) % d)
            if nxt not in group:
                group.add(nxt)
                frontier.append(nxt)
    if len(group) != d:
        raise ConsistencyError("eigencoordinate lattice has the wrong index")
    normal = [x for (x, y) in group if y == 1]
    if len(normal) != 1:
        return None
    return {"index": d, "cls": normal[0]}


def _compare_split(ma, mb, t: int, n: int, disc: int) -> CompareResult:
    root = math.isqrt(disc)
    lam = (t + root) // 2
    mu = (t - root) // 2
    if (t + root) % 2 != 0:
        raise ConsistencyError("square discriminant with non-integer eigenvalues")
    if abs(mu) < 2:
        return CompareResult(
            "inconclusive",
            f"eigenvalue {mu} gives no divisibility data; case not implemented",
        )
    if math.gcd(lam, abs(mu)) != 1:
        return CompareResult(
            "inconclusive",
            "eigenvalues share a prime; the eigendirections do not separate",
        )
    da = _split_class_data(ma, lam, mu)
    db = _split_class_data(mb, lam, mu)
    if da is None or db is None:
        return CompareResult(
            "inconclusive", "eigencoordinate congruence data is not cyclic in normal form"
        )
    if da["index"] != db["index"]:
        return CompareResult(
            "not_isomorphic",
            f"eigencoordinate indices differ: {da['index']} vs {db['index']}",
        )
    d = da["index"]
    if d == 1:
        return CompareResult(
            "isomorphic", "both limits split as Z[1/lambda] (+) Z[1/mu]"
        )
    if math.gcd(lam * abs(mu), d) != 1:
        return CompareResult(
            "inconclusive",
            "an eigenvalue shares a factor with the lattice index; not implemented",
        )
    units = {1 % d, (d - 1) % d}
    gens = set(_prime_factors(lam)) | set(_prime_factors(abs(mu)))
    frontier = list(units)
    while frontier:
        u = frontier.pop()
        for g in gens:
            nxt = (u * g) % d
            if nxt not in units:
                units.add(nxt)
                frontier.append(nxt)
    orbit = {(u * da["cls"]) % d for u in units}
    if db["cls"] in orbit:
        return CompareResult(
            "isomorphic",
            f"congruence classes agree modulo units: {da['cls']} ~ {db['cls']} (mod {d})",
        )
    return CompareResult(
        "not_isomorphic",
        f"congruence classes {da['cls']} and {db['cls']} (mod {d}) are not "
        "related by the unit action",
    )


# -- irrational (real quadratic) branch --


def _form_disc(f) -> int:
    a, b, c = f
    return b * b - 4 * a * c


def _is_reduced(f, sq: int) -> bool:
    a, b, _ = f
    return 0 < b <= sq and sq - b < 2 * abs(a) <= sq + b


def _rho(f, disc: int, sq: int) -> tuple:
    """One reduction/cycle step on an indefinite form."""
    _, b, c = f
    ac = abs(c)
    m = 2 * ac
    if ac > sq:
        r = (-b) % m
        if r > ac:
            r -= m
    else:
        r = (-b) % m
        r += ((sq - r) // m) * m
    return (c, r, (r * r - disc) // (4 * c))


def _canonical_cycle(f, disc: int) -> frozenset:
    """The cycle of reduced forms equivalent to f; a canonical class label."""
    sq = math.isqrt(disc)
    g = f
    for _ in range(4 * disc + 64):
        if _is_reduced(g, sq):
            break
        g = _rho(g, disc, sq)
    else:
        raise ConsistencyError("form reduction failed to terminate")
    cycle = [g]
    cur = _rho(g, disc, sq)
    while cur != g:
        cycle.append(cur)
        cur = _rho(cur, disc, sq)
        if len(cycle) > 4 * disc + 64:
            raise ConsistencyError("reduced cycle failed to close")
    return frozenset(cycle)


def _positive_rep(cycle) -> tuple:
    for f in sorted(cycle):
        if f[0] > 0:
            return f
    raise ConsistencyError("reduced cycle has no positive leading coefficient")


def _transform_form(f, x: int, y: int) -> tuple:
    """Action of the determinant-one matrix [[x, u], [y, v]] completing
    the coprime column (x, y)."""
    a, b, c = f
    g, u0, v0 = _ext_gcd(x, y)
    if g != 1:
        raise ValueError("column is not coprime")
    u, v = -v0, u0
    a2 = a * x * x + b * x * y + c * y * y
    b2 = 2 * (a * x * u + c * y * v) + b * (x * v + y * u)
    c2 = a * u * u + b * u * v + c * v * v
    return (a2, b2, c2)


def _ext_gcd(a: int, b: int) -> tuple:
    old_r, r = a, b
    old_s, s = 1, 0
    old_t, t = 0, 1
    while r:
        qq = old_r // r
        old_r, r = r, old_r - qq * r
        old_s, s = s, old_s - qq * s
        old_t, t = t, old_t - qq * t
    if old_r < 0:
        old_r, old_s, old_t = -old_r, -old_s, -old_t
    return old_r, old_s, old_t


def _coprime_rep(f, modulus: int) -> tuple:
    """A properly equivalent form whose leading coefficient is coprime to
    `modulus` (and nonzero).  Primitive forms represent such values on
    coprime arguments within a small search box."""
    for x in range(0, 30):
        for y in range(-29, 30):
            if math.gcd(x, y) != 1:
                continue
            val = f[0] * x * x + f[1] * x * y + f[2] * y * y
            if val != 0 and math.gcd(val, modulus) == 1:
                return _transform_form(f, x, y)
    raise ConsistencyError("no representative coprime to the modulus found")


def _compose_forms(f1, f2, disc: int) -> tuple:
    """Gauss composition via a concordant pair with coprime leaders."""
    g2 = _coprime_rep(f2, f1[0])
    a1, b1 = f1[0], f1[1]
    a2, b2 = g2[0], g2[1]
    # solve B = b1 (mod 2 a1), B = b2 (mod 2 a2); gcd of moduli is 2 and
    # b1, b2 share the parity of the discriminant
    g, u, _ = _ext_gcd(2 * a1, 2 * a2)
    if (b2 - b1) % g != 0:
        raise ConsistencyError("composition congruences are inconsistent")
    lcm = abs(4 * a1 * a2) // g
    big_b = (b1 + 2 * a1 * ((b2 - b1) // g) * u) % lcm
    a3 = a1 * a2
    if (big_b * big_b - disc) % (4 * a3) != 0:
        raise ConsistencyError("composed form has the wrong discriminant")
    return (a3, big_b, (big_b * big_b - disc) // (4 * a3))


def _principal_form(disc: int) -> tuple:
    sq = math.isqrt(disc)
    b0 = sq if (sq - disc) % 2 == 0 else sq - 1
    return (1, b0, (b0 * b0 - disc) // 4)


def _class_closure(disc: int, generators) -> dict:
    """Subgroup of the form class group generated by the given forms.

    Returns {cycle: representative form} including the identity class.
    """
    ident = _principal_form(disc)
    closure = {_canonical_cycle(ident, disc): ident}
    gens = [( _canonical_cycle(g, disc), g) for g in generators]
    frontier = list(closure.items())
    while frontier:
        _, rep = frontier.pop()
        for _, g in gens:
            prod = _compose_forms(rep, g, disc)
            key = _canonical_cycle(prod, disc)
            if key not in closure:
                if len(closure) > 512:
                    raise ConsistencyError("class subgroup closure ran away")
                closure[key] = _positive_rep(key)
                frontier.append((key, closure[key]))
    return closure


def _fundamental_split(disc: int) -> tuple:
    """disc = f^2 * d0 with d0 a fundamental discriminant; returns (f, d0)."""
    f = 1
    d = disc
    k = 2
    while k * k <= d:
        while d % (k * k) == 0:
            d //= k * k
            f *= k
        k += 1
    if d % 4 not in (0, 1):
        # need one factor of 4 back; f is even since disc is 0 or 1 mod 4
        if f % 2 != 0:
            raise ConsistencyError(f"{disc} is not a quadratic discriminant")
        d *= 4
        f //= 2
    return f, d


def _compare_quadratic(ma, mb, t: int, n: int, disc: int) -> CompareResult:
    conductor, _ = _fundamental_split(disc)
    split_primes = []
    for p in _prime_factors(n):
        if conductor % p == 0:
            return CompareResult(
                "inconclusive",
                f"prime {p} divides both det and the conductor {conductor}; "
                "the cycle test is not implemented for that conductor",
            )
        if disc % p != 0:
            split_primes.append(p)
    if not split_primes:
        return CompareResult(
            "isomorphic",
            "every prime dividing det ramifies, so both limits are free "
            "modules over the same localization",
        )
    fa = (ma[0][1], t - 2 * ma[0][0], -ma[1][0])
    fb = (mb[0][1], t - 2 * mb[0][0], -mb[1][0])
    generators = [(p, t, n // p) for p in _prime_factors(n)]
    for f in (fa, fb, *generators):
        if math.gcd(math.gcd(f[0], f[1]), f[2]) != 1:
            return CompareResult(
                "inconclusive",
                "a non-invertible module appeared (non-maximal order); the "
                "cycle test is not implemented for that conductor",
            )
        if _form_disc(f) != disc:
            raise ConsistencyError("eigenvector module has the wrong discriminant")
    twists = _class_closure(disc, generators)
    cls_b = _canonical_cycle(fb, disc)
    inverse_a = (fa[0], -fa[1], fa[2])
    for base in (fa, inverse_a):
        for rep in twists.values():
            if _canonical_cycle(_compose_forms(base, rep, disc), disc) == cls_b:
                return CompareResult(
                    "isomorphic",
                    "eigenvector modules agree up to twists by primes over det",
                )
    return CompareResult(
        "not_isomorphic",
        "eigenvector module classes differ even after twisting by the "
        "primes over det",
    )
