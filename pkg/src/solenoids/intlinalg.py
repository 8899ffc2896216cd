"""Integer linear algebra: Smith normal form, kernels, lattices.

All matrices are tuples/lists of rows of Python ints, acting on column
vectors, so an m x n matrix maps Z^n into Z^m.  Sizes here are small
(passage systems rarely exceed a dozen rows), so the classic elimination
algorithms are used without any fraction-free cleverness beyond Bareiss
for determinants.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction


def mat(rows) -> tuple:
    return tuple(tuple(int(x) for x in row) for row in rows)


def identity_int(n: int) -> tuple:
    return tuple(tuple(int(i == j) for j in range(n)) for i in range(n))


def matmul_int(a, b) -> tuple:
    if a and b and len(a[0]) != len(b):
        raise ValueError("matrix shapes do not match")
    return tuple(
        tuple(sum(a[i][k] * b[k][j] for k in range(len(b))) for j in range(len(b[0]) if b else 0))
        for i in range(len(a))
    )


def mat_vec_int(a, v) -> tuple:
    return tuple(sum(row[k] * v[k] for k in range(len(v))) for row in a)


def transpose_int(a) -> tuple:
    if not a:
        return ()
    return tuple(tuple(a[i][j] for i in range(len(a))) for j in range(len(a[0])))


def mat_pow_int(a, n: int) -> tuple:
    out = identity_int(len(a))
    base = mat(a)
    while n:
        if n & 1:
            out = matmul_int(out, base)
        base = matmul_int(base, base)
        n >>= 1
    return out


def mat_add_int(a, b) -> tuple:
    return tuple(tuple(x + y for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def mat_sub_int(a, b) -> tuple:
    return tuple(tuple(x - y for x, y in zip(ra, rb)) for ra, rb in zip(a, b))


def det_int(a) -> int:
    """Bareiss fraction-free determinant."""
    m = [list(map(int, row)) for row in a]
    n = len(m)
    if n == 0:
        return 1
    sign, prev = 1, 1
    for k in range(n - 1):
        if m[k][k] == 0:
            swap = next((i for i in range(k + 1, n) if m[i][k] != 0), None)
            if swap is None:
                return 0
            m[k], m[swap] = m[swap], m[k]
            sign = -sign
        for i in range(k + 1, n):
            for j in range(k + 1, n):
                m[i][j] = (m[i][j] * m[k][k] - m[i][k] * m[k][j]) // prev
            m[i][k] = 0
        prev = m[k][k]
    return sign * m[n - 1][n - 1]


def rank_int(a) -> int:
    """Rank over Q by plain fraction elimination."""
    m = [[Fraction(x) for x in row] for row in a]
    rank, rows, cols = 0, len(m), (len(m[0]) if m else 0)
    for c in range(cols):
        pivot = next((i for i in range(rank, rows) if m[i][c] != 0), None)
        if pivot is None:
            continue
        m[rank], m[pivot] = m[pivot], m[rank]
        inv = 1 / m[rank][c]
        m[rank] = [x * inv for x in m[rank]]
        for i in range(rows):
            if i != rank and m[i][c] != 0:
                f = m[i][c]
                m[i] = [x - f * y for x, y in zip(m[i], m[rank])]
        rank += 1
        if rank == rows:
            break
    return rank


# --- Smith normal form -----------------------------------------------------


@dataclass(frozen=True)
class SmithForm:
    """S * A * T = D with S, T unimodular and D diagonal, d_i | d_{i+1}."""

    matrix: tuple
    diagonal: tuple
    s: tuple
    t: tuple

    @property
    def rank(self) -> int:
        return sum(1 for d in self.diagonal if d != 0)

    @property
    def invariant_factors(self) -> tuple:
        """Diagonal entries > 1 (the torsion part of the cokernel)."""
        return tuple(d for d in self.diagonal if d > 1)

    def cokernel(self) -> tuple:
        """(free rank, torsion invariant factors) of Z^rows / A Z^cols."""
        rows = len(self.matrix)
        return rows - self.rank, self.invariant_factors


def smith_form(a) -> SmithForm:
    a = mat(a)
    work = [list(row) for row in a]
    m = len(work)
    n = len(work[0]) if m else 0
    s = [list(row) for row in identity_int(m)]
    t = [list(row) for row in identity_int(n)]

    def add_row(src, dst, c):
        work[dst] = [x + c * y for x, y in zip(work[dst], work[src])]
        s[dst] = [x + c * y for x, y in zip(s[dst], s[src])]

    def add_col(src, dst, c):
        for row in work:
            row[dst] += c * row[src]
        for row in t:
            row[dst] += c * row[src]

    def swap_rows(i, j):
        work[i], work[j] = work[j], work[i]
        s[i], s[j] = s[j], s[i]

    def swap_cols(i, j):
        for row in work:
            row[i], row[j] = row[j], row[i]
        for row in t:
            row[i], row[j] = row[j], row[i]

    def negate_row(i):
        work[i] = [-x for x in work[i]]
        s[i] = [-x for x in s[i]]

    k = 0
    while k < min(m, n):
        # pivot: smallest nonzero magnitude in the remaining block
        best = None
        for i in range(k, m):
            for j in range(k, n):
                if work[i][j] != 0 and (best is None or abs(work[i][j]) < abs(work[best[0]][best[1]])):
                    best = (i, j)
        if best is None:
            break
        swap_rows(k, best[0])
        swap_cols(k, best[1])
        while True:
            # clear column k with Euclidean steps
            for i in range(k + 1, m):
                while work[i][k] != 0:
                    q = work[i][k] // work[k][k]
                    add_row(k, i, -q)
                    if work[i][k] != 0:
                        swap_rows(k, i)
            # clear row k; this can refill the column, hence the outer loop
            for j in range(k + 1, n):
                while work[k][j] != 0:
                    q = work[k][j] // work[k][k]
                    add_col(k, j, -q)
                    if work[k][j] != 0:
                        swap_cols(k, j)
            if all(work[i][k] == 0 for i in range(k + 1, m)) and all(
                work[k][j] == 0 for j in range(k + 1, n)
            ):
                # pivot must divide every remaining entry
                culprit = None
                for i in range(k + 1, m):
                    for j in range(k + 1, n):
                        if work[i][j] % work[k][k] != 0:
                            culprit = i
                            break
                    if culprit is not None:
                        break
                if culprit is None:
                    break
                add_row(culprit, k, 1)
        if work[k][k] < 0:
            negate_row(k)
        k += 1

    diag = tuple(work[i][i] if i < n else 0 for i in range(min(m, n)))
    s = mat(s)
    t = mat(t)
    full = matmul_int(matmul_int(s, a), t)
    for i in range(m):
        for j in range(n):
            expect = diag[i] if i == j and i < len(diag) else 0
            if full[i][j] != expect:
                raise AssertionError("Smith reduction produced a non-diagonal result")
    if abs(det_int(s)) != 1 or abs(det_int(t)) != 1:
        raise AssertionError("Smith transforms are not unimodular")
    return SmithForm(matrix=a, diagonal=diag, s=s, t=t)


def kernel_basis(a) -> tuple:
    """Basis of {x in Z^n : A x = 0}; a saturated (pure) sublattice."""
    a = mat(a)
    n = len(a[0]) if a else 0
    if n == 0:
        return ()
    if not a:
        return tuple(identity_int(n))
    sf = smith_form(a)
    cols = []
    for j in range(n):
        dj = sf.diagonal[j] if j < len(sf.diagonal) else 0
        if dj == 0:
            cols.append(tuple(sf.t[i][j] for i in range(n)))
    return tuple(cols)


def cokernel_group(a) -> tuple:
    """(free rank, torsion factors) of Z^rows / A Z^cols."""
    return smith_form(a).cokernel()


def solve_int(a, b):
    """One integer solution x of A x = b, or None."""
    a = mat(a)
    m = len(a)
    n = len(a[0]) if m else 0
    sf = smith_form(a)
    sb = mat_vec_int(sf.s, tuple(b))
    y = [0] * n
    for i in range(m):
        d = sf.diagonal[i] if i < len(sf.diagonal) else 0
        if d == 0:
            if sb[i] != 0:
                return None
        else:
            if sb[i] % d != 0:
                return None
            if i < n:
                y[i] = sb[i] // d
    return mat_vec_int(sf.t, tuple(y))


# --- Lattices --------------------------------------------------------------


def lattice_basis(vectors) -> tuple:
    """Canonical (column HNF) basis of the lattice spanned by the vectors.

    Input: iterable of length-n integer vectors.  Output: tuple of basis
    vectors, lower-triangular with positive pivots and entries to the left
    of each pivot reduced, so equal lattices give equal outputs.
    """
    cols = [list(map(int, v)) for v in vectors if any(v)]
    if not cols:
        return ()
    n = len(cols[0])
    basis = []
    for row in range(n):
        live = [c for c in cols if c[row] != 0]
        rest = [c for c in cols if c[row] == 0]
        if not live:
            cols = rest
            continue
        # Euclidean reduction of the live columns at this row down to one
        while len(live) > 1:
            live.sort(key=lambda c: abs(c[row]))
            small = live[0]
            keep = [small]
            for c in live[1:]:
                q = c[row] // small[row]
                for i in range(n):
                    c[i] -= q * small[i]
                if c[row] != 0:
                    keep.append(c)
                elif any(c):
                    rest.append(c)
            live = keep
        pivot = live[0]
        if pivot[row] < 0:
            pivot = [-x for x in pivot]
        # canonicalize: reduce earlier basis vectors at the pivot row
        for b in basis:
            q = b[row] // pivot[row]
            if q:
                for i in range(n):
                    b[i] -= q * pivot[i]
        basis.append(list(pivot))
        cols = rest
    return tuple(tuple(b) for b in basis)


def in_lattice(basis, v) -> bool:
    """Membership of v in the lattice described by `lattice_basis` output."""
    v = list(map(int, v))
    n = len(v)
    for b in basis:
        pivot_row = next(i for i in range(n) if b[i] != 0)
        if v[pivot_row] % b[pivot_row] != 0:
            return False
        q = v[pivot_row] // b[pivot_row]
        for i in range(n):
            v[i] -= q * b[i]
    return all(x == 0 for x in v)


def lattice_intersection(basis1, basis2) -> tuple:
    """Canonical basis of the intersection of two lattices in Z^n.

    A vector lies in both lattices iff it is B1 x = -B2 y for a kernel
    vector (x, y) of the stacked column matrix [B1 | B2].
    """
    if not basis1 or not basis2:
        return ()
    n = len(basis1[0])
    cols = list(basis1) + list(basis2)
    stacked = tuple(tuple(cols[j][i] for j in range(len(cols))) for i in range(n))
    r = len(basis1)
    vecs = []
    for k in kernel_basis(stacked):
        vecs.append(tuple(sum(basis1[j][i] * k[j] for j in range(r)) for i in range(n)))
    return lattice_basis(vecs)


def lattice_quotient(big_basis, sub_basis) -> tuple:
    """(free rank, torsion factors) of a lattice modulo a sublattice.

    `sub_basis` must span a sublattice of the one spanned by `big_basis`;
    a ValueError is raised otherwise.
    """
    big = [tuple(v) for v in big_basis]
    sub = [tuple(v) for v in sub_basis if any(v)]
    if not big:
        if sub:
            raise ValueError("sublattice is not contained in the larger lattice")
        return (0, ())
    n = len(big[0])
    bmat = tuple(tuple(big[j][i] for j in range(len(big))) for i in range(n))
    coords = []
    for v in sub:
        x = solve_int(bmat, v)
        if x is None:
            raise ValueError("sublattice is not contained in the larger lattice")
        coords.append(x)
    if not coords:
        return (len(big), ())
    rel = tuple(tuple(coords[j][i] for j in range(len(coords))) for i in range(len(big)))
    return cokernel_group(rel)


def restrict_endomorphism(m, basis) -> tuple:
    """Matrix of an endomorphism of Z^n restricted to an invariant sublattice.

    `basis` is a tuple of lattice vectors b_1..b_r with M b_j in the lattice;
    returns the r x r integer matrix C with M b_j = sum_i C_ij b_i.
    """
    cols = [list(b) for b in basis]
    bmat = tuple(tuple(cols[j][i] for j in range(len(cols))) for i in range(len(cols[0])))
    out = []
    for b in basis:
        image = mat_vec_int(m, b)
        x = solve_int(bmat, image)
        if x is None:
            raise ValueError("sublattice is not invariant under the map")
        out.append(x)
    # out[j] holds the coordinates of M b_j; columns of the result
    r = len(basis)
    return tuple(tuple(out[j][i] for j in range(r)) for i in range(r))


def quotient_by_sublattice(a: int, basis) -> tuple:
    """Structure of N / a Z^n for a full-rank lattice N containing a Z^n.

    `basis` must be a full-rank lattice basis (from `lattice_basis`).
    Returns the invariant factors > 1 of the finite group N / a Z^n.
    """
    n = len(basis)
    bmat = [[Fraction(basis[j][i]) for j in range(n)] for i in range(n)]
    inv = _fraction_inverse(bmat)
    scaled = []
    for row in inv:
        out_row = []
        for x in row:
            v = x * a
            if v.denominator != 1:
                raise ValueError("a Z^n is not contained in the lattice")
            out_row.append(int(v))
        scaled.append(out_row)
    return smith_form(scaled).invariant_factors


def _fraction_inverse(m):
    n = len(m)
    aug = [list(row) + [Fraction(int(i == j)) for j in range(n)] for i, row in enumerate(m)]
    for c in range(n):
        pivot = next((i for i in range(c, n) if aug[i][c] != 0), None)
        if pivot is None:
            raise ValueError("matrix is singular")
        aug[c], aug[pivot] = aug[pivot], aug[c]
        inv = 1 / aug[c][c]
        aug[c] = [x * inv for x in aug[c]]
        for i in range(n):
            if i != c and aug[i][c] != 0:
                f = aug[i][c]
                aug[i] = [x - f * y for x, y in zip(aug[i], aug[c])]
    return [row[n:] for row in aug]


def stable_image_group(m, a: int) -> tuple:
    """Invariant factors of the eventual image of M acting on (Z/a)^n.

    This is the direct-limit group of the stationary system (Z/a)^n with
    map M: iterate N_k = M^k Z^n + a Z^n until the lattice stabilizes, then
    return the structure of N_k / a Z^n.
    """
    n = len(m)
    power = identity_int(n)
    prev = None
    # the lattice chain strictly drops at most n*log2(a) times and a single
    # repeat means it is stationary from then on
    for _ in range(n * n * max(a.bit_length(), 1) + 4):
        power = matmul_int(power, m)
        gens = [tuple(power[i][j] for i in range(n)) for j in range(n)]
        gens += [tuple(a * int(i == j) for i in range(n)) for j in range(n)]
        cur = lattice_basis(gens)
        if cur == prev:
            return quotient_by_sublattice(a, cur)
        prev = cur
    raise AssertionError("image lattice failed to stabilize")
