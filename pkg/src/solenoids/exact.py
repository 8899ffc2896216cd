"""Exact real-algebraic arithmetic built on `fractions.Fraction`.

Everything on the critical path of the analysis (Perron roots, eigenvector
entries, cylinder measures, edge lengths) lives in a field Q(theta) for a
real algebraic theta.  A field is a squarefree defining polynomial together
with an isolating interval with rational endpoints; elements are polynomials
in theta reduced modulo the defining polynomial.  Equality is decided by
polynomial gcds, signs by certified interval refinement.  No floating point
is used anywhere in this module.

Polynomials are tuples of Fraction coefficients, lowest degree first.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Sequence

Poly = tuple


def poly(coeffs) -> Poly:
    """Normalize a coefficient sequence: Fractions, trailing zeros dropped."""
    cs = [Fraction(c) for c in coeffs]
    while cs and cs[-1] == 0:
        cs.pop()
    return tuple(cs)


def degree(p: Poly) -> int:
    return len(p) - 1  # zero polynomial has degree -1


def poly_add(a: Poly, b: Poly) -> Poly:
    n = max(len(a), len(b))
    return poly([(a[i] if i < len(a) else 0) + (b[i] if i < len(b) else 0) for i in range(n)])


def poly_neg(a: Poly) -> Poly:
    return tuple(-c for c in a)


def poly_sub(a: Poly, b: Poly) -> Poly:
    return poly_add(a, poly_neg(b))


def poly_mul(a: Poly, b: Poly) -> Poly:
    if not a or not b:
        return ()
    out = [Fraction(0)] * (len(a) + len(b) - 1)
    for i, ca in enumerate(a):
        if ca:
            for j, cb in enumerate(b):
                out[i + j] += ca * cb
    return poly(out)


def poly_scale(a: Poly, s) -> Poly:
    return poly([c * Fraction(s) for c in a])


def poly_divmod(a: Poly, b: Poly) -> tuple:
    """Exact division with remainder in Q[x]; b must be nonzero."""
    if not b:
        raise ZeroDivisionError("polynomial division by zero")
    rem = list(a)
    quo = [Fraction(0)] * max(len(a) - len(b) + 1, 0)
    dlead = b[-1]
    while len(rem) >= len(b) and any(c != 0 for c in rem):
        while rem and rem[-1] == 0:
            rem.pop()
        if len(rem) < len(b):
            break
        shift = len(rem) - len(b)
        factor = rem[-1] / dlead
        quo[shift] = factor
        for i, c in enumerate(b):
            rem[shift + i] -= factor * c
        rem.pop()
    return poly(quo), poly(rem)


def poly_gcd(a: Poly, b: Poly) -> Poly:
    """Monic gcd in Q[x]."""
    while b:
        a, b = b, poly_divmod(a, b)[1]
    if not a:
        return ()
    return poly_scale(a, 1 / a[-1])


def poly_ext_gcd(a: Poly, b: Poly) -> tuple:
    """Monic g together with s, t such that s*a + t*b = g."""
    r0, r1 = a, b
    s0, s1 = poly([1]), ()
    t0, t1 = (), poly([1])
    while r1:
        q, r = poly_divmod(r0, r1)
        r0, r1 = r1, r
        s0, s1 = s1, poly_sub(s0, poly_mul(q, s1))
        t0, t1 = t1, poly_sub(t0, poly_mul(q, t1))
    if not r0:
        return (), s0, t0
    lead = r0[-1]
    return poly_scale(r0, 1 / lead), poly_scale(s0, 1 / lead), poly_scale(t0, 1 / lead)


def poly_deriv(p: Poly) -> Poly:
    return poly([i * c for i, c in enumerate(p)][1:])


def squarefree_part(p: Poly) -> Poly:
    g = poly_gcd(p, poly_deriv(p))
    if degree(g) <= 0:
        return poly_scale(p, 1 / p[-1]) if p else ()
    return poly_divmod(p, g)[0]


def poly_eval(p: Poly, x: Fraction) -> Fraction:
    acc = Fraction(0)
    for c in reversed(p):
        acc = acc * x + c
    return acc


def eval_interval(p: Poly, lo: Fraction, hi: Fraction) -> tuple:
    """Interval Horner: encloses {p(x) : lo <= x <= hi}."""
    a, b = Fraction(0), Fraction(0)
    for c in reversed(p):
        prods = (a * lo, a * hi, b * lo, b * hi)
        a, b = min(prods) + c, max(prods) + c
    return a, b


def poly_str(p: Poly, var: str = "x") -> str:
    """Human-readable form, highest degree first."""
    if not p:
        return "0"
    terms = []
    for i in range(len(p) - 1, -1, -1):
        c = p[i]
        if c == 0:
            continue
        if i == 0:
            body = str(abs(c))
        else:
            coeff = "" if abs(c) == 1 else f"{abs(c)}*"
            body = f"{coeff}{var}" + (f"^{i}" if i > 1 else "")
        if not terms:
            terms.append(("-" if c < 0 else "") + body)
        else:
            terms.append(("- " if c < 0 else "+ ") + body)
    return " ".join(terms)


# --- Sturm chains and root isolation -------------------------------------


def sturm_chain(p: Poly) -> list:
    p = squarefree_part(p)
    chain = [p, poly_deriv(p)]
    while degree(chain[-1]) > 0:
        r = poly_divmod(chain[-2], chain[-1])[1]
        if not r:
            break
        chain.append(poly_neg(r))
    return chain


def _variations(signs) -> int:
    out, prev = 0, 0
    for s in signs:
        if s == 0:
            continue
        if prev and s != prev:
            out += 1
        prev = s
    return out


def _sign(x: Fraction) -> int:
    return (x > 0) - (x < 0)


def variations_at(chain, x: Fraction) -> int:
    return _variations(_sign(poly_eval(q, x)) for q in chain)


def count_roots(chain, lo: Fraction, hi: Fraction) -> int:
    """Distinct real roots in (lo, hi); endpoints must not be roots."""
    p = chain[0]
    if poly_eval(p, lo) == 0 or poly_eval(p, hi) == 0:
        raise ValueError("Sturm endpoints must not be roots")
    return variations_at(chain, lo) - variations_at(chain, hi)


def cauchy_bound(p: Poly) -> Fraction:
    """All real roots of p lie in (-B, B)."""
    if degree(p) < 1:
        return Fraction(1)
    lead = abs(p[-1])
    return Fraction(1) + max(abs(c) for c in p[:-1]) / lead


def _nonroot_cut(p: Poly, lo: Fraction, hi: Fraction) -> Fraction:
    # midpoint, nudged right past any root that happens to land on it
    m = (lo + hi) / 2
    step = (hi - lo) / 4
    while poly_eval(p, m) == 0:
        m += step
        step /= 2
    return m


def isolate_largest_real_root(p: Poly):
    """Largest real root of p, or None.

    Returns ("rational", value) when that root is an integer (the only
    rational possibility for the monic integer polynomials fed in here),
    otherwise ("interval", lo, hi, squarefree) with exactly one root of the
    squarefree part in the open interval and neither endpoint a root.
    """
    sf = squarefree_part(p)
    if degree(sf) < 1:
        return None
    chain = sturm_chain(sf)
    bound = cauchy_bound(sf)
    lo, hi = -bound, bound
    while poly_eval(sf, lo) == 0:
        lo -= 1
    while poly_eval(sf, hi) == 0:
        hi += 1
    if count_roots(chain, lo, hi) == 0:
        return None
    while count_roots(chain, lo, hi) > 1:
        m = _nonroot_cut(sf, lo, hi)
        if count_roots(chain, m, hi) >= 1:
            lo = m
        else:
            hi = m
    while hi - lo >= 1:
        m = _nonroot_cut(sf, lo, hi)
        if count_roots(chain, m, hi) >= 1:
            lo = m
        else:
            hi = m
    # at most one integer candidate fits in an interval of width < 1
    for k in (lo.__ceil__(), hi.__floor__()):
        if lo < k < hi and poly_eval(sf, Fraction(k)) == 0:
            return ("rational", Fraction(k))
    return ("interval", lo, hi, sf)


# --- Number fields --------------------------------------------------------


class NumberField:
    """Q(theta) with theta the unique root of `modulus` in (lo, hi).

    The modulus is monic and squarefree but not necessarily irreducible;
    when a gcd computation exposes a proper factor, the modulus shrinks to
    whichever factor theta actually satisfies (dynamic evaluation).  The
    isolating interval only ever shrinks, so cached enclosures stay valid.
    """

    __slots__ = ("modulus", "lo", "hi", "name", "_chain")

    def __init__(self, modulus, lo, hi, name: str = "theta"):
        m = poly(modulus)
        if degree(m) < 1:
            raise ValueError("modulus must be nonconstant")
        m = poly_scale(m, 1 / m[-1])
        if squarefree_part(m) != m:
            raise ValueError("modulus must be squarefree")
        self.modulus = m
        self.lo = Fraction(lo)
        self.hi = Fraction(hi)
        self.name = name
        self._chain = sturm_chain(m)
        if poly_eval(m, self.lo) == 0 or poly_eval(m, self.hi) == 0:
            raise ValueError("isolating interval endpoints must not be roots")
        if count_roots(self._chain, self.lo, self.hi) != 1:
            raise ValueError("interval does not isolate a root")

    @classmethod
    def rational(cls, value, name: str = "theta") -> "NumberField":
        v = Fraction(value)
        return cls((-v, 1), v - 1, v + 1, name=name)

    @classmethod
    def from_largest_root(cls, p, name: str = "theta") -> "NumberField":
        found = isolate_largest_real_root(poly(p))
        if found is None:
            raise ValueError("polynomial has no real root")
        if found[0] == "rational":
            return cls.rational(found[1], name=name)
        _, lo, hi, sf = found
        return cls(sf, lo, hi, name=name)

    # -- structure ---------------------------------------------------------

    @property
    def deg(self) -> int:
        return degree(self.modulus)

    @property
    def is_rational(self) -> bool:
        return self.deg == 1

    def rational_value(self) -> Fraction:
        if not self.is_rational:
            raise ValueError("field generator is irrational")
        return -self.modulus[0] / self.modulus[1]

    def _set_modulus(self, m: Poly) -> None:
        m = poly_scale(m, 1 / m[-1])
        self.modulus = m
        self._chain = sturm_chain(m)
        # the old interval isolated theta among roots of the old modulus and
        # roots of m are a subset of those, so it still isolates

    def refine(self) -> None:
        """One bisection step on the isolating interval."""
        m = _nonroot_cut(self.modulus, self.lo, self.hi)
        if count_roots(self._chain, m, self.hi) == 1:
            self.lo = m
        else:
            self.hi = m

    def enclosure(self, width: Fraction) -> tuple:
        while self.hi - self.lo >= width:
            self.refine()
        return self.lo, self.hi

    def contains_root(self, g: Poly) -> bool:
        if degree(g) < 1:
            return False
        # roots of interest are roots of the modulus, so endpoints are safe
        return count_roots(sturm_chain(g), self.lo, self.hi) == 1

    # -- element arithmetic on raw coefficient tuples ----------------------

    def reduce(self, f) -> Poly:
        return poly_divmod(poly(f), self.modulus)[1]

    def poly_is_zero(self, f) -> bool:
        f = self.reduce(f)
        if not f:
            return True
        g = poly_gcd(f, self.modulus)
        if degree(g) == 0:
            return False
        if self.contains_root(g):
            self._set_modulus(g)
            return True
        self._set_modulus(poly_divmod(self.modulus, g)[0])
        return False

    def poly_sign(self, f) -> int:
        if self.poly_is_zero(f):
            return 0
        f = self.reduce(f)
        if self.is_rational:
            return _sign(poly_eval(f, self.rational_value()))
        while True:
            a, b = eval_interval(f, self.lo, self.hi)
            if a > 0:
                return 1
            if b < 0:
                return -1
            self.refine()

    def poly_inverse(self, f) -> Poly:
        f = self.reduce(f)
        while True:
            g, s, _ = poly_ext_gcd(f, self.modulus)
            if degree(g) == 0:
                return self.reduce(s)
            if self.contains_root(g):
                self._set_modulus(g)
                raise ZeroDivisionError("division by zero field element")
            self._set_modulus(poly_divmod(self.modulus, g)[0])
            f = self.reduce(f)

    # -- element constructors ----------------------------------------------

    def element(self, coeffs) -> "FieldElement":
        return FieldElement(self, self.reduce(coeffs))

    def from_fraction(self, value) -> "FieldElement":
        return self.element((Fraction(value),))

    @property
    def zero(self) -> "FieldElement":
        return self.element(())

    @property
    def one(self) -> "FieldElement":
        return self.element((1,))

    @property
    def gen(self) -> "FieldElement":
        return self.element((0, 1))

    def __repr__(self):
        return f"NumberField({poly_str(self.modulus)}, {self.name} in ({self.lo}, {self.hi}))"


class FieldElement:
    """An element of a NumberField; supports arithmetic, signs, enclosures."""

    __slots__ = ("field", "coeffs")

    def __init__(self, field: NumberField, coeffs):
        self.field = field
        self.coeffs = poly(coeffs)

    def _coerce(self, other):
        if isinstance(other, FieldElement):
            if other.field is not self.field:
                raise ValueError("elements of different fields")
            return other
        if isinstance(other, (int, Fraction)):
            return self.field.from_fraction(other)
        return NotImplemented

    def __add__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return FieldElement(self.field, self.field.reduce(poly_add(self.coeffs, o.coeffs)))

    __radd__ = __add__

    def __neg__(self):
        return FieldElement(self.field, poly_neg(self.coeffs))

    def __sub__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return self + (-o)

    def __rsub__(self, other):
        return -(self - other)

    def __mul__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return FieldElement(self.field, self.field.reduce(poly_mul(self.coeffs, o.coeffs)))

    __rmul__ = __mul__

    def __truediv__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return self * FieldElement(self.field, self.field.poly_inverse(o.coeffs))

    def __rtruediv__(self, other):
        inv = FieldElement(self.field, self.field.poly_inverse(self.coeffs))
        return inv * other

    def __pow__(self, n: int):
        if n < 0:
            return (self.field.one / self) ** (-n)
        out, base = self.field.one, self
        while n:
            if n & 1:
                out = out * base
            base = base * base
            n >>= 1
        return out

    # -- predicates ----------------------------------------------------

    def is_zero(self) -> bool:
        return self.field.poly_is_zero(self.coeffs)

    def sign(self) -> int:
        return self.field.poly_sign(self.coeffs)

    def __eq__(self, other):
        o = self._coerce(other)
        if o is NotImplemented:
            return o
        return (self - o).is_zero()

    def __lt__(self, other):
        return (self - other).sign() < 0

    def __le__(self, other):
        return (self - other).sign() <= 0

    def __gt__(self, other):
        return (self - other).sign() > 0

    def __ge__(self, other):
        return (self - other).sign() >= 0

    __hash__ = None  # mutable field state; not hashable by design

    def __abs__(self):
        return -self if self.sign() < 0 else self

    # -- conversions -----------------------------------------------------

    def is_rational(self) -> bool:
        if self.field.is_rational:
            return True
        return degree(self.field.reduce(self.coeffs)) <= 0

    def as_fraction(self) -> Fraction:
        f = self.field.reduce(self.coeffs)
        if not f:
            return Fraction(0)
        if degree(f) == 0:
            return f[0]
        if self.field.is_rational:
            return poly_eval(f, self.field.rational_value())
        raise ValueError("element is not rational")

    def enclosure(self, width) -> tuple:
        """Rational (lo, hi) with hi - lo < width containing the value."""
        width = Fraction(width)
        if self.is_rational():
            v = self.as_fraction()
            return v, v
        while True:
            a, b = eval_interval(self.coeffs, self.field.lo, self.field.hi)
            if b - a < width:
                return a, b
            self.field.refine()

    def __float__(self):
        a, b = self.enclosure(Fraction(1, 2**70))
        return float((a + b) / 2)

    def __repr__(self):
        if self.is_rational():
            return f"FieldElement({self.as_fraction()})"
        return f"FieldElement({poly_str(self.coeffs, self.field.name)})"


def dyadic_enclosure(x: FieldElement, bits: int = 64) -> tuple:
    """Outward-rounded enclosure with denominators dividing 2**bits."""
    step = Fraction(1, 2**bits)
    a, b = x.enclosure(step)
    lo = Fraction((a / step).__floor__(), 1) * step
    hi = Fraction((b / step).__ceil__(), 1) * step
    return lo, hi


# --- Characteristic polynomials and Perron data ---------------------------


def charpoly(mat: Sequence[Sequence[int]]) -> Poly:
    """Characteristic polynomial det(xI - A), lowest degree first.

    Faddeev-LeVerrier over Fractions; exact, fine for the small matrices
    this package handles.
    """
    n = len(mat)
    a = [[Fraction(x) for x in row] for row in mat]
    ident = [[Fraction(int(i == j)) for j in range(n)] for i in range(n)]
    coeffs = [Fraction(1)]  # highest degree first while building
    m = [row[:] for row in ident]
    for k in range(1, n + 1):
        am = [[sum(a[i][t] * m[t][j] for t in range(n)) for j in range(n)] for i in range(n)]
        ck = -sum(am[i][i] for i in range(n)) / k
        coeffs.append(ck)
        m = [[am[i][j] + (ck if i == j else 0) for j in range(n)] for i in range(n)]
    return poly(list(reversed(coeffs)))


def field_nullspace(rows, field: NumberField):
    """Basis of the right nullspace of a matrix with FieldElement entries."""
    m = [list(r) for r in rows]
    nrows = len(m)
    ncols = len(m[0]) if nrows else 0
    pivots = []
    r = 0
    for c in range(ncols):
        pivot = None
        for i in range(r, nrows):
            if not m[i][c].is_zero():
                pivot = i
                break
        if pivot is None:
            continue
        m[r], m[pivot] = m[pivot], m[r]
        inv = field.one / m[r][c]
        m[r] = [x * inv for x in m[r]]
        for i in range(nrows):
            if i != r and not m[i][c].is_zero():
                f = m[i][c]
                m[i] = [x - f * y for x, y in zip(m[i], m[r])]
        pivots.append(c)
        r += 1
        if r == nrows:
            break
    free = [c for c in range(ncols) if c not in pivots]
    basis = []
    for fc in free:
        vec = [field.zero] * ncols
        vec[fc] = field.one
        for i, pc in enumerate(pivots):
            vec[pc] = -m[i][fc]
        basis.append(vec)
    return basis


@dataclass
class PerronData:
    """Largest real eigenvalue of a nonnegative integer matrix, exactly.

    `left` satisfies left * A = value * left and is scaled so its largest
    entry is 1; `right` satisfies A * right = value * right and is scaled to
    sum to 1.  Either may be None when the eigenvalue is not simple.
    """

    matrix: tuple
    poly: Poly
    field: NumberField
    value: FieldElement
    left: tuple
    right: tuple

    @property
    def is_rational(self) -> bool:
        return self.value.is_rational()


def perron_data(mat, name: str = "lambda", want_vectors: bool = True) -> PerronData:
    mat = tuple(tuple(int(x) for x in row) for row in mat)
    n = len(mat)
    for row in mat:
        if len(row) != n or any(x < 0 for x in row):
            raise ValueError("expected a square nonnegative integer matrix")
    cp = charpoly(mat)
    field = NumberField.from_largest_root(cp, name=name)
    lam = field.gen
    left = right = None
    if want_vectors:
        a = [[field.from_fraction(mat[i][j]) for j in range(n)] for i in range(n)]
        lam_diag = lambda m: [[m[i][j] - (lam if i == j else field.zero) for j in range(n)] for i in range(n)]
        right_basis = field_nullspace(lam_diag(a), field)
        at = [[a[j][i] for j in range(n)] for i in range(n)]
        left_basis = field_nullspace(lam_diag(at), field)
        if len(right_basis) == 1 and len(left_basis) == 1:
            lvec, rvec = left_basis[0], right_basis[0]
            biggest = lvec[0]
            for x in lvec[1:]:
                if abs(x) > abs(biggest):
                    biggest = x
            left = tuple(x / biggest for x in lvec)
            total = rvec[0]
            for x in rvec[1:]:
                total = total + x
            right = tuple(x / total for x in rvec)
    return PerronData(matrix=mat, poly=cp, field=field, value=lam, left=left, right=right)
