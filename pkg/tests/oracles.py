"""Independent brute-force oracles used by the test suite.

Nothing in here imports the package's linear algebra: cokernel structure is
derived from adjugate fingerprints and subgroup enumeration, so agreement
with the Smith-normal-form route is a genuine two-route check.
"""

from __future__ import annotations

from itertools import product


def det3(a) -> int:
    (a11, a12, a13), (a21, a22, a23), (a31, a32, a33) = a
    return (
        a11 * (a22 * a33 - a23 * a32)
        - a12 * (a21 * a33 - a23 * a31)
        + a13 * (a21 * a32 - a22 * a31)
    )


def adjugate3(a) -> list:
    (a11, a12, a13), (a21, a22, a23), (a31, a32, a33) = a
    return [
        [a22 * a33 - a23 * a32, a13 * a32 - a12 * a33, a12 * a23 - a13 * a22],
        [a23 * a31 - a21 * a33, a11 * a33 - a13 * a31, a13 * a21 - a11 * a23],
        [a21 * a32 - a22 * a31, a12 * a31 - a11 * a32, a11 * a22 - a12 * a21],
    ]


def brute_cokernel_3x3(a) -> tuple:
    """Invariant factors > 1 of Z^3 / A Z^3 for nonsingular integer A.

    v and w lie in the same coset iff adj(A) (v - w) == 0 mod |det A|, so
    the cokernel is isomorphic to the subgroup of (Z/d)^3 generated by the
    columns of the adjugate.  That subgroup is enumerated outright and its
    shape pinned down by counting m-torsion elements.
    """
    d = abs(det3(a))
    if d == 0:
        raise ValueError("need a nonsingular matrix")
    adj = adjugate3(a)
    gens = [tuple(adj[i][j] % d for i in range(3)) for j in range(3)]
    zero = (0, 0, 0)
    group = {zero}
    frontier = [zero]
    while frontier:
        base = frontier.pop()
        for g in gens:
            nxt = tuple((base[i] + g[i]) % d for i in range(3))
            if nxt not in group:
                group.add(nxt)
                frontier.append(nxt)
    assert len(group) == d, "coset fingerprint group has the wrong order"
    divisors = [m for m in range(1, d + 1) if d % m == 0]
    counts = {m: sum(1 for k in group if all((m * x) % d == 0 for x in k)) for m in divisors}
    matches = []
    for d1, d2, d3 in product(divisors, repeat=3):
        if d1 * d2 * d3 != d or d2 % d1 or d3 % d2:
            continue
        if all(counts[m] == gcd(d1, m) * gcd(d2, m) * gcd(d3, m) for m in divisors):
            matches.append((d1, d2, d3))
    assert len(matches) == 1, f"torsion counts did not pin a unique group: {matches}"
    return tuple(x for x in matches[0] if x > 1)


def gcd(a: int, b: int) -> int:
    while b:
        a, b = b, a % b
    return a
