"""Closed forms and exact oracles for blind-box collection and decoding error."""
import math
from dataclasses import dataclass
from fractions import Fraction
from itertools import product

from .errors import FieldTooSmall

EULER_GAMMA = 0.5772156649


@dataclass(frozen=True)
class BoundInputs:
    s: int
    eta: int
    K: int = 1
    d: int = 1

    def __post_init__(self):
        if self.s < 1 or self.eta < 1 or self.d < 1:
            raise ValueError("s, eta and d must be >= 1")


def harmonic(k: int) -> float:
    return math.fsum(1.0 / i for i in range(1, k + 1))


def coupon_expectation_exact(k: int) -> float:
    """K * H_K, the expected uniform draws needed to see all K packet types."""
    if k < 1:
        raise ValueError("K must be >= 1")
    total = 0.0
    for i in range(1, k + 1):
        total += 1.0 / i
    return k * total


def coupon_expectation_asymptotic(k: int) -> float:
    """K ln K + gamma K + 1/2."""
    if k < 1:
        raise ValueError("K must be >= 1")
    return k * math.log(k) + EULER_GAMMA * k + 0.5


def invertibility_probability(k: int, s: int, exact: bool = False):
    """Probability that a uniform K x K matrix over GF(2^s) is nonsingular."""
    if exact:
        p = Fraction(1)
        for i in range(1, k + 1):
            p *= 1 - Fraction(1, 2 ** (s * i))
        return p
    p = 1.0
    for i in range(1, k + 1):
        p *= 1.0 - 2.0 ** (-s * i)
    return p


def decode_error_probability(k: int, s: int, exact: bool = False):
    return 1 - invertibility_probability(k, s, exact)


def prop2_error_bound(inputs: BoundInputs) -> float:
    """Upper bound 1 - (1 - 2^-s)^eta on the per-round decoding error."""
    return 1.0 - (1.0 - 2.0 ** -inputs.s) ** inputs.eta


def bound_success_term(s: int, eta: int) -> float:
    """(1 - 2^-s)^eta, the complement of :func:`prop2_error_bound`."""
    return (1.0 - 2.0 ** -s) ** eta


def success_lower_bound_general(d: int, s: int, eta: int) -> float:
    """(1 - d / 2^s)^eta, valid when s > log2(d)."""
    if not s > math.log2(d):
        raise FieldTooSmall(f"s={s} must exceed log2(d)={math.log2(d):.3f}")
    return (1.0 - d * 2.0 ** -s) ** eta


def coded_collection_expectation(k: int, s: int) -> float:
    """Expected uniform draws until random vectors over GF(2^s) reach rank K."""
    if k < 1:
        raise ValueError("K must be >= 1")
    q = 2.0 ** s
    return math.fsum(1.0 / (1.0 - q ** -j) for j in range(1, k + 1))


def gaussian_binomial(n: int, r: int, q: int) -> int:
    """Number of r-dimensional subspaces of GF(q)^n."""
    if r < 0 or r > n:
        return 0
    num = den = 1
    for i in range(r):
        num *= q ** (n - i) - 1
        den *= q ** (i + 1) - 1
    return num // den


def rank_distribution(m: int, k: int, s: int) -> list:
    """Exact P(rank = r) for a uniform m x K matrix over GF(2^s), r = 0..min(m, K)."""
    q = 2 ** s
    total = q ** (m * k)
    out = []
    for r in range(min(m, k) + 1):
        count = gaussian_binomial(k, r, q)
        for i in range(r):
            count *= q ** m - q ** i
        out.append(Fraction(count, total))
    return out


def unit_recovery_probability(m: int, k: int, s: int) -> Fraction:
    """Exact probability that the row space of m uniform random coded vectors
    contains at least one unit vector, i.e. an eavesdropper holding m coded
    packets can isolate some original packet.

    Given rank r the row space is a uniform r-dimensional subspace;
    inclusion-exclusion counts subspaces containing span{e_j : j in S}.
    """
    q = 2 ** s
    p = Fraction(0)
    for r, pr in enumerate(rank_distribution(m, k, s)):
        if pr == 0 or r == 0:
            continue
        total = gaussian_binomial(k, r, q)
        hit = 0
        for j in range(1, r + 1):
            hit += (-1) ** (j + 1) * math.comb(k, j) * gaussian_binomial(k - j, r - j, q)
        p += pr * Fraction(hit, total)
    return p


def enumerate_invertible_fraction(k: int) -> Fraction:
    """Fraction of all 2^(K^2) binary K x K matrices that are invertible (brute force)."""
    good = 0
    for bits in product((0, 1), repeat=k * k):
        rows = [int("".join(map(str, bits[i * k:(i + 1) * k])), 2) for i in range(k)]
        if _gf2_rank(rows) == k:
            good += 1
    return Fraction(good, 2 ** (k * k))


def _gf2_rank(rows) -> int:
    basis = {}
    for r in rows:
        while r:
            top = r.bit_length() - 1
            if top not in basis:
                basis[top] = r
                break
            r ^= basis[top]
    return len(basis)


REFERENCE_BOUNDS = [(1, 1, 0.5), (4, 1, 0.9375), (8, 1, 0.9961), (8, 100, 0.6761)]


def bound_table(settings=None, k: int = 10):
    """Rows of (s, eta, error bound, success term, exact single-hop error at K)."""
    rows = []
    for s, eta in settings or [(s, e) for s, e, _ in REFERENCE_BOUNDS]:
        rows.append({
            "s": s,
            "eta": eta,
            "error_bound": prop2_error_bound(BoundInputs(s, eta)),
            "success_term": bound_success_term(s, eta),
            "exact_error_K": decode_error_probability(k, s),
            "K": k,
        })
    return rows
