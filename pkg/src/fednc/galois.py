"""Arithmetic in GF(2^s) for s in {1, 2, 4, 8, 16}.

Symbols are plain Python ints (scalar API) or numpy unsigned arrays
(vectorized API).  Addition is XOR.  Multiplication strategy per width:

    s = 1        bitwise AND
    s = 2, 4     log/antilog tables
    s = 8        full 256 x 256 product table (built from log/antilog)
    s = 16       shift-and-reduce

Tables are built once per (s, polynomial) and shared read-only.
"""
from dataclasses import dataclass
from functools import lru_cache
from typing import Optional

import numpy as np

from .errors import PaddingRequired, ZeroInverse

SUPPORTED_WIDTHS = (1, 2, 4, 8, 16)

# leading term included
DEFAULT_POLYS = {
    1: 0b11,                 # x + 1
    2: 0b111,                # x^2 + x + 1
    4: 0b10011,              # x^4 + x + 1
    8: 0x11B,                # x^8 + x^4 + x^3 + x + 1
    16: 0x1100B,             # x^16 + x^12 + x^3 + x + 1
}


def poly_degree(p: int) -> int:
    return p.bit_length() - 1


def poly_mod(a: int, m: int) -> int:
    """Remainder of carry-less division a mod m over GF(2)."""
    dm = poly_degree(m)
    while a and poly_degree(a) >= dm:
        a ^= m << (poly_degree(a) - dm)
    return a


def clmul(a: int, b: int) -> int:
    """Carry-less product of two GF(2) polynomials."""
    r = 0
    while b:
        if b & 1:
            r ^= a
        a <<= 1
        b >>= 1
    return r


@lru_cache(maxsize=None)
def is_irreducible(p: int) -> bool:
    """Exhaustive trial division by every polynomial of degree 1..deg(p)//2."""
    d = poly_degree(p)
    if d < 1:
        return False
    for div in range(2, 1 << (d // 2 + 1)):
        if poly_mod(p, div) == 0:
            return False
    return True


class _Tables:
    def __init__(self, s, poly):
        self.s = s
        self.poly = poly
        order = 1 << s
        self.log = self.exp = self.full = None
        if s in (2, 4, 8):
            gen = self._find_generator()
            exp = np.zeros(2 * (order - 1), dtype=np.int64)
            log = np.zeros(order, dtype=np.int64)
            x = 1
            for i in range(order - 1):
                exp[i] = x
                log[x] = i
                x = poly_mod(clmul(x, gen), poly)
            exp[order - 1:] = exp[:order - 1]
            self.log, self.exp = log, exp
            a = np.arange(order)
            full = exp[(log[a][:, None] + log[a][None, :])].astype(np.uint8)
            full[0, :] = 0
            full[:, 0] = 0
            self.full = full
        elif s == 1:
            self.full = np.array([[0, 0], [0, 1]], dtype=np.uint8)

    def _find_generator(self):
        order = 1 << self.s
        for g in range(2, order):
            x, n = g, 1
            while x != 1:
                x = poly_mod(clmul(x, g), self.poly)
                n += 1
            if n == order - 1:
                return g
        raise ValueError("polynomial has no primitive element")  # unreachable for irreducible p


_TABLE_CACHE = {}


def _tables(s, poly):
    key = (s, poly)
    t = _TABLE_CACHE.get(key)
    if t is None:
        t = _TABLE_CACHE[key] = _Tables(s, poly)
    return t


@dataclass(frozen=True)
class FieldSpec:
    """A field GF(2^s) defined by an irreducible reduction polynomial."""

    s: int = 8
    reduction_poly: Optional[int] = None

    def __post_init__(self):
        if self.s not in SUPPORTED_WIDTHS:
            raise ValueError(f"unsupported symbol width s={self.s}; expected one of {SUPPORTED_WIDTHS}")
        if self.reduction_poly is None:
            object.__setattr__(self, "reduction_poly", DEFAULT_POLYS[self.s])
        if poly_degree(self.reduction_poly) != self.s:
            raise ValueError(f"reduction polynomial {self.reduction_poly:#x} has degree != {self.s}")
        if not is_irreducible(self.reduction_poly):
            raise ValueError(f"reduction polynomial {self.reduction_poly:#x} is reducible")

    @property
    def order(self) -> int:
        return 1 << self.s

    @property
    def dtype(self):
        return np.uint16 if self.s == 16 else np.uint8

    @property
    def _t(self) -> _Tables:
        return _tables(self.s, self.reduction_poly)

    # scalar API

    def check(self, a: int) -> int:
        if not 0 <= a < self.order:
            raise ValueError(f"symbol {a} out of range for GF(2^{self.s})")
        return a

    def add(self, a: int, b: int) -> int:
        return a ^ b

    sub = add

    def mul(self, a: int, b: int) -> int:
        if self.s == 1:
            return a & b
        if self.s == 8:
            return int(self._t.full[a, b])
        if self.s == 16:
            return self._shift_reduce(a, b)
        if a == 0 or b == 0:
            return 0
        t = self._t
        return int(t.exp[t.log[a] + t.log[b]])

    def _shift_reduce(self, a, b):
        r = 0
        top = 1 << self.s
        while b:
            if b & 1:
                r ^= a
            b >>= 1
            a <<= 1
            if a & top:
                a ^= self.reduction_poly
        return r

    def inv(self, a: int) -> int:
        if a == 0:
            raise ZeroInverse("zero has no multiplicative inverse")
        if self.s == 1:
            return 1
        if self.s == 16:
            return self.pow(a, self.order - 2)
        t = self._t
        return int(t.exp[(self.order - 1 - t.log[a]) % (self.order - 1)])

    def div(self, a: int, b: int) -> int:
        return self.mul(a, self.inv(b))

    def pow(self, a: int, e: int) -> int:
        r = 1
        while e:
            if e & 1:
                r = self.mul(r, a)
            a = self.mul(a, a)
            e >>= 1
        return r

    # vectorized API

    def scale(self, c: int, v: np.ndarray) -> np.ndarray:
        """Multiply every symbol of ``v`` by the scalar ``c``."""
        if c == 0:
            return np.zeros_like(v)
        if c == 1:
            return v.copy()
        if self.s == 16:
            # c * v = XOR over set bits i of v of (c * x^i)
            out = np.zeros(v.shape, dtype=np.uint16)
            ci = c
            for i in range(16):
                out ^= np.where((v >> i) & 1, np.uint16(ci), np.uint16(0)).astype(np.uint16)
                ci <<= 1
                if ci & 0x10000:
                    ci ^= self.reduction_poly
            return out
        return self._t.full[c][v]

    def mul_arrays(self, a: np.ndarray, b: np.ndarray) -> np.ndarray:
        """Elementwise product of broadcast-compatible symbol arrays."""
        if self.s == 1:
            return a & b
        if self.s != 16:
            return self._t.full[a, b]
        a = np.asarray(a, dtype=np.uint32)
        b = np.asarray(b, dtype=np.uint32)
        a, b = np.broadcast_arrays(a, b)
        a = a.copy()
        out = np.zeros(a.shape, dtype=np.uint32)
        for i in range(16):
            out ^= np.where((b >> i) & 1, a, 0).astype(np.uint32)
            a <<= 1
            a ^= np.where(a & 0x10000, np.uint32(self.reduction_poly), np.uint32(0)).astype(np.uint32)
        return out.astype(np.uint16)

    def inv_array(self, a: np.ndarray) -> np.ndarray:
        """Elementwise inverse; zeros map to zero (callers mask them)."""
        if self.s == 1:
            return a.copy()
        if self.s != 16:
            t = self._t
            inv = np.zeros(self.order, dtype=np.uint8)
            nz = np.arange(1, self.order)
            inv[1:] = t.exp[(self.order - 1 - t.log[nz]) % (self.order - 1)]
            return inv[a]
        r = np.ones_like(a)
        base = a.copy()
        e = self.order - 2
        while e:
            if e & 1:
                r = self.mul_arrays(r, base)
            base = self.mul_arrays(base, base)
            e >>= 1
        return np.where(a == 0, 0, r).astype(a.dtype)

    def random_symbols(self, rng: np.random.Generator, size) -> np.ndarray:
        return rng.integers(0, self.order, size=size, dtype=np.uint32).astype(self.dtype)


GF2 = FieldSpec(1)
GF256 = FieldSpec(8)


def symbols_from_bytes(payload: bytes, spec: FieldSpec, auto_pad: bool = False) -> np.ndarray:
    """Slice a byte string into field symbols.

    Sub-byte symbols are taken most-significant bits first; at s=16 each
    symbol is a little-endian byte pair.
    """
    raw = np.frombuffer(bytes(payload), dtype=np.uint8)
    s = spec.s
    if s == 8:
        return raw.copy()
    if s == 16:
        if raw.size % 2:
            if not auto_pad:
                raise PaddingRequired("odd-length payload at s=16")
            raw = np.append(raw, np.uint8(0))
        return raw.view("<u2").astype(np.uint16)
    bits = np.unpackbits(raw).reshape(-1, s)
    weights = (1 << np.arange(s - 1, -1, -1)).astype(np.uint8)
    return (bits * weights).sum(axis=1).astype(np.uint8)


def bytes_from_symbols(symbols: np.ndarray, spec: FieldSpec) -> bytes:
    """Inverse of :func:`symbols_from_bytes` (without removing padding)."""
    s = spec.s
    symbols = np.asarray(symbols)
    if s == 8:
        return symbols.astype(np.uint8).tobytes()
    if s == 16:
        return symbols.astype("<u2").tobytes()
    if (symbols.size * s) % 8:
        raise ValueError("symbol count does not fill whole bytes")
    shifts = np.arange(s - 1, -1, -1)
    bits = ((symbols.astype(np.uint8)[:, None] >> shifts) & 1).astype(np.uint8)
    return np.packbits(bits.reshape(-1)).tobytes()
