"""Random linear network coding: encoding, online Gaussian-elimination
decoding, and the coded-packet wire frame.

Coded frame layout (integers little-endian)::

    magic "FNC1" | generation u32 | s u8 | K u16 | payload_len u32 |
    original_len u32 | coefficients (K symbols, MSB-first bit packing,
    ceil(K*s/8) bytes) | payload (payload_len bytes)
"""
import enum
import struct
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    GenerationMismatch,
    LengthMismatch,
    MalformedFrame,
    RankDeficient,
    VectorMismatch,
)
from .galois import SUPPORTED_WIDTHS, FieldSpec, bytes_from_symbols, symbols_from_bytes

MAGIC = b"FNC1"
_HEADER = struct.Struct("<4sIBHII")

CodingVector = tuple  # tuple of K symbols


@dataclass(frozen=True)
class Packet:
    payload: bytes
    origin_id: int = 0
    generation: int = 0

    def __post_init__(self):
        if len(self.payload) == 0:
            raise LengthMismatch("packet payload must be non-empty")


@dataclass(frozen=True)
class CodedPacket:
    vector: CodingVector
    payload: bytes
    generation: int
    spec: FieldSpec
    original_len: int

    @property
    def k(self) -> int:
        return len(self.vector)


class AbsorbOutcome(enum.Enum):
    INNOVATIVE = "innovative"
    REDUNDANT = "redundant"
    COMPLETE = "complete"


def random_coding_vector(k: int, spec: FieldSpec, rng: np.random.Generator) -> CodingVector:
    """K coefficients drawn independently and uniformly from the field (zero included)."""
    if k < 1:
        raise ValueError("generation size must be >= 1")
    return tuple(int(x) for x in spec.random_symbols(rng, k))


def _lanes(payload: bytes, spec: FieldSpec) -> np.ndarray:
    # at s=1 every coefficient is 0 or 1, so rows can stay packed as bytes
    if spec.s == 1:
        return np.frombuffer(payload, dtype=np.uint8).copy()
    return symbols_from_bytes(payload, spec, auto_pad=True)


def _unlanes(lanes: np.ndarray, spec: FieldSpec) -> bytes:
    if spec.s == 1:
        return lanes.tobytes()
    return bytes_from_symbols(lanes, spec)


def _check_generation(packets: Sequence[Packet]):
    if not packets:
        raise VectorMismatch("no packets to encode")
    n = len(packets[0].payload)
    gen = packets[0].generation
    for p in packets[1:]:
        if len(p.payload) != n:
            raise LengthMismatch(f"packet lengths differ: {n} vs {len(p.payload)}")
        if p.generation != gen:
            raise GenerationMismatch(f"packets from generations {gen} and {p.generation}")
    return n, gen


def encode(packets: Sequence[Packet], vector: CodingVector, spec: FieldSpec) -> CodedPacket:
    """Symbol-wise linear combination sum_k vector[k] * packets[k]."""
    n, gen = _check_generation(packets)
    if len(vector) != len(packets):
        raise VectorMismatch(f"vector length {len(vector)} != generation size {len(packets)}")
    acc = None
    for coef, p in zip(vector, packets):
        spec.check(coef)
        if coef == 0:
            continue
        term = spec.scale(coef, _lanes(p.payload, spec)) if spec.s != 1 else _lanes(p.payload, spec)
        acc = term if acc is None else acc ^ term
    if acc is None:
        acc = np.zeros_like(_lanes(packets[0].payload, spec))
    return CodedPacket(tuple(int(c) for c in vector), _unlanes(acc, spec), gen, spec, n)


def encode_batch(packets: Sequence[Packet], vectors, spec: FieldSpec):
    return [encode(packets, v, spec) for v in vectors]


class DecoderState:
    """Incremental Gaussian elimination over one generation.

    Stored rows are kept in reduced row-echelon form: every pivot is 1 and
    is the only nonzero entry of its column among stored rows.  Coefficient
    and payload rows receive identical row operations.
    """

    def __init__(self, k: int, spec: FieldSpec, generation: Optional[int] = None,
                 payload_len: Optional[int] = None):
        if k < 1:
            raise ValueError("generation size must be >= 1")
        self.k = k
        self.spec = spec
        self.generation = generation
        self.payload_len = payload_len
        self.original_len = None
        self._coef = []     # list of symbol arrays, length k
        self._data = []     # paired payload lanes (or None for vector-only use)
        self.pivot_map = {}  # pivot column -> row index

    @property
    def rank(self) -> int:
        return len(self._coef)

    @property
    def complete(self) -> bool:
        return self.rank == self.k

    @property
    def rows(self) -> np.ndarray:
        if not self._coef:
            return np.zeros((0, self.k), dtype=self.spec.dtype)
        return np.stack(self._coef)

    def absorb(self, cp: CodedPacket) -> AbsorbOutcome:
        if cp.spec != self.spec:
            raise VectorMismatch("coded packet uses a different field")
        if len(cp.vector) != self.k:
            raise VectorMismatch(f"vector length {len(cp.vector)} != {self.k}")
        if self.generation is None:
            self.generation = cp.generation
        elif cp.generation != self.generation:
            raise GenerationMismatch(f"expected generation {self.generation}, got {cp.generation}")
        if self.payload_len is None:
            self.payload_len = len(cp.payload)
        elif len(cp.payload) != self.payload_len:
            raise LengthMismatch(f"payload length {len(cp.payload)} != {self.payload_len}")
        if self.original_len is None:
            self.original_len = cp.original_len
        vec = np.array(cp.vector, dtype=self.spec.dtype)
        return self._insert(vec, _lanes(cp.payload, self.spec))

    def absorb_vector(self, vector) -> AbsorbOutcome:
        """Absorb a bare coefficient vector (rank tracking without payloads)."""
        vec = np.array(vector, dtype=self.spec.dtype)
        if vec.shape != (self.k,):
            raise VectorMismatch(f"vector length {vec.size} != {self.k}")
        return self._insert(vec, None)

    def _insert(self, vec, data):
        spec = self.spec
        if self.complete:
            return AbsorbOutcome.REDUNDANT
        for col, i in self.pivot_map.items():
            c = int(vec[col])
            if c:
                vec ^= spec.scale(c, self._coef[i])
                if data is not None:
                    data ^= self._scale_data(c, self._data[i])
        nz = np.flatnonzero(vec)
        if nz.size == 0:
            return AbsorbOutcome.REDUNDANT
        p = int(nz[0])
        lead = int(vec[p])
        if lead != 1:
            ic = spec.inv(lead)
            vec = spec.scale(ic, vec)
            if data is not None:
                data = self._scale_data(ic, data)
        for i in range(len(self._coef)):
            c = int(self._coef[i][p])
            if c:
                self._coef[i] ^= spec.scale(c, vec)
                if data is not None:
                    self._data[i] ^= self._scale_data(c, data)
        self.pivot_map[p] = len(self._coef)
        self._coef.append(vec)
        self._data.append(data)
        return AbsorbOutcome.COMPLETE if self.complete else AbsorbOutcome.INNOVATIVE

    def _scale_data(self, c, data):
        if self.spec.s == 1:
            return data.copy()
        return self.spec.scale(c, data)

    def extract(self, origin_ids: Optional[Sequence[int]] = None) -> list:
        """Recover the original packets in index order."""
        if not self.complete:
            raise RankDeficient(f"rank {self.rank} < {self.k}")
        if any(d is None for d in self._data):
            raise RankDeficient("decoder was fed bare vectors; no payloads to extract")
        ids = list(range(self.k)) if origin_ids is None else list(origin_ids)
        out = []
        for col in range(self.k):
            lanes = self._data[self.pivot_map[col]]
            payload = _unlanes(lanes, self.spec)[: self.original_len]
            out.append(Packet(payload, ids[col], self.generation or 0))
        return out


def decode(coded: Sequence[CodedPacket], k: int, spec: FieldSpec, origin_ids=None) -> list:
    state = DecoderState(k, spec)
    for cp in coded:
        state.absorb(cp)
    return state.extract(origin_ids)


def rank_batch(matrices: np.ndarray, spec: FieldSpec) -> np.ndarray:
    """Rank of every matrix in a (n, rows, cols) stack, by vectorized elimination."""
    m = np.array(matrices, dtype=spec.dtype, copy=True)
    n, r, c = m.shape
    rank = np.zeros(n, dtype=np.int64)
    rows = np.arange(r)
    for col in range(c):
        cand = (m[:, :, col] != 0) & (rows[None, :] >= rank[:, None])
        has = cand.any(axis=1)
        if not has.any():
            continue
        t = np.flatnonzero(has)
        p = cand[t].argmax(axis=1)
        q = rank[t]
        prow = m[t, p].copy()
        m[t, p] = m[t, q]
        pivot = prow[:, col]
        prow = spec.mul_arrays(spec.inv_array(pivot)[:, None], prow)
        m[t, q] = prow
        factors = m[t, :, col].copy()
        factors[rows[None, :] <= q[:, None]] = 0
        m[t] ^= spec.mul_arrays(factors[:, :, None], prow[:, None, :])
        rank[t] += 1
    return rank


def pack_symbols(symbols: Sequence[int], s: int) -> bytes:
    """Pack symbols MSB-first into ceil(len*s/8) bytes."""
    bits = []
    for sym in symbols:
        bits.extend((sym >> (s - 1 - i)) & 1 for i in range(s))
    if not bits:
        return b""
    return np.packbits(np.array(bits, dtype=np.uint8)).tobytes()


def unpack_symbols(data: bytes, k: int, s: int) -> tuple:
    bits = np.unpackbits(np.frombuffer(data, dtype=np.uint8))
    syms = []
    for j in range(k):
        v = 0
        for b in bits[j * s:(j + 1) * s]:
            v = (v << 1) | int(b)
        syms.append(v)
    return tuple(syms), bits[k * s:]


def serialize_coded(cp: CodedPacket) -> bytes:
    header = _HEADER.pack(MAGIC, cp.generation, cp.spec.s, len(cp.vector),
                          len(cp.payload), cp.original_len)
    return header + pack_symbols(cp.vector, cp.spec.s) + bytes(cp.payload)


def deserialize_coded(frame: bytes) -> CodedPacket:
    frame = bytes(frame)
    if len(frame) < _HEADER.size:
        raise MalformedFrame(len(frame), "truncated header")
    magic, gen, s, k, plen, olen = _HEADER.unpack_from(frame, 0)
    if magic != MAGIC:
        raise MalformedFrame(0, f"bad magic {magic!r}")
    if s not in SUPPORTED_WIDTHS:
        raise MalformedFrame(8, f"unsupported symbol width {s}")
    if k < 1:
        raise MalformedFrame(9, "generation size is zero")
    if plen == 0 or (s == 16 and plen % 2):
        raise MalformedFrame(11, f"invalid payload length {plen} for s={s}")
    if not (plen - (1 if s == 16 else 0) <= olen <= plen):
        raise MalformedFrame(15, f"original length {olen} inconsistent with payload length {plen}")
    off = _HEADER.size
    clen = (k * s + 7) // 8
    if len(frame) < off + clen:
        raise MalformedFrame(len(frame), "truncated coefficients")
    vector, pad = unpack_symbols(frame[off:off + clen], k, s)
    if pad.any():
        raise MalformedFrame(off + clen - 1, "nonzero coefficient padding bits")
    off += clen
    if len(frame) < off + plen:
        raise MalformedFrame(len(frame), "truncated payload")
    if len(frame) > off + plen:
        raise MalformedFrame(off + plen, "trailing bytes after payload")
    return CodedPacket(vector, frame[off:off + plen], gen, FieldSpec(s), olen)
