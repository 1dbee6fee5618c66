import struct

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fednc import codec
from fednc.codec import (
    AbsorbOutcome,
    CodedPacket,
    DecoderState,
    Packet,
    deserialize_coded,
    encode,
    random_coding_vector,
    rank_batch,
    serialize_coded,
)
from fednc.errors import (
    GenerationMismatch,
    LengthMismatch,
    MalformedFrame,
    RankDeficient,
    VectorMismatch,
)
from fednc.galois import FieldSpec, symbols_from_bytes

GF2, GF16, GF256 = FieldSpec(1), FieldSpec(4), FieldSpec(8)


def packets(rng, k, n, gen=0):
    return [Packet(rng.bytes(n), i, gen) for i in range(k)]


def brute_rank(rows, spec):
    """Plain row reduction with scalar field calls (independent of DecoderState)."""
    m = [list(r) for r in rows]
    rank, cols = 0, len(m[0]) if m else 0
    for c in range(cols):
        piv = next((i for i in range(rank, len(m)) if m[i][c]), None)
        if piv is None:
            continue
        m[rank], m[piv] = m[piv], m[rank]
        inv = spec.inv(m[rank][c])
        m[rank] = [spec.mul(inv, x) for x in m[rank]]
        for i in range(len(m)):
            if i != rank and m[i][c]:
                f = m[i][c]
                m[i] = [x ^ spec.mul(f, y) for x, y in zip(m[i], m[rank])]
        rank += 1
    return rank


def test_random_vector_is_reproducible():
    a = random_coding_vector(3, GF256, np.random.default_rng(7))
    b = random_coding_vector(3, GF256, np.random.default_rng(7))
    assert a == b and len(a) == 3


def test_zero_coefficient_rate_gf2():
    rng = np.random.default_rng(1)
    n = 100_000
    zeros = sum(random_coding_vector(1, GF2, rng)[0] == 0 for _ in range(n))
    assert abs(zeros / n - 0.5) <= 3 * np.sqrt(0.25 / n)


def test_byte_frequencies_gf256():
    rng = np.random.default_rng(2)
    n = 100_000
    draws = np.array([random_coding_vector(1, GF256, rng)[0] for _ in range(n)])
    freq = np.bincount(draws, minlength=256) / n
    sigma = np.sqrt((1 / 256) * (255 / 256) / n)
    # 256 simultaneous tests; allow the 3-sigma band with a few outliers by chance
    assert np.sum(np.abs(freq - 1 / 256) > 3 * sigma) <= 3
    assert np.all(np.abs(freq - 1 / 256) <= 4.5 * sigma)


def test_encode_examples(rng):
    ps = packets(rng, 3, 40)
    assert encode(ps, (0, 1, 0), GF256).payload == ps[1].payload
    p1, p2 = Packet(b"\x0f\xaa", 0), Packet(b"\xf1\x0f", 1)
    assert encode([p1, p2], (1, 1), GF2).payload == bytes(a ^ b for a, b in zip(p1.payload, p2.payload))
    assert encode([Packet(b"\x80"), Packet(b"\x01")], (0x02, 0x01), GF256).payload == b"\x1a"


def test_encode_errors(rng):
    with pytest.raises(LengthMismatch):
        encode([Packet(b"ab"), Packet(b"abc")], (1, 1), GF256)
    with pytest.raises(VectorMismatch):
        encode(packets(rng, 2, 4), (1, 2, 3), GF256)
    with pytest.raises(LengthMismatch):
        Packet(b"")


@pytest.mark.parametrize("s", [1, 4, 8, 16])
def test_encode_is_symbolwise_combination(s, rng):
    spec = FieldSpec(s)
    ps = packets(rng, 4, 32)
    vec = random_coding_vector(4, spec, rng)
    out = symbols_from_bytes(encode(ps, vec, spec).payload, spec)
    syms = [symbols_from_bytes(p.payload, spec) for p in ps]
    for m in range(len(out)):
        acc = 0
        for a, sy in zip(vec, syms):
            acc ^= spec.mul(a, int(sy[m]))
        assert int(out[m]) == acc


@pytest.mark.parametrize("s", [1, 4, 8, 16])
def test_linearity(s, rng):
    spec = FieldSpec(s)
    ps = packets(rng, 5, 64)
    a = random_coding_vector(5, spec, rng)
    b = random_coding_vector(5, spec, rng)
    ab = tuple(x ^ y for x, y in zip(a, b))
    ea, eb, eab = (encode(ps, v, spec).payload for v in (a, b, ab))
    assert eab == bytes(x ^ y for x, y in zip(ea, eb))


def test_absorb_examples(rng):
    ps = packets(rng, 2, 8)
    st_ = DecoderState(2, GF2)
    cp = encode(ps, (1, 0), GF2)
    assert st_.absorb(cp) is AbsorbOutcome.INNOVATIVE and st_.rank == 1
    assert st_.absorb(cp) is AbsorbOutcome.REDUNDANT and st_.rank == 1
    assert st_.absorb(encode(ps, (1, 1), GF2)) is AbsorbOutcome.COMPLETE
    assert [p.payload for p in st_.extract()] == [p.payload for p in ps]


def test_zero_vector_is_redundant(rng):
    st_ = DecoderState(3, GF256)
    assert st_.absorb(encode(packets(rng, 3, 8), (0, 0, 0), GF256)) is AbsorbOutcome.REDUNDANT
    assert st_.rank == 0


def test_absorb_errors(rng):
    st_ = DecoderState(2, GF256)
    st_.absorb(encode(packets(rng, 2, 8, gen=1), (1, 2), GF256))
    with pytest.raises(GenerationMismatch):
        st_.absorb(encode(packets(rng, 2, 8, gen=2), (1, 2), GF256))
    with pytest.raises(LengthMismatch):
        st_.absorb(encode(packets(rng, 2, 9, gen=1), (1, 2), GF256))


def test_extract_examples(rng):
    p = [Packet(b"hello")]
    st_ = DecoderState(1, GF256)
    st_.absorb(encode(p, (1,), GF256))
    assert st_.extract()[0].payload == b"hello"

    ps = packets(rng, 10, 4096)
    A = GF256.random_symbols(rng, (10, 10))
    while brute_rank(A.tolist(), GF256) < 10:
        A = GF256.random_symbols(rng, (10, 10))
    st_ = DecoderState(10, GF256)
    for row in A.tolist():
        st_.absorb(encode(ps, tuple(row), GF256))
    assert [q.payload for q in st_.extract()] == [q.payload for q in ps]

    a1 = random_coding_vector(2, GF256, rng)
    while 0 in a1:
        a1 = random_coding_vector(2, GF256, rng)
    a2 = tuple(GF256.mul(0x53, x) for x in a1)
    st_ = DecoderState(2, GF256)
    ps = packets(rng, 2, 16)
    st_.absorb(encode(ps, a1, GF256))
    assert st_.absorb(encode(ps, a2, GF256)) is AbsorbOutcome.REDUNDANT
    with pytest.raises(RankDeficient):
        st_.extract()


def test_rref_invariant_holds_after_every_absorb(rng):
    spec = GF16
    k = 6
    ps = packets(rng, k, 20)
    st_ = DecoderState(k, spec)
    for _ in range(12):
        st_.absorb(encode(ps, random_coding_vector(k, spec, rng), spec))
        rows = st_.rows
        for col, i in st_.pivot_map.items():
            assert rows[i, col] == 1
            assert np.count_nonzero(rows[:, col]) == 1
            assert not rows[i, :col].any()
    if st_.complete:
        order = [st_.pivot_map[c] for c in range(k)]
        assert np.array_equal(st_.rows[order], np.eye(k, dtype=spec.dtype))


@settings(max_examples=40, deadline=None)
@given(k=st.integers(1, 64), s=st.sampled_from([1, 4, 8]), n=st.integers(1, 4096),
       seed=st.integers(0, 2**32 - 1))
def test_round_trip_property(k, s, n, seed):
    rng = np.random.default_rng(seed)
    spec = FieldSpec(s)
    ps = packets(rng, k, n, gen=seed % 1000)
    st_ = DecoderState(k, spec)
    draws = 0
    prev = 0
    while not st_.complete:
        st_.absorb(encode(ps, random_coding_vector(k, spec, rng), spec))
        draws += 1
        assert prev <= st_.rank <= min(draws, k)
        assert st_.rank - prev in (0, 1)
        prev = st_.rank
    assert [q.payload for q in st_.extract()] == [q.payload for q in ps]


def test_odd_payload_gf65536_round_trip(rng):
    spec = FieldSpec(16)
    ps = packets(rng, 3, 7)
    cps = [encode(ps, random_coding_vector(3, spec, rng), spec) for _ in range(6)]
    assert all(len(c.payload) == 8 and c.original_len == 7 for c in cps)
    st_ = DecoderState(3, spec)
    for c in cps:
        st_.absorb(deserialize_coded(serialize_coded(c)))
        if st_.complete:
            break
    assert [q.payload for q in st_.extract()] == [q.payload for q in ps]


def test_dependent_vectors_leave_rank_deficient(rng):
    k = 4
    ps = packets(rng, k, 32)
    base = [random_coding_vector(k, GF256, rng) for _ in range(2)]
    st_ = DecoderState(k, GF256)
    for c1, c2 in [(1, 0), (0, 1), (3, 7), (9, 200)]:
        v = tuple(GF256.mul(c1, x) ^ GF256.mul(c2, y) for x, y in zip(*base))
        st_.absorb(encode(ps, v, GF256))
    assert st_.rank <= 2
    with pytest.raises(RankDeficient):
        st_.extract()


@pytest.mark.parametrize("s", [1, 2, 4, 8, 16])
def test_rank_batch_agrees_with_brute_force(s, rng):
    spec = FieldSpec(s)
    mats = spec.random_symbols(rng, (150, 4, 5))
    # bias toward low rank so every rank value occurs
    mats[::3, 3] = mats[::3, 0]
    mats[::5, 2] = 0
    got = rank_batch(mats, spec)
    want = [brute_rank(m.tolist(), spec) for m in mats]
    assert got.tolist() == want
    for m, r in zip(mats[:30], want[:30]):
        st_ = DecoderState(5, spec)
        for row in m:
            st_.absorb_vector(row)
        assert st_.rank == r


# wire format

def sample_coded(rng, s=8, k=5, n=33):
    spec = FieldSpec(s)
    if s == 16 and n % 2:
        n += 1
    ps = packets(rng, k, n, gen=77)
    return encode(ps, random_coding_vector(k, spec, rng), spec)


@pytest.mark.parametrize("s", [1, 2, 4, 8, 16])
def test_frame_round_trip(s, rng):
    cp = sample_coded(rng, s=s, k=7)
    assert deserialize_coded(serialize_coded(cp)) == cp


def test_frame_layout():
    cp = CodedPacket((0xA, 0x3, 0xF), b"\x01\x02", 9, GF16, 2)
    frame = serialize_coded(cp)
    header = b"FNC1" + struct.pack("<IBHII", 9, 4, 3, 2, 2)
    assert frame == header + bytes([0xA3, 0xF0]) + b"\x01\x02"


def test_frame_errors(rng):
    frame = serialize_coded(sample_coded(rng))
    with pytest.raises(MalformedFrame) as e:
        deserialize_coded(frame[:-1])
    assert e.value.offset == len(frame) - 1
    with pytest.raises(MalformedFrame) as e:
        deserialize_coded(frame[:10])
    bad = bytearray(frame)
    bad[8] = 3
    with pytest.raises(MalformedFrame) as e:
        deserialize_coded(bytes(bad))
    assert e.value.offset == 8
    bad = bytearray(frame)
    bad[0:4] = b"XXXX"
    with pytest.raises(MalformedFrame) as e:
        deserialize_coded(bytes(bad))
    assert e.value.offset == 0
    with pytest.raises(MalformedFrame):
        deserialize_coded(frame + b"\x00")


def test_frame_rejects_nonzero_padding_bits():
    cp = CodedPacket((1,), b"\x01", 0, GF2, 1)
    frame = bytearray(serialize_coded(cp))
    frame[19] |= 0x01
    with pytest.raises(MalformedFrame):
        deserialize_coded(bytes(frame))


@settings(max_examples=50, deadline=None)
@given(st.binary(max_size=64))
def test_deserialize_never_crashes_on_garbage(data):
    try:
        deserialize_coded(data)
    except MalformedFrame:
        pass
