import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from sigtree.errors import DimensionMismatch, MalformedSignature
from sigtree.signature import (
    Signature,
    covers,
    encode,
    signature_nbytes,
    union,
    union_weights,
    weight_vector,
    zero,
)


def positions(sig):
    out = []
    for b in sig.blocks():
        out.append(b.bit_length() if b else 0)
    return out


def test_encode_full_bin_sets_last_bit():
    h = np.zeros(16)
    h[0] = 1.0
    s = encode(h, 10)
    assert s.block(0) == 1 << 9
    assert all(b == 0 for b in s.blocks()[1:])
    assert str(s).split()[0] == "0000000001"


@pytest.mark.parametrize("value, bit", [(0.37, 4), (0.001, 1), (0.3, 3), (0.7, 7), (1.0, 10)])
def test_encode_ceiling(value, bit):
    s = encode([value, 1 - value], 10)
    assert positions(s)[0] == bit


def test_encode_zero_bins_are_empty():
    s = encode([0.0, 1.0, 0.0], 8)
    assert s.block(0) == 0 and s.block(2) == 0


def test_weight_vector_examples():
    assert weight_vector(Signature.from_positions([4], 10))[0] == 40.0
    assert np.array_equal(weight_vector(zero(16, 8)), np.zeros(16))
    assert np.array_equal(weight_vector(encode([0.5, 0.5], 10)), [50.0, 50.0])


def test_weight_vector_rejects_multi_bit_blocks():
    u = union(Signature.from_positions([2], 4), Signature.from_positions([3], 4))
    with pytest.raises(MalformedSignature):
        weight_vector(u)
    # unions still have a summed weight
    assert union_weights(u)[0] == pytest.approx((2 + 3) * 100 / 4)


def test_union_examples():
    s = Signature.from_positions([2, 0, 5], 8)
    assert union(s, s) == s
    assert union(s, zero(3, 8)) == s
    a = Signature.from_positions([2], 4)
    b = Signature.from_positions([3], 4)
    assert positions(union(a, b)) == [3] and union(a, b).block(0) == 0b0110


def test_covers_examples():
    s = Signature.from_positions([2, 0, 5], 8)
    assert covers(s, s)
    assert covers(s, zero(3, 8))
    assert not covers(Signature.from_positions([2], 4), Signature.from_positions([3], 4))


def test_dimension_mismatch():
    with pytest.raises(DimensionMismatch):
        union(zero(2, 8), zero(3, 8))
    with pytest.raises(DimensionMismatch):
        covers(zero(2, 8), zero(2, 4))


def test_bad_positions():
    with pytest.raises(MalformedSignature):
        Signature.from_positions([9], 8)
    with pytest.raises(MalformedSignature):
        Signature(1, 4, 1 << 4)


@pytest.mark.parametrize("n", [1, 3, 16, 100])
@pytest.mark.parametrize("m", [1, 5, 8, 13, 64])
def test_nbytes_formula(n, m):
    s = Signature(n, m, (1 << (n * m)) - 1)
    assert s.nbytes == signature_nbytes(n, m) == -(-n * m // 8)
    assert len(s.to_bytes()) == 4 + s.nbytes


def test_serialization_layout():
    s = Signature.from_positions([1, 0, 8], 8)
    raw = s.to_bytes()
    assert raw[:4] == bytes([3, 0, 8, 0])  # n=3, m=8, little-endian u16
    assert raw[4:] == bytes([0b00000001, 0, 0b10000000])
    assert Signature.from_bytes(raw) == s


def test_truncated_serialization():
    raw = Signature.from_positions([1, 2], 8).to_bytes()
    with pytest.raises(MalformedSignature):
        Signature.from_bytes(raw[:-1])


histograms = st.integers(1, 16).flatmap(
    lambda n: st.lists(st.floats(0, 1), min_size=n, max_size=n).filter(lambda v: sum(v) > 0)
).map(lambda v: np.array(v) / sum(v))
bits_per_block = st.integers(1, 64)


@settings(max_examples=300, deadline=None)
@given(histograms, bits_per_block)
def test_encode_is_one_hot_and_close(h, m):
    s = encode(h, m)
    assert s.is_one_hot()
    assert s.n == len(h) and s.bits.bit_length() <= s.n * m
    w = weight_vector(s)
    assert np.all(np.abs(w - 100 * h) <= 100 / m + 1e-9)
    assert np.all((w == 0) == (h == 0))


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 16).flatmap(lambda m: st.tuples(st.just(m), st.lists(st.integers(0, m), min_size=1, max_size=16))))
def test_grid_histograms_round_trip_exactly(arg):
    m, units = arg
    if sum(units) == 0:
        return
    # h_j = k/m exactly representable by the encoding
    h = np.array(units) / m
    assert np.allclose(weight_vector(encode(h, m)), 100 * h, rtol=0, atol=1e-9)


@settings(max_examples=300, deadline=None)
@given(st.data())
def test_union_covers_both_operands(data):
    m = data.draw(st.integers(1, 8))
    sig = st.lists(st.integers(0, 2 ** (4 * m) - 1), min_size=2, max_size=2)
    a_bits, b_bits = data.draw(sig)
    a, b = Signature(4, m, a_bits), Signature(4, m, b_bits)
    u = union(a, b)
    assert covers(u, a) and covers(u, b)
    assert union(a, b) == union(b, a)
