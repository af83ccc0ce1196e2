import json
import os
from itertools import combinations

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from fjsim import codec
from fjsim.codec import DecodeError


def test_field_tables():
    assert codec.gf_mul(2, 128) == 0x1D
    assert codec.gf_mul(0, 77) == 0
    for a in range(1, 256):
        assert codec.gf_mul(a, codec.gf_inv(a)) == 1
    with pytest.raises(ZeroDivisionError):
        codec.gf_inv(0)


@settings(max_examples=200)
@given(st.integers(0, 255), st.integers(0, 255), st.integers(0, 255))
def test_field_axioms(a, b, c):
    assert codec.gf_mul(a, b) == codec.gf_mul(b, a)
    assert codec.gf_mul(a, codec.gf_mul(b, c)) == codec.gf_mul(codec.gf_mul(a, b), c)
    assert codec.gf_mul(a, b ^ c) == codec.gf_mul(a, b) ^ codec.gf_mul(a, c)


def test_xor_parity_for_three_two():
    assert codec.generator_matrix(3, 2) == [[1, 0], [0, 1], [1, 1]]
    obj = codec.encode(b"abcd", 3, 2)
    assert [b for _, b in obj.blocks] == [b"ab", b"cd", b"\x02\x06"]
    assert obj.padding == 0 and obj.stored_bytes == 6


def test_systematic_prefix():
    data = os.urandom(1000)
    obj = codec.encode(data, 9, 4)
    assert b"".join(b for _, b in obj.blocks[:4])[: len(data)] == data


def test_n_equals_k_is_plain_striping():
    obj = codec.encode(b"hello world", 3, 3)
    assert codec.generator_matrix(3, 3) == [[1, 0, 0], [0, 1, 0], [0, 0, 1]]
    assert codec.decode(obj.blocks, 3, 3, obj.padding) == b"hello world"
    with pytest.raises(DecodeError):
        codec.decode(obj.blocks[:2], 3, 3, obj.padding)


def test_replication_when_k_is_one():
    obj = codec.encode(b"xyz", 2, 1)
    assert obj.blocks[0][1] == obj.blocks[1][1] == b"xyz"
    assert codec.decode([obj.blocks[1]], 2, 1) == b"xyz"


@pytest.mark.parametrize("n", range(1, 7))
def test_every_subset_decodes(n):
    data = bytes(range(256)) * 3 + b"tail"
    for k in range(1, n + 1):
        assert codec.all_subsets_roundtrip(data, n, k) == 0


def test_larger_code_sampled_subsets():
    data = os.urandom(4097)
    obj = codec.encode(data, 14, 10)
    for subset in list(combinations(obj.blocks, 10))[::37]:
        assert codec.decode(subset, 14, 10, obj.padding) == data


@settings(max_examples=60, deadline=None)
@given(data=st.binary(min_size=1, max_size=300), n=st.integers(1, 8), pick=st.data())
def test_roundtrip_property(data, n, pick):
    k = pick.draw(st.integers(1, n))
    obj = codec.encode(data, n, k)
    chosen = pick.draw(st.permutations(list(obj.blocks)))[:k]
    assert codec.decode(chosen, n, k, obj.padding) == data
    assert obj.block_size == -(-len(data) // k)
    assert obj.stored_bytes == n * obj.block_size


def test_extra_blocks_and_duplicates_are_fine():
    obj = codec.encode(b"0123456789", 5, 3)
    subset = list(obj.blocks) + [obj.blocks[2]]
    assert codec.decode(subset, 5, 3, obj.padding) == b"0123456789"


def test_decode_errors():
    obj = codec.encode(b"0123456789", 5, 3)
    with pytest.raises(DecodeError, match="insufficient"):
        codec.decode(obj.blocks[:2], 5, 3, obj.padding)
    with pytest.raises(DecodeError, match="outside"):
        codec.decode([(7, b"abcd")] + list(obj.blocks[:3]), 5, 3)
    with pytest.raises(DecodeError, match="conflicting"):
        codec.decode([obj.blocks[0], (0, b"zzzz")] + list(obj.blocks[1:3]), 5, 3)
    with pytest.raises(DecodeError, match="inconsistent"):
        codec.decode([obj.blocks[0], obj.blocks[1], (2, b"x")], 5, 3)
    with pytest.raises(DecodeError, match="padding"):
        codec.decode(obj.blocks[:3], 5, 3, padding=100)


def test_encode_errors():
    with pytest.raises(ValueError):
        codec.encode(b"", 3, 2)
    with pytest.raises(ValueError):
        codec.encode(b"x", 2, 3)
    with pytest.raises(ValueError):
        codec.encode(b"x", 256, 2)


def test_storage_overhead():
    data = b"a" * 1000
    obj = codec.encode(data, 10, 5)
    assert obj.stored_bytes == 2000
    obj = codec.encode(data, 3, 3)
    assert obj.stored_bytes == 1002 and obj.padding == 2


def test_file_roundtrip(tmp_path):
    data = os.urandom(777)
    obj = codec.encode(data, 6, 4)
    man = codec.write_blocks(obj, tmp_path, "obj", data)
    meta = json.load(open(man))
    assert meta["n"] == 6 and meta["field_poly"] == 0x11D and meta["padding"] == obj.padding
    for idx in (0, 3):
        os.remove(tmp_path / f"obj.{idx}.blk")
    assert codec.read_blocks(man) == data
    os.remove(tmp_path / "obj.5.blk")
    with pytest.raises(DecodeError):
        codec.read_blocks(man)


def test_file_checksum_detects_corruption(tmp_path):
    data = b"important" * 20
    obj = codec.encode(data, 4, 2)
    man = codec.write_blocks(obj, tmp_path, "o", data)
    with open(tmp_path / "o.0.blk", "r+b") as fh:
        fh.write(b"X")
    with pytest.raises(DecodeError, match="checksum"):
        codec.read_blocks(man, indices=[0, 1])
    assert codec.read_blocks(man, indices=[1, 2]) == data
