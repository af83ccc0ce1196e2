"""Systematic (n, k) MDS erasure code over GF(2^8).

The parity rows come from a Vandermonde generator ``V @ inv(V[:k])``,
then are rescaled so the first parity row and the first parity column
are all ones.  Scaling rows and columns by nonzero constants keeps every
k x k minor nonsingular, so the code stays MDS, and the (k+1, k) code is
plain XOR parity.
"""
from __future__ import annotations

import hashlib
import json
import os
from dataclasses import dataclass
from itertools import combinations
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "PRIM_POLY",
    "CodedObject",
    "DecodeError",
    "encode",
    "decode",
    "generator_matrix",
    "write_blocks",
    "read_blocks",
]

PRIM_POLY = 0x11D  # x^8 + x^4 + x^3 + x^2 + 1, generator 2

EXP_TABLE = np.zeros(512, dtype=np.uint8)
LOG_TABLE = np.zeros(256, dtype=np.int64)
_x = 1
for _i in range(255):
    EXP_TABLE[_i] = _x
    LOG_TABLE[_x] = _i
    _x <<= 1
    if _x & 0x100:
        _x ^= PRIM_POLY
EXP_TABLE[255:510] = EXP_TABLE[:255]
del _x, _i


class DecodeError(ValueError):
    pass


def gf_mul(a: int, b: int) -> int:
    if a == 0 or b == 0:
        return 0
    return int(EXP_TABLE[LOG_TABLE[a] + LOG_TABLE[b]])


def gf_inv(a: int) -> int:
    if a == 0:
        raise ZeroDivisionError("zero has no inverse in GF(256)")
    return int(EXP_TABLE[255 - LOG_TABLE[a]])


def _scale(vec: np.ndarray, c: int) -> np.ndarray:
    # multiply a byte vector by a field constant
    if c == 0:
        return np.zeros_like(vec)
    out = EXP_TABLE[LOG_TABLE[vec] + LOG_TABLE[c]]
    out[vec == 0] = 0
    return out


def _mat_inv(a: list) -> list:
    k = len(a)
    m = [row[:] + [1 if i == j else 0 for j in range(k)] for i, row in enumerate(a)]
    for col in range(k):
        piv = next((r for r in range(col, k) if m[r][col]), None)
        if piv is None:
            raise DecodeError("singular decoding matrix")
        m[col], m[piv] = m[piv], m[col]
        inv = gf_inv(m[col][col])
        m[col] = [gf_mul(v, inv) for v in m[col]]
        for r in range(k):
            if r != col and m[r][col]:
                f = m[r][col]
                m[r] = [v ^ gf_mul(f, w) for v, w in zip(m[r], m[col])]
    return [row[k:] for row in m]


def _mat_mul(a: list, b: list) -> list:
    out = []
    for row in a:
        acc = [0] * len(b[0])
        for c, brow in zip(row, b):
            if c:
                acc = [x ^ gf_mul(c, y) for x, y in zip(acc, brow)]
        out.append(acc)
    return out


def generator_matrix(n: int, k: int) -> list:
    """n x k generator whose first k rows are the identity."""
    if not 1 <= k <= n <= 255:
        raise ValueError(f"need 1 <= k <= n <= 255, got n={n}, k={k}")
    points = [int(EXP_TABLE[i]) for i in range(n)]
    vander = [[int(EXP_TABLE[(LOG_TABLE[x] * j) % 255]) for j in range(k)] for x in points]
    g = _mat_mul(vander, _mat_inv(vander[:k]))
    parity = g[k:]
    if parity:
        col_scale = [gf_inv(v) for v in parity[0]]
        parity = [[gf_mul(v, s) for v, s in zip(row, col_scale)] for row in parity]
        parity = [[gf_mul(v, gf_inv(row[0])) for v in row] for row in parity]
    return g[:k] + parity


@dataclass(frozen=True)
class CodedObject:
    n: int
    k: int
    block_size: int
    padding: int
    blocks: tuple

    @property
    def stored_bytes(self) -> int:
        return self.n * self.block_size

    def manifest(self, **extra) -> dict:
        out = {
            "n": self.n,
            "k": self.k,
            "block_size": self.block_size,
            "padding": self.padding,
            "field_poly": PRIM_POLY,
        }
        out.update(extra)
        return out


def encode(content: bytes, n: int, k: int) -> CodedObject:
    if not content:
        raise ValueError("cannot encode empty content")
    if n > 255:
        raise ValueError("n must be at most 255 for GF(256)")
    gen = generator_matrix(n, k)
    size = -(-len(content) // k)
    padding = size * k - len(content)
    data = np.frombuffer(content + b"\0" * padding, dtype=np.uint8).reshape(k, size)
    blocks = []
    for row in gen:
        acc = np.zeros(size, dtype=np.uint8)
        for c, chunk in zip(row, data):
            if c:
                acc ^= _scale(chunk, c)
        blocks.append((len(blocks), acc.tobytes()))
    return CodedObject(n=n, k=k, block_size=size, padding=padding, blocks=tuple(blocks))


def decode(subset: Iterable[tuple], n: int, k: int, padding: int = 0) -> bytes:
    """Rebuild the content from at least k distinct (index, block) pairs."""
    chosen = {}
    for idx, blk in subset:
        if not isinstance(idx, int) or not 0 <= idx < n:
            raise DecodeError(f"block index {idx!r} outside 0..{n - 1}")
        if idx in chosen and chosen[idx] != blk:
            raise DecodeError(f"conflicting copies of block {idx}")
        chosen[idx] = blk
    if len(chosen) < k:
        raise DecodeError(f"insufficient blocks: have {len(chosen)}, need {k}")
    idxs = sorted(chosen)[:k]
    sizes = {len(chosen[i]) for i in idxs}
    if len(sizes) != 1:
        raise DecodeError("blocks have inconsistent lengths")
    gen = generator_matrix(n, k)
    inv = _mat_inv([gen[i] for i in idxs])
    rows = [np.frombuffer(chosen[i], dtype=np.uint8) for i in idxs]
    out = []
    for coeffs in inv:
        acc = np.zeros(len(rows[0]), dtype=np.uint8)
        for c, r in zip(coeffs, rows):
            if c:
                acc ^= _scale(r, c)
        out.append(acc.tobytes())
    data = b"".join(out)
    if padding < 0 or padding > len(data):
        raise DecodeError("invalid padding length")
    return data[: len(data) - padding]


def all_subsets_roundtrip(content: bytes, n: int, k: int) -> int:
    """Decode from every k-subset; returns the number of failures."""
    obj = encode(content, n, k)
    failures = 0
    for subset in combinations(obj.blocks, k):
        if decode(subset, n, k, obj.padding) != content:
            failures += 1
    return failures


def write_blocks(obj: CodedObject, out_dir: str, stem: str, content: bytes = None) -> str:
    os.makedirs(out_dir, exist_ok=True)
    for idx, blk in obj.blocks:
        with open(os.path.join(out_dir, f"{stem}.{idx}.blk"), "wb") as fh:
            fh.write(blk)
    extra = {"stem": stem}
    if content is not None:
        extra["sha256"] = hashlib.sha256(content).hexdigest()
    path = os.path.join(out_dir, f"{stem}.manifest.json")
    with open(path, "w") as fh:
        json.dump(obj.manifest(**extra), fh, indent=2, sort_keys=True)
    return path


def read_blocks(manifest_path: str, indices: Sequence[int] = None) -> bytes:
    """Decode from whichever block files sit next to the manifest."""
    with open(manifest_path) as fh:
        man = json.load(fh)
    if man.get("field_poly", PRIM_POLY) != PRIM_POLY:
        raise DecodeError(f"unsupported field polynomial {man['field_poly']:#x}")
    base = os.path.dirname(manifest_path)
    stem = man["stem"]
    n, k = man["n"], man["k"]
    wanted = range(n) if indices is None else indices
    subset = []
    for idx in wanted:
        path = os.path.join(base, f"{stem}.{idx}.blk")
        if os.path.exists(path):
            with open(path, "rb") as fh:
                blk = fh.read()
            if len(blk) != man["block_size"]:
                raise DecodeError(f"block {idx} has length {len(blk)}, expected {man['block_size']}")
            subset.append((idx, blk))
    content = decode(subset, n, k, man["padding"])
    if "sha256" in man and hashlib.sha256(content).hexdigest() != man["sha256"]:
        raise DecodeError("decoded content does not match the manifest checksum")
    return content
