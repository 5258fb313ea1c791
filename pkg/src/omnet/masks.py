"""Frozen Bernoulli mask sets that carve overlapping subnetworks out of one
dense parameter vector.

A MaskSet holds N binary masks over the flat vector, stored as packed bits
(the canonical, serializable form). Linear-layer weights and biases are
maskable; normalization gains/biases are exempt and stay active in every
mask. Subnetwork i is the parameter view theta * mask_i; execution is dense
(the masked vector is materialized and run through the ordinary kernels).

Public indices are 1-based: subnetworks are numbered 1..N.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .nn import MlpParams, ParamSlot, backward, forward

MASKABLE_KINDS = frozenset({"weight", "bias"})

_HEADER = struct.Struct("<4sIQIdQQ")
_MAGIC = b"OMSK"
_VERSION = 1


def coverage_vector(layout: tuple[ParamSlot, ...]) -> np.ndarray:
    """Boolean vector marking which parameter indices masks may zero."""
    n = sum(s.length for s in layout)
    cov = np.zeros(n, dtype=bool)
    for s in layout:
        if s.kind in MASKABLE_KINDS:
            cov[s.offset:s.offset + s.length] = True
    return cov


class MaskSet:
    """N immutable binary masks over an n-dimensional parameter vector."""

    def __init__(self, packed: np.ndarray, n: int, count: int,
                 sparsity: float, seed: int, coverage: np.ndarray):
        if packed.shape != (count, (n + 7) // 8):
            raise ValueError("packed mask array has wrong shape")
        self.packed = packed
        self.packed.setflags(write=False)
        self.n = n
        self.count = count
        self.sparsity = sparsity
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF   # stored unsigned 64-bit
        self.coverage = coverage
        self.coverage.setflags(write=False)
        self._dense: dict[int, np.ndarray] = {}
        self._indices: dict[int, np.ndarray] = {}

    def mask(self, i: int) -> np.ndarray:
        """Mask of subnetwork i (1-based) as a float64 0/1 vector."""
        if not 1 <= i <= self.count:
            raise IndexError(f"subnet index {i} outside 1..{self.count}")
        if i not in self._dense:
            bits = np.unpackbits(self.packed[i - 1], count=self.n)
            dense = bits.astype(np.float64)
            dense.setflags(write=False)
            self._dense[i] = dense
        return self._dense[i]

    def indices(self, i: int) -> np.ndarray:
        """Active parameter indices of subnetwork i (for masked updates)."""
        if i not in self._indices:
            idx = np.flatnonzero(self.mask(i))
            idx.setflags(write=False)
            self._indices[i] = idx
        return self._indices[i]

    def popcount(self, i: int) -> int:
        return int(self.indices(i).size)

    def maskable_density(self, i: int) -> float:
        m = self.mask(i)[self.coverage]
        return float(m.mean()) if m.size else 1.0

    def to_bytes(self) -> bytes:
        header = _HEADER.pack(_MAGIC, _VERSION, self.n, self.count,
                              self.sparsity, self.seed, self.coverage.size)
        cov = np.packbits(self.coverage.astype(np.uint8)).tobytes()
        return header + cov + self.packed.tobytes()

    @classmethod
    def from_bytes(cls, data: bytes) -> "MaskSet":
        magic, version, n, count, sparsity, seed, cov_len = _HEADER.unpack_from(data)
        if magic != _MAGIC or version != _VERSION:
            raise ValueError("not a mask-set blob")
        off = _HEADER.size
        cov_bytes = (cov_len + 7) // 8
        cov = np.unpackbits(
            np.frombuffer(data, dtype=np.uint8, count=cov_bytes, offset=off),
            count=cov_len).astype(bool)
        off += cov_bytes
        row = (n + 7) // 8
        packed = np.frombuffer(
            data, dtype=np.uint8, count=count * row, offset=off
        ).reshape(count, row).copy()
        return cls(packed, n, count, sparsity, seed, cov)


def sample_masks(layout: tuple[ParamSlot, ...], count: int,
                 sparsity: float, seed: int) -> MaskSet:
    """Draw N frozen masks: maskable entries are 1 with probability 1-S."""
    if count < 1:
        raise ValueError("subnet count must be >= 1")
    if not 0.0 <= sparsity < 1.0:
        raise ValueError("sparsity must be in [0, 1)")
    cov = coverage_vector(layout)
    n = cov.size
    rng = np.random.default_rng(seed)
    rows = rng.random((count, n)) >= sparsity
    rows[:, ~cov] = True
    packed = np.packbits(rows.astype(np.uint8), axis=1)
    return MaskSet(packed, n, count, float(sparsity), seed, cov)


def infinity_mask(layout: tuple[ParamSlot, ...], sparsity: float,
                  rng: np.random.Generator) -> np.ndarray:
    """A fresh i.i.d. mask, never stored: the N -> infinity limit."""
    if not 0.0 <= sparsity < 1.0:
        raise ValueError("sparsity must be in [0, 1)")
    cov = coverage_vector(layout)
    m = (rng.random(cov.size) >= sparsity).astype(np.float64)
    m[~cov] = 1.0
    return m


def apply_mask(params: MlpParams, mask: np.ndarray) -> np.ndarray:
    """Element-wise product theta * mask; params are left untouched."""
    if mask.shape != params.theta.shape:
        raise ValueError("mask length does not match params")
    return params.theta * mask


def masked_params(params: MlpParams, mask: np.ndarray) -> MlpParams:
    return MlpParams(apply_mask(params, mask), params.layout, params.specs)


def masked_forward(params: MlpParams, mask: np.ndarray, x: np.ndarray):
    """Forward pass of the subnetwork: identical to running the dense kernel
    on the materialized masked vector."""
    return forward(masked_params(params, mask), x)


def masked_grad(params: MlpParams, mask: np.ndarray,
                trace, output_grad: np.ndarray) -> np.ndarray:
    """Gradient of the subnetwork's output w.r.t. theta: zero wherever the
    mask is zero, the dense gradient of theta*mask elsewhere."""
    return backward(masked_params(params, mask), trace, output_grad) * mask


@dataclass
class SubnetSelector:
    """Uniform subnetwork index draws from a private rng stream (1-based)."""

    rng: np.random.Generator
    count: int

    @classmethod
    def seeded(cls, seed, count: int) -> "SubnetSelector":
        return cls(np.random.default_rng(seed), count)


def draw_index(selector: SubnetSelector) -> int:
    return int(selector.rng.integers(1, selector.count + 1))


def draw_two_distinct(selector: SubnetSelector) -> tuple[int, int]:
    if selector.count < 2:
        raise ValueError("need at least 2 subnetworks to draw a distinct pair")
    i1 = int(selector.rng.integers(1, selector.count + 1))
    i2 = int(selector.rng.integers(1, selector.count))
    if i2 >= i1:
        i2 += 1
    return i1, i2
