"""Square QAM with per-axis Gray labels.

Point ``k`` carries the label whose binary value is ``k`` (I bits first,
then Q bits), so ``index == label`` and bit errors between two decisions
are just ``popcount(a ^ b)``. On each axis label 0 sits on the most
positive level, which puts ``(1+1j)/sqrt(2)`` at index 0 for QPSK.
"""
from dataclasses import dataclass, field

import numpy as np

from .errors import IndexOutOfRange, LengthMismatch, UnsupportedOrder

SUPPORTED_ORDERS = (4, 16, 64)


def _gray(n):
    return n ^ (n >> 1)


@dataclass(frozen=True, eq=False)
class Constellation:
    order: int
    points: np.ndarray = field(repr=False)
    labels: np.ndarray = field(repr=False)  # (order, bits_per_symbol) uint8

    @property
    def bits_per_symbol(self):
        return self.labels.shape[1]

    def map_bits(self, bits):
        """Map a flat bit sequence to symbols, ``bits_per_symbol`` bits each."""
        b = _as_bits(bits)
        k = self.bits_per_symbol
        if b.size % k:
            raise LengthMismatch(f"{b.size} bits is not a multiple of {k}")
        weights = 1 << np.arange(k - 1, -1, -1)
        idx = b.reshape(-1, k) @ weights
        return self.points[idx]

    def slice(self, z):
        """Index of the nearest point; ties go to the lowest index."""
        z = complex(z)
        d = np.abs(self.points - z) ** 2
        return int(np.argmin(d))

    def slice_many(self, z):
        """Vectorized ``slice`` over an array of any shape."""
        z = np.asarray(z, dtype=np.complex128)
        d = np.abs(z[..., None] - self.points) ** 2
        return np.argmin(d, axis=-1)

    def demap(self, index):
        index = int(index)
        if not 0 <= index < self.order:
            raise IndexOutOfRange(f"index {index} outside 0..{self.order - 1}")
        return self.labels[index].copy()

    def index_bits(self, indices):
        """Concatenated labels for an array of indices, shape ``(..., n*k)``."""
        lab = self.labels[np.asarray(indices)]
        return lab.reshape(*lab.shape[:-2], -1)


def _as_bits(bits):
    if isinstance(bits, str):
        bits = [int(ch) for ch in bits]
    b = np.asarray(bits, dtype=np.int64).ravel()
    if b.size and (b.min() < 0 or b.max() > 1):
        raise ValueError("bits must be 0 or 1")
    return b


def make_qam(order):
    """Unit-energy square QAM of the given order (4, 16 or 64)."""
    if order not in SUPPORTED_ORDERS:
        raise UnsupportedOrder(f"qam_order must be one of {SUPPORTED_ORDERS}, got {order}")
    k = int(order).bit_length() - 1
    half = k // 2
    side = 1 << half
    # axis label g sits at position p with gray(p) == g, positions run from +max down
    levels = np.empty(side)
    for p in range(side):
        levels[_gray(p)] = (side - 1) - 2 * p
    idx = np.arange(order)
    i_lab = idx >> half
    q_lab = idx & (side - 1)
    raw = levels[i_lab] + 1j * levels[q_lab]
    scale = np.sqrt(2.0 * (side * side - 1) / 3.0)  # rms of the raw grid
    points = raw / scale
    labels = ((idx[:, None] >> np.arange(k - 1, -1, -1)) & 1).astype(np.uint8)
    points.setflags(write=False)
    labels.setflags(write=False)
    return Constellation(order=int(order), points=points, labels=labels)


_POPCOUNT = np.array([bin(i).count("1") for i in range(256)], dtype=np.int64)


def bit_errors(a, b):
    """Total differing label bits between two index arrays."""
    x = np.bitwise_xor(np.asarray(a, dtype=np.int64), np.asarray(b, dtype=np.int64))
    return int(_POPCOUNT[x & 0xFF].sum())
