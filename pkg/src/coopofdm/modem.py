"""Bit <-> constellation symbol mapping.

Three uncoded, Gray-mapped schemes with unit average power:

    bpsk   1 bit/sym    [0] -> -1, [1] -> +1
    qpsk   2 bit/sym    [b0 b1] -> ((1-2*b0) + 1j*(1-2*b1)) / sqrt(2)
    qam16  4 bit/sym    [b0 b1] -> I level, [b2 b3] -> Q level,
                        Gray levels {00,01,11,10} -> {-3,-1,+1,+3} / sqrt(10)

Hard demapping is nearest-constellation-point; for these square grids that
reduces to per-axis threshold slicing, done vectorized.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Modulation:
    name: str
    bits_per_symbol: int
    points: np.ndarray      # constellation, indexed by Gray-packed bits (b0 = MSB)

    def __repr__(self) -> str:  # keep dataclass noise out of logs
        return f"Modulation({self.name})"


_GRAY2 = {(0, 0): -3, (0, 1): -1, (1, 1): 1, (1, 0): 3}


def _qam16_points() -> np.ndarray:
    pts = np.empty(16, dtype=complex)
    for idx in range(16):
        b = [(idx >> s) & 1 for s in (3, 2, 1, 0)]
        i_lvl = _GRAY2[(b[0], b[1])]
        q_lvl = _GRAY2[(b[2], b[3])]
        pts[idx] = (i_lvl + 1j * q_lvl) / np.sqrt(10.0)
    return pts


BPSK = Modulation("bpsk", 1, np.array([-1.0 + 0j, 1.0 + 0j]))
QPSK = Modulation("qpsk", 2, np.array(
    [((1 - 2 * b0) + 1j * (1 - 2 * b1)) / np.sqrt(2.0)
     for b0 in (0, 1) for b1 in (0, 1)]))
QAM16 = Modulation("qam16", 4, _qam16_points())

MODULATIONS = {m.name: m for m in (BPSK, QPSK, QAM16)}
# header field stores bits/symbol; invert that here
MOD_BY_BITS = {m.bits_per_symbol: m for m in (BPSK, QPSK, QAM16)}


def map_bits_to_symbols(bits: np.ndarray, mod: Modulation) -> np.ndarray:
    """Map a bit array (values 0/1) to constellation symbols.

    A length that is not a multiple of bits_per_symbol is zero-padded to
    one, with a warning; framing always supplies whole symbols, so padding
    only fires on hand-built input.
    """
    bits = np.asarray(bits, dtype=np.int64)
    b = mod.bits_per_symbol
    if bits.size % b:
        short = -bits.size % b
        warnings.warn(f"bit count {bits.size} padded with {short} zeros to a "
                      f"multiple of {b}", RuntimeWarning, stacklevel=2)
        bits = np.concatenate([bits, np.zeros(short, dtype=np.int64)])
    groups = bits.reshape(-1, b)
    weights = 1 << np.arange(b - 1, -1, -1)
    idx = groups @ weights
    return mod.points[idx]


def demap_symbols(symbols: np.ndarray, mod: Modulation) -> np.ndarray:
    """Hard-decide symbols back to bits (nearest constellation point)."""
    s = np.asarray(symbols)
    if mod.name == "bpsk":
        return (s.real > 0).astype(np.int64).ravel()
    if mod.name == "qpsk":
        b0 = (s.real < 0).astype(np.int64)
        b1 = (s.imag < 0).astype(np.int64)
        return np.stack([b0, b1], axis=-1).reshape(-1)
    if mod.name == "qam16":
        step = 2.0 / np.sqrt(10.0)
        # level index 0..3 over {-3,-1,1,3}/sqrt(10); Gray decode per axis
        gray_bits = np.array([(0, 0), (0, 1), (1, 1), (1, 0)], dtype=np.int64)
        i_idx = np.clip(np.floor(s.real / step + 2).astype(np.int64), 0, 3)
        q_idx = np.clip(np.floor(s.imag / step + 2).astype(np.int64), 0, 3)
        out = np.empty(s.size * 4, dtype=np.int64)
        out[0::4] = gray_bits[i_idx.ravel(), 0]
        out[1::4] = gray_bits[i_idx.ravel(), 1]
        out[2::4] = gray_bits[q_idx.ravel(), 0]
        out[3::4] = gray_bits[q_idx.ravel(), 1]
        return out
    raise ValueError(f"unknown modulation {mod.name!r}")


def bytes_to_bits(data: bytes) -> np.ndarray:
    """MSB-first bit unpacking."""
    return np.unpackbits(np.frombuffer(data, dtype=np.uint8)).astype(np.int64)


def bits_to_bytes(bits: np.ndarray) -> bytes:
    if bits.size % 8:
        raise ValueError("bit count not a multiple of 8")
    return np.packbits(np.asarray(bits, dtype=np.uint8)).tobytes()
