"""Distributed Alamouti space-time block coding over symbol pairs.

Two cooperating transmitters share one code: for each symbol pair (s1, s2),
over two consecutive OFDM symbols and per subcarrier,

    role A sends  s1,  -conj(s2)
    role B sends  s2,   conj(s1)

With per-transmitter channels h_a, h_b constant over the pair, the receiver
observes y1 = h_a*s1 + h_b*s2 + n1 and y2 = -h_a*conj(s2) + h_b*conj(s1) + n2
and combines

    s1_hat = (conj(h_a)*y1 + h_b*conj(y2)) / g
    s2_hat = (conj(h_b)*y1 - h_a*conj(y2)) / g,     g = |h_a|^2 + |h_b|^2

which is exact in the noiseless case and achieves two-branch diversity.  When
one transmitter is silent its channel estimate sits at the noise level and the
same combiner degenerates to single-antenna equalization, so the receiver
never needs to know how many transmitters were active.
"""

from __future__ import annotations

from enum import Enum

import numpy as np


class Role(Enum):
    A = "a"
    B = "b"


class ZeroChannelError(ZeroDivisionError):
    """Combiner gain |h_a|^2 + |h_b|^2 is exactly zero."""


def encode_pair(s1: complex, s2: complex, role: Role) -> tuple[complex, complex]:
    """The two transmissions of one role for symbol pair (s1, s2)."""
    if role is Role.A:
        return s1, -np.conj(s2)
    return s2, np.conj(s1)


def encode_stream(symbols: np.ndarray, role: Role) -> np.ndarray:
    """Alamouti-encode (n_symbols, n_sc) data; n_symbols must be even.

    Row 2t carries pair t's first transmission, row 2t+1 the second.
    """
    symbols = np.atleast_2d(symbols)
    n = symbols.shape[0]
    if n % 2:
        raise ValueError("Alamouti encoding needs an even symbol count")
    s1 = symbols[0::2]
    s2 = symbols[1::2]
    out = np.empty_like(symbols)
    if role is Role.A:
        out[0::2] = s1
        out[1::2] = -np.conj(s2)
    else:
        out[0::2] = s2
        out[1::2] = np.conj(s1)
    return out


def combine_pair(y1, y2, h_a, h_b):
    """Combine one received pair back into (s1_hat, s2_hat).

    Accepts scalars or per-subcarrier arrays.  Raises ZeroChannelError when
    the combiner gain vanishes everywhere it is needed.
    """
    y1 = np.asarray(y1, dtype=complex)
    y2 = np.asarray(y2, dtype=complex)
    h_a = np.asarray(h_a, dtype=complex)
    h_b = np.asarray(h_b, dtype=complex)
    g = np.abs(h_a) ** 2 + np.abs(h_b) ** 2
    if np.any(g == 0):
        raise ZeroChannelError("combiner gain is zero")
    s1 = (np.conj(h_a) * y1 + h_b * np.conj(y2)) / g
    s2 = (np.conj(h_b) * y1 - h_a * np.conj(y2)) / g
    return s1, s2


def combine_stream(received: np.ndarray, h_a: np.ndarray, h_b: np.ndarray) -> np.ndarray:
    """Combine (n_symbols, n_sc) received symbols, pairwise in time.

    h_a, h_b are per-subcarrier vectors held constant over the stream.
    """
    received = np.atleast_2d(received)
    if received.shape[0] % 2:
        raise ValueError("received symbol count must be even")
    y1 = received[0::2]
    y2 = received[1::2]
    g = np.abs(h_a) ** 2 + np.abs(h_b) ** 2
    if np.any(g == 0):
        raise ZeroChannelError("combiner gain is zero")
    s1 = (np.conj(h_a) * y1 + h_b * np.conj(y2)) / g
    s2 = (np.conj(h_b) * y1 - h_a * np.conj(y2)) / g
    out = np.empty_like(received)
    out[0::2] = s1
    out[1::2] = s2
    return out
