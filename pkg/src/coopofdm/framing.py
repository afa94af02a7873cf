"""Frame construction: header/payload serialization and the on-air waveform.

Frame layout in time:

    [ STS 160 ] [ LTS 2x80 ] [ header 2x80 ] [ payload n x 80 ]

The short training sequence (STS) is 10 repetitions of the transmitter role's
16-sample period.  The two long training symbols (LTS) carry a known BPSK
pattern on all occupied bins: role A sends (+L, +L), role B sends (+L, -L),
so a receiver can separate the two channels from the sum and difference of
the two observations.  Header and payload symbols are Alamouti-encoded per
role (the 2-symbol header forms exactly one code pair).

Header, 24 bytes little-endian:

    u8 src_id | u8 dst_id | u8 pkt_type | u8 mod_bits |
    u16 payload_len | u16 seq_num | 14 zero bytes | u16 checksum

mod_bits is the payload constellation's bits/symbol (1, 2 or 4); the header
itself is always QPSK.  The checksum is CRC-CCITT (crc_hqx, init 0xFFFF) over
the first 22 bytes.  The payload gets a 4-byte IEEE CRC-32 appended
(little-endian) before mapping; trailing bits pad with zeros to a symbol
boundary and an odd payload symbol count gets one fixed filler symbol so that
Alamouti pairing always closes.
"""

from __future__ import annotations

import struct
import zlib
from binascii import crc_hqx
from dataclasses import dataclass

import numpy as np

from . import params as P
from .modem import (MOD_BY_BITS, QPSK, Modulation, bits_to_bytes,
                    bytes_to_bits, demap_symbols, map_bits_to_symbols)
from .ofdm import Baseband, ofdm_modulate, place_data
from .stbc import Role, encode_stream

_HEADER_FMT = "<BBBBHH14sH"
FILLER_SYMBOL = (1 + 1j) / np.sqrt(2.0)


class PayloadTooLargeError(ValueError):
    pass


@dataclass
class FrameHeader:
    src_id: int
    dst_id: int
    pkt_type: int
    mod: Modulation
    payload_len: int
    seq_num: int

    def to_bytes(self) -> bytes:
        body = struct.pack(_HEADER_FMT[:-1], self.src_id, self.dst_id,
                           self.pkt_type, self.mod.bits_per_symbol,
                           self.payload_len, self.seq_num, b"\x00" * 14)
        return body + struct.pack("<H", crc_hqx(body, 0xFFFF))

    @classmethod
    def from_bytes(cls, data: bytes) -> "FrameHeader | None":
        """Parse and validate; returns None on checksum or field failure."""
        if len(data) != P.HEADER_BYTES:
            return None
        body, (checksum,) = data[:-2], struct.unpack("<H", data[-2:])
        if crc_hqx(body, 0xFFFF) != checksum:
            return None
        src, dst, ptype, mod_bits, plen, seq, _pad = struct.unpack(_HEADER_FMT[:-1], body)
        if mod_bits not in MOD_BY_BITS or plen > P.MAX_PAYLOAD_BYTES:
            return None
        return cls(src, dst, ptype, MOD_BY_BITS[mod_bits], plen, seq)


@dataclass
class Frame:
    header: FrameHeader
    payload: bytes

    @classmethod
    def make(cls, payload: bytes, mod: Modulation, src_id: int = 1,
             dst_id: int = 2, pkt_type: int = 0, seq_num: int = 0) -> "Frame":
        if len(payload) > P.MAX_PAYLOAD_BYTES:
            raise PayloadTooLargeError(f"payload of {len(payload)} bytes unsupported")
        hdr = FrameHeader(src_id, dst_id, pkt_type, mod, len(payload), seq_num)
        return cls(hdr, payload)

    @property
    def n_payload_symbols(self) -> int:
        return payload_symbol_count(self.header.payload_len, self.header.mod)

    @property
    def n_samples(self) -> int:
        return P.frame_len(self.n_payload_symbols)


def payload_symbol_count(payload_len: int, mod: Modulation) -> int:
    """OFDM symbols occupied by payload + CRC-32, filler included."""
    bits = (payload_len + P.PAYLOAD_CRC_BYTES) * 8
    n = -(-bits // (mod.bits_per_symbol * P.N_DATA))
    return n + (n % 2)


def payload_on_air(payload: bytes) -> bytes:
    return payload + struct.pack("<I", zlib.crc32(payload))


def payload_data_rows(frame: Frame) -> np.ndarray:
    """Map payload (+CRC) to (n_payload_symbols, 48) constellation rows."""
    mod = frame.header.mod
    bits = bytes_to_bits(payload_on_air(frame.payload))
    n_sym = payload_symbol_count(frame.header.payload_len, mod)
    per_sym = mod.bits_per_symbol * P.N_DATA
    n_mapped = -(-bits.size // per_sym)
    padded = np.zeros(n_mapped * per_sym, dtype=np.int64)
    padded[:bits.size] = bits
    rows = map_bits_to_symbols(padded, mod).reshape(n_mapped, P.N_DATA)
    if n_mapped < n_sym:   # odd count: one filler symbol closes the pair
        filler = np.full((n_sym - n_mapped, P.N_DATA), FILLER_SYMBOL)
        rows = np.vstack([rows, filler])
    return rows


def payload_bits_from_rows(rows: np.ndarray, header: FrameHeader) -> np.ndarray:
    """Demap payload rows back to the on-air payload+CRC bits (pads dropped)."""
    mod = header.mod
    n_bits = (header.payload_len + P.PAYLOAD_CRC_BYTES) * 8
    per_sym = mod.bits_per_symbol * P.N_DATA
    n_mapped = -(-n_bits // per_sym)
    bits = demap_symbols(rows[:n_mapped].reshape(-1), mod)
    return bits[:n_bits]


def check_payload_crc(on_air: bytes) -> bool:
    body, tail = on_air[:-P.PAYLOAD_CRC_BYTES], on_air[-P.PAYLOAD_CRC_BYTES:]
    return struct.unpack("<I", tail)[0] == zlib.crc32(body)


def header_data_rows(frame: Frame) -> np.ndarray:
    bits = bytes_to_bits(frame.header.to_bytes())
    return map_bits_to_symbols(bits, QPSK).reshape(P.N_HEADER_SYMBOLS, P.N_DATA)


def lts_grid(role: Role) -> np.ndarray:
    """Two LTS symbols on all occupied bins: (+L, +L) for A, (+L, -L) for B."""
    grid = np.zeros((P.N_LTS_SYMBOLS, P.N_FFT), dtype=complex)
    grid[0, P.OCCUPIED_BINS] = P.LTS_VALUES
    grid[1, P.OCCUPIED_BINS] = P.LTS_VALUES if role is Role.A else -P.LTS_VALUES
    return grid


def encoded_symbol_grid(frame: Frame, role: Role) -> np.ndarray:
    """LTS + Alamouti-encoded header and payload grids for one role.

    Pilots are not Alamouti-encoded: both roles transmit the same pilot
    values on every symbol, so a superposed reception's pilots expose the
    common phase of the two frequency-aligned streams.
    """
    data_rows = np.vstack([header_data_rows(frame), payload_data_rows(frame)])
    encoded = encode_stream(data_rows, role)
    return np.vstack([lts_grid(role), place_data(encoded)])


def build_frame_waveform(frame: Frame, role: Role, normalize: bool = True) -> Baseband:
    """Full transmit waveform for one role: STS + modulated symbol grid.

    normalize scales the result to exactly unit RMS (the common transmit
    power convention); construction already puts every region within a
    fraction of a dB of that.
    """
    sts_period = P.STS_PERIOD_A if role is Role.A else P.STS_PERIOD_B
    sts = np.tile(sts_period, P.STS_REPS)
    body = ofdm_modulate(encoded_symbol_grid(frame, role))
    samples = np.concatenate([sts, body])
    if normalize:
        samples = samples / np.sqrt(np.mean(np.abs(samples) ** 2))
    return Baseband(samples)
