"""Frame layout, header serialization, payload CRC, and waveform assembly."""

import numpy as np
import pytest

from coopofdm import params as P
from coopofdm.framing import (
    FILLER_SYMBOL, Frame, FrameHeader, PayloadTooLargeError,
    build_frame_waveform, check_payload_crc, encoded_symbol_grid,
    header_data_rows, lts_grid, payload_bits_from_rows, payload_data_rows,
    payload_on_air, payload_symbol_count,
)
from coopofdm.modem import BPSK, MODULATIONS, QAM16, QPSK, bytes_to_bits
from coopofdm.ofdm import ofdm_demodulate
from coopofdm.stbc import Role


def make_frame(n=1412, mod=QPSK, seed=0):
    rng = np.random.default_rng(seed)
    return Frame.make(rng.bytes(n), mod)


def test_on_air_payload_appends_crc32():
    on_air = payload_on_air(b"\x00" * 1412)
    assert len(on_air) == 1416
    assert check_payload_crc(on_air)
    corrupted = bytearray(on_air)
    corrupted[100] ^= 0x01
    assert not check_payload_crc(bytes(corrupted))


def test_payload_symbol_counts_for_reference_length():
    # 1416 on-air bytes = 11328 bits; 96/192/48 bits per OFDM symbol
    assert payload_symbol_count(1412, QPSK) == 118
    assert payload_symbol_count(1412, BPSK) == 236
    # 11328/192 = 59 data symbols, odd, so one filler symbol closes the pair
    assert payload_symbol_count(1412, QAM16) == 60


def test_qam16_filler_row_is_excluded_from_bits():
    frame = make_frame(mod=QAM16)
    rows = payload_data_rows(frame)
    assert rows.shape == (60, P.N_DATA)
    assert np.all(rows[59] == FILLER_SYMBOL)
    bits = payload_bits_from_rows(rows, frame.header)
    assert bits.size == 1416 * 8
    assert np.array_equal(bits, bytes_to_bits(payload_on_air(frame.payload)))


@pytest.mark.parametrize("mod", MODULATIONS.values(), ids=lambda m: m.name)
def test_payload_rows_round_trip(mod):
    frame = make_frame(400, mod, seed=2)
    bits = payload_bits_from_rows(payload_data_rows(frame), frame.header)
    assert np.array_equal(bits, bytes_to_bits(payload_on_air(frame.payload)))


def test_header_is_24_bytes_and_qpsk():
    frame = make_frame()
    raw = frame.header.to_bytes()
    assert len(raw) == P.HEADER_BYTES == 24
    rows = header_data_rows(frame)
    # 192 bits at 2 bits/symbol fills exactly two OFDM symbols
    assert rows.shape == (P.N_HEADER_SYMBOLS, P.N_DATA) == (2, 48)


def test_header_serialization_bijection():
    rng = np.random.default_rng(4)
    for _ in range(200):
        hdr = FrameHeader(
            src_id=int(rng.integers(0, 256)), dst_id=int(rng.integers(0, 256)),
            pkt_type=int(rng.integers(0, 4)),
            mod=MODULATIONS[rng.choice(["bpsk", "qpsk", "qam16"])],
            payload_len=int(rng.integers(1, P.MAX_PAYLOAD_BYTES + 1)),
            seq_num=int(rng.integers(0, 2 ** 16)))
        assert FrameHeader.from_bytes(hdr.to_bytes()) == hdr


def test_any_single_bit_flip_invalidates_header():
    raw = bytearray(make_frame().header.to_bytes())
    for bit in range(len(raw) * 8):
        flipped = bytearray(raw)
        flipped[bit // 8] ^= 1 << (7 - bit % 8)
        assert FrameHeader.from_bytes(bytes(flipped)) is None, f"bit {bit}"


def test_header_rejects_bad_fields():
    hdr = make_frame().header.to_bytes()
    assert FrameHeader.from_bytes(hdr[:-1]) is None          # wrong length
    # a header that passes the checksum but names a bogus modulation
    bogus = FrameHeader(1, 2, 0, QPSK, 100, 0)
    raw = bytearray(bogus.to_bytes())
    raw[3] = 3                                               # 3 bits/symbol
    import struct
    from binascii import crc_hqx
    raw[-2:] = struct.pack("<H", crc_hqx(bytes(raw[:-2]), 0xFFFF))
    assert FrameHeader.from_bytes(bytes(raw)) is None


def test_payload_size_limits():
    with pytest.raises(PayloadTooLargeError):
        Frame.make(b"x" * (P.MAX_PAYLOAD_BYTES + 1), QPSK)


def test_empty_payload_round_trips():
    from coopofdm.ofdm import Baseband
    from coopofdm.receiver import Outcome, ReceiverConfig, receive

    # degenerate length: one symbol carrying only the CRC, one filler
    frame = Frame.make(b"", QPSK)
    assert frame.n_payload_symbols == 2
    bb = build_frame_waveform(frame, Role.B)
    assert len(bb) == P.frame_len(2)
    lead = np.zeros(100, dtype=complex)
    out = receive(Baseband(np.concatenate([lead, bb.samples, lead])),
                  ReceiverConfig(noise_floor=1e-12))
    assert out.outcome is Outcome.GOOD
    assert out.header.payload_len == 0
    assert out.frame.payload == b""


def test_waveform_length_and_preamble():
    frame = make_frame()
    bb = build_frame_waveform(frame, Role.B)
    # preamble = 160 STS + 160 LTS samples, then header + payload symbols
    expect = P.STS_LEN + (P.N_LTS_SYMBOLS + P.N_HEADER_SYMBOLS + 118) * P.SYMBOL_LEN
    assert len(bb) == expect == frame.n_samples == P.frame_len(118)
    # frames are emitted at unit RMS so link budgets are waveform-independent
    assert np.sqrt(np.mean(np.abs(bb.samples) ** 2)) == pytest.approx(1.0, abs=1e-9)


def test_sts_is_16_periodic_and_role_specific():
    frame = make_frame(64, seed=5)
    for role in (Role.A, Role.B):
        bb = build_frame_waveform(frame, role)
        sts = bb.samples[:P.STS_LEN]
        assert np.allclose(sts[:-16], sts[16:], atol=1e-12)
    a = build_frame_waveform(frame, Role.A).samples[:P.STS_LEN]
    b = build_frame_waveform(frame, Role.B).samples[:P.STS_LEN]
    # the two roles use different preamble sequences so their superposition
    # cannot cancel identically
    assert np.max(np.abs(a - b)) > 1e-3


def test_lts_grid_signs():
    la, lb = lts_grid(Role.A), lts_grid(Role.B)
    assert np.allclose(la[0], la[1])
    assert np.allclose(lb[0], -lb[1])
    assert np.allclose(la[0], lb[0])
    nulls = sorted(set(range(P.N_FFT)) - set(P.OCCUPIED_BINS.tolist()))
    assert np.all(la[:, nulls] == 0)


def test_null_bins_carry_no_energy_on_air():
    frame = make_frame(200, seed=6)
    bb = build_frame_waveform(frame, Role.B)
    n_sym = P.N_LTS_SYMBOLS + P.N_HEADER_SYMBOLS + frame.n_payload_symbols
    grid = ofdm_demodulate(bb.samples, n_sym, offset=P.STS_LEN)
    nulls = sorted(set(range(P.N_FFT)) - set(P.OCCUPIED_BINS.tolist()))
    assert np.max(np.abs(grid[:, nulls])) < 1e-9


def test_role_grids_have_equal_energy():
    frame = make_frame(300, seed=7)
    ga = encoded_symbol_grid(frame, Role.A)
    gb = encoded_symbol_grid(frame, Role.B)
    assert np.sum(np.abs(ga) ** 2) == pytest.approx(np.sum(np.abs(gb) ** 2), rel=1e-12)


def test_pilots_identical_for_both_roles():
    # pilot bins are not space-time coded; the receiver leans on that
    frame = make_frame(96, seed=8)
    ga = encoded_symbol_grid(frame, Role.A)
    gb = encoded_symbol_grid(frame, Role.B)
    assert np.allclose(ga[P.N_LTS_SYMBOLS:, P.PILOT_BINS],
                       gb[P.N_LTS_SYMBOLS:, P.PILOT_BINS])


def test_rate_ratios_for_reference_payload():
    # 6/12/24 Mbps come out as exact 4:2:1 symbol-count ratios before the
    # pairing filler: 236 : 118 : 59
    bits = 1416 * 8
    per = {m.name: -(-bits // (m.bits_per_symbol * P.N_DATA))
           for m in MODULATIONS.values()}
    assert (per["bpsk"], per["qpsk"], per["qam16"]) == (236, 118, 59)
