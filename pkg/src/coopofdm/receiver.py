"""The full receive pipeline, from raw samples to a classified outcome.

Stages: energy detection and timing, coarse CFO correction, channel
estimation from the two LTS, per-symbol pilot phase tracking, Alamouti
combining (which degenerates gracefully for solo transmitters), header
parse, payload demap and CRC check.

Every reception ends in exactly one of four states:

    NO_RECEPTION  nothing detected (or stream truncated before the preamble)
    BAD_HEADER    detected, but the header failed its checksum
    BAD_PAYLOAD   header fine, payload CRC failed
    GOOD          payload CRC passed

Bit accounting (against the known transmitted payload, when provided)
covers the on-air payload bits, CRC included, of BAD_PAYLOAD and GOOD
receptions only; header bits never count.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from . import params as P
from .estimators import (estimate_cfo_coarse, estimate_cfo_residual,
                         estimate_channels, detect_packet, track_pilot_phases)
from .framing import (Frame, FrameHeader, check_payload_crc, payload_on_air,
                      payload_bits_from_rows, payload_symbol_count)
from .modem import QPSK, bits_to_bytes, bytes_to_bits, demap_symbols, map_bits_to_symbols
from .ofdm import Baseband, InsufficientSamplesError, ofdm_demodulate
from .stbc import Role, ZeroChannelError, combine_stream, encode_stream


class Outcome(Enum):
    NO_RECEPTION = "no_reception"
    BAD_HEADER = "bad_header"
    BAD_PAYLOAD = "bad_payload"
    GOOD = "good"


@dataclass
class ReceiverConfig:
    noise_floor: float = P.NOISE_FLOOR
    margin_db: float = 6.0
    backoff: int = 3            # FFT window retreat into the cyclic prefix
    track_pilots: bool = True
    collect_evm: bool = False


@dataclass
class RxOutcome:
    outcome: Outcome
    bit_errors: int = 0
    bits_compared: int = 0
    frame: Frame | None = None
    header: FrameHeader | None = None
    start_index: int = -1
    rx_power_db: float = float("nan")
    cfo_coarse_hz: float = float("nan")
    cfo_residual_hz: float = float("nan")
    cfo_total_hz: float = float("nan")
    residual_ambiguous: bool = False
    evm_db: np.ndarray = field(default_factory=lambda: np.empty(0))

    @property
    def ok(self) -> bool:
        return self.outcome is Outcome.GOOD


def _symbol_center_times(first_symbol_offset: int, n_symbols: int, backoff: int) -> np.ndarray:
    """Mid-FFT-window times (s) of consecutive symbols, frame-relative."""
    starts = first_symbol_offset + P.SYMBOL_LEN * np.arange(n_symbols) + P.CP_LEN - backoff
    return (starts + P.N_FFT / 2.0) / P.SAMPLE_RATE


def _decision_directed_fill(pay_grid, theta, weights, h_data_a, h_data_b, mod):
    """Common-phase estimates for pilot-gated symbols, read off the data.

    Two healthy streams can superpose destructively on the pilot bins, in
    which case the pilots say nothing about the common phase while the
    combined data symbols still carry it at full energy.  Walk the Alamouti
    pairs in time order; where the gate rejected both symbols of a pair,
    demap with the running phase, then re-synthesize the two received rows
    from the hard decisions through the per-role channels and read the
    rotation against the raw rows.  The rotation must be measured before
    combining: combining turns a common phase excursion into crosstalk and
    shows almost no net rotation when the branch powers are balanced.
    Trusted pairs keep their pilot phases and re-anchor the walk.
    """
    out = theta.copy()
    carry = 0.0
    for r in range(0, len(out) - 1, 2):
        pair = slice(r, r + 2)
        if weights[r] > 0 or weights[r + 1] > 0:
            carry = float(0.5 * (out[r] + out[r + 1]))
            continue
        raw = pay_grid[pair][:, P.DATA_BINS]
        try:
            syms = combine_stream(raw * np.exp(-1j * carry),
                                  h_data_a, h_data_b).reshape(-1)
        except ZeroChannelError:
            out[pair] = carry
            continue
        ideal = map_bits_to_symbols(demap_symbols(syms, mod), mod)
        decided = ideal.reshape(2, -1)
        ref = (h_data_a * encode_stream(decided, Role.A)
               + h_data_b * encode_stream(decided, Role.B))
        rot = complex(np.sum(raw * np.conj(ref)))
        if abs(rot) > 0:
            carry = float(np.angle(rot))
        out[pair] = carry
    return out


def receive(stream: Baseband, cfg: ReceiverConfig | None = None,
            expected_payload: bytes | None = None) -> RxOutcome:
    cfg = cfg or ReceiverConfig()
    samples = stream.samples

    det = detect_packet(samples, cfg.noise_floor, cfg.margin_db)
    if not det.detected:
        return RxOutcome(Outcome.NO_RECEPTION)
    x = samples[det.start_index:]
    if len(x) < P.PREAMBLE_LEN + P.N_HEADER_SYMBOLS * P.SYMBOL_LEN:
        return RxOutcome(Outcome.NO_RECEPTION)

    coarse = estimate_cfo_coarse(x[:P.STS_LEN])
    n = np.arange(len(x))
    x = x * np.exp(-2j * np.pi * coarse.freq_hz / P.SAMPLE_RATE * n)

    base = RxOutcome(Outcome.BAD_HEADER, start_index=det.start_index,
                     rx_power_db=det.rx_power_db, cfo_coarse_hz=coarse.freq_hz)

    lts = ofdm_demodulate(x, P.N_LTS_SYMBOLS, offset=P.STS_LEN, backoff=cfg.backoff)
    h_a, h_b = estimate_channels(lts)
    h_data_a, h_data_b = h_a[P.DATA_BINS], h_b[P.DATA_BINS]
    # both roles transmit the same pilots, so the expected observation on
    # every symbol is the superposed channel times the pilot values; its
    # trustworthiness is judged against the per-role channel scale (the sum
    # can fade destructively while both streams stay strong)
    pilot_ref = (h_a + h_b)[P.PILOT_BINS] * P.PILOT_VALUES
    pilot_scale = float(np.sum(np.abs(h_a[P.PILOT_BINS]) ** 2
                               + np.abs(h_b[P.PILOT_BINS]) ** 2))

    lts_center = float(np.mean(_symbol_center_times(P.STS_LEN, P.N_LTS_SYMBOLS, cfg.backoff)))

    # header: one Alamouti pair of QPSK symbols
    try:
        hdr_grid = ofdm_demodulate(x, P.N_HEADER_SYMBOLS, offset=P.PREAMBLE_LEN,
                                   backoff=cfg.backoff)
        if cfg.track_pilots:
            theta, _ = track_pilot_phases(hdr_grid[:, P.PILOT_BINS], pilot_ref,
                                          cfg.noise_floor, ref_scale=pilot_scale)
            hdr_grid = hdr_grid * np.exp(-1j * theta)[:, None]
        hdr_syms = combine_stream(hdr_grid[:, P.DATA_BINS], h_data_a, h_data_b)
        header = FrameHeader.from_bytes(bits_to_bytes(demap_symbols(hdr_syms.reshape(-1), QPSK)))
    except (ZeroChannelError, InsufficientSamplesError):
        header = None
    if header is None:
        return base

    base.header = header
    n_pay = payload_symbol_count(header.payload_len, header.mod)
    pay_off = P.PREAMBLE_LEN + P.N_HEADER_SYMBOLS * P.SYMBOL_LEN
    try:
        pay_grid = ofdm_demodulate(x, n_pay, offset=pay_off, backoff=cfg.backoff)
    except InsufficientSamplesError:
        # stream ended before the length the header promised
        return base

    times = _symbol_center_times(pay_off, n_pay, cfg.backoff)
    theta = np.zeros(n_pay)
    weights = np.zeros(n_pay)
    if cfg.track_pilots:
        theta, weights = track_pilot_phases(pay_grid[:, P.PILOT_BINS], pilot_ref,
                                            cfg.noise_floor, ref_scale=pilot_scale)
        applied = theta
        if not np.all(weights > 0):
            applied = _decision_directed_fill(pay_grid, theta, weights,
                                              h_data_a, h_data_b, header.mod)
        pay_grid = pay_grid * np.exp(-1j * applied)[:, None]
        theta = applied

    # diagnostics: slope of the tracked phase resolves the residual CFO wrap
    slope_hint = None
    good = weights > 0
    if np.sum(good) >= 2:
        t_good = times[good] - lts_center
        th_good = theta[good]
        denom = np.sum(weights[good] * (t_good - t_good.mean()) ** 2)
        if denom > 0:
            beta = np.sum(weights[good] * (t_good - t_good.mean())
                          * (th_good - np.average(th_good, weights=weights[good]))) / denom
            slope_hint = beta / (2 * np.pi)
    last = int(np.nonzero(good)[0][-1]) if np.any(good) else n_pay - 1
    residual = estimate_cfo_residual(
        # raw pilots of the last trusted symbol (tracking already removed
        # theta, so add it back for the single-shot reading)
        pay_grid[last, P.PILOT_BINS] * np.exp(1j * theta[last]),
        pilot_ref, float(times[last] - lts_center), slope_hint)
    base.cfo_residual_hz = residual.freq_hz
    base.residual_ambiguous = residual.ambiguous
    base.cfo_total_hz = coarse.freq_hz + residual.freq_hz

    try:
        pay_syms = combine_stream(pay_grid[:, P.DATA_BINS], h_data_a, h_data_b)
    except ZeroChannelError:
        return base

    rx_bits = payload_bits_from_rows(pay_syms, header)
    on_air = bits_to_bytes(rx_bits)
    outcome = Outcome.GOOD if check_payload_crc(on_air) else Outcome.BAD_PAYLOAD

    base.outcome = outcome
    base.frame = Frame(header, on_air[:-P.PAYLOAD_CRC_BYTES])
    if expected_payload is not None:
        true_bits = bytes_to_bits(payload_on_air(expected_payload))
        m = min(true_bits.size, rx_bits.size)
        errs = int(np.count_nonzero(true_bits[:m] != rx_bits[:m]))
        errs += abs(true_bits.size - rx_bits.size)   # header lied about length
        base.bit_errors = errs
        base.bits_compared = int(true_bits.size)

    if cfg.collect_evm:
        ref = map_bits_to_symbols(rx_bits, header.mod)
        n_full = ref.size // P.N_DATA
        err = pay_syms.reshape(-1)[:n_full * P.N_DATA] - ref[:n_full * P.N_DATA]
        per_sym = np.mean(np.abs(err.reshape(n_full, P.N_DATA)) ** 2, axis=1)
        base.evm_db = 10.0 * np.log10(per_sym + 1e-300)
    return base
