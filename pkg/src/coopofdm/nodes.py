"""Node behavior and the two-slot exchange for each relaying scheme.

Schemes:

    nc     source -> destination, one slot, no relay
    af     slot 1: source -> relay; slot 2: source (role A) plus the relay
           replaying its normalized slot-1 capture (role B component)
    df     like af, but the relay re-encodes the decoded frame as role B and
           pre-rotates it by its estimated source-link CFO so both slot-2
           streams arrive frequency-aligned at the destination
    mhop   slot 1: source -> relay; slot 2: relay alone -> destination

The relay participates in slot 2 only after fully decoding slot 1 (payload
CRC included); the trigger rule is identical for af, df and mhop.  When a
cooperative relay stays silent the source still transmits slot 2 alone and
the destination decodes it as a solo role-A frame.  The destination is only
scored on its slot-2 reception (slot 1 in nc's case, which has just one).

Every first transmission a node makes is the role-B waveform (nc source,
slot-1 source, mhop relay): af replays the capture verbatim, so whatever the
relay heard must already be the second component of the slot-2 Alamouti
pair.  Only the slot-2 source adds the role-A component; when the relay
stays silent that solo role-A frame decodes symmetrically to a solo role-B
one.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import params as P
from .channel import Link, Transmission, apply_cfo, apply_link
from .framing import Frame, build_frame_waveform
from .ofdm import Baseband
from .receiver import Outcome, ReceiverConfig, RxOutcome, receive
from .stbc import Role

SCHEMES = ("nc", "af", "df", "mhop")

DELAY_STEP_NS = 25.0        # programmable delay resolution
ALIGN_GRID_NS = 100.0       # transmit start alignment (one sample)


class NotTriggeredError(RuntimeError):
    """Relay asked to transmit without a fully decoded slot-1 frame."""


class InvalidDelayResolutionError(ValueError):
    pass


def schedule_transmission(trigger_sample: int, delay_ns: float,
                          sample_rate: float = P.SAMPLE_RATE) -> tuple[int, float]:
    """Start sample for a transmission delay_ns after a trigger.

    The delay must sit on the 25 ns programmable-delay grid; the start is
    then aligned to the sample grid (100 ns) and the sub-sample residue is
    reported back.
    """
    if abs(delay_ns / DELAY_STEP_NS - round(delay_ns / DELAY_STEP_NS)) > 1e-9:
        raise InvalidDelayResolutionError(
            f"delay {delay_ns} ns is not a multiple of {DELAY_STEP_NS} ns")
    delay_samples = round(delay_ns * 1e-9 * sample_rate)
    residue_ns = delay_ns - delay_samples / sample_rate * 1e9
    return trigger_sample + delay_samples, residue_ns


def relay_af_process(capture: np.ndarray, relay_outcome: RxOutcome,
                     target_rms: float = 1.0) -> np.ndarray:
    """Amplify-and-forward: normalize the raw capture to the transmit RMS.

    The capture keeps the relay's receiver noise; at low source-link SNR the
    replay is mostly amplified noise.
    """
    if relay_outcome.outcome is not Outcome.GOOD:
        raise NotTriggeredError("relay did not decode slot 1")
    rms = np.sqrt(np.mean(np.abs(capture) ** 2))
    if rms == 0.0:
        raise ValueError("empty capture")
    return capture * (target_rms / rms)


def relay_df_process(relay_outcome: RxOutcome, cfo_est_hz: float) -> np.ndarray:
    """Decode-and-forward: re-encode as role B, pre-rotated by cfo_est_hz.

    The rotation reproduces the source-link CFO the relay measured, so the
    destination sees the relayed stream at the same apparent offset as the
    direct stream.
    """
    if relay_outcome.outcome is not Outcome.GOOD or relay_outcome.frame is None:
        raise NotTriggeredError("relay did not decode slot 1")
    wf = build_frame_waveform(relay_outcome.frame, Role.B)
    if cfo_est_hz:
        rotated, _ = apply_cfo(wf.samples, cfo_est_hz)
        return rotated
    return wf.samples


@dataclass
class ExchangeConfig:
    scheme: str = "nc"
    turnaround_ns: float = 50000.0          # slot-1 end to slot-2 start
    relay_extra_delay_ns: float = 0.0       # deliberate slot-2 misalignment
    oracle_cfo: bool = False                # df relay uses the true link CFO
    forced_offset_hz: float = 0.0           # extra rotation on the slot-2 role-B stream
    pre_pad: int = 64
    post_pad: int = 40
    receiver: ReceiverConfig = field(default_factory=ReceiverConfig)

    def __post_init__(self):
        if self.scheme not in SCHEMES:
            raise ValueError(f"unknown scheme {self.scheme!r}")


@dataclass
class ExchangeResult:
    dest: RxOutcome
    relay: RxOutcome | None = None
    relay_transmitted: bool = False
    relay_cfo_est_hz: float = float("nan")
    relay_cfo_err_hz: float = float("nan")
    slot2_start: int = -1


def run_exchange(frame: Frame, links: dict[str, Link], cfg: ExchangeConfig,
                 rng: np.random.Generator) -> ExchangeResult:
    """Run one packet exchange and return both receptions' outcomes.

    links maps "sd"/"sr"/"rd" to quasi-static Link instances (fading states
    already drawn).  rng supplies receiver noise; draw order is fixed per
    scheme, so equal seeds give bit-identical exchanges.
    """
    rx_cfg = cfg.receiver
    n_frame = frame.n_samples
    t1 = cfg.pre_pad

    if cfg.scheme == "nc":
        wf = build_frame_waveform(frame, Role.B)
        span = n_frame + cfg.pre_pad + cfg.post_pad
        dest_stream = apply_link([Transmission(wf.samples, t1, links["sd"])],
                                 0, span, rx_cfg.noise_floor, rng)
        dest = receive(Baseband(dest_stream), rx_cfg, frame.payload)
        return ExchangeResult(dest)

    # slot 1: source (role B) to relay
    wf_b = build_frame_waveform(frame, Role.B)
    span1 = n_frame + cfg.pre_pad + cfg.post_pad
    relay_stream = apply_link([Transmission(wf_b.samples, t1, links["sr"])],
                              0, span1, rx_cfg.noise_floor, rng)
    relay_rx = receive(Baseband(relay_stream), rx_cfg, frame.payload)
    triggered = relay_rx.outcome is Outcome.GOOD

    slot1_end = t1 + n_frame
    t2, _ = schedule_transmission(slot1_end, cfg.turnaround_ns)
    t2_relay, _ = schedule_transmission(
        slot1_end, cfg.turnaround_ns + cfg.relay_extra_delay_ns)

    slot2: list[Transmission] = []
    relay_cfo_est = float("nan")
    if cfg.scheme == "mhop":
        if triggered:
            relay_wf = build_frame_waveform(relay_rx.frame, Role.B)
            slot2.append(Transmission(relay_wf.samples, t2_relay, links["rd"]))
    else:
        wf_a = build_frame_waveform(frame, Role.A)
        slot2.append(Transmission(wf_a.samples, t2, links["sd"]))
        if triggered:
            if cfg.scheme == "af":
                capture = relay_stream[relay_rx.start_index:
                                       relay_rx.start_index + n_frame]
                relay_tx = relay_af_process(capture, relay_rx)
            else:
                relay_cfo_est = (links["sr"].cfo_hz if cfg.oracle_cfo
                                 else relay_rx.cfo_total_hz)
                relay_tx = relay_df_process(relay_rx, relay_cfo_est)
            if cfg.forced_offset_hz:
                relay_tx, _ = apply_cfo(relay_tx, cfg.forced_offset_hz,
                                        start_phase=0.0)
            slot2.append(Transmission(relay_tx, t2_relay, links["rd"]))

    span2_start = t2 - cfg.pre_pad
    span2 = n_frame + cfg.pre_pad + cfg.post_pad + (t2_relay - t2) + len(
        links["rd"].state.fir)
    dest_stream = apply_link(slot2, span2_start, span2, rx_cfg.noise_floor, rng)
    dest = receive(Baseband(dest_stream), rx_cfg, frame.payload)

    res = ExchangeResult(dest, relay_rx, triggered, slot2_start=t2)
    if cfg.scheme == "df" and triggered and not cfg.oracle_cfo:
        res.relay_cfo_est_hz = relay_cfo_est
        res.relay_cfo_err_hz = relay_cfo_est - links["sr"].cfo_hz
    return res
