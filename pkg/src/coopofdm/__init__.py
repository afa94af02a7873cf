"""coopofdm: sample-accurate baseband simulation of a two-slot cooperative
OFDM relay system (direct, amplify-and-forward, decode-and-forward and
multihop schemes) with distributed Alamouti coding, full synchronization and
a deterministic Monte Carlo harness."""

__version__ = "0.1.0"

from .modem import BPSK, QPSK, QAM16, MODULATIONS, map_bits_to_symbols, demap_symbols
from .ofdm import Baseband, ofdm_demodulate, ofdm_modulate
from .framing import Frame, FrameHeader, build_frame_waveform
from .stbc import Role, combine_pair, encode_pair
from .receiver import Outcome, ReceiverConfig, RxOutcome, receive
from .channel import FadingSpec, Link, NodeClock, apply_cfo, apply_link
from .nodes import ExchangeConfig, run_exchange
from .harness import (PointConfig, TrialResult, compute_ber, compute_per,
                      make_topology, run_trial)

__all__ = [
    "BPSK", "QPSK", "QAM16", "MODULATIONS", "map_bits_to_symbols",
    "demap_symbols", "Baseband", "ofdm_modulate", "ofdm_demodulate", "Frame",
    "FrameHeader", "build_frame_waveform", "Role", "encode_pair",
    "combine_pair", "Outcome", "ReceiverConfig", "RxOutcome", "receive",
    "FadingSpec", "Link", "NodeClock", "apply_cfo", "apply_link",
    "ExchangeConfig", "run_exchange", "PointConfig", "TrialResult",
    "compute_per", "compute_ber", "make_topology", "run_trial",
]
