"""Command line interface.

    coopofdm run --preset fig5-colocated --out runs/fig5 [--seed N]
                 [--workers N] [--packets N]
    coopofdm run --config sweep.ini --out runs/custom
    coopofdm selftest

Exit codes: 0 success, 1 configuration error, 2 runtime error, 3 selftest
failure.
"""

from __future__ import annotations

import argparse
import sys
import time

import numpy as np

from .experiments import (ConfigError, build_preset, load_config,
                          run_experiment, PRESETS)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_RUNTIME = 2
EXIT_SELFTEST = 3


class _Parser(argparse.ArgumentParser):
    # bad command lines are configuration errors, not argparse's default 2
    def error(self, message):
        raise ConfigError(message)


def _build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="coopofdm",
                 description="cooperative OFDM link simulator")
    sub = ap.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run an experiment and write a run directory")
    src = run.add_mutually_exclusive_group(required=True)
    src.add_argument("--preset", choices=sorted(PRESETS),
                     help="built-in experiment definition")
    src.add_argument("--config", metavar="PATH", help="INI experiment definition")
    run.add_argument("--out", required=True, metavar="DIR", help="output directory")
    run.add_argument("--seed", type=int, default=None, help="master seed override")
    run.add_argument("--workers", type=int, default=1, help="worker processes")
    run.add_argument("--packets", type=int, default=None,
                     help="packets per point override")

    sub.add_parser("selftest", help="fast built-in sanity checks")
    return ap


def cmd_run(args: argparse.Namespace) -> int:
    if args.preset:
        exp = build_preset(args.preset, args.seed if args.seed is not None else 1)
    else:
        exp = load_config(args.config)
    exp = exp.override(seed=args.seed, packets=args.packets)
    t0 = time.monotonic()
    run_experiment(exp, args.out, max(1, args.workers))
    dt = time.monotonic() - t0
    n_pts = len(exp.points) + len(exp.estimator_points)
    print(f"run: {exp.name}: {n_pts} points -> {args.out} ({dt:.1f}s)")
    return EXIT_OK


def _selftest_checks(inject: str | None = None):
    """Yield (name, callable) pairs; each callable raises on failure.

    inject="constellation-scale" deliberately breaks the constellation scale
    so the harness hook can prove the checks have teeth.
    """
    from . import params as P
    from .framing import Frame, build_frame_waveform
    from .harness import (PointConfig, compute_per, make_topology, run_trial)
    from .modem import MODULATIONS, demap_symbols, map_bits_to_symbols
    from .ofdm import Baseband, ofdm_demodulate, ofdm_modulate, place_data
    from .receiver import Outcome, ReceiverConfig, receive
    from .stbc import Role, combine_stream, encode_stream

    rng = np.random.default_rng(0xC0FFEE)

    def constellation_roundtrip():
        scale = 1.1 if inject == "constellation-scale" else 1.0
        for mod in MODULATIONS.values():
            bits = rng.integers(0, 2, 3 * 8 * mod.bits_per_symbol)
            syms = map_bits_to_symbols(bits, mod) * scale
            back = demap_symbols(syms, mod)
            if not np.array_equal(bits, back):
                raise AssertionError(f"{mod.name} round trip failed")
            # unit average power, within numerical noise of the exact value
            p = np.mean(np.abs(mod.points) ** 2)
            if abs(p - 1.0) > 1e-12 * scale or scale * p > 1.05:
                raise AssertionError(f"{mod.name} constellation power {scale * p}")

    def ofdm_roundtrip():
        grid = place_data(rng.standard_normal((4, P.N_DATA))
                          + 1j * rng.standard_normal((4, P.N_DATA)))
        back = ofdm_demodulate(ofdm_modulate(grid), 4)
        if not np.allclose(back, grid, atol=1e-10):
            raise AssertionError("ofdm round trip mismatch")

    def stbc_identity():
        syms = (rng.standard_normal((6, 8)) + 1j * rng.standard_normal((6, 8)))
        h_a = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        h_b = rng.standard_normal(8) + 1j * rng.standard_normal(8)
        rx = h_a * encode_stream(syms, Role.A) + h_b * encode_stream(syms, Role.B)
        if not np.allclose(combine_stream(rx, h_a, h_b), syms, atol=1e-10):
            raise AssertionError("alamouti identity failed")

    def frame_roundtrip():
        payload = rng.integers(0, 256, 300, dtype=np.uint8).tobytes()
        frame = Frame.make(payload, MODULATIONS["qpsk"])
        wf = build_frame_waveform(frame, Role.A)
        noise_floor = 1e-6
        x = np.concatenate([np.zeros(100, complex), wf.samples,
                            np.zeros(40, complex)])
        x = x + np.sqrt(noise_floor / 2) * (rng.standard_normal(len(x))
                                            + 1j * rng.standard_normal(len(x)))
        out = receive(Baseband(x), ReceiverConfig(noise_floor=noise_floor),
                      payload)
        if out.outcome is not Outcome.GOOD or out.bit_errors:
            raise AssertionError(f"clean frame not decoded: {out.outcome}")
        if abs(out.start_index - 100) > 2:
            raise AssertionError(f"timing off: {out.start_index}")

    def accounting_identities():
        cfg = PointConfig(point_id=0, scheme="df",
                          topology=make_topology("colocated", atten_db=10.0),
                          n_packets=40, master_seed=7, shard_size=16)
        res = run_trial(cfg)
        if res.n_tx != 40:
            raise AssertionError("packet count mismatch")
        if res.n_good + res.n_no_rx + res.n_bad_hdr + res.n_bad_payload != res.n_tx:
            raise AssertionError("outcome counts do not partition packets")
        if sum(res.bit_error_hist.values()) != res.n_good + res.n_bad_payload:
            raise AssertionError("bit histogram inconsistent")
        if not 0.0 <= compute_per(res) <= 1.0:
            raise AssertionError("per out of range")
        rerun = run_trial(cfg)
        if (rerun.n_good, rerun.b_error) != (res.n_good, res.b_error):
            raise AssertionError("rerun not deterministic")

    yield "constellation-roundtrip", constellation_roundtrip
    yield "ofdm-roundtrip", ofdm_roundtrip
    yield "alamouti-identity", stbc_identity
    yield "frame-roundtrip", frame_roundtrip
    yield "trial-accounting", accounting_identities


def cmd_selftest(inject: str | None = None) -> int:
    failures = 0
    for name, check in _selftest_checks(inject):
        try:
            check()
        except Exception as e:  # report every check, keep going
            failures += 1
            print(f"selftest: {name}: FAIL ({e})")
        else:
            print(f"selftest: {name}: ok")
    if failures:
        print(f"selftest: {failures} check(s) failed")
        return EXIT_SELFTEST
    print("selftest: all checks passed")
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    try:
        args = _build_parser().parse_args(argv)
        if args.command == "run":
            return cmd_run(args)
        return cmd_selftest()
    except ConfigError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_CONFIG
    except Exception as e:  # pragma: no cover - unexpected
        print(f"runtime error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
