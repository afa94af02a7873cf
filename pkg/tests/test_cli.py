"""Command-line behavior: exit codes, selftest, run directories, worker
independence."""

import time

import pytest

from coopofdm.cli import (EXIT_CONFIG, EXIT_OK, EXIT_SELFTEST, cmd_selftest,
                          main)

TINY_INI = """
[experiment]
name = tiny
schemes = nc,df
packets = 24
seed = 6
payload_bytes = 96

[topology]
kind = colocated
atten_db = 22
"""


def test_selftest_passes_quickly(capsys):
    t0 = time.monotonic()
    code = cmd_selftest()
    assert code == EXIT_OK
    assert time.monotonic() - t0 < 60
    out = capsys.readouterr().out
    assert "all checks passed" in out
    assert out.count(": ok") == 5


def test_selftest_catches_injected_constellation_bug(capsys):
    code = cmd_selftest(inject="constellation-scale")
    assert code == EXIT_SELFTEST
    out = capsys.readouterr().out
    assert "constellation-roundtrip: FAIL" in out


def test_selftest_subcommand_exit_code():
    assert main(["selftest"]) == EXIT_OK


def test_run_config_writes_run_directory(tmp_path, capsys):
    ini = tmp_path / "exp.ini"
    ini.write_text(TINY_INI)
    out = tmp_path / "run"
    assert main(["run", "--config", str(ini), "--out", str(out)]) == EXIT_OK
    assert (out / "results.csv").exists()
    assert (out / "manifest.json").exists()
    assert "tiny: 2 points" in capsys.readouterr().out


def test_run_rejects_bad_config_without_partial_output(tmp_path, capsys):
    ini = tmp_path / "exp.ini"
    ini.write_text("[experiment]\npackets = lots\n[topology]\nkind = colocated\n")
    out = tmp_path / "run"
    assert main(["run", "--config", str(ini), "--out", str(out)]) == EXIT_CONFIG
    assert not out.exists()
    assert "error:" in capsys.readouterr().err


def test_run_rejects_unknown_preset(tmp_path, capsys):
    code = main(["run", "--preset", "fig99", "--out", str(tmp_path / "x")])
    assert code == EXIT_CONFIG
    assert not (tmp_path / "x").exists()


def test_usage_error_is_config_error(tmp_path, capsys):
    assert main(["run", "--out", str(tmp_path / "x")]) == EXIT_CONFIG
    assert main(["frobnicate"]) == EXIT_CONFIG


def test_packet_and_seed_overrides_land_in_manifest(tmp_path):
    import json
    ini = tmp_path / "exp.ini"
    ini.write_text(TINY_INI)
    out = tmp_path / "run"
    main(["run", "--config", str(ini), "--out", str(out),
          "--seed", "99", "--packets", "16"])
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["seed"] == 99
    assert all(p["n_packets"] == 16 and p["master_seed"] == 99
               for p in manifest["points"])


def test_worker_count_does_not_change_results(tmp_path):
    ini = tmp_path / "exp.ini"
    ini.write_text(TINY_INI.replace("packets = 24", "packets = 40")
                   + "\n[offsets]\noffset_hz = 0\n")
    a, b = tmp_path / "w1", tmp_path / "w2"
    assert main(["run", "--config", str(ini), "--out", str(a),
                 "--workers", "1"]) == EXIT_OK
    assert main(["run", "--config", str(ini), "--out", str(b),
                 "--workers", "2"]) == EXIT_OK
    assert ((a / "results.csv").read_bytes() == (b / "results.csv").read_bytes())
