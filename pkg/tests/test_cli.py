import csv
import json

import pytest

from diraclab.cli import main

SIM = ["simulate", "--n", "8", "--T", "0.05", "--dt", "0.01", "--epsilon", "0.1", "--set", "time.output_every=1"]
FAST_VERIFY = ["--set", "verify.fields=5", "--set", "verify.symbol_pairs=200", "--set", "verify.bound_samples=1000",
               "--set", "verify.decomposition_pairs=3"]


def test_unknown_flag_is_usage_error():
    with pytest.raises(SystemExit) as info:
        main(["simulate", "--bogus"])
    assert info.value.code == 2


def test_unknown_subcommand():
    with pytest.raises(SystemExit) as info:
        main(["integrate"])
    assert info.value.code == 2


def test_verify_writes_residuals(tmp_path):
    out = tmp_path / "verify"
    assert main(["verify", "--out", str(out)] + FAST_VERIFY) == 0
    assert (out / "manifest.json").is_file()
    assert (out / "checks.csv").is_file()
    rows = list(csv.DictReader(open(out / "checks.csv")))
    assert len(rows) > 5
    assert all(r["passed"] == "True" for r in rows if r["enforced"] == "True")
    assert any("decomposition" in r["check"] for r in rows)


def test_simulate_manifest(tmp_path):
    out = tmp_path / "sim"
    assert main(SIM + ["--out", str(out), "--seed", "3"]) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["subcommand"] == "simulate"
    assert manifest["seed"] == 3
    assert manifest["config"]["grid"]["n"] == 8
    assert manifest["config"]["physics"]["epsilon"] == 0.1
    for name in ("config.ini", "scatter_plus.json", "scatter_minus.json", "psi_plus_final.bin", "spectrum_final.csv",
                 "diagnostics.csv", "summary.json"):
        assert (out / name).is_file(), name


def test_repeated_run_is_bit_identical(tmp_path, monkeypatch):
    monkeypatch.setenv("DIRACLAB_THREADS", "1")
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(SIM + ["--out", str(a)]) == 0
    assert main(SIM + ["--out", str(b)]) == 0
    names = sorted(p.name for p in a.iterdir())
    assert names == sorted(p.name for p in b.iterdir())
    for name in names:
        if name == "manifest.json":
            ma, mb = (json.loads((d / name).read_text()) for d in (a, b))
            for key in ("output_dir", "argv"):
                ma.pop(key), mb.pop(key)
            assert ma == mb
        else:
            assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_report_refuses_unmanifested_dir(tmp_path):
    (tmp_path / "empty").mkdir()
    assert main(["report", str(tmp_path / "empty"), "--out", str(tmp_path / "rep")]) == 2


def test_report_renders_figures(tmp_path):
    sim = tmp_path / "sim"
    assert main(SIM + ["--out", str(sim)]) == 0
    rep = tmp_path / "rep"
    assert main(["report", str(sim), "--out", str(rep)]) == 0
    assert list(rep.glob("*.png"))
    assert (rep / "manifest.json").is_file()
    summary = json.loads((rep / "summary.json").read_text())
    assert summary["passed"] and summary["figures"]


def test_config_error_names_line(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[grid]\nn = 8\n\n[physics]\nepsilon = lots\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert f"{cfg}:5:" in err
    assert "epsilon" in err


def test_unknown_config_key(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[grid]\nsize = 8\n")
    assert main(["simulate", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "size" in capsys.readouterr().err


def test_bad_set_override(tmp_path):
    assert main(["verify", "--set", "grid.n", "--out", str(tmp_path / "o")]) == 2


def test_scan_capacity_error(tmp_path):
    assert main(["scan", "--n", "16", "--parts", "scaling", "--out", str(tmp_path / "o")]) == 3


def test_contract_violation_is_usage_error(tmp_path):
    assert main(SIM + ["--set", "time.scheme=euler", "--out", str(tmp_path / "o")]) == 2
