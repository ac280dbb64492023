import json

import pytest

from xxbell.cli import main

SMALL = """\
[run]
master_seed = 7
workers = 1

[model]
kind = "uncorrelated"
L = 16

[disorder]
distribution = "powerlaw"
strength = "1"

[ensemble]
N = 40
max_separation = 4

[threshold]
predicate = "both"
grid = ["0.5", "1", "2"]
resolution = "0.5"

[maxsep]
strengths = ["1", "2"]
"""


@pytest.fixture
def cfg(tmp_path, monkeypatch):
    monkeypatch.delenv("XXBELL_WORKERS", raising=False)
    p = tmp_path / "run.toml"
    p.write_text(SMALL)
    return p


def _read(path):
    return path.read_bytes()


def test_sample_is_byte_identical(cfg, tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["sample", "--config", str(cfg), "--out", str(a), "--pairs-csv", "--chains"]) == 0
    assert main(["sample", "--config", str(cfg), "--out", str(b), "--pairs-csv", "--chains"]) == 0
    for name in ("accumulator.json", "summary.csv", "summary.json", "pairs.csv", "chains.jsonl"):
        assert _read(a / name) == _read(b / name), name
    manifest = json.loads((a / "manifest.json").read_text())
    assert manifest["master_seed"] == 7
    assert {o["path"] for o in manifest["outputs"]} >= {"accumulator.json", "summary.csv"}
    assert len((a / "chains.jsonl").read_text().splitlines()) == 40


def test_csv_outputs_carry_fingerprint(cfg, tmp_path):
    out = tmp_path / "o"
    assert main(["sample", "--config", str(cfg), "--out", str(out)]) == 0
    fp = json.loads((out / "manifest.json").read_text())["fingerprint"]
    first = (out / "summary.csv").read_text().splitlines()[0]
    assert first == f"# fingerprint: {fp}"


def test_hist_from_accumulator_matches_hist_from_config(cfg, tmp_path):
    s, h1, h2 = tmp_path / "s", tmp_path / "h1", tmp_path / "h2"
    assert main(["sample", "--config", str(cfg), "--out", str(s)]) == 0
    assert main(["hist", "--accumulator", str(s / "accumulator.json"), "--out", str(h1)]) == 0
    assert main(["hist", "--config", str(cfg), "--out", str(h2)]) == 0
    files = sorted(p.name for p in h1.glob("*.csv"))
    assert "by_separation.csv" in files and any(f.startswith("hist_") for f in files)
    for name in files:
        assert _read(h1 / name) == _read(h2 / name), name


def test_bad_config_exits_2_with_line(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text(SMALL.replace("L = 16", "L = 15"))
    assert main(["sample", "--config", str(p), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert f"{p}:7:" in err and "L" in err


def test_bad_max_separation_flag(cfg, tmp_path):
    assert main(["sample", "--config", str(cfg), "--out", str(tmp_path), "--max-separation", "x"]) == 2


def test_uniform_ring_has_no_nonlocal_pairs(tmp_path):
    p = tmp_path / "u.toml"
    p.write_text('[run]\nmaster_seed = 1\n[model]\nkind = "uniform"\nL = 40\n[ensemble]\nN = 1\n')
    out = tmp_path / "o"
    assert main(["sample", "--config", str(p), "--out", str(out), "--max-separation", "inf"]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["q_nl_normalized"]["mean"] == 0.0


def test_threshold_and_maxsep_outputs(cfg, tmp_path):
    out = tmp_path / "t"
    assert main(["threshold", "--config", str(cfg), "--out", str(out)]) == 0
    for pred in ("entangled", "nonlocal"):
        doc = json.loads((out / f"threshold_{pred}.json").read_text())
        assert "onset" in doc and "bracket" in doc
    out = tmp_path / "m"
    assert main(["maxsep", "--config", str(cfg), "--out", str(out)]) == 0
    rows = json.loads((out / "maxsep.json").read_text())
    assert [r["strength"] for r in rows] == ["1", "2"]
    assert (out / "saturation.csv").read_text().startswith("# fingerprint:")


def test_verify_two_site_and_corruption(tmp_path, capsys):
    assert main(["verify", "--sizes", "2", "4", "--seeds", "2", "--out", str(tmp_path / "v")]) == 0
    doc = json.loads((tmp_path / "v" / "verify.json").read_text())
    assert doc["passed"] is True
    capsys.readouterr()
    assert main(["verify", "--sizes", "4", "--seeds", "2", "--corrupt-g", "--out", str(tmp_path / "c")]) == 3
    text = capsys.readouterr().out
    assert "FAILED" in text and "seed" in text


def test_hist_needs_a_source():
    with pytest.raises(SystemExit):
        main(["hist"])
