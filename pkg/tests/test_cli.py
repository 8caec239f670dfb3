import json
import os

import pytest

from homwave.cli import main, parse_config
from homwave.errors import HomwaveError
from homwave.export import file_sha256


def test_parse_config_defaults_and_types(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("""
[grid]
points = 256
extent = 2.0
[media]
kind = "cosine"
[twoscale]
kappas = [0.1, 0.2]
""")
    cfg = parse_config(str(p))
    assert cfg["grid"]["points"] == 256
    assert cfg["grid"]["extent"] == 2.0
    assert cfg["media"]["kind"] == "cosine"
    assert cfg["twoscale"]["kappas"] == [0.1, 0.2]
    assert cfg["run"]["workers"] == 1  # default preserved


def test_parse_config_rejects_unknown_key(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("[grid]\nwidth = 3\n")
    with pytest.raises(HomwaveError, match="unknown key"):
        parse_config(str(p))


def test_parse_config_rejects_unknown_section(tmp_path):
    p = tmp_path / "c.cfg"
    p.write_text("[nonsense]\nx = 1\n")
    with pytest.raises(HomwaveError, match="unknown section"):
        parse_config(str(p))


def test_tensors_subcommand_and_manifest(tmp_path):
    out = tmp_path / "out"
    rc = main(["tensors", "--out", str(out), "--order", "2"])
    assert rc == 0
    csv_path = out / "tensors.csv"
    assert csv_path.exists()
    with open(out / "tensors-manifest.json") as fh:
        manifest = json.load(fh)
    assert manifest["files"]["tensors.csv"] == file_sha256(str(csv_path))
    assert "max_certified_kappa" in manifest["derived"]


def test_determinism_identical_csv(tmp_path):
    hashes = []
    for tag in ("a", "b"):
        out = tmp_path / tag
        assert main(["tensors", "--out", str(out), "--order", "2"]) == 0
        hashes.append(file_sha256(str(out / "tensors.csv")))
    assert hashes[0] == hashes[1]


def test_error_record_on_failure(tmp_path):
    out = tmp_path / "bad"
    rc = main(["spreading", "--out", str(out)])  # default medium is not random
    assert rc == 1
    with open(out / "error.json") as fh:
        rec = json.load(fh)
    assert rec["error"] == "HomwaveError"


def test_two_scale_subcommand(tmp_path):
    out = tmp_path / "ts"
    cfgp = tmp_path / "ts.cfg"
    cfgp.write_text("""
[twoscale]
kappas = [0.08, 0.12, 0.18]
orders = [1]
""")
    rc = main(["two-scale", "--config", str(cfgp), "--out", str(out)])
    assert rc == 0
    with open(out / "two-scale-manifest.json") as fh:
        manifest = json.load(fh)
    assert abs(manifest["derived"]["exponent_N1"] - 2.0) <= 0.4
    header = (out / "two_scale.csv").read_text().splitlines()[0]
    assert header == "N,kappa,t,A0,A,B,C,D,bound,measured,ratio"


def test_sweep_single_point_matches_run(tmp_path):
    cfgp = tmp_path / "s.cfg"
    cfgp.write_text("""
[correctors]
order = 2
[sweep]
subcommand = "tensors"
param = "correctors.order"
values = [2]
""")
    out = tmp_path / "sw"
    assert main(["sweep", "--config", str(cfgp), "--out", str(out)]) == 0
    direct = tmp_path / "direct"
    assert main(["tensors", "--out", str(direct), "--order", "2"]) == 0
    sweep_rows = (out / "sweep.csv").read_text().splitlines()[1:]
    direct_rows = (direct / "tensors.csv").read_text().splitlines()[1:]
    assert len(sweep_rows) == len(direct_rows)
    stripped = [",".join(r.split(",")[1:]) for r in sweep_rows]
    assert stripped == direct_rows
