import json
import math
import subprocess
import sys
from pathlib import Path

import numpy as np
import pytest

from contiflow import harness as H
from contiflow.cli import main

GOLDEN = Path(__file__).parent / "golden"
BASE = """[experiment]
schema_version = 1
kind = {kind}
seed = 3
ensemble = {n}
z = 0.2
{extra}
[torus]
dim = 1
L = {L}

[potential]
family = {family}
{pot}
"""
TINY_FREE = """[experiment]
schema_version = 1
kind = free-two-time
seed = 5
ensemble = 60
z = 1
eps = 1, 0.5
T = 1
snapshots = 0, 1
f = 0, 2, 1
g = 0, 2, 1

[torus]
dim = 1
L = 10

[kernel]
family = gaussian
sigma = 1
"""


def _cfg(kind="gibbs-validate", n=100, L=20, family="square_well", pot="theta = 1\nR = 0.5",
         extra=""):
    return BASE.format(kind=kind, n=n, L=L, family=family, pot=pot, extra=extra)


def _write(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_seed_streams_deterministic_and_distinct():
    a = H.seed_streams(42, 3, 1).random(4)
    assert np.array_equal(a, H.seed_streams(42, 3, 1).random(4))
    others = [H.seed_streams(42, 4, 1), H.seed_streams(42, 3, 2), H.seed_streams(43, 3, 1)]
    assert all(not np.allclose(a, g.random(4)) for g in others)


def test_format_number():
    assert H.format_number(0.1) == "0.10000000000000001"
    assert H.format_number(0.0) == "0.0000000000000000"
    assert H.format_number(-2.5) == "-2.5000000000000000"
    assert H.format_number(math.inf) == "inf"
    assert float(H.format_number(1 / 3)) == 1 / 3


def test_csv_golden_bytes(tmp_path):
    rows = [H.Row("density", "abcdef0123456789", 0.178, 0.00089, 2000),
            H.Row("C_u", "abcdef0123456789", 1.0, 0.0, 0)]
    digest = H.write_csv(rows, tmp_path / "r.csv")
    data = (tmp_path / "r.csv").read_bytes()
    assert data == (GOLDEN / "rows.csv").read_bytes()
    assert digest == H.file_digest(tmp_path / "r.csv")
    assert H.read_csv(tmp_path / "r.csv") == rows


def test_params_hash_order_independent():
    assert H.params_hash({"a": 1, "b": 2}) == H.params_hash({"b": 2, "a": 1})
    assert len(H.params_hash({"a": 1})) == 16


@pytest.mark.parametrize("text, invariant", [
    (_cfg(L=2, pot="theta = 1\nR = 1.5"), "range<L/2"),
    (_cfg(extra="eps = 0.5, 1"), "eps-decreasing"),
    (_cfg().replace("schema_version = 1", "schema_version = 9"), "schema_version"),
    (_cfg(kind="no-such-kind"), "kind"),
    (_cfg().replace("z = 0.2", "z = 2"), "low-activity"),
    (_cfg(kind="theorem3-generator", family="hard_core",
          pot="r0 = 0.1\ntheta = 0.2\nR = 0.4", extra="u = 1\nv = 0\nf = 0, 1, -1"),
     "condition-12"),
    (_cfg(extra="T = 1\nsnapshots = 0, 2"), "snapshots"),
    (_cfg(kind="free-two-time", extra="f = 0, 1, 1\ng = 0, 1, 1"), "free-potential"),
])
def test_config_errors_name_invariant(text, invariant):
    with pytest.raises(H.ConfigError) as info:
        H.parse_config(text)
    assert info.value.invariant == invariant
    assert invariant in str(info.value)


def test_bundled_configs_parse():
    from importlib import resources
    names = [p.name for p in resources.files("contiflow.configs").iterdir() if p.name.endswith(".ini")]
    assert len(names) >= 7
    for name in names:
        text = resources.files("contiflow.configs").joinpath(name).read_text()
        if name == "bad_range.ini":
            with pytest.raises(H.ConfigError):
                H.parse_config(text)
        else:
            H.parse_config(text)


def test_check_conditions_exit_codes(tmp_path, capsys):
    bad = _write(tmp_path, _cfg(L=2, pot="theta = 1\nR = 1.5"))
    assert main(["check-conditions", "--config", bad]) == H.EXIT_CONFIG
    assert "range<L/2" in capsys.readouterr().err
    good = _write(tmp_path, _cfg(), "g.ini")
    assert main(["check-conditions", "--config", good]) == H.EXIT_OK
    assert "low-activity     ok" in capsys.readouterr().out


def test_estimate_constants_exact_cases(tmp_path):
    free = _write(tmp_path, _cfg(family="zero", pot="", extra="u = 0.3\nv = 0.6"))
    assert main(["estimate-constants", "--config", free, "--out", str(tmp_path / "f")]) == 0
    c = json.loads((tmp_path / "f" / "constants.json").read_text())
    assert c["C_u"]["value"] == 1.0 and c["C_u"]["se"] == 0.0
    assert c["c_minus"]["value"] == 1.0 and c["c_plus"]["value"] == pytest.approx(0.2)
    one = _write(tmp_path, _cfg(n=40, extra="u = 1\nv = 0"), "one.ini")
    assert main(["estimate-constants", "--config", one, "--out", str(tmp_path / "o"),
                 "--source", "gibbs"]) == 0
    c = json.loads((tmp_path / "o" / "constants.json").read_text())
    assert c["C_u"]["value"] == 1.0 and c["C_u"]["se"] == 0.0
    pois = H.constants_poisson(H.parse_config(_cfg()).potential, 0.2, 0.0, 0.0, 1)
    assert pois["C_u"].value == pytest.approx(math.exp(0.2 * (math.exp(-1) - 1)))


def test_sample_gibbs_then_constants_from_bank(tmp_path):
    cfg = _write(tmp_path, _cfg(n=40, extra="u = 0.5\nv = 0"))
    assert main(["sample-gibbs", "--config", cfg, "--out", str(tmp_path / "b")]) == 0
    bank = tmp_path / "b" / "bank.ndjson"
    lines = bank.read_text().splitlines()
    assert json.loads(lines[0])["format"] == "contiflow-gibbs-bank" and len(lines) == 41
    man = json.loads((tmp_path / "b" / "manifest.json").read_text())
    assert man["outputs"]["bank.ndjson"] == H.file_digest(bank)
    assert main(["estimate-constants", "--config", cfg, "--bank", str(bank),
                 "--out", str(tmp_path / "c")]) == 0
    c = json.loads((tmp_path / "c" / "constants.json").read_text())
    assert 0.8 < c["C_u"]["value"] < 1.0


def test_scaling_sweep_reproducible_and_golden(tmp_path):
    cfg = _write(tmp_path, TINY_FREE)
    outs = []
    for name, jobs in (("a", "1"), ("b", "1"), ("c", "2")):
        assert main(["scaling-sweep", "--config", cfg, "--out", str(tmp_path / name),
                     "--jobs", jobs]) == 0
        outs.append((tmp_path / name / "results.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]
    assert outs[0] == (GOLDEN / "free_two_time_tiny.csv").read_bytes()
    man = json.loads((tmp_path / "a" / "manifest.json").read_text())
    assert man["outputs"]["results.csv"] == H.file_digest(tmp_path / "a" / "results.csv")
    assert man["status"] == "ok" and man["config_hash"] == H.load_config(cfg).config_hash


def test_tolerance_unmet_exit_3(tmp_path):
    cfg = _write(tmp_path, TINY_FREE)
    code = main(["scaling-sweep", "--config", cfg, "--out", str(tmp_path / "t"),
                 "--tolerance", "1e-9"])
    assert code == H.EXIT_TOLERANCE
    man = json.loads((tmp_path / "t" / "manifest.json").read_text())
    assert man["status"] == "tolerance-unmet" and man["flagged"]


def test_simulate_subcommands(tmp_path):
    cfg = _write(tmp_path, TINY_FREE)
    assert main(["simulate-kawasaki", "--config", cfg, "--out", str(tmp_path / "k")]) == 0
    rows = H.read_csv(tmp_path / "k" / "results.csv")
    assert any(r.estimator == "two_time_covariance@eps=0.5" for r in rows)
    glcfg = _write(tmp_path, _cfg(n=40, extra="T = 1\nsnapshots = 0, 1"), "gl.ini")
    assert main(["simulate-glauber", "--config", glcfg, "--out", str(tmp_path / "g")]) == 0
    assert main(["simulate-glauber", "--config", glcfg, "--mode", "interacting",
                 "--out", str(tmp_path / "g2")]) == H.EXIT_CONFIG


def test_module_entry_point_and_selftest():
    r = subprocess.run([sys.executable, "-m", "contiflow", "harmonic-selftest"],
                       capture_output=True, text=True, timeout=300)
    assert r.returncode == 0
    assert r.stdout.startswith("criterion 1 [PASS]")
