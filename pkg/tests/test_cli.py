import configparser
import json
import math

import pytest

from onoff_qcd import bellman, cli
from onoff_qcd import montecarlo as mc


def _ini(tmp_path, text, name="c.ini"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


SIM = """
[model]
theta = 0.75
[prior]
rho = 0.05
[policy]
kind = two-threshold
a = 4.0
b = -1.0
[montecarlo]
n_trials = 4000
"""


def test_config_reference_round_trip(capsys, tmp_path):
    assert cli.main(["config-reference"]) == 0
    text = capsys.readouterr().out
    cp = configparser.ConfigParser(interpolation=None)
    cp.read_string(text)
    assert set(cp.sections()) == set(cli.SCHEMA)
    cfg = cli.load_config(_ini(tmp_path, text))
    assert cfg == cli.load_config(None)
    assert cli.config_hash(cfg) == cli.config_hash(cli.load_config(None))


def test_unknown_keys_rejected(tmp_path, capsys):
    assert cli.main(["simulate", "--config", _ini(tmp_path, "[nope]\nx = 1\n")]) == cli.EXIT_USAGE
    assert cli.main(["simulate", "--config", _ini(tmp_path, "[model]\nthetta = 1\n")]) == cli.EXIT_USAGE
    assert cli.main(["simulate", "--config", _ini(tmp_path, "[model]\ntheta = abc\n")]) == cli.EXIT_USAGE
    assert cli.main(["simulate", "--config", str(tmp_path / "missing.ini")]) == cli.EXIT_USAGE
    assert cli.main(["simulate", "--seed", str(2 ** 64)]) == cli.EXIT_USAGE


def test_simulate_is_byte_reproducible(tmp_path):
    cfg = _ini(tmp_path, SIM)
    outs = []
    for d in ("r1", "r2"):
        assert cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / d)]) == 0
        outs.append(((tmp_path / d / "metrics.csv").read_bytes(),
                     (tmp_path / d / "summary.json").read_bytes()))
    # the output directory is excluded from the hash and echoed only in the JSON config
    assert outs[0][0] == outs[1][0]
    s1, s2 = (json.loads(o[1]) for o in outs)
    assert s1["metrics"] == s2["metrics"] and s1["config_hash"] == s2["config_hash"]
    assert cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "r1")]) == 0
    assert (tmp_path / "r1" / "summary.json").read_bytes() == outs[0][1]
    header = outs[0][0].decode().splitlines()[0]
    h = cli.config_hash(cli.load_config(cfg))
    assert header == f"# onoff-qcd simulate config_hash={h}"
    assert outs[0][0].decode().splitlines()[2].startswith(h)


def test_seed_and_trials_flags_change_hash(tmp_path):
    cfg = _ini(tmp_path, SIM)
    cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "a")])
    cli.main(["simulate", "--config", cfg, "--out", str(tmp_path / "b"), "--seed", "17", "--trials", "5000"])
    ja = json.loads((tmp_path / "a" / "summary.json").read_text())
    jb = json.loads((tmp_path / "b" / "summary.json").read_text())
    assert ja["config_hash"] != jb["config_hash"]
    assert jb["config"]["montecarlo"]["master_seed"] == 17
    assert jb["metrics"]["n_trials"] == 5000


def test_simulate_b_zero_matches_shiryaev(tmp_path):
    two = SIM.replace("b = -1.0", "b = -inf")
    shir = SIM.replace("kind = two-threshold", "kind = shiryaev")
    cli.main(["simulate", "--config", _ini(tmp_path, two, "t.ini"), "--out", str(tmp_path / "t")])
    cli.main(["simulate", "--config", _ini(tmp_path, shir, "s.ini"), "--out", str(tmp_path / "s")])
    mt = json.loads((tmp_path / "t" / "summary.json").read_text())["metrics"]
    ms = json.loads((tmp_path / "s" / "summary.json").read_text())["metrics"]
    assert mt == ms
    rows = [(tmp_path / d / "metrics.csv").read_text().splitlines()[2].split(",")[2:] for d in "ts"]
    assert rows[0] == rows[1]


def test_reliability_exit_code(tmp_path, monkeypatch):
    monkeypatch.setattr(mc, "TRUNCATION_WARN", -1.0)
    with pytest.warns(mc.ReliabilityWarning):
        rc = cli.main(["simulate", "--config", _ini(tmp_path, SIM), "--out", str(tmp_path)])
    assert rc == cli.EXIT_RELIABILITY


def test_calibration_exit_code(tmp_path):
    text = SIM.replace("rho = 0.05", "rho = 0.3") + "[targets]\nano_percent = 85\n"
    rc = cli.main(["calibrate-b", "--config", _ini(tmp_path, text), "--out", str(tmp_path)])
    assert rc == cli.EXIT_CALIBRATION


def test_calibrate_a_writes_outputs(tmp_path, capsys):
    text = SIM + "[targets]\nalpha = 0.01\n"
    rc = cli.main(["calibrate-a", "--config", _ini(tmp_path, text), "--out", str(tmp_path)])
    assert rc == 0
    d = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert d["converged"] and abs(d["achieved"] / 0.01 - 1) <= 0.02
    assert (tmp_path / "calibrate_a.csv").exists()


BELL = """
[model]
theta = 0.75
[prior]
rho = 0.05
[bellman]
grid_size = 300
iters = 300
quad_nodes = 48
lambda_f = 50
lambda_e = {le}
"""


def test_bellman_lambda_e_zero(tmp_path, capsys):
    rc = cli.main(["bellman", "--config", _ini(tmp_path, BELL.format(le=0)), "--out", str(tmp_path)])
    assert rc == 0
    st = json.loads((tmp_path / "structure.json").read_text())["structure"]
    assert st["classification"] == "TwoThreshold" and st["B"] == 0.0
    assert (tmp_path / "grid.csv").read_text().startswith("# onoff-qcd bellman config_hash=")


def test_bellman_structure_exit_code(tmp_path, monkeypatch):
    def boom(grid):
        raise bellman.StructureError("no stopping region")
    monkeypatch.setattr(bellman, "extract_structure", boom)
    rc = cli.main(["bellman", "--config", _ini(tmp_path, BELL.format(le=0.5)), "--out", str(tmp_path)])
    assert rc == cli.EXIT_STRUCTURE


def test_simulate_dp_policy(tmp_path):
    text = BELL.format(le=0.5) + "[policy]\nkind = dp\n[montecarlo]\nn_trials = 1000\n"
    assert cli.main(["simulate", "--config", _ini(tmp_path, text), "--out", str(tmp_path)]) == 0
    row = (tmp_path / "metrics.csv").read_text().splitlines()[2]
    assert ",tabulated-dp," in row


def test_approx_single_point(tmp_path, capsys):
    text = """
[model]
theta = 0.75
[prior]
rho = 0.01
[policy]
a = 9.0
b = -2.0
[approx]
n_crossings = 100000
n_eta = 20000
n_wald = 20000
"""
    assert cli.main(["approx", "--config", _ini(tmp_path, text), "--out", str(tmp_path)]) == 0
    d = json.loads(capsys.readouterr().out.strip().splitlines()[-1])
    assert d["pfa_approx"] == pytest.approx(7.964e-5, rel=0.03)
    header = (tmp_path / "approx.csv").read_text().splitlines()[1].split(",")
    assert list(cli.APPROX_COLUMNS) == header


def test_approx_table_ii(tmp_path, capsys):
    text = "[approx]\ntable = II\nn_crossings = 100000\nn_eta = 20000\nn_wald = 20000\n"
    assert cli.main(["approx", "--config", _ini(tmp_path, text), "--out", str(tmp_path)]) == 0
    lines = capsys.readouterr().out.strip().splitlines()
    assert len(lines) == 6
    from onoff_qcd.tables import TABLE_II
    for line, row in zip(lines, TABLE_II):
        assert json.loads(line)["pfa_approx"] == pytest.approx(row.values["pfa_analysis"], rel=0.03)


def test_replicate_tables_analysis_only(tmp_path, capsys):
    text = ("[approx]\nn_crossings = 100000\nn_eta = 20000\nn_wald = 20000\n"
            "[replicate]\ntables = III\nsimulate = false\n")
    assert cli.main(["replicate-tables", "--config", _ini(tmp_path, text), "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out.splitlines()
    assert len(out) == 5 and all(l.startswith("PASS") for l in out)
    rep = json.loads((tmp_path / "replication.json").read_text())
    assert rep["n_failed"] == 0


def test_replicate_tables_failure_exit(tmp_path, monkeypatch):
    from onoff_qcd import tables
    rows = [tables.Row(0.75, 0.01, 4.6, 0.0, {"pfa_sim": 1.0, "pfa_analysis": 1.0})]
    monkeypatch.setitem(tables.TABLES, "III", rows)
    text = ("[approx]\nn_crossings = 100000\nn_eta = 20000\nn_wald = 20000\n"
            "[replicate]\ntables = III\nsimulate = false\n")
    rc = cli.main(["replicate-tables", "--config", _ini(tmp_path, text), "--out", str(tmp_path)])
    assert rc == cli.EXIT_REPLICATION


def test_unknown_table(tmp_path):
    text = "[approx]\ntable = IX\n"
    assert cli.main(["approx", "--config", _ini(tmp_path, text), "--out", str(tmp_path)]) == cli.EXIT_USAGE


def test_compare_fractional_small(tmp_path):
    text = """
[model]
theta = 0.75
[targets]
alpha = 1e-2
ano_percent = 50
[experiment]
rho_list = 0.1
[montecarlo]
n_trials = 5000
"""
    rc = cli.main(["compare-fractional", "--config", _ini(tmp_path, text), "--out", str(tmp_path)])
    assert rc == 0
    rows = json.loads((tmp_path / "compare_fractional.json").read_text())["rows"]
    assert len(rows) == 1 and rows[0]["eps"] < 1.0 and rows[0]["converged"]
