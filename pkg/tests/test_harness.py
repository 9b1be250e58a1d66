import json
import os

import numpy as np
import pytest

import conewidth as cw
from conewidth.errors import ConfigError
from conewidth.harness import RunConfig, cli_entry


def _write(tmp_path, name, data):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


def test_config_requires_experiment():
    with pytest.raises(ConfigError) as err:
        RunConfig.from_dict({})
    assert "experiment" in err.value.fields


def test_config_unknown_experiment():
    with pytest.raises(ConfigError):
        RunConfig.from_dict({"experiment": "table9"})


def test_config_missing_fields_reported():
    with pytest.raises(ConfigError) as err:
        RunConfig.from_dict({"experiment": "table1"})
    assert set(err.value.fields) == {"n", "s_list"}


def test_config_hash_ignores_output_path():
    a = RunConfig.from_dict({"experiment": "table1", "n": 10, "s_list": [1],
                             "out": "a.csv"})
    b = RunConfig.from_dict({"experiment": "table1", "n": 10, "s_list": [1],
                             "out": "b.csv"})
    assert a.hash() == b.hash()


def test_cli_unknown_subcommand_exits_2(capsys):
    assert cli_entry(["frobnicate"]) == 2


def test_cli_no_subcommand_exits_2():
    assert cli_entry([]) == 2


def test_cli_table_requires_table_experiment(tmp_path):
    cfg = _write(tmp_path, "c.json", {"experiment": "fig1", "n": 10, "s_list": [1]})
    assert cli_entry(["table", "--config", cfg]) == 2


def test_decomposability_default_example(tmp_path, capsys):
    out = str(tmp_path / "d.csv")
    assert cli_entry(["decomposability", "--out", out]) == 0
    text = capsys.readouterr().out
    assert "-1.4" in text and "holds = false" in text
    lines = open(out).read().splitlines()
    assert lines[0].startswith("# conewidth")
    assert lines[2].startswith("holds,")


def test_decomposability_degenerate_rows_exit_3(tmp_path):
    cfg = _write(tmp_path, "d.json", {
        "omega": [[1.0, 1.0], [2.0, 2.0], [1.0, 2.0]],
        "x": [2.0, -1.0], "S": [2], "out": str(tmp_path / "d.csv")})
    assert cli_entry(["decomposability", "--config", cfg]) == 3


def test_bounds_cli_deterministic_across_threads(tmp_path):
    cfg = {"experiment": "bounds", "seed": 5, "samples": 300,
           "instance": {"family": "l1", "n": 48, "s": 3}}
    path = _write(tmp_path, "b.json", cfg)
    outs = []
    for threads in (1, 2):
        out = str(tmp_path / f"b{threads}.csv")
        assert cli_entry(["bounds", "--config", path, "--threads", str(threads),
                          "--out", out]) == 0
        outs.append(open(out, "rb").read())
    assert outs[0] == outs[1]


def test_bounds_cli_seed_override_changes_hash(tmp_path):
    cfg = {"experiment": "bounds", "samples": 200,
           "instance": {"family": "l1", "n": 32, "s": 2}}
    path = _write(tmp_path, "b.json", cfg)
    out1, out2 = str(tmp_path / "s1.csv"), str(tmp_path / "s2.csv")
    assert cli_entry(["bounds", "--config", path, "--seed", "1", "--out", out1]) == 0
    assert cli_entry(["bounds", "--config", path, "--seed", "2", "--out", out2]) == 0
    assert open(out1).read() != open(out2).read()


def test_table1_small_run(tmp_path):
    cfg = _write(tmp_path, "t.json", {
        "experiment": "table1", "n": 100, "s_list": [2, 5], "samples": 600,
        "seed": 3, "out": str(tmp_path / "t1.csv")})
    assert cli_entry(["table", "--config", cfg]) == 0
    lines = open(tmp_path / "t1.csv").read().splitlines()
    header = lines[2].split(",")
    assert header[:5] == ["U_delta", "delta", "E_delta_over_n", "Ep_over_n", "s"]
    assert len(lines) == 5  # 2 comments + header + 2 rows
    row = dict(zip(header, lines[3].split(",")))
    closed, _ = cw.u_delta_l1_closed_form(100, 2)
    assert float(row["U_delta"]) == pytest.approx(closed, rel=0.05)


def test_figure1_small_run(tmp_path):
    cfg = _write(tmp_path, "f.json", {
        "experiment": "fig1", "n": 100000, "s_list": [1, 2],
        "out": str(tmp_path / "f1.csv")})
    assert cli_entry(["figure", "--config", cfg]) == 0
    rows = [l.split(",") for l in open(tmp_path / "f1.csv").read().splitlines()[3:]]
    for r in rows:
        assert float(r[2]) < float(r[1])  # new bound below prior at tiny s


def test_sweep_cli_writes_csv_and_summary(tmp_path):
    cfg = _write(tmp_path, "s.json", {
        "experiment": "sweep", "seed": 4, "samples": 800,
        "instance": {"family": "l1", "n": 40, "s": 3},
        "m_grid": {"start": 8, "stop": 36, "step": 7}, "trials_per_m": 10,
        "out": str(tmp_path / "sweep.csv")})
    assert cli_entry(["sweep", "--config", cfg]) == 0
    lines = open(tmp_path / "sweep.csv").read().splitlines()
    assert lines[2] == "m,successes,trials"
    summary = json.load(open(tmp_path / "sweep.json"))
    assert {"m50", "delta_hat", "band_low", "band_high"} <= set(summary)


def test_beta_cli(tmp_path):
    cfg = _write(tmp_path, "beta.json", {
        "experiment": "beta", "seed": 2,
        "instance": {"family": "analysis", "generator": "cosparse", "s": 3,
                     "operator": {"kind": "random1", "p": 16, "n": 32, "r": 16}},
        "out": str(tmp_path / "beta.csv")})
    assert cli_entry(["beta", "--config", cfg]) == 0
    lines = open(tmp_path / "beta.csv").read().splitlines()
    row = dict(zip(lines[2].split(","), lines[3].split(",")))
    assert float(row["beta"]) == pytest.approx(1.0, abs=1e-8)


def test_environment_thread_fallback(tmp_path, monkeypatch):
    monkeypatch.setenv("CONEWIDTH_THREADS", "2")
    cfg = {"experiment": "bounds", "seed": 5, "samples": 200,
           "instance": {"family": "l1", "n": 32, "s": 2}}
    path = _write(tmp_path, "b.json", cfg)
    out = str(tmp_path / "env.csv")
    assert cli_entry(["bounds", "--config", path, "--out", out]) == 0
    assert os.path.exists(out)
