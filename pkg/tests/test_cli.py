import json
import math
import os

import pytest

from floquet_polariton.cli import SUBCOMMANDS, main

BASE = """\
[cavity]
delta0 = 0.8
kappa = 0.02
n_modes = 3

[drive]
b_m = 0.9
epsilon = 0.19

[coupling]
lambda_ratio_sq = 0.5

[sweep]
n_omega = 11
n_ratio = 5
n_b_m = 3
b_m_max = 2
n_epsilon = 3
omega = 0.1, 0.5
"""


def write_cfg(tmp_path, text=BASE, name="run.cfg"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def run(tmp_path, cmd, *extra, text=BASE, out="out"):
    cfg = write_cfg(tmp_path, text)
    return main([cmd, "--config", cfg, "--out", str(tmp_path / out), *extra])


def read(tmp_path, name, out="out"):
    return (tmp_path / out / name).read_text()


FAST = sorted(set(SUBCOMMANDS) - {"crossing"})


@pytest.mark.parametrize("cmd", FAST)
def test_subcommand_runs_with_header(tmp_path, cmd):
    assert run(tmp_path, cmd) == 0
    files = [f for f in os.listdir(tmp_path / "out") if f.startswith(cmd + ".")]
    data = [f for f in files if f.endswith((".csv", ".json")) and not f.endswith("timing.json")]
    assert data
    for f in data:
        text = read(tmp_path, f)
        if f.endswith(".csv"):
            assert text.startswith(f"# floquet-polariton 0.1.0 {cmd} config-sha256=")
        else:
            assert json.loads(text)["comment"].startswith("floquet-polariton 0.1.0")
    assert f"{cmd}.resolved.cfg" in files


def test_crossing_subcommand(tmp_path):
    text = BASE.replace("n_modes = 3", "n_modes = 4") + (
        "crossing_pair = 0,2\ncrossing_entry = 2,2\nratio_min = 0.4\nratio_max = 0.7\n"
    )
    text = text.replace("[coupling]\nlambda_ratio_sq = 0.5\n", "")
    assert run(tmp_path, "crossing", text=text) == 0
    rep = json.loads(read(tmp_path, "crossing.json"))
    assert rep["lambda_ratio_sq"] == pytest.approx(0.5631, abs=2e-3)


def test_byte_identical_reruns_and_threads(tmp_path):
    assert run(tmp_path, "sweep-lambda", out="a") == 0
    assert run(tmp_path, "sweep-lambda", out="b") == 0
    assert run(tmp_path, "sweep-lambda", "--threads", "3", out="c") == 0
    a = read(tmp_path, "sweep-lambda.csv", "a")
    assert a == read(tmp_path, "sweep-lambda.csv", "b")
    assert a == read(tmp_path, "sweep-lambda.csv", "c")


def test_eta_atom_default_recorded(tmp_path):
    assert run(tmp_path, "spectrum") == 0
    assert "eta_atom = 1e-06" in read(tmp_path, "spectrum.resolved.cfg")


def test_unknown_key_reports_line(tmp_path, capsys):
    text = BASE.replace("kappa = 0.02", "kappa = 0.02\nkapa = 0.03")
    assert run(tmp_path, "spectrum", text=text) == 1
    err = capsys.readouterr().err
    assert "kapa" in err and "run.cfg:4:" in err


def test_negative_kappa_names_key(tmp_path, capsys):
    assert run(tmp_path, "spectrum", text=BASE.replace("kappa = 0.02", "kappa = -0.02")) == 1
    assert "kappa" in capsys.readouterr().err


def test_bad_flags(tmp_path):
    assert run(tmp_path, "spectrum", "--entry", "0,7") == 1
    assert run(tmp_path, "spectrum", "--threads", "0") == 1


def test_numerical_failure_exit_code(tmp_path, capsys):
    # lossless, unbroadened, uncoupled cavity sampled exactly on its resonance
    text = BASE.replace("kappa = 0.02", "kappa = 0.0").replace("lambda_ratio_sq = 0.5", "lambda = 0.0")
    text += "omega_min = 0.0\nomega_max = 0.8\nn_omega = 5\n[medium]\neta_atom = 0.0\n"
    text = text.replace("n_omega = 11\n", "")
    assert run(tmp_path, "spectrum", text=text) == 2
    assert "spectrum" in capsys.readouterr().err


def test_poles_at_zero_coupling(tmp_path):
    text = BASE.replace("lambda_ratio_sq = 0.5", "lambda = 0.0")
    assert run(tmp_path, "poles", text=text) == 0
    rep = json.loads(read(tmp_path, "poles.json"))
    cavity = sorted((p["re"], p["im"]) for p in rep["poles"] if p["mode"] is not None)
    expected = sorted((s * d, -0.02) for d in (0.8, 0.61, 0.42) for s in (1, -1))
    assert len(cavity) == 6
    for (re, im), (er, ei) in zip(cavity, expected):
        assert math.isclose(re, er, abs_tol=1e-12) and math.isclose(im, ei, abs_tol=1e-12)


def test_renormalize_flag_changes_output(tmp_path):
    assert run(tmp_path, "lambda-c", out="a") == 0
    assert run(tmp_path, "lambda-c", "--renormalize", "true", out="b") == 0
    assert "renormalize = true" in read(tmp_path, "lambda-c.resolved.cfg", "b")
    assert read(tmp_path, "lambda-c.csv", "a") != read(tmp_path, "lambda-c.csv", "b")


@pytest.mark.parametrize("name", ["crossing_map.cfg", "lambda_c_vs_depth.cfg", "phase_diagram.cfg"])
def test_shipped_configs_parse(name):
    from floquet_polariton.config import parse_config

    root = os.path.join(os.path.dirname(__file__), os.pardir, "configs")
    cfg = parse_config(os.path.join(root, name))
    assert cfg["cavity"]["n_modes"] >= 4
    assert cfg.sha256() == parse_config(os.path.join(root, name)).sha256()
