import json

import numpy as np
import pytest

from nonlocal_decay.bounds import constants_from_proof, unit_ball_symbol
from nonlocal_decay.cli import OUT_ENV, catalog_names, load_config, main
from nonlocal_decay.errors import ConfigError
from nonlocal_decay.evolution import TimeSeries
from nonlocal_decay.grid import GridSpec
from nonlocal_decay.kernels import make_standard_kernel, second_moment_normalization

EXPECTED = {
    "comparison_ode", "constants_1d", "constants_2d", "dispersal_box_1d", "dk_decay_box_1d",
    "dk_inequality_1d", "general_kernel_homogeneous_1d", "gradient_inequality_2d",
    "main_inequality_1d", "rescaled_box_1d", "source_cubic_1d", "thm13_box_1d",
}

SMALL = """\
pipeline = "constants"
[grid]
dim = 1
L = 16.0
n = 256
[constants]
p = 3
k = 1
"""


def test_catalog_complete():
    assert set(catalog_names()) == EXPECTED


@pytest.mark.parametrize("name", sorted(EXPECTED))
def test_catalog_entry_passes(name, catalog_run):
    code, out = catalog_run[name]
    assert code == 0
    summary = json.loads((out / "summary.json").read_text())
    assert summary["passed"] and summary["checks"] == {k: True for k in summary["checks"]}


def test_catalog_subcommand(capsys):
    assert main(["catalog"]) == 0
    assert set(capsys.readouterr().out.split()) == EXPECTED
    assert main(["catalog", "constants_1d"]) == 0
    assert 'pipeline = "constants"' in capsys.readouterr().out
    assert main(["catalog", "nope"]) == 2


def _write(tmp_path, text, name="c.toml"):
    p = tmp_path / name
    p.write_text(text)
    return str(p)


def test_malformed_config_reports_line(tmp_path, capsys):
    path = _write(tmp_path, SMALL.replace("n = 256", "n = = 256"))
    assert main(["constants", "--config", path, "--out", str(tmp_path / "o")]) == 2
    assert "line 5:" in capsys.readouterr().err


@pytest.mark.parametrize("old,new,line", [
    ("n = 256", "n = 256\nbogus = 1", 6),
    ("[constants]", "[nonsense]\nx = 1\n[constants]", 6),
    ("p = 3", 'p = "three"', 7),
    ("n = 256", "n = 250", 5),
])
def test_bad_config_exit_2(tmp_path, capsys, old, new, line):
    path = _write(tmp_path, SMALL.replace(old, new))
    assert main(["run", "--config", path, "--out", str(tmp_path / "o")]) == 2
    assert f"line {line}:" in capsys.readouterr().err


def test_pipeline_mismatch(tmp_path):
    path = _write(tmp_path, SMALL)
    assert main(["simulate", "--config", path, "--out", str(tmp_path / "o")]) == 2
    assert main(["run", "--config", "no_such_entry", "--out", str(tmp_path / "o")]) == 2


def test_load_config_defaults(tmp_path):
    cfg = load_config(_write(tmp_path, SMALL))
    assert cfg["grid"]["L"] == 16.0 and isinstance(cfg["grid"]["L"], float)
    assert cfg["kernel"]["kind"] == "box"
    with pytest.raises(ConfigError):
        load_config(_write(tmp_path, "[grid]\ndim = true\n"))


def test_constants_json_matches_library(tmp_path, capsys):
    out = tmp_path / "o"
    assert main(["constants", "--config", _write(tmp_path, SMALL), "--out", str(out)]) == 0
    data = json.loads((out / "constants.json").read_text())
    grid = GridSpec(1, 16.0, 256)
    J = make_standard_kernel("box", 1.0, 0.5, grid)  # the config builder normalises to unit mass
    led = constants_from_proof(1, 3.0, 1.0, unit_ball_symbol(grid, 1.0), second_moment_normalization(J))
    for key, val in led.as_dict().items():
        assert data["ledger"][key]["value"] == pytest.approx(val, rel=1e-15, abs=0)
        assert data["ledger"][key]["provenance"] or key in ("p", "k", "N")
    assert '"C_main"' in capsys.readouterr().out


def test_thm13_envelope_columns(catalog_run):
    _, out = catalog_run["thm13_box_1d"]
    s = TimeSeries.from_csv(out / "timeseries.csv")
    summary = json.loads((out / "summary.json").read_text())["details"]
    keep = s.times <= summary["valid_until"]
    for obs, env in [("lp2", "env_p2"), ("lp3", "env_p3"), ("dk1", "env_dk1")]:
        assert np.all(s[obs][keep] <= s[env][keep])
    assert summary["slopes"]["lp2"] <= -0.4


def test_seed_out_and_env(tmp_path, monkeypatch):
    cfg = _write(tmp_path, SMALL.replace('pipeline = "constants"', 'pipeline = "constants"\nseed = 3'))
    monkeypatch.setenv(OUT_ENV, str(tmp_path / "from_env"))
    assert main(["run", "--config", cfg]) == 0
    assert json.loads((tmp_path / "from_env" / "summary.json").read_text())["seed"] == 3
    assert main(["run", "--config", cfg, "--seed", "9", "--threads", "4", "--out", str(tmp_path / "flag")]) == 0
    rec = json.loads((tmp_path / "flag" / "summary.json").read_text())
    assert rec["seed"] == 9 and rec["threads"] == 4
    assert main(["run", "--config", cfg, "--seed", "-1", "--out", str(tmp_path / "neg")]) == 2


def test_rerun_byte_identical(tmp_path):
    for name in ("comparison_ode", "main_inequality_1d"):
        a, b = tmp_path / f"{name}_a", tmp_path / f"{name}_b"
        assert main(["run", "--config", name, "--out", str(a)]) == 0
        assert main(["run", "--config", name, "--out", str(b)]) == 0
        files = sorted(p.name for p in a.iterdir())
        assert files == sorted(p.name for p in b.iterdir())
        for f in files:
            assert (a / f).read_bytes() == (b / f).read_bytes(), f


def test_seed_changes_draws(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    main(["run", "--config", "comparison_ode", "--out", str(a)])
    main(["run", "--config", "comparison_ode", "--seed", "7", "--out", str(b)])
    assert (a / "summary.json").read_bytes() != (b / "summary.json").read_bytes()
