import json

import pytest

from landislab.cli import main
from landislab.experiments import ConfigError, bundled_specs, load_spec, parse_spec

SWEEP = """
experiment = "elliptic_bound"
seed = 3

[domain]
kind = "interval"

[grid]
h = 0.01

[sweep]
count = 50
K_max = 3.0
f_max = 2.0
"""


def test_bundled_interval_run(tmp_path, capsys):
    assert main(["run", "elliptic_1d", "--out", str(tmp_path)]) == 0
    rep = json.loads((tmp_path / "bound_report.json").read_text())
    assert rep["pass"] is True
    assert "PASS" in capsys.readouterr().out


def test_negative_spacing_exits_with_config_error(tmp_path, capsys):
    p = tmp_path / "bad.toml"
    p.write_text('experiment = "elliptic_bound"\n\n[grid]\nh = -0.1\n')
    assert main(["run", str(p), "--out", str(tmp_path / "o")]) == 2
    err = capsys.readouterr().err
    assert "line 4" in err and "grid.h" in err


@pytest.mark.parametrize("text, field", [
    ('experiment = "nope"', "experiment"),
    ('experiment = "z_scan"\n[domain]\nkind = "cube"', "domain.kind"),
    ('experiment = "z_scan"\n[grid]\nh = 0.5', "grid.h"),
    ('experiment = "z_scan"\n[coefficients]\nF = "import os"', "coefficients.F"),
    ('experiment = "z_scan"\n[solver]\ntol = 0', "solver.tol"),
    ('experiment = "z_scan"\nseed = -1', "seed"),
    ('experiment = "parabolic_bound"\n[params]\ndt = -1e-3', "params.dt"),
    ('experiment = = 1', "<syntax>"),
])
def test_config_errors_name_the_field(text, field):
    with pytest.raises(ConfigError) as exc:
        parse_spec(text)
    assert exc.value.field_name == field


def test_h_override_validated(tmp_path):
    assert main(["run", "elliptic_1d", "--h-override", "-1", "--out", str(tmp_path)]) == 2


def test_missing_spec(tmp_path):
    assert main(["run", str(tmp_path / "missing.toml")]) == 2


def test_sweep_rows_are_byte_stable(tmp_path):
    p = tmp_path / "sweep.toml"
    p.write_text(SWEEP)
    for d in ("a", "b"):
        assert main(["run", str(p), "--out", str(tmp_path / d)]) == 0
    a = (tmp_path / "a" / "sweep.csv").read_bytes()
    assert a == (tmp_path / "b" / "sweep.csv").read_bytes()
    assert len(a.decode().splitlines()) == 51


def test_threads_do_not_change_output(tmp_path):
    p = tmp_path / "sweep.toml"
    p.write_text(SWEEP.replace("count = 50", "count = 6"))
    main(["run", str(p), "--out", str(tmp_path / "a")])
    main(["run", str(p), "--threads", "2", "--out", str(tmp_path / "b")])
    assert (tmp_path / "a" / "sweep.csv").read_bytes() == (tmp_path / "b" / "sweep.csv").read_bytes()


def test_failing_check_exits_one(tmp_path):
    p = tmp_path / "conv.toml"
    p.write_text('experiment = "convergence_study"\n[grid]\nh = 0.01\n[coefficients]\nF = 1.0\n'
                 '[params]\nexact = "x*(1 - x)/2 + 0.1"\nerror_tol = 1e-6\n')
    assert main(["run", str(p), "--out", str(tmp_path / "o")]) == 1


def test_report_and_list(tmp_path, capsys):
    main(["run", "elliptic_1d", "--out", str(tmp_path / "r")])
    capsys.readouterr()
    assert main(["report", str(tmp_path)]) == 0
    assert "PASS" in capsys.readouterr().out
    assert main(["report", str(tmp_path / "empty")]) == 2
    assert main(["list-experiments"]) == 0
    assert "z_scan" in capsys.readouterr().out


def test_output_env(tmp_path, monkeypatch):
    monkeypatch.setenv("LANDISLAB_OUTPUT", str(tmp_path))
    assert main(["run", "elliptic_1d"]) == 0
    assert (tmp_path / "elliptic_1d" / "report.json").exists()
    assert (tmp_path / "elliptic_1d" / "MANIFEST").exists()


def test_every_bundled_spec_parses():
    specs = bundled_specs()
    assert len(specs) >= 10
    for name in specs:
        assert load_spec(name).name
