import csv
import io
import math
from pathlib import Path

import pytest

from stokes_sqcc.harness import cli
from stokes_sqcc.harness.config import ConfigError, build_config, parse_grid, read_config_file

GOLDEN = Path(__file__).parent / "data" / "golden_sweep_default.csv"


def _rows(text):
    return list(csv.DictReader(io.StringIO(text)))


def test_parse_grid_forms():
    assert parse_grid("0:2:0.5") == (0.0, 0.5, 1.0, 1.5, 2.0)
    assert parse_grid("1, 3,7") == (1.0, 3.0, 7.0)
    with pytest.raises(ConfigError):
        parse_grid("")
    with pytest.raises(ConfigError):
        parse_grid("5:1:1")


def test_config_file_and_flag_precedence(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nxi = 0.02\nseed = 4\nloss_db = 0:10:5\ndetection = hom\n")
    cfg = build_config(read_config_file(path), {"seed": "9"})
    assert cfg.xi == 0.02
    assert cfg.seed == 9  # flag wins
    assert cfg.loss_db == (0.0, 5.0, 10.0)
    assert cfg.detection == ("homodyne",)
    assert build_config(read_config_file(path)).seed == 4


def test_every_cli_flag_has_config_key():
    known = set(build_config().__dataclass_fields__)
    for key in cli._OVERRIDE_KEYS:
        assert key in known


@pytest.mark.parametrize(
    "text,name",
    [
        ("bogus = 1\n", "bogus"),
        ("eta = 2\n", "eta"),
        ("xi = abc\n", "xi"),
        ("loss_db = 5,3\n", "loss_db"),
        ("block_size = 100\n", "block_size"),
        ("detection = direct\n", "detection"),
    ],
)
def test_invalid_config_names_field(tmp_path, text, name):
    path = tmp_path / "bad.cfg"
    path.write_text(text)
    with pytest.raises(ConfigError, match=name):
        build_config(read_config_file(path))


def test_cli_config_error_exit_code(tmp_path, capsys):
    assert cli.main(["sweep", "--loss-db", ""]) == cli.EXIT_CONFIG
    assert cli.main(["sweep", "--loss-db", "5", "--out", str(tmp_path / "no" / "x.csv")]) == cli.EXIT_CONFIG
    assert "out" in capsys.readouterr().err


def test_cli_numerical_error_exit_code(tmp_path):
    path = tmp_path / "zero_eta.cfg"
    path.write_text("eta = 0\nloss_db = 3\ndetection = het\n")
    assert cli.main(["crosscheck", "--config", str(path), "--shots", "100000"]) == cli.EXIT_NUMERIC


def test_sweep_schema_matches_golden(tmp_path, monkeypatch):
    monkeypatch.delenv("SOURCE_DATE_EPOCH", raising=False)
    out = tmp_path / "sweep.csv"
    assert cli.main(["sweep", "--out", str(out)]) == 0
    text = out.read_bytes()
    assert b"\r" not in text
    got, want = _rows(text.decode()), _rows(GOLDEN.read_text())
    assert list(got[0].keys()) == list(cli.SWEEP_COLUMNS) == list(want[0].keys())
    assert len(got) == len(want)
    for g, w in zip(got, want):
        for col in cli.SWEEP_COLUMNS:
            if col == "git_hash":
                continue
            try:
                gv, wv = float(g[col]), float(w[col])
            except ValueError:
                assert g[col] == w[col]
                continue
            if math.isnan(wv):
                assert math.isnan(gv)
            else:
                assert gv == pytest.approx(wv, rel=1e-9, abs=1e-15), (col, g["loss_db"])


def test_default_sweep_rates_non_increasing():
    rows = _rows(GOLDEN.read_text())
    series = {}
    for r in rows:
        series.setdefault((r["detection"], r["block_size"]), []).append(float(r["rate"]))
    for key, rates in series.items():
        assert all(b <= a + 1e-15 for a, b in zip(rates, rates[1:])), key
    for r in rows:
        assert float(r["rate"]) <= float(r["plob"])


def test_sweep_worker_invariance():
    cfg = build_config(overrides={"loss_db": "0:20:5", "block_size": "inf,1e10"})
    cfg2 = build_config(overrides={"loss_db": "0:20:5", "block_size": "inf,1e10", "workers": "3"})
    assert cli.render_csv(cli.SWEEP_COLUMNS, cli.run_sweep(cfg)) == cli.render_csv(
        cli.SWEEP_COLUMNS, cli.run_sweep(cfg2)
    )


def test_sweep_with_simulation_columns(tmp_path):
    out = tmp_path / "s.csv"
    args = ["sweep", "--loss-db", "10", "--block-size", "inf", "--detection", "het",
            "--simulate", "--shots", "20000", "--out", str(out)]
    assert cli.main(args) == 0
    row = _rows(out.read_text())[0]
    assert float(row["sim_t_hat"]) == pytest.approx(0.1, rel=0.2)


def test_source_date_epoch_timestamp(monkeypatch):
    monkeypatch.setenv("SOURCE_DATE_EPOCH", "0")
    assert cli.provenance_timestamp() == "1970-01-01T00:00:00Z"


def test_gnuplot_script(tmp_path):
    out, gp = tmp_path / "s.csv", tmp_path / "s.gp"
    assert cli.main(["sweep", "--loss-db", "0:10:5", "--out", str(out), "--gnuplot", str(gp)]) == 0
    script = gp.read_text()
    assert script.startswith("# rate vs loss")
    assert str(out) in script and "PLOB" in script


def test_crosscheck_ideal_passes_and_negative_control_fails():
    ideal = build_config(overrides={"loss_db": "0", "xi": "0", "nu_el": "0", "detection": "het", "shots": "100000"})
    rows = cli.run_crosscheck(ideal)
    assert all(abs(r["z"]) < 5 for r in rows)
    bad = build_config(overrides={"loss_db": "0", "detection": "het", "shots": "100000", "inject_xi": "0.5"})
    rows = {r["check"]: r for r in cli.run_crosscheck(bad)}
    assert abs(rows["cm_w"]["z"]) > 5
    assert rows["cm_w"]["result"] == "FAIL"


def test_crosscheck_minimum_shots():
    with pytest.raises(ConfigError):
        cli.run_crosscheck(build_config(overrides={"loss_db": "0"}), 1000)


def test_ber_subcommand(tmp_path):
    out = tmp_path / "ber.csv"
    assert cli.main(["ber", "--loss-db", "3", "--alpha", "3", "--shots", "50000", "--out", str(out)]) == 0
    row = _rows(out.read_text())[0]
    assert abs(float(row["z_direct"])) < 5
    assert list(_rows(out.read_text())[0].keys()) == list(cli.BER_COLUMNS)


def test_rate_and_optics_subcommands(capsys):
    assert cli.main(["rate", "--loss-db", "10", "--detection", "hom", "--block-size", "inf"]) == 0
    assert "rate=" in capsys.readouterr().out
    assert cli.main(["optics-check", "--phi", "10", "20"]) == 0
    assert "pass" in capsys.readouterr().out


@pytest.mark.parametrize(
    "args",
    [
        ["sweep", "--loss-db", "0:20:10"],
        ["crosscheck", "--loss-db", "5", "--shots", "100000"],
        ["ber", "--loss-db", "3", "--alpha", "3", "--shots", "20000"],
        ["rate", "--loss-db", "12"],
        ["optics-check"],
    ],
)
def test_byte_identical_reruns(tmp_path, args):
    a, b = tmp_path / "a.out", tmp_path / "b.out"
    cli.main(args + ["--out", str(a)])
    cli.main(args + ["--out", str(b)])
    assert a.read_bytes() == b.read_bytes()
