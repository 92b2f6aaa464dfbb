import json
import math

import pytest

from bnsmc import cli, tables
from bnsmc.config import CSV_HEADER, RunConfig, read_csv_rows
from bnsmc.engines import WORKERS_ENV
from bnsmc.model import paper_params


@pytest.fixture(autouse=True)
def _no_env_workers(monkeypatch):
    monkeypatch.delenv(WORKERS_ENV, raising=False)


def _sim(tmp_path, name, *extra):
    out = tmp_path / name
    code = cli.main(["simulate", "--steps", "20", "--paths", "500", "--seed", "3",
                     "--out", str(out), *extra])
    return code, out


def test_validate_ok(capsys):
    assert cli.main(["validate"]) == 0
    out = capsys.readouterr().out
    assert "condition 1" in out and "valid" in out


def test_validate_violation(capsys):
    assert cli.main(["validate", "--b", "2.0"]) == 2
    assert cli.main(["validate", "--alpha", "-1"]) == 2
    assert "invalid parameters" in capsys.readouterr().err


def test_validate_bad_domain():
    assert cli.main(["validate", "--lambda", "-1"]) == 2
    assert cli.main(["validate", "--rho", "0.5"]) == 2


def test_malformed_config(tmp_path, capsys):
    cfg = tmp_path / "bad.ini"
    cfg.write_text("[model]\nalpha = lots\n")
    assert cli.main(["validate", "--config", str(cfg)]) == 1
    assert "model.alpha" in capsys.readouterr().err
    cfg.write_text("[model]\ngamma = 1\n")
    assert cli.main(["validate", "--config", str(cfg)]) == 1
    cfg.write_text("[extra]\nx = 1\n")
    assert cli.main(["validate", "--config", str(cfg)]) == 1
    assert cli.main(["validate", "--config", str(tmp_path / "missing.ini")]) == 1


def test_usage_errors():
    with pytest.raises(SystemExit) as ei:
        cli.main(["simulate", "--algo", "algo9"])
    assert ei.value.code == 1
    with pytest.raises(SystemExit) as ei:
        cli.main([])
    assert ei.value.code == 1


def test_config_file_and_flag_precedence(tmp_path):
    cfg = tmp_path / "run.ini"
    out = tmp_path / "from_file.csv"
    cfg.write_text(f"[model]\nalpha = 1\n\n[run]\nsteps = 10\npaths = 100\nseed = 9\n"
                   f"algo = algo1\nout = {out}\nworkers = 2\n")
    assert cli.main(["simulate", "--config", str(cfg), "--paths", "50"]) == 0
    row = read_csv_rows(out.read_text())[0]
    assert (row["alpha"], row["M"], row["L"], row["seed"]) == ("1.0", "10", "50", "9")


def test_simulate_csv_layout(tmp_path):
    code, out = _sim(tmp_path, "a.csv", "--paths", "2")
    assert code == 0
    lines = out.read_text().splitlines()
    assert lines[0] == ",".join(CSV_HEADER)
    assert len(lines) == 2
    row = read_csv_rows(out.read_text())[0]
    assert row["time_sec"] == "" and row["L"] == "2"
    assert math.isfinite(float(row["error_terminal_pct"]))


def test_simulate_byte_identical(tmp_path, monkeypatch):
    _, a = _sim(tmp_path, "a.csv")
    _, b = _sim(tmp_path, "b.csv", "--workers", "3")
    monkeypatch.setenv(WORKERS_ENV, "auto")
    _, c = _sim(tmp_path, "c.csv")
    assert a.read_bytes() == b.read_bytes() == c.read_bytes()
    _, d = _sim(tmp_path, "d.csv", "--seed", "4")
    assert d.read_bytes() != a.read_bytes()


def test_bad_workers(tmp_path, monkeypatch):
    assert _sim(tmp_path, "x.csv", "--workers", "0")[0] == 1
    assert _sim(tmp_path, "x.csv", "--workers", "many")[0] == 1
    monkeypatch.setenv(WORKERS_ENV, "nope")
    assert _sim(tmp_path, "x.csv")[0] == 1


def test_simulate_timing(tmp_path):
    _, out = _sim(tmp_path, "t.csv", "--timing")
    assert float(read_csv_rows(out.read_text())[0]["time_sec"]) > 0


def test_simulate_json(tmp_path):
    code, out = _sim(tmp_path, "r.json", "--format", "json", "--algo", "algo1")
    assert code == 0
    reps = json.loads(out.read_text())
    assert [r["estimand"] for r in reps] == ["terminal_mean", "asian_mean"]
    assert all(r["method"] == "algo1" and r["wall_time_sec"] is None for r in reps)


def test_simulate_unwritable_out():
    assert cli.main(["simulate", "--paths", "10", "--out", "/nonexistent/dir/x.csv"]) == 1


def test_negative_alpha_engine_exit():
    assert cli.main(["simulate", "--alpha", "-0.001", "--paths", "10", "--steps", "5"]) == 3


def test_price(tmp_path, capsys):
    out = tmp_path / "p.json"
    assert cli.main(["price", "--payoff", "asian_call", "--strike", "470", "--paths", "400",
                     "--steps", "10", "--out", str(out)]) == 0
    rep = json.loads(out.read_text())[0]
    assert rep["estimand"] == "asian_call" and rep["strike"] == 470.0
    assert rep["point"] >= 0 and rep["stderr"] > 0
    assert "asian_call" in capsys.readouterr().out
    # strike defaults to S0
    assert cli.main(["price", "--paths", "50", "--steps", "5", "--out", str(out)]) == 0
    assert json.loads(out.read_text())[0]["strike"] == paper_params().S0
    assert cli.main(["price", "--strike", "-1", "--paths", "50", "--steps", "5"]) == 2
    with pytest.raises(SystemExit):
        cli.main(["price", "--format", "csv"])


def test_reproduce_tables(tmp_path, capsys):
    assert cli.main(["reproduce-tables", "--scale", "1000", "--out", str(tmp_path)]) == 0
    t1 = read_csv_rows((tmp_path / "table1.csv").read_text())
    t2 = read_csv_rows((tmp_path / "table2.csv").read_text())
    assert len(t1) == 5 and len(t2) == 8
    assert [r["alpha"] for r in t2] == [repr(float(s.alpha)) for s in tables.TABLE2]
    assert t1[-1]["L"] == "10" and t1[0]["L"] == "100"
    assert all(r["time_sec"] == "" for r in t1 + t2)
    assert "EXPECTED_DIVERGENCE" in capsys.readouterr().out


def test_reproduce_tables_one_table(tmp_path):
    assert cli.main(["reproduce-tables", "--tables", "2", "--scale", "1000",
                     "--out", str(tmp_path)]) == 0
    assert (tmp_path / "table2.csv").exists() and not (tmp_path / "table1.csv").exists()
    assert cli.main(["reproduce-tables", "--scale", "0.5", "--out", str(tmp_path)]) == 1


def test_stderr_scales_with_paths():
    spec = tables.TABLE2[0]
    a, b = (tables.run_table([spec], seed=1, scale=s, workers="auto")[0].row for s in (1, 100))
    ratio = b.stderr_terminal / a.stderr_terminal
    assert ratio == pytest.approx(10, rel=0.1)


def test_failed_row_recorded():
    spec = tables.TableSpec("algo2", -1.0, 10, 100, 0.0, 0.0, 0.0)
    out = tables.run_table([spec, tables.TABLE2[0]], seed=1, scale=1000)
    bad, good = out
    assert bad.note.startswith("FAILED")
    assert math.isnan(bad.row.error_terminal_pct)
    assert good.note == "" and math.isfinite(good.row.error_terminal_pct)


def test_scaled_paths():
    assert tables.scaled_paths(100_000, 1) == 100_000
    assert tables.scaled_paths(10_000, 1000) == 10
    assert tables.scaled_paths(10, 1000) == 2
    with pytest.raises(ValueError):
        tables.scaled_paths(10, 0.5)


def test_oracle_check(capsys):
    assert cli.main(["oracle-check"]) == 0
    assert "all checks passed" in capsys.readouterr().out
    assert cli.main(["oracle-check", "--perturb", "ar_mass_1=1e-6"]) == 4
    assert "ar_mass_1" in capsys.readouterr().err
    assert cli.main(["oracle-check", "--perturb", "nothing=1e-6"]) == 1
    assert cli.main(["oracle-check", "--perturb", "ar_mass_1"]) == 1


def test_oracle_check_without_leverage(capsys):
    assert cli.main(["oracle-check", "--rho", "0"]) == 0
    out = capsys.readouterr().out
    assert "acceptance" not in out and "ar_mass_1" in out


def test_run_config_checks():
    from bnsmc.config import ConfigError
    for bad in (dict(M=0), dict(L=1), dict(seed=-1), dict(algo="x"), dict(format="xml"),
                dict(estimands=("vega",)), dict(workers=0)):
        with pytest.raises(ConfigError):
            RunConfig(**bad).check()
