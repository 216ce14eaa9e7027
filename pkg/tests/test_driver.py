import csv
import json

import jsonschema
import numpy as np
import pytest

from reggecurv import cli, driver
from reggecurv.driver import (
    CSV_COLUMNS,
    VERIFY_REPORT_SCHEMA,
    ConfigError,
    LevelResult,
    ManufacturedMetric,
    NotAMetric,
    convergence_level,
    load_config,
    observed_rates,
    rates_within,
    run_convergence,
)
from reggecurv.verify import CheckReport

SMALL = {"metric": {"id": "conformal", "params": {"amplitude": 0.2}}, "degrees": [1], "levels": [2, 4]}


@pytest.mark.parametrize("id_", ["conformal", "graph"])
def test_manufactured_metrics_validate(id_):
    mm = ManufacturedMetric.create(id_)
    assert mm.validate() < 1e-12


def test_unknown_metric():
    with pytest.raises(ConfigError):
        ManufacturedMetric.create("sphere")


@pytest.mark.parametrize(
    "doc",
    [
        {},
        {"metric": {"id": "torus"}},
        {"metric": {"id": "conformal"}, "levels": [4]},
        {"metric": {"id": "conformal"}, "degrees": [4]},
        {"metric": {"id": "conformal"}, "colour": "red"},
    ],
)
def test_invalid_configs(doc):
    with pytest.raises(ConfigError):
        load_config(doc)


def test_config_defaults_and_file(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"metric": {"id": "graph"}}))
    cfg = load_config(path)
    assert cfg["levels"] == [4, 8, 16, 32] and cfg["degrees"] == [1, 2]
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.json")


def test_euclidean_metric_has_zero_error():
    mm = ManufacturedMetric.create("conformal", {"amplitude": 0})
    res = convergence_level(mm, 1, 4)
    assert res.E_kappa_dual < 1e-13 and res.E_conn_dual < 1e-13 and res.E_kappa_L2 < 1e-12


def test_observed_rates():
    rs = [LevelResult(1, n, 1.0 / n, 1.0 / n**2, 3.0 / n, 0.0) for n in (4, 8, 16)]
    observed_rates(rs)
    assert np.isnan(rs[0].rate_kappa)
    assert rs[2].rate_kappa == pytest.approx(2.0) and rs[2].rate_conn == pytest.approx(1.0)
    assert rates_within(rs, 1, 0.5, 1.5)["ok"] is False
    assert rates_within(rs, 1, -0.2, 1.3)["ok"] is True


def test_convergence_csv_is_reproducible(tmp_path):
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    run_convergence(SMALL, a)
    run_convergence(SMALL, b)
    assert a.read_bytes() == b.read_bytes()
    rows = list(csv.reader(a.open()))
    assert rows[0] == CSV_COLUMNS and len(rows) == 3
    assert "gnuplot" in (tmp_path / "a.plot.txt").read_text()


def test_level_without_metric_is_skipped(monkeypatch):
    real = driver.convergence_level

    def fake(mm, r, n, *a):
        if n == 2:
            raise NotAMetric("not positive definite")
        return real(mm, r, n, *a)

    monkeypatch.setattr(driver, "convergence_level", fake)
    res = run_convergence({**SMALL, "levels": [2, 4, 8]})
    assert [x.n for x in res] == [4, 8]


def test_cli_config_error(tmp_path, capsys):
    path = tmp_path / "bad.json"
    path.write_text(json.dumps({"metric": {"id": "conformal"}, "levels": [3]}))
    assert cli.main(["converge", "--config", str(path)]) == 2
    assert "config error" in capsys.readouterr().err


def test_cli_converge(tmp_path, capsys):
    path = tmp_path / "c.json"
    path.write_text(json.dumps(SMALL))
    out = tmp_path / "r.csv"
    assert cli.main(["converge", "--config", str(path), "--out", str(out)]) == 0
    assert out.exists() and "E_kappa_dual" in capsys.readouterr().out


def test_cli_verify(tmp_path):
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"metric": {"id": "conformal"}, "seed": 0}))
    report = tmp_path / "report.json"
    assert cli.main(["verify", "--config", str(path), "--report", str(report)]) == 0
    doc = json.loads(report.read_text())
    jsonschema.validate(doc, VERIFY_REPORT_SCHEMA)
    assert doc["passed"]


def test_cli_verify_failure_exit_code(tmp_path, monkeypatch):
    from reggecurv import verify

    monkeypatch.setattr(verify, "run_all", lambda cfg: [CheckReport("broken", False, {})])
    path = tmp_path / "c.json"
    path.write_text(json.dumps({"metric": {"id": "conformal"}}))
    assert cli.main(["verify", "--config", str(path)]) == 1


def test_rates_insensitive_to_enrichment():
    mm = ManufacturedMetric.create("conformal", {"amplitude": 0.2})
    rates = {}
    for enrich in (3, 4):
        res = [convergence_level(mm, 1, n, enrich=enrich) for n in (4, 8)]
        observed_rates(res)
        rates[enrich] = (res[1].rate_kappa, res[1].rate_conn)
    for a, b in zip(rates[3], rates[4]):
        assert abs(a - b) <= 0.1
