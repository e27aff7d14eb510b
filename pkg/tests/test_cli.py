import json

import numpy as np
import pytest

from tunneldecay.cli import main
from tunneldecay.config import ScenarioConfig, bundled_config, bundled_names, load_config
from tunneldecay.errors import ConfigError
from tunneldecay.runner import POLES_HEADER, SERIES_HEADER, run_scenario, run_sweep


def _write(tmp_path, data, name="cfg.json"):
    p = tmp_path / name
    p.write_text(json.dumps(data))
    return p


def test_bundled_configs_round_trip():
    names = bundled_names()
    assert {f"table1_row{i}" for i in range(1, 8)} <= set(names)
    assert {f"table2_row{i}" for i in range(1, 4)} <= set(names)
    for n in names:
        cfg = bundled_config(n)
        again = ScenarioConfig.from_dict(json.loads(cfg.dumps()))
        assert again == cfg and again.dumps() == cfg.dumps()


def test_unknown_keys_rejected(tmp_path, capsys):
    data = bundled_config("table1_row1").to_dict()
    data["colour"] = "blue"
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(data)
    data = bundled_config("table1_row1").to_dict()
    data["search"]["bogus"] = 1
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(data)
    data = bundled_config("table1_row1").to_dict()
    data["params"]["B_grad"] = 3.0
    assert main(["run", "--config", str(_write(tmp_path, data)), "--out", str(tmp_path / "o")]) == 2
    assert not (tmp_path / "o").exists() or not any((tmp_path / "o").iterdir())


def test_nonpositive_parameters_rejected():
    data = bundled_config("table1_row1").to_dict()
    data["params"]["b"] = -0.1
    with pytest.raises(ConfigError):
        ScenarioConfig.from_dict(data)


def test_run_outputs_are_deterministic(tmp_path, capsys):
    a, b = tmp_path / "a", tmp_path / "b"
    assert main(["run", "--config", "table1_row5", "--out", str(a)]) == 0
    assert main(["run", "--config", "table1_row5", "--out", str(b)]) == 0
    files = sorted(p.name for p in a.iterdir())
    assert files == ["poles.csv", "report.json", "series.csv"]
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes()
    assert (a / "series.csv").read_text().splitlines()[0] == SERIES_HEADER
    assert SERIES_HEADER == "t_ms,t_over_tau,P_full,P_e,P_ene,P_ne,lnP"
    assert (a / "poles.csv").read_text().splitlines()[0] == "n,Re_kappa,Im_kappa,E_kHz,Gamma_kHz,R"
    rep = json.loads((a / "report.json").read_text())
    for key in ("kappa1", "E1_kHz", "Gamma1_kHz", "R", "tau_ms", "ReC1sq", "sum_rule_deficit",
                "t0_lifetimes", "fits", "version"):
        assert key in rep


def test_poles_only_when_time_is_null(tmp_path):
    data = bundled_config("table1_row7").to_dict()
    data["time"] = None
    cfg = ScenarioConfig.from_dict(data)
    res = run_scenario(cfg)
    assert res.series is None and res.report.R > 0
    out = tmp_path / "o"
    assert main(["run", "--config", str(_write(tmp_path, data)), "--out", str(out)]) == 0
    assert sorted(p.name for p in out.iterdir()) == ["poles.csv", "report.json"]


def test_poles_command(capsys):
    assert main(["poles", "--config", "table1_row7", "--seed-grid", "30,15"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert lines[0] == POLES_HEADER and len(lines) > 5


def test_failure_leaves_no_partial_outputs(tmp_path):
    data = bundled_config("table1_row7").to_dict()
    data["search"]["window_khz"] = [250.0, 251.0]
    data["search"]["depth_khz"] = 0.01
    out = tmp_path / "o"
    code = main(["run", "--config", str(_write(tmp_path, data)), "--out", str(out)])
    assert code == 50
    assert not any(out.rglob("*"))


def test_list_and_bad_arguments(capsys):
    assert main(["list"]) == 0
    assert "table2_row3" in capsys.readouterr().out
    with pytest.raises(SystemExit):
        main(["poles", "--config", "table1_row1", "--seed-grid", "3"])
    with pytest.raises(SystemExit):
        main(["run", "--config", "table1_row1"])
    assert main(["run", "--config", "no_such_scenario", "--out", "x"]) == 2


def test_single_point_sweep_equals_run():
    cfg = bundled_config("table1_row3")
    data = cfg.to_dict()
    data["sweep"] = {"param": "b", "values": [cfg.params["b"]]}
    reports, track = run_sweep(ScenarioConfig.from_dict(data))
    direct = run_scenario(cfg).report
    a, b = reports[0].to_dict(), direct.to_dict()
    assert a == b
    assert track[0].kappa == pytest.approx(direct.kappa1, rel=1e-10)


def test_barrier_width_sweep(tmp_path):
    cfg = bundled_config("sweep_barrier_width")
    reports, track = run_sweep(cfg, tmp_path / "s")
    R = np.array([r.R for r in reports])
    assert np.all(np.diff(R) < 0)
    assert (tmp_path / "s" / "trajectory.csv").is_file()
    # continuation follows the same pole as the independent searches
    assert np.allclose([p.R for p in track], R, rtol=1e-6)
