import json
import shutil

import pytest

from compoundrisk import cli
from compoundrisk.config import DATA_DIR, bundled_config


@pytest.fixture(autouse=True)
def in_tmp(tmp_path, monkeypatch):
    # commands without an output flag write under the working directory
    monkeypatch.chdir(tmp_path)
    monkeypatch.delenv(cli.ENV_OUTPUT, raising=False)


def make_config(tmp_path, name="historical", **kw):
    """Copy of a bundled config with absolute input paths."""
    d = json.loads(bundled_config(name).read_text())
    for k in ("network", "catalog", "climatology", "fragility", "resources", "study_grid", "anomaly_table",
              "baseline_catalog", "baseline_climatology"):
        if k in d:
            d[k] = str(DATA_DIR / d[k])
    d["calibrate"]["targets"] = str(DATA_DIR / d["calibrate"]["targets"])
    d.update({"n_periods": 4, **kw})
    d["harden"]["n_periods"] = 2
    p = tmp_path / f"{name}.json"
    p.write_text(json.dumps(d))
    return p


def run(argv, capsys):
    code = cli.main([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


@pytest.mark.parametrize("name", ["historical", "future"])
def test_validate_bundled(name, capsys):
    code, out, _ = run(["validate", name], capsys)
    assert code == cli.EXIT_OK
    assert json.loads(out)["ok"]


def test_validate_corrupted_network(tmp_path, capsys):
    net = json.loads((DATA_DIR / "fixtures/network.json").read_text())
    net["distribution_trees"][0]["nodes"][0]["customers"] = -1
    (tmp_path / "net.json").write_text(json.dumps(net))
    cfg = make_config(tmp_path, network=str(tmp_path / "net.json"))
    code, out, _ = run(["validate", cfg], capsys)
    rep = json.loads(out)
    assert code == cli.EXIT_INVALID and not rep["ok"]
    assert rep["errors"][0]["input"] == "network"
    assert "negative" in json.dumps(rep["errors"])


def test_missing_file_is_named(tmp_path, capsys):
    cfg = make_config(tmp_path, fragility=str(tmp_path / "gone.json"))
    code, out, _ = run(["validate", cfg], capsys)
    assert code == cli.EXIT_INVALID
    assert "gone.json" in out and "not found" in out
    code, _, err = run(["simulate", cfg], capsys)
    assert code == cli.EXIT_INVALID and "gone.json" in err


def test_bad_config_exit_code(tmp_path, capsys):
    p = tmp_path / "c.json"
    p.write_text('{"network": "x"}')
    assert run(["validate", p], capsys)[0] == cli.EXIT_INVALID
    assert run(["simulate", p], capsys)[0] == cli.EXIT_INVALID


def test_runtime_failure_exit_code(tmp_path, capsys, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("solver exploded")
    monkeypatch.setattr(cli, "run_ensemble", boom)
    code, _, err = run(["simulate", make_config(tmp_path), "-o", tmp_path / "o"], capsys)
    assert code == cli.EXIT_RUNTIME and "solver exploded" in err


def tree_bytes(d):
    return {p.relative_to(d).as_posix(): p.read_bytes() for p in sorted(d.rglob("*")) if p.is_file()}


def test_simulate_is_byte_deterministic(tmp_path, capsys):
    cfg = make_config(tmp_path)
    assert run(["simulate", cfg, "-o", tmp_path / "a"], capsys)[0] == 0
    assert run(["simulate", cfg, "-o", tmp_path / "b", "--workers", "2"], capsys)[0] == 0
    a, b = tree_bytes(tmp_path / "a"), tree_bytes(tmp_path / "b")
    assert a == b
    assert {"exceedance.csv", "exceedance.json", "tract_map.csv", "summary.json", "manifest.json"} <= set(a)
    m = json.loads(a["manifest.json"])
    assert m["seed"] == json.loads(cfg.read_text())["seed"]
    assert set(m["outputs"]) == set(a) - {"manifest.json"}


def test_seed_override_changes_output(tmp_path, capsys):
    cfg = make_config(tmp_path)
    run(["simulate", cfg, "-o", tmp_path / "a"], capsys)
    run(["simulate", cfg, "-o", tmp_path / "b", "--seed", "5"], capsys)
    assert (tmp_path / "a/events.csv").read_bytes() != (tmp_path / "b/events.csv").read_bytes()


def test_output_dir_precedence(tmp_path, capsys, monkeypatch):
    cfg = make_config(tmp_path, output_dir=str(tmp_path / "from_config"))
    monkeypatch.setenv(cli.ENV_OUTPUT, str(tmp_path / "from_env"))
    run(["simulate", cfg, "-o", tmp_path / "from_flag"], capsys)
    assert (tmp_path / "from_flag/summary.json").is_file()
    run(["simulate", cfg], capsys)
    assert (tmp_path / "from_env/summary.json").is_file()
    monkeypatch.delenv(cli.ENV_OUTPUT)
    run(["simulate", cfg], capsys)
    assert (tmp_path / "from_config/summary.json").is_file()


def test_future_simulate_writes_relative_risk(tmp_path, capsys):
    cfg = make_config(tmp_path, "future")
    code, out, _ = run(["simulate", cfg, "-o", tmp_path / "o"], capsys)
    assert code == 0
    s = json.loads((tmp_path / "o/summary.json").read_text())
    assert {"primary", "baseline", "ratios", "relative_risk_floor"} <= set(s)
    assert (tmp_path / "o/relative_risk.csv").is_file()


def test_scaling_and_harden(tmp_path, capsys):
    cfg = make_config(tmp_path)
    assert run(["scaling", cfg, "-o", tmp_path / "s"], capsys)[0] == 0
    s = json.loads((tmp_path / "s/scaling_summary.json").read_text())
    assert s["n_disruptions"] > 0
    assert run(["harden", cfg, "-o", tmp_path / "h"], capsys)[0] == 0
    rows = json.loads((tmp_path / "h/harden.json").read_text())
    assert len(rows) == 15
    assert len(list((tmp_path / "h/plans").glob("*.json"))) == 15


def test_emit_plot_data(tmp_path, capsys):
    src = tmp_path / "t.csv"
    src.write_text("strategy,rate,m\ng,0.1,0.5\n")
    code, out, _ = run(["emit-plot-data", src, "--id", "strategy", "--id", "rate"], capsys)
    assert code == 0
    assert (tmp_path / "t_long.csv").read_text() == "strategy,rate,variable,value\ng,0.1,m,0.5\n"


def test_fixtures_command(tmp_path, capsys):
    code, out, _ = run(["fixtures", tmp_path / "fx", "--scale", "0.5", "--storms", "40", "--years", "2"], capsys)
    assert code == 0
    assert json.loads(out)["customers"] > 0
    assert (tmp_path / "fx/network.json").is_file()
    code, _, _ = run(["validate", make_config(tmp_path, network=str(tmp_path / "fx/network.json"))], capsys)
    assert code == 0


def test_calibrate_command(tmp_path, capsys):
    cfg = make_config(tmp_path, "calibrate")
    code, out, _ = run(["calibrate", cfg, "-o", tmp_path / "c"], capsys)
    assert code == 0
    rep = json.loads((tmp_path / "c/calibration_report.json").read_text())
    assert rep
    assert (tmp_path / "c/fragility_calibrated.json").is_file()


def test_console_script_installed():
    assert shutil.which("compoundrisk") is not None


def test_default_output_under_cwd(tmp_path, capsys):
    assert run(["simulate", make_config(tmp_path)], capsys)[0] == 0
    assert (tmp_path / "compoundrisk-out/simulate/summary.json").is_file()
