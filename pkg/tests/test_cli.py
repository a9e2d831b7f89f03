import json

import pytest
from click.testing import CliRunner

from okl.cli import Config, flux_trend_verdict, main, parse_config, spectral_verdict
from okl.errors import ConfigError
from okl.flux import CltPrediction

SMALL = """
[grid]
L = 1
N = 64
[moll]
eps = 0.125
zeta = 0.125
[params]
u = 1
v = 0
[sim]
dt = 0.002
T = 0.1
cadence = 0.02
block = 7
[invariance]
ensemble_n = 30
outer_n = 64
inner_n = 8
burn_in = 0.05
bumps = 0.3:0.2, 0.7:0.2
[martingale]
ensemble_n = 30
checkpoints = 0, 0.04, 0.1
inner_n = 8
"""


@pytest.fixture
def small(tmp_path):
    p = tmp_path / "small.ini"
    p.write_text(SMALL)
    return p


def run(args, **kw):
    return CliRunner().invoke(main, args, catch_exceptions=False, **kw)


def test_defaults_parse():
    cfg = parse_config("")
    assert isinstance(cfg, Config) and cfg.grid.N == 128


@pytest.mark.parametrize("text,path", [
    ("[grid]\nN = 63\n", "grid.N"),
    ("[sim]\nscheme = leapfrog\n", "sim.scheme"),
    ("[flux]\nzeta_ratio = abc\n", "flux.zeta_ratio"),
    ("[nonsense]\na = 1\n", "nonsense"),
    ("[moll]\nzeta = 0.001\n", "moll.zeta"),
])
def test_schema_errors_carry_field_paths(text, path):
    with pytest.raises(ConfigError, match=path.replace(".", r"\.")):
        parse_config(text)


def test_malformed_config_exit_2(tmp_path):
    bad = tmp_path / "bad.ini"
    bad.write_text("[grid]\nN = odd\n")
    r = run(["simulate", "--config", str(bad), "--out-dir", str(tmp_path / "o")])
    assert r.exit_code == 2
    assert "grid.N" in r.output
    r = run(["simulate", "--config", str(tmp_path / "missing.ini")])
    assert r.exit_code == 2


def test_diagram_check_candelabra(tmp_path):
    out = tmp_path / "d"
    r = run(["diagram-check", "--out-dir", str(out)])
    assert r.exit_code == 0
    payload = json.loads((out / "diagram_check.json").read_text())
    assert payload["tables"]["candelabra_cross"]["computed"] == [0, 1, 2, 1, 1, 0]
    assert payload["tables"]["candelabra_mixed"]["match"]
    man = json.loads((out / "manifest.json").read_text())
    assert man["outputs"] == ["diagram_check.json"] and man["verdict"] == "PASS"


def test_diagram_check_claw(tmp_path):
    cfg = tmp_path / "c.ini"
    cfg.write_text("[diagram]\nt1 = claw_rr\nt2 =\n")
    out = tmp_path / "c"
    assert run(["diagram-check", "--config", str(cfg), "--out-dir", str(out)]).exit_code == 0
    m = json.loads((out / "diagram_check.json").read_text())["matchings"]
    assert len(m) == 1 and not m[0]["convergent"] and len(m[0]["witness"]) == 2


def test_simulate_csv_and_env(tmp_path, small, monkeypatch):
    monkeypatch.setenv("OKL_OUT_DIR", str(tmp_path / "env"))
    assert run(["simulate", "--config", str(small)]).exit_code == 0
    lines = (tmp_path / "env" / "trajectory.csv").read_text().splitlines()
    assert lines[0] == "time,site,Z,h,u"
    assert len(lines) == 1 + 6 * 33
    man = json.loads((tmp_path / "env" / "manifest.json").read_text())
    assert {"config_hash", "seeds", "module_versions", "wall_clock_s", "outputs"} <= man.keys()


@pytest.mark.parametrize("cmd,files", [
    ("simulate", ["trajectory.csv"]),
    ("invariance", ["invariance.csv", "invariance_control.csv"]),
    ("martingale-check", ["martingale_check.csv"]),
])
def test_byte_identical_across_threads(tmp_path, small, cmd, files):
    a, b = tmp_path / "a", tmp_path / "b"
    ra = run([cmd, "--config", str(small), "--out-dir", str(a), "--threads", "1", "--seed", "3"])
    rb = run([cmd, "--config", str(small), "--out-dir", str(b), "--threads", "3", "--seed", "3"])
    assert ra.exit_code == rb.exit_code and ra.exit_code in (0, 1)
    for f in files:
        assert (a / f).read_bytes() == (b / f).read_bytes()
    ma, mb = (json.loads((d / "manifest.json").read_text()) for d in (a, b))
    assert ma["config_hash"] == mb["config_hash"] and ma["seeds"] == {"run": 3}


def test_seed_changes_output(tmp_path, small):
    run(["simulate", "--config", str(small), "--out-dir", str(tmp_path / "a"), "--seed", "1"])
    run(["simulate", "--config", str(small), "--out-dir", str(tmp_path / "b"), "--seed", "2"])
    assert (tmp_path / "a/trajectory.csv").read_bytes() != (tmp_path / "b/trajectory.csv").read_bytes()


def test_ibp_check_runs(tmp_path):
    cfg = tmp_path / "i.ini"
    cfg.write_text("[ibp]\nn_samples = 20000\nN = 64\n")
    r = run(["ibp-check", "--config", str(cfg), "--out-dir", str(tmp_path / "i")])
    assert r.exit_code in (0, 1)
    rows = (tmp_path / "i/ibp_check.csv").read_text().splitlines()
    assert rows[0] == "case,n,residual,se,z,verdict" and len(rows) == 4


def test_spectral_verdict_rule():
    rows = [
        ["euler_cubic", "n=1;K=10", 0.0, 0.0, 1.0, True],
        ["zero_mode", "zeta=0.1;K=10", -0.2, -1 / 3, 0.01, False],
        ["zero_mode", "zeta=0.05;K=10", -0.33, -1 / 3, 0.01, True],
    ]
    assert spectral_verdict(rows)
    assert not spectral_verdict(rows[:2])
    assert not spectral_verdict([["euler_cubic", "n=1", 1.0, 0.0, 0.1, False]] + rows[1:])


def test_flux_trend_rule():
    pred = CltPrediction(-0.5, 0.6, 0.6)
    good = [{"mean": (-0.3, 0.02), "variance": (0.5, 0.02), "exp_moment": (pred.exp_moment - 0.05, 0.01), "budget": 0.0},
            {"mean": (-0.48, 0.02), "variance": (0.58, 0.02), "exp_moment": (pred.exp_moment, 0.01), "budget": 0.0}]
    assert flux_trend_verdict(good, pred)["pass"]
    bad = [good[1], good[0]]
    assert not flux_trend_verdict(bad, pred)["pass"]
