import numpy as np
import pytest

from lagflow.cli import SCENARIOS, build_config, lipschitz_verdict, main, parse_config_text
from lagflow.errors import ConfigError

FAST = """scenario = rigid
n = 64
times = 0.5, 1, 2
lipschitz_pairs = 40
lipschitz_times = 1, 2, 3, 4
"""


def test_list_all(capsys):
    assert main(["list"]) == 0
    text = capsys.readouterr().out
    for name in ("rigid", "mixer", "doublewell"):
        assert name in text


def test_list_names_only(capsys):
    assert main(["list", "--names-only"]) == 0
    assert capsys.readouterr().out.split() == list(SCENARIOS)


def test_unknown_flag():
    with pytest.raises(SystemExit) as exc:
        main(["list", "--bogus"])
    assert exc.value.code != 0


def test_decreasing_times(tmp_path, capsys):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("scenario = rigid\ntimes = 3, 2, 1\n")
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "times" in capsys.readouterr().err
    with pytest.raises(ConfigError) as exc:
        build_config({"scenario": "rigid", "times": "3, 2, 1"})
    assert "times" in exc.value.problems


def test_unknown_key():
    with pytest.raises(ConfigError) as exc:
        parse_config_text("scenario = rigid\ncolour = red\n")
    assert "colour" in exc.value.problems


@pytest.mark.parametrize("key,value", [("n", "100"), ("n", "8192"), ("k", "0.7"), ("field", "vortex"),
                                       ("datum", "blob"), ("times", "-1, 2"), ("seed", "-3"),
                                       ("lipschitz_eps", "0")])
def test_field_level_diagnostics(key, value):
    with pytest.raises(ConfigError) as exc:
        build_config({"scenario": "rigid", key: value})
    assert key in exc.value.problems


def test_unknown_scenario(capsys):
    assert main(["run", "nonesuch"]) == 2


def test_comments_and_overrides(tmp_path):
    values = parse_config_text("# header\nscenario = mixer  # trailing\nk = 0.2\n")
    cfg = build_config(values, seed=7, n=128, out=str(tmp_path))
    assert cfg.field == "differential" and cfg.n == 128 and cfg.seed == 7 and cfg.params.k == 0.2
    assert np.all(np.diff(cfg.times) > 0) and cfg.times.size == 12


def test_lipschitz_envelope():
    t = np.arange(1.0, 101.0)
    assert lipschitz_verdict(t, 1 + 2 * t)[0]
    assert lipschitz_verdict(t, np.ones_like(t))[0]
    assert not lipschitz_verdict(t, np.exp(0.1 * t))[0]


@pytest.fixture(scope="module")
def rigid_run(tmp_path_factory):
    base = tmp_path_factory.mktemp("cli")
    cfg = base / "fast.cfg"
    cfg.write_text(FAST)
    outs = []
    for name in ("a", "b"):
        code = main(["run", "--config", str(cfg), "--out", str(base / name), "--seed", "11"])
        outs.append((code, base / name))
    return outs


def test_rigid_scenario_passes(rigid_run):
    code, out = rigid_run[0]
    assert code == 0
    names = {p.name for p in out.iterdir()}
    assert {"lipschitz_profile.csv", "mixing_report.csv", "certificate.txt", "snapshot_t0.pgm",
            "snapshot_t0.5.pgm", "snapshot_t1.pgm", "snapshot_t2.pgm"} <= names
    cert = (out / "certificate.txt").read_text()
    assert "overall: PASS" in cert and "fitted:" in cert and "paper-structural:" in cert
    rows = (out / "mixing_report.csv").read_text().splitlines()
    assert rows[0] == "t,delta_g,hm1,bound_g,bound_a,verdict"
    dg = [float(r.split(",")[1]) for r in rows[1:]]
    assert max(dg) - min(dg) <= 2 * 2 / 64
    prof = (out / "lipschitz_profile.csv").read_text().splitlines()
    assert prof[0] == "t,C_est,pairs_retained"
    c = np.array([float(r.split(",")[1]) for r in prof[1:]])
    assert np.all(np.abs(c - 1) <= 0.01)


def test_bit_identical_reruns(rigid_run):
    (_, a), (_, b) = rigid_run
    for p in sorted(a.iterdir()):
        assert p.read_bytes() == (b / p.name).read_bytes(), p.name


def test_module_entry_point():
    import subprocess
    import sys
    res = subprocess.run([sys.executable, "-m", "lagflow", "list", "--names-only"], capture_output=True, text=True)
    assert res.returncode == 0 and "mixer" in res.stdout
