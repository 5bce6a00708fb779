import json
import subprocess
import sys

import pytest

from symlab.cli import DEFAULTS, ConfigError, main, parse_config, seed_range

CHEAP = ["--set", "n=8", "--set", "samples=2000", "--set", "dt=0.01"]


def test_empty_file_gives_defaults(tmp_path):
    cfg = tmp_path / "empty.cfg"
    cfg.write_text("# nothing set\n\n")
    spec = parse_config(cfg)
    assert (spec.params["d"], spec.params["group"], spec.params["n"]) == (2, "su2", 64)
    assert spec.params == {k: DEFAULTS[k] for k in DEFAULTS} | {"seeds": "0..0"}
    assert spec.seeds == [0]


def test_alpha_range_error(tmp_path):
    cfg = tmp_path / "a.cfg"
    cfg.write_text("alpha = 0.5\n")
    with pytest.raises(ConfigError, match=r"\(2/3, 1\)"):
        parse_config(cfg)


def test_flag_beats_file_and_both_recorded(tmp_path):
    cfg = tmp_path / "a.cfg"
    cfg.write_text("n = 32\ngroup = u1\n")
    spec = parse_config(cfg, "she-exact", ["n=16"])
    assert spec.params["n"] == 16
    assert spec.params["group"] == "u1"
    hist = spec.sources["n"]["history"]
    assert [h["source"] for h in hist] == ["default", f"file:{cfg}", "flag"]
    assert [h["value"] for h in hist] == [64, "32", "16"]
    assert spec.sources["n"]["source"] == "flag"


def test_layering_order():
    spec = parse_config(None, "generative-abelian")
    assert spec.params["group"] == "u1"
    assert spec.sources["group"]["source"] == "experiment"
    assert len(spec.seeds) == 400


def test_N_sets_group():
    assert parse_config(None, overrides=["N=3"]).params["group"] == "su3"
    assert parse_config(None, overrides=["group=u1", "N=1"]).params["group"] == "u1"


@pytest.mark.parametrize(
    "overrides,match",
    [
        (["bogus=1"], "unknown key"),
        (["n=7"], "even"),
        (["d=4"], r"\{2, 3\}"),
        (["eta=-0.3"], "-1/2"),
        (["n=notanumber"], "bad value"),
        (["noequals"], "key=value"),
        (["seeds=5..2"], "bad seeds"),
        (["group=so3"], "so3"),
    ],
)
def test_config_errors(overrides, match):
    with pytest.raises(ConfigError, match=match):
        parse_config(None, "she-exact", overrides)


def test_bad_file(tmp_path):
    with pytest.raises(ConfigError, match="does not exist"):
        parse_config(tmp_path / "missing.cfg")
    cfg = tmp_path / "b.cfg"
    cfg.write_text("n 32\n")
    with pytest.raises(ConfigError, match="key = value"):
        parse_config(cfg)


def test_seed_range():
    assert seed_range("3..6") == [3, 4, 5, 6]
    assert seed_range("1,4,9") == [1, 4, 9]
    with pytest.raises(ValueError):
        seed_range("4..1")


def test_unknown_experiment_exit_code(capsys):
    assert main(["no-such-thing"]) == 2
    err = capsys.readouterr().err
    assert "usage" in err and "she-exact" in err


def test_config_error_exit_code(tmp_path, capsys):
    assert main(["she-exact", "--set", "alpha=0.5", "--out", str(tmp_path)]) == 2
    assert "(2/3, 1)" in capsys.readouterr().err


def test_threads_env_error(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("SYMLAB_THREADS", "0")
    assert main(["she-exact", *CHEAP, "--out", str(tmp_path)]) == 2


def test_run_writes_manifest_and_repeats(tmp_path):
    out1, out2 = tmp_path / "r1", tmp_path / "r2"
    assert main(["she-exact", *CHEAP, "--out", str(out1)]) == 0
    man = json.loads((out1 / "manifest.json").read_text())
    assert man["passed"] is True
    assert man["config"]["seeds"] == [0]
    assert man["config"]["params"]["n"] == 8
    assert set(man["artifacts"]) >= {"checks.csv", "modes.csv", "shells.csv", "shells.svg"}
    assert man["code_version"]
    # the manifest alone reproduces the tables byte for byte
    assert main(["she-exact", "--config", str(out1 / "manifest.json"), "--out", str(out2)]) == 0
    for name in ("modes.csv", "checks.csv", "shells.csv"):
        assert (out1 / name).read_bytes() == (out2 / name).read_bytes()


def test_failing_check_exit_code(tmp_path):
    # too few correlated samples for the normal approximation at n = 8
    assert main(["she-exact", "--set", "n=8", "--set", "samples=300", "--out", str(tmp_path)]) == 1


def test_console_script(tmp_path):
    res = subprocess.run(
        [sys.executable, "-m", "symlab.cli", "she-exact", *CHEAP, "--out", str(tmp_path)],
        capture_output=True,
        text=True,
        timeout=300,
    )
    assert res.returncode == 0, res.stderr
    assert res.stdout.startswith("PASS modes within 3 standard errors")
