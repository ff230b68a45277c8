import json
import math

import pytest

from gplab import io
from gplab.cli import build_parser, main
from gplab.fock_lattice import ResolutionError
from gplab.lab import (ConfigError, ExperimentConfig, beta_sweep, default_config, dump_config, load_config,
                       mb_converge, run_experiment, trap_release)

SMALL_MB = dict(m=12, length=4.0, n_min=2, n_max=3, t_final=0.1, mb_dt=0.05, radius=1.2)


def test_config_defaults_and_validation():
    cfg = default_config("scattering")
    assert cfg.dimension == 3 and cfg.potential == "soft_sphere"
    assert default_config("mb_converge").dimension == 1
    with pytest.raises(ConfigError):
        ExperimentConfig(kind="nope")
    assert default_config("mb_converge", n_values="2,4").n_range == [2, 4]
    assert default_config("beta_sweep").beta_list == [0.1, 0.3, 0.5, 0.8]


def test_config_round_trip(tmp_path):
    cfg = default_config("gp_evolve", seed=7, strict=True)
    path = tmp_path / "c.ini"
    path.write_text(dump_config(cfg))
    back = load_config(path)
    assert back.as_dict().keys() == cfg.as_dict().keys()
    assert all((a == b) or (math.isnan(a) and math.isnan(b)) for a, b in
               zip(back.as_dict().values(), cfg.as_dict().values()) if not isinstance(a, str))


def test_config_flat_file_and_errors(tmp_path):
    p = tmp_path / "flat.cfg"
    p.write_text("kind = scattering\nv0 = 4.0  # stronger\nstrict = yes\n")
    cfg = load_config(p)
    assert cfg.kind == "scattering" and cfg.v0 == 4.0 and cfg.strict is True
    p.write_text("kind = scattering\nbogus = 1\n")
    with pytest.raises(ConfigError, match="bogus"):
        load_config(p)
    p.write_text("kind = scattering\nm = many\n")
    with pytest.raises(ConfigError):
        load_config(p)


def test_scattering_record(tmp_path):
    rec = run_experiment(default_config("scattering"), out_dir=tmp_path)
    assert rec.passed
    assert rec.metrics["a0_tail"] == pytest.approx(1 - math.tanh(1), abs=1e-6)
    assert rec.metrics["a0_integral"] == pytest.approx(1 - math.tanh(1), abs=1e-6)
    on_disk = io.read_json(tmp_path / "record.json")
    assert on_disk["passed"] and on_disk["config"]["kind"] == "scattering"
    assert (tmp_path / "f_profile.csv").exists()


def test_graphs_record():
    rec = run_experiment(default_config("graphs"))
    assert rec.passed
    assert all(r["count"] <= r["bound"] for r in rec.tables["graph_counts"])
    assert rec.metrics["counts"]["2,3"] == 88


def test_determinism_byte_identical():
    for cfg in (default_config("scattering"), default_config("graphs"),
                default_config("gp_evolve", m=64, t_final=0.05, noise=0.01, seed=3),
                default_config("mb_converge", **SMALL_MB)):
        assert run_experiment(cfg).metrics_bytes() == run_experiment(cfg).metrics_bytes()


def test_workers_do_not_change_results():
    cfg = default_config("mb_converge", **SMALL_MB)
    a = run_experiment(cfg)
    b = run_experiment(default_config("mb_converge", workers=2, **SMALL_MB))
    assert a.metrics_bytes() == b.metrics_bytes()


def test_mb_converge_free_factorizes():
    rows = mb_converge(default_config("mb_converge", potential="zero", **SMALL_MB))
    assert max(r["delta"] for r in rows) <= 1e-8


def test_mb_converge_rejects_bad_range():
    with pytest.raises(ConfigError):
        run_experiment(default_config("mb_converge", n_values="1,2"))


def test_trap_release_free_agreement():
    rec = trap_release(default_config("trap_release", potential="zero", m=12, length=4.0, n_max=3,
                                      t_final=0.1, snapshots=2))
    assert rec.passed, rec.failures
    assert rec.metrics["delta_initial_max"] <= 1e-10


def test_beta_sweep_reports_resolution_violations():
    cfg = default_config("beta_sweep", m=12, length=4.0, radius=0.6, betas="0.1,0.8", n_values="2,3",
                         t_final=0.1)
    rows = beta_sweep(cfg)
    assert [(r["beta"], r["N"]) for r in rows] == [(0.1, 2), (0.1, 3), (0.8, 2), (0.8, 3)]
    bad = [r for r in rows if r["status"] != "ok"]
    assert bad and all("resolution" in r["status"] for r in bad)
    rec = run_experiment(cfg)
    assert any(f.startswith("resolution_violation") for f in rec.failures)


def test_resolution_error_carries_context():
    cfg = default_config("mb_converge", m=8, length=6.0, radius=0.5, n_values="2,3", t_final=0.1)
    with pytest.raises(ResolutionError, match=r"\[mb_converge\]"):
        run_experiment(cfg)


def test_cli_parser_subcommands():
    p = build_parser()
    for cmd in ("scattering", "gp", "manybody", "hierarchy", "graphs", "sweep"):
        args = p.parse_args([cmd, "--strict", "--out", "x"])
        assert args.strict and args.out == "x"
    assert p.parse_args(["manybody", "--mode", "trap_release", "--n-max", "4"]).n_max == 4


def test_cli_exit_codes(tmp_path, capsys):
    assert main(["scattering", "--out", str(tmp_path / "s")]) == 0
    assert json.loads((tmp_path / "s" / "record.json").read_text())["passed"]
    assert main(["graphs", "--k-max", "1", "--m-max", "2"]) == 0
    assert "k  m  count  bound" in capsys.readouterr().out
    # resolution violations are reported as failures
    assert main(["sweep", "--m", "12", "--length", "4", "--radius", "0.6", "--betas", "0.8",
                 "--n-values", "2,3", "--t-final", "0.1"]) == 1
    assert "resolution_violation" in capsys.readouterr().err
    assert main(["manybody", "--n-values", "1,7"]) == 2
    cfg = tmp_path / "bad.cfg"
    cfg.write_text("kind = scattering\nwho = 1\n")
    assert main(["scattering", "--config", str(cfg)]) == 2


def test_cli_strict_flag(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("kind = gp_evolve\nm = 64\nt_final = 0.01\n")
    assert main(["gp", "--config", str(cfg), "--strict"]) == 0
