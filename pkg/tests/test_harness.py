import json

import numpy as np
import pytest

from stenoflow import cli
from stenoflow.errors import ConfigError
from stenoflow.harness import (
    RunConfig,
    compare_models,
    config_hash,
    convergence_study,
    effective_config_text,
    parse_config,
    read_record_csv,
    run_case,
    stenotic_mask,
    write_profile_tables,
    write_record_csv,
)
from stenoflow.geometry import make_stenosis_profile

SHORT = """
[geometry]
kind = straight
[solver]
n_elements = 20
degree = 1
t_end = 2e-3
output_interval = 1e-3
[boundary]
inlet_value = 0.0
[output]
n_samples = 41
"""


def test_minimal_config_uses_defaults():
    cfg = parse_config("severity = 40\n")
    assert cfg.geometry.severity == 40
    assert cfg.solver.n_elements == 200 and cfg.solver.degree == 2
    assert cfg.params().r0_star == cfg.geometry.r_max


def test_effective_config_round_trips():
    cfg = parse_config(SHORT)
    again = parse_config(effective_config_text(cfg))
    assert again == cfg
    assert config_hash(again) == config_hash(cfg)
    assert config_hash(cfg) != config_hash(RunConfig())


@pytest.mark.parametrize(
    "text, fragment",
    [
        ("[physics]\nmu_f = -1\n", "mu_f"),
        ("[solver]\ncfl = 2\n", "cfl"),
        ("[solver]\nbogus = 1\n", "bogus"),
        ("[solver]\nseverity = 50\n", "geometry"),
        ("[nowhere]\nx = 1\n", "nowhere"),
        ("[solver]\nn_elements = ten\n", "n_elements"),
        ("[geometry]\nkind = tabulated\nprofile_csv = /no/such.csv\n", "not found"),
    ],
)
def test_bad_configs_name_the_problem(text, fragment):
    with pytest.raises(ConfigError, match=fragment):
        parse_config(text)


def test_parse_errors_report_file_line_numbers():
    with pytest.raises(ConfigError, match=r"line 2"):
        parse_config("[solver]\n[solver]\n")


def test_record_csv_round_trip(tmp_path):
    case = run_case(parse_config(SHORT), tmp_path, write=False)
    rec = case.records[-1]
    write_record_csv(rec, tmp_path / "r.csv")
    back = read_record_csv(tmp_path / "r.csv")
    assert back.t == rec.t
    for c in rec.COLUMNS:
        assert np.array_equal(getattr(back, c), getattr(rec, c))


def test_straight_zero_inflow_stays_at_rest(tmp_path):
    case = run_case(parse_config(SHORT), tmp_path)
    s = case.summary
    assert s["status"] == "ok"
    final = case.records[-1]
    assert np.abs(final.q).max() < 1e-10
    assert np.abs(final.eta).max() < 1e-12
    on_disk = json.loads((tmp_path / "summary.json").read_text())
    assert on_disk["records"] == ["record_0000.csv", "record_0001.csv", "record_0002.csv"]
    assert parse_config((tmp_path / "config.ini").read_text()) == parse_config(SHORT)


def test_runs_are_bit_reproducible(tmp_path):
    cfg = parse_config(SHORT.replace("inlet_value = 0.0", "inlet_value = 5.0\nramp_time = 1e-3"))
    run_case(cfg, tmp_path / "a")
    run_case(cfg, tmp_path / "b")
    for name in ("record_0001.csv", "record_0002.csv", "config.ini"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_compare_on_straight_tube_is_degenerate(tmp_path):
    cfg = parse_config(SHORT.replace("inlet_value = 0.0", "inlet_value = 5.0"))
    report = compare_models(cfg, tmp_path)
    assert report["degenerate"] is True
    assert set(report["status"].values()) == {"ok"}
    for m in report["metrics"].values():
        assert m["u_max_rel"] == 0.0
    assert (tmp_path / "comparison.csv").is_file() and (tmp_path / "extended" / "summary.json").is_file()


def test_stenotic_mask_covers_throat_only():
    geom = make_stenosis_profile(50)
    z = np.linspace(0, geom.length, 601)
    mask = stenotic_mask(geom, z)
    assert mask.any() and not mask[0] and not mask[-1]
    assert mask[np.argmin(geom.radius(z))]


def test_projection_only_convergence_rates():
    table = convergence_study(t_end=0.0, n_list=(20, 40, 80))
    for k in (1, 2):
        ra, rq = table.rates(k)
        assert ra == pytest.approx(k + 1, abs=0.1)
        assert rq is None


def test_profile_tables(tmp_path):
    paths = write_profile_tables(tmp_path, severities=(23,), n=51)
    assert paths[0].name == "profile_23.csv"
    meta = json.loads((tmp_path / "profiles.json").read_text())
    assert 2.0 < meta["profile_23.csv"]["throat_z"] < 4.0


def test_cli_exit_codes(tmp_path, capsys):
    bad = tmp_path / "bad.ini"
    bad.write_text("[solver]\ncfl = 7\n")
    assert cli.main(["run", "--config", str(bad)]) == cli.EXIT_CONFIG
    good = tmp_path / "good.ini"
    good.write_text(SHORT)
    out = tmp_path / "run"
    assert cli.main(["run", "--config", str(good), "--out", str(out)]) == cli.EXIT_OK
    assert json.loads((out / "summary.json").read_text())["status"] == "ok"
    assert cli.main(["postprocess", str(out), "--n-r", "5", "--n-z", "7"]) == cli.EXIT_OK
    assert (out / "field2d.csv").is_file()
    empty = tmp_path / "empty"
    empty.mkdir()
    assert cli.main(["postprocess", str(empty)]) == cli.EXIT_CONFIG
    capsys.readouterr()


def test_integral_variant_sits_closer_to_extended():
    cfg = RunConfig().with_overrides(
        geometry={"kind": "stenosis", "severity": 23},
        solver={"n_elements": 50, "t_end": 0.5, "stop_at_steady": True},
        output={"n_samples": 201},
    )
    report = compare_models(cfg, write=False)
    m = report["metrics"]
    assert report["status"] == {"classical": "ok", "extended": "ok", "appendix_b": "ok"}
    assert 0 < m["extended_vs_appendix_b"]["u_max_rel"] < m["extended_vs_classical"]["u_max_rel"]
