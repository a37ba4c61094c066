import numpy as np
import pytest

from maxwelldd.experiments import (
    CSV_HEADER,
    ConfigError,
    PRESETS,
    config_from_preset,
    parse_config_file,
    resolve_geometry,
    run_table,
)


TINY = {
    "k_list": "2",
    "fine_list": "4",
    "sub_list": "2",
    "coarse_list": "2",
    "overlap_layers": "1",
    "preconditioners": "as2,as1",
    "times": "false",
    "seed": "5",
}


def test_unknown_key_rejected():
    with pytest.raises(ConfigError, match="unknown configuration key"):
        config_from_preset(overrides={"grid_pionts": "3"})


def test_unknown_preset_rejected():
    with pytest.raises(ConfigError, match="unknown preset"):
        config_from_preset("table99")


def test_unknown_preconditioner_rejected():
    with pytest.raises(ConfigError, match="unknown preconditioner"):
        config_from_preset(overrides={"preconditioners": "qas2"})


def test_all_named_presets_exist():
    for name in ("table1", "table2", "table3", "table4", "table6", "medimax-cube"):
        assert name in PRESETS
        config_from_preset(name)


def test_config_file_parsing(tmp_path):
    path = tmp_path / "run.cfg"
    path.write_text("# comment\nk_list = 2,3\nseed = 9\n\noverlap_layers = 1\n")
    raw = parse_config_file(str(path))
    assert raw == {"k_list": "2,3", "seed": "9", "overlap_layers": "1"}
    cfg = config_from_preset(None, raw)
    assert cfg.k_list == [2.0, 3.0]
    assert cfg.seed == 9


def test_config_file_rejects_garbage(tmp_path):
    path = tmp_path / "bad.cfg"
    path.write_text("this is not a key value line\n")
    with pytest.raises(ConfigError):
        parse_config_file(str(path))


def test_geometry_snapping():
    # target resolutions snap to the nearest multiple of lcm(p, nc)
    cfg = config_from_preset(
        overrides={
            "k_list": "5",
            "fine_rule": "gpw",
            "fine_g": "8.4",
            "sub_list": "3",
            "coarse_list": "3",
        }
    )
    geo = resolve_geometry(cfg, 5.0, 0)
    # 8.4 * 5 / (2 pi) = 6.68 -> nearest multiple of 3 is 6
    assert geo.n == 6
    assert geo.p_axis == 3


def test_geometry_alpha_rules():
    cfg = config_from_preset(
        overrides={
            "k_list": "4",
            "fine_rule": "pow32",
            "fine_c": "1.0",
            "sub_rule": "alpha",
            "sub_alpha": "1.0",
            "sub_c": "0.5",
            "coarse_rule": "alpha",
            "coarse_alpha": "1.0",
            "coarse_c": "0.5",
        }
    )
    geo = resolve_geometry(cfg, 4.0, 0)
    assert geo.p_axis == 2
    assert geo.n_coarse == 2
    # 4^1.5 = 8 is already a multiple of 2
    assert geo.n == 8


def test_run_table_rows_and_determinism(tmp_path):
    cfg = config_from_preset(overrides=dict(TINY))
    records, csv_text = run_table(cfg)
    assert len(records) == 2
    lines = csv_text.strip().split("\n")
    assert lines[0] == CSV_HEADER
    assert len(lines) == 3
    # byte-identical rerun
    _, csv_again = run_table(cfg)
    assert csv_text == csv_again
    # output file has LF endings and identical content
    out = tmp_path / "rows.csv"
    cfg2 = config_from_preset(overrides={**TINY, "out": str(out)})
    run_table(cfg2)
    data = out.read_bytes()
    assert b"\r" not in data
    assert data.decode("utf-8") == csv_text


def test_run_table_seed_changes_bytes():
    base = dict(TINY)
    r1 = run_table(config_from_preset(overrides=base))[1]
    r2 = run_table(config_from_preset(overrides={**base, "seed": "6"}))[1]
    assert r1 != r2


def test_degenerate_single_subdomain_one_iteration():
    cfg = config_from_preset(
        overrides={
            "k_list": "2",
            "fine_list": "2",
            "sub_list": "1",
            "coarse_rule": "none",
            "overlap_layers": "1",
            "preconditioners": "as1",
            "times": "false",
        }
    )
    records, _ = run_table(cfg)
    assert records[0].iterations == 1
    assert records[0].converged


def test_two_level_requires_coarse():
    with pytest.raises(ConfigError, match="coarse"):
        cfg = config_from_preset(
            overrides={**TINY, "coarse_rule": "none", "preconditioners": "as2"}
        )
        run_table(cfg)


def test_sizing_refusal():
    cfg = config_from_preset(overrides={**TINY, "lu_cap": "10"})
    with pytest.raises(ConfigError, match="infeasible"):
        run_table(cfg)


def test_heterogeneous_rows_run():
    cfg = config_from_preset(
        overrides={
            "k_list": "2",
            "fine_list": "4",
            "sub_list": "2",
            "coarse_list": "2",
            "overlap_layers": "1",
            "preconditioners": "imphras,impras1",
            "heterogeneity": "inclusion",
            "incl_box": "0,1,0,1,0.25,0.75",
            "incl_sigma_over_k": "0.0",
            "bg_sigma_over_k": "1.0",
            "xi_prob": "zero",
            "xi_prec": "zero",
            "times": "false",
        }
    )
    records, _ = run_table(cfg)
    assert len(records) == 2
    assert all(r.converged for r in records)


def test_failed_rows_record_maxit():
    # an unpreconditioned-quality setup that cannot reach tol in 2 iterations
    cfg = config_from_preset(
        overrides={
            **TINY,
            "preconditioners": "as1",
            "gmres_maxit": "2",
            "xi_prob": "zero",
            "xi_prec": "k2",
        }
    )
    records, _ = run_table(cfg)
    assert not records[0].converged
    assert records[0].iterations == 2


class TestCli:
    def test_mesh_info(self, capsys):
        from maxwelldd.cli import main

        assert main(["mesh-info", "--n", "1"]) == 0
        out = capsys.readouterr().out
        assert "vertices=8 tets=6 edges=19" in out

    def test_coercivity(self, capsys):
        from maxwelldd.cli import main

        assert main(["coercivity", "--k", "2", "--xi", "4", "--n", "2", "--probes", "50"]) == 0
        assert "violation" in capsys.readouterr().out

    def test_fov_identity(self, capsys):
        from maxwelldd.cli import main

        assert main(["fov", "--identity", "--size", "3", "--n-angles", "16"]) == 0
        out = capsys.readouterr().out
        assert "dist=1" in out

    def test_abs_error(self, capsys):
        from maxwelldd.cli import main

        assert main(["abs-error", "--k", "3", "--n", "2"]) == 0
        out = capsys.readouterr().out.strip().split("\n")
        assert out[0] == "xi,ratio"
        assert len(out) == 4

    def test_run_with_config_and_overrides(self, tmp_path, capsys):
        from maxwelldd.cli import main

        cfgfile = tmp_path / "exp.cfg"
        cfgfile.write_text(
            "k_list = 2\nfine_list = 4\nsub_list = 2\ncoarse_list = 2\n"
            "overlap_layers = 1\npreconditioners = as2\ntimes = false\n"
        )
        out = tmp_path / "exp.csv"
        rc = main(
            ["run", "--config", str(cfgfile), "--out", str(out), "--seed", "5",
             "--set", "preconditioners=as1"]
        )
        assert rc == 0
        text = out.read_text()
        assert text.startswith(CSV_HEADER)
        assert ",as1," in text
        assert ",as2," not in text

    def test_run_rejects_unknown_key(self, capsys):
        from maxwelldd.cli import main

        rc = main(["run", "--set", "bogus_key=1"])
        assert rc == 2
        assert "unknown configuration key" in capsys.readouterr().err
