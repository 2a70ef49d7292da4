"""Plan validation, deterministic report writing, plot data, and the CLI."""
import json
import math

import numpy as np
import pytest

from rmtlab import (
    CSV_COLUMNS,
    DistributionSpec,
    NumericError,
    OutputError,
    ProbeConfig,
    ResultRow,
    SchemaError,
    UnknownProbeError,
    build_plan,
    data_section,
    emit_plot_data,
    execute_plan,
    gap_law,
    load_config,
    make_estimate,
    run_plan,
    smallball_curve,
    write_rows,
)
from rmtlab.cli import main


def smallball_config(**extra):
    cfg = {"lambda1": 0.0, "deltas": [0.5], "n": 2, "replicas": 8, "seed": 7}
    cfg.update(extra)
    return cfg


def write_config(tmp_path, cfg, name="plan.json"):
    path = tmp_path / name
    path.write_text(json.dumps(cfg))
    return path


# ---------------------------------------------------------------------------
# Plan building and schema validation
# ---------------------------------------------------------------------------


def test_build_plan_defaults():
    plan = build_plan("smallball", smallball_config())
    assert str(plan.output) == "rmtlab_smallball.csv"
    assert plan.format == "csv"
    assert plan.workers == 1
    assert plan.params["ensemble"].kind == "rademacher"
    assert plan.params["tolerances"] == {}


def test_build_plan_unknown_probe():
    with pytest.raises(UnknownProbeError, match="nope"):
        build_plan("nope", {})


def test_build_plan_rejects_unknown_key_by_name():
    with pytest.raises(SchemaError, match="replcas"):
        build_plan("smallball", smallball_config(replcas=10))


def test_build_plan_reports_missing_field_by_name():
    cfg = smallball_config()
    del cfg["deltas"]
    with pytest.raises(SchemaError, match="'deltas'"):
        build_plan("smallball", cfg)
    cfg = smallball_config()
    del cfg["seed"]
    with pytest.raises(SchemaError, match="'seed'"):
        build_plan("smallball", cfg)


def test_build_plan_probe_name_mismatch():
    with pytest.raises(SchemaError, match="gaps"):
        build_plan("smallball", smallball_config(probe="gaps"))
    assert build_plan("smallball", smallball_config(probe="smallball")).probe == "smallball"


def test_build_plan_overrides_win_and_none_is_ignored():
    plan = build_plan(
        "smallball", smallball_config(), {"n": 4, "seed": None, "out": "x.csv"}
    )
    assert plan.params["n"] == 4
    assert plan.params["seed"] == 7
    assert str(plan.output) == "x.csv"


def test_build_plan_joint_delta_forms_are_exclusive():
    base = {"lambda1": 0.0, "lambda2": 1.0, "n": 2, "replicas": 8, "seed": 1}
    assert build_plan("joint", {**base, "deltas": [0.5, 1.0]}).probe == "joint"
    assert build_plan("joint", {**base, "delta1": 0.5, "delta2": 1.0}).probe == "joint"
    with pytest.raises(SchemaError):
        build_plan("joint", base)
    with pytest.raises(SchemaError):
        build_plan("joint", {**base, "deltas": [0.5], "delta1": 0.5, "delta2": 1.0})
    with pytest.raises(SchemaError, match="delta2"):
        build_plan("joint", {**base, "delta1": 0.5})


def test_build_plan_seed_range():
    with pytest.raises(SchemaError, match="seed"):
        build_plan("smallball", smallball_config(seed=-1))
    with pytest.raises(SchemaError, match="seed"):
        build_plan("smallball", smallball_config(seed=2**64))
    plan = build_plan("smallball", smallball_config(seed=2**64 - 1))
    assert plan.params["seed"] == 2**64 - 1


def test_build_plan_value_validation():
    for bad in (
        smallball_config(n=0),
        smallball_config(replicas=True),
        smallball_config(deltas=[0.5, -0.1]),
        smallball_config(deltas=[]),
        smallball_config(format="xml"),
        smallball_config(workers=0),
        smallball_config(tolerances=[1, 2]),
        smallball_config(lambda1=math.inf),
    ):
        with pytest.raises(SchemaError):
            build_plan("smallball", bad)


def test_build_plan_ensemble_parsing():
    plan = build_plan(
        "smallball",
        smallball_config(
            ensemble={"kind": "discrete", "values": [-1.0, 1.0], "probs": [0.5, 0.5]}
        ),
    )
    assert plan.params["ensemble"].kind == "discrete"
    for bad in (
        {"kind": "poisson"},
        {"kind": "rademacher", "values": [1.0]},
        {"kind": "gaussian", "wat": 1},
        {"kind": "discrete", "values": [1.0], "probs": [0.9]},
    ):
        with pytest.raises(SchemaError):
            build_plan("smallball", smallball_config(ensemble=bad))


def test_build_plan_cross_field_checks():
    lcd_base = {
        "alpha": 0.5, "gamma": 0.1, "phi_max": 10.0, "resolution": 0.01,
        "threshold": 1.0, "k_lo": 1, "k_hi": 2, "n": 2, "replicas": 8, "seed": 1,
    }
    assert build_plan("lcd", lcd_base).probe == "lcd"
    with pytest.raises(SchemaError, match="resolution"):
        build_plan("lcd", {**lcd_base, "resolution": 0.5})
    with pytest.raises(SchemaError, match="threshold"):
        build_plan("lcd", {**lcd_base, "threshold": 11.0})
    with pytest.raises(SchemaError, match="k_lo"):
        build_plan("lcd", {**lcd_base, "k_hi": 5})
    rig = {"lambda1": 0.0, "k_lo": 2, "k_hi": 1, "n": 4, "replicas": 8, "seed": 1}
    with pytest.raises(SchemaError):
        build_plan("rigidity", rig)
    ilo = {"d": 4, "k": 1, "c0": 1.0, "nu": 0.5, "n": 9, "replicas": 8, "seed": 1}
    with pytest.raises(SchemaError, match="3\\*d"):
        build_plan("ilo", ilo)
    tau = {
        "v": [1.0, 0.0], "w": [0.0, 1.0], "big_l": 0.5, "eps1": 0.0,
        "nu": 0.5, "d": 1, "n": 4, "replicas": 200, "seed": 1,
    }
    with pytest.raises(SchemaError, match="length n"):
        build_plan("tau", tau)
    with pytest.raises(SchemaError, match="l0"):
        build_plan("tau", {**tau, "v": [1.0, 0.0, 0.0, 0.0], "w": [0.0, 1.0, 0.0, 0.0]})


def test_load_config_errors(tmp_path):
    with pytest.raises(SchemaError, match="cannot read"):
        load_config(tmp_path / "missing.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(SchemaError, match="not valid JSON"):
        load_config(bad)
    arr = tmp_path / "arr.json"
    arr.write_text("[1, 2]")
    with pytest.raises(SchemaError, match="object"):
        load_config(arr)


# ---------------------------------------------------------------------------
# Plan execution and report writing
# ---------------------------------------------------------------------------


def test_run_plan_trivial_smallball_reproducible(tmp_path):
    out = tmp_path / "report.csv"
    plan = build_plan("smallball", smallball_config(out=str(out)))
    path = run_plan(plan)
    assert path == out
    first = out.read_text()
    lines = data_section(first).splitlines()
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert len(lines) == 2  # header + one delta row
    run_plan(plan)
    assert out.read_text() == first


def test_run_plan_data_section_independent_of_workers(tmp_path):
    texts = {}
    for workers in (1, 8):
        out = tmp_path / f"w{workers}.csv"
        plan = build_plan(
            "smallball",
            smallball_config(replicas=4224, deltas=[0.2, 0.8], out=str(out), workers=workers),
        )
        run_plan(plan)
        texts[workers] = out.read_text()
    assert data_section(texts[1]) == data_section(texts[8])
    assert texts[1] != texts[8]  # workers are echoed in the metadata header
    assert "# workers: 8" in texts[8]


def test_execute_plan_rows_match_direct_probe_call():
    plan = build_plan("smallball", smallball_config(replicas=64, deltas=[0.3, 1.5]))
    output = execute_plan(plan)
    cfg = ProbeConfig(DistributionSpec.rademacher(), 2, 64, 7)
    records = smallball_curve(cfg, 0.0, [0.3, 1.5])
    assert [r.phat for r in output.rows] == [r.p_hat for r in records]
    assert [r.successes for r in output.rows] == [r.successes for r in records]
    for row, delta in zip(output.rows, (0.3, 1.5)):
        assert row.lambda1 == 0.0 and row.delta1 == delta
        assert "lambda1" not in row.extra and "delta1" not in row.extra


def test_execute_plan_locallaw_maps_delta_to_eps_column():
    plan = build_plan(
        "locallaw",
        {"energy": 0.0, "eta": 0.5, "deltas": [0.2], "n": 8, "replicas": 16, "seed": 3},
    )
    row = execute_plan(plan).rows[0]
    assert row.eps == 0.2
    assert row.extra["energy"] == 0.0 and row.extra["eta"] == 0.5


def test_execute_plan_numeric_failure_is_typed():
    # Seed 3's reference draw is the all-ones sign matrix, resonant at shift 0.
    plan = build_plan(
        "hw",
        {
            "source": "resolvent", "lambda1": 0.0, "t_grid": [0.5],
            "n": 2, "replicas": 8, "seed": 3,
        },
    )
    with pytest.raises(NumericError, match="resonant"):
        execute_plan(plan)


def test_run_plan_unwritable_output(tmp_path):
    out = tmp_path / "no_such_dir" / "report.csv"
    plan = build_plan("smallball", smallball_config(out=str(out)))
    with pytest.raises(OutputError):
        run_plan(plan)


def test_run_plan_json_format(tmp_path):
    out = tmp_path / "report.json"
    plan = build_plan("smallball", smallball_config(out=str(out), format="json"))
    run_plan(plan)
    doc = json.loads(out.read_text())
    assert doc["metadata"]["probe"] == "smallball"
    assert doc["metadata"]["version"] == "0.1.0"
    assert doc["metadata"]["plan"]["n"] == 2
    (row,) = doc["rows"]
    assert row["probe"] == "smallball" and row["trials"] == 8
    assert out.read_text() == json.dumps(doc, sort_keys=True, indent=1) + "\n"


def test_execute_plan_tau_appends_estimate_row():
    plan = build_plan(
        "tau",
        {
            "v": [1.0, 0.0, 0.0, 0.0], "w": [0.0, 0.0, 0.0, 1.0], "big_l": 0.5,
            "eps1": 0.5, "nu": 0.5, "d": 1, "n": 4, "replicas": 200, "seed": 5,
        },
    )
    output = execute_plan(plan)
    assert output.rows[-1].probe == "tau_estimate"
    assert 0.0 < output.rows[-1].extra["tau"] <= 1.0
    assert all(r.probe == "tau_curve" for r in output.rows[:-1])


# ---------------------------------------------------------------------------
# Result rows and serialization
# ---------------------------------------------------------------------------


def test_csv_columns_are_the_documented_fourteen():
    assert CSV_COLUMNS == (
        "probe", "n", "lambda1", "lambda2", "delta1", "delta2", "eps",
        "successes", "trials", "phat", "lo", "hi", "seed", "extra",
    )


def test_result_row_cells_and_dict():
    row = ResultRow(
        probe="smallball", n=4, seed=9, lambda1=0.5, phat=0.25,
        extra={"b": 1, "a": math.inf},
    )
    cells = row.cells()
    assert len(cells) == len(CSV_COLUMNS)
    assert cells[0] == "smallball"
    assert cells[2] == repr(0.5)
    assert cells[3] == ""  # lambda2 not applicable
    assert cells[-1] == '{"a":null,"b":1}'  # sorted keys, non-finite to null
    assert tuple(row.as_dict()) == CSV_COLUMNS
    assert row.as_dict()["extra"] == {"a": None, "b": 1}


def test_data_section_strips_only_comment_lines():
    text = "# rmtlab 0.1.0\n# seed: 3\nh1,h2\n1,2\n"
    assert data_section(text) == "h1,h2\n1,2\n"


def test_write_rows_metadata_sorted_and_rejects_unknown_format(tmp_path):
    rows = [ResultRow(probe="x", n=2, seed=1)]
    out = tmp_path / "r.csv"
    write_rows(out, rows, {"zeta": 1, "alpha": "two"}, "csv")
    lines = out.read_text().splitlines()
    assert lines[0] == "# rmtlab 0.1.0"
    assert lines[1] == "# alpha: two"
    assert lines[2] == "# zeta: 1"
    assert lines[3] == ",".join(CSV_COLUMNS)
    with pytest.raises(ValueError):
        write_rows(tmp_path / "r.bin", rows, {}, "parquet")


# ---------------------------------------------------------------------------
# Plot-data emission
# ---------------------------------------------------------------------------


def test_emit_plot_data_scaling_appends_fit_row(tmp_path):
    cfg = ProbeConfig(DistributionSpec.rademacher(), 2, 400, 17)
    records = smallball_curve(cfg, 0.0, [0.1, 1.0])
    out = tmp_path / "p.csv"
    emit_plot_data(records, "scaling", out, "delta1")
    lines = [l for l in out.read_text().splitlines() if not l.startswith("#")]
    assert lines[0] == "x,y,lo,hi"
    assert len(lines) == 4  # two data rows + fit row
    assert lines[-1].startswith("fit,")
    assert any(l.startswith("# fit slope=") for l in out.read_text().splitlines())


def test_emit_plot_data_rejects_empty_and_heterogeneous(tmp_path):
    cfg = ProbeConfig(DistributionSpec.rademacher(), 2, 50, 18)
    records = smallball_curve(cfg, 0.0, [0.5])
    out = tmp_path / "p.csv"
    with pytest.raises(ValueError, match="no records"):
        emit_plot_data([], "scaling", out)
    gaps = gap_law(cfg, (0.0, 3.0), [0.5])
    with pytest.raises(ValueError, match="mix probes"):
        emit_plot_data(records + gaps[:1], "scaling", out, "delta1")
    with pytest.raises(ValueError, match="unknown plot kind"):
        emit_plot_data(records, "surface", out)


def test_emit_plot_data_gap_grid_monotone(tmp_path):
    cfg = ProbeConfig(DistributionSpec.gaussian(), 16, 400, 19)
    eps = [0.02, 0.05, 0.1, 0.3, 1.0, 3.0, 10.0, 30.0]
    records = gap_law(cfg, (0.5, 7.5), eps)[:-1]  # drop the distinctness record
    out = tmp_path / "g.csv"
    emit_plot_data(records, "scaling", out, "eps")
    rows = [
        l.split(",") for l in out.read_text().splitlines()
        if not l.startswith(("#", "x", "fit"))
    ]
    assert len(rows) == 8
    ys = [float(r[1]) for r in rows]
    assert ys == sorted(ys)


def test_emit_plot_data_all_zero_frequencies_skip_fit(tmp_path):
    records = [
        make_estimate("smallball", 4, 0, 16, "lineage", {"delta1": d})
        for d in (0.1, 0.2)
    ]
    out = tmp_path / "z.csv"
    emit_plot_data(records, "scaling", out, "delta1")
    text = out.read_text()
    assert "# fit unavailable" in text
    assert not any(l.startswith("fit,") for l in text.splitlines())


# ---------------------------------------------------------------------------
# Command-line interface
# ---------------------------------------------------------------------------


def test_cli_writes_report_plot_data_and_figure(tmp_path, capsys):
    out = tmp_path / "sb.csv"
    cfg = write_config(tmp_path, smallball_config(deltas=[0.1, 1.0]))
    assert main(["smallball", "--config", str(cfg), "--out", str(out)]) == 0
    assert out.exists()
    assert (tmp_path / "sb.plot.csv").exists()
    assert (tmp_path / "sb.png").exists()
    captured = capsys.readouterr()
    assert f"wrote {out}" in captured.out
    assert "log-log slope" in captured.out


def test_cli_no_plot_skips_figure(tmp_path):
    out = tmp_path / "sb.csv"
    cfg = write_config(tmp_path, smallball_config())
    assert main(["smallball", "--config", str(cfg), "--out", str(out), "--no-plot"]) == 0
    assert (tmp_path / "sb.plot.csv").exists()
    assert not (tmp_path / "sb.png").exists()


def test_cli_schema_error_exits_2(tmp_path, capsys):
    cfg = write_config(tmp_path, {"lambda1": 0.0, "n": 2, "replicas": 8, "seed": 7})
    assert main(["smallball", "--config", str(cfg), "--no-plot"]) == 2
    err = capsys.readouterr().err
    assert err.startswith("error:") and "deltas" in err


def test_cli_unknown_subcommand_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["frobnicate", "--config", "x.json"])
    assert exc.value.code == 2


def test_cli_numeric_failure_exits_3(tmp_path, capsys):
    cfg = write_config(
        tmp_path,
        {
            "source": "resolvent", "lambda1": 0.0, "t_grid": [0.5],
            "n": 2, "replicas": 8, "seed": 3,
        },
    )
    out = tmp_path / "hw.csv"
    assert main(["hw", "--config", str(cfg), "--out", str(out), "--no-plot"]) == 3
    assert capsys.readouterr().err.startswith("numeric failure:")
    assert not out.exists()


def test_cli_worker_priority_flag_config_env(tmp_path, monkeypatch):
    def workers_line(name, config, argv):
        out = tmp_path / name
        cfg = write_config(tmp_path, config, name + ".json")
        assert main([
            "smallball", "--config", str(cfg), "--out", str(out), "--no-plot", *argv
        ]) == 0
        return [l for l in out.read_text().splitlines() if l.startswith("# workers:")][0]

    monkeypatch.setenv("RMTLAB_WORKERS", "5")
    assert workers_line("env.csv", smallball_config(), []) == "# workers: 5"
    assert (
        workers_line("cfg.csv", smallball_config(workers=4), []) == "# workers: 4"
    )
    assert (
        workers_line("flag.csv", smallball_config(workers=4), ["--workers", "2"])
        == "# workers: 2"
    )


def test_cli_invalid_env_workers_exits_2(tmp_path, monkeypatch, capsys):
    monkeypatch.setenv("RMTLAB_WORKERS", "many")
    cfg = write_config(tmp_path, smallball_config())
    assert main(["smallball", "--config", str(cfg), "--no-plot"]) == 2
    assert "RMTLAB_WORKERS" in capsys.readouterr().err


def test_cli_figure_failure_warns_but_exit_zero(tmp_path, monkeypatch, capsys):
    def boom(*args, **kwargs):
        raise RuntimeError("no canvas")

    monkeypatch.setattr("rmtlab.cli.render_figure", boom)
    out = tmp_path / "sb.csv"
    cfg = write_config(tmp_path, smallball_config())
    assert main(["smallball", "--config", str(cfg), "--out", str(out)]) == 0
    captured = capsys.readouterr()
    assert "warning: figure rendering failed" in captured.err
    assert out.exists() and (tmp_path / "sb.plot.csv").exists()
