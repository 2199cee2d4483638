"""Config documents, artifact files, and command-line behavior."""

import json
import math
import textwrap

import numpy as np
import pytest

import trackmpc.controllers as controllers_mod
from trackmpc import (
    ConfigError,
    ControlError,
    VehicleParams,
    apply_overrides,
    parse_config,
    serialize_config,
    steer_from_slip,
)
from trackmpc.cli import (
    DEFAULT_ALPHAS,
    SUMMARY_COLUMNS,
    TRACE_COLUMNS,
    main,
    read_trace,
    rise_time,
    run_compare,
    sweep_alpha,
)

SINE_DOC = textwrap.dedent("""
    [scenario]
    kind = sine
    duration = 4
    amplitude = 1
    wavelength = 40

    [disturbance]
    kind = gaussian_output
    amplitude = 0.05
    seed = 42
""")


# --- parsing ------------------------------------------------------------------

def test_empty_document_is_the_default_scenario():
    cfg = parse_config("")
    assert cfg.kind == "straight"
    assert cfg.duration == 30.0
    assert cfg.variant == "baseline"
    assert cfg.variants == ("baseline", "weight_tuned", "position_sl", "velocity_sl")
    assert cfg.disturbance.kind == "none"
    ctrl = cfg.controller_config("baseline")
    assert (ctrl.ts, ctrl.horizon, ctrl.control_horizon) == (0.2, 10, 5)
    assert (ctrl.weights.w_y, ctrl.weights.w_u, ctrl.weights.w_du) == (10.0, 0.0, 0.1)
    assert ctrl.weights.alpha == 2.8
    assert ctrl.rate_limit == 0.5


def test_full_document_with_comments():
    cfg = parse_config(textwrap.dedent("""
        # experiment header comment
        [scenario]
        name = wiggle
        kind = sine
        duration = 8      # [s] inline comment
        amplitude = 0.5
        wavelength = 25

        ; alternate comment style
        [vehicle]
        lf = 1.2
        lr = 1.6
        v = 8

        [controller]
        variant = position_sl
        variants = baseline, position_sl
        alpha = 1.4
        w_du = 0.2
        rate_limit = 0.4

        [disturbance]
        kind = gaussian_output
        amplitude = 0.01
        seed = 9
        apply_to_x = true

        [output]
        directory = artifacts
    """))
    assert cfg.name == "wiggle"
    assert (cfg.kind, cfg.duration, cfg.amplitude, cfg.wavelength) == ("sine", 8.0, 0.5, 25.0)
    assert (cfg.vehicle.lf, cfg.vehicle.lr, cfg.vehicle.v) == (1.2, 1.6, 8.0)
    assert cfg.variant == "position_sl"
    assert cfg.variants == ("baseline", "position_sl")
    assert (cfg.alpha, cfg.w_du, cfg.rate_limit) == (1.4, 0.2, 0.4)
    assert cfg.disturbance.kind == "gaussian_output"
    assert cfg.disturbance.apply_to_x is True
    assert cfg.out_dir == "artifacts"


@pytest.mark.parametrize("doc,lineno,needle", [
    ("[nosuch]\n", 1, "unknown section"),
    ("[scenario]\nbogus = 1\n", 2, "unknown key"),
    ("kind = sine\n", 1, "outside of any"),
    ("[scenario]\njust words\n", 2, "key = value"),
    ("[scenario]\nkind = zigzag\n", 2, "kind must be one of"),
    ("[scenario]\nduration = -2\n", 2, "duration must be positive"),
    ("[scenario]\nduration = soon\n", 2, "expects a number"),
    ("[scenario]\nperiods = 0\n", 2, "periods"),
    ("[controller]\nvariant = pid\n", 2, "variant must be one of"),
    ("[controller]\nvariants = baseline, pid\n", 2, "unknown variant"),
    ("[controller]\nhorizon = ten\n", 2, "expects an integer"),
    ("[disturbance]\nkind = uniform\n", 2, "disturbance"),
    ("[disturbance]\napply_to_x = maybe\n", 2, "true/false"),
    ("[vehicle]\nlf = 0\n", 2, "lf"),
    ("[controller]\nrate_limit = -1\n", 2, "rate limit"),
])
def test_errors_carry_their_line(doc, lineno, needle):
    with pytest.raises(ConfigError) as err:
        parse_config(doc)
    assert err.value.line == lineno
    assert str(err.value).startswith(f"line {lineno}:")
    assert needle in str(err.value)


def test_prediction_window_must_fit_the_run():
    doc = "[scenario]\nkind = straight\nduration = 1.0\n"
    with pytest.raises(ConfigError, match="prediction window"):
        parse_config(doc)  # baseline looks 2 s ahead


def test_complete_scenario_rejects_explicit_duration():
    doc = "[scenario]\nkind = complete\nduration = 10\n"
    with pytest.raises(ConfigError, match="derive"):
        parse_config(doc)


def test_serialize_round_trips():
    cfg = parse_config(SINE_DOC)
    again = parse_config(serialize_config(cfg))
    assert again == cfg


def test_overrides_win_and_add_missing_keys():
    cfg = parse_config(SINE_DOC)
    out = apply_overrides(cfg, ["scenario.duration=6", "controller.ts=0.1",
                                "output.directory=elsewhere"])
    assert out.duration == 6.0
    assert out.ts == 0.1  # serializer omits unset ts; override must add it
    assert out.out_dir == "elsewhere"
    assert apply_overrides(cfg, []) == cfg


@pytest.mark.parametrize("bad,needle", [
    ("scenario.duration", "section.key=value"),
    ("duration=6", "section.key"),
    ("scenario.nosuch=1", "unknown key"),
    ("nowhere.duration=6", "unknown"),
])
def test_override_errors(bad, needle):
    cfg = parse_config("")
    with pytest.raises(ConfigError, match=needle):
        apply_overrides(cfg, [bad])


# --- artifact files -------------------------------------------------------------

def test_run_writes_trace_and_manifest(tmp_path):
    cfg_file = tmp_path / "scen.cfg"
    cfg_file.write_text(SINE_DOC)
    rc = main(["run", str(cfg_file), "--output-dir", str(tmp_path / "out")])
    assert rc == 0
    trace_file = tmp_path / "out" / "trace_baseline.csv"
    assert trace_file.exists()
    cols = read_trace(trace_file)
    n = int(math.ceil(4.0 / 0.2)) + 1
    assert len(cols["t"]) == n
    assert len(cols["u"]) == n - 1  # final sample has no applied move
    np.testing.assert_allclose(np.diff(cols["t"]), 0.2, atol=1e-12)
    np.testing.assert_allclose(cols["delta_f"],
                               [steer_from_slip(b, VehicleParams()) for b in cols["beta"]],
                               atol=1e-12)
    manifest = json.loads((tmp_path / "out" / "manifest.json").read_text())
    assert manifest["seed"] == 42
    assert set(manifest["versions"]) == {"python", "numpy", "trackmpc"}
    assert parse_config(manifest["config"]).kind == "sine"


def test_trace_header_is_locked(tmp_path):
    bad = tmp_path / "trace.csv"
    bad.write_text("a,b,c\n1,2,3\n")
    with pytest.raises(ValueError, match="columns"):
        read_trace(bad)
    assert TRACE_COLUMNS == ("t", "x", "y", "psi", "beta", "delta_f", "x_ref", "y_ref", "u")


def test_compare_orders_summary_by_ssd(tmp_path):
    cfg = apply_overrides(parse_config(SINE_DOC),
                          [f"output.directory={tmp_path / 'cmp'}"])
    rows, failures = run_compare(cfg)
    assert failures == []
    assert [r.model for r in rows] == sorted(
        (r.model for r in rows), key=lambda m: [r.ssd for r in rows if r.model == m][0])
    ssds = [r.ssd for r in rows]
    assert ssds == sorted(ssds)
    assert {r.model for r in rows} == set(cfg.variants)
    # summary ssd must be a pure recompute of the written trace
    lines = (tmp_path / "cmp" / "summary.csv").read_text().splitlines()
    assert lines[0] == ",".join(SUMMARY_COLUMNS)
    for row in rows:
        cols = read_trace(tmp_path / "cmp" / f"trace_{row.model}.csv")
        ssd = float(np.sum((cols["x"] - cols["x_ref"]) ** 2 + (cols["y"] - cols["y_ref"]) ** 2))
        assert ssd == pytest.approx(row.ssd, abs=1e-9)


def test_compare_is_reproducible(tmp_path):
    cfg_file = tmp_path / "scen.cfg"
    cfg_file.write_text(SINE_DOC)
    out = tmp_path / "out"
    assert main(["compare", str(cfg_file), "--output-dir", str(out)]) == 0
    first = {p.name: p.read_bytes() for p in out.iterdir()
             if p.name.startswith("trace_") or p.name == "manifest.json"}
    assert len(first) == 5
    assert main(["compare", str(cfg_file), "--output-dir", str(out)]) == 0
    for name, blob in first.items():
        assert (out / name).read_bytes() == blob, f"{name} changed between identical runs"


# --- rise time ------------------------------------------------------------------

def test_rise_time_interpolates():
    t = np.array([0.0, 1.0, 2.0])
    assert rise_time(t, np.array([0.0, 0.5, 1.0]), 1.0) == pytest.approx(1.8)
    assert rise_time(t, np.array([0.0, -0.5, -1.0]), -1.0) == pytest.approx(1.8)
    assert rise_time(t, np.array([2.0, 2.0, 2.0]), 1.0) == 0.0  # already there
    assert math.isnan(rise_time(t, np.array([0.0, 0.1, 0.2]), 1.0))


def test_sweep_alpha_writes_records(tmp_path):
    doc = textwrap.dedent("""
        [scenario]
        kind = step
        duration = 3

        [controller]
        w_u = 200
    """)
    cfg = apply_overrides(parse_config(doc), [f"output.directory={tmp_path}"])
    records = sweep_alpha(cfg, (0.7, 2.8))
    assert [a for a, _, _ in records] == [0.7, 2.8]
    rise_07, rise_28 = records[0][1], records[1][1]
    assert rise_28 < rise_07  # more aggressive tuning reaches the step sooner
    lines = (tmp_path / "sweep_alpha.csv").read_text().splitlines()
    assert lines[0] == "alpha,rise_time,ssd"
    assert len(lines) == 3


# --- exit codes -------------------------------------------------------------------

def test_missing_config_file_exits_one(tmp_path, capsys):
    rc = main(["run", str(tmp_path / "nope.cfg")])
    assert rc == 1
    assert "cannot read config" in capsys.readouterr().err


def test_invalid_config_exits_one(tmp_path, capsys):
    bad = tmp_path / "bad.cfg"
    bad.write_text("[scenario]\nkind = zigzag\n")
    rc = main(["validate-config", str(bad)])
    assert rc == 1
    assert "line 2" in capsys.readouterr().err


def test_bad_override_exits_one(capsys):
    rc = main(["run", "--set", "scenario.kind=zigzag"])
    assert rc == 1
    assert "kind" in capsys.readouterr().err


def test_sweep_preconditions_exit_one(tmp_path, capsys):
    step_doc = tmp_path / "step.cfg"
    step_doc.write_text("[scenario]\nkind = step\nduration = 3\n")
    sine_doc = tmp_path / "sine.cfg"
    sine_doc.write_text(SINE_DOC)
    assert main(["sweep-alpha", str(sine_doc), "--output-dir", str(tmp_path)]) == 1
    assert "step scenario" in capsys.readouterr().err
    assert main(["sweep-alpha", str(step_doc), "--output-dir", str(tmp_path),
                 "--set", "controller.variant=position_sl"]) == 1
    assert "baseline or weight_tuned" in capsys.readouterr().err
    assert main(["sweep-alpha", str(step_doc), "--output-dir", str(tmp_path),
                 "--alphas", "1,fast"]) == 1
    assert "--alphas" in capsys.readouterr().err


def test_validate_config_echoes_normalized_document(tmp_path, capsys):
    cfg_file = tmp_path / "scen.cfg"
    cfg_file.write_text(SINE_DOC)
    rc = main(["validate-config", str(cfg_file), "--set", "scenario.amplitude=2"])
    assert rc == 0
    echoed = parse_config(capsys.readouterr().out)
    assert echoed.amplitude == 2.0
    assert echoed.kind == "sine"


def test_failed_run_exits_two(tmp_path, capsys, monkeypatch):
    def doomed(ctrl, plant, path, cfg, params):
        raise ControlError("deliberate failure")

    monkeypatch.setitem(controllers_mod.CONTROLLER_STEPS, "baseline", doomed)
    cfg_file = tmp_path / "scen.cfg"
    cfg_file.write_text(SINE_DOC)
    rc = main(["run", str(cfg_file), "--output-dir", str(tmp_path / "out")])
    assert rc == 2
    assert "deliberate failure" in capsys.readouterr().err
    # the truncated trace is still written for post-mortems
    assert (tmp_path / "out" / "trace_baseline.csv").exists()


def test_compare_reports_partial_failure(tmp_path, capsys, monkeypatch):
    def doomed(ctrl, plant, path, cfg, params):
        raise ControlError("deliberate failure")

    monkeypatch.setitem(controllers_mod.CONTROLLER_STEPS, "velocity_sl", doomed)
    cfg_file = tmp_path / "scen.cfg"
    cfg_file.write_text(SINE_DOC)
    rc = main(["compare", str(cfg_file), "--output-dir", str(tmp_path / "out")])
    assert rc == 2
    err = capsys.readouterr().err
    assert "velocity_sl" in err and "deliberate failure" in err
    summary = (tmp_path / "out" / "summary.csv").read_text().splitlines()
    assert len(summary) == 4  # header + the three surviving variants


def test_default_alphas_match_documentation():
    assert DEFAULT_ALPHAS == (0.7, 2.8, 11.2)
