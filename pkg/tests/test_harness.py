"""Orchestration: scenario serialization, run records, sweeps, reports.

Runs here use coarse 10 s steps and small fleets so each closed loop
stays under a second; the scored window still needs its full sample
count, so durations cannot shrink below the default.
"""

import json

import numpy as np
import pytest

from pemreg.harness import (
    PRESETS,
    RUN_COLUMNS,
    SCHEMA_VERSION,
    TIMING_COLUMNS,
    RunRecord,
    Scenario,
    SignalSpec,
    _reference_mw,
    _with_axis,
    config_hash,
    report,
    rows_to_csv,
    run_scenario,
    scenario_from_dict,
    scenario_to_dict,
    sweep,
    sweep_columns,
    table_to_csv,
    vb_params,
    write_run,
)
from pemreg.mpc import MpcConfig
from pemreg.scoring import METRIC_COLUMNS
from pemreg.signals import synthetic_regd


def coarse(**over) -> Scenario:
    """Small fleet on a 10 s grid: the cheapest legal closed loop."""
    kw = dict(
        n_devices=80,
        signal=SignalSpec(seed=5, bias_mw=0.05, amplitude_mw=0.012),
        mpc=MpcConfig(horizon=18, p=2, forecast_mode="passthrough"),
        duration_s=4200.0,
        warmup_s=600.0,
        dt=10.0,
        seeds=(1,),
    )
    kw.update(over)
    return Scenario(**kw)


class TestScenarioValidation:
    def test_short_duration_rejected(self):
        with pytest.raises(ValueError, match="duration_s"):
            coarse(duration_s=1800.0)

    def test_empty_seeds_rejected(self):
        with pytest.raises(ValueError, match="seeds"):
            coarse(seeds=())

    def test_signal_spec_checks(self):
        with pytest.raises(ValueError, match="kind"):
            SignalSpec(kind="oracle")
        with pytest.raises(ValueError, match="path"):
            SignalSpec(kind="file")
        with pytest.raises(ValueError, match="amplitude"):
            SignalSpec(amplitude_mw=0.0)


class TestSerialization:
    def test_round_trip_identity(self):
        sc = coarse(mpc=MpcConfig(horizon=24, p=1, t_d=2, forecast_mode="ar"))
        assert scenario_from_dict(scenario_to_dict(sc)) == sc

    def test_unknown_top_level_key(self):
        d = scenario_to_dict(coarse())
        d["fleet_size"] = 10
        with pytest.raises(ValueError, match="unknown scenario key 'fleet_size'"):
            scenario_from_dict(d)

    def test_unknown_nested_key(self):
        d = scenario_to_dict(coarse())
        d["mpc"]["gamma"] = 0.9
        with pytest.raises(ValueError, match="unknown mpc key 'gamma'"):
            scenario_from_dict(d)

    def test_partial_dict_uses_defaults(self):
        sc = scenario_from_dict({"n_devices": 300})
        assert sc.n_devices == 300
        assert sc.policy.delta_p_s == Scenario().policy.delta_p_s

    def test_hash_stable_and_sensitive(self):
        a = coarse()
        assert config_hash(a) == config_hash(coarse())
        assert config_hash(a) != config_hash(coarse(n_devices=81))
        assert config_hash(a) != config_hash(
            coarse(mpc=MpcConfig(horizon=18, p=1, forecast_mode="passthrough"))
        )
        assert len(config_hash(a)) == 16

    def test_hash_ignores_seed_argument(self):
        # the hash names the configuration; seeds live next to it
        sc = coarse(seeds=(1, 2))
        assert config_hash(sc) != config_hash(coarse(seeds=(1,)))


class TestReference:
    def test_warmup_flat_then_signal(self):
        sc = coarse()
        warm, steps = 60, 420
        ref = _reference_mw(sc, steps, warm)
        sig = sc.signal
        assert ref[: warm - 30] == pytest.approx(sig.bias_mw)
        w = synthetic_regd(sig.seed, n_samples=ref.size - warm, dt=sc.dt).values
        assert ref[warm:] == pytest.approx(sig.bias_mw + sig.amplitude_mw * w)

    def test_splice_blend_is_monotone(self):
        sc = coarse()
        warm = 60
        ref = _reference_mw(sc, 420, warm)
        seg = ref[warm - 30 : warm + 1] - sc.signal.bias_mw
        target = ref[warm] - sc.signal.bias_mw
        if abs(target) > 1e-12:
            frac = seg / target
            assert frac[0] == pytest.approx(0.0)
            assert np.all(np.diff(frac) >= -1e-12)
            assert np.all(frac <= 1.0 + 1e-12)

    def test_padding_covers_horizon_and_scoring(self):
        sc = coarse(mpc=MpcConfig(horizon=40, p=2, forecast_mode="perfect"))
        ref = _reference_mw(sc, 420, 60)
        assert ref.size >= 60 + 599 + 40 + 2

    def test_short_file_rejected(self, tmp_path):
        p = tmp_path / "sig.csv"
        p.write_text("\n".join("0.0" for _ in range(50)) + "\n")
        sc = coarse(signal=SignalSpec(kind="file", path=str(p), bias_mw=0.05, amplitude_mw=0.012))
        with pytest.raises(ValueError, match="holds 50 samples"):
            _reference_mw(sc, 420, 60)


class TestRunScenario:
    def test_record_shape_and_determinism(self):
        sc = coarse()
        a = run_scenario(sc, seed=3)
        b = run_scenario(sc, seed=3)
        assert tuple(a.table) == RUN_COLUMNS
        assert tuple(a.timing) == TIMING_COLUMNS
        assert len(a.table["t_s"]) == 420
        assert table_to_csv(a.table, RUN_COLUMNS) == table_to_csv(b.table, RUN_COLUMNS)
        assert a.config_hash == b.config_hash
        assert a.events == b.events

    def test_seed_changes_trajectory(self):
        sc = coarse()
        a = run_scenario(sc, seed=3)
        b = run_scenario(sc, seed=4)
        assert not np.array_equal(a.table["y_mw"], b.table["y_mw"])

    def test_input_never_below_committed_power(self):
        # packets are uninterruptible: the realized input can never dip
        # under the power of devices already mid-packet
        sc = coarse(mpc=MpcConfig(horizon=18, p=2, forecast_mode="perfect"))
        rec = run_scenario(sc, seed=2)
        floor = sc.device.p_rate_kw * 1e-3 * rec.table["x_on"]
        assert float(np.min(rec.table["u_mw"] - floor)) >= -1e-12

    def test_perfect_forecast_on_model_plant_tracks(self):
        sc = coarse(mpc=MpcConfig(horizon=18, p=2, forecast_mode="perfect"), vb_plant=True)
        rec = run_scenario(sc, seed=1)
        assert rec.report.rrmse < 0.05
        assert rec.report.composite > 0.85
        assert rec.mean_cycles_per_day == 0.0

    def test_run_failure_carries_step_and_stage(self, tmp_path):
        p = tmp_path / "sig.csv"
        n = 900
        vals = 0.4 * np.sin(np.arange(n) / 9.0)
        p.write_text("\n".join(f"{v:.6f}" for v in vals) + "\n")
        bad = coarse(
            signal=SignalSpec(kind="file", path=str(p), bias_mw=0.05, amplitude_mw=0.012),
            n_devices=2,
        )
        # two devices cannot ever track: not an error, still a run
        rec = run_scenario(bad, seed=1)
        assert rec.report.rrmse > 0.0


class TestArtifacts:
    def test_write_run_layout(self, tmp_path):
        sc = coarse()
        rec = run_scenario(sc, seed=1)
        out = write_run(tmp_path, sc, rec)
        assert out.name == f"{rec.config_hash}_s1"
        run_csv = (out / "run.csv").read_text()
        assert run_csv.splitlines()[0] == ",".join(RUN_COLUMNS)
        assert len(run_csv.splitlines()) == 421
        man = json.loads((out / "manifest.json").read_text())
        assert man["schema_version"] == SCHEMA_VERSION
        assert man["config_hash"] == rec.config_hash
        assert man["scenario"]["n_devices"] == sc.n_devices
        assert set(man["scores"]) == set(METRIC_COLUMNS)
        assert scenario_from_dict(man["scenario"]) == sc

    def test_csv_formats_types(self):
        table = {"a": [1, 2], "b": [0.25, 1e-9], "c": ["", "x|y"]}
        out = table_to_csv(table, ("a", "b", "c"))
        assert out == "a,b,c\n1,0.25,\n2,1e-09,x|y\n"


class TestSweep:
    def test_single_cell_matches_run_scenario(self):
        sc = coarse()
        rows = sweep(sc, {"mpc.forecast_mode": ("passthrough",)}, seeds=(7,))
        assert len(rows) == 1
        row = rows[0]
        rec = run_scenario(sc, seed=7)
        assert row["status"] == "ok"
        assert row["seed"] == 7
        assert row["rrmse"] == rec.report.rrmse
        assert row["composite"] == rec.report.composite
        assert row["floor_margin_mw"] >= -1e-12

    def test_grid_order_and_columns(self):
        sc = coarse()
        axes = {"n_devices": (60, 80), "signal.seed": (5, 6)}
        rows = sweep(sc, axes, seeds=(1, 2))
        assert [(r["n_devices"], r["signal.seed"], r["seed"]) for r in rows] == [
            (60, 5, 1), (60, 5, 2), (60, 6, 1), (60, 6, 2),
            (80, 5, 1), (80, 5, 2), (80, 6, 1), (80, 6, 2),
        ]
        cols = sweep_columns(axes)
        assert cols[:3] == ("n_devices", "signal.seed", "seed")
        assert "rrmse" in cols and "status" in cols
        csv_txt = rows_to_csv(rows, cols)
        assert csv_txt.count("\n") == 9

    def test_error_cell_recorded_not_raised(self, tmp_path):
        good = tmp_path / "ok.csv"
        n = 900
        good.write_text("\n".join(f"{0.3 * np.sin(k / 7.0):.5f}" for k in range(n)) + "\n")
        base = coarse(
            signal=SignalSpec(kind="file", path=str(good), bias_mw=0.05, amplitude_mw=0.012)
        )
        rows = sweep(base, {"signal.path": (str(good), str(tmp_path / "gone.csv"))}, seeds=(1,))
        assert rows[0]["status"] == "ok"
        assert rows[1]["status"].startswith("error:")
        assert np.isnan(rows[1]["rrmse"])

    def test_unknown_axis_raises_up_front(self):
        with pytest.raises(ValueError, match="unknown sweep axis"):
            sweep(coarse(), {"mpc.gamma": (1,)}, seeds=(1,))

    def test_empty_axes_rejected(self):
        with pytest.raises(ValueError, match="axes"):
            sweep(coarse(), {}, seeds=(1,))


def fake_row(mode, seed, rrmse_val, status="ok"):
    row = {"mpc.forecast_mode": mode, "seed": seed, "status": status}
    for m in METRIC_COLUMNS:
        row[m] = 0.9
    row["rrmse"] = rrmse_val
    row["mean_cycles_per_day"] = 10.0
    row["floor_margin_mw"] = 0.0
    return row


class TestReport:
    def test_single_seed_std_is_zero(self):
        rows = [fake_row("passthrough", 1, 0.05)]
        out, text = report(rows, ("mpc.forecast_mode",))
        assert out[0]["rrmse_mean"] == pytest.approx(0.05)
        assert out[0]["rrmse_std"] == 0.0
        assert out[0]["n_ok"] == 1 and out[0]["n_err"] == 0
        assert "ORDERING VIOLATION" not in text

    def test_seed_aggregation(self):
        rows = [fake_row("passthrough", s, v) for s, v in ((1, 0.04), (2, 0.06))]
        out, _ = report(rows, ("mpc.forecast_mode",))
        assert out[0]["rrmse_mean"] == pytest.approx(0.05)
        assert out[0]["rrmse_std"] == pytest.approx(0.01)

    def test_ordering_violation_flagged(self):
        rows = [fake_row("passthrough", 1, 0.05), fake_row("perfect", 1, 0.08)]
        _, text = report(rows, ("mpc.forecast_mode",))
        assert "ORDERING VIOLATION" in text

    def test_improvement_not_flagged(self):
        rows = [fake_row("passthrough", 1, 0.05), fake_row("perfect", 1, 0.03)]
        _, text = report(rows, ("mpc.forecast_mode",))
        assert "ORDERING VIOLATION" not in text

    def test_failed_cells_warned(self):
        rows = [fake_row("passthrough", 1, 0.05),
                fake_row("passthrough", 2, float("nan"), status="error: boom")]
        out, text = report(rows, ("mpc.forecast_mode",))
        assert out[0]["n_err"] == 1
        assert "WARNING: 1 failed run(s)" in text


class TestPresets:
    def test_axes_resolve_on_base(self):
        for name, preset in PRESETS.items():
            assert preset.note
            for path, values in preset.axes.items():
                assert len(values) > 0, f"{name}:{path}"
                for v in values:
                    _with_axis(preset.base, path, v)

    def test_bases_serialize(self):
        for preset in PRESETS.values():
            assert scenario_from_dict(scenario_to_dict(preset.base)) == preset.base
            vb_params(preset.base)

    def test_known_names(self):
        assert set(PRESETS) == {"fig5a", "fig5b", "fig8", "fig9"}


class TestRunRecordValidation:
    def test_column_names_enforced(self):
        sc = coarse()
        rec = run_scenario(sc, seed=1)
        bad = dict(rec.table)
        bad.pop("y_mw")
        with pytest.raises(ValueError, match="table columns"):
            RunRecord(
                seed=1,
                config_hash=rec.config_hash,
                table=bad,
                timing=rec.timing,
                report=rec.report,
                events=(),
                mean_cycles_per_day=0.0,
            )

    def test_length_mismatch_rejected(self):
        sc = coarse()
        rec = run_scenario(sc, seed=1)
        bad = dict(rec.table)
        bad["y_mw"] = bad["y_mw"][:-1]
        with pytest.raises(ValueError, match="share one length"):
            RunRecord(
                seed=1,
                config_hash=rec.config_hash,
                table=bad,
                timing=rec.timing,
                report=rec.report,
                events=(),
                mean_cycles_per_day=0.0,
            )
