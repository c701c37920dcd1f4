"""Experiment orchestration.

A Scenario wires one reference signal through the chosen precompensator,
the packet coordinator, and the device fleet; a RunRecord captures the
step table, market scores, and enough metadata to reproduce the run
byte for byte.  sweep/report fan a scenario template across parameter
grids and aggregate seed statistics; PRESETS holds the named grids the
figure-reproduction script consumes.
"""

from __future__ import annotations

import hashlib
import json
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, fields, replace
from itertools import product
from pathlib import Path

import numpy as np

from .coordinator import Coordinator, PacketPolicy, cycling_report
from .fleet import OFF, DeviceParams, WaterDrawProcess, fleet_step, make_fleet
from .mpc import HorizonCache, MpcConfig, step_controller
from .scoring import (
    METRIC_COLUMNS,
    REFERENCE_MIN_SAMPLES,
    RESPONSE_MIN_SAMPLES,
    SCORING_DT_S,
    ScoreInputs,
    ScoreReport,
    pjm_scores,
    rmae,
    rrmse,
    to_scoring_grid,
)
from .signals import Series, fit_ar, forecast, load_series, scale_to_power, synthetic_regd
from .vbmodel import (
    VbParams,
    feasible_input_bounds,
    linearize,
    nominal_point,
    observe_fleet,
    output_mw,
    vb_step,
)

__all__ = [
    "SCHEMA_VERSION",
    "RUN_COLUMNS",
    "TIMING_COLUMNS",
    "SIGNAL_SUITE_SEEDS",
    "SignalSpec",
    "Scenario",
    "RunRecord",
    "Preset",
    "PRESETS",
    "vb_params",
    "config_hash",
    "scenario_to_dict",
    "scenario_from_dict",
    "run_scenario",
    "write_run",
    "table_to_csv",
    "sweep",
    "sweep_columns",
    "rows_to_csv",
    "report",
]

SCHEMA_VERSION = 1

RUN_COLUMNS = ("t_s", "r_mw", "u_mw", "y_mw", "x_on", "opt_outs", "accepts", "denies")
TIMING_COLUMNS = ("t_s", "u_cmd_mw", "solve_ms", "events")

# the default experiment suite: twelve synthetic hours standing in for
# the unreleased dispatch records, one generator seed per hour
SIGNAL_SUITE_SEEDS = tuple(range(1, 13))

_AR_ORDER = 3
_AR_TRAIN_SEED_OFFSET = 7919  # held-out hour for forecaster fitting
_SUPPLY_EWMA = 0.05  # ~40 s memory on the observed request supply


@dataclass(frozen=True)
class SignalSpec:
    """Where the reference comes from and how it maps to power.

    kind "synthetic" generates a seeded hour; "file" loads a CSV of
    normalized samples.  The power reference is
    bias_mw + amplitude_mw * w[k] with w the normalized signal.
    """

    kind: str = "synthetic"
    seed: int = 1
    path: str | None = None
    bias_mw: float = 3.7
    amplitude_mw: float = 1.0

    def __post_init__(self):
        if self.kind not in ("synthetic", "file"):
            raise ValueError(f"kind must be 'synthetic' or 'file', got {self.kind!r}")
        if self.kind == "file" and not self.path:
            raise ValueError("file signals need a path")
        if not (np.isfinite(self.amplitude_mw) and self.amplitude_mw > 0):
            raise ValueError(f"amplitude_mw must be positive, got {self.amplitude_mw}")
        if not np.isfinite(self.bias_mw):
            raise ValueError("bias_mw must be finite")


@dataclass(frozen=True)
class Scenario:
    n_devices: int = 6000
    device: DeviceParams = field(default_factory=DeviceParams)
    draw: WaterDrawProcess = field(default_factory=WaterDrawProcess)
    policy: PacketPolicy = field(default_factory=PacketPolicy)
    mpc: MpcConfig = field(default_factory=MpcConfig)
    signal: SignalSpec = field(default_factory=SignalSpec)
    duration_s: float = 4200.0
    warmup_s: float = 600.0
    dt: float = 2.0
    seeds: tuple[int, ...] = (1,)
    out_dir: str = "runs"
    vb_plant: bool = False

    def __post_init__(self):
        if self.n_devices < 1:
            raise ValueError(f"n_devices must be >= 1, got {self.n_devices}")
        if self.dt <= 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        min_s = RESPONSE_MIN_SAMPLES * SCORING_DT_S
        if self.duration_s < min_s:
            raise ValueError(
                f"duration_s must cover the scored window plus the lag-scan "
                f"tail ({min_s:g} s), got {self.duration_s}"
            )
        if self.warmup_s < 0:
            raise ValueError("warmup_s cannot be negative")
        if not self.seeds:
            raise ValueError("seeds must be nonempty")
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))


@dataclass(frozen=True)
class RunRecord:
    """One finished run: the step table, timing sidecar, and scores.

    table columns are deterministic for a (config, seed) pair; timing
    carries wall-clock solve times and controller events and is the one
    part that varies between invocations.
    """

    seed: int
    config_hash: str
    table: dict
    timing: dict
    report: ScoreReport
    events: tuple[str, ...]
    mean_cycles_per_day: float

    def __post_init__(self):
        if tuple(self.table) != RUN_COLUMNS:
            raise ValueError(f"table columns must be {RUN_COLUMNS}, got {tuple(self.table)}")
        if tuple(self.timing) != TIMING_COLUMNS:
            raise ValueError(f"timing columns must be {TIMING_COLUMNS}")
        n = len(self.table["t_s"])
        if any(len(v) != n for v in self.table.values()):
            raise ValueError("table columns must share one length")
        if any(len(v) != n for v in self.timing.values()):
            raise ValueError("timing columns must share the table length")


def vb_params(sc: Scenario) -> VbParams:
    """Aggregate-model parameters implied by the scenario's fleet."""
    return VbParams.from_fleet(
        sc.device,
        sc.draw,
        sc.n_devices,
        dt=sc.dt,
        n_p=sc.policy.packet_steps(sc.dt),
        t_d=0,
    )


_NESTED = {
    "device": DeviceParams,
    "draw": WaterDrawProcess,
    "policy": PacketPolicy,
    "mpc": MpcConfig,
    "signal": SignalSpec,
}


def scenario_to_dict(sc: Scenario) -> dict:
    out: dict = {}
    for f in fields(Scenario):
        v = getattr(sc, f.name)
        if f.name in _NESTED:
            out[f.name] = {g.name: getattr(v, g.name) for g in fields(v)}
        elif f.name == "seeds":
            out[f.name] = list(v)
        else:
            out[f.name] = v
    return out


def scenario_from_dict(d: dict) -> Scenario:
    valid = {f.name for f in fields(Scenario)}
    kw: dict = {}
    for k, v in d.items():
        if k not in valid:
            raise ValueError(f"unknown scenario key {k!r}")
        cls = _NESTED.get(k)
        if cls is not None:
            sub = {g.name for g in fields(cls)}
            bad = sorted(set(v) - sub)
            if bad:
                raise ValueError(f"unknown {k} key {bad[0]!r}")
            kw[k] = cls(**v)
        elif k == "seeds":
            kw[k] = tuple(int(s) for s in v)
        else:
            kw[k] = v
    return Scenario(**kw)


def config_hash(sc: Scenario) -> str:
    blob = json.dumps(scenario_to_dict(sc), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()[:16]


def _scoring_factor(dt: float) -> int:
    return max(1, int(round(SCORING_DT_S / dt)))


def _reference_mw(sc: Scenario, steps: int, warm: int) -> np.ndarray:
    """Power reference over warmup + run, padded so lookahead forecasts
    and the market-score reference window never run off the end."""
    sig = sc.signal
    n_after = max(steps, REFERENCE_MIN_SAMPLES * _scoring_factor(sc.dt)) + sc.mpc.horizon + 2
    if sig.kind == "synthetic":
        w = synthetic_regd(sig.seed, n_samples=n_after, dt=sc.dt).values
    else:
        s = load_series(sig.path, dt=sc.dt)
        if len(s) < n_after:
            raise ValueError(
                f"signal file {sig.path} holds {len(s)} samples, {n_after} needed"
            )
        w = s.values[:n_after]
    after = sig.bias_mw + sig.amplitude_mw * w
    ref = np.concatenate([np.full(warm, sig.bias_mw), after])
    # ease the held-flat warmup into the signal so the splice does not
    # inject a step the fleet has to absorb as one admission burst
    blend = min(30, warm)
    if blend > 1:
        frac = np.linspace(0.0, 1.0, blend, endpoint=False)
        ref[warm - blend : warm] = sig.bias_mw + frac * (after[0] - sig.bias_mw)
    return ref


def _fit_signal_model(sc: Scenario):
    sig = sc.signal
    if sig.kind == "synthetic":
        raw = synthetic_regd(sig.seed + _AR_TRAIN_SEED_OFFSET, n_samples=1800, dt=sc.dt)
    else:
        raw = load_series(sig.path, dt=sc.dt)
    return fit_ar(scale_to_power(raw, sig.bias_mw, sig.amplitude_mw), _AR_ORDER)


def _make_forecaster(sc: Scenario, r_full: np.ndarray):
    mode = sc.mpc.forecast_mode
    if mode == "perfect":

        def fc(history, steps):
            g = np.asarray(history).size
            return r_full[g : g + steps]

        return fc
    if mode == "ar":
        model = _fit_signal_model(sc)

        def fc(history, steps):
            h = np.asarray(history, dtype=np.float64)
            if h.size < _AR_ORDER:
                h = np.concatenate([np.full(_AR_ORDER - h.size, h[0]), h])
            return forecast(model, h, steps)

        return fc
    return None


def _score_run(sc: Scenario, r_full: np.ndarray, warm: int, y: np.ndarray) -> ScoreReport:
    factor = _scoring_factor(sc.dt)
    n_r = REFERENCE_MIN_SAMPLES * factor
    n_y = RESPONSE_MIN_SAMPLES * factor
    r10 = to_scoring_grid(Series(r_full[warm : warm + n_r], dt=sc.dt))
    y10 = to_scoring_grid(Series(y[:n_y], dt=sc.dt))
    bias, amp = sc.signal.bias_mw, sc.signal.amplitude_mw
    si = ScoreInputs(
        r=r10.values,
        y=y10.values,
        r_max_mw=bias + amp,
        r_min_mw=bias - amp,
        r0=bias,
        treg=1.0,
        areg=amp,
        rr10_mw=0.25 * amp,
    )
    rep = pjm_scores(si)
    n36 = min(int(round(3600.0 / sc.dt)), y.size)
    refs, outs = [r_full[warm : warm + n36]], [y[:n36]]
    return replace(
        rep,
        rmae=rmae(refs, outs, bias + amp, bias - amp),
        rrmse=rrmse(refs, outs, bias + amp, bias - amp),
    )


def run_scenario(sc: Scenario, seed: int | None = None) -> RunRecord:
    """Run one scenario under one seed and score it.

    The warmup segment runs the full method against a constant
    reference (settling the fleet and warming the horizon cache) and is
    not recorded.  Any module failure aborts with the step index and
    stage attached.
    """
    seed = int(sc.seeds[0] if seed is None else seed)
    dt = sc.dt
    steps = int(round(sc.duration_s / dt))
    warm = int(round(sc.warmup_s / dt))
    total = warm + steps
    r_full = _reference_mw(sc, steps, warm)
    forecaster = _make_forecaster(sc, r_full)
    needs_mpc = sc.mpc.forecast_mode in ("perfect", "ar")
    vbp = vb_params(sc)
    cache = HorizonCache() if needs_mpc else None
    p_rate_kw = sc.device.p_rate_kw

    if sc.vb_plant:
        state, _ = nominal_point(vbp, sc.signal.bias_mw)
        u_prev = output_mw(state, vbp)
        fl = co = None
        req_ids = None
    else:
        fl = make_fleet(
            sc.n_devices,
            sc.device,
            sc.draw,
            seed=seed,
            dt=dt,
            packet_steps=sc.policy.packet_steps(dt),
        )
        co = Coordinator(params=sc.device, policy=sc.policy, dt=dt, seed=seed)
        req_ids = np.array([], dtype=np.int64)
        u_prev = fl.aggregate_kw() / 1000.0

    t_arr = np.arange(steps) * dt
    r_arr = np.zeros(steps)
    u_arr = np.zeros(steps)
    y_arr = np.zeros(steps)
    x_on_arr = np.zeros(steps, dtype=np.int64)
    opt_arr = np.zeros(steps, dtype=np.int64)
    acc_arr = np.zeros(steps, dtype=np.int64)
    den_arr = np.zeros(steps, dtype=np.int64)
    cmd_arr = np.zeros(steps)
    ms_arr = np.zeros(steps)
    ev_col = [""] * steps
    ev_log: list[str] = []
    ev_run: list[str] = []
    # smoothed request supply seen by the coordinator; denied devices
    # re-request, so the live rate runs well above the mean-field one
    supply = None

    for g in range(total):
        stage = "controller"
        try:
            if sc.vb_plant:
                x_on = int(round(state.x2 + state.x3))
                obs = state
            else:
                x_on = int(np.count_nonzero(fl.mode != OFF))
                obs = observe_fleet(fl, vbp) if needs_mpc else None
            measured_kw = p_rate_kw * x_on
            lin_provider = lambda o, u0=u_prev: linearize(o, u0, vbp)
            before = len(ev_log)
            tic = time.perf_counter()
            u_cmd = step_controller(
                obs,
                r_full[: g + 1],
                forecaster,
                sc.mpc,
                lin_provider,
                vbp,
                events=ev_log,
                cache=cache,
                supply_mw=supply,
            )
            ms = (time.perf_counter() - tic) * 1e3

            if sc.vb_plant:
                stage = "plant"
                lo, hi = feasible_input_bounds(state, vbp)
                u_rec = min(max(u_cmd, lo), hi)
                state = vb_step(state, u_rec, vbp, validate=False)
                y_mw = output_mw(state, vbp)
                n_opt = int(round(state.x3))
                acc = den = 0
            else:
                stage = "coordinator"
                n_req = int(req_ids.size)
                dec = co.decide(
                    req_ids, u_cmd * 1000.0, measured_kw, request_counts=fl.request_counts
                )
                u_rec = (measured_kw + p_rate_kw * len(dec)) / 1000.0
                stage = "fleet"
                req_ids, agg_kw, n_opt = fleet_step(fl, dec)
                y_mw = agg_kw / 1000.0
                acc, den = len(dec), n_req - len(dec)
                sup_now = p_rate_kw * req_ids.size / 1000.0
                supply = (
                    sup_now if supply is None
                    else supply + _SUPPLY_EWMA * (sup_now - supply)
                )
        except Exception as exc:
            raise RuntimeError(f"run aborted at step {g} ({stage}): {exc}") from exc

        u_prev = u_rec
        if g >= warm:
            i = g - warm
            r_arr[i] = r_full[g]
            u_arr[i] = u_rec
            y_arr[i] = y_mw
            x_on_arr[i] = x_on
            opt_arr[i] = n_opt
            acc_arr[i] = acc
            den_arr[i] = den
            cmd_arr[i] = u_cmd
            ms_arr[i] = ms
            new = ev_log[before:]
            if new:
                ev_col[i] = "|".join(new)
                ev_run.extend(f"{i}:{e}" for e in new)

    rep = _score_run(sc, r_full, warm, y_arr)
    cyc = 0.0 if sc.vb_plant else cycling_report(fl, elapsed_s=total * dt)["mean_cycles_per_day"]
    table = {
        "t_s": t_arr,
        "r_mw": r_arr,
        "u_mw": u_arr,
        "y_mw": y_arr,
        "x_on": x_on_arr,
        "opt_outs": opt_arr,
        "accepts": acc_arr,
        "denies": den_arr,
    }
    timing = {"t_s": t_arr, "u_cmd_mw": cmd_arr, "solve_ms": ms_arr, "events": ev_col}
    return RunRecord(
        seed=seed,
        config_hash=config_hash(sc),
        table=table,
        timing=timing,
        report=rep,
        events=tuple(ev_run),
        mean_cycles_per_day=cyc,
    )


def _fmt(v) -> str:
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return format(float(v), ".10g")
    return str(v)


def table_to_csv(table: dict, columns: tuple[str, ...]) -> str:
    cols = [[_fmt(v) for v in table[name]] for name in columns]
    lines = [",".join(columns)]
    lines.extend(",".join(row) for row in zip(*cols))
    return "\n".join(lines) + "\n"


def _package_version() -> str:
    try:
        from importlib.metadata import version

        return version("pemreg")
    except Exception:
        return "unknown"


def write_run(out_dir, sc: Scenario, rec: RunRecord) -> Path:
    """Persist one run: deterministic step table, timing sidecar, and a
    JSON manifest.  Returns the run directory."""
    out = Path(out_dir) / f"{rec.config_hash}_s{rec.seed}"
    out.mkdir(parents=True, exist_ok=True)
    (out / "run.csv").write_text(table_to_csv(rec.table, RUN_COLUMNS))
    (out / "timing.csv").write_text(table_to_csv(rec.timing, TIMING_COLUMNS))
    manifest = {
        "schema_version": SCHEMA_VERSION,
        "config_hash": rec.config_hash,
        "seed": rec.seed,
        "package": _package_version(),
        "scenario": scenario_to_dict(sc),
        "scores": {m: getattr(rec.report, m) for m in METRIC_COLUMNS},
        "mean_cycles_per_day": rec.mean_cycles_per_day,
        "n_events": len(rec.events),
    }
    (out / "manifest.json").write_text(json.dumps(manifest, sort_keys=True, indent=2) + "\n")
    return out


def _with_axis(sc: Scenario, path: str, value):
    parts = path.split(".")

    def rec(obj, parts):
        if len(parts) == 1:
            return replace(obj, **{parts[0]: value})
        return replace(obj, **{parts[0]: rec(getattr(obj, parts[0]), parts[1:])})

    try:
        return rec(sc, parts)
    except TypeError as exc:
        raise ValueError(f"unknown sweep axis {path!r}") from exc


def _run_cell(job):
    sc, seed = job
    out = {m: float("nan") for m in METRIC_COLUMNS}
    out["mean_cycles_per_day"] = float("nan")
    out["floor_margin_mw"] = float("nan")
    try:
        rec = run_scenario(sc, seed=seed)
    except Exception as exc:
        out["status"] = f"error: {exc}"
        return out
    for m in METRIC_COLUMNS:
        out[m] = getattr(rec.report, m)
    out["mean_cycles_per_day"] = rec.mean_cycles_per_day
    floor = sc.device.p_rate_kw * 1e-3 * rec.table["x_on"]
    out["floor_margin_mw"] = float(np.min(rec.table["u_mw"] - floor))
    out["status"] = "ok"
    return out


def sweep(
    base: Scenario,
    axes: dict[str, tuple],
    seeds: tuple[int, ...] | None = None,
    workers: int = 1,
) -> list[dict]:
    """Run the cartesian product of axis values across seeds.

    axes maps dotted field paths ("policy.delta_p_s") to value lists.
    Failures are recorded per cell and the sweep continues.  Rows come
    back in grid order regardless of worker count.
    """
    if not axes or any(len(v) == 0 for v in axes.values()):
        raise ValueError("axes must be nonempty")
    seeds = base.seeds if seeds is None else tuple(int(s) for s in seeds)
    names = list(axes)
    jobs = []
    keys = []
    for values in product(*(axes[n] for n in names)):
        sc = base
        for name, v in zip(names, values):
            sc = _with_axis(sc, name, v)
        for s in seeds:
            jobs.append((sc, s))
            keys.append(dict(zip(names, values), seed=s))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            outs = list(ex.map(_run_cell, jobs))
    else:
        outs = [_run_cell(j) for j in jobs]
    return [dict(key, **out) for key, out in zip(keys, outs)]


def sweep_columns(axes: dict) -> tuple[str, ...]:
    return tuple(axes) + ("seed",) + METRIC_COLUMNS + (
        "mean_cycles_per_day",
        "floor_margin_mw",
        "status",
    )


def rows_to_csv(rows: list[dict], columns: tuple[str, ...]) -> str:
    lines = [",".join(columns)]
    for row in rows:
        lines.append(",".join(_fmt(row[c]) for c in columns))
    return "\n".join(lines) + "\n"


def report(rows: list[dict], axes: tuple[str, ...]) -> tuple[list[dict], str]:
    """Aggregate sweep rows over seeds: mean and std per metric per
    cell, plus a text summary that flags precompensation making
    tracking worse and any failed cells."""
    groups: dict[tuple, list[dict]] = {}
    for row in rows:
        groups.setdefault(tuple(row[a] for a in axes), []).append(row)
    stats = ("mean_cycles_per_day",)
    out_rows = []
    lines = []
    for key, members in groups.items():
        ok = [m for m in members if m["status"] == "ok"]
        agg = dict(zip(axes, key))
        agg["n_ok"] = len(ok)
        agg["n_err"] = len(members) - len(ok)
        for m in METRIC_COLUMNS + stats:
            vals = [r[m] for r in ok]
            agg[f"{m}_mean"] = float(np.mean(vals)) if vals else float("nan")
            agg[f"{m}_std"] = float(np.std(vals)) if vals else float("nan")
        out_rows.append(agg)
        cell = ", ".join(f"{a}={v}" for a, v in zip(axes, key))
        lines.append(
            f"{cell}: composite {agg['composite_mean']:.4f} +/- {agg['composite_std']:.4f}, "
            f"rrmse {agg['rrmse_mean']:.4f} +/- {agg['rrmse_std']:.4f}"
        )
        if agg["n_err"]:
            lines.append(f"  WARNING: {agg['n_err']} failed run(s) in this cell")

    mode_axis = next((a for a in axes if a.endswith("forecast_mode")), None)
    if mode_axis is not None:
        cells = {tuple(r[a] for a in axes if a != mode_axis): {} for r in out_rows}
        rest = [a for a in axes if a != mode_axis]
        for r in out_rows:
            cells[tuple(r[a] for a in rest)][r[mode_axis]] = r
        for key, by_mode in cells.items():
            base_r = by_mode.get("passthrough")
            mpc_r = by_mode.get("perfect")
            if base_r is None or mpc_r is None:
                continue
            if mpc_r["rrmse_mean"] > base_r["rrmse_mean"]:
                cell = ", ".join(f"{a}={v}" for a, v in zip(rest, key))
                lines.append(
                    f"ORDERING VIOLATION: perfect-forecast rrmse "
                    f"{mpc_r['rrmse_mean']:.4f} exceeds passthrough "
                    f"{base_r['rrmse_mean']:.4f} at {cell}"
                )
    return out_rows, "\n".join(lines) + "\n"


@dataclass(frozen=True)
class Preset:
    base: Scenario
    axes: dict
    note: str


def _paper_base(**over) -> Scenario:
    kw = dict(
        n_devices=6000,
        signal=SignalSpec(bias_mw=3.7, amplitude_mw=1.0),
        seeds=(1, 2, 3, 4, 5),
    )
    kw.update(over)
    return Scenario(**kw)


PRESETS = {
    "fig5a": Preset(
        base=_paper_base(mpc=MpcConfig(horizon=90, p=1, forecast_mode="perfect")),
        axes={
            "policy.delta_p_s": (180.0, 300.0),
            "mpc.horizon": (30, 60, 90, 120, 150),
            "mpc.forecast_mode": ("passthrough", "perfect"),
            "signal.seed": SIGNAL_SUITE_SEEDS,
        },
        note="absolute-error objective; performance map over horizon and "
        "packet length (passthrough rows repeat across horizon)",
    ),
    "fig5b": Preset(
        base=_paper_base(mpc=MpcConfig(horizon=90, p=2, forecast_mode="perfect")),
        axes={
            "policy.delta_p_s": (180.0, 300.0),
            "mpc.horizon": (30, 60, 90, 120, 150),
            "mpc.forecast_mode": ("passthrough", "perfect"),
            "signal.seed": SIGNAL_SUITE_SEEDS,
        },
        note="squared-error objective counterpart of fig5a",
    ),
    "fig8": Preset(
        base=_paper_base(
            policy=PacketPolicy(randomize_at="coordinator"),
            mpc=MpcConfig(forecast_mode="passthrough"),
        ),
        axes={
            "policy.delta_p_s": (180.0, 300.0),
            "policy.delta_a_s": (0.0, 60.0, 120.0),
            "signal.seed": SIGNAL_SUITE_SEEDS,
        },
        note="packet-length randomization width against tracking error "
        "and device cycling, no precompensation",
    ),
    "fig9": Preset(
        base=_paper_base(mpc=MpcConfig(horizon=150, p=1, t_d=5, forecast_mode="perfect")),
        axes={
            "policy.delta_p_s": (60.0, 180.0, 300.0),
            "mpc.forecast_mode": (
                "passthrough",
                "delay-precompensator",
                "perfect",
                "ar",
            ),
            "signal.seed": SIGNAL_SUITE_SEEDS,
        },
        note="market scores per method and packet length under a 10 s "
        "communication delay",
    ),
}
