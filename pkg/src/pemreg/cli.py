"""Command-line front end.

Five subcommands: `run` executes one scenario across its seeds and
persists artifacts, `sweep` fans a scenario across parameter grids,
`score` re-reads manifests from disk, `fit-ar` reports the fitted
reference model, and `stats` summarizes a reference signal.  Scenarios
come from a YAML config file or a named preset.

Config schema (YAML, versioned):

    schema_version: 1
    scenario:        # any subset of Scenario fields; nested blocks
      n_devices: 6000
      signal: {seed: 3, bias_mw: 3.7, amplitude_mw: 1.0}
      mpc: {horizon: 90, p: 2, forecast_mode: perfect}
    axes:            # sweep only: dotted field path -> value list
      policy.delta_p_s: [180.0, 300.0]
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import numpy as np
import yaml

from .harness import (
    PRESETS,
    SCHEMA_VERSION,
    Scenario,
    _fit_signal_model,
    _reference_mw,
    config_hash,
    report,
    rows_to_csv,
    run_scenario,
    scenario_from_dict,
    sweep,
    sweep_columns,
    write_run,
)
from .scoring import METRIC_COLUMNS
from .signals import forecast

__all__ = ["main", "load_config"]


def load_config(path) -> tuple[Scenario, dict]:
    """Parse a YAML config into (scenario, axes); axes may be empty."""
    with open(path) as fh:
        raw = yaml.safe_load(fh)
    if not isinstance(raw, dict):
        raise ValueError(f"{path}: config must be a mapping")
    version = raw.get("schema_version")
    if version != SCHEMA_VERSION:
        raise ValueError(
            f"{path}: schema_version must be {SCHEMA_VERSION}, got {version!r}"
        )
    unknown = sorted(set(raw) - {"schema_version", "scenario", "axes"})
    if unknown:
        raise ValueError(f"{path}: unknown top-level key {unknown[0]!r}")
    sc = scenario_from_dict(raw.get("scenario") or {})
    axes = raw.get("axes") or {}
    if not isinstance(axes, dict):
        raise ValueError(f"{path}: axes must be a mapping of path -> values")
    axes = {str(k): tuple(v) for k, v in axes.items()}
    return sc, axes


def _resolve(args) -> tuple[Scenario, dict]:
    if args.config and args.preset:
        raise ValueError("--config and --preset are mutually exclusive")
    if args.config:
        sc, axes = load_config(args.config)
    elif args.preset:
        preset = PRESETS[args.preset]
        sc, axes = preset.base, dict(preset.axes)
    else:
        sc, axes = Scenario(), {}
    if args.seed is not None:
        sc = _replace(sc, seeds=(args.seed,))
    if args.out is not None:
        sc = _replace(sc, out_dir=str(args.out))
    return sc, axes


def _replace(sc: Scenario, **kw) -> Scenario:
    from dataclasses import replace

    return replace(sc, **kw)


def _cmd_run(args) -> int:
    sc, _ = _resolve(args)
    out_dir = Path(sc.out_dir)
    print(f"config {config_hash(sc)} -> {out_dir}")
    for seed in sc.seeds:
        rec = run_scenario(sc, seed=seed)
        path = write_run(out_dir, sc, rec)
        scores = "  ".join(f"{m} {getattr(rec.report, m):.4f}" for m in METRIC_COLUMNS)
        print(f"seed {seed}: {scores}")
        print(f"  wrote {path}")
    return 0


def _cmd_sweep(args) -> int:
    sc, axes = _resolve(args)
    if not axes:
        raise ValueError("sweep needs axes (config `axes:` block or a preset)")
    out_dir = Path(sc.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = sweep(sc, axes, workers=args.workers)
    cols = sweep_columns(axes)
    (out_dir / "sweep.csv").write_text(rows_to_csv(rows, cols))
    agg_rows, summary = report(rows, tuple(axes))
    agg_cols = tuple(agg_rows[0]) if agg_rows else ()
    (out_dir / "report.csv").write_text(rows_to_csv(agg_rows, agg_cols))
    (out_dir / "summary.txt").write_text(summary)
    print(summary, end="")
    print(f"wrote {out_dir / 'sweep.csv'} ({len(rows)} rows)")
    return 0


def _cmd_score(args) -> int:
    root = Path(args.out if args.out is not None else "runs")
    manifests = sorted(root.glob("**/manifest.json"))
    if not manifests:
        print(f"no manifests under {root}", file=sys.stderr)
        return 1
    by_hash: dict[str, list[dict]] = {}
    for path in manifests:
        man = json.loads(path.read_text())
        by_hash.setdefault(man["config_hash"], []).append(man)
        scores = "  ".join(f"{m} {man['scores'][m]:.4f}" for m in METRIC_COLUMNS)
        print(f"{man['config_hash']} seed {man['seed']}: {scores}")
    for h, mans in sorted(by_hash.items()):
        if len(mans) > 1:
            comp = float(np.mean([m["scores"]["composite"] for m in mans]))
            err = float(np.mean([m["scores"]["rrmse"] for m in mans]))
            print(f"{h} mean of {len(mans)} seeds: composite {comp:.4f}  rrmse {err:.4f}")
    return 0


def _cmd_fit_ar(args) -> int:
    sc, _ = _resolve(args)
    model = _fit_signal_model(sc)
    coeffs = "  ".join(f"phi{i + 1} {p:+.5f}" for i, p in enumerate(model.phi))
    print(f"order {model.order}: {coeffs}")
    print(f"mu {model.mu:.5f}  sigma2 {model.sigma2:.6g}")
    lead = max(1, int(round(60.0 / sc.dt)))
    ref = _reference_mw(sc, int(round(sc.duration_s / sc.dt)), 0)
    errs = []
    for k in range(model.order, ref.size - lead, lead):
        pred = forecast(model, ref[:k], lead)[-1]
        errs.append(pred - ref[k + lead - 1])
    rng_mw = 2.0 * sc.signal.amplitude_mw
    frac = float(np.sqrt(np.mean(np.square(errs)))) / rng_mw
    print(f"held-out {lead}-step-ahead rmse: {100.0 * frac:.1f}% of range")
    return 0


def _cmd_stats(args) -> int:
    sc, _ = _resolve(args)
    ref = _reference_mw(sc, int(round(sc.duration_s / sc.dt)), 0)
    inc = np.diff(ref)
    lag1 = float(np.corrcoef(ref[:-1], ref[1:])[0, 1]) if ref.size > 2 else float("nan")
    print(f"signal {sc.signal.kind} seed {sc.signal.seed}: {ref.size} samples at dt {sc.dt:g} s")
    print(f"mean {ref.mean():.4f} MW  std {ref.std():.4f}  min {ref.min():.4f}  max {ref.max():.4f}")
    print(f"step std {inc.std():.5f} MW  max |step| {np.abs(inc).max():.5f}  lag-1 autocorr {lag1:.4f}")
    return 0


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(prog="pemreg", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)
    commands = {
        "run": _cmd_run,
        "sweep": _cmd_sweep,
        "score": _cmd_score,
        "fit-ar": _cmd_fit_ar,
        "stats": _cmd_stats,
    }
    for name, fn in commands.items():
        p = sub.add_parser(name)
        p.add_argument("--config", metavar="PATH", help="YAML scenario file")
        p.add_argument("--preset", choices=sorted(PRESETS), help="named figure grid")
        p.add_argument("--seed", type=int, help="override the scenario seed list")
        p.add_argument("--out", metavar="DIR", help="artifact directory")
        if name == "sweep":
            p.add_argument("--workers", type=int, default=1, help="parallel runs")
        p.set_defaults(fn=fn)
    args = ap.parse_args(argv)
    try:
        return args.fn(args)
    except (ValueError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
