"""Tracking metrics and hourly regulation-market performance scores.

Two families live here.  The plain tracking errors, rmae and rrmse,
normalize by the reference range and average across a suite of signals.
The market scores grade one hour of operation on a 10 s grid: precision
compares the response against its assigned share of the regulation
signal sample by sample, accuracy correlates 31-sample windows of the
two at lags of 0..30 samples, delay rewards the lag that wins that
scan, and the composite is the plain average of the three.

The scored hour is 360 samples, but the recursions read past its end:
precision averages |UREG| over a 240-sample lookahead, and the accuracy
scan reaches 60 samples past the last scored index.  Callers therefore
supply at least 599 reference-side samples and 420 response samples;
lengths are validated up front instead of letting windows run short.

The scoresheet's accuracy branch zeroes a sample whenever the total
regulation capacity is nonzero, inverting the convention every other
branch follows; it reads like a transcription slip.  The corrected
branch is the default, and the literal one stays available behind
branch_as_printed=True for audit.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .signals import Series

__all__ = [
    "SCORING_DT_S",
    "SCORED_SAMPLES",
    "REFERENCE_MIN_SAMPLES",
    "RESPONSE_MIN_SAMPLES",
    "METRIC_COLUMNS",
    "ScoreInputs",
    "ScoreReport",
    "to_scoring_grid",
    "ramp_limited_basepoint",
    "rmae",
    "rrmse",
    "pjm_scores",
    "pjm_score_detail",
]

SCORING_DT_S = 10.0
SCORED_SAMPLES = 360
# precision reads |UREG[k..k+239]| at the last scored k
REFERENCE_MIN_SAMPLES = SCORED_SAMPLES + 239
# the accuracy scan shifts a 31-sample response window by up to 30
RESPONSE_MIN_SAMPLES = SCORED_SAMPLES + 60

METRIC_COLUMNS = ("rmae", "rrmse", "precision", "accuracy", "delay", "composite")


def _values(obj, name: str) -> np.ndarray:
    if isinstance(obj, Series):
        arr = obj.values
    else:
        arr = np.asarray(obj, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError(f"{name} must be a one-dimensional series")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite samples")
    return arr.astype(np.float64, copy=False)


def _span(r_max_mw: float, r_min_mw: float) -> float:
    span = float(r_max_mw) - float(r_min_mw)
    if not (np.isfinite(span) and span > 0):
        raise ValueError(
            f"reference range must satisfy r_max > r_min, got [{r_min_mw}, {r_max_mw}]"
        )
    return span


def to_scoring_grid(s: Series) -> Series:
    """Average non-overlapping blocks down to the 10 s scoring grid."""
    ratio = SCORING_DT_S / s.dt
    factor = int(round(ratio))
    if factor < 1 or abs(ratio - factor) > 1e-9:
        raise ValueError(
            f"dt={s.dt} s does not divide the {SCORING_DT_S:.0f} s scoring step"
        )
    if len(s) % factor:
        raise ValueError(
            f"length {len(s)} is not a whole number of {factor}-sample blocks; "
            "trim the series instead of letting the grid shift"
        )
    means = s.values.reshape(-1, factor).mean(axis=1)
    return Series(means, SCORING_DT_S, s.t0)


def ramp_limited_basepoint(r0, rr10_mw: float) -> np.ndarray:
    """Track r0 where it moves less than rr10_mw per step, else ramp toward it.

    Starts on r0[0]; each later sample either jumps straight to r0[k]
    (when the gap to the previous tracked value is inside the limit) or
    takes a full step of rr10_mw in its direction.
    """
    if not (np.isfinite(rr10_mw) and rr10_mw > 0):
        raise ValueError(f"ramp limit must be positive, got {rr10_mw}")
    vals = _values(r0, "r0")
    out = np.empty_like(vals)
    out[0] = vals[0]
    for k in range(1, vals.size):
        gap = vals[k] - out[k - 1]
        if abs(gap) < rr10_mw:
            out[k] = vals[k]
        else:
            out[k] = out[k - 1] + np.sign(gap) * rr10_mw
    return out


def _paired(refs, outs) -> list[tuple[np.ndarray, np.ndarray]]:
    refs = list(refs)
    outs = list(outs)
    if not refs or len(refs) != len(outs):
        raise ValueError(
            f"need matched nonempty reference/output suites, got {len(refs)} and {len(outs)}"
        )
    pairs = []
    for i, (r, y) in enumerate(zip(refs, outs)):
        rv = _values(r, f"refs[{i}]")
        yv = _values(y, f"outs[{i}]")
        if rv.size != yv.size:
            raise ValueError(
                f"pair {i} length mismatch: reference {rv.size}, output {yv.size}"
            )
        pairs.append((rv, yv))
    return pairs


def rmae(refs, outs, r_max_mw: float, r_min_mw: float) -> float:
    """Mean absolute tracking error per signal, normalized by the
    reference range, averaged over the suite."""
    span = _span(r_max_mw, r_min_mw)
    errs = [np.abs(y - r).sum() / (r.size * span) for r, y in _paired(refs, outs)]
    return float(np.mean(errs))


def rrmse(refs, outs, r_max_mw: float, r_min_mw: float) -> float:
    """RMS counterpart of rmae: per-signal root mean squared error over
    the range, averaged over the suite."""
    span = _span(r_max_mw, r_min_mw)
    errs = [
        np.sqrt(np.mean((y - r) ** 2)) / span for r, y in _paired(refs, outs)
    ]
    return float(np.mean(errs))


def _grid_values(obj, name: str) -> np.ndarray:
    if isinstance(obj, Series) and abs(obj.dt - SCORING_DT_S) > 1e-9:
        raise ValueError(
            f"{name} must sit on the {SCORING_DT_S:.0f} s scoring grid "
            f"(got dt={obj.dt} s); resample with to_scoring_grid first"
        )
    return _values(obj, name)


@dataclass(frozen=True)
class ScoreInputs:
    """One scored hour on the 10 s grid, everything in MW.

    r and y are the reference and the resource output.  r0 is the
    economic basepoint and treg/areg the total and assigned regulation
    capacities; scalars broadcast to the reference length.  rr10_mw
    caps how fast the tracked basepoint may move per step, and
    r_max_mw/r_min_mw normalize the regulation share of the reference.

    Reference-side series (r, r0, treg, areg) must all have the same
    length, at least 599 samples; y may be shorter but needs at least
    420 because the lag scan ends there.
    """

    r: np.ndarray
    y: np.ndarray
    r_max_mw: float
    r_min_mw: float
    r0: object = 3.7
    treg: object = 1.0
    areg: object = 1.0
    rr10_mw: float = 0.25

    def __post_init__(self):
        r = _grid_values(self.r, "r")
        y = _grid_values(self.y, "y")
        side = {}
        for name in ("r0", "treg", "areg"):
            raw = getattr(self, name)
            if np.ndim(raw) == 0 and not isinstance(raw, Series):
                side[name] = np.full(r.size, float(raw))
            else:
                side[name] = _grid_values(raw, name)
        lengths = {n: v.size for n, v in side.items()}
        lengths["r"] = r.size
        if len(set(lengths.values())) != 1:
            raise ValueError(f"reference-side series lengths differ: {lengths}")
        if r.size < REFERENCE_MIN_SAMPLES:
            raise ValueError(
                f"reference-side series need {REFERENCE_MIN_SAMPLES} samples to "
                f"score {SCORED_SAMPLES} (the last precision window reads "
                f"{SCORED_SAMPLES - 1 + 239}), got {r.size}"
            )
        if y.size < RESPONSE_MIN_SAMPLES:
            raise ValueError(
                f"response needs {RESPONSE_MIN_SAMPLES} samples (the lag scan "
                f"reads index {RESPONSE_MIN_SAMPLES - 1}), got {y.size}"
            )
        _span(self.r_max_mw, self.r_min_mw)
        if not (np.isfinite(self.rr10_mw) and self.rr10_mw > 0):
            raise ValueError(f"rr10_mw must be positive, got {self.rr10_mw}")
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "y", y)
        for name, arr in side.items():
            object.__setattr__(self, name, arr)


@dataclass(frozen=True)
class ScoreReport:
    """The four market scores plus suite tracking errors.

    rmae/rrmse default to nan so a report can carry market scores alone.
    """

    precision: float
    accuracy: float
    delay: float
    composite: float
    rmae: float = float("nan")
    rrmse: float = float("nan")

    def __post_init__(self):
        for name in ("precision", "accuracy", "delay", "composite"):
            v = getattr(self, name)
            if not np.isfinite(v) or v < -1e-12 or v > 1.0 + 1e-12:
                raise ValueError(f"{name} must lie in [0, 1], got {v}")
        for name in ("rmae", "rrmse"):
            v = getattr(self, name)
            if np.isfinite(v) and v < 0:
                raise ValueError(f"{name} cannot be negative, got {v}")


def pjm_score_detail(inputs: ScoreInputs, branch_as_printed: bool = False) -> dict:
    """Per-sample breakdown behind pjm_scores.

    Returns arrays over the 360 scored samples: "precision",
    "accuracy", "delay", the winning lag "n", and "slope_branch" (True
    where low reference variability switched the accuracy window from
    correlation to slope comparison), plus the intermediate "ureg",
    "ures", and "r0_bar" series.
    """
    n_s = SCORED_SAMPLES
    r, treg, areg = inputs.r, inputs.treg, inputs.areg
    span = _span(inputs.r_max_mw, inputs.r_min_mw)

    r0_bar = ramp_limited_basepoint(inputs.r0, inputs.rr10_mw)
    rhat = 2.0 * (r - inputs.r0) / span
    scale = np.divide(areg, treg, out=np.zeros_like(areg), where=treg != 0.0)
    ureg = np.where(treg != 0.0, scale * rhat, 0.0)
    ures = inputs.y[:RESPONSE_MIN_SAMPLES] - r0_bar[:RESPONSE_MIN_SAMPLES]

    # gates shared by several scores: a reference flat over 61 samples
    # scores nothing, and precision/delay also require the assigned
    # capacity to stay away from zero over the next 31 samples
    wr = sliding_window_view(r, 61)[:n_s]
    flat = wr.max(axis=1) == wr.min(axis=1)
    areg_ok = sliding_window_view(areg, 31)[:n_s].min(axis=1) != 0.0
    treg_k = treg[:n_s]

    cum = np.concatenate(([0.0], np.cumsum(np.abs(ureg))))
    mean240 = (cum[240 : 240 + n_s] - cum[:n_s]) / 240.0
    err = np.abs(ures[:n_s] - ureg[:n_s])
    with np.errstate(divide="ignore", invalid="ignore"):
        phat = np.clip(1.0 - err / mean240, 0.0, 1.0)
    # a dead regulation window asks for nothing; score full marks only
    # for doing exactly nothing
    phat = np.where(mean240 > 0.0, phat, (err == 0.0).astype(np.float64))
    precision = np.where((treg_k != 0.0) & ~flat & areg_ok, phat, 0.0)

    # accuracy: correlate the assigned signal window with the response
    # window at every lag, or compare slopes when the normalized
    # reference barely moves
    xr = np.divide(rhat, treg, out=np.zeros_like(rhat), where=treg != 0.0)
    x = np.clip(xr, -1.0, 1.0)
    wx = sliding_window_view(x, 31)[:n_s]
    xc = wx - wx.mean(axis=1, keepdims=True)
    xhat = np.sqrt((xc * xc).sum(axis=1) / 30.0)
    jm = np.arange(31, dtype=np.float64) - 15.0
    mutilde = (xc @ jm) / 2480.0

    w1 = sliding_window_view(ureg, 31)[:n_s]
    w1c = w1 - w1.mean(axis=1, keepdims=True)
    d1 = np.sqrt((w1c * w1c).sum(axis=1))

    wu = sliding_window_view(ures, 31)
    v2 = wu[np.arange(n_s)[:, None] + np.arange(31)[None, :]]
    v2c = v2 - v2.mean(axis=2, keepdims=True)
    num = np.einsum("kmj,kj->km", v2c, w1c)
    den = d1[:, None] * np.sqrt((v2c * v2c).sum(axis=2))
    rho = np.zeros_like(num)
    good = den > 0.0
    rho[good] = num[good] / den[good]

    muhat = (v2c @ jm) / 2480.0
    mu = 1.0 - np.abs(mutilde[:, None] - muhat)
    slope_branch = xhat < 0.05
    rho_t = np.where(slope_branch[:, None], mu, rho)

    pdel = np.minimum(1.0 - (np.arange(31, dtype=np.float64) - 1.0) / 30.0, 1.0)
    objective = np.clip(rho_t, 0.0, 1.0) / 3.0 + pdel[None, :] / 3.0
    n_k = objective.argmax(axis=1)
    inner = np.where(flat, 0.0, np.clip(rho_t[np.arange(n_s), n_k], 0.0, 1.0))

    if branch_as_printed:
        accuracy = np.where(treg_k != 0.0, 0.0, inner)
    else:
        accuracy = np.where(treg_k == 0.0, 0.0, inner)
    # no credit for lag when the window earned no accuracy
    delay = np.where(areg_ok & (inner > 0.0), pdel[n_k], 0.0)

    return {
        "precision": precision,
        "accuracy": accuracy,
        "delay": delay,
        "n": n_k,
        "slope_branch": slope_branch,
        "ureg": ureg,
        "ures": ures,
        "r0_bar": r0_bar,
    }


def pjm_scores(inputs: ScoreInputs, branch_as_printed: bool = False) -> ScoreReport:
    """Score one hour: mean per-sample precision, accuracy, and delay,
    and their plain average as the composite."""
    det = pjm_score_detail(inputs, branch_as_printed=branch_as_printed)
    p = float(det["precision"].mean())
    a = float(det["accuracy"].mean())
    d = float(det["delay"].mean())
    return ScoreReport(precision=p, accuracy=a, delay=d, composite=(p + a + d) / 3.0)
