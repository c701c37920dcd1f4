"""Reference-signal handling: series container, autocorrelation analysis,
autoregressive fitting and forecasting, and a synthetic regulation-signal
generator used when no historical data is on hand.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from datetime import datetime, timezone

import numpy as np

__all__ = [
    "Series",
    "ArModel",
    "load_series",
    "scale_to_power",
    "acf",
    "pacf",
    "fit_ar",
    "forecast",
    "forecast_variance",
    "variability_profile",
    "synthetic_regd",
    "SYNTH_AR_COEFFS",
]


@dataclass(frozen=True)
class Series:
    """Uniformly sampled real-valued series.

    Attributes
    ----------
    values : np.ndarray
        Sample values, finite, length >= 1.
    dt : float
        Sample spacing in seconds, > 0.
    t0 : float
        Epoch seconds of the first sample (UTC).
    """

    values: np.ndarray
    dt: float
    t0: float = 0.0

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).copy()
        if v.ndim != 1 or v.size < 1:
            raise ValueError("series must be one-dimensional with at least one sample")
        if not np.all(np.isfinite(v)):
            bad = int(np.flatnonzero(~np.isfinite(v))[0])
            raise ValueError(f"non-finite sample at index {bad}")
        if not (np.isfinite(self.dt) and self.dt > 0):
            raise ValueError(f"dt must be a positive finite number, got {self.dt}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    def __len__(self) -> int:
        return self.values.size

    def time(self) -> np.ndarray:
        return self.t0 + self.dt * np.arange(self.values.size)


@dataclass(frozen=True)
class ArModel:
    """Autoregressive model x[k] = mu + sum_i phi[i] (x[k-i] - mu) + e[k].

    The lag polynomial must be stationary: all roots of
    z^g - phi[0] z^(g-1) - ... - phi[g-1] strictly inside the unit circle.
    """

    phi: tuple[float, ...]
    mu: float
    sigma2: float

    def __post_init__(self):
        phi = tuple(float(p) for p in self.phi)
        if len(phi) < 1:
            raise ValueError("model order must be at least 1")
        if not all(np.isfinite(phi)) or not np.isfinite(self.mu):
            raise ValueError("model parameters must be finite")
        if self.sigma2 < 0:
            raise ValueError(f"innovation variance must be >= 0, got {self.sigma2}")
        roots = np.roots(np.concatenate(([1.0], -np.asarray(phi))))
        mags = np.abs(roots)
        if np.any(mags >= 1.0 - 1e-12):
            raise ValueError(
                "unstable autoregressive fit: root magnitudes "
                + ", ".join(f"{m:.6f}" for m in sorted(mags, reverse=True))
            )
        object.__setattr__(self, "phi", phi)

    @property
    def order(self) -> int:
        return len(self.phi)


def load_series(path, dt: float) -> Series:
    """Load a series from CSV: one value per line, optional leading
    ISO-8601 timestamp column.  Missing or malformed samples are errors.
    """
    values: list[float] = []
    stamps: list[float] = []
    with open(path, newline="") as fh:
        for lineno, row in enumerate(csv.reader(fh), start=1):
            row = [c.strip() for c in row if c.strip() != ""]
            if not row:
                raise ValueError(f"{path}:{lineno}: empty line")
            if len(row) == 1:
                raw = row[0]
            elif len(row) == 2:
                try:
                    ts = datetime.fromisoformat(row[0].replace("Z", "+00:00"))
                except ValueError as exc:
                    raise ValueError(f"{path}:{lineno}: bad timestamp {row[0]!r}") from exc
                if ts.tzinfo is None:
                    ts = ts.replace(tzinfo=timezone.utc)
                stamps.append(ts.timestamp())
                raw = row[1]
            else:
                raise ValueError(f"{path}:{lineno}: expected 1 or 2 columns, got {len(row)}")
            try:
                x = float(raw)
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: bad value {raw!r}") from exc
            if not np.isfinite(x):
                raise ValueError(f"{path}:{lineno}: non-finite value {raw!r}")
            values.append(x)
    if not values:
        raise ValueError(f"{path}: no samples")
    if stamps and len(stamps) != len(values):
        raise ValueError(f"{path}: timestamp column present on some lines only")
    t0 = 0.0
    if stamps:
        t0 = stamps[0]
        gaps = np.diff(np.asarray(stamps))
        bad = np.flatnonzero(np.abs(gaps - dt) > 1e-6 * max(1.0, dt))
        if bad.size:
            k = int(bad[0])
            raise ValueError(
                f"{path}: non-uniform spacing at line {k + 2}: "
                f"gap {gaps[k]:.6f} s, expected {dt} s (missing samples are not interpolated)"
            )
    return Series(np.asarray(values), dt=dt, t0=t0)


def scale_to_power(s: Series, bias: float, amplitude: float) -> Series:
    """Affine map out[k] = bias + amplitude * s[k] (units decided by caller)."""
    return Series(bias + amplitude * s.values, dt=s.dt, t0=s.t0)


def _autocov(x: np.ndarray, max_lag: int) -> np.ndarray:
    n = x.size
    xc = x - x.mean()
    c = np.empty(max_lag + 1)
    for lag in range(max_lag + 1):
        # biased (1/n) normalization keeps the covariance sequence
        # positive semidefinite, which the lattice recursion relies on
        c[lag] = np.dot(xc[: n - lag], xc[lag:]) / n
    return c


def acf(s: Series, max_lag: int) -> np.ndarray:
    """Sample autocorrelation rho[0..max_lag], biased normalization."""
    if max_lag < 1:
        raise ValueError("max_lag must be >= 1")
    if max_lag >= len(s):
        raise ValueError(f"max_lag {max_lag} must be < series length {len(s)}")
    c = _autocov(s.values, max_lag)
    if c[0] <= 0.0:
        raise ValueError("series is constant; autocorrelation undefined")
    return c / c[0]


def pacf(s: Series, max_lag: int) -> np.ndarray:
    """Partial autocorrelation via the Levinson-Durbin lattice recursion.

    Returns an array of length max_lag + 1 with the lag-0 entry fixed at
    1.0; entry l is the last coefficient of the order-l Yule-Walker
    solution.
    """
    rho = acf(s, max_lag)
    out = np.empty(max_lag + 1)
    out[0] = 1.0
    phi = np.zeros(max_lag + 1)
    prev = np.zeros(max_lag + 1)
    err = 1.0
    for l in range(1, max_lag + 1):
        if err <= 1e-14:
            raise ValueError(f"degenerate autocorrelation at order {l}: zero prediction error")
        k = (rho[l] - np.dot(prev[1:l], rho[l - 1:0:-1])) / err
        phi[1:l] = prev[1:l] - k * prev[l - 1:0:-1]
        phi[l] = k
        err *= 1.0 - k * k
        out[l] = k
        prev[: l + 1] = phi[: l + 1]
    return out


def fit_ar(s: Series, order: int) -> ArModel:
    """Fit an AR(order) model by solving the Yule-Walker system built
    from the sample autocorrelation."""
    if order < 1:
        raise ValueError("order must be >= 1")
    rho = acf(s, order)
    c0 = _autocov(s.values, 0)[0]
    toe = np.empty((order, order))
    for i in range(order):
        for j in range(order):
            toe[i, j] = rho[abs(i - j)]
    phi = np.linalg.solve(toe, rho[1 : order + 1])
    sigma2 = float(c0 * (1.0 - np.dot(phi, rho[1 : order + 1])))
    sigma2 = max(sigma2, 0.0)
    return ArModel(phi=tuple(phi), mu=float(s.values.mean()), sigma2=sigma2)


def forecast(model: ArModel, history: np.ndarray, steps: int) -> np.ndarray:
    """Iterated conditional-mean prediction of the next `steps` samples.

    `history` must hold at least `model.order` past samples, most recent
    last.  Step j of the returned array is the j+1 step ahead mean.
    """
    g = model.order
    hist = np.asarray(history, dtype=np.float64)
    if hist.size < g:
        raise ValueError(f"history holds {hist.size} samples, model order {g} required")
    if steps < 0:
        raise ValueError("steps must be >= 0")
    buf = list(hist[-g:] - model.mu)
    out = np.empty(steps)
    for j in range(steps):
        nxt = 0.0
        for i, p in enumerate(model.phi):
            nxt += p * buf[-1 - i]
        buf.append(nxt)
        out[j] = nxt + model.mu
    return out


def forecast_variance(model: ArModel, steps: int) -> np.ndarray:
    """Prediction-error variance of the h step ahead forecast, h=1..steps.

    Computed from the impulse response of the lag polynomial; pairs with
    `forecast` to give mean +/- z * sqrt(variance) bands.
    """
    if steps < 0:
        raise ValueError("steps must be >= 0")
    psi = np.zeros(steps)
    if steps:
        psi[0] = 1.0
    for j in range(1, steps):
        acc = 0.0
        for i, p in enumerate(model.phi, start=1):
            if j - i >= 0:
                acc += p * psi[j - i]
        psi[j] = acc
    return model.sigma2 * np.cumsum(psi * psi)


_BUCKETS = {
    "minute-of-hour": (60, 60.0, 3600.0),
    "hour-of-day": (24, 3600.0, 86400.0),
    "day-of-week": (7, 86400.0, 7 * 86400.0),
    "month-of-year": (12, None, None),
}


def variability_profile(s: Series, bucket: str) -> np.ndarray:
    """Mean variance of the series grouped by calendar bucket.

    For each occurrence of a bucket index (say, minute 7 of each hour in
    the span) the sample variance over that occurrence is taken, and
    occurrences are averaged.  The series must span at least one full
    bucket cycle.
    """
    if bucket not in _BUCKETS:
        raise ValueError(f"unknown bucket {bucket!r}; choose one of {sorted(_BUCKETS)}")
    n_idx, width, cycle = _BUCKETS[bucket]
    t = s.time()
    if bucket == "month-of-year":
        stamps = [datetime.fromtimestamp(tk, tz=timezone.utc) for tk in t]
        idx = np.asarray([st.month - 1 for st in stamps])
        occ = np.asarray([st.year * 12 + (st.month - 1) for st in stamps])
        span_ok = (t[-1] - t[0]) >= 365 * 86400.0
    else:
        idx = ((t % cycle) // width).astype(np.int64)
        idx = np.minimum(idx, n_idx - 1)
        occ = (t // cycle).astype(np.int64)
        span_ok = (t[-1] - t[0]) >= cycle - width
    if not span_ok:
        raise ValueError(f"series spans less than one full {bucket} cycle")
    sums = {}
    for k in range(t.size):
        key = (int(occ[k]), int(idx[k]))
        sums.setdefault(key, []).append(s.values[k])
    acc = np.zeros(n_idx)
    cnt = np.zeros(n_idx)
    for (_, b), vals in sums.items():
        if len(vals) >= 2:
            acc[b] += np.var(vals)
            cnt[b] += 1
    out = np.zeros(n_idx)
    nz = cnt > 0
    out[nz] = acc[nz] / cnt[nz]
    return out


# Generator constants for regulation-like test signals.  The lag
# polynomial has poles at 0.985 and 0.9935 e^{+-i 2 pi/120}: moderate
# mean reversion plus a lightly damped four-minute swing at a 2 s sample
# time.  The swing carries the ramp content; its light damping keeps the
# signal forecastable a minute or two ahead.
SYNTH_AR_COEFFS = (2.96927688, -2.94155498, 0.97223662)
_SYNTH_BURN_IN = 4000


def _stationary_std(phi: tuple[float, float, float]) -> float:
    g = len(phi)
    comp = np.zeros((g, g))
    comp[0, :] = phi
    comp[1:, :-1] = np.eye(g - 1)
    q = np.zeros((g, g))
    q[0, 0] = 1.0
    vec = np.linalg.solve(np.eye(g * g) - np.kron(comp, comp), q.ravel())
    return float(np.sqrt(vec.reshape(g, g)[0, 0]))


def synthetic_regd(
    seed: int,
    n_samples: int,
    dt: float = 2.0,
    t0: float = 0.0,
    marginal_std: float = 0.42,
    burst_gain: float = 1.0,
    burst_decay_min: float = 4.0,
) -> Series:
    """Synthetic normalized regulation signal in [-1, 1].

    An order-3 autoregression (coefficients `SYNTH_AR_COEFFS`) shaped to
    the texture of fast regulation dispatch: smooth, energy-neutral over
    the hour, with swings a few minutes long.  Innovation variance is
    modulated over the hour, peaking at the top of the hour and decaying
    with time constant `burst_decay_min`, so minute-of-hour variability
    profiles show the characteristic top-of-hour burst.  Values are
    clipped to [-1, 1]; clipping is rare at the default marginal spread.
    """
    if n_samples < 1:
        raise ValueError("n_samples must be >= 1")
    phi = SYNTH_AR_COEFFS
    sigma_a = marginal_std / _stationary_std(phi)
    total = n_samples + _SYNTH_BURN_IN
    rng = np.random.Generator(np.random.Philox(key=np.uint64(seed)))
    e = rng.standard_normal(total) * sigma_a
    # top-of-hour burst on the innovation scale
    t = t0 + dt * (np.arange(total) - _SYNTH_BURN_IN)
    minute = (t % 3600.0) / 60.0
    e *= 1.0 + burst_gain * np.exp(-minute / burst_decay_min)
    x = np.zeros(total)
    p1, p2, p3 = phi
    for k in range(3, total):
        x[k] = p1 * x[k - 1] + p2 * x[k - 2] + p3 * x[k - 3] + e[k]
    out = np.clip(x[_SYNTH_BURN_IN:], -1.0, 1.0)
    return Series(out, dt=dt, t0=t0)
