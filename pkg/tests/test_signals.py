import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from pemreg.signals import (
    ArModel,
    Series,
    acf,
    fit_ar,
    forecast,
    forecast_variance,
    load_series,
    pacf,
    scale_to_power,
    synthetic_regd,
    variability_profile,
)


def ar_sample(phi, n, seed, sigma=1.0, mu=0.0, burn=1000):
    rng = np.random.default_rng(seed)
    g = len(phi)
    x = np.zeros(n + burn)
    e = rng.standard_normal(n + burn) * sigma
    for k in range(g, n + burn):
        x[k] = sum(phi[i] * x[k - 1 - i] for i in range(g)) + e[k]
    return x[burn:] + mu


class TestSeries:
    def test_basic(self):
        s = Series([1.0, 2.0, 3.0], dt=2.0, t0=100.0)
        assert len(s) == 3
        assert np.allclose(s.time(), [100.0, 102.0, 104.0])

    def test_rejects_nan(self):
        with pytest.raises(ValueError, match="index 1"):
            Series([1.0, np.nan, 3.0], dt=2.0)

    def test_rejects_bad_dt(self):
        with pytest.raises(ValueError, match="dt"):
            Series([1.0], dt=0.0)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            Series([], dt=1.0)

    def test_values_read_only(self):
        s = Series([1.0, 2.0], dt=1.0)
        with pytest.raises(ValueError):
            s.values[0] = 5.0


class TestLoadSeries:
    def test_plain_values(self, tmp_path):
        p = tmp_path / "sig.csv"
        p.write_text("1.5\n2.5\n-0.5\n")
        s = load_series(p, dt=2.0)
        assert np.allclose(s.values, [1.5, 2.5, -0.5])
        assert s.t0 == 0.0

    def test_timestamp_column(self, tmp_path):
        p = tmp_path / "sig.csv"
        p.write_text(
            "2024-01-01T00:00:00Z,1.0\n2024-01-01T00:00:02Z,2.0\n2024-01-01T00:00:04Z,3.0\n"
        )
        s = load_series(p, dt=2.0)
        assert s.t0 == 1704067200.0
        assert np.allclose(s.values, [1.0, 2.0, 3.0])

    def test_gap_is_error(self, tmp_path):
        p = tmp_path / "sig.csv"
        p.write_text("2024-01-01T00:00:00Z,1.0\n2024-01-01T00:00:06Z,2.0\n")
        with pytest.raises(ValueError, match="non-uniform"):
            load_series(p, dt=2.0)

    def test_bad_value_names_line(self, tmp_path):
        p = tmp_path / "sig.csv"
        p.write_text("1.0\nxyz\n")
        with pytest.raises(ValueError, match=":2:"):
            load_series(p, dt=2.0)

    def test_empty_file(self, tmp_path):
        p = tmp_path / "sig.csv"
        p.write_text("")
        with pytest.raises(ValueError, match="no samples"):
            load_series(p, dt=2.0)


class TestScaleToPower:
    def test_endpoints(self):
        s = Series([-1.0, 0.0, 1.0], dt=2.0)
        out = scale_to_power(s, bias=3.7, amplitude=1.0)
        assert np.allclose(out.values, [2.7, 3.7, 4.7])

    @given(
        bias=st.floats(-10, 10),
        amp=st.floats(-5, 5),
        vals=st.lists(st.floats(-1, 1), min_size=1, max_size=20),
    )
    @settings(max_examples=50, deadline=None)
    def test_affine(self, bias, amp, vals):
        s = Series(vals, dt=1.0)
        out = scale_to_power(s, bias, amp)
        assert np.allclose(out.values, bias + amp * s.values)


class TestAcf:
    def test_lag_zero_is_one(self):
        s = Series(np.random.default_rng(0).standard_normal(500), dt=1.0)
        assert acf(s, 10)[0] == 1.0

    def test_matches_double_loop_oracle(self):
        # direct O(n * lag) transcription of the biased estimator
        x = np.random.default_rng(3).standard_normal(200)
        s = Series(x, dt=1.0)
        got = acf(s, 12)
        xc = x - x.mean()
        n = len(x)
        for lag in range(13):
            c = 0.0
            for k in range(n - lag):
                c += xc[k] * xc[k + lag]
            c /= n
            c0 = np.dot(xc, xc) / n
            assert got[lag] == pytest.approx(c / c0, abs=1e-12)

    def test_white_noise_small(self):
        s = Series(np.random.default_rng(7).standard_normal(100_000), dt=1.0)
        assert np.max(np.abs(acf(s, 20)[1:])) < 0.02

    def test_ar1_theoretical(self):
        s = Series(ar_sample((0.8,), 200_000, seed=11), dt=1.0)
        rho = acf(s, 5)
        for lag in range(1, 6):
            assert rho[lag] == pytest.approx(0.8**lag, abs=0.03)

    def test_constant_is_error(self):
        with pytest.raises(ValueError, match="constant"):
            acf(Series(np.ones(50), dt=1.0), 3)

    @given(st.integers(0, 2**32 - 1))
    @settings(max_examples=25, deadline=None)
    def test_bounded_by_one(self, seed):
        x = np.random.default_rng(seed).standard_normal(64)
        rho = acf(Series(x, dt=1.0), 8)
        assert np.all(np.abs(rho) <= 1.0 + 1e-12)


class TestPacf:
    def test_lag1_equals_acf_lag1(self):
        s = Series(np.random.default_rng(5).standard_normal(300), dt=1.0)
        assert pacf(s, 6)[1] == acf(s, 6)[1]

    def test_matches_toeplitz_solve_oracle(self):
        # order-l Yule-Walker solved densely; last coefficient taken
        s = Series(ar_sample((0.5, -0.3, 0.2), 5000, seed=2), dt=1.0)
        rho = acf(s, 8)
        got = pacf(s, 8)
        for l in range(1, 9):
            toe = np.array([[rho[abs(i - j)] for j in range(l)] for i in range(l)])
            sol = np.linalg.solve(toe, rho[1 : l + 1])
            assert got[l] == pytest.approx(sol[-1], abs=1e-10)

    def test_ar1_cutoff(self):
        s = Series(ar_sample((0.7,), 100_000, seed=9), dt=1.0)
        p = pacf(s, 6)
        assert p[1] == pytest.approx(0.7, abs=0.02)
        assert np.max(np.abs(p[2:])) < 0.02

    def test_ar3_cutoff(self):
        phi = (0.6, 0.15, -0.2)
        s = Series(ar_sample(phi, 200_000, seed=13), dt=1.0)
        p = pacf(s, 6)
        assert p[3] == pytest.approx(phi[2], abs=0.02)
        assert np.max(np.abs(p[4:])) < 0.02


class TestFitAr:
    def test_recovers_ar3(self):
        phi = (0.6, 0.15, -0.2)
        s = Series(ar_sample(phi, 200_000, seed=21, sigma=1.3, mu=4.0), dt=1.0)
        m = fit_ar(s, 3)
        for got, want in zip(m.phi, phi):
            assert got == pytest.approx(want, abs=0.02)
        assert m.mu == pytest.approx(4.0, abs=0.05)
        assert m.sigma2 == pytest.approx(1.3**2, rel=0.05)

    def test_white_noise_near_zero(self):
        s = Series(np.random.default_rng(4).standard_normal(100_000), dt=1.0)
        m = fit_ar(s, 3)
        assert np.max(np.abs(m.phi)) < 0.02

    def test_constant_is_error(self):
        with pytest.raises(ValueError, match="constant"):
            fit_ar(Series(np.full(100, 2.0), dt=1.0), 2)

    def test_unstable_model_rejected(self):
        with pytest.raises(ValueError, match="unstable"):
            ArModel(phi=(1.2,), mu=0.0, sigma2=1.0)
        with pytest.raises(ValueError, match="unstable"):
            ArModel(phi=(0.9, 0.4), mu=0.0, sigma2=1.0)


class TestForecast:
    def test_zero_steps(self):
        m = ArModel(phi=(0.5,), mu=0.0, sigma2=1.0)
        assert forecast(m, [1.0, 2.0], 0).size == 0

    def test_zero_phi_returns_mean(self):
        m = ArModel(phi=(0.0, 0.0, 0.0), mu=0.3, sigma2=1.0)
        out = forecast(m, [9.0, 9.0, 9.0], 5)
        assert np.allclose(out, 0.3)

    def test_short_history_is_error(self):
        m = ArModel(phi=(0.5, 0.1), mu=0.0, sigma2=1.0)
        with pytest.raises(ValueError, match="history"):
            forecast(m, [1.0], 3)

    def test_ar1_closed_form(self):
        m = ArModel(phi=(0.5,), mu=2.0, sigma2=1.0)
        out = forecast(m, [6.0], 3)
        assert np.allclose(out, 2.0 + 4.0 * 0.5 ** np.arange(1, 4))

    def test_one_step_residual_variance(self):
        phi = (0.7, -0.2)
        sigma = 0.9
        x = ar_sample(phi, 50_000, seed=31, sigma=sigma)
        m = fit_ar(Series(x, dt=1.0), 2)
        resid = []
        for k in range(2, 20_000):
            resid.append(x[k] - forecast(m, x[:k], 1)[0])
        assert np.var(resid) == pytest.approx(sigma**2, rel=0.10)

    def test_variance_monotone_and_first_step(self):
        m = ArModel(phi=(0.7, -0.2), mu=0.0, sigma2=0.5)
        v = forecast_variance(m, 10)
        assert v[0] == pytest.approx(0.5)
        assert np.all(np.diff(v) >= -1e-15)


class TestVariabilityProfile:
    def test_constant_series_zero(self):
        s = Series(np.ones(7200), dt=1.0)
        assert np.allclose(variability_profile(s, "minute-of-hour"), 0.0)

    def test_minute_zero_peak(self):
        rng = np.random.default_rng(8)
        n = 4 * 1800  # 4 hours at dt=2
        t = 2.0 * np.arange(n)
        amp = np.where((t % 3600.0) < 60.0, 3.0, 0.5)
        s = Series(rng.standard_normal(n) * amp, dt=2.0)
        prof = variability_profile(s, "minute-of-hour")
        assert np.argmax(prof) == 0
        assert prof[0] > 4 * prof[30]

    def test_flat_for_white_noise(self):
        s = Series(np.random.default_rng(6).standard_normal(48 * 1800), dt=2.0)
        prof = variability_profile(s, "minute-of-hour")
        assert prof.std() / prof.mean() < 0.10

    def test_short_span_is_error(self):
        s = Series(np.random.default_rng(0).standard_normal(100), dt=1.0)
        with pytest.raises(ValueError, match="cycle"):
            variability_profile(s, "hour-of-day")

    def test_unknown_bucket(self):
        s = Series(np.zeros(10), dt=1.0)
        with pytest.raises(ValueError, match="unknown bucket"):
            variability_profile(s, "fortnight")


class TestSyntheticRegd:
    def test_deterministic(self):
        a = synthetic_regd(42, 1000)
        b = synthetic_regd(42, 1000)
        assert np.array_equal(a.values, b.values)
        c = synthetic_regd(43, 1000)
        assert not np.array_equal(a.values, c.values)

    def test_range(self):
        s = synthetic_regd(1, 20_000)
        assert s.values.min() >= -1.0 and s.values.max() <= 1.0

    def test_roughly_energy_neutral(self):
        for seed in range(101, 113):
            s = synthetic_regd(seed, 1800)
            assert abs(s.values.mean()) < 0.40

    def test_top_of_hour_burst(self):
        # innovation burst smears through the lag polynomial, so compare
        # the first ten minutes against the back half of the hour
        s = synthetic_regd(5, 24 * 1800)
        prof = variability_profile(s, "minute-of-hour")
        assert prof[:10].mean() > 1.15 * prof[30:].mean()

    def test_fitted_model_forecasts_within_range_fraction(self):
        # one-minute-ahead error, fitted on independent data
        train = synthetic_regd(900, 3 * 1800)
        m = fit_ar(train, 3)
        held = synthetic_regd(901, 1800).values
        errs = []
        for k in range(100, held.size - 30, 11):
            errs.append(abs(forecast(m, held[:k], 30)[-1] - held[k + 29]))
        assert np.mean(errs) < 0.15 * 2.0
