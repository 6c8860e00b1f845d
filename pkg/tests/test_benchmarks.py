import csv
import warnings

import numpy as np
import pytest

from sqvdlm import benchmarks as bm
from sqvdlm.benchmarks import (
    arma_filter,
    arma_state_space,
    dlm0,
    dlm_forecaster,
    holt_winters,
    sarima_fit,
    snaive,
)
from sqvdlm.dlm import Dlm0Params, build_dlm0, filter_arrays, forecast
from sqvdlm.em import EmConfig
from sqvdlm.errors import EstimationError
from sqvdlm.series import MonthlySeries, MonthStamp, split
from sqvdlm.synthetic import paper_like_config, simulate

START = MonthStamp(2004, 1)


def series(values, start=START):
    return MonthlySeries(start, np.asarray(values, dtype=float))


def seasonal_ar_series(seed, T=300, phi=0.8, burn=50):
    """(1,0,0)(0,1,0)_12 sample path."""
    rng = np.random.default_rng(seed)
    e = rng.standard_normal(T + burn)
    w = np.zeros(T + burn)
    y = np.zeros(T + burn)
    for t in range(T + burn):
        w[t] = (phi * w[t - 1] if t else 0.0) + e[t]
        y[t] = w[t] + (y[t - 12] if t >= 12 else 0.0)
    return series(y[burn:])


class TestSnaive:
    def test_paper_example_month(self):
        rng = np.random.default_rng(0)
        train = series(rng.normal(size=105) * 1000 + 5e4)  # Jan 2004 .. Sep 2012
        assert train.end == MonthStamp(2012, 9)
        out = snaive(train, 9)
        june_2012 = train.values[MonthStamp(2012, 6) - START]
        assert out.forecasts[8] == june_2012  # month 9 ahead is June 2013

    def test_lags_are_exact_and_wrap(self):
        vals = np.random.default_rng(1).random(40) * np.pi
        out = snaive(series(vals), 13)
        np.testing.assert_array_equal(out.forecasts[:12], vals[-12:])
        assert out.forecasts[12] == out.forecasts[0]
        np.testing.assert_array_equal(out.fitted, vals[:-12])
        assert len(out.fitted) == len(vals) - out.warmup

    def test_periodic_series_forecast_exactly(self):
        pattern = np.arange(12.0) ** 2
        out = snaive(series(np.tile(pattern, 5)), 24)
        np.testing.assert_array_equal(out.forecasts, np.tile(pattern, 2))

    def test_interval_widens_each_year(self):
        vals = np.random.default_rng(2).normal(size=48)
        out = snaive(series(vals), 25)
        length = out.upper - out.lower
        assert length[0] == length[11] < length[12] == length[23] < length[24]

    def test_short_training_rejected(self):
        with pytest.raises(ValueError):
            snaive(series(np.ones(11)), 3)


class TestHoltWinters:
    def test_noiseless_seasonal_trend_recovery(self):
        t = np.arange(120)
        y = 100 + 2 * t + 10 * np.sin(2 * np.pi * t / 12) + 3 * (t % 12 == 5)
        out = holt_winters(series(y[:108]), 12)
        mape = 100 * np.mean(np.abs(out.forecasts - y[108:]) / y[108:])
        assert mape < 0.1

    def test_constant_series(self):
        out = holt_winters(series(np.full(36, 42.0)), 15)
        np.testing.assert_allclose(out.forecasts, 42.0, rtol=1e-12)

    def test_weights_strictly_inside_unit_interval(self):
        rng = np.random.default_rng(3)
        y = np.cumsum(rng.normal(size=60)) * 5 + 100
        out = holt_winters(series(y), 12)
        for key in ("alpha", "beta", "gamma"):
            assert bm.HW_CLAMP <= out.model_meta[key] <= 1 - bm.HW_CLAMP

    def test_selected_sse_not_worse_than_grid(self):
        rng = np.random.default_rng(4)
        t = np.arange(72)
        y = 50 + 0.5 * t + 8 * np.cos(2 * np.pi * t / 12) + rng.normal(size=72)
        out = holt_winters(series(y), 12)
        assert out.model_meta["sse"] <= out.model_meta["grid_sse_min"]
        assert np.sum((y - out.fitted) ** 2) == pytest.approx(out.model_meta["sse"])

    def test_short_or_missing_rejected(self):
        with pytest.raises(ValueError):
            holt_winters(series(np.ones(23)), 3)
        y = np.ones(30)
        y[4] = np.nan
        with pytest.raises(ValueError):
            holt_winters(series(y), 3)


class TestSarima:
    def test_structured_kernel_matches_general_filter(self):
        order = (2, 0, 1, 1, 0, 1)
        raw = np.array([0.3, -0.2, 0.4, 0.5, -0.3])
        polys, _ = bm._sarima_polys(order, raw)
        w = np.random.default_rng(5).normal(size=60)
        innov, S, x_next, G = arma_filter(w, polys)
        spec = arma_state_space(polys)
        filt = filter_arrays(spec, w.reshape(-1, 1), np.ones(60, dtype=int))
        np.testing.assert_allclose(innov, filt.innovations[:, 0], rtol=1e-10, atol=1e-12)
        np.testing.assert_allclose(S, filt.innovation_cov[:, 0, 0], rtol=1e-10)
        np.testing.assert_allclose(x_next, G @ filt.filtered_mean[-1], rtol=1e-10, atol=1e-12)

    def test_pacf_transform_is_stationary(self):
        for raw in np.random.default_rng(6).normal(size=(50, 3)) * 3:
            phi = bm._constrain(raw)
            roots = np.roots(np.r_[1.0, -phi][::-1])
            assert np.all(np.abs(roots) > 1.0)

    def test_reported_aic_definition_and_minimum(self):
        out = sarima_fit(seasonal_ar_series(0, T=120), 12,
                         grid={"p": (0, 1), "q": (0,), "P": (0,), "Q": (0, 1)})
        meta = out.model_meta
        assert meta["aic"] == 2 * meta["k"] - 2 * meta["loglik"]
        converged = [c["aic"] for c in meta["candidates"] if c["converged"]]
        assert meta["aic"] == min(converged)
        lag = meta["order"][1] + 12 * meta["seasonal_order"][1]
        assert len(out.fitted) == 120 - lag == 120 - out.warmup
        assert np.all(out.lower < out.forecasts) and np.all(np.diff(out.upper - out.lower) >= 0)

    def test_integration_of_differenced_forecast(self):
        # pure seasonal random walk without noise-free structure: D=1 forecasts repeat last year
        y = seasonal_ar_series(7, T=96, phi=0.0)
        out = sarima_fit(y, 12, orders=[(0, 0, 0, 0, 1, 0)])
        np.testing.assert_allclose(out.forecasts, y.values[-12:], rtol=1e-12)

    def test_all_candidates_failing(self, monkeypatch):
        monkeypatch.setattr(bm, "_fit_candidate",
                            lambda y, order, n: bm.SarimaCandidate(order, False, message="boom"))
        with pytest.raises(EstimationError, match="boom"):
            sarima_fit(seasonal_ar_series(0, T=60), 12, orders=[(0, 0, 0, 0, 0, 0), (1, 0, 0, 0, 0, 0)])

    def test_short_training_rejected(self):
        with pytest.raises(ValueError):
            sarima_fit(series(np.ones(35)), 12)

    @pytest.mark.slow
    def test_selects_seasonal_difference_and_ar(self):
        hits = 0
        for seed in range(10):
            meta = sarima_fit(seasonal_ar_series(seed), 12).model_meta
            hits += meta["order"][0] > 0 and meta["seasonal_order"][1] == 1
        assert hits >= 8

    @pytest.mark.slow
    def test_white_noise_selects_null_model(self):
        hits = 0
        for seed in range(10):
            y = series(np.random.default_rng([11, seed]).normal(size=300))
            meta = sarima_fit(y, 12).model_meta
            hits += meta["order"] == [0, 0, 0] and meta["seasonal_order"][:3] == [0, 0, 0]
        assert hits > 5


class TestDlm0:
    def test_frozen_dynamics_flat_forecast(self):
        spec = build_dlm0(Dlm0Params(sigma2_y=1.0, sigma2_x=1e-12, C=np.zeros(12), x0=3.0))
        filt = filter_arrays(spec, np.array([[3.5], [2.5], [3.2]]), np.array([1, 2, 3]))
        fc = forecast(spec, filt, 6)
        np.testing.assert_allclose(fc.target_mean, filt.filtered_mean[-1, 0])

    def test_forecaster_output_shape(self):
        rng = np.random.default_rng(8)
        y = series(1000 + np.cumsum(rng.normal(size=48)) * 10 + 50 * np.sin(np.arange(48)))
        out = dlm0(y, 12, EmConfig(n_starts=3, warmup_iterations=5, max_iterations=100))
        assert len(out.forecasts) == 12 and len(out.fitted) == 48
        assert np.all(out.lower < out.forecasts) and np.all(out.forecasts < out.upper)
        assert abs(np.mean(out.forecasts) - 1000) < 2000  # offset re-applied

    @pytest.mark.slow
    def test_replicated_model_beats_dlm0_when_beta_large(self):
        wins = 0
        for seed in range(10):
            panel, _ = simulate(paper_like_config(T=117, seed=seed))
            train, test = split(panel, MonthStamp(2012, 9))
            cfg = EmConfig(seed=seed)
            out1, _, _ = dlm_forecaster(train, 12, cfg)
            out0 = dlm0(train.target, 12, cfg)
            actual = test.target.values
            rmse1 = np.sqrt(np.mean((actual - out1.forecasts) ** 2))
            rmse0 = np.sqrt(np.mean((actual - out0.forecasts) ** 2))
            wins += rmse1 < rmse0
        assert wins > 5


def test_forecaster_output_serialisation(tmp_path):
    out = snaive(series(np.arange(30.0)), 3)
    out.to_csv(tmp_path / "f.csv")
    rows = list(csv.reader(open(tmp_path / "f.csv")))
    assert rows[0] == ["horizon", "mean", "lower", "upper"]
    assert [float(r[1]) for r in rows[1:]] == list(out.forecasts)
    out.to_json(tmp_path / "f.json")
    assert (tmp_path / "f.json").read_text().count('"model": "snaive"') == 1
