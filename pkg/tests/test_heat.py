import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy.interpolate import CubicSpline

from compoundrisk.config import DATA_DIR
from compoundrisk.heat import (DAYS_PER_YEAR, DEFAULT_ANOMALY, HI_THRESHOLD, HeatClimatology,
                               HeatEventSeries, HeatLookup, bias_correct_temperature, daily_correction,
                               dump_climatology, event_series, heat_index, heat_index_rh,
                               heatwave_duration, load_anomaly_table, load_climatology, longest_run,
                               month_centers, monthly_means, prefix_longest_runs, relative_humidity,
                               saturation_specific_humidity, tc_composite_adjust, validate_anomaly_table)

from conftest import FIXTURES


def nws_heat_index_c(t_c, rh):
    """Scalar NWS procedure written out step by step."""
    T = t_c * 9 / 5 + 32
    steadman = 0.5 * (T + 61.0 + ((T - 68.0) * 1.2) + (rh * 0.094))
    if (steadman + T) / 2 < 80:
        hi = steadman
    else:
        c = [-42.379, 2.04901523, 10.14333127, -0.22475541, -0.00683783, -0.05481717, 0.00122874,
             0.00085282, -0.00000199]
        hi = (c[0] + c[1] * T + c[2] * rh + c[3] * T * rh + c[4] * T * T + c[5] * rh * rh
              + c[6] * T * T * rh + c[7] * T * rh * rh + c[8] * T * T * rh * rh)
        if rh < 13 and 80 <= T <= 112:
            hi -= ((13 - rh) / 4) * math.sqrt((17 - abs(T - 95.0)) / 17)
        elif rh > 85 and 80 <= T <= 87:
            hi += ((rh - 85) / 10) * ((87 - T) / 5)
    return (hi - 32) * 5 / 9


@pytest.mark.parametrize("t, p", [(10.0, 1013.25), (25.0, 1000.0), (35.0, 950.0)])
def test_saturation_gives_full_rh(t, p):
    q = saturation_specific_humidity(t, p)
    # mixing-ratio route: e = w p / (0.622 + w), w = q / (1 - q)
    w = q / (1 - q)
    e = w * p / (0.622 + w)
    es = 6.112 * math.exp(17.62 * t / (243.12 + t))
    assert 100 * e / es == pytest.approx(100.0, abs=0.1)
    assert relative_humidity(t, q, p) == pytest.approx(100.0, abs=0.1)


def test_below_floor_passes_temperature_through():
    assert heat_index_rh(20.0, 90.0) == 20.0
    assert heat_index_rh(26.6, 100.0) == 26.6


def test_worked_example():
    hi = heat_index_rh(32.2, 70.0)
    assert hi == pytest.approx(40.6, abs=1.0)
    assert hi == pytest.approx(nws_heat_index_c(32.2, 70.0), abs=1e-9)


@given(st.floats(26.7, 45.0), st.floats(0.0, 100.0))
def test_matches_scalar_procedure(t, rh):
    assert heat_index_rh(t, rh) == pytest.approx(nws_heat_index_c(t, rh), abs=1e-9)


@given(st.floats(27.0, 40.0), st.floats(40.0, 85.0), st.floats(0.1, 3.0))
def test_monotone_in_temperature_and_humidity(t, rh, dt):
    assert heat_index_rh(t + dt, rh) >= heat_index_rh(t, rh)
    assert heat_index_rh(t, min(rh + dt, 100.0)) >= heat_index_rh(t, rh)


def test_heat_index_from_q_matches_rh_route():
    t, p = 33.0, 1008.0
    q = 0.6 * saturation_specific_humidity(t, p)
    assert heat_index(t, q, p) == pytest.approx(heat_index_rh(t, relative_humidity(t, q, p)))


def test_zero_bias_gives_zero_correction():
    m = np.linspace(10, 30, 12)
    assert np.max(np.abs(daily_correction(m, m))) < 1e-12


def test_constant_bias():
    m = np.linspace(10, 30, 12)
    assert np.allclose(daily_correction(m, m - 2.0), -2.0, atol=1e-9)


def test_sinusoidal_bias_against_reference_spline():
    x = month_centers()
    diff = 1.5 * np.sin(2 * np.pi * x / DAYS_PER_YEAR) + 0.4
    model = np.full(12, 20.0)
    got = daily_correction(model, model + diff)
    # independent construction: tile three years and take the middle one
    xs = np.concatenate([x - DAYS_PER_YEAR, x, x + DAYS_PER_YEAR])
    ref = CubicSpline(xs, np.tile(diff, 3))(np.arange(DAYS_PER_YEAR) + 0.5)
    assert np.max(np.abs(got - ref)) < 2e-3
    # spline hits the monthly values at the month centres
    assert np.interp(x, np.arange(DAYS_PER_YEAR) + 0.5, got) == pytest.approx(diff, abs=0.02)


def test_correction_is_periodic():
    rng = np.random.default_rng(3)
    c = daily_correction(np.zeros(12), rng.normal(size=12))
    # the year-end step is no larger than any other day-to-day step
    assert abs(c[0] - c[-1]) <= np.max(np.abs(np.diff(c))) * 1.01


def test_bias_correct_shape_checks():
    with pytest.raises(ValueError):
        bias_correct_temperature(np.zeros(365), np.zeros(12), np.zeros(12))
    with pytest.raises(ValueError):
        daily_correction(np.zeros(11), np.zeros(11))


def test_monthly_means_of_constant():
    assert np.allclose(monthly_means(np.full((2, DAYS_PER_YEAR), 7.0)), 7.0)


def flat_clim(t=35.0, rh=60.0, n=2):
    p = np.full((n, DAYS_PER_YEAR), 1000.0)
    tt = np.full((n, DAYS_PER_YEAR), t)
    q = saturation_specific_humidity(tt, p) * rh / 100.0
    return HeatClimatology(tt, q, p, "flat")


def test_composite_adjustment_examples():
    s = HeatEventSeries(np.full(30, 42.0))
    assert np.array_equal(tc_composite_adjust(s, np.zeros(11)).hi, s.hi)
    adj = tc_composite_adjust(s, DEFAULT_ANOMALY)
    assert adj.hi[0] == pytest.approx(39.0)
    assert np.allclose(adj.hi[11:], 42.0)
    assert adj.adjusted


@pytest.mark.parametrize("hot_days, expected", [(0, 0), (6, 6), (30, 30)])
def test_duration_examples(hot_days, expected):
    hi = np.full(30, 35.0)
    hi[:hot_days] = 45.0
    assert heatwave_duration(hi) == expected


def test_duration_takes_longest_run():
    hi = np.array([41, 41, 30, 41, 41, 41, 30, 41], dtype=float)
    assert heatwave_duration(hi) == 3
    with pytest.raises(ValueError):
        heatwave_duration(np.array([]))


def test_threshold_is_strict():
    assert heatwave_duration(np.full(5, HI_THRESHOLD)) == 0


@given(st.lists(st.booleans(), max_size=40))
def test_prefix_runs_match_brute_force(bits):
    hot = np.array(bits, dtype=bool)
    got = prefix_longest_runs(hot)
    assert [int(v) for v in got] == [longest_run(hot[:m]) for m in range(len(hot) + 1)]


@given(st.lists(st.floats(10, 40.5), min_size=30, max_size=30), st.floats(0, 5))
def test_sub_threshold_series_stay_zero(values, bump):
    hi = np.minimum(np.array(values) + bump, 40.5)
    assert heatwave_duration(hi) == 0
    assert heatwave_duration(tc_composite_adjust(HeatEventSeries(hi)).hi) == 0


def test_event_series_wraps_year_end():
    clim = flat_clim()
    t = clim.temperature.copy()
    t[0, :5] = 40.0
    clim = HeatClimatology(t, clim.humidity, clim.pressure)
    s = event_series(clim, 0, 365)
    assert len(s.hi) == 30
    assert s.hi[2] == pytest.approx(clim.heat_index[0, 0])


def test_lookup_matches_series(historical_clim_pair):
    hist, _ = historical_clim_pair
    lk = HeatLookup(hist)
    for year, day in ((0, 150), (3, 200), (7, 240), (11, 366)):
        s = tc_composite_adjust(event_series(hist, year, day))
        assert lk.heatwave(year, day) == heatwave_duration(s)
        runs = lk.runs(year, day)
        for m in (0, 4, 17):
            assert runs[m] == longest_run(s.hi[:m] > HI_THRESHOLD)


@pytest.fixture(scope="module")
def historical_clim_pair():
    return (load_climatology(FIXTURES / "climatology_historical.json"),
            load_climatology(FIXTURES / "climatology_future.json"))


def test_future_has_more_heatwaves(historical_clim_pair):
    hist, fut = historical_clim_pair
    season = slice(150, 300)

    def share(clim, d):
        lk = HeatLookup(clim)
        return (lk.table[:, season, -1] >= d).mean()

    for d in (1, 3, 5):
        assert share(fut, d) > share(hist, d)


def test_climatology_round_trip(tmp_path, historical_clim_pair):
    hist, _ = historical_clim_pair
    dump_climatology(hist, tmp_path / "c.json")
    again = load_climatology(tmp_path / "c.json", bias_correct=False)
    assert np.allclose(again.temperature, hist.temperature, atol=1e-3)
    assert again.climate_label == hist.climate_label


@pytest.mark.parametrize("bad", ["{", '{"years": []}', '{"n_years": 2, "years": [{"T": [], "q": [], "p": []}]}'])
def test_climatology_rejects_bad_files(tmp_path, bad):
    (tmp_path / "c.json").write_text(bad)
    with pytest.raises(ValueError):
        load_climatology(tmp_path / "c.json")


def test_climatology_range_checks():
    c = flat_clim()
    with pytest.raises(ValueError, match="pressure"):
        HeatClimatology(c.temperature, c.humidity, c.pressure * 2)
    with pytest.raises(ValueError, match="366"):
        HeatClimatology(c.temperature[:, :10], c.humidity[:, :10], c.pressure[:, :10])


def test_anomaly_table_checks(tmp_path):
    assert np.array_equal(load_anomaly_table(DATA_DIR / "anomaly.json"), DEFAULT_ANOMALY)
    with pytest.raises(ValueError):
        validate_anomaly_table([0.0] * 10)
    with pytest.raises(ValueError):
        validate_anomaly_table([float("nan")] * 11)
