"""Excitation signal generators: sweeps, tones, steps, CSV export."""
import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from flame_surrogate.errors import DataError, ParameterError
from flame_surrogate.signalgen import (
    SweepSpec,
    TimeSeries,
    export_csv,
    step_series,
    sweep_series,
    tone_series,
)


def count_zero_crossings(values: np.ndarray) -> int:
    signs = np.sign(values)
    signs = signs[signs != 0]
    return int(np.count_nonzero(np.diff(signs)))


class TestSweepSpec:
    def test_linear_frequency_law_coefficients(self):
        spec = SweepSpec(amplitude=0.5, f1=10, f2=1000, t1=0.0, t2=0.5, dt=1e-5)
        assert spec.chirp_rate == pytest.approx(1980.0)
        assert spec.freq_intercept == pytest.approx(10.0)

    def test_frequency_law_hits_both_endpoints(self):
        spec = SweepSpec(amplitude=1.0, f1=25, f2=400, t1=0.1, t2=0.9, dt=1e-4)
        f = lambda t: spec.chirp_rate * t + spec.freq_intercept
        assert f(spec.t1) == pytest.approx(25.0)
        assert f(spec.t2) == pytest.approx(400.0)

    @pytest.mark.parametrize("field, value", [
        ("amplitude", 0.0),
        ("amplitude", -1.0),
        ("f1", 0.0),
        ("f2", 5.0),        # below f1
        ("t2", -1.0),       # below t1
        ("dt", 0.0),
    ])
    def test_invariant_violations_raise(self, field, value):
        kwargs = dict(amplitude=0.5, f1=10, f2=1000, t1=0.0, t2=0.5, dt=1e-5)
        kwargs[field] = value
        with pytest.raises(ParameterError):
            SweepSpec(**kwargs)

    def test_sub_two_sample_span_rejected(self):
        with pytest.raises(ParameterError):
            SweepSpec(amplitude=0.5, f1=10, f2=1000, t1=0.0, t2=1e-5, dt=1e-5)


class TestSweepSeries:
    def test_first_sample_is_amplitude(self):
        # cos(0) = 1 at t = t1 exactly
        spec = SweepSpec(amplitude=0.5, f1=10, f2=1000, t1=0.0, t2=0.05, dt=1e-5)
        series = sweep_series(spec)
        assert series.values[0] == 0.5

    def test_amplitude_bound(self):
        spec = SweepSpec(amplitude=0.7, f1=10, f2=1000, t1=0.0, t2=0.5, dt=1e-5)
        values = sweep_series(spec).values
        assert np.max(np.abs(values)) <= 0.7
        # phase passes through many multiples of 2*pi, so the bound is tight
        assert np.max(np.abs(values)) > 0.7 * 0.999

    def test_last_sample_time_does_not_overrun_t2(self):
        spec = SweepSpec(amplitude=1.0, f1=10, f2=100, t1=0.0, t2=0.0501, dt=1e-4)
        series = sweep_series(spec)
        assert (len(series) - 1) * spec.dt <= spec.t2 - spec.t1 + 1e-12

    def test_zero_crossing_density_increases(self):
        # linear chirp: equal-duration slices gain crossings monotonically
        spec = SweepSpec(amplitude=1.0, f1=10, f2=1000, t1=0.0, t2=1.0, dt=1e-5)
        values = sweep_series(spec).values
        quarters = np.array_split(values, 4)
        crossings = [count_zero_crossings(q) for q in quarters]
        assert crossings == sorted(crossings)
        assert crossings[0] < crossings[-1]

    @given(amplitude=st.floats(0.05, 2.0), t2=st.floats(0.01, 0.2))
    @settings(max_examples=25, deadline=None)
    def test_values_bounded_and_start_exact(self, amplitude, t2):
        spec = SweepSpec(amplitude=amplitude, f1=10, f2=500, t1=0.0, t2=t2, dt=1e-4)
        values = sweep_series(spec).values
        assert values[0] == amplitude
        assert np.all(np.abs(values) <= amplitude * (1 + 1e-12))


class TestToneSeries:
    def test_first_sample(self):
        assert tone_series(1.0, 80.0, 0.1, 1e-4).values[0] == 1.0

    def test_sample_count(self):
        series = tone_series(0.25, 200.0, 3 / 200.0, 1e-6)
        assert len(series) == 15000

    def test_fig11_test_signal_parameters(self):
        series = tone_series(0.45, 350.0, 0.02, 1e-5)
        assert np.max(np.abs(series.values)) <= 0.45
        expected = 0.45 * np.cos(2 * np.pi * 350.0 * 1e-5 * np.arange(len(series)))
        np.testing.assert_allclose(series.values, expected, rtol=0, atol=1e-12)

    def test_duration_below_one_period_rejected(self):
        with pytest.raises(ParameterError):
            tone_series(0.5, 100.0, 0.009, 1e-5)

    def test_double_frequency_doubles_zero_crossings(self):
        # 4 shared periods of 100 Hz == 8 periods of 200 Hz
        base = tone_series(1.0, 100.0, 0.04, 1e-5)
        double = tone_series(1.0, 200.0, 0.04, 1e-5)
        assert count_zero_crossings(double.values) == \
            2 * count_zero_crossings(base.values)


class TestStepSeries:
    def test_step_probe(self):
        series = step_series(1.0, 1.5, t_step=0.005, duration=0.02, dt=1e-5)
        t = series.times()
        assert np.all(series.values[t < 0.005] == 1.0)
        assert np.all(series.values[t >= 0.005] == 1.5)

    def test_zero_step_time_gives_constant_u1(self):
        series = step_series(1.0, 1.5, t_step=0.0, duration=0.01, dt=1e-5)
        assert np.all(series.values == 1.5)

    def test_equal_levels_give_constant(self):
        series = step_series(0.3, 0.3, t_step=0.005, duration=0.01, dt=1e-5)
        assert np.all(series.values == 0.3)

    def test_step_after_end_rejected(self):
        with pytest.raises(ParameterError):
            step_series(1.0, 1.5, t_step=0.02, duration=0.02, dt=1e-5)


class TestTimeSeries:
    def test_nonfinite_values_rejected(self):
        with pytest.raises(DataError):
            TimeSeries(np.array([0.0, np.nan]), 1e-5)

    def test_empty_rejected(self):
        with pytest.raises(DataError):
            TimeSeries(np.array([]), 1e-5)

    def test_duration_and_times(self):
        series = TimeSeries(np.zeros(100), 1e-3)
        assert series.duration == pytest.approx(0.1)
        assert series.times()[0] == 0.0
        assert series.times(2.0)[-1] == pytest.approx(2.0 + 99e-3)


def test_export_csv(tmp_path):
    series = tone_series(0.5, 100.0, 0.01, 1e-3)
    path = tmp_path / "tone.csv"
    export_csv(series, path)
    raw = path.read_bytes()
    assert b"\r" not in raw
    lines = raw.decode().splitlines()
    assert lines[0] == "t,value"
    assert len(lines) == len(series) + 1
    t0, v0 = lines[1].split(",")
    assert float(t0) == 0.0
    assert float(v0) == series.values[0]
