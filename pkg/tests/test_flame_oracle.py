"""Analytic flame-response oracle: filter, time-delay model, step settling,
describing-function extraction.

Frozen reference values below come from the closed-form transfer function
of the discrete filter, H(z) = (1-alpha)/(1 - alpha*z^-1) evaluated at
z = exp(i*2*pi*f*dt), not from the time-domain loop under test.
"""
import math

import numpy as np
import pytest

from flame_surrogate.errors import (
    DataError,
    MetricError,
    ParameterError,
    SettleError,
)
from flame_surrogate.flame_oracle import (
    DescribingFunction,
    NTauParams,
    extract_describing_function,
    first_order_filter,
    ntau_response,
    oracle_describing_function,
    params_from_config,
    params_to_config,
    step_impact_time,
)
from flame_surrogate.signalgen import TimeSeries, step_series, tone_series

DT = 1e-5
FC = 400.0

# |H| and arg H of the discrete filter at fc and at 50 Hz (dt = 1e-5).
GAIN_AT_FC = 0.707125
PHASE_AT_FC = -0.772884
GAIN_AT_50 = 0.992278


def linear_params(dt: float = DT, tau: float = 2e-3) -> NTauParams:
    return NTauParams(fc=FC, tau_u1=tau, tau_u3=tau, a1=1.0, a3=0.0, dt=dt)


def cubic_params(strength: float = 1.0, dt: float = DT) -> NTauParams:
    return NTauParams(fc=FC, tau_u1=2e-3, tau_u3=2e-3, a1=1.0, a3=strength, dt=dt)


class TestNTauParams:
    def test_round_trip_through_config_block(self):
        p = cubic_params(3.0)
        assert params_from_config(params_to_config(p)) == p

    def test_missing_config_key_rejected(self):
        block = params_to_config(cubic_params())
        del block["fc_hz"]
        with pytest.raises(ParameterError, match="fc_hz"):
            params_from_config(block)

    def test_delay_must_sit_on_the_sample_grid(self):
        with pytest.raises(ParameterError, match="integer multiple"):
            NTauParams(fc=FC, tau_u1=1.37e-5, tau_u3=0.0, a1=1.0, a3=0.0, dt=DT)

    @pytest.mark.parametrize("kwargs", [
        dict(fc=0.0), dict(a1=0.0), dict(a3=-1.0), dict(dt=0.0),
        dict(tau_u1=-1e-3),
    ])
    def test_invalid_parameters_rejected(self, kwargs):
        base = dict(fc=FC, tau_u1=2e-3, tau_u3=2e-3, a1=1.0, a3=1.0, dt=DT)
        base.update(kwargs)
        with pytest.raises(ParameterError):
            NTauParams(**base)

    def test_strength_and_lags(self):
        p = NTauParams(fc=FC, tau_u1=2e-3, tau_u3=1e-3, a1=2.0, a3=5.0, dt=DT)
        assert p.strength == 2.5
        assert p.lag_u1 == 200
        assert p.lag_u3 == 100


class TestFirstOrderFilter:
    def test_dc_gain_is_one(self):
        x = TimeSeries(np.full(5000, 0.7), DT)
        y = first_order_filter(x, FC)
        assert y.values[-1] == pytest.approx(0.7, rel=1e-8)

    def test_zero_input_zero_output(self):
        x = TimeSeries(np.zeros(100), DT)
        assert np.all(first_order_filter(x, FC).values == 0.0)

    def test_gain_at_cutoff(self):
        # steady amplitude over the last integer number of periods
        tone = tone_series(1.0, FC, 0.05, DT)
        y = first_order_filter(tone, FC).values
        steady = np.max(np.abs(y[-1000:]))  # 4 periods at 400 Hz
        assert steady == pytest.approx(GAIN_AT_FC, rel=2e-3)
        assert steady == pytest.approx(1.0 / math.sqrt(2.0), rel=0.01)

    def test_nonfinite_input_rejected(self):
        x = TimeSeries(np.zeros(10), DT)
        x.values[3] = np.inf  # bypasses construction-time validation
        with pytest.raises(DataError):
            first_order_filter(x, FC)

    def test_invalid_cutoff_rejected(self):
        with pytest.raises(ParameterError):
            first_order_filter(TimeSeries(np.zeros(10), DT), 0.0)


class TestNTauResponse:
    def test_constant_input_reaches_static_nonlinearity(self):
        # steady q = a1*c - a3*c^3; c=1 with a1=a3=1 cancels exactly
        p = cubic_params(1.0)
        u = TimeSeries(np.ones(6000), DT)
        q = ntau_response(u, p)
        assert q.values[-1] == pytest.approx(0.0, abs=1e-9)

        c = 0.5
        q2 = ntau_response(TimeSeries(np.full(6000, c), DT), p)
        assert q2.values[-1] == pytest.approx(c - c ** 3, rel=1e-6)

    def test_dt_mismatch_rejected(self):
        with pytest.raises(ParameterError, match="dt"):
            ntau_response(TimeSeries(np.ones(10), 2e-5), cubic_params())

    def test_response_is_zero_before_the_delay_arrives(self):
        p = linear_params()
        u = tone_series(0.5, 100.0, 0.05, DT)
        q = ntau_response(u, p).values
        assert np.all(q[: p.lag_u1] == 0.0)
        assert np.any(q[p.lag_u1 + 1 :] != 0.0)

    def test_linearity_without_the_cubic_term(self):
        p = linear_params()
        u = tone_series(0.2, 150.0, 0.05, DT)
        q1 = ntau_response(u, p).values
        u3 = TimeSeries(3.0 * u.values, DT)
        q3 = ntau_response(u3, p).values
        np.testing.assert_allclose(q3, 3.0 * q1, rtol=1e-12, atol=1e-14)

    def test_time_invariance(self):
        p = cubic_params(2.0)
        base = tone_series(0.5, 250.0, 0.06, DT).values
        shift = 57
        u_a = TimeSeries(base, DT)
        u_b = TimeSeries(np.concatenate([np.zeros(shift), base[:-shift]]), DT)
        q_a = ntau_response(u_a, p).values
        q_b = ntau_response(u_b, p).values
        np.testing.assert_allclose(q_b[shift:], q_a[:-shift], rtol=0, atol=1e-12)


class TestStepImpactTime:
    def test_reference_settle_length(self):
        # tau 2 ms + filter tail ln(1/eps)/(2*pi*fc) ~ 1.83 ms
        delta_t, n = step_impact_time(cubic_params(1.0), epsilon=0.01)
        assert n == 383
        assert delta_t == pytest.approx(n * DT)

    def test_loose_epsilon_settles_right_after_the_delay(self):
        p = cubic_params(1.0)
        delta_t, n = step_impact_time(p, epsilon=0.99)
        assert p.tau_u1 <= delta_t <= p.tau_u1 + 5 * DT

    def test_linear_step_change_magnitude(self):
        # a3=0: the settled response moves by a1*(u1-u0) = 0.5
        p = linear_params()
        u = step_series(1.0, 1.5, t_step=0.01, duration=0.04, dt=DT)
        q = ntau_response(u, p).values
        assert q[-1] - q[900] == pytest.approx(0.5, rel=1e-6)

    def test_degenerate_step_raises(self):
        # u0 = u1 means no response change to settle against
        with pytest.raises(SettleError, match="degenerate"):
            step_impact_time(cubic_params(0.0), epsilon=0.01, u0=1.0, u1=1.0)

    @pytest.mark.parametrize("epsilon", [0.0, 1.0, -0.5])
    def test_epsilon_bounds(self, epsilon):
        with pytest.raises(ParameterError):
            step_impact_time(cubic_params(), epsilon)


class TestDescribingFunction:
    def test_identity_system(self):
        u = tone_series(0.5, 100.0, 0.1, DT)
        df = extract_describing_function(u, u, 100.0)
        assert df.gain == pytest.approx(1.0, rel=1e-9)
        assert df.phase == pytest.approx(0.0, abs=1e-9)

    def test_linear_model_at_cutoff(self):
        p = linear_params()
        df = oracle_describing_function(p, amplitude=0.3, freq=FC)
        assert df.gain == pytest.approx(GAIN_AT_FC, rel=1e-3)
        assert df.gain == pytest.approx(1.0 / math.sqrt(2.0), rel=0.01)
        # phase: delay term plus filter lag, wrapped into (-pi, pi]
        expected = -2.0 * math.pi * FC * p.tau_u1 - math.pi / 4.0
        expected = math.remainder(expected, 2.0 * math.pi)
        assert df.phase == pytest.approx(expected, abs=0.03)

    def test_gain_independent_of_amplitude_when_linear(self):
        p = linear_params()
        g_small = oracle_describing_function(p, 0.1, 200.0).gain
        g_large = oracle_describing_function(p, 0.9, 200.0).gain
        assert g_small == pytest.approx(g_large, rel=1e-9)

    def test_cubic_saturation_fundamental(self):
        # fundamental of the cubic term: a1*A - 0.75*a3*A^3, filtered
        p = cubic_params(1.0)
        df = oracle_describing_function(p, amplitude=0.4, freq=50.0)
        expected = (1.0 - 0.75 * 0.4 ** 2) * GAIN_AT_50
        assert df.gain == pytest.approx(expected, rel=1e-3)

    def test_gain_decreases_with_amplitude_under_saturation(self):
        p = cubic_params(1.0)
        bound = math.sqrt(p.a1 / (3.0 * p.a3 * 0.75))
        amplitudes = np.linspace(0.1, bound, 6)
        gains = [oracle_describing_function(p, a, 120.0).gain for a in amplitudes]
        assert all(g1 > g2 for g1, g2 in zip(gains, gains[1:]))

    def test_too_few_periods_rejected(self):
        u = tone_series(0.5, 100.0, 0.025, DT)
        with pytest.raises(DataError, match="periods"):
            extract_describing_function(u, u, 100.0)

    def test_length_mismatch_rejected(self):
        u = tone_series(0.5, 100.0, 0.1, DT)
        q = TimeSeries(u.values[:-1], DT)
        with pytest.raises(DataError):
            extract_describing_function(u, q, 100.0)

    def test_input_without_the_probe_frequency_rejected(self):
        flat = TimeSeries(np.ones(10000), DT)
        with pytest.raises(MetricError):
            extract_describing_function(flat, flat, 100.0)

    def test_record_validation(self):
        with pytest.raises(ParameterError):
            DescribingFunction(100.0, 0.5, gain=-0.1, phase=0.0)
        with pytest.raises(ParameterError):
            DescribingFunction(100.0, 0.5, gain=1.0, phase=-math.pi)
