"""Analytic ground truth: a nonlinear time-delay flame response model.

The heat-release response to a normalized velocity perturbation u is

    q(t) = lowpass( a1*u(t - tau_u1) - a3*u(t - tau_u3)^3 ),

where ``lowpass`` is a first-order filter with cutoff ``fc``.  The cubic
term saturates the response; its weight ``a3`` relative to ``a1`` sets
the nonlinearity strength.  The module also provides step-response
impact-time estimation (how long a past perturbation can influence the
present output) and single-frequency describing-function extraction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError, MetricError, ParameterError, SettleError
from .signalgen import TimeSeries, step_series, tone_series

__all__ = [
    "NTauParams",
    "DescribingFunction",
    "first_order_filter",
    "ntau_response",
    "step_impact_time",
    "extract_describing_function",
    "oracle_describing_function",
    "params_to_config",
    "params_from_config",
]

# Keys of the flat config-block serialization of NTauParams.
_CONFIG_KEYS = ("fc_hz", "tau_u1_s", "tau_u3_s", "a1", "a3", "dt_s")


@dataclass(frozen=True)
class NTauParams:
    """Parameters of the nonlinear time-delay flame model.

    Attributes
    ----------
    fc : float
        Cutoff frequency of the first-order low-pass filter, Hz.
    tau_u1, tau_u3 : float
        Time delays (s) of the linear and cubic input terms.  Each must
        be an integer multiple of ``dt`` to within 1%; delays are applied
        as whole sample shifts.
    a1, a3 : float
        Weights of the linear and cubic terms; ``a3/a1`` is the
        nonlinearity strength.
    dt : float
        Sampling interval (s) of the series this model operates on.
    """

    fc: float
    tau_u1: float
    tau_u3: float
    a1: float
    a3: float
    dt: float

    def __post_init__(self) -> None:
        if not self.fc > 0:
            raise ParameterError(f"fc must be > 0, got {self.fc}")
        if not self.a1 > 0:
            raise ParameterError(f"a1 must be > 0, got {self.a1}")
        if self.a3 < 0:
            raise ParameterError(f"a3 must be >= 0, got {self.a3}")
        if not self.dt > 0:
            raise ParameterError(f"dt must be > 0, got {self.dt}")
        for name, tau in (("tau_u1", self.tau_u1), ("tau_u3", self.tau_u3)):
            if tau < 0:
                raise ParameterError(f"{name} must be >= 0, got {tau}")
            lag = round(tau / self.dt)
            if tau > 0 and abs(lag * self.dt - tau) > 0.01 * tau:
                raise ParameterError(
                    f"{name}={tau:g}s is not an integer multiple of dt={self.dt:g}s "
                    f"(rounding to {lag} samples changes it by more than 1%)"
                )

    @property
    def lag_u1(self) -> int:
        """Delay of the linear term in whole samples."""
        return round(self.tau_u1 / self.dt)

    @property
    def lag_u3(self) -> int:
        """Delay of the cubic term in whole samples."""
        return round(self.tau_u3 / self.dt)

    @property
    def strength(self) -> float:
        """Nonlinearity strength a3/a1."""
        return self.a3 / self.a1


@dataclass(frozen=True)
class DescribingFunction:
    """Single-frequency gain/phase of the response at one forcing amplitude."""

    frequency: float
    amplitude: float
    gain: float
    phase: float

    def __post_init__(self) -> None:
        if self.gain < 0:
            raise ParameterError(f"gain must be >= 0, got {self.gain}")
        if not (-math.pi < self.phase <= math.pi):
            raise ParameterError(f"phase must lie in (-pi, pi], got {self.phase}")


def params_to_config(p: NTauParams) -> dict:
    """Serialize model parameters as a flat key-value block."""
    return {
        "fc_hz": p.fc,
        "tau_u1_s": p.tau_u1,
        "tau_u3_s": p.tau_u3,
        "a1": p.a1,
        "a3": p.a3,
        "dt_s": p.dt,
    }


def params_from_config(block: dict) -> NTauParams:
    """Inverse of :func:`params_to_config`."""
    missing = [k for k in _CONFIG_KEYS if k not in block]
    if missing:
        raise ParameterError(f"config block missing keys: {missing}")
    return NTauParams(
        fc=float(block["fc_hz"]),
        tau_u1=float(block["tau_u1_s"]),
        tau_u3=float(block["tau_u3_s"]),
        a1=float(block["a1"]),
        a3=float(block["a3"]),
        dt=float(block["dt_s"]),
    )


def first_order_filter(x: TimeSeries, fc: float) -> TimeSeries:
    """Apply a first-order low-pass filter with cutoff ``fc`` (Hz).

    Discretized by the exact zero-order-hold recursion

        y[k] = alpha*y[k-1] + (1 - alpha)*x[k],  alpha = exp(-2*pi*fc*dt),

    with ``y[-1] = 0``.  The DC gain is exactly 1 and the recursion is
    unconditionally stable.
    """
    if not fc > 0:
        raise ParameterError(f"fc must be > 0, got {fc}")
    if not np.all(np.isfinite(x.values)):
        raise DataError("filter input contains non-finite samples")
    alpha = math.exp(-2.0 * math.pi * fc * x.dt)
    y = np.empty_like(x.values)
    drive = (1.0 - alpha) * x.values
    acc = 0.0
    for k in range(y.size):
        acc = alpha * acc + drive[k]
        y[k] = acc
    return TimeSeries(y, x.dt, kind=x.kind, label=x.label)


def ntau_response(u: TimeSeries, p: NTauParams) -> TimeSeries:
    """Heat-release response of the nonlinear time-delay model.

    Computes ``lowpass(a1*u(t-tau_u1) - a3*u(t-tau_u3)^3, fc)``.  Samples
    requested from before the start of ``u`` are taken as zero (signal at
    rest).
    """
    if abs(u.dt - p.dt) > 1e-12 * max(u.dt, p.dt):
        raise ParameterError(
            f"series dt={u.dt:g} does not match model dt={p.dt:g}"
        )
    u1 = _delayed(u.values, p.lag_u1)
    u3 = _delayed(u.values, p.lag_u3)
    bracket = p.a1 * u1 - p.a3 * u3 ** 3
    raw = TimeSeries(bracket, u.dt, kind="heat-release", label=u.label)
    return first_order_filter(raw, p.fc)


def _delayed(values: np.ndarray, lag: int) -> np.ndarray:
    if lag == 0:
        return values
    out = np.zeros_like(values)
    out[lag:] = values[:-lag]
    return out


def step_impact_time(
    p: NTauParams,
    epsilon: float,
    u0: float = 1.0,
    u1: float = 1.5,
) -> tuple[float, int]:
    """Estimate the impact time from a velocity step response.

    Drives the model with a step from ``u0`` to ``u1`` and returns
    ``(delta_t, n)`` where ``delta_t`` is the smallest time after the
    step such that every later sample stays within
    ``epsilon*|q_final - q_initial|`` of the settled value, and
    ``n = delta_t/dt`` is the matching window length in samples.

    The series is extended once if the response has not settled by its
    end; a second failure raises :class:`SettleError`.
    """
    if not 0 < epsilon < 1:
        raise ParameterError(f"epsilon must lie in (0, 1), got {epsilon}")
    tau_max = max(p.tau_u1, p.tau_u3)
    # Pre-step hold long enough for the start-up transient to die out to
    # well below epsilon; the same margin is used for the settle tail.
    margin = (math.log(1.0 / epsilon) + 7.0) / (2.0 * math.pi * p.fc)
    t_step = tau_max + margin
    duration = t_step + tau_max + margin

    for attempt in range(2):
        u = step_series(u0, u1, t_step, duration, p.dt)
        q = ntau_response(u, p).values
        k_step = int(np.searchsorted(u.times(), t_step, side="left"))
        q_initial = q[k_step - 1]
        q_final = q[-1]
        threshold = epsilon * abs(q_final - q_initial)
        # The settle threshold must dominate whatever startup residue is
        # still decaying just before the step, or the measurement would
        # track that residue instead of the step response.
        pre = q[max(0, k_step - 50): k_step]
        startup_motion = float(np.max(np.abs(pre - q_initial))) if pre.size else 0.0
        noise_floor = max(10.0 * startup_motion,
                          1e-12 * max(abs(q_initial), abs(q_final), 1.0))
        if threshold <= noise_floor:
            raise SettleError(
                "degenerate step: response change "
                f"{abs(q_final - q_initial):g} is indistinguishable from the "
                f"pre-step residue ({startup_motion:g})"
            )
        deviating = np.nonzero(np.abs(q - q_final) > threshold)[0]
        last_bad = int(deviating[-1]) if deviating.size else k_step - 1
        if last_bad < q.size - 1:
            settle_idx = last_bad + 1
            n = settle_idx - k_step
            return n * p.dt, n
        duration *= 2.0  # not settled: extend once and retry

    raise SettleError(
        f"step response did not settle within {duration / 2:g}s "
        f"(epsilon={epsilon:g})"
    )


def extract_describing_function(
    u: TimeSeries,
    q: TimeSeries,
    freq: float,
    fc: float | None = None,
    tau: float | None = None,
) -> DescribingFunction:
    """Extract gain and phase of the response at the forcing frequency.

    Both series are projected onto ``exp(-i*2*pi*freq*t)`` over an integer
    number of periods after discarding a transient prefix of
    ``max(5/(2*pi*fc), tau) + 2/freq`` seconds (the filter/delay terms are
    taken as zero when ``fc``/``tau`` are not given).  At least 3 full
    periods must remain.
    """
    if len(u) != len(q):
        raise DataError(f"series lengths differ: {len(u)} vs {len(q)}")
    if abs(u.dt - q.dt) > 1e-12 * max(u.dt, q.dt):
        raise DataError(f"series dt differ: {u.dt:g} vs {q.dt:g}")
    if not freq > 0:
        raise ParameterError(f"freq must be > 0, got {freq}")

    dt = u.dt
    settle = 5.0 / (2.0 * math.pi * fc) if fc else 0.0
    transient = max(settle, tau or 0.0) + 2.0 / freq
    k0 = int(math.ceil(transient / dt))
    remaining = len(u) - k0
    periods = int(math.floor(remaining * dt * freq)) if remaining > 0 else 0
    if periods < 3:
        raise DataError(
            f"need >= 3 full periods of {freq:g}Hz after the {transient:g}s "
            f"transient, have {max(periods, 0)}"
        )
    m = int(round(periods / (freq * dt)))
    m = min(m, remaining)

    k = np.arange(k0, k0 + m)
    basis = np.exp(-2.0j * np.pi * freq * dt * k)
    u_hat = 2.0 / m * np.sum(u.values[k0 : k0 + m] * basis)
    q_hat = 2.0 / m * np.sum(q.values[k0 : k0 + m] * basis)
    if abs(u_hat) < 1e-12:
        raise MetricError(f"input series has no component at {freq:g}Hz")

    ratio = q_hat / u_hat
    phase = float(np.angle(ratio))
    if phase <= -math.pi:
        phase = math.pi
    return DescribingFunction(
        frequency=freq,
        amplitude=float(abs(u_hat)),
        gain=float(abs(ratio)),
        phase=phase,
    )


def oracle_describing_function(
    p: NTauParams, amplitude: float, freq: float, periods: int = 8
) -> DescribingFunction:
    """Simulate a tone through the model and extract its describing function."""
    tau_max = max(p.tau_u1, p.tau_u3)
    transient = max(5.0 / (2.0 * math.pi * p.fc), tau_max) + 2.0 / freq
    duration = transient + (periods + 1.5) / freq
    u = tone_series(amplitude, freq, duration, p.dt)
    q = ntau_response(u, p)
    return extract_describing_function(u, q, freq, fc=p.fc, tau=tau_max)
