"""Generation of normalized velocity-perturbation excitation signals.

All signals are dimensionless (velocity perturbation divided by the mean
flow velocity) and uniformly sampled.  Three excitation types are
provided: linear frequency sweeps (chirps), single-frequency tones and
step signals.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import DataError, ParameterError

__all__ = [
    "SweepSpec",
    "TimeSeries",
    "sweep_series",
    "tone_series",
    "step_series",
    "export_csv",
]


@dataclass(frozen=True)
class SweepSpec:
    """Parameters of a linear frequency sweep.

    Attributes
    ----------
    amplitude : float
        Dimensionless perturbation amplitude (normalized by the mean
        velocity), must be positive.
    f1, f2 : float
        Start and end frequency in Hz, ``f2 > f1 > 0``.
    t1, t2 : float
        Start and end time in seconds, ``t2 > t1``.
    dt : float
        Sampling interval in seconds.
    """

    amplitude: float
    f1: float
    f2: float
    t1: float
    t2: float
    dt: float

    def __post_init__(self) -> None:
        if not self.amplitude > 0:
            raise ParameterError(f"amplitude must be > 0, got {self.amplitude}")
        if not (self.f2 > self.f1 > 0):
            raise ParameterError(
                f"need f2 > f1 > 0, got f1={self.f1}, f2={self.f2}"
            )
        if not self.t2 > self.t1:
            raise ParameterError(f"need t2 > t1, got t1={self.t1}, t2={self.t2}")
        if not self.dt > 0:
            raise ParameterError(f"dt must be > 0, got {self.dt}")
        if (self.t2 - self.t1) / self.dt < 2:
            raise ParameterError(
                f"sweep must span at least 2 samples, got "
                f"(t2-t1)/dt={(self.t2 - self.t1) / self.dt:.3f}"
            )

    @property
    def chirp_rate(self) -> float:
        """Frequency slope a in Hz/s; instantaneous frequency is a*t + b."""
        return (self.f2 - self.f1) / (self.t2 - self.t1)

    @property
    def freq_intercept(self) -> float:
        """Frequency intercept b in Hz of the linear law f(t) = a*t + b."""
        return (self.t2 * self.f1 - self.t1 * self.f2) / (self.t2 - self.t1)


@dataclass
class TimeSeries:
    """A uniformly sampled dimensionless signal.

    ``kind`` tags the physical quantity carried: ``"velocity"`` for u'/u
    or ``"heat-release"`` for q'/q.
    """

    values: np.ndarray
    dt: float
    kind: str = "velocity"
    label: str = ""

    def __post_init__(self) -> None:
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or self.values.size == 0:
            raise DataError("values must be a nonempty 1-D array")
        if not self.dt > 0:
            raise ParameterError(f"dt must be > 0, got {self.dt}")
        if not np.all(np.isfinite(self.values)):
            raise DataError(f"series {self.label!r} contains non-finite samples")

    def __len__(self) -> int:
        return int(self.values.size)

    @property
    def duration(self) -> float:
        """Time span covered by the samples, in seconds."""
        return self.values.size * self.dt

    def times(self, t0: float = 0.0) -> np.ndarray:
        """Sample instants t0 + k*dt for k = 0 .. len-1."""
        return t0 + self.dt * np.arange(self.values.size)


def sweep_series(spec: SweepSpec) -> TimeSeries:
    """Generate a normalized linear frequency sweep.

    The samples follow ``A*cos(2*pi*((a/2)*(t^2 - t1^2) + b*(t - t1)))``
    on the grid ``t = t1 + k*dt``, with the last sample at the largest
    ``t1 + k*dt <= t2``.  The instantaneous frequency ``a*t + b`` equals
    ``f1`` at ``t1`` and ``f2`` at ``t2``.
    """
    # Guard against float rounding when (t2-t1) is an exact multiple of dt.
    n = int(np.floor((spec.t2 - spec.t1) / spec.dt + 1e-9)) + 1
    t = spec.t1 + spec.dt * np.arange(n)
    a = spec.chirp_rate
    b = spec.freq_intercept
    phase = 2.0 * np.pi * (0.5 * a * (t * t - spec.t1 * spec.t1) + b * (t - spec.t1))
    values = spec.amplitude * np.cos(phase)
    label = f"sweep A={spec.amplitude:g} {spec.f1:g}-{spec.f2:g}Hz"
    return TimeSeries(values, spec.dt, kind="velocity", label=label)


def tone_series(amplitude: float, freq: float, duration: float, dt: float) -> TimeSeries:
    """Generate a single-frequency tone ``A*cos(2*pi*f*k*dt)``.

    ``duration`` must cover at least one period of ``freq``.
    """
    if not amplitude > 0:
        raise ParameterError(f"amplitude must be > 0, got {amplitude}")
    if not freq > 0:
        raise ParameterError(f"freq must be > 0, got {freq}")
    if not dt > 0:
        raise ParameterError(f"dt must be > 0, got {dt}")
    if duration < 1.0 / freq:
        raise ParameterError(
            f"duration {duration:g}s is shorter than one period of {freq:g}Hz"
        )
    n = int(round(duration / dt))
    values = amplitude * np.cos(2.0 * np.pi * freq * dt * np.arange(n))
    return TimeSeries(values, dt, kind="velocity", label=f"tone A={amplitude:g} f={freq:g}Hz")


def step_series(
    u0: float, u1: float, t_step: float, duration: float, dt: float
) -> TimeSeries:
    """Generate a step signal: ``u0`` for ``k*dt < t_step``, ``u1`` after."""
    if not dt > 0:
        raise ParameterError(f"dt must be > 0, got {dt}")
    if not t_step >= 0:
        raise ParameterError(f"t_step must be >= 0, got {t_step}")
    if t_step >= duration:
        raise ParameterError(
            f"t_step ({t_step:g}s) must fall before the end of the series "
            f"({duration:g}s)"
        )
    n = int(round(duration / dt))
    t = dt * np.arange(n)
    values = np.where(t < t_step, float(u0), float(u1))
    return TimeSeries(values, dt, kind="velocity", label=f"step {u0:g}->{u1:g}")


def export_csv(series: TimeSeries, path, t0: float = 0.0) -> None:
    """Write a series as two-column CSV ``t,value`` with header and LF ends."""
    t = series.times(t0)
    with open(path, "w", newline="\n") as fh:
        fh.write("t,value\n")
        for ti, vi in zip(t, series.values):
            fh.write(f"{ti:.9g},{vi:.9g}\n")
