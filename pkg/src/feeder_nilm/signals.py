"""Waveform container and the windowed high-frequency feature primitives.

Harmonic content is measured with a single-bin Fourier projection at the
exact target frequency (correlation with sin/cos over the window), so
windows of any length work and there is no FFT bin ambiguity. Windows
covering a non-integer number of periods carry a small spectral-leakage
bias (below 0.1 percent for multi-second windows at grid frequency).

All arithmetic is float64. Every function here is a pure function of its
inputs; waveforms are immutable after construction and safe to share
across threads.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

__all__ = [
    "UndefinedFeatureError",
    "Waveform",
    "WindowView",
    "wrap_phase",
    "rms",
    "form_factor",
    "crest_factor",
    "fundamental_phasor",
    "harmonic_magnitude",
    "phase_shift",
    "active_reactive_power",
    "thd",
]


class UndefinedFeatureError(ValueError):
    """A feature has no defined value on this window (for example an all-zero signal)."""


def wrap_phase(angle_rad: float) -> float:
    """Wrap an angle to the interval (-pi, pi]."""
    wrapped = math.remainder(angle_rad, 2.0 * math.pi)
    if wrapped <= -math.pi:
        wrapped += 2.0 * math.pi
    return wrapped


@dataclass(frozen=True, eq=False)
class Waveform:
    """Uniformly sampled real-valued signal on the scenario clock.

    ``samples`` are coerced to a read-only float64 array. ``start_time_s``
    anchors the first sample on the scenario clock.
    """

    samples: np.ndarray
    sample_rate_hz: float
    start_time_s: float = 0.0

    def __post_init__(self) -> None:
        samples = np.ascontiguousarray(self.samples, dtype=np.float64)
        if samples.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if samples.size == 0:
            raise ValueError("samples must be non-empty")
        if not np.isfinite(samples).all():
            raise ValueError("samples must all be finite")
        if not (math.isfinite(self.sample_rate_hz) and self.sample_rate_hz > 0.0):
            raise ValueError("sample_rate_hz must be positive and finite")
        if not math.isfinite(self.start_time_s):
            raise ValueError("start_time_s must be finite")
        samples.flags.writeable = False
        object.__setattr__(self, "samples", samples)

    @property
    def n_samples(self) -> int:
        return int(self.samples.size)

    @property
    def duration_s(self) -> float:
        return self.samples.size / self.sample_rate_hz

    def window(self, view: WindowView) -> np.ndarray:
        """Read-only slice of the samples selected by ``view``."""
        if view.offset_samples + view.length_samples > self.samples.size:
            raise ValueError("window extends past the end of the waveform")
        return self.samples[view.offset_samples : view.offset_samples + view.length_samples]


@dataclass(frozen=True)
class WindowView:
    """Half-open sample range [offset, offset + length) into a parent waveform."""

    offset_samples: int
    length_samples: int

    def __post_init__(self) -> None:
        if self.offset_samples < 0:
            raise ValueError("offset_samples must be non-negative")
        if self.length_samples < 1:
            raise ValueError("length_samples must be positive")


def _as_window(x) -> np.ndarray:
    arr = np.asarray(x, dtype=np.float64)
    if arr.ndim != 1 or arr.size == 0:
        raise ValueError("window must be a non-empty 1-D sample array")
    return arr


@lru_cache(maxsize=256)
def _projection_basis(n: int, freq_hz: float, sample_rate_hz: float):
    # Cached per (length, frequency, rate); every window of a trace shares one shape.
    t = np.arange(n, dtype=np.float64) / sample_rate_hz
    omega = 2.0 * math.pi * freq_hz
    sin_basis = np.sin(omega * t)
    cos_basis = np.cos(omega * t)
    sin_basis.flags.writeable = False
    cos_basis.flags.writeable = False
    return sin_basis, cos_basis


def rms(window) -> float:
    """Root mean square of the window samples."""
    arr = _as_window(window)
    return float(np.sqrt(np.mean(arr * arr)))


def form_factor(window) -> float:
    """RMS divided by the mean absolute value; 1.0 for constants, ~1.11 for sinusoids.

    Raises:
        UndefinedFeatureError: if the window is all zero.
    """
    arr = _as_window(window)
    mean_abs = float(np.mean(np.abs(arr)))
    if mean_abs == 0.0:
        raise UndefinedFeatureError("form factor undefined on an all-zero window")
    return rms(arr) / mean_abs


def crest_factor(window) -> float:
    """Peak absolute value divided by RMS; sqrt(2) for sinusoids.

    Raises:
        UndefinedFeatureError: if the window is all zero.
    """
    arr = _as_window(window)
    r = rms(arr)
    if r == 0.0:
        raise UndefinedFeatureError("crest factor undefined on an all-zero window")
    return float(np.max(np.abs(arr))) / r


def fundamental_phasor(window, freq_hz: float, sample_rate_hz: float) -> tuple[float, float]:
    """Single-bin Fourier projection of the window at ``freq_hz``.

    Returns ``(magnitude_rms, phase_rad)`` in the sine convention
    ``x(t) = sqrt(2) * magnitude_rms * sin(2*pi*freq_hz*t + phase)`` with
    the phase referenced to the window start and wrapped to (-pi, pi].
    A zero signal yields magnitude 0.0 and phase 0.0.

    Raises:
        ValueError: if the window covers less than one period of
            ``freq_hz`` or ``freq_hz`` is not below Nyquist.
    """
    arr = _as_window(window)
    if not (freq_hz > 0.0 and sample_rate_hz > 0.0):
        raise ValueError("freq_hz and sample_rate_hz must be positive")
    if freq_hz >= 0.5 * sample_rate_hz:
        raise ValueError("freq_hz must lie below the Nyquist frequency")
    if arr.size * freq_hz < sample_rate_hz * (1.0 - 1e-12):
        raise ValueError("window shorter than one period of freq_hz")
    sin_basis, cos_basis = _projection_basis(arr.size, freq_hz, sample_rate_hz)
    in_phase = 2.0 * float(arr @ sin_basis) / arr.size
    quadrature = 2.0 * float(arr @ cos_basis) / arr.size
    magnitude_rms = math.hypot(in_phase, quadrature) / math.sqrt(2.0)
    phase = wrap_phase(math.atan2(quadrature, in_phase))
    return magnitude_rms, phase


def harmonic_magnitude(window, harmonic: int, base_freq_hz: float, sample_rate_hz: float) -> float:
    """RMS magnitude of the ``harmonic``-th multiple of ``base_freq_hz``."""
    if harmonic < 1:
        raise ValueError("harmonic must be a positive integer")
    arr = _as_window(window)
    if arr.size * base_freq_hz < sample_rate_hz * (1.0 - 1e-12):
        raise ValueError("window shorter than one period of the base frequency")
    magnitude, _ = fundamental_phasor(arr, harmonic * base_freq_hz, sample_rate_hz)
    return magnitude


def phase_shift(v_window, i_window, freq_hz: float, sample_rate_hz: float) -> float:
    """Fundamental phase of the voltage minus that of the current, in (-pi, pi].

    Positive values mean the current lags the voltage (inductive load).

    Raises:
        UndefinedFeatureError: if either signal has a zero fundamental.
        ValueError: if the windows are not aligned (different lengths).
    """
    v = _as_window(v_window)
    i = _as_window(i_window)
    if v.size != i.size:
        raise ValueError("voltage and current windows must have equal length")
    v_mag, v_phase = fundamental_phasor(v, freq_hz, sample_rate_hz)
    i_mag, i_phase = fundamental_phasor(i, freq_hz, sample_rate_hz)
    if v_mag == 0.0 or i_mag == 0.0:
        raise UndefinedFeatureError("phase shift undefined: zero fundamental component")
    return wrap_phase(v_phase - i_phase)


def active_reactive_power(v_window, i_window, freq_hz: float, sample_rate_hz: float) -> tuple[float, float]:
    """Active power P = mean(v*i) and fundamental reactive power Q.

    Q is computed from the fundamental phasors as
    ``Vrms_1 * Irms_1 * sin(phase_shift)``; positive Q is inductive.

    Raises:
        UndefinedFeatureError: if either fundamental is zero (Q undefined).
    """
    v = _as_window(v_window)
    i = _as_window(i_window)
    if v.size != i.size:
        raise ValueError("voltage and current windows must have equal length")
    p_watts = float(np.mean(v * i))
    v_mag, _ = fundamental_phasor(v, freq_hz, sample_rate_hz)
    i_mag, _ = fundamental_phasor(i, freq_hz, sample_rate_hz)
    shift = phase_shift(v, i, freq_hz, sample_rate_hz)
    q_var = v_mag * i_mag * math.sin(shift)
    return p_watts, q_var


def thd(window, freq_hz: float, sample_rate_hz: float, max_harmonic: int) -> float:
    """Total harmonic distortion: RMS of harmonics 2..max_harmonic over the fundamental.

    Raises:
        UndefinedFeatureError: if the fundamental magnitude is zero.
        ValueError: if ``max_harmonic * freq_hz`` is not below Nyquist.
    """
    if max_harmonic < 2:
        raise ValueError("max_harmonic must be at least 2")
    arr = _as_window(window)
    if max_harmonic * freq_hz >= 0.5 * sample_rate_hz:
        raise ValueError("max_harmonic * freq_hz must lie below the Nyquist frequency")
    fundamental, _ = fundamental_phasor(arr, freq_hz, sample_rate_hz)
    if fundamental == 0.0:
        raise UndefinedFeatureError("THD undefined: zero fundamental component")
    harmonic_energy = 0.0
    for order in range(2, max_harmonic + 1):
        magnitude, _ = fundamental_phasor(arr, order * freq_hz, sample_rate_hz)
        harmonic_energy += magnitude * magnitude
    return math.sqrt(harmonic_energy) / fundamental
