"""Scenario generation and feeder-level waveform synthesis.

A scenario is a fixed population of device instances behind one
single-phase feeder. Each instance follows an alternating-renewal
schedule (exponential on and off durations, stationary initial state)
and the feeder current is the sum of the scheduled per-device currents
plus optional wideband noise. The feeder voltage is stiff: a fixed
sinusoid with an optional third-harmonic distortion term, unaffected by
load.

Determinism: schedules are drawn with ``random.Random`` seeded per
(scenario seed, class name, instance index), so merging scenarios with
disjoint populations preserves each device's schedule. Waveform noise
uses numpy generators with seeds derived the same way.
"""

from __future__ import annotations

import math
import random
from dataclasses import dataclass, field

import numpy as np

from .devices import DeviceModel, OFF_MODE_NAME, mode_current_samples, _check_aliasing, _stable_seed
from .signals import Waveform

__all__ = [
    "ScenarioConfig",
    "DeviceSchedule",
    "Schedule",
    "GroundTruthSeries",
    "generate_schedule",
    "synthesize_feeder",
    "ground_truth_counts",
    "window_targets",
]


@dataclass(frozen=True)
class ScenarioConfig:
    """Everything needed to synthesize one feeder scenario deterministically.

    ``schedule_params`` maps a device class to (mean_on_s, mean_off_s).
    ``medical_modes`` restricts which non-off modes medical devices pick
    at each on-interval; empty means all non-off modes, chosen uniformly.
    """

    duration_s: float
    sample_rate_hz: float = 10_000.0
    f0_hz: float = 60.0
    voltage_rms: float = 120.0
    voltage_thd: float = 0.0
    n_medical_devices: int = 0
    medical_class: str = "ventilator"
    background_population: tuple[tuple[str, int], ...] = ()
    schedule_params: dict[str, tuple[float, float]] = field(default_factory=dict)
    medical_modes: tuple[str, ...] = ()
    feeder_noise_rms_amps: float = 0.0
    rng_seed: int = 0

    def __post_init__(self) -> None:
        object.__setattr__(self, "background_population", tuple((str(c), int(n)) for c, n in self.background_population))
        object.__setattr__(self, "schedule_params", dict(self.schedule_params))
        object.__setattr__(self, "medical_modes", tuple(self.medical_modes))
        if not (math.isfinite(self.duration_s) and self.duration_s > 0.0):
            raise ValueError("duration_s must be positive")
        if not (self.sample_rate_hz > 0.0 and self.f0_hz > 0.0):
            raise ValueError("sample_rate_hz and f0_hz must be positive")
        if self.voltage_rms <= 0.0:
            raise ValueError("voltage_rms must be positive")
        if self.voltage_thd < 0.0:
            raise ValueError("voltage_thd must be non-negative")
        if self.n_medical_devices < 0:
            raise ValueError("n_medical_devices must be non-negative")
        if any(n < 0 for _, n in self.background_population):
            raise ValueError("background device counts must be non-negative")
        for cls, (mean_on, mean_off) in self.schedule_params.items():
            if not (mean_on > 0.0 and mean_off > 0.0):
                raise ValueError(f"schedule means for {cls!r} must be positive")
        if self.feeder_noise_rms_amps < 0.0:
            raise ValueError("feeder_noise_rms_amps must be non-negative")
        if any(cls == self.medical_class for cls, _ in self.background_population):
            raise ValueError("medical_class must not also appear in background_population")

    def populations(self) -> tuple[tuple[str, int], ...]:
        """Device classes with counts, medical class first."""
        out: list[tuple[str, int]] = []
        if self.n_medical_devices > 0:
            out.append((self.medical_class, self.n_medical_devices))
        out.extend(self.background_population)
        return tuple(out)


@dataclass(frozen=True)
class DeviceSchedule:
    """On-intervals of one device instance; off periods are implicit."""

    device_id: str
    class_name: str
    is_medical: bool
    intervals: tuple[tuple[float, float, str], ...]  # (start_s, end_s, mode_name)

    def __post_init__(self) -> None:
        object.__setattr__(self, "intervals", tuple((float(s), float(e), str(m)) for s, e, m in self.intervals))
        previous_end = -math.inf
        for start, end, _mode in self.intervals:
            if not start < end:
                raise ValueError(f"{self.device_id}: interval start must precede end")
            if start < previous_end:
                raise ValueError(f"{self.device_id}: intervals overlap or are out of order")
            previous_end = end


@dataclass(frozen=True)
class Schedule:
    """All device schedules of one scenario, in deterministic device order."""

    devices: tuple[DeviceSchedule, ...]

    def __post_init__(self) -> None:
        object.__setattr__(self, "devices", tuple(self.devices))
        ids = [d.device_id for d in self.devices]
        if len(set(ids)) != len(ids):
            raise ValueError("device ids must be unique")


@dataclass(frozen=True)
class GroundTruthSeries:
    """Number of medical devices running at each 1 Hz timestamp."""

    timestamps_s: np.ndarray
    counts: np.ndarray

    def __post_init__(self) -> None:
        timestamps = np.ascontiguousarray(self.timestamps_s, dtype=np.float64)
        counts = np.ascontiguousarray(self.counts, dtype=np.int64)
        if timestamps.shape != counts.shape or timestamps.ndim != 1:
            raise ValueError("timestamps and counts must be 1-D arrays of equal length")
        if counts.size and counts.min() < 0:
            raise ValueError("counts must be non-negative")
        timestamps.flags.writeable = False
        counts.flags.writeable = False
        object.__setattr__(self, "timestamps_s", timestamps)
        object.__setattr__(self, "counts", counts)


def _mode_pool(config: ScenarioConfig, model: DeviceModel) -> list[str]:
    if model.is_medical and config.medical_modes:
        pool = list(config.medical_modes)
        for name in pool:
            if model.mode(name).name == OFF_MODE_NAME:
                raise ValueError("medical_modes must not include 'off'")
        return pool
    pool = [m.name for m in model.non_off_modes]
    if not pool:
        raise ValueError(f"device class {model.class_name!r} has no non-off modes to schedule")
    return pool


def generate_schedule(config: ScenarioConfig, library: dict[str, DeviceModel]) -> Schedule:
    """Draw the alternating-renewal on/off schedule for every device instance.

    Each instance starts in the stationary state (on with probability
    mean_on / (mean_on + mean_off)) and alternates exponentially
    distributed on and off durations, truncated at the scenario end. At
    each on-interval the device picks a mode uniformly from its pool.
    Deterministic given ``config.rng_seed``.
    """
    devices: list[DeviceSchedule] = []
    for class_name, count in config.populations():
        if class_name not in library:
            raise ValueError(f"device class {class_name!r} is not in the device library")
        model = library[class_name]
        if class_name not in config.schedule_params:
            raise ValueError(f"no schedule_params for device class {class_name!r}")
        mean_on, mean_off = config.schedule_params[class_name]
        pool = _mode_pool(config, model)
        for k in range(count):
            rng = random.Random(f"{config.rng_seed}/{class_name}/{k}/schedule")
            is_on = rng.random() < mean_on / (mean_on + mean_off)
            t = 0.0
            intervals: list[tuple[float, float, str]] = []
            while t < config.duration_s:
                mean = mean_on if is_on else mean_off
                end = min(t + rng.expovariate(1.0 / mean), config.duration_s)
                if is_on and end > t:
                    mode_name = pool[rng.randrange(len(pool))]
                    intervals.append((t, end, mode_name))
                t = end
                is_on = not is_on
            devices.append(
                DeviceSchedule(f"{class_name}#{k}", class_name, model.is_medical, tuple(intervals))
            )
    return Schedule(tuple(devices))


def _sample_index(time_s: float, sample_rate_hz: float, n: int) -> int:
    return min(max(int(round(time_s * sample_rate_hz)), 0), n)


def synthesize_feeder(
    config: ScenarioConfig, schedule: Schedule, library: dict[str, DeviceModel]
) -> tuple[Waveform, Waveform]:
    """Aggregate feeder (voltage, current) waveforms for a scheduled scenario.

    The current is the per-device sum in schedule order (fixed summation
    order keeps the result deterministic) plus feeder noise; device
    phases stay locked to the scenario clock across intervals.
    """
    n = int(round(config.duration_s * config.sample_rate_hz))
    if n < 1:
        raise ValueError("scenario too short for one sample")
    t = np.arange(n, dtype=np.float64) / config.sample_rate_hz
    omega = 2.0 * math.pi * config.f0_hz

    voltage = math.sqrt(2.0) * config.voltage_rms * np.sin(omega * t)
    if config.voltage_thd > 0.0:
        voltage = voltage + math.sqrt(2.0) * config.voltage_rms * config.voltage_thd * np.sin(3.0 * omega * t)

    current = np.zeros(n, dtype=np.float64)
    for device in schedule.devices:
        if device.class_name not in library:
            raise ValueError(f"schedule references unknown device class {device.class_name!r}")
        model = library[device.class_name]
        noise_rng = None
        for start, end, mode_name in device.intervals:
            if start < -1e-9 or end > config.duration_s + 1e-9:
                raise ValueError(f"{device.device_id}: interval outside the scenario duration")
            try:
                mode = model.mode(mode_name)
            except KeyError as exc:
                raise ValueError(str(exc)) from None
            _check_aliasing(mode, config.f0_hz, config.sample_rate_hz)
            i0 = _sample_index(start, config.sample_rate_hz, n)
            i1 = _sample_index(end, config.sample_rate_hz, n)
            if i1 <= i0:
                continue
            current[i0:i1] += mode_current_samples(mode, t[i0:i1], config.f0_hz)
            if mode.noise_rms_amps > 0.0:
                if noise_rng is None:
                    noise_rng = np.random.default_rng(
                        _stable_seed(config.rng_seed, device.device_id, "noise")
                    )
                current[i0:i1] += noise_rng.normal(0.0, mode.noise_rms_amps, i1 - i0)
    if config.feeder_noise_rms_amps > 0.0:
        feeder_rng = np.random.default_rng(_stable_seed(config.rng_seed, "feeder", "noise"))
        current += feeder_rng.normal(0.0, config.feeder_noise_rms_amps, n)

    return Waveform(voltage, config.sample_rate_hz, 0.0), Waveform(current, config.sample_rate_hz, 0.0)


def _ceil_index(time_s: float) -> int:
    # Tolerates 1-ulp float error on interval endpoints that land on integers.
    return max(0, math.ceil(time_s - 1e-9))


def ground_truth_counts(schedule: Schedule, config: ScenarioConfig) -> GroundTruthSeries:
    """Count of medical devices in a non-off mode at each integer second.

    A timestamp t is covered by an interval [start, end) when
    start <= t < end.
    """
    n = math.ceil(config.duration_s)
    counts = np.zeros(n, dtype=np.int64)
    for device in schedule.devices:
        if not device.is_medical:
            continue
        for start, end, mode_name in device.intervals:
            if mode_name == OFF_MODE_NAME:
                continue
            lo = _ceil_index(start)
            hi = min(_ceil_index(end), n)
            if hi > lo:
                counts[lo:hi] += 1
    return GroundTruthSeries(np.arange(n, dtype=np.float64), counts)


def window_targets(
    truth: GroundTruthSeries, window_s: float, stride_s: float, n_windows: int | None = None
) -> np.ndarray:
    """Per-window target y: the maximum instantaneous count inside each window.

    Window k covers [k * stride_s, k * stride_s + window_s) on the
    scenario clock. A device running at any point inside the window
    counts as running within it, hence the maximum.
    """
    if window_s < 1.0:
        raise ValueError("window_s must be at least 1 second")
    if stride_s <= 0.0:
        raise ValueError("stride_s must be positive")
    n_t = int(truth.counts.size)
    if n_windows is None:
        n_windows = int(math.floor((n_t - window_s) / stride_s)) + 1
    if n_windows < 1 or window_s > n_t:
        raise ValueError("window longer than the ground-truth series")
    y = np.zeros(n_windows, dtype=np.int64)
    for k in range(n_windows):
        start = k * stride_s
        lo = _ceil_index(start)
        hi = _ceil_index(start + window_s)
        if hi > n_t or lo >= hi:
            raise ValueError("window extends past the end of the ground-truth series")
        y[k] = int(truth.counts[lo:hi].max())
    return y
