"""Parametric steady-state appliance signatures and per-device current synthesis.

A device class is described by named operational modes, each mode by a
set of harmonic phasors (RMS amperes, radians, sine convention) plus a
wideband current-noise level. The shipped signatures are synthetic
stand-ins with distinct harmonic and phase profiles per class; they are
not lab measurements and every one of them can be overridden through a
device library file (see ``save_device_library`` for the schema).
"""

from __future__ import annotations

import cmath
import math
from configparser import ConfigParser, Error as ConfigParserError
from dataclasses import dataclass

import numpy as np

from .signals import Waveform, wrap_phase

__all__ = [
    "LibraryFormatError",
    "HarmonicSpec",
    "DeviceMode",
    "DeviceModel",
    "OFF_MODE_NAME",
    "mode_current_samples",
    "synth_device_current",
    "device_signature_features",
    "characterization_vectors",
    "default_library",
    "save_device_library",
    "load_device_library",
]

OFF_MODE_NAME = "off"

LIBRARY_FORMAT_VERSION = 1

NOMINAL_VOLTAGE_RMS = 120.0


class LibraryFormatError(ValueError):
    """A device library file is malformed or has an unsupported version."""


@dataclass(frozen=True)
class HarmonicSpec:
    """One harmonic component of a mode's current: order, RMS amperes, phase."""

    harmonic_order: int
    magnitude_rms_amps: float
    phase_rad: float = 0.0

    def __post_init__(self) -> None:
        if self.harmonic_order < 1:
            raise ValueError("harmonic_order must be a positive integer")
        if not (math.isfinite(self.magnitude_rms_amps) and self.magnitude_rms_amps >= 0.0):
            raise ValueError("magnitude_rms_amps must be finite and non-negative")
        if not math.isfinite(self.phase_rad):
            raise ValueError("phase_rad must be finite")
        object.__setattr__(self, "phase_rad", wrap_phase(self.phase_rad))


@dataclass(frozen=True)
class DeviceMode:
    """A named steady state of a device with its harmonic signature."""

    name: str
    harmonics: tuple[HarmonicSpec, ...] = ()
    noise_rms_amps: float = 0.0

    def __post_init__(self) -> None:
        if not self.name or any(ch.isspace() for ch in self.name):
            raise ValueError("mode name must be non-empty and contain no whitespace")
        object.__setattr__(self, "harmonics", tuple(self.harmonics))
        orders = [h.harmonic_order for h in self.harmonics]
        if len(set(orders)) != len(orders):
            raise ValueError(f"mode {self.name!r} repeats a harmonic order")
        if not (math.isfinite(self.noise_rms_amps) and self.noise_rms_amps >= 0.0):
            raise ValueError("noise_rms_amps must be finite and non-negative")
        if self.name != OFF_MODE_NAME and not any(h.magnitude_rms_amps > 0.0 for h in self.harmonics):
            raise ValueError(f"mode {self.name!r} must have at least one non-zero harmonic")

    @property
    def max_order(self) -> int:
        return max((h.harmonic_order for h in self.harmonics), default=0)


OFF_MODE = DeviceMode(OFF_MODE_NAME)


@dataclass(frozen=True)
class DeviceModel:
    """An appliance class: its modes, and whether it is the medical device of interest."""

    class_name: str
    is_medical: bool
    modes: tuple[DeviceMode, ...]

    def __post_init__(self) -> None:
        if not self.class_name or any(ch.isspace() for ch in self.class_name) or "#" in self.class_name:
            raise ValueError("class_name must be non-empty, without whitespace or '#'")
        object.__setattr__(self, "modes", tuple(self.modes))
        names = [m.name for m in self.modes]
        if len(set(names)) != len(names):
            raise ValueError(f"device {self.class_name!r} repeats a mode name")
        off_modes = [m for m in self.modes if m.name == OFF_MODE_NAME]
        if len(off_modes) != 1:
            raise ValueError(f"device {self.class_name!r} must define exactly one 'off' mode")
        off = off_modes[0]
        if off.harmonics or off.noise_rms_amps != 0.0:
            raise ValueError(f"device {self.class_name!r}: the 'off' mode must be silent")

    def mode(self, name: str) -> DeviceMode:
        for m in self.modes:
            if m.name == name:
                return m
        raise KeyError(f"device {self.class_name!r} has no mode {name!r}")

    @property
    def non_off_modes(self) -> tuple[DeviceMode, ...]:
        return tuple(m for m in self.modes if m.name != OFF_MODE_NAME)

    @property
    def max_order(self) -> int:
        return max((m.max_order for m in self.modes), default=0)


def mode_current_samples(mode: DeviceMode, t_s: np.ndarray, f0_hz: float, phase_offset_rad: float = 0.0) -> np.ndarray:
    """Noiseless current of ``mode`` at absolute times ``t_s`` (seconds).

    i(t) = sum_h sqrt(2) * M_h * sin(2*pi*h*f0*t + phi_h + h*phase_offset)
    """
    out = np.zeros_like(t_s, dtype=np.float64)
    for h in mode.harmonics:
        if h.magnitude_rms_amps == 0.0:
            continue
        omega = 2.0 * math.pi * h.harmonic_order * f0_hz
        total_phase = h.phase_rad + h.harmonic_order * phase_offset_rad
        out += math.sqrt(2.0) * h.magnitude_rms_amps * np.sin(omega * t_s + total_phase)
    return out


def _check_aliasing(mode: DeviceMode, f0_hz: float, sample_rate_hz: float) -> None:
    if mode.max_order and sample_rate_hz <= 2.0 * f0_hz * mode.max_order:
        raise ValueError(
            f"mode {mode.name!r}: harmonic order {mode.max_order} aliases at "
            f"{sample_rate_hz} Hz sampling"
        )


def synth_device_current(
    model: DeviceModel,
    mode_name: str,
    duration_s: float,
    sample_rate_hz: float,
    f0_hz: float,
    phase_offset_rad: float = 0.0,
    rng_seed: int = 0,
) -> Waveform:
    """Synthesize one device's current in a fixed mode over ``duration_s``.

    Deterministic given ``rng_seed``; the seed only drives the mode's
    wideband noise. Raises KeyError for an unknown mode and ValueError if
    the highest harmonic would alias.
    """
    mode = model.mode(mode_name)
    _check_aliasing(mode, f0_hz, sample_rate_hz)
    n = int(round(duration_s * sample_rate_hz))
    if n < 1:
        raise ValueError("duration_s too short for one sample")
    t = np.arange(n, dtype=np.float64) / sample_rate_hz
    samples = mode_current_samples(mode, t, f0_hz, phase_offset_rad)
    if mode.noise_rms_amps > 0.0:
        rng = np.random.default_rng(rng_seed)
        samples = samples + rng.normal(0.0, mode.noise_rms_amps, n)
    return Waveform(samples, sample_rate_hz, 0.0)


def device_signature_features(
    model: DeviceModel,
    mode_name: str,
    window_s: float,
    sample_rate_hz: float,
    f0_hz: float,
    feature_spec,
    voltage_rms: float = NOMINAL_VOLTAGE_RMS,
) -> np.ndarray:
    """Feature vector of one noiseless window of the mode against a nominal voltage.

    Used for lab-style characterization: feature ranking and signature
    documentation. Features that are undefined on the window (all modes
    'off', say) are reported as 0.0.
    """
    from .featurize import evaluate_window  # imported lazily to avoid an import cycle

    mode = model.mode(mode_name)
    _check_aliasing(mode, feature_spec.f0_hz, sample_rate_hz)
    n = int(round(window_s * sample_rate_hz))
    if n < 1:
        raise ValueError("window_s too short for one sample")
    t = np.arange(n, dtype=np.float64) / sample_rate_hz
    current = mode_current_samples(mode, t, f0_hz)
    voltage = math.sqrt(2.0) * voltage_rms * np.sin(2.0 * math.pi * f0_hz * t)
    row, _ = evaluate_window(voltage, current, feature_spec, sample_rate_hz)
    return row


def characterization_vectors(
    model: DeviceModel,
    feature_spec,
    window_s: float,
    sample_rate_hz: float,
    repetitions: int = 8,
    rng_seed: int = 0,
    voltage_rms: float = NOMINAL_VOLTAGE_RMS,
) -> list[np.ndarray]:
    """Noisy signature vectors across all non-off modes of ``model``.

    Emulates repeated lab measurements: per mode, ``repetitions`` windows
    with the mode's own noise level, deterministically seeded.
    """
    from .featurize import evaluate_window  # imported lazily to avoid an import cycle

    if repetitions < 1:
        raise ValueError("repetitions must be positive")
    f0 = feature_spec.f0_hz
    n = int(round(window_s * sample_rate_hz))
    if n < 1:
        raise ValueError("window_s too short for one sample")
    t = np.arange(n, dtype=np.float64) / sample_rate_hz
    voltage = math.sqrt(2.0) * voltage_rms * np.sin(2.0 * math.pi * f0 * t)
    vectors: list[np.ndarray] = []
    for mode in model.non_off_modes:
        _check_aliasing(mode, f0, sample_rate_hz)
        base = mode_current_samples(mode, t, f0)
        rng = np.random.default_rng(_stable_seed(rng_seed, model.class_name, mode.name, "characterize"))
        for _ in range(repetitions):
            current = base + rng.normal(0.0, mode.noise_rms_amps, n) if mode.noise_rms_amps > 0.0 else base
            row, _ = evaluate_window(voltage, current, feature_spec, sample_rate_hz)
            vectors.append(row)
    return vectors


def _stable_seed(*parts) -> int:
    # Process-independent integer seed from string parts (hash() is salted, sha256 is not).
    import hashlib

    digest = hashlib.sha256("/".join(str(p) for p in parts).encode()).digest()
    return int.from_bytes(digest[:8], "little")


def _phasor_sum(*components: tuple[float, float]) -> tuple[float, float]:
    total = sum(m * cmath.exp(1j * p) for m, p in components)
    return abs(total), cmath.phase(total)


def default_library() -> dict[str, DeviceModel]:
    """Built-in device library: the ventilator plus five background classes."""
    hum_mag, hum_phase = _phasor_sum((0.55, -0.52), (0.80, 0.0))
    ventilator = DeviceModel(
        "ventilator",
        is_medical=True,
        modes=(
            OFF_MODE,
            DeviceMode("standby", (HarmonicSpec(1, 0.10, -0.35),), noise_rms_amps=0.003),
            DeviceMode(
                "run",
                (
                    HarmonicSpec(1, 0.55, -0.52),
                    HarmonicSpec(3, 0.18, 2.80),
                    HarmonicSpec(5, 0.09, -1.90),
                ),
                noise_rms_amps=0.006,
            ),
            DeviceMode(
                "humidifier-run",
                (
                    HarmonicSpec(1, hum_mag, hum_phase),
                    HarmonicSpec(3, 0.18, 2.80),
                    HarmonicSpec(5, 0.09, -1.90),
                ),
                noise_rms_amps=0.006,
            ),
        ),
    )
    background = [
        DeviceModel(
            "resistive_heater",
            is_medical=False,
            modes=(OFF_MODE, DeviceMode("on", (HarmonicSpec(1, 8.0, 0.0),), noise_rms_amps=0.010)),
        ),
        DeviceModel(
            "induction_motor",
            is_medical=False,
            modes=(
                OFF_MODE,
                DeviceMode(
                    "on",
                    (HarmonicSpec(1, 5.0, -0.65), HarmonicSpec(5, 0.05, 1.40)),
                    noise_rms_amps=0.020,
                ),
            ),
        ),
        DeviceModel(
            "smps",
            is_medical=False,
            modes=(
                OFF_MODE,
                DeviceMode(
                    "on",
                    (
                        HarmonicSpec(1, 1.10, -0.12),
                        HarmonicSpec(3, 0.85, -2.50),
                        HarmonicSpec(5, 0.55, -0.40),
                        HarmonicSpec(7, 0.30, 2.20),
                    ),
                    noise_rms_amps=0.010,
                ),
            ),
        ),
        DeviceModel(
            "lighting",
            is_medical=False,
            modes=(
                OFF_MODE,
                DeviceMode(
                    "on",
                    (
                        HarmonicSpec(1, 0.45, -0.30),
                        HarmonicSpec(3, 0.20, 2.60),
                        HarmonicSpec(5, 0.10, -0.80),
                        HarmonicSpec(7, 0.05, 1.10),
                    ),
                    noise_rms_amps=0.004,
                ),
            ),
        ),
        DeviceModel(
            "refrigerator",
            is_medical=False,
            modes=(
                OFF_MODE,
                DeviceMode(
                    "compressor",
                    (HarmonicSpec(1, 1.60, -0.50), HarmonicSpec(3, 0.08, 1.90), HarmonicSpec(5, 0.04, -2.30)),
                    noise_rms_amps=0.008,
                ),
            ),
        ),
    ]
    library = {ventilator.class_name: ventilator}
    for model in background:
        library[model.class_name] = model
    return library


def _format_float(x: float) -> str:
    return format(float(x), ".17g")


def save_device_library(library: dict[str, DeviceModel], path) -> None:
    """Write a device library file.

    Schema (key = value lines under nested section headers):

        [library]
        format_version = 1

        [device.<class>]
        is_medical = true | false

        [device.<class>.mode.<mode>]
        noise_rms_amps = <float>
        h<order> = <magnitude_rms_amps> <phase_rad>

    The 'off' mode is implicit and must not be listed.
    """
    lines = ["[library]", f"format_version = {LIBRARY_FORMAT_VERSION}", ""]
    for class_name in library:
        model = library[class_name]
        lines.append(f"[device.{class_name}]")
        lines.append(f"is_medical = {'true' if model.is_medical else 'false'}")
        lines.append("")
        for mode in model.non_off_modes:
            lines.append(f"[device.{class_name}.mode.{mode.name}]")
            lines.append(f"noise_rms_amps = {_format_float(mode.noise_rms_amps)}")
            for h in mode.harmonics:
                lines.append(
                    f"h{h.harmonic_order} = {_format_float(h.magnitude_rms_amps)} {_format_float(h.phase_rad)}"
                )
            lines.append("")
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("\n".join(lines))


def load_device_library(path) -> dict[str, DeviceModel]:
    """Read a device library file written in the ``save_device_library`` schema."""
    parser = ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except ConfigParserError as exc:
        raise LibraryFormatError(f"device library {path}: {exc}") from None
    if not parser.has_section("library"):
        raise LibraryFormatError(f"device library {path}: missing [library] section")
    version = parser.get("library", "format_version", fallback=None)
    if version is None or version.strip() != str(LIBRARY_FORMAT_VERSION):
        raise LibraryFormatError(f"device library {path}: unsupported format_version {version!r}")

    classes: dict[str, dict] = {}
    for section in parser.sections():
        if section == "library":
            continue
        parts = section.split(".")
        if len(parts) == 2 and parts[0] == "device":
            entry = classes.setdefault(parts[1], {"is_medical": False, "modes": []})
            flag = parser.get(section, "is_medical", fallback="false").strip().lower()
            if flag not in ("true", "false"):
                raise LibraryFormatError(f"device library {path}: bad is_medical in [{section}]")
            entry["is_medical"] = flag == "true"
        elif len(parts) == 4 and parts[0] == "device" and parts[2] == "mode":
            class_name, mode_name = parts[1], parts[3]
            if mode_name == OFF_MODE_NAME:
                raise LibraryFormatError(f"device library {path}: 'off' mode must not be listed")
            entry = classes.setdefault(class_name, {"is_medical": False, "modes": []})
            harmonics = []
            noise = 0.0
            for key, value in parser.items(section):
                if key == "noise_rms_amps":
                    noise = _parse_float(path, section, key, value)
                elif key.startswith("h") and key[1:].isdigit():
                    fields = value.split()
                    if len(fields) != 2:
                        raise LibraryFormatError(
                            f"device library {path}: [{section}] {key} needs '<magnitude> <phase>'"
                        )
                    harmonics.append(
                        HarmonicSpec(
                            int(key[1:]),
                            _parse_float(path, section, key, fields[0]),
                            _parse_float(path, section, key, fields[1]),
                        )
                    )
                else:
                    raise LibraryFormatError(f"device library {path}: unknown key {key!r} in [{section}]")
            try:
                entry["modes"].append(DeviceMode(mode_name, tuple(harmonics), noise))
            except ValueError as exc:
                raise LibraryFormatError(f"device library {path}: {exc}") from None
        else:
            raise LibraryFormatError(f"device library {path}: unexpected section [{section}]")

    library: dict[str, DeviceModel] = {}
    for class_name, entry in classes.items():
        try:
            library[class_name] = DeviceModel(
                class_name, entry["is_medical"], (OFF_MODE, *entry["modes"])
            )
        except ValueError as exc:
            raise LibraryFormatError(f"device library {path}: {exc}") from None
    if not library:
        raise LibraryFormatError(f"device library {path}: no device classes defined")
    return library


def _parse_float(path, section: str, key: str, value: str) -> float:
    try:
        return float(value)
    except ValueError:
        raise LibraryFormatError(f"device library {path}: [{section}] {key} is not a number") from None
