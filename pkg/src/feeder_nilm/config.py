"""Run configuration: line-oriented key = value files with [section] headers.

Example:

    [scenario]
    duration_s = 600
    sample_rate_hz = 10000
    n_medical_devices = 5
    medical_class = ventilator
    medical_modes = run humidifier-run
    background_population = resistive_heater:8 induction_motor:5 smps:1
    schedule_ventilator = 150 75
    schedule_resistive_heater = 180 120
    feeder_noise_rms_amps = 0.05
    rng_seed = 7

    [featurize]
    window_s = 5
    stride_s = 5

    [model]
    hidden_layers = 32 16
    learning_rate = 0.02
    epochs = 400

    [split]
    train_fraction = 0.6
    val_fraction = 0.2
    test_fraction = 0.2

Unknown keys are rejected so typos fail loudly. Per-class schedule means
use ``schedule_<class> = <mean_on_s> <mean_off_s>`` keys. Stage artifacts
carry a sha256 fingerprint chained over (scenario + library), then
featurize, then model + split sections; stages reject artifacts whose
fingerprint does not match the current configuration.
"""

from __future__ import annotations

import hashlib
import os
from configparser import ConfigParser, Error as ConfigParserError
from dataclasses import dataclass, field, replace

from .devices import DeviceModel, default_library, load_device_library
from .featurize import DEFAULT_FEATURES, FeatureSpec
from .model import TrainConfig
from .simulate import ScenarioConfig

__all__ = [
    "ConfigError",
    "FeaturizeSection",
    "ModelSection",
    "SplitSection",
    "RunConfig",
    "load_run_config",
    "load_library_for",
    "scenario_fingerprint",
    "dataset_fingerprint",
    "model_fingerprint",
]


class ConfigError(ValueError):
    """A run configuration file is missing, malformed, or inconsistent."""


@dataclass(frozen=True)
class FeaturizeSection:
    window_s: float = 5.0
    stride_s: float = 5.0
    features: tuple[str, ...] = DEFAULT_FEATURES
    max_harmonic: int = 7
    top_k: int = 0  # 0 = keep all features; >0 = truncate via the Fisher ranking

    def __post_init__(self) -> None:
        if not (self.window_s >= 1.0 and self.stride_s > 0.0):
            raise ConfigError("window_s must be >= 1 and stride_s positive")
        if self.top_k < 0:
            raise ConfigError("top_k must be non-negative")


@dataclass(frozen=True)
class ModelSection:
    hidden_layers: tuple[int, ...] = (32, 16)
    init_seed: int = 1
    train: TrainConfig = field(default_factory=TrainConfig)

    def __post_init__(self) -> None:
        if any(h < 1 for h in self.hidden_layers):
            raise ConfigError("hidden layer sizes must be positive")


@dataclass(frozen=True)
class SplitSection:
    train_fraction: float = 0.6
    val_fraction: float = 0.2
    test_fraction: float = 0.2
    seed: int = 0  # recorded for provenance; the chronological split does not use it

    def __post_init__(self) -> None:
        fractions = (self.train_fraction, self.val_fraction, self.test_fraction)
        if any(f <= 0.0 for f in fractions):
            raise ConfigError("split fractions must be positive")
        if abs(sum(fractions) - 1.0) > 1e-9:
            raise ConfigError("split fractions must sum to 1")


@dataclass(frozen=True)
class RunConfig:
    scenario: ScenarioConfig
    featurize: FeaturizeSection = field(default_factory=FeaturizeSection)
    model: ModelSection = field(default_factory=ModelSection)
    split: SplitSection = field(default_factory=SplitSection)
    device_library_path: str | None = None
    output_dir: str | None = None

    def feature_spec(self) -> FeatureSpec:
        return FeatureSpec(self.featurize.features, self.scenario.f0_hz, self.featurize.max_harmonic)

    def with_seed(self, seed: int) -> "RunConfig":
        return replace(self, scenario=replace(self.scenario, rng_seed=seed))


_SCENARIO_KEYS = {
    "duration_s",
    "sample_rate_hz",
    "f0_hz",
    "voltage_rms",
    "voltage_thd",
    "n_medical_devices",
    "medical_class",
    "medical_modes",
    "background_population",
    "feeder_noise_rms_amps",
    "rng_seed",
    "device_library",
}
_FEATURIZE_KEYS = {"window_s", "stride_s", "features", "max_harmonic", "top_k"}
_MODEL_KEYS = {
    "hidden_layers",
    "learning_rate",
    "batch_size",
    "epochs",
    "l2_penalty",
    "init_seed",
    "shuffle_seed",
    "patience",
}
_SPLIT_KEYS = {"train_fraction", "val_fraction", "test_fraction", "seed"}
_OUTPUT_KEYS = {"dir"}


def _get(section: dict[str, str], key: str, convert, default):
    if key not in section:
        return default
    try:
        return convert(section[key])
    except (ValueError, TypeError):
        raise ConfigError(f"bad value for {key!r}: {section[key]!r}") from None


def _parse_population(value: str) -> tuple[tuple[str, int], ...]:
    population = []
    for token in value.replace(",", " ").split():
        if ":" not in token:
            raise ConfigError(f"background_population entries need 'class:count', got {token!r}")
        name, count = token.rsplit(":", 1)
        try:
            population.append((name, int(count)))
        except ValueError:
            raise ConfigError(f"bad device count in {token!r}") from None
    return tuple(population)


def load_run_config(path) -> RunConfig:
    """Parse and validate a run configuration file."""
    parser = ConfigParser(interpolation=None)
    parser.optionxform = str
    try:
        with open(path, "r", encoding="utf-8") as fh:
            parser.read_file(fh)
    except OSError:
        raise
    except ConfigParserError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    known_sections = {"scenario", "featurize", "model", "split", "output"}
    for section in parser.sections():
        if section not in known_sections:
            raise ConfigError(f"{path}: unknown section [{section}]")
    if not parser.has_section("scenario"):
        raise ConfigError(f"{path}: missing [scenario] section")

    scenario_raw = dict(parser.items("scenario"))
    schedule_params: dict[str, tuple[float, float]] = {}
    for key in list(scenario_raw):
        if key.startswith("schedule_"):
            fields = scenario_raw.pop(key).split()
            if len(fields) != 2:
                raise ConfigError(f"{path}: {key} needs '<mean_on_s> <mean_off_s>'")
            try:
                schedule_params[key[len("schedule_") :]] = (float(fields[0]), float(fields[1]))
            except ValueError:
                raise ConfigError(f"{path}: bad schedule means in {key}") from None
    _reject_unknown(path, "scenario", scenario_raw, _SCENARIO_KEYS)
    if "duration_s" not in scenario_raw:
        raise ConfigError(f"{path}: [scenario] duration_s is required")

    try:
        scenario = ScenarioConfig(
            duration_s=_get(scenario_raw, "duration_s", float, None),
            sample_rate_hz=_get(scenario_raw, "sample_rate_hz", float, 10_000.0),
            f0_hz=_get(scenario_raw, "f0_hz", float, 60.0),
            voltage_rms=_get(scenario_raw, "voltage_rms", float, 120.0),
            voltage_thd=_get(scenario_raw, "voltage_thd", float, 0.0),
            n_medical_devices=_get(scenario_raw, "n_medical_devices", int, 0),
            medical_class=_get(scenario_raw, "medical_class", str, "ventilator"),
            background_population=_get(scenario_raw, "background_population", _parse_population, ()),
            schedule_params=schedule_params,
            medical_modes=tuple(_get(scenario_raw, "medical_modes", str, "").split()),
            feeder_noise_rms_amps=_get(scenario_raw, "feeder_noise_rms_amps", float, 0.0),
            rng_seed=_get(scenario_raw, "rng_seed", int, 0),
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None

    featurize_raw = dict(parser.items("featurize")) if parser.has_section("featurize") else {}
    _reject_unknown(path, "featurize", featurize_raw, _FEATURIZE_KEYS)
    window_s = _get(featurize_raw, "window_s", float, 5.0)
    try:
        featurize_section = FeaturizeSection(
            window_s=window_s,
            stride_s=_get(featurize_raw, "stride_s", float, window_s),
            features=tuple(_get(featurize_raw, "features", str, " ".join(DEFAULT_FEATURES)).split()),
            max_harmonic=_get(featurize_raw, "max_harmonic", int, 7),
            top_k=_get(featurize_raw, "top_k", int, 0),
        )
        FeatureSpec(featurize_section.features, scenario.f0_hz, featurize_section.max_harmonic)
    except (ConfigError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None

    model_raw = dict(parser.items("model")) if parser.has_section("model") else {}
    _reject_unknown(path, "model", model_raw, _MODEL_KEYS)
    try:
        model_section = ModelSection(
            hidden_layers=tuple(int(h) for h in _get(model_raw, "hidden_layers", str, "32 16").split()),
            init_seed=_get(model_raw, "init_seed", int, 1),
            train=TrainConfig(
                learning_rate=_get(model_raw, "learning_rate", float, 0.02),
                batch_size=_get(model_raw, "batch_size", int, 16),
                epochs=_get(model_raw, "epochs", int, 400),
                l2_penalty=_get(model_raw, "l2_penalty", float, 0.0),
                shuffle_seed=_get(model_raw, "shuffle_seed", int, 0),
                patience=_get(model_raw, "patience", int, 60),
            ),
        )
    except (ConfigError, ValueError) as exc:
        raise ConfigError(f"{path}: {exc}") from None

    split_raw = dict(parser.items("split")) if parser.has_section("split") else {}
    _reject_unknown(path, "split", split_raw, _SPLIT_KEYS)
    try:
        split_section = SplitSection(
            train_fraction=_get(split_raw, "train_fraction", float, 0.6),
            val_fraction=_get(split_raw, "val_fraction", float, 0.2),
            test_fraction=_get(split_raw, "test_fraction", float, 0.2),
            seed=_get(split_raw, "seed", int, 0),
        )
    except ConfigError as exc:
        raise ConfigError(f"{path}: {exc}") from None

    output_raw = dict(parser.items("output")) if parser.has_section("output") else {}
    _reject_unknown(path, "output", output_raw, _OUTPUT_KEYS)

    library_path = scenario_raw.get("device_library")
    if library_path is not None and not os.path.isabs(library_path):
        library_path = os.path.normpath(os.path.join(os.path.dirname(os.path.abspath(path)), library_path))

    return RunConfig(
        scenario=scenario,
        featurize=featurize_section,
        model=model_section,
        split=split_section,
        device_library_path=library_path,
        output_dir=output_raw.get("dir"),
    )


def _reject_unknown(path, section: str, raw: dict[str, str], known: set[str]) -> None:
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"{path}: unknown key(s) in [{section}]: {', '.join(sorted(unknown))}")


def load_library_for(config: RunConfig) -> dict[str, DeviceModel]:
    """The device library named by the config, or the built-in default.

    Also checks the config invariant that every referenced class exists.
    """
    library = load_device_library(config.device_library_path) if config.device_library_path else default_library()
    for class_name, count in config.scenario.populations():
        if count > 0 and class_name not in library:
            raise ConfigError(f"device class {class_name!r} is not in the device library")
    medical = config.scenario.medical_class
    if config.scenario.n_medical_devices > 0:
        if not library[medical].is_medical:
            raise ConfigError(f"device class {medical!r} is not flagged is_medical in the library")
        for mode_name in config.scenario.medical_modes:
            try:
                library[medical].mode(mode_name)
            except KeyError as exc:
                raise ConfigError(str(exc)) from None
    return library


# -------------------------------------------------------------- fingerprints


def _canon_float(x: float) -> str:
    return format(float(x), ".17g")


def _canon_scenario(scenario: ScenarioConfig) -> str:
    parts = [
        f"duration_s={_canon_float(scenario.duration_s)}",
        f"sample_rate_hz={_canon_float(scenario.sample_rate_hz)}",
        f"f0_hz={_canon_float(scenario.f0_hz)}",
        f"voltage_rms={_canon_float(scenario.voltage_rms)}",
        f"voltage_thd={_canon_float(scenario.voltage_thd)}",
        f"n_medical_devices={scenario.n_medical_devices}",
        f"medical_class={scenario.medical_class}",
        f"medical_modes={','.join(scenario.medical_modes)}",
        "background_population=" + ",".join(f"{c}:{n}" for c, n in scenario.background_population),
        "schedule_params="
        + ";".join(
            f"{c}:{_canon_float(on)}:{_canon_float(off)}"
            for c, (on, off) in sorted(scenario.schedule_params.items())
        ),
        f"feeder_noise_rms_amps={_canon_float(scenario.feeder_noise_rms_amps)}",
        f"rng_seed={scenario.rng_seed}",
    ]
    return "\n".join(parts)


def _canon_library(library: dict[str, DeviceModel]) -> str:
    parts = []
    for class_name in sorted(library):
        model = library[class_name]
        parts.append(f"device={class_name} medical={model.is_medical}")
        for mode in model.modes:
            harmonics = ",".join(
                f"{h.harmonic_order}:{_canon_float(h.magnitude_rms_amps)}:{_canon_float(h.phase_rad)}"
                for h in mode.harmonics
            )
            parts.append(f"mode={mode.name} noise={_canon_float(mode.noise_rms_amps)} h=[{harmonics}]")
    return "\n".join(parts)


def _sha(text: str) -> str:
    return hashlib.sha256(text.encode("utf-8")).hexdigest()


def scenario_fingerprint(config: RunConfig, library: dict[str, DeviceModel]) -> str:
    return _sha(_canon_scenario(config.scenario) + "\n" + _canon_library(library))


def dataset_fingerprint(config: RunConfig, library: dict[str, DeviceModel]) -> str:
    f = config.featurize
    canon = (
        f"window_s={_canon_float(f.window_s)}\nstride_s={_canon_float(f.stride_s)}\n"
        f"features={','.join(f.features)}\nmax_harmonic={f.max_harmonic}\ntop_k={f.top_k}"
    )
    return _sha(scenario_fingerprint(config, library) + "\n" + canon)


def model_fingerprint(config: RunConfig, library: dict[str, DeviceModel]) -> str:
    m, s = config.model, config.split
    canon = (
        f"hidden_layers={','.join(str(h) for h in m.hidden_layers)}\n"
        f"init_seed={m.init_seed}\n"
        f"learning_rate={_canon_float(m.train.learning_rate)}\n"
        f"batch_size={m.train.batch_size}\nepochs={m.train.epochs}\n"
        f"l2_penalty={_canon_float(m.train.l2_penalty)}\n"
        f"shuffle_seed={m.train.shuffle_seed}\npatience={m.train.patience}\n"
        f"split={_canon_float(s.train_fraction)}:{_canon_float(s.val_fraction)}:{_canon_float(s.test_fraction)}\n"
        f"split_seed={s.seed}"
    )
    return _sha(dataset_fingerprint(config, library) + "\n" + canon)
