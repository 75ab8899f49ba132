"""Command-line pipeline: simulate, featurize, select-features, train, eval.

Every command takes ``--config <path>`` and ``--out <dir>`` (default from
FEEDER_NILM_OUT, then the config [output] section, then ./out). Exit
codes: 0 success, 2 configuration error, 3 I/O or file-format error,
4 contract violation (fingerprint or dimension mismatch).
"""

from __future__ import annotations

import argparse
import os
import sys

import numpy as np

from . import storage as st
from .evaluate import baseline_report, evaluate, median_count
from .featurize import (
    FeatureDataset,
    FeatureSpec,
    apply_normalization,
    featurize,
    fit_normalization,
    rank_features,
)
from .model import count_from_output, forward_batch, init_params, train
from .simulate import generate_schedule, ground_truth_counts, synthesize_feeder
from .config import (
    ConfigError,
    RunConfig,
    dataset_fingerprint,
    load_library_for,
    load_run_config,
    model_fingerprint,
    scenario_fingerprint,
)
from .devices import LibraryFormatError, characterization_vectors

__all__ = ["main", "ContractError", "chronological_split", "ARTIFACTS"]

ARTIFACTS = {
    "voltage": "voltage.fnwv",
    "current": "current.fnwv",
    "schedule": "schedule.txt",
    "truth": "ground_truth.txt",
    "dataset": "dataset.csv",
    "ranking": "ranking.txt",
    "model": "model.txt",
    "report": "report.txt",
    "residuals": "residuals.csv",
}

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_IO = 3
EXIT_CONTRACT = 4


class ContractError(RuntimeError):
    """An artifact does not match the current configuration (stale or foreign)."""


def chronological_split(n_windows: int, fractions: tuple[float, float, float]):
    """Contiguous train/val/test index ranges in time order."""
    n_train = int(n_windows * fractions[0])
    n_val = int(n_windows * fractions[1])
    return slice(0, n_train), slice(n_train, n_train + n_val), slice(n_train + n_val, n_windows)


def _say(quiet: bool, message: str) -> None:
    if not quiet:
        print(message)


def _check_fingerprint(path, found: str, expected: str) -> None:
    # Waveform headers store only a 16-byte prefix; compare on the shorter one.
    width = min(len(found), len(expected)) if found else 0
    if not found or found[:width] != expected[:width]:
        raise ContractError(f"{path} was produced by a different configuration; re-run the upstream stage")


def _file_size(path) -> str:
    return f"{os.path.getsize(path)} bytes"


# ------------------------------------------------------------------- stages


def stage_simulate(config: RunConfig, out: str, quiet: bool) -> None:
    library = load_library_for(config)
    fp = scenario_fingerprint(config, library)
    schedule = generate_schedule(config.scenario, library)
    truth = ground_truth_counts(schedule, config.scenario)
    voltage, current = synthesize_feeder(config.scenario, schedule, library)

    os.makedirs(out, exist_ok=True)
    st.write_waveform(os.path.join(out, ARTIFACTS["voltage"]), voltage, "VOLT", fp)
    st.write_waveform(os.path.join(out, ARTIFACTS["current"]), current, "CURR", fp)
    st.write_schedule(os.path.join(out, ARTIFACTS["schedule"]), schedule, fp)
    st.write_ground_truth(os.path.join(out, ARTIFACTS["truth"]), truth, fp)

    n_devices = len(schedule.devices)
    _say(
        quiet,
        f"simulate: {config.scenario.duration_s:g} s at {config.scenario.sample_rate_hz:g} Hz, "
        f"{n_devices} devices ({config.scenario.n_medical_devices} medical), "
        f"current file {_file_size(os.path.join(out, ARTIFACTS['current']))}",
    )


def _resolve_features(config: RunConfig, library, out: str) -> FeatureSpec:
    spec = config.feature_spec()
    top_k = config.featurize.top_k
    if top_k <= 0:
        return spec
    ranking_path = os.path.join(out, ARTIFACTS["ranking"])
    if not os.path.exists(ranking_path):
        raise ContractError(f"{ranking_path} is required when top_k is set; run select-features first")
    ranking, fp = st.read_ranking(ranking_path)
    _check_fingerprint(ranking_path, fp, dataset_fingerprint(config, library))
    chosen = {fid for fid, _ in ranking[:top_k]}
    kept = tuple(fid for fid in spec.features if fid in chosen)
    return FeatureSpec(kept, spec.f0_hz, spec.max_harmonic)


def stage_featurize(config: RunConfig, out: str, quiet: bool) -> None:
    library = load_library_for(config)
    scenario_fp = scenario_fingerprint(config, library)
    voltage_path = os.path.join(out, ARTIFACTS["voltage"])
    current_path = os.path.join(out, ARTIFACTS["current"])
    truth_path = os.path.join(out, ARTIFACTS["truth"])
    voltage, _, fp_v = st.read_waveform(voltage_path)
    current, _, fp_i = st.read_waveform(current_path)
    truth, fp_t = st.read_ground_truth(truth_path)
    _check_fingerprint(voltage_path, fp_v, scenario_fp)
    _check_fingerprint(current_path, fp_i, scenario_fp)
    _check_fingerprint(truth_path, fp_t, scenario_fp)

    spec = _resolve_features(config, library, out)
    dataset = featurize(
        voltage, current, truth, config.featurize.window_s, config.featurize.stride_s, spec
    )
    dataset_path = os.path.join(out, ARTIFACTS["dataset"])
    st.write_dataset(dataset_path, dataset, dataset_fingerprint(config, library))
    _say(
        quiet,
        f"featurize: {dataset.n_windows} windows x {len(spec.features)} features "
        f"(window {config.featurize.window_s:g} s, stride {config.featurize.stride_s:g} s)",
    )


def stage_select_features(config: RunConfig, out: str, quiet: bool) -> None:
    library = load_library_for(config)
    spec = config.feature_spec()
    signatures = {}
    for class_name, count in config.scenario.populations():
        if count <= 0:
            continue
        signatures[class_name] = characterization_vectors(
            library[class_name],
            spec,
            config.featurize.window_s,
            config.scenario.sample_rate_hz,
            rng_seed=config.scenario.rng_seed,
            voltage_rms=config.scenario.voltage_rms,
        )
    if len(signatures) < 2:
        raise ConfigError("feature selection needs at least two device classes in the scenario")
    ranking = rank_features(signatures, spec.features)
    os.makedirs(out, exist_ok=True)
    ranking_path = os.path.join(out, ARTIFACTS["ranking"])
    st.write_ranking(ranking_path, ranking, dataset_fingerprint(config, library))
    top = ", ".join(fid for fid, _ in ranking[:3])
    _say(quiet, f"select-features: ranked {len(ranking)} features, top: {top}")


def _load_dataset_checked(config: RunConfig, library, out: str) -> FeatureDataset:
    dataset_path = os.path.join(out, ARTIFACTS["dataset"])
    dataset, fp = st.read_dataset(dataset_path)
    _check_fingerprint(dataset_path, fp, dataset_fingerprint(config, library))
    return dataset


def _split_rows(config: RunConfig, dataset: FeatureDataset):
    fractions = (
        config.split.train_fraction,
        config.split.val_fraction,
        config.split.test_fraction,
    )
    train_idx, val_idx, test_idx = chronological_split(dataset.n_windows, fractions)
    splits = [dataset.rows(idx) for idx in (train_idx, val_idx, test_idx)]
    splits = [part.rows(part.valid) for part in splits]  # train/evaluate on valid windows only
    if any(part.n_windows == 0 for part in splits):
        raise ConfigError("a split has no valid windows; lengthen the scenario or adjust fractions")
    return splits


def stage_train(config: RunConfig, out: str, quiet: bool) -> None:
    library = load_library_for(config)
    dataset = _load_dataset_checked(config, library, out)
    train_part, val_part, _ = _split_rows(config, dataset)

    stats = fit_normalization(train_part.X, dataset.feature_spec.features)
    X_train = apply_normalization(train_part.X, stats)
    X_val = apply_normalization(val_part.X, stats)

    layer_sizes = (len(stats.kept_indices), *config.model.hidden_layers, 1)
    params = init_params(layer_sizes, config.model.init_seed, norm_stats=stats)
    params, history = train(
        params, (X_train, train_part.y), (X_val, val_part.y), config.model.train
    )
    model_path = os.path.join(out, ARTIFACTS["model"])
    st.write_model(model_path, params, model_fingerprint(config, library))
    last_epoch, train_obj, _ = history[-1]
    _say(
        quiet,
        f"train: {last_epoch + 1} epochs on {train_part.n_windows} windows, "
        f"final train objective {train_obj:.4g}, best val loss {min(h[2] for h in history):.4g}",
    )


def stage_eval(config: RunConfig, out: str, quiet: bool) -> None:
    library = load_library_for(config)
    dataset = _load_dataset_checked(config, library, out)
    model_path = os.path.join(out, ARTIFACTS["model"])
    params, fp_model = st.read_model(model_path)
    expected_fp = model_fingerprint(config, library)
    _check_fingerprint(model_path, fp_model, expected_fp)
    if params.norm_stats is None or params.norm_stats.input_feature_ids != dataset.feature_spec.features:
        raise ContractError(f"{model_path} feature layout does not match {ARTIFACTS['dataset']}")

    train_part, _, test_part = _split_rows(config, dataset)
    report = evaluate(params, test_part, expected_fp)
    baseline = baseline_report(train_part.y, test_part.y)
    constant = median_count(train_part.y)

    entries: list[tuple[str, str]] = [
        ("format_version", "1"),
        ("n_test_windows", str(report.n_test_windows)),
        ("mae_continuous", format(report.mae_continuous, ".17g")),
        ("mae_rounded", format(report.mae_rounded, ".17g")),
        ("exact_count_accuracy", format(report.exact_count_accuracy, ".17g")),
        ("baseline_constant", str(constant)),
        ("baseline_mae_rounded", format(baseline.mae_rounded, ".17g")),
        ("baseline_exact_count_accuracy", format(baseline.exact_count_accuracy, ".17g")),
    ]
    for count, n, err in report.per_count:
        entries.append((f"count_{count}", f"{n} {format(err, '.17g')}"))
    st.write_report_lines(os.path.join(out, ARTIFACTS["report"]), entries, expected_fp)

    subset = test_part.rows(test_part.valid)
    continuous = forward_batch(params, apply_normalization(subset.X, params.norm_stats))
    rounded = np.array([count_from_output(v) for v in continuous])
    with open(os.path.join(out, ARTIFACTS["residuals"]), "w", encoding="utf-8", newline="\n") as fh:
        fh.write("window_index,t_start_s,y_true,y_continuous,y_rounded,abs_error_rounded\n")
        for k in range(subset.n_windows):
            fh.write(
                f"{k},{format(subset.t_start_s[k], '.17g')},{subset.y[k]},"
                f"{format(continuous[k], '.17g')},{rounded[k]},{abs(int(rounded[k]) - int(subset.y[k]))}\n"
            )
    _say(
        quiet,
        f"eval: rounded MAE {report.mae_rounded:.4g} (baseline {baseline.mae_rounded:.4g}), "
        f"exact-count accuracy {report.exact_count_accuracy:.1%} on {report.n_test_windows} test windows",
    )


_STAGES = (
    ("simulate", stage_simulate, ("voltage", "current", "schedule", "truth"), scenario_fingerprint),
    ("select-features", stage_select_features, ("ranking",), dataset_fingerprint),
    ("featurize", stage_featurize, ("dataset",), dataset_fingerprint),
    ("train", stage_train, ("model",), model_fingerprint),
    ("eval", stage_eval, ("report",), model_fingerprint),
)


_TEXT_TAGS = {
    "schedule": "schedule",
    "truth": "ground-truth",
    "dataset": "dataset",
    "ranking": "ranking",
    "model": "model",
    "report": "report",
}


def _artifact_current(out: str, name: str, expected_fp: str) -> bool:
    path = os.path.join(out, ARTIFACTS[name])
    if not os.path.exists(path):
        return False
    try:
        if name in ("voltage", "current"):
            _, _, fp = st.read_waveform(path)
        else:
            fp, _ = st._read_tagged_lines(path, _TEXT_TAGS[name])
    except (st.FileFormatError, OSError):
        return False
    width = min(len(fp), len(expected_fp)) if fp else 0
    return bool(fp) and fp[:width] == expected_fp[:width]


def stage_pipeline(config: RunConfig, out: str, quiet: bool) -> None:
    """Run all stages in order, skipping stages whose artifacts are current."""
    library = load_library_for(config)
    n_classes = sum(1 for _, count in config.scenario.populations() if count > 0)
    for name, runner, artifacts, fingerprint_fn in _STAGES:
        if name == "select-features" and n_classes < 2 and config.featurize.top_k == 0:
            _say(quiet, f"{name}: skipped (single device class, top_k unset)")
            continue
        expected = fingerprint_fn(config, library)
        if all(_artifact_current(out, a, expected) for a in artifacts):
            _say(quiet, f"{name}: up to date")
            continue
        runner(config, out, quiet)


# --------------------------------------------------------------------- main


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="feeder-nilm",
        description="Simulate feeder waveforms, extract window features, and train a device-count regressor.",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    commands = {
        "simulate": "synthesize waveforms, schedule, and ground truth",
        "featurize": "window the waveforms into a feature dataset",
        "select-features": "rank features by Fisher score over class signatures",
        "train": "fit the count regressor on the dataset",
        "eval": "evaluate the trained model and write the report",
        "pipeline": "run all stages in order",
    }
    for name, help_text in commands.items():
        cmd = sub.add_parser(name, help=help_text)
        cmd.add_argument("--config", required=True, help="run configuration file")
        cmd.add_argument("--out", default=None, help="output directory (default: $FEEDER_NILM_OUT or ./out)")
        cmd.add_argument("--seed", type=int, default=None, help="override the scenario rng_seed")
        cmd.add_argument("--quiet", action="store_true", help="suppress per-stage summaries")
    return parser


_DISPATCH = {
    "simulate": stage_simulate,
    "featurize": stage_featurize,
    "select-features": stage_select_features,
    "train": stage_train,
    "eval": stage_eval,
    "pipeline": stage_pipeline,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        config = load_run_config(args.config)
        if args.seed is not None:
            config = config.with_seed(args.seed)
        out = args.out or os.environ.get("FEEDER_NILM_OUT") or config.output_dir or "out"
        os.makedirs(out, exist_ok=True)
        _DISPATCH[args.command](config, out, args.quiet)
    except (ConfigError, LibraryFormatError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except st.FileFormatError as exc:
        print(f"file error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"io error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ContractError as exc:
        print(f"contract violation: {exc}", file=sys.stderr)
        return EXIT_CONTRACT
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
