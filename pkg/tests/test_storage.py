import numpy as np
import pytest

from feeder_nilm.devices import default_library
from feeder_nilm.featurize import FeatureDataset, FeatureSpec, NormStats
from feeder_nilm.model import init_params
from feeder_nilm.signals import Waveform
from feeder_nilm.simulate import DeviceSchedule, GroundTruthSeries, Schedule
from feeder_nilm.storage import (
    FileFormatError,
    read_dataset,
    read_ground_truth,
    read_model,
    read_ranking,
    read_report_lines,
    read_schedule,
    read_waveform,
    write_dataset,
    write_ground_truth,
    write_model,
    write_ranking,
    write_report_lines,
    write_schedule,
    write_waveform,
)

FP = "ab" * 32  # 64 hex chars, arbitrary


def random_waveform(seed=0, n=5000):
    rng = np.random.default_rng(seed)
    samples = rng.normal(0, 3, n)
    samples[0] = 0.0
    samples[1] = -0.0
    samples[2] = 1e-300  # subnormal territory must survive the trip
    return Waveform(samples, 12_345.5, 2.25)


class TestWaveformFile:
    def test_round_trip_bit_exact(self, tmp_path):
        path = tmp_path / "w.fnwv"
        original = random_waveform()
        write_waveform(path, original, "CURR", FP)
        loaded, channel, fingerprint = read_waveform(path)
        assert channel == "CURR"
        assert fingerprint == FP[:32]
        assert loaded.sample_rate_hz == original.sample_rate_hz
        assert loaded.start_time_s == original.start_time_s
        assert np.array_equal(loaded.samples, original.samples)

    def test_write_read_write_byte_identical(self, tmp_path):
        first = tmp_path / "a.fnwv"
        second = tmp_path / "b.fnwv"
        write_waveform(first, random_waveform(), "VOLT", FP)
        loaded, channel, fingerprint = read_waveform(first)
        write_waveform(second, loaded, channel, fingerprint)
        assert first.read_bytes() == second.read_bytes()

    def test_header_is_64_bytes(self, tmp_path):
        path = tmp_path / "w.fnwv"
        w = Waveform(np.zeros(10), 100.0)
        write_waveform(path, w, "VOLT")
        raw = path.read_bytes()
        assert len(raw) == 64 + 10 * 8
        assert raw[:4] == b"FNWV"

    def test_corrupt_magic_names_file(self, tmp_path):
        path = tmp_path / "bad.fnwv"
        write_waveform(path, Waveform(np.zeros(10), 100.0), "VOLT")
        raw = bytearray(path.read_bytes())
        raw[:4] = b"XXXX"
        path.write_bytes(bytes(raw))
        with pytest.raises(FileFormatError, match="bad.fnwv"):
            read_waveform(path)

    def test_truncated_payload_rejected(self, tmp_path):
        path = tmp_path / "short.fnwv"
        write_waveform(path, Waveform(np.zeros(10), 100.0), "VOLT")
        path.write_bytes(path.read_bytes()[:-8])
        with pytest.raises(FileFormatError):
            read_waveform(path)


class TestScheduleFile:
    def test_round_trip(self, tmp_path):
        library = default_library()
        schedule = Schedule(
            (
                DeviceSchedule(
                    "ventilator#0", "ventilator", True, ((0.5, 20.25, "run"), (30.0, 45.0, "standby"))
                ),
                DeviceSchedule("resistive_heater#0", "resistive_heater", False, ((1.0, 9.0, "on"),)),
                DeviceSchedule("lighting#0", "lighting", False, ()),
            )
        )
        path = tmp_path / "schedule.txt"
        write_schedule(path, schedule, FP)
        loaded, fingerprint = read_schedule(path, library)
        assert fingerprint == FP
        assert loaded == schedule

    def test_unknown_class_rejected(self, tmp_path):
        path = tmp_path / "schedule.txt"
        write_schedule(
            path, Schedule((DeviceSchedule("toaster#0", "toaster", False, ((0.0, 1.0, "on"),)),)), FP
        )
        with pytest.raises(FileFormatError):
            read_schedule(path, default_library())


class TestGroundTruthFile:
    def test_round_trip(self, tmp_path):
        truth = GroundTruthSeries(np.arange(20, dtype=float), np.tile([0, 1, 2, 1], 5))
        path = tmp_path / "truth.txt"
        write_ground_truth(path, truth, FP)
        loaded, fingerprint = read_ground_truth(path)
        assert fingerprint == FP
        assert np.array_equal(loaded.timestamps_s, truth.timestamps_s)
        assert np.array_equal(loaded.counts, truth.counts)

    def test_wrong_header_rejected(self, tmp_path):
        path = tmp_path / "truth.txt"
        path.write_text("# feeder-nilm dataset v1\n0 1\n")
        with pytest.raises(FileFormatError):
            read_ground_truth(path)


class TestDatasetFile:
    def make_dataset(self, seed=0):
        rng = np.random.default_rng(seed)
        spec = FeatureSpec(("i_rms", "thd", "h3"))
        n = 17
        return FeatureDataset(
            rng.normal(0, 100, (n, 3)),
            rng.integers(0, 5, n),
            np.arange(n) * 2.5,
            rng.random(n) > 0.2,
            5.0,
            2.5,
            spec,
        )

    def test_round_trip_exact(self, tmp_path):
        dataset = self.make_dataset()
        path = tmp_path / "dataset.csv"
        write_dataset(path, dataset, FP)
        loaded, fingerprint = read_dataset(path)
        assert fingerprint == FP
        assert np.array_equal(loaded.X, dataset.X)  # 17 significant digits round-trips float64
        assert np.array_equal(loaded.y, dataset.y)
        assert np.array_equal(loaded.valid, dataset.valid)
        assert loaded.feature_spec == dataset.feature_spec
        assert loaded.window_s == dataset.window_s
        assert loaded.stride_s == dataset.stride_s

    def test_write_read_write_byte_identical(self, tmp_path):
        first = tmp_path / "a.csv"
        second = tmp_path / "b.csv"
        write_dataset(first, self.make_dataset(), FP)
        loaded, fingerprint = read_dataset(first)
        write_dataset(second, loaded, fingerprint)
        assert first.read_bytes() == second.read_bytes()

    def test_header_row_shape(self, tmp_path):
        path = tmp_path / "dataset.csv"
        write_dataset(path, self.make_dataset(), FP)
        header = [l for l in path.read_text().splitlines() if not l.startswith("#")][0]
        assert header == "t_start_s,i_rms,thd,h3,y,valid"

    def test_corrupt_row_rejected(self, tmp_path):
        path = tmp_path / "dataset.csv"
        write_dataset(path, self.make_dataset(), FP)
        lines = path.read_text().splitlines()
        lines[5] = "garbage,row"
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(FileFormatError, match="dataset.csv"):
            read_dataset(path)


class TestModelFile:
    def make_params(self):
        features = ("i_rms", "thd", "h3")
        stats = NormStats(features, (0, 2), np.array([1.5, -2.25]), np.array([0.5, 3.0]))
        return init_params((2, 4, 1), seed=11, norm_stats=stats)

    def test_round_trip_exact(self, tmp_path):
        params = self.make_params()
        path = tmp_path / "model.txt"
        write_model(path, params, FP)
        loaded, fingerprint = read_model(path)
        assert fingerprint == FP
        assert loaded.layer_sizes == params.layer_sizes
        assert loaded.init_seed == params.init_seed
        for wa, wb in zip(loaded.weights, params.weights):
            assert np.array_equal(wa, wb)
        for ba, bb in zip(loaded.biases, params.biases):
            assert np.array_equal(ba, bb)
        assert loaded.norm_stats.input_feature_ids == params.norm_stats.input_feature_ids
        assert loaded.norm_stats.kept_indices == params.norm_stats.kept_indices
        assert np.array_equal(loaded.norm_stats.mean, params.norm_stats.mean)

    def test_write_read_write_byte_identical(self, tmp_path):
        first = tmp_path / "a.txt"
        second = tmp_path / "b.txt"
        write_model(first, self.make_params(), FP)
        loaded, fingerprint = read_model(first)
        write_model(second, loaded, fingerprint)
        assert first.read_bytes() == second.read_bytes()

    def test_missing_layer_rejected(self, tmp_path):
        path = tmp_path / "model.txt"
        write_model(path, self.make_params(), FP)
        lines = [l for l in path.read_text().splitlines() if not l.startswith("W1")]
        path.write_text("\n".join(lines) + "\n")
        with pytest.raises(FileFormatError):
            read_model(path)


class TestReportFile:
    def test_round_trip_byte_identical(self, tmp_path):
        entries = [("format_version", "1"), ("mae_rounded", "0.25"), ("count_0", "4 0")]
        first = tmp_path / "a.txt"
        second = tmp_path / "b.txt"
        write_report_lines(first, entries, FP)
        loaded, fingerprint = read_report_lines(first)
        assert loaded == entries
        write_report_lines(second, loaded, fingerprint)
        assert first.read_bytes() == second.read_bytes()


class TestRankingFile:
    def test_round_trip(self, tmp_path):
        ranking = [("h3", 1234.5), ("i_rms", 0.75), ("thd", 0.0)]
        path = tmp_path / "ranking.txt"
        write_ranking(path, ranking, FP)
        loaded, fingerprint = read_ranking(path)
        assert fingerprint == FP
        assert loaded == ranking

    def test_infinite_scores_survive(self, tmp_path):
        path = tmp_path / "ranking.txt"
        write_ranking(path, [("h3", float("inf"))], FP)
        loaded, _ = read_ranking(path)
        assert loaded[0][1] == float("inf")
