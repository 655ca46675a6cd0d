"""Replay files and frame serialization."""

import json

import pytest

from ctmsim.bench import cmd_record
from ctmsim.replay import (ReplayFormatError, frame_message, parse,
                           read_replay, serialize, validate_frame)


@pytest.fixture()
def recorded(tmp_path):
    path = tmp_path / "run.jsonl"
    cmd_record("single-intersection-v0", "fixed", 10, path)
    return path


class TestRoundTrip:
    def test_header_plus_frames(self, recorded):
        header, frames = read_replay(recorded)
        assert header["kind"] == "geometry"
        assert header["n_cells"] == 24
        assert len(frames) == 10

    def test_frames_monotone_in_time(self, recorded):
        _, frames = read_replay(recorded)
        ts = [f["t"] for f in frames]
        assert ts == sorted(ts)
        assert len(set(ts)) == len(ts)

    def test_serialization_bit_exact(self, recorded):
        _, frames = read_replay(recorded)
        for f in frames:
            assert parse(serialize(f)) == f

    def test_densities_normalized(self, recorded):
        _, frames = read_replay(recorded)
        for f in frames:
            assert all(0.0 <= d <= 1.0 for d in f["densities"])

    def test_metrics_fields(self, recorded):
        _, frames = read_replay(recorded)
        for f in frames:
            assert set(f["metrics"]) == {"queue", "throughput_cum",
                                         "mean_speed", "delay_cum"}

    def test_record_deterministic(self, tmp_path):
        """Identical (scenario, controller, seed) -> byte-identical files."""
        a, b = tmp_path / "a.jsonl", tmp_path / "b.jsonl"
        cmd_record("grid-2x2-v0", "maxpressure", 50, a, seed=3,
                   mesoscopic=True)
        cmd_record("grid-2x2-v0", "maxpressure", 50, b, seed=3,
                   mesoscopic=True)
        assert a.read_bytes() == b.read_bytes()


class TestErrors:
    def test_truncated_frame_named_by_index(self, recorded):
        lines = recorded.read_text().splitlines()
        lines[4] = lines[4][: len(lines[4]) // 2]
        recorded.write_text("\n".join(lines))
        with pytest.raises(ReplayFormatError, match="frame 3"):
            read_replay(recorded)

    def test_wrong_density_count(self, recorded):
        lines = recorded.read_text().splitlines()
        frame = json.loads(lines[2])
        frame["densities"] = frame["densities"][:-1]
        lines[2] = json.dumps(frame)
        recorded.write_text("\n".join(lines))
        with pytest.raises(ReplayFormatError, match="frame 1"):
            read_replay(recorded)

    def test_missing_header(self, tmp_path):
        p = tmp_path / "bad.jsonl"
        p.write_text('{"v":1,"kind":"frame"}\n')
        with pytest.raises(ReplayFormatError, match="geometry"):
            read_replay(p)

    def test_validate_frame_requires_fields(self):
        with pytest.raises(ReplayFormatError, match="missing"):
            validate_frame({"kind": "frame", "t": 0})
