"""Unit tests for metric and trial histories."""

import json

import pytest

from icgrasp.core.errors import DataError
from icgrasp.core.history import MetricHistory, TrialEntry, TrialLog


class TestMetricHistory:
    """Test MetricHistory class."""

    def test_in_memory(self):
        """Test a history without a file."""
        history = MetricHistory()
        history.add_entry("train_step", 1, {"loss": 1.5})
        history.add_entry("validation", 1, {"f1": 0.25}, epoch=0)

        assert len(history.entries) == 2
        assert [e.step for e in history.of_kind("train_step")] == [1]
        assert history.to_list()[1] == {
            "kind": "validation",
            "step": 1,
            "values": {"f1": 0.25},
            "epoch": 0,
        }

    def test_write_through(self, tmp_path):
        """Test that every entry lands in the file as it is added."""
        log_file = tmp_path / "logs" / "metrics.jsonl"
        history = MetricHistory(log_file)
        assert log_file.read_text() == ""

        history.add_entry("train_step", 1, {"loss": 2.0, "dice": 0.5})
        history.add_entry("train_step", 2, {"loss": 1.0, "dice": 0.25})

        lines = log_file.read_text().splitlines()
        assert len(lines) == 2
        assert json.loads(lines[1])["values"] == {"dice": 0.25, "loss": 1.0}

    def test_truncates(self, tmp_path):
        """Test that a new history starts an empty file."""
        log_file = tmp_path / "metrics.jsonl"
        MetricHistory(log_file).add_entry("train_step", 1, {"loss": 1.0})
        MetricHistory(log_file)
        assert log_file.read_text() == ""

    def test_load(self, tmp_path):
        """Test reloading a written log."""
        log_file = tmp_path / "metrics.jsonl"
        history = MetricHistory(log_file)
        history.add_entry("validation", 4, {"f1": 0.75}, epoch=1)

        loaded = MetricHistory.load(log_file)
        assert loaded.to_list() == history.to_list()
        # loading never truncates
        assert log_file.read_text() != ""

    def test_identical_reruns(self, tmp_path):
        """Test that equal entries give byte-identical logs."""
        for name in ("a.jsonl", "b.jsonl"):
            history = MetricHistory(tmp_path / name)
            history.add_entry("train_step", 1, {"loss": 0.125, "bce": 0.5})
        assert (tmp_path / "a.jsonl").read_bytes() == (tmp_path / "b.jsonl").read_bytes()

    def test_load_corrupt(self, tmp_path):
        """Test that a malformed line raises."""
        log_file = tmp_path / "metrics.jsonl"
        log_file.write_text('{"kind": "train_step", "step": 1, "values": {}}\nnot json\n')
        with pytest.raises(DataError):
            MetricHistory.load(log_file)

    def test_load_missing(self, tmp_path):
        """Test that a missing log raises."""
        with pytest.raises(DataError):
            MetricHistory.load(tmp_path / "none.jsonl")

    def test_export_json(self, tmp_path):
        """Test exporting as JSON."""
        history = MetricHistory()
        history.add_entry("validation", 3, {"f1": 0.5}, epoch=0)
        export = tmp_path / "export.json"

        assert history.export_to_file(export, "json") is True
        assert json.loads(export.read_text())[0]["values"] == {"f1": 0.5}

    def test_export_txt(self, tmp_path):
        """Test exporting as text."""
        history = MetricHistory()
        history.add_entry("validation", 3, {"f1": 0.5, "iou": 0.25}, epoch=0)
        export = tmp_path / "export.txt"

        assert history.export_to_file(export, "txt") is True
        assert export.read_text() == "[validation] step=3 epoch=0 f1=0.5 iou=0.25\n"

    def test_export_unknown_format(self, tmp_path):
        """Test that an unknown export format fails."""
        assert MetricHistory().export_to_file(tmp_path / "x.csv", "csv") is False


class TestTrialLog:
    """Test TrialLog class."""

    def _entries(self):
        return [
            TrialEntry(0, 0, "success", score=0.95, instance=1, object_id=1, width=0.03),
            TrialEntry(0, 1, "failure", score=0.91, instance=0, object_id=0, width=0.05),
            TrialEntry(1, 0, "empty_observation"),
        ]

    def test_extend_and_filter(self, tmp_path):
        """Test appending trials and selecting one scene."""
        log = TrialLog(tmp_path / "trials.jsonl")
        log.extend(self._entries())

        assert [e.outcome for e in log.of_scene(0)] == ["success", "failure"]
        assert log.of_scene(1)[0].score is None
        assert len((tmp_path / "trials.jsonl").read_text().splitlines()) == 3

    def test_round_trip(self, tmp_path):
        """Test reloading the written trials."""
        log = TrialLog(tmp_path / "trials.jsonl")
        log.extend(self._entries())
        loaded = TrialLog.load(tmp_path / "trials.jsonl")
        assert loaded.entries == log.entries

    def test_load_corrupt(self, tmp_path):
        """Test that a line with unknown fields raises."""
        path = tmp_path / "trials.jsonl"
        path.write_text('{"scene_index": 0, "interaction": 0, "outcome": "x", "bogus": 1}\n')
        with pytest.raises(DataError):
            TrialLog.load(path)


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
