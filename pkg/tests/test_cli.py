"""Tests for the command line."""

import json

import pytest

from icgrasp.cli.commands import build_parser, run
from icgrasp.core.errors import EXIT_CONFIG, EXIT_DATA, EXIT_OK
from icgrasp.core.persistence import MANIFEST_NAME, scene_file_name
from icgrasp.core.settings import settings


@pytest.fixture(autouse=True)
def isolated_dirs(tmp_path, monkeypatch):
    """Keep default output directories inside the test's tmp_path."""
    monkeypatch.setattr(settings, "DATA_DIR", tmp_path / "data")
    monkeypatch.setattr(settings, "RUNS_DIR", tmp_path / "runs")


def _config(tmp_path, data, name="config.json"):
    path = tmp_path / name
    path.write_text(json.dumps(data))
    return str(path)


class TestParser:
    """Test argument parsing."""

    def test_subcommands(self):
        """Test that every subcommand accepts the shared overrides."""
        parser = build_parser()
        for command in ("gen", "train", "eval-grasp", "eval-recon", "reconstruct"):
            args = parser.parse_args([command, "--seed", "3", "--workers", "2"])
            assert args.command == command
            assert args.seed == 3
            assert args.workers == 2

    def test_requires_command(self):
        """Test that a subcommand is required."""
        with pytest.raises(SystemExit):
            build_parser().parse_args([])


class TestRun:
    """Test exit codes of whole runs."""

    def test_bad_config(self, tmp_path):
        """Test that an invalid config exits with the config code."""
        code = run(["gen", "--config", _config(tmp_path, {"n_scenes": -1})])
        assert code == EXIT_CONFIG

    def test_unknown_key(self, tmp_path):
        """Test that an unknown key exits with the config code."""
        code = run(["gen", "--config", _config(tmp_path, {"n_scene": 1})])
        assert code == EXIT_CONFIG

    def test_network_without_checkpoint(self, tmp_path):
        """Test that a network evaluation without a checkpoint is a config error."""
        assert run(["eval-grasp", "--out", str(tmp_path / "eval")]) == EXIT_CONFIG

    def test_empty_dataset(self, tmp_path):
        """Test that zero scenes write only the manifest and the config echo."""
        out = tmp_path / "dataset"
        code = run(["gen", "--config", _config(tmp_path, {"n_scenes": 0}), "--out", str(out)])

        assert code == EXIT_OK
        assert sorted(p.name for p in out.iterdir()) == ["config_echo.json", MANIFEST_NAME]
        manifest = json.loads((out / MANIFEST_NAME).read_text())
        assert manifest["n_scenes"] == 0
        assert manifest["scenes"] == []

    def test_default_output_dir(self, tmp_path):
        """Test that gen writes under the data directory by default."""
        assert run(["gen", "--config", _config(tmp_path, {"n_scenes": 0})]) == EXIT_OK
        assert (tmp_path / "data" / "gen" / MANIFEST_NAME).exists()

    def test_byte_identical_reruns(self, tmp_path):
        """Test that equal seeds give byte-identical scene records."""
        data = {"n_scenes": 1, "k_max": 2, "scene": {"n_contacts": 4, "n_occupancy": 50}}
        config = _config(tmp_path, data)
        for name in ("a", "b"):
            argv = ["gen", "--config", config, "--seed", "7", "--out", str(tmp_path / name)]
            assert run(argv) == EXIT_OK

        record = scene_file_name(0)
        assert (tmp_path / "a" / record).read_bytes() == (tmp_path / "b" / record).read_bytes()

    def test_missing_dataset(self, tmp_path):
        """Test that training on a missing dataset exits with the data code."""
        config = _config(tmp_path, {"dataset": str(tmp_path / "none")})
        assert run(["train", "--config", config, "--out", str(tmp_path / "run")]) == EXIT_DATA

    def test_missing_checkpoint(self, tmp_path):
        """Test that reconstruction with a missing checkpoint exits with the data code."""
        config = _config(tmp_path, {"checkpoint": str(tmp_path / "none.icg")})
        assert run(["reconstruct", "--config", config]) == EXIT_DATA


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
