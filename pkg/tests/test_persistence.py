"""Unit tests for the dataset and checkpoint formats."""

import json

import numpy as np
import pytest

from icgrasp.core.config import SceneConfig
from icgrasp.core.errors import DataError
from icgrasp.core.persistence import (
    CHECKPOINT_MAGIC,
    DatasetStore,
    load_checkpoint,
    read_sections,
    save_checkpoint,
    scene_file_name,
    write_sections,
)
from icgrasp.fields.primitives import Primitive, SceneGT
from icgrasp.geometry.cloud import PointCloud
from icgrasp.sim.labels import LabeledScene, label_scene


def _labeled(seed: int = 3) -> LabeledScene:
    sphere = Primitive("sphere", np.eye(3), np.array([0.15, 0.15, 0.02]), np.full(3, 0.02), 0)
    box = Primitive("box", np.eye(3), np.array([0.08, 0.2, 0.03]), [0.02, 0.02, 0.03], 1, 1)
    return label_scene(SceneGT([sphere, box]), seed, SceneConfig(n_contacts=8, n_occupancy=50))


class TestSections:
    """Test the length-prefixed section codec."""

    def test_round_trip(self, tmp_path):
        """Test writing and reading mixed dtypes."""
        path = tmp_path / "sections.bin"
        arrays = [
            ("f", np.arange(6, dtype=float).reshape(2, 3)),
            ("i", np.array([-1, 5], dtype=np.int64)),
            ("b", np.array([True, False, True])),
            ("empty", np.zeros((0, 3))),
        ]
        with open(path, "wb") as f:
            write_sections(f, arrays)
        with open(path, "rb") as f:
            sections = read_sections(f)

        assert list(sections) == ["f", "i", "b", "empty"]
        assert np.array_equal(sections["f"], arrays[0][1])
        assert np.array_equal(sections["i"], arrays[1][1])
        # booleans are stored as bytes
        assert sections["b"].tolist() == [1, 0, 1]
        assert sections["empty"].shape == (0, 3)

    def test_truncated(self, tmp_path):
        """Test that a truncated payload raises."""
        path = tmp_path / "sections.bin"
        with open(path, "wb") as f:
            write_sections(f, [("x", np.arange(10, dtype=float))])
        path.write_bytes(path.read_bytes()[:-4])
        with open(path, "rb") as f:
            with pytest.raises(DataError):
                read_sections(f)

    def test_trailing_bytes(self, tmp_path):
        """Test that data after the last section raises."""
        path = tmp_path / "sections.bin"
        with open(path, "wb") as f:
            write_sections(f, [("x", np.arange(3, dtype=float))])
            f.write(b"\x00")
        with open(path, "rb") as f:
            with pytest.raises(DataError):
                read_sections(f)


class TestDatasetStore:
    """Test scene records and the manifest."""

    def test_file_names(self):
        """Test the zero-padded record names."""
        assert scene_file_name(7) == "scene_00007.bin"

    def test_scene_round_trip(self, tmp_path):
        """Test that a labeled scene survives a write and read."""
        store = DatasetStore(tmp_path / "data")
        labeled = _labeled()
        path = store.write_scene(0, labeled, 12)
        assert path.exists()

        loaded = store.read_scene(0, seed=3)
        assert loaded.scene.to_dict() == labeled.scene.to_dict()
        assert loaded.camera.to_dict() == labeled.camera.to_dict()
        assert np.array_equal(loaded.cloud.points, labeled.cloud.points)
        assert np.array_equal(loaded.cloud.instance_ids, labeled.cloud.instance_ids)
        assert len(loaded.grasps) == len(labeled.grasps)
        for a, b in zip(loaded.grasps, labeled.grasps):
            assert np.array_equal(a.success, b.success)
            assert a.width == b.width
            assert a.object_id == b.object_id
        assert np.array_equal(loaded.occupancy.labels, labeled.occupancy.labels)
        assert loaded.occupancy.n_near == labeled.occupancy.n_near
        assert loaded.seed == 3

    def test_deterministic_bytes(self, tmp_path):
        """Test that writing the same scene twice gives identical files."""
        labeled = _labeled()
        a = DatasetStore(tmp_path / "a").write_scene(0, labeled, 12)
        b = DatasetStore(tmp_path / "b").write_scene(0, labeled, 12)
        assert a.read_bytes() == b.read_bytes()

    def test_scene_without_labels(self, tmp_path):
        """Test a record with no contacts, no occupancy and no camera."""
        scene = SceneGT([])
        labeled = LabeledScene(scene, PointCloud(np.zeros((0, 3))))
        store = DatasetStore(tmp_path)
        store.write_scene(1, labeled, 12)

        loaded = store.read_scene(1)
        assert len(loaded.cloud) == 0
        assert loaded.grasps == []
        assert loaded.camera is None
        assert loaded.occupancy.labels.shape == (0, 0)

    def test_corrupt_magic(self, tmp_path):
        """Test that a record with a wrong header raises."""
        store = DatasetStore(tmp_path)
        path = store.write_scene(0, _labeled(), 12)
        path.write_bytes(b"XXXX" + path.read_bytes()[4:])
        with pytest.raises(DataError):
            store.read_scene(0)

    def test_missing_record(self, tmp_path):
        """Test that a missing record raises."""
        with pytest.raises(DataError):
            DatasetStore(tmp_path).read_scene(4)

    def test_manifest(self, tmp_path):
        """Test writing, reading and loading through the manifest."""
        store = DatasetStore(tmp_path)
        labeled = _labeled()
        store.write_scene(0, labeled, 12)
        store.write_manifest({"n_scenes": 1}, 7, [{"index": 0, "seed": 3, "k": 2}])

        manifest = store.read_manifest()
        assert manifest["version"] == 1
        assert manifest["seed"] == 7
        assert manifest["config"] == {"n_scenes": 1}

        scenes = store.load_all()
        assert len(scenes) == 1
        assert scenes[0].seed == 3

    def test_manifest_only(self, tmp_path):
        """Test an empty dataset."""
        store = DatasetStore(tmp_path)
        store.write_manifest({}, 0, [])
        assert store.load_all() == []

    def test_manifest_count_mismatch(self, tmp_path):
        """Test that a manifest whose count disagrees with its entries raises."""
        store = DatasetStore(tmp_path)
        store.write_manifest({}, 0, [])
        manifest = json.loads(store.manifest_path.read_text())
        manifest["n_scenes"] = 3
        store.manifest_path.write_text(json.dumps(manifest))
        with pytest.raises(DataError):
            store.read_manifest()

    def test_manifest_version(self, tmp_path):
        """Test that another manifest version raises."""
        store = DatasetStore(tmp_path)
        store.manifest_path.write_text(json.dumps({"version": 99, "scenes": [], "n_scenes": 0}))
        with pytest.raises(DataError):
            store.read_manifest()


class TestCheckpoint:
    """Test checkpoint files."""

    def test_round_trip(self, tmp_path):
        """Test bit-exact reload of tensors and metadata."""
        rng = np.random.default_rng(0)
        tensors = {
            "encoder.weight": rng.normal(size=(4, 3)),
            "head.bias": rng.normal(size=4).astype(np.float32),
            "steps": np.array([12], dtype=np.int64),
        }
        metadata = {"epoch": 3, "config": {"n_queries": 4}, "history": [{"f1": 0.5}]}
        path = save_checkpoint(tmp_path / "ckpt" / "best.ckpt", tensors, metadata)

        loaded, meta = load_checkpoint(path)
        assert meta == metadata
        assert sorted(loaded) == sorted(tensors)
        for name, value in tensors.items():
            assert loaded[name].dtype == value.dtype
            assert loaded[name].tobytes() == value.tobytes()

    def test_header(self, tmp_path):
        """Test the file starts with the checkpoint magic."""
        path = save_checkpoint(tmp_path / "a.ckpt", {"w": np.zeros(2)}, {})
        assert path.read_bytes().startswith(CHECKPOINT_MAGIC)

    def test_corrupt_magic(self, tmp_path):
        """Test that a file with the wrong magic raises."""
        path = save_checkpoint(tmp_path / "a.ckpt", {"w": np.zeros(2)}, {})
        path.write_bytes(b"NOTACKPT" + path.read_bytes()[8:])
        with pytest.raises(DataError):
            load_checkpoint(path)

    def test_wrong_version(self, tmp_path):
        """Test that an unknown format version raises."""
        path = save_checkpoint(tmp_path / "a.ckpt", {"w": np.zeros(2)}, {})
        data = bytearray(path.read_bytes())
        data[8] = 42
        path.write_bytes(bytes(data))
        with pytest.raises(DataError):
            load_checkpoint(path)

    def test_missing(self, tmp_path):
        """Test that a missing checkpoint raises."""
        with pytest.raises(DataError):
            load_checkpoint(tmp_path / "none.ckpt")


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
