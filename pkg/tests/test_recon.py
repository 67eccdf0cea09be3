"""Tests for reconstruction evaluation and export."""

import json

import numpy as np
import pytest
import torch

from icgrasp.core.config import EvalReconRunConfig, NetConfig, ReconstructRunConfig
from icgrasp.fields.primitives import Primitive, SceneGT, constant_field, gt_field
from icgrasp.geometry.ply import read_cloud, write_cloud
from icgrasp.net.model import InstanceNet
from icgrasp.pipeline.reconstruction import (
    REPORT_NAME,
    ReconReport,
    ReconSceneResult,
    cmd_eval_recon,
    cmd_reconstruct,
    evaluate_reconstruction,
)
from icgrasp.pipeline.scene_model import save_model
from icgrasp.sim.camera import render_depth, spherical_camera


def _scene():
    sphere = Primitive("sphere", np.eye(3), np.array([0.1, 0.15, 0.03]), np.full(3, 0.03), 0)
    box = Primitive("box", np.eye(3), np.array([0.2, 0.15, 0.02]), np.full(3, 0.02), 1, 1)
    return SceneGT([sphere, box])


class TestEvaluateReconstruction:
    """Test evaluate_reconstruction function."""

    def test_ground_truth_field(self):
        """Test that the ground-truth field reconstructs itself."""
        scene = _scene()
        result = evaluate_reconstruction(gt_field(scene), scene, 48, n_chamfer=2000, n_iou=20000)

        assert result.iou == 1.0
        assert result.chamfer is not None
        assert result.chamfer < 0.003
        assert result.n_objects == 2
        assert result.n_instances == 2

    def test_empty_prediction(self):
        """Test that an all-empty field is flagged instead of measured."""
        scene = _scene()
        result = evaluate_reconstruction(constant_field(0.0), scene, 16, n_iou=5000)

        assert result.empty_mesh
        assert result.chamfer is None
        assert result.iou == 0.0
        assert result.to_dict()["empty_mesh"] is True

    def test_deterministic(self):
        """Test that equal seeds give equal metrics."""
        scene = _scene()
        a = evaluate_reconstruction(gt_field(scene), scene, 16, n_chamfer=500, n_iou=500, seed=4)
        b = evaluate_reconstruction(gt_field(scene), scene, 16, n_chamfer=500, n_iou=500, seed=4)
        assert a == b


class TestReconReport:
    """Test ReconReport class."""

    def test_aggregates(self):
        """Test that Chamfer statistics skip empty meshes."""
        report = ReconReport(
            [
                ReconSceneResult(0, 1, 2, 2, iou=0.5, chamfer=0.002),
                ReconSceneResult(1, 2, 3, 0, iou=0.0),
                ReconSceneResult(2, 3, 1, 1, iou=1.0, chamfer=0.004),
            ]
        )
        data = report.to_dict()
        assert report.n_empty == 1
        assert data["empty_meshes"] == 1
        assert data["iou"]["mean"] == pytest.approx(0.5)
        assert data["chamfer"]["mean"] == pytest.approx(0.003)
        assert data["chamfer"]["std"] == pytest.approx(0.001)

    def test_empty_report(self):
        """Test a report without scenes."""
        data = ReconReport().to_dict()
        assert data["iou"] == {"mean": None, "std": None}
        assert data["scenes"] == []


class TestCommands:
    """Test the reconstruction subcommands."""

    def test_eval_recon_ground_truth(self, tmp_path):
        """Test the report of a ground-truth evaluation."""
        cfg = EvalReconRunConfig(
            model="ground_truth",
            n_scenes=1,
            k=2,
            resolution=24,
            n_chamfer=500,
            n_iou=5000,
            out=tmp_path / "recon",
        )
        report = cmd_eval_recon(cfg)

        data = json.loads((tmp_path / "recon" / REPORT_NAME).read_text())
        assert data["version"] == 1
        assert len(data["scenes"]) == 1
        assert data["iou"]["mean"] == 1.0
        assert report.scenes[0].n_objects == 2

    def test_reconstruct_exports(self, tmp_path):
        """Test the files written for an input cloud."""
        torch.manual_seed(0)
        cfg = NetConfig(n_queries=4, d_q=16, n_heads=2, dense_dims=8)
        checkpoint = save_model(InstanceNet(cfg).double(), tmp_path / "model.ckpt")
        camera = spherical_camera(0.6, 0.3, 0.0)
        cloud_path = write_cloud(render_depth(_scene(), camera), tmp_path / "cloud.ply")

        run_cfg = ReconstructRunConfig(
            checkpoint=checkpoint,
            input=cloud_path,
            resolution=8,
            mesh_format="ply",
            viewpoint=tuple(camera.position),
            out=tmp_path / "export",
        )
        written = cmd_reconstruct(run_cfg)

        names = [p.name for p in written]
        assert "segmented.ply" in names
        assert names[-1] == "scene_field.raw"
        segmented = read_cloud(tmp_path / "export" / "segmented.ply")
        assert segmented.instance_ids is not None
        assert len(segmented) > 0

    def test_reconstruct_empty_cloud(self, tmp_path):
        """Test that a cloud with only table points exports nothing."""
        torch.manual_seed(0)
        cfg = NetConfig(n_queries=4, d_q=16, n_heads=2, dense_dims=8)
        checkpoint = save_model(InstanceNet(cfg), tmp_path / "model.ckpt")
        camera = spherical_camera(0.6, 0.0, 0.0)
        cloud_path = write_cloud(render_depth(SceneGT([]), camera), tmp_path / "table.ply")

        run_cfg = ReconstructRunConfig(
            checkpoint=checkpoint, input=cloud_path, out=tmp_path / "export"
        )
        assert cmd_reconstruct(run_cfg) == []


if __name__ == "__main__":
    pytest.main([__file__, "-v"])
