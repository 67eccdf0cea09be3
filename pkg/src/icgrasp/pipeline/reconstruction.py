"""Scene reconstruction: ``icgrasp eval-recon`` and ``icgrasp reconstruct``."""

import json
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional

import numpy as np

from ..core.config import EvalReconRunConfig, ReconstructRunConfig, echo_config
from ..core.errors import GenerationError
from ..fields.meshing import TriangleMesh, export_field_grid, marching_cubes
from ..fields.metrics import chamfer_l1, volumetric_iou
from ..fields.primitives import Bounds, OccupancyField, SceneGT, constant_field, gt_field
from ..geometry.cloud import PointCloud
from ..geometry.ply import instance_colors, read_cloud, write_cloud
from ..sim.camera import render_depth, sample_camera
from ..sim.scenes import generate_scene
from .scene_model import NetworkSceneModel, cached_network_model, load_model
from .selection import preprocess
from .workers import derive_seed, map_jobs

logger = logging.getLogger(__name__)

REPORT_VERSION = 1
REPORT_NAME = "eval_recon.json"


@dataclass
class ReconSceneResult:
    """Reconstruction quality of one scene.

    ``chamfer`` is None when the predicted mesh is empty.
    """

    scene_index: int
    seed: int
    n_objects: int
    n_instances: int
    iou: float
    chamfer: Optional[float] = None

    @property
    def empty_mesh(self) -> bool:
        return self.chamfer is None

    def to_dict(self) -> dict:
        return {
            "scene_index": self.scene_index,
            "seed": self.seed,
            "n_objects": self.n_objects,
            "n_instances": self.n_instances,
            "iou": self.iou,
            "chamfer": self.chamfer,
            "empty_mesh": self.empty_mesh,
        }


def _mean_std(values: List[float]) -> Dict[str, Optional[float]]:
    if not values:
        return {"mean": None, "std": None}
    arr = np.asarray(values, dtype=float)
    return {"mean": float(arr.mean()), "std": float(arr.std())}


@dataclass
class ReconReport:
    """Per-scene and aggregate reconstruction metrics.

    Chamfer statistics cover scenes with a nonempty mesh only.
    """

    scenes: List[ReconSceneResult] = field(default_factory=list)

    @property
    def n_empty(self) -> int:
        return sum(s.empty_mesh for s in self.scenes)

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary."""
        return {
            "version": REPORT_VERSION,
            "iou": _mean_std([s.iou for s in self.scenes]),
            "chamfer": _mean_std([s.chamfer for s in self.scenes if s.chamfer is not None]),
            "empty_meshes": self.n_empty,
            "scenes": [s.to_dict() for s in self.scenes],
        }


def evaluate_reconstruction(
    field_: OccupancyField,
    scene: SceneGT,
    resolution: int,
    n_chamfer: int = 10_000,
    n_iou: int = 100_000,
    seed: int = 0,
    scene_index: int = 0,
) -> ReconSceneResult:
    """Compare the scene-level mesh of a predicted field with the ground truth.

    Args:
        field_: Predicted per-instance occupancy
        scene: Ground-truth scene
        resolution: Marching-cubes nodes per axis over the workspace
        n_chamfer: Surface samples per mesh for the Chamfer distance
        n_iou: Uniform samples for the volumetric IoU
        seed: Sampling seed
        scene_index: Index reported in the result

    Returns:
        IoU, and Chamfer-L1 unless the predicted mesh is empty
    """
    predicted = field_.scene()
    iou = volumetric_iou(predicted, gt_field(scene).scene(), scene.bounds, n_iou, seed)
    mesh = marching_cubes(predicted, scene.bounds, resolution)
    chamfer = None
    if mesh.is_empty:
        logger.warning("empty reconstruction", extra={"scene_index": scene_index})
    elif scene.k:
        gt_mesh = TriangleMesh.from_trimesh(scene.mesh())
        chamfer = chamfer_l1(mesh, gt_mesh, n_chamfer, seed)
    return ReconSceneResult(scene_index, seed, scene.k, field_.k, float(iou), chamfer)


def _network_field(checkpoint: Path, pc: PointCloud) -> OccupancyField:
    if len(pc) == 0:
        return constant_field(0.0, k=0)
    return cached_network_model(str(checkpoint)).predict(pc).field


@dataclass(frozen=True)
class _ReconJob:
    cfg: EvalReconRunConfig
    index: int


def _run_recon(job: _ReconJob) -> ReconSceneResult:
    cfg = job.cfg
    seed = derive_seed(cfg.seed, job.index)
    try:
        scene = generate_scene(cfg.kind, cfg.k, seed, cfg.scene)
    except GenerationError as e:
        raise GenerationError(str(e), scene_index=job.index) from e

    if cfg.model == "ground_truth":
        predicted = gt_field(scene)
    else:
        assert cfg.checkpoint is not None
        camera = sample_camera(seed, cfg.scene)
        cloud = render_depth(scene, camera)
        pc = preprocess(cloud, cfg.select, scene.table_height, camera.position)
        predicted = _network_field(cfg.checkpoint, pc)
    return evaluate_reconstruction(
        predicted, scene, cfg.resolution, cfg.n_chamfer, cfg.n_iou, seed, job.index
    )


def cmd_eval_recon(cfg: EvalReconRunConfig) -> ReconReport:
    """Reconstruct ``cfg.n_scenes`` generated scenes and report IoU and Chamfer-L1."""
    out = Path(cfg.out)
    echo_config(cfg, out)
    if cfg.model == "network":
        assert cfg.checkpoint is not None
        cached_network_model(str(cfg.checkpoint))

    results = map_jobs(_run_recon, [_ReconJob(cfg, i) for i in range(cfg.n_scenes)], cfg.workers)
    report = ReconReport(results)
    summary = report.to_dict()
    text = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    (out / REPORT_NAME).write_text(text, encoding="utf-8")
    logger.info(
        "reconstruction evaluation finished",
        extra={"iou": summary["iou"]["mean"], "chamfer": summary["chamfer"]["mean"]},
    )
    return report


def cmd_reconstruct(cfg: ReconstructRunConfig) -> List[Path]:
    """Segment an input cloud and export its reconstruction.

    Writes one mesh per detected instance that meshes to a nonempty surface, the combined
    scene mesh, the cloud colored by instance with its predicted ids, and the scene field
    grid.

    Returns:
        Paths of the written files, meshes first

    Raises:
        DataError: If the checkpoint or the input cloud cannot be read
    """
    out = Path(cfg.out)
    echo_config(cfg, out)
    net, _ = load_model(cfg.checkpoint)
    cloud = read_cloud(cfg.input)
    bounds = Bounds.cube(net.cfg.workspace_min, net.cfg.workspace_size)

    pc = preprocess(cloud, cfg.select, cfg.table_height, cfg.viewpoint)
    if len(pc) == 0:
        logger.warning("no points left after preprocessing", extra={"input": str(cfg.input)})
        return []
    prediction = NetworkSceneModel(net).predict(pc)

    written: List[Path] = []
    for i in range(prediction.k):
        mesh = marching_cubes(prediction.field.instance(i), bounds, cfg.resolution)
        if mesh.is_empty:
            logger.info("instance has an empty surface", extra={"instance": i})
            continue
        written.append(mesh.export(out / f"instance_{i:02d}.{cfg.mesh_format}", cfg.mesh_format))
    combined = marching_cubes(prediction.field.scene(), bounds, cfg.resolution)
    if not combined.is_empty:
        written.append(combined.export(out / f"scene.{cfg.mesh_format}", cfg.mesh_format))

    segmented = PointCloud(pc.points, pc.normals, prediction.instance_ids, prediction.semantic_ids)
    colors = instance_colors(prediction.instance_ids)
    written.append(write_cloud(segmented, out / "segmented.ply", colors=colors))
    grid = out / "scene_field.raw"
    written.append(export_field_grid(prediction.field.scene(), bounds, cfg.resolution, grid))
    logger.info("reconstruction exported", extra={"instances": prediction.k, "files": len(written)})
    return written
