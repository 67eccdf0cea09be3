"""Training labels of a scene: grasp outcomes at observed contacts and occupancy samples."""

import logging
from dataclasses import dataclass, field
from typing import List, Optional

import numpy as np
import trimesh

from ..core.config import GraspConfig, SceneConfig
from ..core.errors import InvalidArgumentError
from ..fields.collision import GripperModel
from ..fields.primitives import SceneGT
from ..geometry.cloud import PointCloud
from .camera import CameraPose, render_depth, sample_camera
from .oracle import oracle_sweep

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GraspLabel:
    """Oracle outcome at one observed contact for every approach angle."""

    contact: np.ndarray
    normal: np.ndarray
    success: np.ndarray
    width: float
    object_id: int


@dataclass(frozen=True)
class OccupancySamples:
    """Query points with per-instance hard occupancy.

    Attributes:
        points: (M, 3)
        labels: (M, K) boolean occupancy per instance
        near: (M,) True for samples drawn close to a surface
    """

    points: np.ndarray
    labels: np.ndarray
    near: np.ndarray

    def __len__(self) -> int:
        return len(self.points)

    @property
    def n_near(self) -> int:
        return int(np.count_nonzero(self.near))


@dataclass
class LabeledScene:
    """A scene with its observation and all labels."""

    scene: SceneGT
    cloud: PointCloud
    grasps: List[GraspLabel] = field(default_factory=list)
    occupancy: Optional[OccupancySamples] = None
    camera: Optional[CameraPose] = None
    seed: int = 0

    def grasp_arrays(self, n_alpha: int) -> dict:
        """Grasp labels stacked into arrays."""
        n = len(self.grasps)
        return {
            "contacts": np.array([g.contact for g in self.grasps]).reshape(n, 3),
            "normals": np.array([g.normal for g in self.grasps]).reshape(n, 3),
            "success": np.array([g.success for g in self.grasps], dtype=bool).reshape(n, n_alpha),
            "widths": np.array([g.width for g in self.grasps], dtype=float).reshape(n),
            "object_ids": np.array([g.object_id for g in self.grasps], dtype=np.int64).reshape(n),
        }


def sample_grasp_labels(
    scene: SceneGT,
    cloud: PointCloud,
    n_contacts: int,
    cfg: GraspConfig = GraspConfig(),
    seed: int = 0,
    friction: float = 0.5,
    clearance: float = 0.005,
    gripper: Optional[GripperModel] = None,
) -> List[GraspLabel]:
    """Oracle labels at contacts drawn uniformly from the object points of a view cloud.

    Raises:
        InvalidArgumentError: If the cloud has no normals
    """
    if cloud.normals is None:
        raise InvalidArgumentError("grasp labels need a cloud with normals")
    if n_contacts <= 0:
        return []
    if cloud.instance_ids is None:
        objects = np.arange(len(cloud))
    else:
        objects = np.flatnonzero(cloud.instance_ids >= 0)
    if len(objects) == 0:
        return []

    rng = np.random.default_rng(seed)
    chosen = rng.choice(objects, size=n_contacts, replace=len(objects) < n_contacts)
    gripper = gripper or GripperModel(w_max=cfg.w_max)
    labels = []
    for i in chosen:
        result = oracle_sweep(
            scene,
            cloud.points[i],
            cloud.normals[i],
            cfg,
            gripper,
            friction=friction,
            clearance=clearance,
        )
        labels.append(
            GraspLabel(
                cloud.points[i].copy(),
                cloud.normals[i].copy(),
                result.success,
                result.width,
                result.object_id,
            )
        )
    return labels


def sample_occupancy(
    scene: SceneGT, n: int, near_frac: float = 0.3, band: float = 0.01, seed: int = 0
) -> OccupancySamples:
    """Occupancy samples, uniform in the workspace and near the surfaces.

    ``round(near_frac * n)`` samples are surface points offset by Gaussian noise of standard
    deviation ``band``; the rest are uniform. Near samples fall back to uniform when the scene
    is empty.

    Raises:
        InvalidArgumentError: If ``near_frac`` is outside ``[0, 1]`` or ``n`` is negative
    """
    if not 0.0 <= near_frac <= 1.0:
        raise InvalidArgumentError(f"near_frac must be in [0, 1], got {near_frac}")
    if n < 0:
        raise InvalidArgumentError(f"n must be non-negative, got {n}")

    rng = np.random.default_rng(seed)
    n_near = int(round(near_frac * n)) if scene.k else 0
    uniform = scene.bounds.sample(n - n_near, rng)

    near = np.zeros((0, 3))
    if n_near:
        owners = rng.integers(scene.k, size=n_near)
        chunks = []
        for i in range(scene.k):
            count = int(np.count_nonzero(owners == i))
            if count:
                surface_seed = int(rng.integers(2**31))
                pts, _ = trimesh.sample.sample_surface(scene.mesh(i), count, seed=surface_seed)
                chunks.append(np.asarray(pts))
        near = np.concatenate(chunks) + rng.normal(0.0, band, (n_near, 3))

    points = np.concatenate([uniform, near])
    labels = scene.sdf_all(points) <= 0 if len(points) else np.zeros((0, scene.k), dtype=bool)
    flags = np.concatenate([np.zeros(len(uniform), dtype=bool), np.ones(n_near, dtype=bool)])
    return OccupancySamples(points, labels.astype(bool), flags)


def label_scene(
    scene: SceneGT,
    seed: int,
    scene_cfg: SceneConfig = SceneConfig(),
    grasp_cfg: GraspConfig = GraspConfig(),
) -> LabeledScene:
    """Render one view of a scene and sample its grasp and occupancy labels.

    The stored cloud holds object points only (table points are dropped).
    """
    rng = np.random.default_rng(seed)
    camera = sample_camera(int(rng.integers(2**31)), scene_cfg)
    rendered = render_depth(scene, camera)
    assert rendered.instance_ids is not None
    cloud = rendered.select(rendered.instance_ids >= 0)
    grasps = sample_grasp_labels(
        scene,
        cloud,
        scene_cfg.n_contacts,
        grasp_cfg,
        seed=int(rng.integers(2**31)),
        friction=scene_cfg.friction,
        clearance=scene_cfg.clearance,
    )
    occupancy = sample_occupancy(
        scene,
        scene_cfg.n_occupancy,
        scene_cfg.near_frac,
        scene_cfg.near_band,
        int(rng.integers(2**31)),
    )
    logger.debug(
        "labeled scene",
        extra={
            "seed": seed,
            "points": len(cloud),
            "contacts": len(grasps),
            "graspable": int(sum(bool(g.success.any()) for g in grasps)),
        },
    )
    return LabeledScene(scene, cloud, grasps, occupancy, camera, seed)
