"""Pinhole cameras on a spherical shell and closed-form depth rendering of primitive scenes."""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core.config import SceneConfig
from ..core.errors import InvalidArgumentError
from ..fields.primitives import SceneGT
from ..geometry.cloud import PointCloud

TABLE_ID = -1


@dataclass(frozen=True)
class CameraPose:
    """Camera position, target and pinhole intrinsics (pixels)."""

    position: np.ndarray
    look_at: np.ndarray
    fx: float
    fy: float
    cx: float
    cy: float
    width: int
    height: int

    def __post_init__(self) -> None:
        position = np.asarray(self.position, dtype=float).reshape(3)
        look_at = np.asarray(self.look_at, dtype=float).reshape(3)
        if np.allclose(position, look_at):
            raise InvalidArgumentError("camera position must differ from look_at")
        if self.fx <= 0 or self.fy <= 0:
            raise InvalidArgumentError("focal lengths must be positive")
        object.__setattr__(self, "position", position)
        object.__setattr__(self, "look_at", look_at)

    @property
    def rotation(self) -> np.ndarray:
        """Camera-to-world rotation; columns are right, down and forward."""
        forward = self.look_at - self.position
        forward = forward / np.linalg.norm(forward)
        reference = np.array([0.0, 0.0, 1.0])
        if abs(forward @ reference) > 0.999:
            reference = np.array([0.0, 1.0, 0.0])
        right = np.cross(forward, reference)
        right = right / np.linalg.norm(right)
        down = np.cross(forward, right)
        return np.stack([right, down, forward], axis=1)

    def rays(self) -> np.ndarray:
        """(H * W, 3) unit world directions through the pixel centers, row-major."""
        v, u = np.mgrid[0 : self.height, 0 : self.width]
        local = np.stack(
            [(u + 0.5 - self.cx) / self.fx, (v + 0.5 - self.cy) / self.fy, np.ones(u.shape)],
            axis=-1,
        ).reshape(-1, 3)
        local = local / np.linalg.norm(local, axis=1, keepdims=True)
        return local @ self.rotation.T

    def to_dict(self) -> dict:
        """Convert to dictionary."""
        return {
            "position": self.position.tolist(),
            "look_at": self.look_at.tolist(),
            "fx": self.fx,
            "fy": self.fy,
            "cx": self.cx,
            "cy": self.cy,
            "width": self.width,
            "height": self.height,
        }


def spherical_camera(
    r: float, theta: float, phi: float, cfg: SceneConfig = SceneConfig()
) -> CameraPose:
    """Camera at spherical coordinates around the table-plane center of the workspace."""
    lo = np.asarray(cfg.workspace_min, dtype=float)
    half = 0.5 * cfg.workspace_size
    look_at = np.array([lo[0] + half, lo[1] + half, cfg.table_height])
    offset = r * np.array([np.sin(theta) * np.cos(phi), np.sin(theta) * np.sin(phi), np.cos(theta)])
    return CameraPose(
        position=look_at + offset,
        look_at=look_at,
        fx=cfg.fx,
        fy=cfg.fy,
        cx=0.5 * cfg.image_width,
        cy=0.5 * cfg.image_height,
        width=cfg.image_width,
        height=cfg.image_height,
    )


def sample_camera(seed: int, cfg: SceneConfig = SceneConfig()) -> CameraPose:
    """Camera with ``r``, ``theta`` and ``phi`` drawn uniformly from the configured ranges."""
    rng = np.random.default_rng(seed)
    r = rng.uniform(*cfg.camera_radius)
    theta = rng.uniform(*cfg.camera_theta)
    phi = rng.uniform(0.0, 2 * np.pi)
    return spherical_camera(r, theta, phi, cfg)


def render_depth(
    scene: SceneGT, cam: CameraPose, table_extent: Optional[float] = None
) -> PointCloud:
    """Single-view cloud from exact ray casting.

    Every pixel takes its nearest hit among the primitives and the table plane. The table is
    limited to the workspace footprint (or a square of ``table_extent`` around its center).
    Points carry the outward surface normal, the hit primitive's instance id and class id;
    table points carry -1 for both.

    Args:
        scene: Ground-truth scene
        cam: Camera
        table_extent: Optional edge length of the visible table square

    Returns:
        Cloud in the world frame, in row-major pixel order of the hits
    """
    directions = cam.rays()
    n_rays = len(directions)
    origins = np.broadcast_to(cam.position, (n_rays, 3))

    depth = np.full(n_rays, np.inf)
    normals = np.zeros((n_rays, 3))
    instance = np.full(n_rays, TABLE_ID, dtype=np.int64)
    semantic = np.full(n_rays, TABLE_ID, dtype=np.int64)

    dz = directions[:, 2]
    down = dz < -1e-12
    depth_to_table = (scene.table_height - cam.position[2]) / np.where(down, dz, -1.0)
    t_table = np.where(down, depth_to_table, np.inf)
    hits = cam.position + np.where(np.isfinite(t_table), t_table, 0.0)[:, None] * directions
    center = scene.bounds.center
    half = 0.5 * (scene.workspace_size if table_extent is None else table_extent)
    on_table = down & (t_table > 0) & np.all(np.abs(hits[:, :2] - center[:2]) <= half, axis=1)
    depth[on_table] = t_table[on_table]
    normals[on_table] = np.array([0.0, 0.0, 1.0])

    for i, p in enumerate(scene.primitives):
        t_in, t_out, n_in, _ = p.intersect(origins, directions)
        hit = (t_in <= t_out) & (t_in > 0) & (t_in < depth)
        depth[hit] = t_in[hit]
        normals[hit] = n_in[hit]
        instance[hit] = i
        semantic[hit] = p.class_id

    visible = np.isfinite(depth)
    points = cam.position + depth[visible, None] * directions[visible]
    return PointCloud(points, normals[visible], instance[visible], semantic[visible])
