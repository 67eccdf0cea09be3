"""Point cloud container and processing operations."""

from dataclasses import dataclass, replace
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy.interpolate import RegularGridInterpolator
from scipy.spatial import cKDTree

from ..core.config import AugmentConfig
from ..core.errors import InvalidArgumentError


@dataclass(frozen=True)
class PointCloud:
    """Points with optional per-point normals, instance ids and semantic ids.

    Table points (from rendering) carry instance and semantic id -1.
    """

    points: np.ndarray
    normals: Optional[np.ndarray] = None
    instance_ids: Optional[np.ndarray] = None
    semantic_ids: Optional[np.ndarray] = None

    def __post_init__(self) -> None:
        points = np.asarray(self.points, dtype=float).reshape(-1, 3)
        if np.isnan(points).any():
            raise InvalidArgumentError("point cloud contains NaN coordinates")
        object.__setattr__(self, "points", points)
        for name, dtype, width in (
            ("normals", float, 3),
            ("instance_ids", np.int64, None),
            ("semantic_ids", np.int64, None),
        ):
            value = getattr(self, name)
            if value is None:
                continue
            arr = np.asarray(value, dtype=dtype)
            arr = arr.reshape(-1, width) if width else arr.reshape(-1)
            if len(arr) != len(points):
                raise InvalidArgumentError(
                    f"{name} has {len(arr)} entries for {len(points)} points"
                )
            object.__setattr__(self, name, arr)

    def __len__(self) -> int:
        return len(self.points)

    @classmethod
    def empty(cls, with_normals: bool = False, with_labels: bool = False) -> "PointCloud":
        """An empty cloud with the requested optional arrays."""
        return cls(
            points=np.zeros((0, 3)),
            normals=np.zeros((0, 3)) if with_normals else None,
            instance_ids=np.zeros(0, dtype=np.int64) if with_labels else None,
            semantic_ids=np.zeros(0, dtype=np.int64) if with_labels else None,
        )

    def select(self, index: np.ndarray) -> "PointCloud":
        """Subset by boolean mask or integer index array."""
        return PointCloud(
            points=self.points[index],
            normals=None if self.normals is None else self.normals[index],
            instance_ids=None if self.instance_ids is None else self.instance_ids[index],
            semantic_ids=None if self.semantic_ids is None else self.semantic_ids[index],
        )

    def with_normals(self, normals: np.ndarray) -> "PointCloud":
        """Copy with normals replaced."""
        return replace(self, normals=normals)

    def concat(self, other: "PointCloud") -> "PointCloud":
        """Concatenate two clouds; optional arrays survive only if both carry them."""

        def _join(a: Optional[np.ndarray], b: Optional[np.ndarray]) -> Optional[np.ndarray]:
            return None if a is None or b is None else np.concatenate([a, b])

        return PointCloud(
            points=np.concatenate([self.points, other.points]),
            normals=_join(self.normals, other.normals),
            instance_ids=_join(self.instance_ids, other.instance_ids),
            semantic_ids=_join(self.semantic_ids, other.semantic_ids),
        )


def majority_vote(groups: np.ndarray, labels: np.ndarray, n_groups: int) -> np.ndarray:
    """Most frequent label per group, ties to the lowest label."""
    pairs, counts = np.unique(np.stack([groups, labels], axis=1), axis=0, return_counts=True)
    # sort by group, then count descending, then label ascending
    order = np.lexsort((pairs[:, 1], -counts, pairs[:, 0]))
    pairs = pairs[order]
    first = np.ones(len(pairs), dtype=bool)
    first[1:] = pairs[1:, 0] != pairs[:-1, 0]
    out = np.empty(n_groups, dtype=np.int64)
    out[pairs[first, 0]] = pairs[first, 1]
    return out


def voxel_downsample(pc: PointCloud, cell: float) -> PointCloud:
    """One point per occupied cell at the centroid of its members.

    Labels are pooled by majority vote (ties to the lowest id); normals are averaged and
    renormalized. Output order follows the sorted cell keys, so the result does not depend
    on input order.
    """
    if cell <= 0:
        raise InvalidArgumentError(f"cell must be positive, got {cell}")
    if len(pc) == 0:
        return pc

    keys = np.floor(pc.points / cell).astype(np.int64)
    _, inverse, counts = np.unique(keys, axis=0, return_inverse=True, return_counts=True)
    inverse = inverse.reshape(-1)
    n_cells = len(counts)

    sums = np.zeros((n_cells, 3))
    np.add.at(sums, inverse, pc.points)
    points = sums / counts[:, None]

    normals = None
    if pc.normals is not None:
        nsum = np.zeros((n_cells, 3))
        np.add.at(nsum, inverse, pc.normals)
        norm = np.linalg.norm(nsum, axis=1, keepdims=True)
        normals = np.where(norm > 1e-12, nsum / np.maximum(norm, 1e-12), np.array([0.0, 0.0, 1.0]))

    return PointCloud(
        points=points,
        normals=normals,
        instance_ids=(
            None if pc.instance_ids is None else majority_vote(inverse, pc.instance_ids, n_cells)
        ),
        semantic_ids=(
            None if pc.semantic_ids is None else majority_vote(inverse, pc.semantic_ids, n_cells)
        ),
    )


def statistical_outlier_removal(pc: PointCloud, k: int = 16, std_ratio: float = 2.0) -> PointCloud:
    """Drop points whose mean k-NN distance exceeds ``mean + std_ratio * std`` of that statistic.

    Raises:
        InvalidArgumentError: If the cloud has no more than ``k`` points
    """
    if k < 1 or std_ratio <= 0:
        raise InvalidArgumentError("k must be >= 1 and std_ratio > 0")
    if len(pc) <= k:
        raise InvalidArgumentError(f"need more than k={k} points, got {len(pc)}")

    dist, _ = cKDTree(pc.points).query(pc.points, k=k + 1)
    mean_dist = dist[:, 1:].mean(axis=1)
    limit = mean_dist.mean() + std_ratio * mean_dist.std()
    return pc.select(mean_dist <= limit)


def estimate_normals(pc: PointCloud, k: int, viewpoint: Sequence[float]) -> PointCloud:
    """Normals from the smallest-eigenvalue eigenvector of each point's k-NN covariance.

    Normals are flipped to face ``viewpoint``.

    Raises:
        InvalidArgumentError: If ``k < 3`` or the cloud has fewer than ``k`` points
    """
    if k < 3:
        raise InvalidArgumentError(f"k must be >= 3, got {k}")
    if len(pc) < k:
        raise InvalidArgumentError(f"need at least k={k} points, got {len(pc)}")

    _, idx = cKDTree(pc.points).query(pc.points, k=k)
    neighbors = pc.points[idx]
    centered = neighbors - neighbors.mean(axis=1, keepdims=True)
    cov = np.einsum("nki,nkj->nij", centered, centered) / k
    _, vecs = np.linalg.eigh(cov)
    normals = vecs[:, :, 0]

    facing = np.einsum("ni,ni->n", normals, np.asarray(viewpoint, dtype=float) - pc.points)
    normals = np.where((facing < 0)[:, None], -normals, normals)
    return pc.with_normals(normals / np.linalg.norm(normals, axis=1, keepdims=True))


def farthest_point_sampling(
    points: Union[PointCloud, np.ndarray], m: int, seed: int = 0, start: Optional[int] = None
) -> List[int]:
    """Greedy farthest-point sampling.

    Args:
        points: A PointCloud or an (N, 3) array of positions
        m: Number of picks, ``1 <= m <= N``
        seed: Seeds the random initial index
        start: Explicit initial index, overrides the seeded draw

    Returns:
        Picked indices in pick order; ties go to the lowest index
    """
    if isinstance(points, PointCloud):
        points = points.points
    pts = np.asarray(points, dtype=float).reshape(-1, 3)
    if not 1 <= m <= len(pts):
        raise InvalidArgumentError(f"m={m} must be in [1, {len(pts)}]")

    first = int(np.random.default_rng(seed).integers(len(pts))) if start is None else int(start)
    picked = [first]
    min_dist = np.linalg.norm(pts - pts[first], axis=1)
    while len(picked) < m:
        nxt = int(np.argmax(min_dist))
        picked.append(nxt)
        min_dist = np.minimum(min_dist, np.linalg.norm(pts - pts[nxt], axis=1))
    return picked


def knn(query: Sequence[float], pc: PointCloud, k: int) -> List[Tuple[int, float]]:
    """The ``k`` nearest points, ascending by distance, ties to the lower index.

    Raises:
        InvalidArgumentError: If ``k`` exceeds the cloud size
    """
    if not 1 <= k <= len(pc):
        raise InvalidArgumentError(f"k={k} must be in [1, {len(pc)}]")
    q = np.asarray(query, dtype=float)
    tree = cKDTree(pc.points)
    dist_k, _ = tree.query(q, k=k)
    radius = float(np.atleast_1d(dist_k)[-1])
    # everything within the k-th distance, so ties at the boundary resolve by index
    candidates = np.asarray(tree.query_ball_point(q, r=radius * (1 + 1e-9) + 1e-15), dtype=np.int64)
    dist = np.linalg.norm(pc.points[candidates] - q, axis=1)
    order = np.lexsort((candidates, dist))[:k]
    return [(int(candidates[i]), float(dist[i])) for i in order]


def fourier_encode(x: np.ndarray, num_freqs: int, scale: float = 1.0) -> np.ndarray:
    """Fourier features of 3D positions.

    Layout: all sines, then all cosines; within each block frequency-major,
    ``[f0: x y z, f1: x y z, ...]``, with argument ``2**f * scale * pi * x``.

    Args:
        x: (3,) or (N, 3) positions
        num_freqs: Number of octaves, >= 1
        scale: Base frequency scale

    Returns:
        (6 * num_freqs,) or (N, 6 * num_freqs)
    """
    if num_freqs < 1:
        raise InvalidArgumentError(f"num_freqs must be >= 1, got {num_freqs}")
    arr = np.asarray(x, dtype=float)
    freqs = (2.0 ** np.arange(num_freqs)) * scale * np.pi
    args = (arr[..., None, :] * freqs[:, None]).reshape(*arr.shape[:-1], 3 * num_freqs)
    return np.concatenate([np.sin(args), np.cos(args)], axis=-1)


def rotation_about_z(angle: float) -> np.ndarray:
    """Rotation matrix about the world z-axis."""
    c, s = np.cos(angle), np.sin(angle)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def _elastic_displacements(
    points: np.ndarray, cfg: AugmentConfig, rng: np.random.Generator
) -> np.ndarray:
    lo = points.min(axis=0) - 1e-3
    hi = points.max(axis=0) + 1e-3
    axes = [np.linspace(lo[i], hi[i], cfg.elastic_cells) for i in range(3)]
    shape = (cfg.elastic_cells,) * 3 + (3,)
    control = rng.normal(0.0, cfg.elastic_sigma, shape)
    control = np.clip(control, -cfg.elastic_clip, cfg.elastic_clip)
    interp = RegularGridInterpolator(axes, control, method="linear")
    return interp(points)


def augment_with_transform(pc: PointCloud, cfg: AugmentConfig) -> Tuple[PointCloud, np.ndarray]:
    """``augment`` that also returns the rigid rotation it applied.

    The rotation is about the vertical axis through ``cfg.rotation_center``; callers rotate
    their labels with ``rotate_about_center``.
    """
    rng = np.random.default_rng(cfg.seed)
    rotation = rotation_about_z(rng.uniform(0.0, 2 * np.pi)) if cfg.rotate else np.eye(3)
    if len(pc) == 0:
        return pc, rotation

    center = np.array([cfg.rotation_center[0], cfg.rotation_center[1], 0.0])
    points = rotate_about_center(pc.points, rotation, center)
    normals = None if pc.normals is None else pc.normals @ rotation.T

    if cfg.noise_sigma > 0:
        points = points + rng.normal(0.0, cfg.noise_sigma, points.shape)
    if cfg.elastic:
        points = points + _elastic_displacements(points, cfg, rng)

    out = PointCloud(points, normals, pc.instance_ids, pc.semantic_ids)
    if cfg.erase_prob > 0:
        keys = np.floor((points - points.min(axis=0)) / cfg.erase_cell).astype(np.int64)
        _, inverse = np.unique(keys, axis=0, return_inverse=True)
        inverse = inverse.reshape(-1)
        dropped = rng.random(inverse.max() + 1) < cfg.erase_prob
        out = out.select(~dropped[inverse])
    return out, rotation


def rotate_about_center(points: np.ndarray, rotation: np.ndarray, center: np.ndarray) -> np.ndarray:
    """Rotate points about ``center``."""
    return (np.asarray(points) - center) @ rotation.T + center


def augment(pc: PointCloud, cfg: AugmentConfig) -> PointCloud:
    """Observation augmentation: z-rotation, Gaussian noise, elastic warp, cell erasing.

    Fully determined by ``cfg.seed``.
    """
    return augment_with_transform(pc, cfg)[0]


def remove_table(pc: PointCloud, z_thresh: float) -> PointCloud:
    """Keep points strictly above ``z_thresh``."""
    return pc.select(pc.points[:, 2] > z_thresh)
