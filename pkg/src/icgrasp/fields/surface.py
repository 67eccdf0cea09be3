"""Surface points and normals recovered from implicit occupancy fields."""

import logging
from typing import Optional

import numpy as np

from ..core.errors import InvalidArgumentError
from ..geometry.cloud import PointCloud
from .meshing import ScalarField, evaluate, grid_axes, sample_grid
from .primitives import Bounds, OccupancyField

logger = logging.getLogger(__name__)

ISO = 0.5
BISECTION_STEPS = 30
STENCIL_RADIUS = 0.0015


def _stencil(radius: float, per_axis: int = 7) -> np.ndarray:
    ticks = np.linspace(-radius, radius, per_axis)
    offsets = np.stack(np.meshgrid(ticks, ticks, ticks, indexing="ij"), axis=-1).reshape(-1, 3)
    return offsets[np.linalg.norm(offsets, axis=1) <= radius + 1e-12]


def field_normals(
    field: ScalarField, points: np.ndarray, radius: float = STENCIL_RADIUS
) -> np.ndarray:
    """Outward normals (toward decreasing occupancy) at points near an iso-surface.

    The gradient is estimated from central differences over a symmetric ball stencil, which
    also works for hard 0/1 fields.
    """
    pts = np.atleast_2d(np.asarray(points, dtype=float))
    if len(pts) == 0:
        return np.zeros((0, 3))
    offsets = _stencil(radius)
    values = evaluate(field, (pts[:, None, :] + offsets[None]).reshape(-1, 3)).reshape(len(pts), -1)
    grad = values @ offsets
    normals = -grad
    norm = np.linalg.norm(normals, axis=1, keepdims=True)
    flat = norm[:, 0] < 1e-12
    if flat.any():
        logger.debug("%d points with vanishing occupancy gradient", int(flat.sum()))
    normals = np.where(flat[:, None], np.array([0.0, 0.0, 1.0]), normals / np.maximum(norm, 1e-12))
    return normals


def _bisect(field: ScalarField, inside: np.ndarray, outside: np.ndarray) -> np.ndarray:
    for _ in range(BISECTION_STEPS):
        mid = 0.5 * (inside + outside)
        above = evaluate(field, mid) > ISO
        inside = np.where(above[:, None], mid, inside)
        outside = np.where(above[:, None], outside, mid)
    return 0.5 * (inside + outside)


def resample_surface(
    field: OccupancyField,
    instance: int,
    n: int,
    bounds: Bounds,
    seed: int = 0,
    resolution: int = 48,
) -> PointCloud:
    """Up to ``n`` points on the 0.5 level set of one instance, with outward normals.

    Grid edges whose endpoints straddle the level set are drawn at random and bisected.

    Args:
        field: Per-instance occupancy
        instance: Instance index
        n: Maximum number of points, >= 1
        bounds: Search region
        seed: Selects which crossing edges are used
        resolution: Nodes per axis of the search grid

    Returns:
        Cloud with normals and instance ids; empty if the instance has no surface in bounds
    """
    if n < 1:
        raise InvalidArgumentError(f"n must be >= 1, got {n}")
    scalar = field.instance(instance)
    volume = sample_grid(scalar, bounds, resolution)
    axes = grid_axes(bounds, resolution)
    nodes = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1)

    inner, outer = [], []
    for axis in range(3):
        lo = [slice(None)] * 3
        hi = [slice(None)] * 3
        lo[axis] = slice(0, resolution - 1)
        hi[axis] = slice(1, resolution)
        a, b = volume[tuple(lo)] > ISO, volume[tuple(hi)] > ISO
        cross = a != b
        pa, pb = nodes[tuple(lo)][cross], nodes[tuple(hi)][cross]
        a_in = a[cross][:, None]
        inner.append(np.where(a_in, pa, pb))
        outer.append(np.where(a_in, pb, pa))
    inside = np.concatenate(inner)
    outside = np.concatenate(outer)
    if len(inside) == 0:
        return PointCloud(np.zeros((0, 3)), np.zeros((0, 3)), np.zeros(0, dtype=np.int64))

    if len(inside) > n:
        pick = np.sort(np.random.default_rng(seed).choice(len(inside), size=n, replace=False))
        inside, outside = inside[pick], outside[pick]

    points = _bisect(scalar, inside, outside)
    normals = field_normals(scalar, points)
    ids = np.full(len(points), instance, dtype=np.int64)
    return PointCloud(points, normals, ids, None)
