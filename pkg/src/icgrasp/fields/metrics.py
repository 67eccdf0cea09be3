"""Reconstruction metrics: Chamfer-L1 between meshes and Monte-Carlo volumetric IoU."""

import numpy as np
import trimesh

from ..core.errors import InvalidArgumentError
from .meshing import ScalarField, TriangleMesh, evaluate
from .primitives import Bounds


def _one_sided(
    source: trimesh.Trimesh, target: trimesh.Trimesh, n_samples: int, seed: int
) -> float:
    points, _ = trimesh.sample.sample_surface(source, n_samples, seed=seed)
    _, distance, _ = trimesh.proximity.closest_point(target, points)
    return float(np.mean(distance))


def chamfer_l1(a: TriangleMesh, b: TriangleMesh, n_samples: int = 10_000, seed: int = 0) -> float:
    """Symmetric mean point-to-surface distance (accuracy and completeness averaged).

    Args:
        a: First mesh
        b: Second mesh
        n_samples: Area-weighted surface samples per mesh
        seed: Sampling seed, used for both directions

    Returns:
        Distance in meters

    Raises:
        InvalidArgumentError: If either mesh is empty
    """
    if a.is_empty or b.is_empty:
        raise InvalidArgumentError("chamfer distance needs two nonempty meshes")
    ta, tb = a.to_trimesh(), b.to_trimesh()
    return 0.5 * (_one_sided(ta, tb, n_samples, seed) + _one_sided(tb, ta, n_samples, seed))


def volumetric_iou(
    fa: ScalarField, fb: ScalarField, bounds: Bounds, n_samples: int = 100_000, seed: int = 0
) -> float:
    """Intersection over union of ``{f > 0.5}`` estimated from uniform samples.

    Returns:
        IoU in ``[0, 1]``; 1.0 when both sets are empty
    """
    if n_samples < 1:
        raise InvalidArgumentError(f"n_samples must be >= 1, got {n_samples}")
    points = bounds.sample(n_samples, np.random.default_rng(seed))
    inside_a = evaluate(fa, points) > 0.5
    inside_b = evaluate(fb, points) > 0.5
    union = np.count_nonzero(inside_a | inside_b)
    if union == 0:
        return 1.0
    return np.count_nonzero(inside_a & inside_b) / union
