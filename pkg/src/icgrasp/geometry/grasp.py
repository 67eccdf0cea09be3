"""Contact-grasp geometry.

A contact grasp is a surface point ``c``, its outward normal ``n`` (the closing direction),
per-angle affordance scores ``s`` and a gripper width ``w``. Each discretized approach angle
yields one SE(3) gripper pose whose y-axis is ``n`` and whose z-axis (approach direction) is
perpendicular to ``n``.

Frame convention: the base frame is built from the world *up* axis ``u = -gravity``. Its
columns are ``x = normalize(u x n)``, ``y = n`` and ``z = normalize(x x n)``, so a horizontal
normal gets a top-down approach at alpha = 0. When ``|u . n|`` exceeds the singularity
threshold, ``x`` is the world x-axis projected onto the plane perpendicular to ``n``.
"""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np

from ..core.config import GraspConfig
from ..core.errors import InvalidArgumentError

UNIT_TOLERANCE = 1e-6
WORLD_X = np.array([1.0, 0.0, 0.0])
WORLD_Y = np.array([0.0, 1.0, 0.0])


@dataclass(frozen=True)
class GraspPose:
    """A gripper pose: rotation columns are the gripper frame axes, translation is the TCP."""

    rotation: np.ndarray
    translation: np.ndarray

    @property
    def closing_axis(self) -> np.ndarray:
        """The y column (finger closing direction)."""
        return self.rotation[:, 1]

    @property
    def approach(self) -> np.ndarray:
        """The z column (approach direction)."""
        return self.rotation[:, 2]

    def transform(self, points: np.ndarray) -> np.ndarray:
        """Map points from the gripper frame to the world frame."""
        return points @ self.rotation.T + self.translation

    def to_dict(self) -> dict:
        """Convert to dictionary."""
        return {"rotation": self.rotation.tolist(), "translation": self.translation.tolist()}


@dataclass(frozen=True)
class ContactGrasp:
    """Contact point, normal, per-angle affordance scores and gripper width."""

    contact: np.ndarray
    normal: np.ndarray
    scores: np.ndarray
    width: float


def up_axis(cfg: GraspConfig) -> np.ndarray:
    """World up direction (opposite to gravity)."""
    return -np.asarray(cfg.gravity, dtype=float)


def approach_angles(cfg: GraspConfig) -> np.ndarray:
    """Discretized approach angles in radians.

    The grid is half-open, ``-pi/2 + i * pi / n_alpha`` for ``i = 0 .. n_alpha - 1``:
    -90 and +90 degrees describe the same grasp line with the fingers swapped.
    """
    return -np.pi / 2 + np.arange(cfg.n_alpha) * (np.pi / cfg.n_alpha)


def rotation_y(alpha: float) -> np.ndarray:
    """Frame rotation about the closing (y) axis by ``alpha``."""
    c, s = np.cos(alpha), np.sin(alpha)
    return np.array([[c, 0.0, -s], [0.0, 1.0, 0.0], [s, 0.0, c]])


def _check_unit(v: np.ndarray, name: str) -> None:
    norms = np.linalg.norm(v, axis=-1)
    if not np.all(np.isfinite(norms)) or np.any(np.abs(norms - 1.0) > UNIT_TOLERANCE):
        raise InvalidArgumentError(f"{name} must be a unit vector")


def base_frames(normals: np.ndarray, z: np.ndarray, cfg: GraspConfig) -> np.ndarray:
    """Vectorized ``base_frame`` over an (N, 3) array of normals.

    Returns:
        (N, 3, 3) rotation matrices
    """
    n = np.atleast_2d(np.asarray(normals, dtype=float))
    z = np.asarray(z, dtype=float)
    _check_unit(n, "normal")
    _check_unit(z, "z")

    x = np.cross(z, n)
    singular = np.abs(n @ z) > cfg.singularity_threshold
    if np.any(singular):
        ns = n[singular]
        proj = WORLD_X - (ns @ WORLD_X)[:, None] * ns
        # normal parallel to world x: fall back to world y
        weak = np.linalg.norm(proj, axis=1) < 1e-6
        if np.any(weak):
            proj[weak] = WORLD_Y - (ns[weak] @ WORLD_Y)[:, None] * ns[weak]
        x[singular] = proj
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    a = np.cross(x, n)
    a /= np.linalg.norm(a, axis=1, keepdims=True)
    return np.stack([x, n, a], axis=2)


def base_frame(n: Sequence[float], z: Sequence[float], cfg: GraspConfig) -> np.ndarray:
    """Gripper base frame for a contact normal ``n`` and reference axis ``z``.

    Args:
        n: Unit surface normal (becomes the y column)
        z: Unit reference axis (the world up axis in ``pose_set``)
        cfg: Grasp configuration (singularity threshold)

    Returns:
        3x3 rotation matrix

    Raises:
        InvalidArgumentError: If ``n`` or ``z`` is not a unit vector
    """
    return base_frames(np.asarray(n, dtype=float)[None, :], np.asarray(z, dtype=float), cfg)[0]


def tcp_from_contact(
    c: Sequence[float], n: Sequence[float], w: float, cfg: GraspConfig
) -> np.ndarray:
    """Tool-center point ``c + (w_max - w) / 2 * n``.

    Raises:
        InvalidArgumentError: If ``w`` is outside ``[0, w_max]``
    """
    if not 0.0 <= w <= cfg.w_max:
        raise InvalidArgumentError(f"width {w} outside [0, {cfg.w_max}]")
    return np.asarray(c, dtype=float) + 0.5 * (cfg.w_max - w) * np.asarray(n, dtype=float)


def grasp_rotations(normals: np.ndarray, cfg: GraspConfig) -> np.ndarray:
    """Rotations of every approach angle for every normal.

    Returns:
        (N, n_alpha, 3, 3) rotations ``base_frame(n, up) @ R_y(alpha_i)``
    """
    frames = base_frames(normals, up_axis(cfg), cfg)
    rys = np.stack([rotation_y(a) for a in approach_angles(cfg)])
    return np.einsum("nij,ajk->naik", frames, rys)


def pose_set(g: ContactGrasp, cfg: GraspConfig) -> List[GraspPose]:
    """All ``n_alpha`` SE(3) poses of a contact grasp.

    Args:
        g: The contact grasp
        cfg: Grasp configuration

    Returns:
        One pose per approach angle, in angle-grid order
    """
    if len(g.scores) != cfg.n_alpha:
        raise InvalidArgumentError(f"expected {cfg.n_alpha} scores, got {len(g.scores)}")
    t = tcp_from_contact(g.contact, g.normal, g.width, cfg)
    rotations = grasp_rotations(np.asarray(g.normal, dtype=float)[None, :], cfg)[0]
    return [GraspPose(rotation=r, translation=t.copy()) for r in rotations]


def best_angle_index(scores: Sequence[float], threshold: float, cfg: GraspConfig) -> Optional[int]:
    """Index of the best-scoring angle, or None below ``threshold``.

    Ties prefer the smallest ``|alpha|``, then the lowest index.

    Raises:
        InvalidArgumentError: If there is not exactly one score per grid angle
    """
    s = np.asarray(scores, dtype=float)
    if s.shape != (cfg.n_alpha,):
        raise InvalidArgumentError(f"expected {cfg.n_alpha} scores, got shape {s.shape}")
    best = s.max()
    if best < threshold:
        return None
    tied = np.flatnonzero(s == best)
    alphas = np.round(np.abs(approach_angles(cfg)[tied]), 12)
    return int(tied[np.lexsort((tied, alphas))[0]])


def best_grasp_per_contact(
    g: ContactGrasp, threshold: float, cfg: GraspConfig = GraspConfig()
) -> Optional[Tuple[GraspPose, float]]:
    """The highest-scoring pose of a contact grasp.

    Args:
        g: The contact grasp
        threshold: Minimum score in ``[0, 1]``
        cfg: Grasp configuration

    Returns:
        ``(pose, score)`` or None when no angle reaches the threshold
    """
    if not 0.0 <= threshold <= 1.0:
        raise InvalidArgumentError(f"threshold {threshold} outside [0, 1]")
    index = best_angle_index(g.scores, threshold, cfg)
    if index is None:
        return None
    return pose_set(g, cfg)[index], float(g.scores[index])
