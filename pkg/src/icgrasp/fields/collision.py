"""Parallel-jaw gripper collision proxy against occupancy fields and the table.

Gripper frame: y is the closing axis, z the approach direction (the hand moves along +z), and
the TCP sits at the +y jaw's stroke end, so the grasp center is at ``y = -w_max / 2``. Two
finger slabs and a palm slab are represented by points on a regular lattice.
"""

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from ..core.errors import InvalidArgumentError
from ..geometry.grasp import GraspPose
from .primitives import OccupancyField

FINGER_THICKNESS = 0.008
FINGER_WIDTH = 0.016
FINGER_BACK = -0.035
FINGER_TIP = 0.005
PALM_DEPTH = 0.010
PITCH = 0.002


def _lattice(lo: Sequence[float], hi: Sequence[float], pitch: float) -> np.ndarray:
    axes = [np.linspace(a, b, max(2, int(np.ceil((b - a) / pitch)) + 1)) for a, b in zip(lo, hi)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, 3)


@dataclass(frozen=True)
class GripperModel:
    """Sampled gripper solid.

    ``finger`` holds the +y finger slab with its inner face at y = 0; ``points(width)`` places
    both fingers around the grasp center.
    """

    w_max: float = 0.08
    pitch: float = PITCH

    def __post_init__(self) -> None:
        if self.w_max <= 0 or not 0 < self.pitch <= PITCH:
            raise InvalidArgumentError("w_max must be positive and pitch in (0, 2 mm]")

    @property
    def center_y(self) -> float:
        return -0.5 * self.w_max

    @property
    def finger(self) -> np.ndarray:
        half = 0.5 * FINGER_WIDTH
        return _lattice((-half, 0.0, FINGER_BACK), (half, FINGER_THICKNESS, FINGER_TIP), self.pitch)

    @property
    def palm(self) -> np.ndarray:
        half = 0.5 * FINGER_WIDTH
        return _lattice(
            (-half, -self.w_max - FINGER_THICKNESS, FINGER_BACK - PALM_DEPTH),
            (half, FINGER_THICKNESS, FINGER_BACK),
            self.pitch,
        )

    def points(self, width: float) -> np.ndarray:
        """Gripper-frame sample points with the jaws opened to ``width``."""
        opening = float(np.clip(width, 0.0, self.w_max))
        finger = self.finger
        plus = finger + np.array([0.0, self.center_y + 0.5 * opening, 0.0])
        minus = finger * np.array([1.0, -1.0, 1.0])
        minus = minus + np.array([0.0, self.center_y - 0.5 * opening, 0.0])
        return np.concatenate([plus, minus, self.palm])


def collision_mask(
    rotations: np.ndarray,
    translations: np.ndarray,
    widths: np.ndarray,
    target: Optional[int],
    field: OccupancyField,
    table_height: float,
    occ_thresh: float = 0.5,
    gripper: Optional[GripperModel] = None,
) -> np.ndarray:
    """Vectorized collision test for M poses.

    Args:
        rotations: (M, 3, 3)
        translations: (M, 3)
        widths: (M,) jaw openings
        target: Instance excluded from the field, or None to test against all instances
        field: Per-instance occupancy
        table_height: Points below this height collide
        occ_thresh: Occupancy above which a point collides
        gripper: Gripper model, defaults to an 8 cm gripper

    Returns:
        (M,) boolean, True where the pose collides
    """
    gripper = gripper or GripperModel()
    if target is not None and not 0 <= target < field.k:
        raise InvalidArgumentError(f"target {target} out of range for {field.k} instances")
    rotations = np.asarray(rotations, dtype=float).reshape(-1, 3, 3)
    translations = np.asarray(translations, dtype=float).reshape(-1, 3)
    widths = np.broadcast_to(np.asarray(widths, dtype=float), (len(rotations),))

    hits = np.zeros(len(rotations), dtype=bool)
    others = field if target is None else field.excluding(target)
    for i, (rot, t, w) in enumerate(zip(rotations, translations, widths)):
        world = gripper.points(w) @ rot.T + t
        if np.any(world[:, 2] < table_height):
            hits[i] = True
        elif others.k and np.any(others(world) > occ_thresh):
            hits[i] = True
    return hits


def check_grasp_collision(
    pose: GraspPose,
    width: float,
    target: int,
    field: OccupancyField,
    table_height: float,
    occ_thresh: float = 0.5,
    gripper: Optional[GripperModel] = None,
) -> bool:
    """True iff the gripper opened to ``width`` hits the table or any non-target instance.

    Raises:
        InvalidArgumentError: If ``target`` is not an instance of ``field``
    """
    mask = collision_mask(
        pose.rotation[None],
        pose.translation[None],
        np.array([width]),
        target,
        field,
        table_height,
        occ_thresh,
        gripper,
    )
    return bool(mask[0])
