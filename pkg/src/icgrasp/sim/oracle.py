"""Analytic antipodal grasp oracle.

A grasp at a contact succeeds when the closing ray leaves the same primitive within the
gripper stroke, both contact normals lie inside the friction cone, and the opened gripper is
clear of the table and every other primitive.
"""

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..core.config import GraspConfig
from ..core.errors import InvalidArgumentError
from ..fields.collision import GripperModel, collision_mask
from ..fields.primitives import SceneGT, gt_field
from ..geometry.grasp import approach_angles, base_frame, rotation_y, tcp_from_contact, up_axis

SURFACE_TOLERANCE = 0.002
FRICTION = 0.5
CLEARANCE = 0.005


@dataclass(frozen=True)
class OracleResult:
    """Outcome of one or all approach angles at a contact.

    Attributes:
        success: (n_alpha,) or single-entry boolean outcomes
        width: Distance between the contact and the exit point of the closing ray
        object_id: Object id of the contacted primitive
        instance: Position of the contacted primitive in the scene
    """

    success: np.ndarray
    width: float
    object_id: int
    instance: int


@dataclass(frozen=True)
class AntipodalTest:
    """Width and friction-cone part of the oracle, shared by all approach angles."""

    instance: int
    width: float
    exit_point: np.ndarray
    exit_normal: np.ndarray
    antipodal: bool


def contacted_instance(scene: SceneGT, contact: np.ndarray) -> int:
    """Primitive whose surface is nearest to the contact.

    Raises:
        InvalidArgumentError: If no primitive surface is within 2 mm
    """
    if scene.k == 0:
        raise InvalidArgumentError("scene has no primitives")
    distances = np.abs(scene.sdf_all(contact)[0])
    instance = int(np.argmin(distances))
    if distances[instance] > SURFACE_TOLERANCE:
        raise InvalidArgumentError(
            f"contact {np.round(contact, 4).tolist()} is {distances[instance]:.4f} m "
            "off every surface"
        )
    return instance


def antipodal_test(
    scene: SceneGT, contact: np.ndarray, normal: np.ndarray, friction: float = FRICTION
) -> AntipodalTest:
    """Cast the closing ray from the contact along ``-normal`` through the contacted primitive."""
    instance = contacted_instance(scene, contact)
    p = scene.primitives[instance]
    t_in, t_out, _, n_out = p.intersect(contact[None], -normal[None])
    missed = t_in[0] > t_out[0] or not np.isfinite(t_out[0])
    width = 0.0 if missed else max(float(t_out[0]), 0.0)
    exit_point = contact - width * normal
    exit_normal = n_out[0]
    cos_angle = float(np.clip(normal @ -exit_normal, -1.0, 1.0))
    antipodal = width > 0.0 and np.arccos(cos_angle) <= np.arctan(friction) + 1e-12
    return AntipodalTest(instance, width, exit_point, exit_normal, bool(antipodal))


def oracle_sweep(
    scene: SceneGT,
    contact: np.ndarray,
    normal: np.ndarray,
    cfg: GraspConfig = GraspConfig(),
    gripper: Optional[GripperModel] = None,
    friction: float = FRICTION,
    clearance: float = CLEARANCE,
) -> OracleResult:
    """Oracle outcome at every approach angle of a contact.

    Args:
        scene: Ground-truth scene
        contact: Contact point within 2 mm of a primitive surface
        normal: Unit outward normal at the contact
        cfg: Grasp configuration
        gripper: Gripper model, defaults to one with ``cfg.w_max``
        friction: Friction coefficient of the cone test
        clearance: Extra jaw opening for the collision test

    Returns:
        Per-angle success, width and the contacted object

    Raises:
        InvalidArgumentError: If the contact is off every surface
    """
    contact = np.asarray(contact, dtype=float).reshape(3)
    normal = np.asarray(normal, dtype=float).reshape(3)
    normal = normal / np.linalg.norm(normal)
    gripper = gripper or GripperModel(w_max=cfg.w_max)

    test = antipodal_test(scene, contact, normal, friction)
    object_id = scene.primitives[test.instance].object_id
    success = np.zeros(cfg.n_alpha, dtype=bool)
    if not test.antipodal or test.width > cfg.w_max:
        return OracleResult(success, test.width, object_id, test.instance)

    frame = base_frame(normal, up_axis(cfg), cfg)
    rotations = np.stack([frame @ rotation_y(a) for a in approach_angles(cfg)])
    tcp = tcp_from_contact(contact, normal, test.width, cfg)
    opening = min(test.width + clearance, cfg.w_max)
    collides = collision_mask(
        rotations,
        np.broadcast_to(tcp, (cfg.n_alpha, 3)),
        np.full(cfg.n_alpha, opening),
        test.instance,
        gt_field(scene),
        scene.table_height,
        gripper=gripper,
    )
    return OracleResult(~collides, test.width, object_id, test.instance)


def oracle_grasp(
    scene: SceneGT,
    contact: np.ndarray,
    normal: np.ndarray,
    alpha: float,
    cfg: GraspConfig = GraspConfig(),
    gripper: Optional[GripperModel] = None,
    friction: float = FRICTION,
    clearance: float = CLEARANCE,
) -> OracleResult:
    """Oracle outcome of one approach angle; ``success`` holds a single entry."""
    contact = np.asarray(contact, dtype=float).reshape(3)
    normal = np.asarray(normal, dtype=float).reshape(3)
    normal = normal / np.linalg.norm(normal)
    gripper = gripper or GripperModel(w_max=cfg.w_max)

    test = antipodal_test(scene, contact, normal, friction)
    object_id = scene.primitives[test.instance].object_id
    if not test.antipodal or test.width > cfg.w_max:
        return OracleResult(np.zeros(1, dtype=bool), test.width, object_id, test.instance)

    rotation = base_frame(normal, up_axis(cfg), cfg) @ rotation_y(alpha)
    tcp = tcp_from_contact(contact, normal, test.width, cfg)
    collides = collision_mask(
        rotation[None],
        tcp[None],
        np.array([min(test.width + clearance, cfg.w_max)]),
        test.instance,
        gt_field(scene),
        scene.table_height,
        gripper=gripper,
    )
    return OracleResult(~collides, test.width, object_id, test.instance)
