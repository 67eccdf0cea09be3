"""Grasp selection: preprocessing, the confidence cascade and the surface resampling fallback."""

import logging
from dataclasses import dataclass
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from ..core.config import GraspConfig, SelectConfig
from ..fields.collision import GripperModel, check_grasp_collision
from ..fields.primitives import Bounds
from ..fields.surface import resample_surface
from ..geometry.cloud import (
    PointCloud,
    estimate_normals,
    farthest_point_sampling,
    remove_table,
    statistical_outlier_removal,
    voxel_downsample,
)
from ..geometry.grasp import GraspPose, approach_angles, grasp_rotations, tcp_from_contact
from .scene_model import GraspScores, SceneModel, ScenePrediction

logger = logging.getLogger(__name__)


@dataclass(frozen=True)
class GraspChoice:
    """The grasp to execute and where it came from.

    Attributes:
        pose: Gripper pose (TCP frame)
        width: Predicted gripper width
        opening: Jaw opening used for the collision test
        score: Affordance score of the chosen angle
        instance: Predicted instance the contact belongs to
        contact: Contact point
        normal: Closing direction at the contact
        alpha: Approach angle in radians
        threshold: Cascade level the grasp passed
        fallback: True if the contact came from surface resampling
    """

    pose: GraspPose
    width: float
    opening: float
    score: float
    instance: int
    contact: np.ndarray
    normal: np.ndarray
    alpha: float
    threshold: float
    fallback: bool = False


@dataclass(frozen=True)
class _Candidate:
    instance: int
    contact: int
    angle: int
    score: float
    z: float
    abs_alpha: float

    def order(self) -> Tuple[float, float, float, int, int, int]:
        return (-self.score, -self.z, self.abs_alpha, self.instance, self.contact, self.angle)


def preprocess(
    cloud: PointCloud, cfg: SelectConfig, table_height: float, viewpoint: Sequence[float]
) -> PointCloud:
    """Table removal, statistical outlier removal, voxel downsampling and normal estimation.

    Returns:
        The processed cloud; empty when too few points survive
    """
    pc = remove_table(cloud, table_height + cfg.table_margin)
    if len(pc) <= cfg.outlier_k:
        return PointCloud.empty(with_normals=True)
    pc = statistical_outlier_removal(pc, cfg.outlier_k, cfg.outlier_std)
    pc = voxel_downsample(pc, cfg.downsample)
    if len(pc) < cfg.normal_k:
        return PointCloud.empty(with_normals=True)
    return estimate_normals(pc, cfg.normal_k, viewpoint)


def instance_contacts(
    pc: PointCloud, prediction: ScenePrediction, cfg: SelectConfig
) -> Dict[int, Tuple[np.ndarray, np.ndarray]]:
    """Contacts and normals of every predicted instance.

    Every point of an instance is a contact unless ``cfg.max_contacts_per_instance`` is set, in
    which case larger instances are thinned to that many by farthest-point sampling.
    """
    cap = cfg.max_contacts_per_instance
    assert pc.normals is not None
    contacts = {}
    for i in range(prediction.k):
        idx = np.flatnonzero(prediction.instance_ids == i)
        if len(idx) == 0:
            continue
        if cap is not None and len(idx) > cap:
            picked = farthest_point_sampling(pc.points[idx], cap, seed=cfg.seed)
            idx = idx[np.sort(picked)]
        contacts[i] = (pc.points[idx], pc.normals[idx])
    return contacts


def _candidates(
    scored: Dict[int, GraspScores], threshold: float, grasp_cfg: GraspConfig
) -> List[_Candidate]:
    abs_alpha = np.abs(approach_angles(grasp_cfg))
    found = []
    for instance, s in scored.items():
        widths = np.clip(s.widths, 0.0, grasp_cfg.w_max)
        tcp_z = s.contacts[:, 2] + 0.5 * (grasp_cfg.w_max - widths) * s.normals[:, 2]
        for m, a in zip(*np.nonzero(s.scores >= threshold)):
            candidate = _Candidate(
                instance,
                int(m),
                int(a),
                float(s.scores[m, a]),
                float(tcp_z[m]),
                float(abs_alpha[a]),
            )
            found.append(candidate)
    return sorted(found, key=_Candidate.order)


def _cascade(
    scored: Dict[int, GraspScores],
    prediction: ScenePrediction,
    cfg: SelectConfig,
    grasp_cfg: GraspConfig,
    table_height: float,
    gripper: GripperModel,
    fallback: bool,
) -> Optional[GraspChoice]:
    """Best collision-free candidate at the first cascade level that has one."""
    checked: Dict[Tuple[int, int, int], bool] = {}
    angles = approach_angles(grasp_cfg)
    for threshold in cfg.thresholds:
        for c in _candidates(scored, threshold, grasp_cfg):
            key = (c.instance, c.contact, c.angle)
            s = scored[c.instance]
            normal = s.normals[c.contact]
            width = float(np.clip(s.widths[c.contact], 0.0, grasp_cfg.w_max))
            rotation = grasp_rotations(normal[None], grasp_cfg)[0, c.angle]
            tcp = tcp_from_contact(s.contacts[c.contact], normal, width, grasp_cfg)
            pose = GraspPose(rotation, tcp)
            opening = min(width + cfg.clearance, grasp_cfg.w_max)
            if key not in checked:
                checked[key] = check_grasp_collision(
                    pose,
                    opening,
                    c.instance,
                    prediction.field,
                    table_height,
                    cfg.occ_thresh,
                    gripper,
                )
            if checked[key]:
                continue
            return GraspChoice(
                pose=pose,
                width=width,
                opening=opening,
                score=c.score,
                instance=c.instance,
                contact=s.contacts[c.contact].copy(),
                normal=normal.copy(),
                alpha=float(angles[c.angle]),
                threshold=threshold,
                fallback=fallback,
            )
    return None


def choose_grasp(
    pc: PointCloud,
    prediction: ScenePrediction,
    cfg: SelectConfig,
    grasp_cfg: GraspConfig,
    bounds: Bounds,
    table_height: float,
    gripper: Optional[GripperModel] = None,
) -> Optional[GraspChoice]:
    """Run the cascade on a preprocessed cloud's predicted instances.

    Candidates at the current level are tried by score, then higher TCP, then smaller
    ``|alpha|``; the first one clear of the table and all other predicted instances wins. If no
    level yields a grasp and the fallback is enabled, contacts resampled from every instance's
    implicit surface are scored and the cascade runs again.
    """
    gripper = gripper or GripperModel(w_max=grasp_cfg.w_max)
    scored = {
        i: prediction.grasp(i, contacts, normals)
        for i, (contacts, normals) in instance_contacts(pc, prediction, cfg).items()
    }
    choice = _cascade(scored, prediction, cfg, grasp_cfg, table_height, gripper, fallback=False)
    if choice is not None or not cfg.fallback:
        return choice

    resampled = {}
    for i in range(prediction.k):
        surface = resample_surface(prediction.field, i, cfg.fallback_points, bounds, seed=cfg.seed)
        surface = surface.select(surface.points[:, 2] > table_height + cfg.table_margin)
        if len(surface):
            assert surface.normals is not None
            resampled[i] = prediction.grasp(i, surface.points, surface.normals)
    choice = _cascade(resampled, prediction, cfg, grasp_cfg, table_height, gripper, fallback=True)
    if choice is not None:
        logger.info(
            "grasp found on resampled surface",
            extra={"instance": choice.instance, "score": choice.score},
        )
    return choice


def select_grasp(
    cloud: PointCloud,
    model: SceneModel,
    cfg: SelectConfig,
    grasp_cfg: GraspConfig,
    bounds: Bounds,
    table_height: float,
    viewpoint: Sequence[float],
    gripper: Optional[GripperModel] = None,
) -> Optional[GraspChoice]:
    """Pick the grasp to execute from a raw observation.

    Args:
        cloud: Observed cloud (table points included)
        model: Scene model
        cfg: Selection parameters
        grasp_cfg: Grasp discretization
        bounds: Workspace, the search region of the fallback
        table_height: Table plane height
        viewpoint: Camera position, orients the estimated normals
        gripper: Gripper model

    Returns:
        The chosen grasp, or None when nothing passes
    """
    pc = preprocess(cloud, cfg, table_height, viewpoint)
    if len(pc) == 0:
        return None
    return choose_grasp(pc, model.predict(pc), cfg, grasp_cfg, bounds, table_height, gripper)
