"""Scene models: what the grasp selector and the reconstruction need from a predictor.

``NetworkSceneModel`` wraps a trained instance network; ``OracleSceneModel`` answers from the
ground-truth scene with the analytic oracle and is used to check the pipeline without learning.
"""

import logging
from dataclasses import dataclass
from functools import lru_cache
from pathlib import Path
from typing import Any, Dict, Optional, Protocol, Tuple

import numpy as np
import torch

from ..core.config import GraspConfig, NetConfig, parse_config
from ..core.errors import ConfigError, DataError
from ..core.persistence import load_checkpoint, save_checkpoint
from ..fields.primitives import OccupancyField, SceneGT, gt_field
from ..geometry.cloud import PointCloud
from ..net.model import InstanceNet, NetOutput, predict_panoptic
from ..sim.oracle import SURFACE_TOLERANCE, oracle_sweep

logger = logging.getLogger(__name__)

DECODE_CHUNK = 4096


@dataclass(frozen=True)
class GraspScores:
    """Scores of one instance's contacts.

    Attributes:
        contacts: (M, 3) contacts the scores refer to
        normals: (M, 3) closing directions
        scores: (M, n_alpha) success probabilities
        widths: (M,) gripper widths
    """

    contacts: np.ndarray
    normals: np.ndarray
    scores: np.ndarray
    widths: np.ndarray

    def __len__(self) -> int:
        return len(self.contacts)


class ScenePrediction(Protocol):
    """Per-scene output of a scene model."""

    instance_ids: np.ndarray
    semantic_ids: np.ndarray
    field: OccupancyField

    @property
    def k(self) -> int: ...

    def grasp(self, instance: int, contacts: np.ndarray, normals: np.ndarray) -> GraspScores: ...


class SceneModel(Protocol):
    """Anything that turns a preprocessed cloud into a scene prediction."""

    def predict(self, cloud: PointCloud) -> ScenePrediction: ...


class NetworkPrediction:
    """Panoptic ids, occupancy field and grasp scores of one forward pass."""

    def __init__(self, net: InstanceNet, out: NetOutput, cloud: PointCloud):
        self.net = net
        self.out = out
        no_object = net.cfg.no_object_class
        self.instance_ids, self.semantic_ids, self.active = predict_panoptic(out, no_object)
        self.field = OccupancyField(self._occupancy, len(self.active))
        logger.debug(
            "network prediction", extra={"points": len(cloud), "instances": len(self.active)}
        )

    @property
    def k(self) -> int:
        return len(self.active)

    def _occupancy(self, x: np.ndarray) -> np.ndarray:
        if not self.active:
            return np.zeros((len(x), 0))
        values = []
        with torch.no_grad():
            for start in range(0, len(x), DECODE_CHUNK):
                chunk = x[start : start + DECODE_CHUNK]
                logits = self.net.decode_occupancy(self.out, chunk, self.active)
                values.append(torch.sigmoid(logits).T.cpu().numpy())
        return np.concatenate(values) if values else np.zeros((0, self.k))

    def grasp(self, instance: int, contacts: np.ndarray, normals: np.ndarray) -> GraspScores:
        contacts = np.asarray(contacts, dtype=float).reshape(-1, 3)
        with torch.no_grad():
            logits, widths = self.net.decode_grasp(self.out, contacts, [self.active[instance]])
        return GraspScores(
            contacts=contacts,
            normals=np.asarray(normals, dtype=float).reshape(-1, 3),
            scores=torch.sigmoid(logits[0]).cpu().numpy().astype(float),
            widths=widths[0].cpu().numpy().astype(float),
        )


class NetworkSceneModel:
    """Scene model backed by an instance network."""

    def __init__(self, net: InstanceNet):
        self.net = net.eval()

    def predict(self, cloud: PointCloud) -> NetworkPrediction:
        with torch.no_grad():
            out = self.net(cloud)
        return NetworkPrediction(self.net, out, cloud)


class OraclePrediction:
    """Ground-truth ids and field; grasp scores are oracle outcomes (1 or 0)."""

    def __init__(
        self, scene: SceneGT, cloud: PointCloud, cfg: GraspConfig, friction: float, clearance: float
    ):
        self.scene = scene
        self.cfg = cfg
        self.friction = friction
        self.clearance = clearance
        self.field = gt_field(scene)
        if scene.k and len(cloud):
            distance = np.abs(scene.sdf_all(cloud.points))
            nearest = distance.argmin(axis=1)
            on_surface = distance[np.arange(len(cloud)), nearest] <= SURFACE_TOLERANCE
            self.instance_ids = np.where(on_surface, nearest, -1).astype(np.int64)
            classes = np.array([p.class_id for p in scene.primitives])
            self.semantic_ids = np.where(on_surface, classes[nearest], -1).astype(np.int64)
        else:
            self.instance_ids = np.full(len(cloud), -1, dtype=np.int64)
            self.semantic_ids = np.full(len(cloud), -1, dtype=np.int64)

    @property
    def k(self) -> int:
        return self.scene.k

    def grasp(self, instance: int, contacts: np.ndarray, normals: np.ndarray) -> GraspScores:
        """Contacts are projected onto the primitive and take its analytic normal."""
        p = self.scene.primitives[instance]
        contacts = np.asarray(contacts, dtype=float).reshape(-1, 3)
        if len(contacts) == 0:
            empty = np.zeros((0, 3))
            return GraspScores(empty, empty, np.zeros((0, self.cfg.n_alpha)), np.zeros(0))
        surface_normals = p.normal(contacts).reshape(-1, 3)
        projected = contacts - p.sdf(contacts)[:, None] * surface_normals
        surface_normals = p.normal(projected).reshape(-1, 3)
        scores = np.zeros((len(projected), self.cfg.n_alpha))
        widths = np.zeros(len(projected))
        for m, (c, n) in enumerate(zip(projected, surface_normals)):
            result = oracle_sweep(
                self.scene, c, n, self.cfg, friction=self.friction, clearance=self.clearance
            )
            if result.instance == instance:
                scores[m] = result.success.astype(float)
            widths[m] = min(result.width, self.cfg.w_max)
        return GraspScores(projected, surface_normals, scores, widths)


class OracleSceneModel:
    """Scene model that reads the current ground-truth scene."""

    def __init__(
        self,
        scene: SceneGT,
        cfg: GraspConfig = GraspConfig(),
        friction: float = 0.5,
        clearance: float = 0.005,
    ):
        self.scene = scene
        self.cfg = cfg
        self.friction = friction
        self.clearance = clearance

    def predict(self, cloud: PointCloud) -> OraclePrediction:
        return OraclePrediction(self.scene, cloud, self.cfg, self.friction, self.clearance)


def save_model(net: InstanceNet, path: Path, metadata: Optional[Dict[str, Any]] = None) -> Path:
    """Write a network checkpoint: its config, extra metadata and every parameter."""
    meta = dict(metadata or {})
    meta["net"] = net.cfg.model_dump(mode="json")
    meta["dtype"] = str(net.dtype).replace("torch.", "")
    tensors = {name: t.detach().cpu().numpy() for name, t in net.state_dict().items()}
    return save_checkpoint(path, tensors, meta)


def load_model(path: Path) -> Tuple[InstanceNet, Dict[str, Any]]:
    """Rebuild a network from a checkpoint.

    Raises:
        DataError: If the checkpoint is corrupt or does not fit its own config
    """
    tensors, metadata = load_checkpoint(path)
    if "net" not in metadata:
        raise DataError(f"{path}: checkpoint lacks the network config")
    try:
        cfg = parse_config(NetConfig, metadata["net"])
    except ConfigError as e:
        raise DataError(f"{path}: bad network config: {e}") from e
    net = InstanceNet(cfg)
    if metadata.get("dtype") == "float64":
        net = net.double()
    state = {name: torch.from_numpy(np.array(arr)) for name, arr in tensors.items()}
    try:
        net.load_state_dict(state, strict=True)
    except RuntimeError as e:
        raise DataError(f"{path}: parameters do not match the network: {e}") from e
    return net, metadata


@lru_cache(maxsize=2)
def cached_network_model(checkpoint: str) -> NetworkSceneModel:
    """Network scene model of a checkpoint, loaded once per process."""
    net, _ = load_model(Path(checkpoint))
    return NetworkSceneModel(net)
