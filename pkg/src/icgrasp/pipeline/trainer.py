"""``icgrasp train``: matching-based training of the instance network on a generated dataset."""

import logging
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Dict, List, Optional, Tuple

import numpy as np
import torch
from torch import Tensor

from ..core.config import AugmentConfig, NetConfig, TrainConfig, TrainRunConfig, echo_config
from ..core.errors import ConfigError, DataError
from ..core.history import MetricHistory
from ..core.persistence import DatasetStore
from ..geometry.cloud import PointCloud, augment_with_transform, majority_vote, rotate_about_center
from ..losses.matching import Assignment, match_instances
from ..losses.terms import LossLabels, LossPrediction, total_loss
from ..net.model import InstanceNet, NetOutput
from ..net.training import OptimizerState, accumulate, backward, make_optimizer, optimize_step
from ..sim.labels import LabeledScene
from .scene_model import save_model
from .workers import derive_seed

logger = logging.getLogger(__name__)

CHECKPOINT_NAME = "checkpoint.icg"
METRICS_NAME = "metrics.jsonl"


@dataclass
class SceneTargets:
    """A training view and its labels, in the frame the network sees.

    Attributes:
        cloud: Object points with instance ids (scene positions)
        visible: Scene positions of the gt instances kept for matching
        classes: (G,) class of every kept instance
        contacts: (Nc, 3) labeled contacts
        contact_instance: (Nc,) row in ``visible`` of every contact's object, -1 if not kept
        success: (Nc, N_alpha) grasp outcomes
        widths: (Nc,) gripper widths
        occupancy_points: (M, 3) occupancy samples
        occupancy: (M, G) occupancy of the kept instances
    """

    cloud: PointCloud
    visible: np.ndarray
    classes: np.ndarray
    contacts: np.ndarray
    contact_instance: np.ndarray
    success: np.ndarray
    widths: np.ndarray
    occupancy_points: np.ndarray
    occupancy: np.ndarray


def build_network(cfg: NetConfig) -> InstanceNet:
    """Instance network with parameters initialized from ``cfg.seed``."""
    with torch.random.fork_rng():
        torch.manual_seed(cfg.seed)
        return InstanceNet(cfg)


def scene_targets(
    labeled: LabeledScene, n_alpha: int, augment: Optional[AugmentConfig] = None
) -> SceneTargets:
    """Labels of a stored scene, optionally after an augmentation.

    The augmentation rotation is applied to the contacts and the occupancy samples as well, so
    labels stay attached to the geometry.
    """
    cloud = labeled.cloud
    grasps = labeled.grasp_arrays(n_alpha)
    occupancy = labeled.occupancy
    if occupancy is None:
        occ_points, occ_labels = np.zeros((0, 3)), np.zeros((0, labeled.scene.k), dtype=bool)
    else:
        occ_points, occ_labels = occupancy.points, occupancy.labels
    contacts = grasps["contacts"]

    if augment is not None:
        cloud, rotation = augment_with_transform(cloud, augment)
        center = np.array([augment.rotation_center[0], augment.rotation_center[1], 0.0])
        contacts = rotate_about_center(contacts, rotation, center)
        occ_points = rotate_about_center(occ_points, rotation, center)

    if cloud.instance_ids is None:
        raise DataError("training clouds need instance ids")
    visible = np.unique(cloud.instance_ids[cloud.instance_ids >= 0])
    row_of = {int(v): r for r, v in enumerate(visible)}
    position_of = {p.object_id: i for i, p in enumerate(labeled.scene.primitives)}
    contact_instance = np.array(
        [row_of.get(position_of.get(int(o), -1), -1) for o in grasps["object_ids"]], dtype=np.int64
    )
    return SceneTargets(
        cloud=cloud,
        visible=visible,
        classes=np.array([labeled.scene.primitives[v].class_id for v in visible], dtype=np.int64),
        contacts=contacts,
        contact_instance=contact_instance,
        success=grasps["success"],
        widths=grasps["widths"],
        occupancy_points=occ_points,
        occupancy=occ_labels[:, visible] if len(visible) else np.zeros((len(occ_points), 0), bool),
    )


def token_masks(out: NetOutput, targets: SceneTargets) -> Tuple[Tensor, np.ndarray]:
    """Token-level gt masks by majority vote of the point instance ids.

    Instances that own no token are dropped.

    Returns:
        ``(masks, kept)``: (G, T) masks and the rows of ``targets.visible`` they belong to
    """
    assert targets.cloud.instance_ids is not None
    n_tokens = len(out.tokens)
    token_instance = majority_vote(out.tokens.point_index, targets.cloud.instance_ids, n_tokens)
    masks = token_instance[None, :] == targets.visible[:, None]
    kept = np.flatnonzero(masks.any(axis=1))
    return torch.as_tensor(masks[kept], dtype=out.mask_logits.dtype), kept


def _decode(
    net: InstanceNet, out: NetOutput, targets: SceneTargets, assignment: Assignment
) -> Tuple[Tensor, Tensor, Tensor]:
    queries = assignment.queries
    dtype = net.dtype
    if len(targets.occupancy_points):
        occupancy = net.decode_occupancy(out, targets.occupancy_points, queries)
    else:
        occupancy = torch.zeros((len(queries), 0), dtype=dtype)
    if len(targets.contacts):
        affordance, widths = net.decode_grasp(out, targets.contacts, queries)
    else:
        affordance = torch.zeros((len(queries), 0, net.cfg.n_alpha), dtype=dtype)
        widths = torch.zeros((len(queries), 0), dtype=dtype)
    return occupancy, affordance, widths


@dataclass
class SceneStep:
    """Loss and raw outputs of one scene."""

    loss: Tensor
    components: Dict[str, float]
    assignment: Assignment
    mask_logits: Tensor
    masks: Tensor
    occupancy_logits: Tensor
    occupancy: Tensor
    affordance_logits: Tensor
    success: Tensor
    own: Tensor


def scene_step(net: InstanceNet, targets: SceneTargets) -> Optional[SceneStep]:
    """Forward pass, matching and loss of one scene; None when it has no usable instance."""
    if len(targets.cloud) == 0 or len(targets.visible) == 0:
        return None
    out = net(targets.cloud)
    masks, kept = token_masks(out, targets)
    if len(kept) == 0:
        return None

    # rows of ``kept`` become the gt indices seen by the matcher and the loss
    remap = np.full(len(targets.visible), -1, dtype=np.int64)
    remap[kept] = np.arange(len(kept))
    contact_instance = np.where(
        targets.contact_instance >= 0, remap[np.maximum(targets.contact_instance, 0)], -1
    )

    assignment = match_instances(out.mask_logits, masks)
    occupancy_logits, affordance_logits, widths = _decode(net, out, targets, assignment)
    dtype = net.dtype
    labels = LossLabels(
        masks=masks,
        classes=torch.as_tensor(targets.classes[kept], dtype=torch.long),
        occupancy=torch.as_tensor(targets.occupancy[:, kept], dtype=dtype),
        contact_instance=torch.as_tensor(contact_instance, dtype=torch.long),
        success=torch.as_tensor(targets.success, dtype=dtype),
        widths=torch.as_tensor(targets.widths, dtype=dtype),
        no_object=net.cfg.no_object_class,
    )
    prediction = LossPrediction(
        mask_logits=list(out.refinement.mask_logits),
        class_logits=out.class_logits,
        occupancy_logits=occupancy_logits,
        affordance_logits=affordance_logits,
        widths=widths,
    )
    loss, components = total_loss(prediction, labels, assignment)
    assert labels.contact_instance is not None and labels.occupancy is not None
    assert labels.success is not None
    gts = torch.as_tensor(assignment.gts, dtype=torch.long)
    return SceneStep(
        loss=loss,
        components=components,
        assignment=assignment,
        mask_logits=out.mask_logits[torch.as_tensor(assignment.queries, dtype=torch.long)],
        masks=masks[gts],
        occupancy_logits=occupancy_logits,
        occupancy=labels.occupancy.T[gts],
        affordance_logits=affordance_logits,
        success=labels.success,
        own=labels.contact_instance[None, :] == gts[:, None],
    )


def split_dataset(
    scenes: List[LabeledScene], val_frac: float, seed: int
) -> Tuple[List[LabeledScene], List[LabeledScene]]:
    """Seeded train/validation split; at least one training scene is kept."""
    order = np.random.default_rng(seed).permutation(len(scenes))
    n_val = min(int(round(val_frac * len(scenes))), max(len(scenes) - 1, 0))
    val = [scenes[i] for i in sorted(order[:n_val])]
    train = [scenes[i] for i in sorted(order[n_val:])]
    return train, val


def _ratio(numerator: float, denominator: float) -> float:
    return numerator / denominator if denominator else 0.0


@torch.no_grad()
def validate(net: InstanceNet, scenes: List[LabeledScene], cfg: TrainConfig) -> Dict[str, float]:
    """Validation loss, affordance F1, mask mIoU and occupancy IoU over matched instances.

    F1 counts every (contact, angle) pair of a matched instance with the prediction
    thresholded at ``cfg.f1_threshold``. Occupancy IoU pools all samples of all matched
    instances.
    """
    net.eval()
    tp = fp = fn = 0
    occ_inter = occ_union = 0
    mask_ious: List[float] = []
    losses: List[float] = []
    for labeled in scenes:
        step = scene_step(net, scene_targets(labeled, net.cfg.n_alpha))
        if step is None:
            continue
        losses.append(step.components["total"])

        predicted = step.mask_logits > 0
        truth = step.masks > 0.5
        for p, t in zip(predicted, truth):
            union = int((p | t).sum())
            mask_ious.append(_ratio(int((p & t).sum()), union) if union else 1.0)

        occ_p = step.occupancy_logits > 0
        occ_t = step.occupancy > 0.5
        occ_inter += int((occ_p & occ_t).sum())
        occ_union += int((occ_p | occ_t).sum())

        if step.own.numel() and bool(step.own.any()):
            scores = torch.sigmoid(step.affordance_logits)[step.own] >= cfg.f1_threshold
            success = step.success[None].expand_as(step.affordance_logits)[step.own] > 0.5
            tp += int((scores & success).sum())
            fp += int((scores & ~success).sum())
            fn += int((~scores & success).sum())
    net.train()
    return {
        "loss": float(np.mean(losses)) if losses else 0.0,
        "affordance_f1": _ratio(2 * tp, 2 * tp + fp + fn),
        "mask_miou": float(np.mean(mask_ious)) if mask_ious else 0.0,
        "occupancy_iou": _ratio(occ_inter, occ_union),
    }


def _augmentation(cfg: TrainConfig, step: int) -> Optional[AugmentConfig]:
    if not cfg.augment_enabled:
        return None
    return cfg.augment.model_copy(update={"seed": derive_seed(cfg.augment.seed, step)})


def batch_gradients(
    net: InstanceNet, batch: List[LabeledScene], cfg: TrainConfig, sample_index: int
) -> Tuple[Optional[Dict[str, Tensor]], Dict[str, float]]:
    """Mean gradient and loss components over the scenes of a batch that produce a loss.

    Scenes without matchable instances are skipped and do not count toward the mean.
    Gradients are summed in batch order.

    Returns:
        ``(grads, components)``; ``(None, {})`` when every scene was skipped
    """
    params = dict(net.named_parameters())
    grads = None
    totals: Dict[str, float] = {}
    used = 0
    for offset, labeled in enumerate(batch):
        augment = _augmentation(cfg, sample_index + offset)
        step = scene_step(net, scene_targets(labeled, net.cfg.n_alpha, augment))
        if step is None:
            continue
        grads = accumulate(grads, backward(step.loss, params), 1.0)
        for name, value in step.components.items():
            totals[name] = totals.get(name, 0.0) + value
        used += 1
    if grads is None:
        return None, {}
    mean = {name: g / used for name, g in grads.items()}
    return mean, {name: value / used for name, value in totals.items()}


def _train_batch(
    net: InstanceNet,
    batch: List[LabeledScene],
    cfg: TrainConfig,
    state: OptimizerState,
    sample_index: int,
) -> Optional[Dict[str, float]]:
    """One optimizer step on the batch's mean gradient."""
    grads, values = batch_gradients(net, batch, cfg, sample_index)
    if grads is None:
        return None
    optimize_step(dict(net.named_parameters()), grads, state)
    values["lr"] = state.lr
    return values


def train(
    net: InstanceNet,
    train_scenes: List[LabeledScene],
    val_scenes: List[LabeledScene],
    cfg: TrainConfig,
    history: MetricHistory,
    checkpoint: Path,
    seed: int = 0,
) -> Dict[str, float]:
    """Train with AdamW, warmup-cosine schedule and early stopping on affordance F1.

    The checkpoint always holds the epoch with the best validation F1 so far; training stops
    after ``cfg.patience`` epochs without improvement. Without validation scenes the training
    scenes are used for validation.

    Returns:
        Validation metrics of the best epoch
    """
    val_scenes = val_scenes or train_scenes
    steps_per_epoch = math.ceil(len(train_scenes) / cfg.batch_size)
    total_steps = cfg.epochs * steps_per_epoch
    state = make_optimizer(
        dict(net.named_parameters()),
        cfg.lr,
        cfg.weight_decay,
        total_steps=total_steps,
        warmup_steps=int(round(cfg.warmup_frac * total_steps)),
    )

    best: Optional[Dict[str, float]] = None
    stale = 0
    net.train()
    for epoch in range(cfg.epochs):
        order = np.random.default_rng(derive_seed(seed, epoch)).permutation(len(train_scenes))
        for b in range(steps_per_epoch):
            batch = [train_scenes[i] for i in order[b * cfg.batch_size : (b + 1) * cfg.batch_size]]
            first = epoch * len(train_scenes) + b * cfg.batch_size
            values = _train_batch(net, batch, cfg, state, first)
            if values is not None:
                history.add_entry("train_step", state.step_count, values, epoch)

        metrics = validate(net, val_scenes, cfg)
        history.add_entry("validation", state.step_count, metrics, epoch)
        logger.info("epoch finished", extra={"epoch": epoch, **metrics})

        if best is None or metrics["affordance_f1"] > best["affordance_f1"]:
            best = {**metrics, "epoch": float(epoch)}
            stale = 0
            meta = {"epoch": epoch, "metrics": metrics, "history": history.to_list()}
            save_model(net, checkpoint, meta)
        else:
            stale += 1
            if stale >= cfg.patience:
                logger.info("early stopping", extra={"epoch": epoch, "best_epoch": best["epoch"]})
                break
    assert best is not None
    return best


def cmd_train(cfg: TrainRunConfig) -> Path:
    """Train on ``cfg.dataset`` and write the best checkpoint and the metric log to ``cfg.out``.

    Raises:
        ConfigError: If the network and grasp discretizations disagree
        DataError: If the dataset is missing, corrupt or empty
    """
    if cfg.net.n_alpha != cfg.grasp.n_alpha:
        raise ConfigError(
            f"net.n_alpha={cfg.net.n_alpha} differs from grasp.n_alpha={cfg.grasp.n_alpha}"
        )
    if abs(cfg.net.w_max - cfg.grasp.w_max) > 1e-12:
        raise ConfigError(
            f"net.w_max={cfg.net.w_max} differs from grasp.w_max={cfg.grasp.w_max}"
        )

    out = Path(cfg.out)
    echo_config(cfg, out)
    scenes = DatasetStore(Path(cfg.dataset)).load_all()
    if not scenes:
        raise DataError(f"dataset {cfg.dataset} has no scenes")
    train_scenes, val_scenes = split_dataset(scenes, cfg.train.val_frac, cfg.seed)
    logger.info("dataset loaded", extra={"train": len(train_scenes), "validation": len(val_scenes)})

    with torch.random.fork_rng():
        torch.manual_seed(cfg.seed)
        net = build_network(cfg.net)
        history = MetricHistory(out / METRICS_NAME)
        checkpoint = out / CHECKPOINT_NAME
        best = train(net, train_scenes, val_scenes, cfg.train, history, checkpoint, cfg.seed)
    logger.info("training finished", extra=best)
    return checkpoint
