"""Training loss terms: mask BCE and DICE, semantic, grasp and occupancy losses.

All terms are means over their point sets and enter the total with weight 1.
"""

from dataclasses import dataclass
from typing import TYPE_CHECKING, Dict, List, Optional, Tuple

import torch
import torch.nn.functional as F
from torch import Tensor

from ..core.errors import InvalidArgumentError

if TYPE_CHECKING:
    from .matching import Assignment

DICE_EPS = 1.0

COMPONENTS = ("mask_bce", "mask_dice", "semantic", "grasp_bce", "width", "occupancy")


def bce(logits: Tensor, gt: Tensor, weights: Optional[Tensor] = None) -> Tensor:
    """Binary cross-entropy on logits, averaged (weighted average when ``weights`` is given).

    Raises:
        InvalidArgumentError: If the shapes differ
    """
    if logits.shape != gt.shape:
        raise InvalidArgumentError(f"bce shapes differ: {tuple(logits.shape)} vs {tuple(gt.shape)}")
    gt = gt.to(logits.dtype)
    if weights is None:
        return F.binary_cross_entropy_with_logits(logits, gt)
    per_element = F.binary_cross_entropy_with_logits(logits, gt, reduction="none")
    weights = weights.to(logits.dtype)
    return (per_element * weights).sum() / weights.sum().clamp(min=torch.finfo(logits.dtype).tiny)


def dice(logits: Tensor, gt: Tensor, eps: float = DICE_EPS) -> Tensor:
    """``1 - (2 sum(p g) + eps) / (sum(p) + sum(g) + eps)`` with ``p = sigmoid(logits)``."""
    if logits.shape != gt.shape:
        raise InvalidArgumentError(
            f"dice shapes differ: {tuple(logits.shape)} vs {tuple(gt.shape)}"
        )
    p = torch.sigmoid(logits)
    gt = gt.to(logits.dtype)
    return 1.0 - (2.0 * (p * gt).sum() + eps) / (p.sum() + gt.sum() + eps)


def pairwise_bce_cost(logits: Tensor, gt: Tensor) -> Tensor:
    """(Q, G) mean BCE of every mask row against every gt row."""
    n = logits.shape[1]
    pos = F.softplus(-logits)
    neg = F.softplus(logits)
    return (pos @ gt.T + neg @ (1.0 - gt).T) / max(n, 1)


def pairwise_dice_cost(logits: Tensor, gt: Tensor, eps: float = DICE_EPS) -> Tensor:
    """(Q, G) DICE loss of every mask row against every gt row."""
    p = torch.sigmoid(logits)
    numerator = 2.0 * (p @ gt.T) + eps
    denominator = p.sum(dim=1)[:, None] + gt.sum(dim=1)[None, :] + eps
    return 1.0 - numerator / denominator


@dataclass
class LossPrediction:
    """Network outputs entering the loss.

    Rows of the occupancy and grasp tensors follow ``assignment.pairs``.

    Attributes:
        mask_logits: One (Q, T) tensor per refinement round
        class_logits: (Q, C + 1)
        occupancy_logits: (P, M) at the sampled occupancy points
        affordance_logits: (P, Nc, N_alpha) at the labeled contacts
        widths: (P, Nc) predicted gripper widths
    """

    mask_logits: List[Tensor]
    class_logits: Tensor
    occupancy_logits: Tensor
    affordance_logits: Tensor
    widths: Tensor


@dataclass
class LossLabels:
    """Ground truth for one scene.

    Attributes:
        masks: (G, T) binary token masks
        classes: (G,) class index of every gt instance
        occupancy: (M, G) binary occupancy of the sampled points
        contact_instance: (Nc,) gt instance of every labeled contact
        success: (Nc, N_alpha) binary grasp outcome per approach angle
        widths: (Nc,) gripper width at closure
        no_object: Index of the no-object class
    """

    masks: Optional[Tensor] = None
    classes: Optional[Tensor] = None
    occupancy: Optional[Tensor] = None
    contact_instance: Optional[Tensor] = None
    success: Optional[Tensor] = None
    widths: Optional[Tensor] = None
    no_object: int = 0

    def require(self) -> None:
        """Raise if any label array is missing.

        Raises:
            InvalidArgumentError: Naming the first missing array
        """
        for name in ("masks", "classes", "occupancy", "contact_instance", "success", "widths"):
            if getattr(self, name) is None:
                raise InvalidArgumentError(f"missing label array: {name}")


def _zero(like: Tensor) -> Tensor:
    # Keeps the graph alive so backward still reaches every parameter.
    return like.sum() * 0.0


def mask_losses(
    mask_logits: List[Tensor], masks: Tensor, assignment: "Assignment"
) -> Tuple[Tensor, Tensor]:
    """Mask BCE and DICE of the matched pairs, averaged over pairs and over rounds."""
    queries = torch.as_tensor(assignment.queries, dtype=torch.long)
    gts = torch.as_tensor(assignment.gts, dtype=torch.long)
    bce_total: Optional[Tensor] = None
    dice_total: Optional[Tensor] = None
    for logits in mask_logits:
        pred = logits[queries]
        gt = masks[gts].to(logits.dtype)
        round_bce = bce(pred, gt)
        round_dice = torch.stack([dice(pred[i], gt[i]) for i in range(len(queries))]).mean()
        bce_total = round_bce if bce_total is None else bce_total + round_bce
        dice_total = round_dice if dice_total is None else dice_total + round_dice
    assert bce_total is not None and dice_total is not None
    return bce_total / len(mask_logits), dice_total / len(mask_logits)


def semantic_loss(
    class_logits: Tensor, classes: Tensor, assignment: "Assignment", no_object: int
) -> Tensor:
    """Cross-entropy of every query: matched class for matched queries, no-object otherwise."""
    target = torch.full((class_logits.shape[0],), no_object, dtype=torch.long)
    for q, g in assignment.pairs:
        target[q] = int(classes[g])
    return F.cross_entropy(class_logits, target)


def grasp_losses(
    affordance_logits: Tensor,
    widths: Tensor,
    labels: LossLabels,
    assignment: "Assignment",
) -> Tuple[Tensor, Tensor]:
    """Per-angle affordance BCE and squared width error on the contacts of matched instances.

    The width term only covers contacts with at least one successful angle.
    """
    assert labels.contact_instance is not None and labels.success is not None
    assert labels.widths is not None
    gts = torch.as_tensor(assignment.gts, dtype=torch.long)
    own = labels.contact_instance[None, :].long() == gts[:, None]
    if not bool(own.any()):
        return _zero(affordance_logits), _zero(widths)

    success = labels.success.to(affordance_logits.dtype)
    target = success[None].expand_as(affordance_logits)
    affordance = bce(affordance_logits[own], target[own])

    graspable = own & (labels.success.sum(dim=1) > 0)[None, :]
    if not bool(graspable.any()):
        return affordance, _zero(widths)
    gt_widths = labels.widths.to(widths.dtype)[None].expand_as(widths)
    width = ((widths[graspable] - gt_widths[graspable]) ** 2).mean()
    return affordance, width


def occupancy_loss(occupancy_logits: Tensor, occupancy: Tensor, assignment: "Assignment") -> Tensor:
    """Occupancy BCE of every matched query against its instance's labels."""
    if occupancy_logits.numel() == 0:
        return _zero(occupancy_logits)
    gts = torch.as_tensor(assignment.gts, dtype=torch.long)
    return bce(occupancy_logits, occupancy.T[gts].to(occupancy_logits.dtype))


def total_loss(
    pred: LossPrediction, labels: LossLabels, assignment: "Assignment"
) -> Tuple[Tensor, Dict[str, float]]:
    """Unweighted sum of all loss terms.

    Args:
        pred: Network outputs, decoder rows aligned with ``assignment.pairs``
        labels: Ground truth of the scene
        assignment: Query to gt matching

    Returns:
        ``(loss, components)`` where components maps each term name to its value

    Raises:
        InvalidArgumentError: If a label array is missing or the rows do not match the assignment
    """
    labels.require()
    assert labels.masks is not None and labels.classes is not None and labels.occupancy is not None
    if len(assignment) == 0:
        raise InvalidArgumentError("loss needs at least one matched pair")
    for name in ("occupancy_logits", "affordance_logits", "widths"):
        rows = getattr(pred, name).shape[0]
        if rows != len(assignment):
            raise InvalidArgumentError(
                f"{name} has {rows} rows for {len(assignment)} matched pairs"
            )

    mask_bce, mask_dice = mask_losses(pred.mask_logits, labels.masks, assignment)
    semantic = semantic_loss(pred.class_logits, labels.classes, assignment, labels.no_object)
    grasp_bce, width = grasp_losses(pred.affordance_logits, pred.widths, labels, assignment)
    occupancy = occupancy_loss(pred.occupancy_logits, labels.occupancy, assignment)

    terms = {
        "mask_bce": mask_bce,
        "mask_dice": mask_dice,
        "semantic": semantic,
        "grasp_bce": grasp_bce,
        "width": width,
        "occupancy": occupancy,
    }
    loss = torch.stack(list(terms.values())).sum()
    components = {name: float(value.detach()) for name, value in terms.items()}
    components["total"] = float(loss.detach())
    return loss, components
