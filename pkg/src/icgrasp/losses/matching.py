"""Exact bipartite assignment between predicted queries and ground-truth instances."""

import logging
from dataclasses import dataclass, field
from typing import List, Tuple

import numpy as np
import scipy.optimize
import torch
from torch import Tensor

from ..core.errors import InvalidArgumentError
from .terms import pairwise_bce_cost, pairwise_dice_cost

logger = logging.getLogger(__name__)

TIE_TOLERANCE = 1e-9


@dataclass
class Assignment:
    """Matched ``(query, gt)`` pairs, sorted by query index.

    Attributes:
        pairs: Injective in both coordinates
        total: Sum of the matched costs
        n_queries: Number of rows of the cost matrix
    """

    pairs: List[Tuple[int, int]] = field(default_factory=list)
    total: float = 0.0
    n_queries: int = 0

    def __len__(self) -> int:
        return len(self.pairs)

    @property
    def queries(self) -> List[int]:
        return [q for q, _ in self.pairs]

    @property
    def gts(self) -> List[int]:
        return [g for _, g in self.pairs]

    def unmatched_queries(self) -> List[int]:
        matched = set(self.queries)
        return [q for q in range(self.n_queries) if q not in matched]

    def gt_of_query(self) -> np.ndarray:
        """Matched gt index of every query, -1 for unmatched ones."""
        out = np.full(self.n_queries, -1, dtype=np.int64)
        for q, g in self.pairs:
            out[q] = g
        return out


def _optimum(cost: np.ndarray) -> float:
    if cost.shape[0] == 0 or cost.shape[1] == 0:
        return 0.0
    rows, cols = scipy.optimize.linear_sum_assignment(cost)
    return float(cost[rows, cols].sum())


def hungarian(cost: np.ndarray) -> Assignment:
    """Minimum-cost assignment of a rectangular cost matrix.

    ``min(rows, cols)`` pairs are returned. Among equal-cost optima the one whose partner
    sequence, indexed along the smaller dimension, is lexicographically smallest wins.

    Args:
        cost: (rows, cols) finite costs

    Returns:
        The assignment

    Raises:
        InvalidArgumentError: If the matrix is not 2D or has non-finite entries
    """
    cost = np.asarray(cost, dtype=float)
    if cost.ndim != 2:
        raise InvalidArgumentError(f"cost matrix must be 2D, got shape {cost.shape}")
    if not np.all(np.isfinite(cost)):
        raise InvalidArgumentError("cost matrix has non-finite entries")

    n_rows, n_cols = cost.shape
    transposed = n_rows > n_cols
    work = cost.T if transposed else cost
    optimum = _optimum(work)
    tolerance = TIE_TOLERANCE * max(1.0, abs(optimum))

    # Fix partners one small-side index at a time, taking the smallest that keeps the optimum.
    fixed: List[Tuple[int, int]] = []
    fixed_cost = 0.0
    free_cols = list(range(work.shape[1]))
    for i in range(work.shape[0]):
        rest_rows = list(range(i + 1, work.shape[0]))
        chosen = None
        for j in free_cols:
            cols = [c for c in free_cols if c != j]
            sub = work[np.ix_(rest_rows, cols)]
            candidate = fixed_cost + work[i, j] + _optimum(sub)
            if candidate <= optimum + tolerance:
                chosen = j
                break
        if chosen is None:
            # Rounding pushed every candidate past the tolerance; take the solver's own choice.
            block = work[np.ix_([i] + rest_rows, free_cols)]
            rows, cols = scipy.optimize.linear_sum_assignment(block)
            chosen = free_cols[int(cols[list(rows).index(0)])]
        fixed.append((i, chosen))
        fixed_cost += work[i, chosen]
        free_cols.remove(chosen)

    pairs = [(j, i) for i, j in fixed] if transposed else fixed
    pairs.sort()
    total = float(sum(cost[q, g] for q, g in pairs))
    return Assignment(pairs=pairs, total=total, n_queries=n_rows)


def mask_cost(mask_logits: Tensor, gt_masks: Tensor) -> np.ndarray:
    """(Q, G) matching cost: mask BCE plus DICE of every query against every gt instance."""
    with torch.no_grad():
        gt = gt_masks.to(mask_logits.dtype)
        cost = pairwise_bce_cost(mask_logits, gt) + pairwise_dice_cost(mask_logits, gt)
    return cost.cpu().numpy().astype(float)


def match_instances(mask_logits: Tensor, gt_masks: Tensor) -> Assignment:
    """Match queries to gt instances on segmentation cost only.

    Class and occupancy predictions do not enter the cost. Queries left unmatched are trained
    towards the no-object class.

    Args:
        mask_logits: (Q, T) predicted mask logits
        gt_masks: (G, T) binary gt masks, G >= 1

    Raises:
        InvalidArgumentError: If there is no gt instance or the token counts differ
    """
    if gt_masks.ndim != 2 or gt_masks.shape[0] < 1:
        raise InvalidArgumentError("matching needs at least one gt instance")
    if mask_logits.shape[1] != gt_masks.shape[1]:
        raise InvalidArgumentError(
            f"mask length {mask_logits.shape[1]} does not match gt length {gt_masks.shape[1]}"
        )
    assignment = hungarian(mask_cost(mask_logits, gt_masks))
    logger.debug(
        "matched instances",
        extra={
            "n_queries": assignment.n_queries,
            "n_gt": int(gt_masks.shape[0]),
            "cost": assignment.total,
        },
    )
    return assignment
