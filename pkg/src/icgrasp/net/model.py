"""The assembled instance network and its inference helpers."""

from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple, Union

import numpy as np
import torch
from torch import Tensor, nn

from ..core.config import NetConfig
from ..geometry.cloud import PointCloud
from .decoders import AffordanceAdapter, FeatureInterpolator, GraspDecoder, OccupancyDecoder
from .encoder import DenseGrid, Encoder, SparseTokens, TokenAggregator
from .refinement import ClassHead, QueryRefiner, RefinementOutput

DUPLICATE_IOU = 0.8

QuerySelection = Optional[Sequence[int]]


@dataclass
class NetOutput:
    """Everything one forward pass over a cloud produces.

    Attributes:
        tokens: Aggregated surface tokens (features of width d_q)
        dense: Volumetric features
        refinement: Refined queries plus per-round masks and attention
        class_logits: (Q, C + 1) classifier logits
        grasp_embeddings: (Q, d_q) queries after the affordance adapter
    """

    tokens: SparseTokens
    dense: DenseGrid
    refinement: RefinementOutput
    class_logits: Tensor
    grasp_embeddings: Tensor

    @property
    def mask_logits(self) -> Tensor:
        """Final-round (Q, T) mask logits."""
        return self.refinement.mask_logits[-1]

    def point_mask_logits(self) -> Tensor:
        """Final-round mask logits broadcast to the input points, (Q, N)."""
        return self.mask_logits[:, torch.as_tensor(self.tokens.point_index)]

    def class_probs(self) -> Tensor:
        return torch.softmax(self.class_logits, dim=-1)


class InstanceNet(nn.Module):
    """Encoders, query refinement, classifier and the two implicit decoders."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.cfg = cfg
        self.encoder = Encoder(cfg)
        self.aggregator = TokenAggregator(cfg)
        self.refiner = QueryRefiner(cfg)
        self.class_head = ClassHead(cfg)
        self.occupancy_interpolator = FeatureInterpolator(cfg)
        self.grasp_interpolator = FeatureInterpolator(cfg)
        self.occupancy_decoder = OccupancyDecoder(cfg)
        self.affordance_adapter = AffordanceAdapter(cfg)
        self.grasp_decoder = GraspDecoder(cfg)

    @property
    def dtype(self) -> torch.dtype:
        return self.class_head.mlp[0].weight.dtype

    def zero_heads(self) -> "InstanceNet":
        """Zero the classifier and decoder output layers.

        Classes become uniform, occupancy and affordances 0.5 and widths ``w_max / 2``.
        """
        self.class_head.zero_()
        self.occupancy_decoder.zero_()
        self.grasp_decoder.zero_()
        return self

    def forward(self, cloud: Union[PointCloud, np.ndarray]) -> NetOutput:  # type: ignore[override]
        points = cloud.points if isinstance(cloud, PointCloud) else np.asarray(cloud, dtype=float)
        sparse, dense = self.encoder(points)
        tokens = self.aggregator(sparse, dense)
        refinement = self.refiner(tokens)
        return NetOutput(
            tokens=tokens,
            dense=dense,
            refinement=refinement,
            class_logits=self.class_head(refinement.embeddings),
            grasp_embeddings=self.affordance_adapter(refinement.embeddings),
        )

    def _points(self, x: Union[np.ndarray, Tensor]) -> Tensor:
        return torch.as_tensor(np.asarray(x, dtype=float).reshape(-1, 3), dtype=self.dtype)

    def decode_occupancy(
        self, out: NetOutput, x: Union[np.ndarray, Tensor], queries: QuerySelection = None
    ) -> Tensor:
        """Occupancy logits (Q', M) of the selected queries (all when None) at points x."""
        pts = self._points(x)
        sel = slice(None) if queries is None else torch.as_tensor(list(queries), dtype=torch.long)
        feats = self.occupancy_interpolator(pts, out.tokens, out.dense)
        embeddings = out.refinement.embeddings[sel]
        return self.occupancy_decoder(pts, embeddings, out.refinement.anchors[sel], feats)

    def decode_grasp(
        self, out: NetOutput, x: Union[np.ndarray, Tensor], queries: QuerySelection = None
    ) -> Tuple[Tensor, Tensor]:
        """Affordance logits (Q', M, N_alpha) and widths (Q', M) at contact points x."""
        pts = self._points(x)
        sel = slice(None) if queries is None else torch.as_tensor(list(queries), dtype=torch.long)
        feats = self.grasp_interpolator(pts, out.tokens, out.dense)
        embeddings = out.grasp_embeddings[sel]
        return self.grasp_decoder(pts, embeddings, out.refinement.anchors[sel], feats)


def active_queries(out: NetOutput, no_object: int) -> List[int]:
    """Queries classified as objects with a nonempty mask, most confident first.

    A query whose token mask overlaps an already kept, more confident mask with IoU above 0.8
    is dropped as a duplicate.
    """
    probs = out.class_probs().detach()
    masks = (out.mask_logits.detach() > 0).cpu().numpy()
    labels = probs.argmax(dim=1).cpu().numpy()
    confidence = probs[:, :no_object].max(dim=1).values.cpu().numpy()

    candidates = [q for q in range(len(labels)) if labels[q] != no_object and masks[q].any()]
    candidates.sort(key=lambda q: (-confidence[q], q))
    kept: List[int] = []
    for q in candidates:
        duplicate = False
        for other in kept:
            union = np.count_nonzero(masks[q] | masks[other])
            if union and np.count_nonzero(masks[q] & masks[other]) / union > DUPLICATE_IOU:
                duplicate = True
                break
        if not duplicate:
            kept.append(q)
    return kept


def predict_panoptic(out: NetOutput, no_object: int) -> Tuple[np.ndarray, np.ndarray, List[int]]:
    """Instance and semantic id of every input point.

    Instance ids index the returned active-query list; points no active mask claims get -1.

    Returns:
        ``(instance_ids, semantic_ids, active)``
    """
    active = active_queries(out, no_object)
    n_points = len(out.tokens.point_index)
    instance_ids = np.full(n_points, -1, dtype=np.int64)
    semantic_ids = np.full(n_points, -1, dtype=np.int64)
    if not active:
        return instance_ids, semantic_ids, active

    logits = out.point_mask_logits().detach()[active].cpu().numpy()
    best = logits.argmax(axis=0)
    claimed = logits.max(axis=0) > 0
    labels = out.class_probs().detach().argmax(dim=1).cpu().numpy()[active]
    instance_ids[claimed] = best[claimed]
    semantic_ids[claimed] = labels[best[claimed]]
    return instance_ids, semantic_ids, active
