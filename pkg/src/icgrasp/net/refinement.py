"""Instance queries: initialization, masked cross-attention refinement and classification."""

from dataclasses import dataclass
from typing import List, Optional, Tuple

import numpy as np
import torch
from torch import Tensor, nn

from ..core.config import NetConfig
from ..geometry.cloud import farthest_point_sampling, fourier_encode
from .encoder import SparseTokens


@dataclass
class InstanceQuery:
    """Latent embedding and 3D anchor of one object hypothesis."""

    embedding: Tensor
    anchor: Tensor


@dataclass
class RefinementOutput:
    """Refined queries and what every round produced.

    Attributes:
        embeddings: (Q, d_q) final query embeddings
        anchors: (Q, 3) anchor positions
        mask_logits: One (Q, T) tensor per round
        attention: One (Q, T) head-averaged cross-attention map per round
    """

    embeddings: Tensor
    anchors: Tensor
    mask_logits: List[Tensor]
    attention: List[Tensor]

    def queries(self) -> List[InstanceQuery]:
        return [InstanceQuery(e, a) for e, a in zip(self.embeddings, self.anchors)]


def fourier_features(
    x: Tensor, lo: np.ndarray, size: float, num_freqs: int, dtype: torch.dtype
) -> Tensor:
    """Fourier features of positions normalized to the workspace cube (no gradient to x)."""
    normalized = (x.detach().cpu().numpy() - lo) / size
    return torch.as_tensor(fourier_encode(normalized, num_freqs), dtype=dtype)


class PositionalEncoding(nn.Module):
    """Fourier features of workspace-normalized positions, projected to the query width."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.num_freqs = cfg.fourier_freqs
        self.lo = np.asarray(cfg.workspace_min, dtype=float)
        self.size = cfg.workspace_size
        self.proj = nn.Linear(6 * cfg.fourier_freqs, cfg.d_q)

    def forward(self, x: Tensor) -> Tensor:
        dtype = self.proj.weight.dtype
        return self.proj(fourier_features(x, self.lo, self.size, self.num_freqs, dtype))


class CrossAttentionLayer(nn.Module):
    """Queries attend to tokens; positional encodings are added to queries and keys."""

    def __init__(self, d_model: int, nhead: int):
        super().__init__()
        self.attn = nn.MultiheadAttention(d_model, nhead, batch_first=True)
        self.norm = nn.LayerNorm(d_model)

    def forward(
        self,
        query: Tensor,
        source: Tensor,
        attn_mask: Optional[Tensor] = None,
        query_pe: Optional[Tensor] = None,
        source_pe: Optional[Tensor] = None,
    ) -> Tuple[Tensor, Tensor]:
        """Masked cross-attention.

        Args:
            query: (Q, d)
            source: (T, d)
            attn_mask: (Q, T) boolean, True where a token is hidden from a query
            query_pe: Optional (Q, d) positional encoding
            source_pe: Optional (T, d) positional encoding

        Returns:
            Updated queries (Q, d) and head-averaged attention weights (Q, T)
        """
        q = query if query_pe is None else query + query_pe
        k = source if source_pe is None else source + source_pe
        output, weights = self.attn(q, k, source, attn_mask=attn_mask, need_weights=True)
        return self.norm(output + query), weights


class SelfAttentionLayer(nn.Module):
    def __init__(self, d_model: int, nhead: int):
        super().__init__()
        self.attn = nn.MultiheadAttention(d_model, nhead, batch_first=True)
        self.norm = nn.LayerNorm(d_model)

    def forward(self, x: Tensor, pe: Optional[Tensor] = None) -> Tensor:
        q = k = x if pe is None else x + pe
        output, _ = self.attn(q, k, x, need_weights=False)
        return self.norm(output + x)


class FFN(nn.Module):
    def __init__(self, d_model: int, hidden_dim: int):
        super().__init__()
        self.net = nn.Sequential(
            nn.Linear(d_model, hidden_dim), nn.ReLU(), nn.Linear(hidden_dim, d_model)
        )
        self.norm = nn.LayerNorm(d_model)

    def forward(self, x: Tensor) -> Tensor:
        return self.norm(x + self.net(x))


def attention_mask(mask_logits: Optional[Tensor], n_queries: int, n_tokens: int) -> Tensor:
    """Boolean attention mask from mask logits: hidden where sigmoid <= 0.5.

    A query whose mask is empty sees every token; without logits everything is visible.
    """
    if mask_logits is None:
        return torch.zeros(n_queries, n_tokens, dtype=torch.bool)
    hidden = ~(mask_logits.detach() > 0)
    empty = hidden.all(dim=1)
    hidden[empty] = False
    return hidden


def initial_anchors(coords: np.ndarray, n_queries: int, seed: int) -> np.ndarray:
    """Farthest-point samples of token coordinates, repeated cyclically when tokens are few."""
    m = min(n_queries, len(coords))
    picked = farthest_point_sampling(coords, m, seed=seed)
    return coords[[picked[i % m] for i in range(n_queries)]]


class QueryRefiner(nn.Module):
    """Rounds of masked cross-attention, self-attention and feed-forward over instance queries."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.n_queries = cfg.n_queries
        self.seed = cfg.seed
        self.query_feat = nn.Embedding(cfg.n_queries, cfg.d_q)
        self.pos_enc = PositionalEncoding(cfg)
        self.cross = nn.ModuleList(
            [CrossAttentionLayer(cfg.d_q, cfg.n_heads) for _ in range(cfg.n_refine_rounds)]
        )
        self.self_attn = nn.ModuleList(
            [SelfAttentionLayer(cfg.d_q, cfg.n_heads) for _ in range(cfg.n_refine_rounds)]
        )
        self.ffn = nn.ModuleList([FFN(cfg.d_q, cfg.d_hidden) for _ in range(cfg.n_refine_rounds)])
        self.mask_embed = nn.Sequential(
            nn.Linear(cfg.d_q, cfg.d_q), nn.ReLU(), nn.Linear(cfg.d_q, cfg.d_q)
        )

    def mask_logits(self, queries: Tensor, tokens: Tensor) -> Tensor:
        """(Q, T) dot products of projected queries and token features."""
        return self.mask_embed(queries) @ tokens.T

    def forward(self, tokens: SparseTokens) -> RefinementOutput:
        coords = tokens.coords.detach().cpu().numpy()
        picked = initial_anchors(coords, self.n_queries, self.seed)
        anchors = torch.as_tensor(picked, dtype=tokens.feats.dtype)
        query_pe = self.pos_enc(anchors)
        token_pe = self.pos_enc(tokens.coords)

        queries = self.query_feat.weight
        logits: Optional[Tensor] = None
        all_logits, all_attention = [], []
        for cross, self_attn, ffn in zip(self.cross, self.self_attn, self.ffn):
            hidden = attention_mask(logits, len(queries), len(tokens))
            queries, weights = cross(queries, tokens.feats, hidden, query_pe, token_pe)
            queries = ffn(self_attn(queries, query_pe))
            logits = self.mask_logits(queries, tokens.feats)
            all_logits.append(logits)
            all_attention.append(weights)
        return RefinementOutput(queries, anchors, all_logits, all_attention)


class ClassHead(nn.Module):
    """Small MLP over query embeddings giving C + 1 logits; the last class is no-object."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.mlp = nn.Sequential(
            nn.Linear(cfg.d_q, cfg.d_q), nn.ReLU(), nn.Linear(cfg.d_q, cfg.n_classes + 1)
        )

    def forward(self, embeddings: Tensor) -> Tensor:
        return self.mlp(embeddings)

    def zero_(self) -> "ClassHead":
        """Zero the output layer."""
        nn.init.zeros_(self.mlp[-1].weight)
        nn.init.zeros_(self.mlp[-1].bias)
        return self


def classify(head: ClassHead, query: InstanceQuery) -> Tensor:
    """Categorical distribution over C + 1 classes for one query."""
    return torch.softmax(head(query.embedding[None]), dim=-1)[0]
