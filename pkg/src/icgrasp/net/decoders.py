"""Point feature interpolation and the implicit occupancy / grasp decoders."""

from typing import Tuple

import numpy as np
import torch
from scipy.spatial import cKDTree
from torch import Tensor, nn

from ..core.config import NetConfig
from .encoder import DenseGrid, SparseTokens
from .refinement import FFN, SelfAttentionLayer, fourier_features


def trilinear(dg: DenseGrid, x: Tensor) -> Tensor:
    """Trilinear interpolation of cell-center features, clamped at the border.

    Returns:
        (M, d) features; exact at cell centers and for fields linear in x
    """
    dims = torch.tensor(dg.dims, dtype=torch.long)
    u = (x.to(dg.feats.dtype) - dg.origin) / dg.cell - 0.5
    i0 = torch.minimum(torch.floor(u).long().clamp(min=0), (dims - 2).clamp(min=0))
    i1 = torch.minimum(i0 + 1, dims - 1)
    t = (u - i0.to(u.dtype)).clamp(0.0, 1.0)

    out = torch.zeros(len(x), dg.feats.shape[-1], dtype=dg.feats.dtype)
    for cx in (0, 1):
        wx = t[:, 0] if cx else 1 - t[:, 0]
        ix = i1[:, 0] if cx else i0[:, 0]
        for cy in (0, 1):
            wy = t[:, 1] if cy else 1 - t[:, 1]
            iy = i1[:, 1] if cy else i0[:, 1]
            for cz in (0, 1):
                wz = t[:, 2] if cz else 1 - t[:, 2]
                iz = i1[:, 2] if cz else i0[:, 2]
                out = out + (wx * wy * wz)[:, None] * dg.feats[ix, iy, iz]
    return out


class FeatureInterpolator(nn.Module):
    """Features at arbitrary points from the dense grid and the k nearest tokens.

    The token branch is a small PointNet over ``feat || offset || distance`` of each neighbor,
    max-pooled over neighbors. Offsets keep points on opposite sides of a token apart.
    """

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.k = cfg.knn_k
        self.scale = 4.0 * cfg.sparse_cell
        self.neighbor_mlp = nn.Sequential(
            nn.Linear(cfg.d_q + 4, cfg.d_hidden), nn.ReLU(), nn.Linear(cfg.d_hidden, cfg.d_hidden)
        )
        self.fusion = nn.Sequential(
            nn.Linear(cfg.d_v + cfg.d_hidden, cfg.d_hidden),
            nn.ReLU(),
            nn.Linear(cfg.d_hidden, cfg.d_i),
        )

    def forward(self, x: Tensor, sp: SparseTokens, dg: DenseGrid) -> Tensor:
        x = x.to(sp.feats.dtype)
        k = min(self.k, len(sp))
        _, idx = cKDTree(sp.coords.detach().cpu().numpy()).query(x.detach().cpu().numpy(), k=k)
        idx = torch.as_tensor(np.asarray(idx).reshape(len(x), k))

        offsets = (x[:, None, :] - sp.coords[idx]) / self.scale
        dist = offsets.norm(dim=-1, keepdim=True)
        neighbor = self.neighbor_mlp(torch.cat([sp.feats[idx], offsets, dist], dim=-1))
        pooled = neighbor.max(dim=1).values
        return self.fusion(torch.cat([trilinear(dg, x), pooled], dim=-1))


class ResnetBlockFC(nn.Module):
    def __init__(self, size: int):
        super().__init__()
        self.fc_0 = nn.Linear(size, size)
        self.fc_1 = nn.Linear(size, size)

    def forward(self, x: Tensor) -> Tensor:
        net = self.fc_0(torch.relu(x))
        dx = self.fc_1(torch.relu(net))
        return x + dx


class _ImplicitHead(nn.Module):
    """Residual MLP over ``fourier(x) || fourier(anchor) || embedding || point features``.

    The concatenation is never materialized per (query, point) pair: its first linear layer is
    split into a point part and a query part that are added with broadcasting.
    """

    def __init__(self, cfg: NetConfig, out_dim: int):
        super().__init__()
        self.num_freqs = cfg.fourier_freqs
        self.lo = np.asarray(cfg.workspace_min, dtype=float)
        self.size = cfg.workspace_size
        enc = 6 * cfg.fourier_freqs
        self.point_in = nn.Linear(enc + cfg.d_i, cfg.d_hidden)
        self.query_in = nn.Linear(enc + cfg.d_q, cfg.d_hidden, bias=False)
        self.blocks = nn.ModuleList(
            [ResnetBlockFC(cfg.d_hidden) for _ in range(cfg.n_decoder_blocks)]
        )
        self.out = nn.Linear(cfg.d_hidden, out_dim)

    def _fourier(self, x: Tensor) -> Tensor:
        return fourier_features(x, self.lo, self.size, self.num_freqs, self.out.weight.dtype)

    def forward(self, x: Tensor, embeddings: Tensor, anchors: Tensor, feats: Tensor) -> Tensor:
        """Raw head outputs of shape (Q, M, out_dim)."""
        point = self.point_in(torch.cat([self._fourier(x), feats], dim=-1))
        query = self.query_in(torch.cat([self._fourier(anchors), embeddings], dim=-1))
        net = point[None, :, :] + query[:, None, :]
        for block in self.blocks:
            net = block(net)
        return self.out(torch.relu(net))

    def zero_(self) -> "_ImplicitHead":
        """Zero the output layer."""
        nn.init.zeros_(self.out.weight)
        nn.init.zeros_(self.out.bias)
        return self


class OccupancyDecoder(_ImplicitHead):
    """Per-instance occupancy logit of every (query, point) pair."""

    def __init__(self, cfg: NetConfig):
        super().__init__(cfg, 1)

    def forward(self, x: Tensor, embeddings: Tensor, anchors: Tensor, feats: Tensor) -> Tensor:
        """(Q, M) logits; probability is their sigmoid."""
        return super().forward(x, embeddings, anchors, feats)[..., 0]


class AffordanceAdapter(nn.Module):
    """Self-attention and MLP moving instance queries into the affordance domain."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.self_attn = SelfAttentionLayer(cfg.d_q, cfg.n_heads)
        self.ffn = FFN(cfg.d_q, cfg.d_hidden)

    def forward(self, embeddings: Tensor) -> Tensor:
        return self.ffn(self.self_attn(embeddings))


class GraspDecoder(_ImplicitHead):
    """Per-angle affordance logits and a gripper width for every (query, contact) pair."""

    def __init__(self, cfg: NetConfig):
        super().__init__(cfg, cfg.n_alpha + 1)
        self.w_max = cfg.w_max

    def forward(  # type: ignore[override]
        self, x: Tensor, embeddings: Tensor, anchors: Tensor, feats: Tensor
    ) -> Tuple[Tensor, Tensor]:
        """Affordance logits (Q, M, N_alpha) and widths (Q, M) in ``[0, w_max]``."""
        raw = super().forward(x, embeddings, anchors, feats)
        return raw[..., :-1], self.w_max * torch.sigmoid(raw[..., -1])
