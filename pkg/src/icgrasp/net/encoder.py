"""Sparse surface-token and dense volume encoders, and token aggregation."""

from dataclasses import dataclass
from typing import Tuple

import numpy as np
import torch
from scipy.spatial import cKDTree
from torch import Tensor, nn

from ..core.config import NetConfig
from ..core.errors import InvalidArgumentError

NEIGHBOR_RADIUS = np.sqrt(3.0) + 1e-6


@dataclass
class SparseTokens:
    """Features of occupied fine voxels.

    Attributes:
        coords: (T, 3) voxel centers in meters
        feats: (T, d) features
        point_index: (N,) token of every input point
    """

    coords: Tensor
    feats: Tensor
    point_index: np.ndarray

    def __len__(self) -> int:
        return len(self.coords)


@dataclass
class DenseGrid:
    """Features on a regular grid.

    Cell ``(i, j, k)`` is centered at ``origin + (ijk + 0.5) * cell``.

    ``feats`` is laid out ``(nx, ny, nz, d)``.
    """

    origin: Tensor
    cell: float
    feats: Tensor

    @property
    def dims(self) -> Tuple[int, int, int]:
        nx, ny, nz, _ = self.feats.shape
        return nx, ny, nz

    @property
    def flat(self) -> Tensor:
        """(nx * ny * nz, d) rows in linear-index order ``(ix * ny + iy) * nz + iz``."""
        return self.feats.reshape(-1, self.feats.shape[-1])

    def cell_centers(self) -> Tensor:
        axes = [torch.arange(n, dtype=self.origin.dtype) for n in self.dims]
        grid = torch.stack(torch.meshgrid(*axes, indexing="ij"), dim=-1)
        return self.origin + (grid + 0.5) * self.cell

    def nearest_cell(self, x: Tensor) -> Tensor:
        """Linear index of the nearest cell center, clamped into the grid.

        A point halfway between two centers goes to the lower cell.
        """
        u = (x - self.origin) / self.cell - 0.5
        dims = torch.tensor(self.dims, dtype=torch.long)
        idx = torch.ceil(u - 0.5).long()
        idx = torch.minimum(torch.clamp(idx, min=0), dims - 1)
        return (idx[:, 0] * dims[1] + idx[:, 1]) * dims[2] + idx[:, 2]


def voxelize(points: np.ndarray, cell: float) -> Tuple[np.ndarray, np.ndarray]:
    """Unique voxel keys (sorted) and the voxel of every point."""
    keys = np.floor(points / cell).astype(np.int64)
    unique, inverse = np.unique(keys, axis=0, return_inverse=True)
    return unique, inverse.reshape(-1)


def voxel_neighbors(keys: np.ndarray) -> np.ndarray:
    """Directed (i, j) pairs of distinct voxels in each other's 26-neighborhood."""
    pairs = cKDTree(keys.astype(float)).query_pairs(NEIGHBOR_RADIUS, output_type="ndarray")
    if len(pairs) == 0:
        return np.zeros((0, 2), dtype=np.int64)
    return np.concatenate([pairs, pairs[:, ::-1]]).astype(np.int64)


class SparseEncoder(nn.Module):
    """Per-voxel point MLP with mean pooling, then rounds of neighborhood message passing."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.cell = cfg.sparse_cell
        self.point_mlp = nn.Sequential(
            nn.Linear(3, cfg.d_s), nn.ReLU(), nn.Linear(cfg.d_s, cfg.d_s)
        )
        self.self_layers = nn.ModuleList(
            [nn.Linear(cfg.d_s, cfg.d_s) for _ in range(cfg.message_rounds)]
        )
        self.message_layers = nn.ModuleList(
            [nn.Linear(cfg.d_s + 3, cfg.d_s) for _ in range(cfg.message_rounds)]
        )

    def forward(self, points: np.ndarray) -> SparseTokens:
        dtype = self.point_mlp[0].weight.dtype
        keys, inverse = voxelize(points, self.cell)
        centers = (keys + 0.5) * self.cell
        offsets = torch.as_tensor((points - centers[inverse]) / self.cell, dtype=dtype)
        index = torch.as_tensor(inverse)

        per_point = self.point_mlp(offsets)
        feats = torch.zeros(len(keys), per_point.shape[1], dtype=dtype)
        feats = feats.index_add(0, index, per_point)
        counts = torch.bincount(index, minlength=len(keys)).to(dtype)
        feats = feats / counts[:, None]

        pairs = voxel_neighbors(keys)
        if len(pairs):
            src = torch.as_tensor(pairs[:, 1])
            dst = torch.as_tensor(pairs[:, 0])
            rel = torch.as_tensor(keys[pairs[:, 1]] - keys[pairs[:, 0]], dtype=dtype)
            degree = torch.bincount(dst, minlength=len(keys)).clamp(min=1).to(dtype)
        for self_layer, message_layer in zip(self.self_layers, self.message_layers):
            update = self_layer(feats)
            if len(pairs):
                messages = message_layer(torch.cat([feats[src], rel], dim=1))
                pooled = torch.zeros_like(feats).index_add(0, dst, messages) / degree[:, None]
                update = update + pooled
            feats = feats + torch.relu(update)

        return SparseTokens(torch.as_tensor(centers, dtype=dtype), feats, inverse)


class DenseEncoder(nn.Module):
    """Three-level volumetric encoder-decoder over point counts.

    Levels widen the receptive field with dilation instead of striding and pad by replication,
    so a whole-cell translation of the input translates the output away from the border.
    """

    DILATIONS = (1, 2, 4)

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.dims = cfg.dense_dims
        self.cell = cfg.workspace_size / cfg.dense_dims
        self.origin = np.asarray(cfg.workspace_min, dtype=float)
        c = cfg.d_v

        def conv(cin: int, cout: int, dilation: int = 1, kernel: int = 3) -> nn.Conv3d:
            pad = dilation * (kernel // 2)
            return nn.Conv3d(
                cin, cout, kernel, padding=pad, dilation=dilation, padding_mode="replicate"
            )

        self.levels = nn.ModuleList(
            [conv(1 if i == 0 else c, c, d) for i, d in enumerate(self.DILATIONS)]
        )
        self.up = nn.ModuleList([conv(2 * c, c, kernel=1), conv(2 * c, c, kernel=1)])

    @property
    def receptive_radius(self) -> int:
        """Cells within which the border padding can influence a cell's output."""
        return sum(self.DILATIONS)

    def counts(self, points: np.ndarray) -> np.ndarray:
        """Points per cell (points outside the grid are dropped)."""
        idx = np.floor((points - self.origin) / self.cell).astype(np.int64)
        inside = np.all((idx >= 0) & (idx < self.dims), axis=1)
        grid = np.zeros((self.dims,) * 3)
        np.add.at(grid, tuple(idx[inside].T), 1.0)
        return grid

    def forward(self, points: np.ndarray) -> DenseGrid:
        dtype = self.up[0].weight.dtype
        x = torch.as_tensor(np.log1p(self.counts(points)), dtype=dtype)[None, None]
        skips = []
        for level in self.levels:
            x = torch.relu(level(x))
            skips.append(x)
        x = skips[-1]
        for up, skip in zip(self.up, reversed(skips[:-1])):
            x = torch.relu(up(torch.cat([x, skip], dim=1)))
        feats = x[0].permute(1, 2, 3, 0)
        return DenseGrid(torch.as_tensor(self.origin, dtype=dtype), self.cell, feats)


class Encoder(nn.Module):
    """Sparse and dense encoders run on the same cloud."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.sparse = SparseEncoder(cfg)
        self.dense = DenseEncoder(cfg)

    def forward(self, points: np.ndarray) -> Tuple[SparseTokens, DenseGrid]:
        points = np.asarray(points, dtype=float).reshape(-1, 3)
        if len(points) == 0:
            raise InvalidArgumentError("cannot encode an empty point cloud")
        return self.sparse(points), self.dense(points)


class TokenAggregator(nn.Module):
    """Concatenates each token with its nearest dense cell and projects to the query width."""

    def __init__(self, cfg: NetConfig):
        super().__init__()
        self.proj = nn.Linear(cfg.d_s + cfg.d_v, cfg.d_q)

    def forward(self, sp: SparseTokens, dg: DenseGrid) -> SparseTokens:
        cells = dg.nearest_cell(sp.coords)
        feats = self.proj(torch.cat([sp.feats, dg.flat[cells]], dim=1))
        return SparseTokens(sp.coords, feats, sp.point_index)

