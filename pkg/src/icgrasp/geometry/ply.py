"""PLY point cloud I/O with instance and semantic id properties."""

import logging
from pathlib import Path
from typing import Optional

import numpy as np
from plyfile import PlyData, PlyElement, PlyParseError

from ..core.errors import DataError
from .cloud import PointCloud

logger = logging.getLogger(__name__)


def instance_colors(ids: np.ndarray) -> np.ndarray:
    """Deterministic RGB palette per integer id; negative ids (table) are gray."""
    ids = np.asarray(ids, dtype=np.int64)
    # golden-ratio hue stepping gives well separated colors for small ids
    hue = (ids * 0.618033988749895) % 1.0
    h6 = hue * 6.0
    x = 1.0 - np.abs(h6 % 2.0 - 1.0)
    sector = np.floor(h6).astype(int) % 6
    table = np.array(
        [[1, 0, 0], [0, 1, 0], [0, 0, 1], [0, 0, 1], [0, 1, 0], [1, 0, 0]], dtype=float
    )
    other = np.array(
        [[0, 1, 0], [1, 0, 0], [0, 1, 0], [1, 0, 0], [0, 0, 1], [0, 0, 1]], dtype=float
    )
    rgb = table[sector] + other[sector] * x[:, None]
    rgb = np.where((ids < 0)[:, None], 0.5, rgb)
    return (rgb * 255).round().astype(np.uint8)


def write_cloud(
    pc: PointCloud, path: Path, text: bool = False, colors: Optional[np.ndarray] = None
) -> Path:
    """Write a point cloud as PLY.

    Args:
        pc: Cloud to write; optional arrays become optional properties
        path: Output file
        text: ASCII instead of binary little-endian
        colors: Optional (N, 3) uint8 colors

    Returns:
        The written path
    """
    dtype = [("x", "f8"), ("y", "f8"), ("z", "f8")]
    columns = [pc.points[:, 0], pc.points[:, 1], pc.points[:, 2]]
    if pc.normals is not None:
        dtype += [("nx", "f8"), ("ny", "f8"), ("nz", "f8")]
        columns += [pc.normals[:, 0], pc.normals[:, 1], pc.normals[:, 2]]
    if pc.instance_ids is not None:
        dtype.append(("instance_id", "i4"))
        columns.append(pc.instance_ids)
    if pc.semantic_ids is not None:
        dtype.append(("semantic_id", "i4"))
        columns.append(pc.semantic_ids)
    if colors is not None:
        dtype += [("red", "u1"), ("green", "u1"), ("blue", "u1")]
        columns += [colors[:, 0], colors[:, 1], colors[:, 2]]

    vertex = np.empty(len(pc), dtype=dtype)
    for (name, _), column in zip(dtype, columns):
        vertex[name] = column

    path.parent.mkdir(parents=True, exist_ok=True)
    PlyData([PlyElement.describe(vertex, "vertex")], text=text, byte_order="<").write(str(path))
    return path


def read_cloud(path: Path) -> PointCloud:
    """Read a PLY point cloud written by ``write_cloud`` or any tool with x/y/z vertices.

    Raises:
        DataError: If the file is missing, unparsable or has no vertex coordinates
    """
    try:
        ply = PlyData.read(str(path))
    except (OSError, PlyParseError, ValueError) as e:
        raise DataError(f"cannot read point cloud {path}: {e}") from e

    if "vertex" not in [el.name for el in ply.elements]:
        raise DataError(f"{path} has no vertex element")
    vertex = ply["vertex"]
    names = set(vertex.data.dtype.names or ())
    if not {"x", "y", "z"} <= names:
        raise DataError(f"{path} vertices lack x/y/z")

    points = np.stack([vertex["x"], vertex["y"], vertex["z"]], axis=1).astype(float)
    normals = None
    if {"nx", "ny", "nz"} <= names:
        normals = np.stack([vertex["nx"], vertex["ny"], vertex["nz"]], axis=1).astype(float)
    instance_ids = np.asarray(vertex["instance_id"]) if "instance_id" in names else None
    semantic_ids = np.asarray(vertex["semantic_id"]) if "semantic_id" in names else None
    logger.debug("read %d points from %s", len(points), path)
    return PointCloud(points, normals, instance_ids, semantic_ids)
