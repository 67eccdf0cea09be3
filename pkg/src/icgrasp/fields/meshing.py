"""Iso-surface extraction, triangle meshes and field grid export."""

import json
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Tuple

import numpy as np
import trimesh
from scipy import ndimage
from skimage import measure

from ..core.errors import DataError, InvalidArgumentError
from .primitives import Bounds

logger = logging.getLogger(__name__)

ScalarField = Callable[[np.ndarray], np.ndarray]

CHUNK = 65536


@dataclass(frozen=True)
class TriangleMesh:
    """Vertices and triangle index triples."""

    vertices: np.ndarray
    triangles: np.ndarray

    def __post_init__(self) -> None:
        vertices = np.asarray(self.vertices, dtype=float).reshape(-1, 3)
        triangles = np.asarray(self.triangles, dtype=np.int64).reshape(-1, 3)
        if len(triangles) and (triangles.min() < 0 or triangles.max() >= len(vertices)):
            raise InvalidArgumentError("triangle index out of range")
        object.__setattr__(self, "vertices", vertices)
        object.__setattr__(self, "triangles", triangles)

    @classmethod
    def empty(cls) -> "TriangleMesh":
        return cls(np.zeros((0, 3)), np.zeros((0, 3), dtype=np.int64))

    @classmethod
    def from_trimesh(cls, mesh: trimesh.Trimesh) -> "TriangleMesh":
        return cls(np.asarray(mesh.vertices), np.asarray(mesh.faces))

    @property
    def is_empty(self) -> bool:
        return len(self.triangles) == 0

    def to_trimesh(self) -> trimesh.Trimesh:
        """View as a trimesh (no vertex merging)."""
        return trimesh.Trimesh(self.vertices, self.triangles, process=False)

    @property
    def area(self) -> float:
        return 0.0 if self.is_empty else float(self.to_trimesh().area)

    def edges(self) -> Tuple[np.ndarray, np.ndarray]:
        """Unique undirected edges and how many triangles share each."""
        e = np.sort(self.triangles[:, [0, 1, 1, 2, 2, 0]].reshape(-1, 2), axis=1)
        return np.unique(e, axis=0, return_counts=True)

    def euler_characteristic(self) -> int:
        """V - E + F over referenced vertices."""
        if self.is_empty:
            return 0
        edges, _ = self.edges()
        return len(np.unique(self.triangles)) - len(edges) + len(self.triangles)

    def is_closed(self) -> bool:
        """Every edge shared by exactly two triangles."""
        return not self.is_empty and bool(np.all(self.edges()[1] == 2))

    def export(self, path: Path, file_type: str = "obj") -> Path:
        """Write as OBJ or binary PLY."""
        if file_type not in ("obj", "ply"):
            raise InvalidArgumentError(f"unsupported mesh format {file_type!r}")
        path.parent.mkdir(parents=True, exist_ok=True)
        self.to_trimesh().export(str(path), file_type=file_type)
        return path


def load_mesh(path: Path) -> TriangleMesh:
    """Read an OBJ or PLY mesh.

    Raises:
        DataError: If the file cannot be read as a triangle mesh
    """
    try:
        mesh = trimesh.load(str(path), force="mesh", process=False)
    except (OSError, ValueError) as e:
        raise DataError(f"cannot read mesh {path}: {e}") from e
    return TriangleMesh.from_trimesh(mesh)


def grid_axes(bounds: Bounds, resolution: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Node coordinates of a ``resolution``-per-axis grid spanning ``bounds``."""
    x, y, z = (np.linspace(bounds.lo[i], bounds.hi[i], resolution) for i in range(3))
    return x, y, z


def evaluate(field: ScalarField, points: np.ndarray) -> np.ndarray:
    """Evaluate a scalar field in fixed-size chunks."""
    out = np.empty(len(points))
    for start in range(0, len(points), CHUNK):
        out[start:start + CHUNK] = field(points[start:start + CHUNK])
    return out


def sample_grid(field: ScalarField, bounds: Bounds, resolution: int) -> np.ndarray:
    """Field values on the node grid, indexed ``[ix, iy, iz]``."""
    xs, ys, zs = grid_axes(bounds, resolution)
    nodes = np.stack(np.meshgrid(xs, ys, zs, indexing="ij"), axis=-1).reshape(-1, 3)
    return evaluate(field, nodes).reshape(resolution, resolution, resolution)


def _upsample(volume: np.ndarray) -> np.ndarray:
    """Insert linearly interpolated midpoints along every axis."""
    for axis in range(3):
        v = np.moveaxis(volume, axis, 0)
        out = np.empty((2 * len(v) - 1,) + v.shape[1:])
        out[0::2] = v
        out[1::2] = 0.5 * (v[:-1] + v[1:])
        volume = np.moveaxis(out, 0, axis)
    return volume


def _crossing_cells(volume: np.ndarray, iso: float) -> np.ndarray:
    corners = [
        volume[a:volume.shape[0] - 1 + a, b:volume.shape[1] - 1 + b, c:volume.shape[2] - 1 + c]
        for a in (0, 1)
        for b in (0, 1)
        for c in (0, 1)
    ]
    stack = np.stack(corners)
    return (stack.min(axis=0) <= iso) & (stack.max(axis=0) > iso)


def refine_volume(field: ScalarField, bounds: Bounds, coarse: np.ndarray, iso: float) -> np.ndarray:
    """One subdivision pass: halve the spacing, re-evaluating only around sign-crossing cells.

    Nodes away from the surface take the linear interpolation of the coarse grid, which stays
    on the same side of ``iso``.
    """
    fine = _upsample(coarse)
    cells = ndimage.binary_dilation(_crossing_cells(coarse, iso), iterations=1)
    mask = np.zeros(fine.shape, dtype=bool)
    ci, cj, ck = np.nonzero(cells)
    for a in range(3):
        for b in range(3):
            for c in range(3):
                mask[2 * ci + a, 2 * cj + b, 2 * ck + c] = True
    idx = np.argwhere(mask)
    if len(idx):
        spacing = bounds.size / (np.array(fine.shape) - 1)
        fine[mask] = evaluate(field, bounds.lo + idx * spacing)
    return fine


def marching_cubes(
    field: ScalarField, bounds: Bounds, resolution: int, iso: float = 0.5, refine: bool = True
) -> TriangleMesh:
    """Triangulate the ``iso`` level set of a field that is larger inside.

    The coarse ``resolution``-per-axis grid is refined once around the surface, padded with an
    outside value so surfaces touching the bounds are closed off, and triangulated with
    linearly interpolated edge vertices. Zero-area triangles are removed.

    Args:
        field: Maps (N, 3) points to (N,) values
        bounds: Region to mesh
        resolution: Coarse nodes per axis, >= 2
        iso: Iso value
        refine: Run the subdivision pass

    Returns:
        The mesh; empty when the field never crosses ``iso``
    """
    if resolution < 2:
        raise InvalidArgumentError(f"resolution must be >= 2, got {resolution}")
    volume = sample_grid(field, bounds, resolution)
    if not (volume.min() <= iso < volume.max()):
        return TriangleMesh.empty()
    if refine:
        volume = refine_volume(field, bounds, volume, iso)

    spacing = bounds.size / (np.array(volume.shape) - 1)
    padded = np.pad(volume, 1, mode="constant", constant_values=min(volume.min(), iso) - 1.0)
    verts, faces, _, _ = measure.marching_cubes(padded, level=iso, spacing=tuple(spacing))
    verts = verts - spacing + bounds.lo

    mesh = trimesh.Trimesh(verts, faces, process=True)
    mesh.update_faces(mesh.nondegenerate_faces())
    mesh.remove_unreferenced_vertices()
    logger.debug("meshed %d vertices, %d triangles", len(mesh.vertices), len(mesh.faces))
    return TriangleMesh.from_trimesh(mesh)


def export_field_grid(field: ScalarField, bounds: Bounds, resolution: int, path: Path) -> Path:
    """Write field values as raw little-endian float32 plus a JSON sidecar.

    Values are ordered x-fastest, then y, then z.

    Returns:
        Path of the sidecar
    """
    volume = sample_grid(field, bounds, resolution)
    path.parent.mkdir(parents=True, exist_ok=True)
    # [ix, iy, iz] transposed to [iz, iy, ix] makes x the fastest axis in C order
    path.write_bytes(np.ascontiguousarray(volume.transpose(2, 1, 0)).astype("<f4").tobytes())
    sidecar = path.with_suffix(".json")
    sidecar.write_text(
        json.dumps(
            {
                "dims": [resolution] * 3,
                "bounds": bounds.to_dict(),
                "dtype": "float32",
                "byte_order": "little",
                "ordering": "x-fastest",
            },
            indent=2,
        ),
        encoding="utf-8",
    )
    return sidecar


def load_field_grid(path: Path) -> Tuple[np.ndarray, Bounds]:
    """Read a grid written by ``export_field_grid``; returns values indexed ``[ix, iy, iz]``."""
    try:
        meta = json.loads(path.with_suffix(".json").read_text(encoding="utf-8"))
        raw = np.frombuffer(path.read_bytes(), dtype="<f4")
    except (OSError, json.JSONDecodeError) as e:
        raise DataError(f"cannot read field grid {path}: {e}") from e
    nx, ny, nz = meta["dims"]
    if raw.size != nx * ny * nz:
        raise DataError(f"{path}: expected {nx * ny * nz} values, found {raw.size}")
    bounds = Bounds(np.asarray(meta["bounds"]["lo"]), np.asarray(meta["bounds"]["hi"]))
    return raw.reshape(nz, ny, nx).transpose(2, 1, 0).astype(float), bounds
