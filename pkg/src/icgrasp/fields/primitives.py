"""Analytic primitives, ground-truth scenes and occupancy fields.

Every primitive is a convex solid in its own local frame: a sphere, a box (``size`` holds the
half extents) or a capped cylinder along local z (``size.x`` is the radius, ``size.z`` the full
height). Signed distances, outward normals and ray intersections are closed form.
"""

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
import trimesh

from ..core.config import SHAPE_KINDS
from ..core.errors import InvalidArgumentError
from ..geometry.grasp import GraspPose

CLASS_OF_KIND = {kind: i for i, kind in enumerate(SHAPE_KINDS)}
_EPS = 1e-12


@dataclass(frozen=True)
class Bounds:
    """Axis-aligned box."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self) -> None:
        lo = np.asarray(self.lo, dtype=float).reshape(3)
        hi = np.asarray(self.hi, dtype=float).reshape(3)
        if np.any(hi <= lo):
            raise InvalidArgumentError(f"degenerate bounds {lo} .. {hi}")
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)

    @classmethod
    def cube(cls, lo: Sequence[float], size: float) -> "Bounds":
        """Cube with lower corner ``lo`` and edge ``size``."""
        lo_arr = np.asarray(lo, dtype=float)
        return cls(lo_arr, lo_arr + size)

    @property
    def size(self) -> np.ndarray:
        return self.hi - self.lo

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)

    @property
    def volume(self) -> float:
        return float(np.prod(self.size))

    def sample(self, n: int, rng: np.random.Generator) -> np.ndarray:
        """Uniform samples inside the box."""
        return self.lo + rng.random((n, 3)) * self.size

    def to_dict(self) -> dict:
        """Convert to dictionary."""
        return {"lo": self.lo.tolist(), "hi": self.hi.tolist()}


@dataclass(frozen=True)
class Primitive:
    """A posed sphere, box or cylinder."""

    kind: str
    rotation: np.ndarray
    translation: np.ndarray
    size: np.ndarray
    class_id: int
    object_id: int = 0

    def __post_init__(self) -> None:
        if self.kind not in SHAPE_KINDS:
            raise InvalidArgumentError(f"unknown primitive kind {self.kind!r}")
        size = np.asarray(self.size, dtype=float).reshape(3)
        if self.kind == "sphere":
            size = np.full(3, size[0])
        elif self.kind == "cylinder":
            size = np.array([size[0], size[0], size[2]])
        if np.any(size <= 0):
            raise InvalidArgumentError(f"primitive sizes must be positive, got {size}")
        rotation = np.asarray(self.rotation, dtype=float).reshape(3, 3)
        orthonormal = np.allclose(rotation.T @ rotation, np.eye(3), atol=1e-9)
        if not orthonormal or np.linalg.det(rotation) < 0:
            raise InvalidArgumentError("primitive rotation must be a proper rotation")
        object.__setattr__(self, "size", size)
        object.__setattr__(self, "rotation", rotation)
        translation = np.asarray(self.translation, dtype=float).reshape(3)
        object.__setattr__(self, "translation", translation)

    @property
    def pose(self) -> GraspPose:
        return GraspPose(self.rotation, self.translation)

    @property
    def radius(self) -> float:
        return float(self.size[0])

    def to_local(self, x: np.ndarray) -> np.ndarray:
        """World points to the primitive frame."""
        return (np.asarray(x, dtype=float) - self.translation) @ self.rotation

    def sdf(self, x: np.ndarray) -> np.ndarray:
        """Exact signed distance of (N, 3) or (3,) world points."""
        q = self.to_local(x)
        if self.kind == "sphere":
            return np.linalg.norm(q, axis=-1) - self.size[0]
        if self.kind == "box":
            d = np.abs(q) - self.size
        else:
            d = np.stack(
                [
                    np.linalg.norm(q[..., :2], axis=-1) - self.size[0],
                    np.abs(q[..., 2]) - 0.5 * self.size[2],
                ],
                axis=-1,
            )
        outside = np.linalg.norm(np.maximum(d, 0.0), axis=-1)
        inside = np.minimum(d.max(axis=-1), 0.0)
        return outside + inside

    def normal(self, x: np.ndarray) -> np.ndarray:
        """Unit gradient of the signed distance (outward surface normal near the surface)."""
        q = np.atleast_2d(self.to_local(x))
        if self.kind == "sphere":
            g = q.copy()
        elif self.kind == "box":
            d = np.abs(q) - self.size
            out = np.maximum(d, 0.0)
            g = np.where((out > 0).any(axis=1, keepdims=True), out, 0.0)
            inner = ~(out > 0).any(axis=1)
            if inner.any():
                axis = d[inner].argmax(axis=1)
                g[inner, :] = 0.0
                g[np.flatnonzero(inner), axis] = 1.0
            g = g * np.where(q < 0, -1.0, 1.0)
        else:
            radial = np.linalg.norm(q[:, :2], axis=1)
            rdir = np.zeros_like(q)
            safe = radial > _EPS
            rdir[safe, :2] = q[safe, :2] / radial[safe, None]
            rdir[~safe, 0] = 1.0
            zdir = np.zeros_like(q)
            zdir[:, 2] = np.where(q[:, 2] < 0, -1.0, 1.0)
            d = np.stack([radial - self.size[0], np.abs(q[:, 2]) - 0.5 * self.size[2]], axis=1)
            out = np.maximum(d, 0.0)
            outside = (out > 0).any(axis=1)
            g = np.where(
                outside[:, None],
                out[:, :1] * rdir + out[:, 1:] * zdir,
                np.where((d[:, 0] >= d[:, 1])[:, None], rdir, zdir),
            )
        g = g / np.maximum(np.linalg.norm(g, axis=1, keepdims=True), _EPS)
        world = g @ self.rotation.T
        return world if np.ndim(x) > 1 else world[0]

    def intersect(
        self, origins: np.ndarray, directions: np.ndarray
    ) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        """Entry/exit ray parameters and the outward normals there.

        The solid is an intersection of convex components (slabs, a sphere, an infinite
        cylinder); the entry is the latest component entry and the exit the earliest exit.

        Args:
            origins: (N, 3) ray origins
            directions: (N, 3) unit ray directions

        Returns:
            ``(t_in, t_out, n_in, n_out)``; a ray misses when ``t_in > t_out``
        """
        o = np.atleast_2d(self.to_local(origins))
        d = np.atleast_2d(np.asarray(directions, dtype=float) @ self.rotation)
        n_rays = len(o)
        t_in = np.full(n_rays, -np.inf)
        t_out = np.full(n_rays, np.inf)
        n_in = np.zeros((n_rays, 3))
        n_out = np.zeros((n_rays, 3))

        def _merge(begin: np.ndarray, end: np.ndarray, nb: np.ndarray, ne: np.ndarray) -> None:
            later = begin > t_in
            t_in[later] = begin[later]
            n_in[later] = nb[later]
            earlier = end < t_out
            t_out[earlier] = end[earlier]
            n_out[earlier] = ne[earlier]

        def _slab(axis: int, half: float) -> None:
            slope = d[:, axis]
            flat = np.abs(slope) < _EPS
            safe = np.where(flat, 1.0, slope)
            t1 = (-half - o[:, axis]) / safe
            t2 = (half - o[:, axis]) / safe
            inside_slab = np.abs(o[:, axis]) <= half
            begin = np.where(flat, np.where(inside_slab, -np.inf, np.inf), np.minimum(t1, t2))
            end = np.where(flat, np.where(inside_slab, np.inf, -np.inf), np.maximum(t1, t2))
            unit = np.zeros((n_rays, 3))
            unit[:, axis] = np.where(slope > 0, 1.0, -1.0)
            _merge(begin, end, -unit, unit)

        if self.kind == "sphere":
            r = self.size[0]
            b = np.einsum("ij,ij->i", o, d)
            disc = b * b - (np.einsum("ij,ij->i", o, o) - r * r)
            hit = disc >= 0
            root = np.sqrt(np.where(hit, disc, 0.0))
            begin = np.where(hit, -b - root, np.inf)
            end = np.where(hit, -b + root, -np.inf)
            tb = np.where(hit, begin, 0.0)[:, None]
            te = np.where(hit, end, 0.0)[:, None]
            _merge(begin, end, (o + tb * d) / r, (o + te * d) / r)
        elif self.kind == "box":
            for axis in range(3):
                _slab(axis, self.size[axis])
        else:
            r = self.size[0]
            a = np.einsum("ij,ij->i", d[:, :2], d[:, :2])
            b = np.einsum("ij,ij->i", o[:, :2], d[:, :2])
            c = np.einsum("ij,ij->i", o[:, :2], o[:, :2]) - r * r
            parallel = a < _EPS
            disc = b * b - a * c
            hit = (disc >= 0) & ~parallel
            root = np.sqrt(np.where(hit, disc, 0.0))
            safe_a = np.where(parallel, 1.0, a)
            inside_wall = parallel & (c <= 0)
            begin = np.where(hit, (-b - root) / safe_a, np.where(inside_wall, -np.inf, np.inf))
            end = np.where(hit, (-b + root) / safe_a, np.where(inside_wall, np.inf, -np.inf))

            def _radial(t: np.ndarray) -> np.ndarray:
                p = o + np.where(np.isfinite(t), t, 0.0)[:, None] * d
                p[:, 2] = 0.0
                return p / r

            _merge(begin, end, _radial(begin), _radial(end))
            _slab(2, 0.5 * self.size[2])

        return t_in, t_out, n_in @ self.rotation.T, n_out @ self.rotation.T

    def lowest_z(self) -> float:
        """World z of the lowest point of the solid."""
        tz = self.translation[2]
        if self.kind == "sphere":
            return float(tz - self.size[0])
        if self.kind == "box":
            return float(tz - np.abs(self.rotation[2, :]) @ self.size)
        axis_z = abs(self.rotation[2, 2])
        radial = self.size[0] * np.sqrt(max(0.0, 1.0 - axis_z**2))
        return float(tz - radial - 0.5 * self.size[2] * axis_z)

    def bounding_radius(self) -> float:
        """Radius of a sphere about the translation enclosing the solid."""
        if self.kind == "sphere":
            return float(self.size[0])
        if self.kind == "box":
            return float(np.linalg.norm(self.size))
        return float(np.hypot(self.size[0], 0.5 * self.size[2]))

    def moved(self, translation: np.ndarray) -> "Primitive":
        """Copy at a new translation."""
        return Primitive(
            self.kind, self.rotation, translation, self.size, self.class_id, self.object_id
        )

    def mesh(self) -> trimesh.Trimesh:
        """Triangulated surface in the world frame."""
        if self.kind == "sphere":
            m = trimesh.creation.icosphere(subdivisions=4, radius=self.size[0])
        elif self.kind == "box":
            m = trimesh.creation.box(extents=2.0 * self.size)
        else:
            m = trimesh.creation.cylinder(radius=self.size[0], height=self.size[2], sections=64)
        transform = np.eye(4)
        transform[:3, :3] = self.rotation
        transform[:3, 3] = self.translation
        m.apply_transform(transform)
        return m

    def to_dict(self) -> dict:
        """Convert to dictionary."""
        return {
            "kind": self.kind,
            "rotation": self.rotation.tolist(),
            "translation": self.translation.tolist(),
            "size": self.size.tolist(),
            "class_id": self.class_id,
            "object_id": self.object_id,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Primitive":
        """Create from dictionary."""
        return cls(
            kind=data["kind"],
            rotation=np.asarray(data["rotation"]),
            translation=np.asarray(data["translation"]),
            size=np.asarray(data["size"]),
            class_id=int(data["class_id"]),
            object_id=int(data.get("object_id", 0)),
        )


def sdf(p: Primitive, x: Sequence[float]) -> float:
    """Signed distance of a single point to a primitive."""
    return float(p.sdf(np.asarray(x, dtype=float)))


@dataclass(frozen=True)
class SceneGT:
    """Ground-truth primitives on a table inside a cubic workspace.

    Instance ids are positions in ``primitives``.
    """

    primitives: List[Primitive]
    workspace_min: np.ndarray = field(default_factory=lambda: np.zeros(3))
    workspace_size: float = 0.3
    table_height: float = 0.0

    def __post_init__(self) -> None:
        object.__setattr__(self, "primitives", list(self.primitives))
        workspace_min = np.asarray(self.workspace_min, dtype=float).reshape(3)
        object.__setattr__(self, "workspace_min", workspace_min)

    @property
    def k(self) -> int:
        return len(self.primitives)

    @property
    def bounds(self) -> Bounds:
        return Bounds.cube(self.workspace_min, self.workspace_size)

    def sdf_all(self, x: np.ndarray) -> np.ndarray:
        """(N, K) signed distances of world points to every primitive."""
        pts = np.atleast_2d(np.asarray(x, dtype=float))
        if not self.primitives:
            return np.zeros((len(pts), 0))
        return np.stack([p.sdf(pts) for p in self.primitives], axis=1)

    def without(self, instance: int) -> "SceneGT":
        """Copy with one primitive removed (later instance ids shift down)."""
        if not 0 <= instance < self.k:
            raise InvalidArgumentError(f"instance {instance} out of range for {self.k} primitives")
        rest = self.primitives[:instance] + self.primitives[instance + 1:]
        return SceneGT(rest, self.workspace_min, self.workspace_size, self.table_height)

    def mesh(self, instance: Optional[int] = None) -> trimesh.Trimesh:
        """Ground-truth mesh of one instance or of the whole scene."""
        if instance is not None:
            return self.primitives[instance].mesh()
        return trimesh.util.concatenate([p.mesh() for p in self.primitives])

    def to_dict(self) -> dict:
        """Convert to dictionary."""
        return {
            "primitives": [p.to_dict() for p in self.primitives],
            "workspace_min": self.workspace_min.tolist(),
            "workspace_size": self.workspace_size,
            "table_height": self.table_height,
        }

    @classmethod
    def from_dict(cls, data: dict) -> "SceneGT":
        """Create from dictionary."""
        return cls(
            primitives=[Primitive.from_dict(p) for p in data["primitives"]],
            workspace_min=np.asarray(data["workspace_min"]),
            workspace_size=float(data["workspace_size"]),
            table_height=float(data["table_height"]),
        )


class OccupancyField:
    """Per-instance occupancy probabilities, evaluated in batches.

    Wraps an evaluator mapping (N, 3) points to (N, K) values in ``[0, 1]``.
    """

    def __init__(self, evaluator: Callable[[np.ndarray], np.ndarray], k: int):
        self._evaluator = evaluator
        self.k = k

    def __call__(self, x: np.ndarray) -> np.ndarray:
        """Evaluate at (3,) or (N, 3) points; returns (K,) or (N, K)."""
        arr = np.asarray(x, dtype=float)
        pts = np.atleast_2d(arr)
        values = np.asarray(self._evaluator(pts), dtype=float).reshape(len(pts), self.k)
        return values if arr.ndim > 1 else values[0]

    def instance(self, index: int) -> Callable[[np.ndarray], np.ndarray]:
        """Scalar field of a single instance."""
        if not 0 <= index < self.k:
            raise InvalidArgumentError(f"instance {index} out of range for {self.k} instances")
        return lambda x: self(np.atleast_2d(x))[:, index]

    def excluding(self, index: int) -> "OccupancyField":
        """Field over the remaining instances."""
        keep = [i for i in range(self.k) if i != index]
        return OccupancyField(lambda x: self(x)[:, keep], len(keep))

    def scene(self) -> Callable[[np.ndarray], np.ndarray]:
        """Scalar scene field: the max over instances."""
        return lambda x: scene_occupancy(self, x)


def gt_field(scene: SceneGT) -> OccupancyField:
    """Hard per-instance occupancy of a ground-truth scene: 1 where sdf <= 0."""
    return OccupancyField(lambda x: (scene.sdf_all(x) <= 0).astype(float), scene.k)


def scene_occupancy(field: OccupancyField, x: np.ndarray) -> np.ndarray:
    """Max over instances; 0 for a field without instances."""
    values = field(np.atleast_2d(x))
    out = values.max(axis=1) if field.k else np.zeros(len(values))
    return out if np.ndim(x) > 1 else out[0]


def constant_field(value: float, k: int = 1) -> OccupancyField:
    """Field with the same value everywhere."""
    return OccupancyField(lambda x: np.full((len(x), k), float(value)), k)
