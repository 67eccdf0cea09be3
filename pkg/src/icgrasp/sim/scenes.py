"""Synthetic primitive scenes: upright packed placement and quasi-static piles."""

import logging
from typing import List, Literal

import numpy as np
import trimesh
from scipy.spatial.transform import Rotation

from ..core.config import SceneConfig
from ..core.errors import GenerationError, InvalidArgumentError
from ..fields.primitives import CLASS_OF_KIND, Primitive, SceneGT

logger = logging.getLogger(__name__)

SceneKind = Literal["packed", "pile"]

MAX_OBJECTS = 8
SURFACE_SAMPLES = 256
DROP_STEPS = 400
DROP_TOLERANCE = 1e-4
PILE_SPREAD = 0.25


def surface_samples(p: Primitive, n: int, seed: int) -> np.ndarray:
    """Points sampled uniformly on a primitive's surface, plus its mesh vertices."""
    mesh = p.mesh()
    points, _ = trimesh.sample.sample_surface(mesh, n, seed=seed)
    return np.concatenate([np.asarray(points), np.asarray(mesh.vertices)])


def _random_size(kind: str, cfg: SceneConfig, rng: np.random.Generator) -> np.ndarray:
    if kind == "sphere":
        r = rng.uniform(*cfg.radius_range)
        return np.array([r, r, r])
    if kind == "box":
        return np.array(
            [
                rng.uniform(*cfg.half_extent_range),
                rng.uniform(*cfg.half_extent_range),
                rng.uniform(*cfg.box_half_height_range),
            ]
        )
    r = rng.uniform(*cfg.radius_range)
    return np.array([r, r, rng.uniform(*cfg.cylinder_height_range)])


def _separation(p: Primitive, others: List[Primitive], seed: int) -> float:
    """Smallest sampled surface distance between ``p`` and any of ``others`` (inf if none)."""
    if not others:
        return float("inf")
    mine = surface_samples(p, SURFACE_SAMPLES, seed)
    gap = min(float(o.sdf(mine).min()) for o in others)
    for o in others:
        theirs = surface_samples(o, SURFACE_SAMPLES, seed)
        gap = min(gap, float(p.sdf(theirs).min()))
    return gap


def _inside_workspace(p: Primitive, cfg: SceneConfig) -> bool:
    lo = np.asarray(cfg.workspace_min, dtype=float)
    hi = np.asarray(cfg.workspace_max, dtype=float)
    vertices = np.asarray(p.mesh().vertices)
    return bool(np.all(vertices >= lo - 1e-9) and np.all(vertices <= hi + 1e-9))


def _place_packed(
    kind: str, index: int, placed: List[Primitive], cfg: SceneConfig, rng: np.random.Generator
) -> Primitive:
    """An upright primitive resting on the table at a random xy and yaw."""
    size = _random_size(kind, cfg, rng)
    rotation = Rotation.from_euler("z", rng.uniform(0.0, 2 * np.pi)).as_matrix()
    lo = np.asarray(cfg.workspace_min, dtype=float) + cfg.placement_margin
    hi = np.asarray(cfg.workspace_max, dtype=float) - cfg.placement_margin
    xy = rng.uniform(lo[:2], hi[:2])
    p = Primitive(kind, rotation, np.array([xy[0], xy[1], 0.0]), size, CLASS_OF_KIND[kind], index)
    return p.moved(p.translation + np.array([0.0, 0.0, cfg.table_height - p.lowest_z()]))


def _drop(p: Primitive, settled: List[Primitive], table_height: float, seed: int) -> Primitive:
    """Lower a primitive along -z until it touches the table or a settled primitive.

    Sphere tracing on the settled primitives' signed distances, capped by the table gap.
    """
    local = surface_samples(p, SURFACE_SAMPLES, seed) - p.translation
    for _ in range(DROP_STEPS):
        step = p.lowest_z() - table_height
        if settled:
            world = local + p.translation
            step = min(step, min(float(o.sdf(world).min()) for o in settled))
        if step <= DROP_TOLERANCE:
            break
        p = p.moved(p.translation - np.array([0.0, 0.0, step - 0.5 * DROP_TOLERANCE]))
    return p


def _place_pile(
    kind: str, index: int, placed: List[Primitive], cfg: SceneConfig, rng: np.random.Generator
) -> Primitive:
    """A randomly oriented primitive released above the workspace center and dropped."""
    size = _random_size(kind, cfg, rng)
    rotation = Rotation.random(random_state=rng).as_matrix()
    center = np.asarray(cfg.workspace_min, dtype=float) + 0.5 * cfg.workspace_size
    spread = PILE_SPREAD * cfg.workspace_size
    xy = center[:2] + rng.uniform(-spread, spread, 2)
    p = Primitive(kind, rotation, np.array([xy[0], xy[1], 0.0]), size, CLASS_OF_KIND[kind], index)
    top = cfg.workspace_min[2] + cfg.workspace_size - p.bounding_radius()
    p = p.moved(np.array([xy[0], xy[1], max(top, cfg.table_height + p.bounding_radius())]))
    return _drop(p, placed, cfg.table_height, int(rng.integers(2**31)))


def generate_scene(kind: SceneKind, k: int, seed: int, cfg: SceneConfig = SceneConfig()) -> SceneGT:
    """Generate a scene of ``k`` primitives.

    Packed scenes place upright primitives on the table by rejection sampling until every
    pairwise surface gap is at least ``cfg.separation``. Pile scenes drop randomly oriented
    primitives one at a time (quasi-statically, no dynamics). Every primitive lies inside the
    workspace. The result is a pure function of the arguments.

    Args:
        kind: ``packed`` or ``pile``
        k: Number of primitives, 1 to 8
        seed: Random seed
        cfg: Scene parameters

    Returns:
        The ground-truth scene; instance ``i`` has object id ``i``

    Raises:
        InvalidArgumentError: If ``k`` or ``kind`` is out of range
        GenerationError: If placement fails ``cfg.max_attempts`` times
    """
    if not 1 <= k <= MAX_OBJECTS:
        raise InvalidArgumentError(f"k must be in [1, {MAX_OBJECTS}], got {k}")
    if kind not in ("packed", "pile"):
        raise InvalidArgumentError(f"unknown scene kind {kind!r}")

    rng = np.random.default_rng(seed)
    place = _place_packed if kind == "packed" else _place_pile
    min_gap = cfg.separation if kind == "packed" else 0.0
    placed: List[Primitive] = []
    attempts = 0
    while len(placed) < k:
        if attempts >= cfg.max_attempts:
            raise GenerationError(f"placed {len(placed)} of {k} primitives in {attempts} attempts")
        attempts += 1
        shape = str(rng.choice(cfg.shapes))
        candidate = place(shape, len(placed), placed, cfg, rng)
        if not _inside_workspace(candidate, cfg):
            continue
        if _separation(candidate, placed, int(rng.integers(2**31))) < min_gap:
            continue
        placed.append(candidate)

    logger.debug(
        "generated scene", extra={"kind": kind, "k": k, "seed": seed, "attempts": attempts}
    )
    return SceneGT(placed, cfg.workspace_min, cfg.workspace_size, cfg.table_height)
