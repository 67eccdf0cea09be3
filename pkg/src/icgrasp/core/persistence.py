"""Persistence of datasets and checkpoints.

Both formats are a magic string and a format version followed by named, length-prefixed,
little-endian array sections. Writing is deterministic, so reruns produce identical bytes.
"""

import json
import logging
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Any, BinaryIO, Dict, List, Tuple

import numpy as np

from ..fields.primitives import SceneGT
from ..geometry.cloud import PointCloud
from ..sim.camera import CameraPose
from ..sim.labels import GraspLabel, LabeledScene, OccupancySamples
from .errors import DataError

logger = logging.getLogger(__name__)

SCENE_MAGIC = b"ICGS"
SCENE_VERSION = 1
CHECKPOINT_MAGIC = b"ICGNCKPT"
CHECKPOINT_VERSION = 1
MANIFEST_NAME = "manifest.json"
MANIFEST_VERSION = 1

_COUNT = struct.Struct("<I")
_U16 = struct.Struct("<H")
_U8 = struct.Struct("<B")
_U64 = struct.Struct("<Q")

SCENE_SECTIONS = (
    "scene",
    "camera",
    "points",
    "normals",
    "instance_ids",
    "semantic_ids",
    "grasp_contacts",
    "grasp_normals",
    "grasp_success",
    "grasp_widths",
    "grasp_object_ids",
    "occupancy_points",
    "occupancy_labels",
    "occupancy_near",
)


def scene_file_name(index: int) -> str:
    return f"scene_{index:05d}.bin"


def _little_endian(arr: np.ndarray) -> np.ndarray:
    arr = np.ascontiguousarray(arr)
    if arr.dtype == np.bool_:
        return arr.astype(np.uint8)
    return arr.astype(arr.dtype.newbyteorder("<"), copy=False)


def _json_array(data: Any) -> np.ndarray:
    return np.frombuffer(json.dumps(data, sort_keys=True).encode("utf-8"), dtype=np.uint8)


def _json_value(arr: np.ndarray) -> Any:
    return json.loads(arr.tobytes().decode("utf-8"))


def write_sections(f: BinaryIO, sections: List[Tuple[str, np.ndarray]]) -> None:
    """Write ``(name, array)`` pairs: name, dtype, shape, byte length and data of each."""
    f.write(_COUNT.pack(len(sections)))
    for name, arr in sections:
        arr = _little_endian(arr)
        encoded = name.encode("utf-8")
        dtype = arr.dtype.str.encode("ascii")
        f.write(_U16.pack(len(encoded)) + encoded)
        f.write(_U8.pack(len(dtype)) + dtype)
        f.write(_U8.pack(arr.ndim))
        for dim in arr.shape:
            f.write(_U64.pack(dim))
        payload = arr.tobytes()
        f.write(_U64.pack(len(payload)))
        f.write(payload)


def _read_exact(f: BinaryIO, n: int, what: str) -> bytes:
    data = f.read(n)
    if len(data) != n:
        raise DataError(f"truncated record while reading {what}")
    return data


def read_sections(f: BinaryIO) -> Dict[str, np.ndarray]:
    """Read sections written by ``write_sections``, validating every length.

    Raises:
        DataError: On truncation, bad dtypes or inconsistent lengths
    """
    (n_sections,) = _COUNT.unpack(_read_exact(f, _COUNT.size, "section count"))
    sections: Dict[str, np.ndarray] = {}
    for _ in range(n_sections):
        (name_len,) = _U16.unpack(_read_exact(f, _U16.size, "name length"))
        name = _read_exact(f, name_len, "name").decode("utf-8")
        (dtype_len,) = _U8.unpack(_read_exact(f, _U8.size, f"{name} dtype"))
        try:
            dtype = np.dtype(_read_exact(f, dtype_len, f"{name} dtype").decode("ascii"))
        except TypeError as e:
            raise DataError(f"section {name}: bad dtype: {e}") from e
        (ndim,) = _U8.unpack(_read_exact(f, _U8.size, f"{name} rank"))
        shape = tuple(
            _U64.unpack(_read_exact(f, _U64.size, f"{name} shape"))[0] for _ in range(ndim)
        )
        (n_bytes,) = _U64.unpack(_read_exact(f, _U64.size, f"{name} length"))
        expected = int(np.prod(shape, dtype=np.int64)) * dtype.itemsize
        if n_bytes != expected:
            raise DataError(f"section {name}: {n_bytes} bytes for shape {shape} of {dtype}")
        payload = _read_exact(f, n_bytes, name)
        sections[name] = np.frombuffer(payload, dtype=dtype).reshape(shape)
    if f.read(1):
        raise DataError("trailing bytes after the last section")
    return sections


def _check_magic(f: BinaryIO, magic: bytes, version: int, what: str) -> None:
    found = f.read(len(magic))
    if found != magic:
        raise DataError(f"not a {what} file (magic {found!r})")
    (found_version,) = struct.unpack("<I", _read_exact(f, 4, "version"))
    if found_version != version:
        raise DataError(f"unsupported {what} version {found_version}, expected {version}")


def encode_scene(labeled: LabeledScene, n_alpha: int) -> List[Tuple[str, np.ndarray]]:
    """Sections of one labeled scene, in file order."""
    cloud = labeled.cloud
    n = len(cloud)
    normals = cloud.normals if cloud.normals is not None else np.zeros((n, 3))
    instance_ids = cloud.instance_ids if cloud.instance_ids is not None else np.full(n, -1)
    semantic_ids = cloud.semantic_ids if cloud.semantic_ids is not None else np.full(n, -1)
    grasps = labeled.grasp_arrays(n_alpha)
    occupancy = labeled.occupancy or OccupancySamples(
        np.zeros((0, 3)), np.zeros((0, labeled.scene.k), dtype=bool), np.zeros(0, dtype=bool)
    )
    return [
        ("scene", _json_array(labeled.scene.to_dict())),
        ("camera", _json_array(None if labeled.camera is None else labeled.camera.to_dict())),
        ("points", cloud.points.astype("<f8")),
        ("normals", normals.astype("<f8")),
        ("instance_ids", instance_ids.astype("<i8")),
        ("semantic_ids", semantic_ids.astype("<i8")),
        ("grasp_contacts", grasps["contacts"].astype("<f8")),
        ("grasp_normals", grasps["normals"].astype("<f8")),
        ("grasp_success", grasps["success"]),
        ("grasp_widths", grasps["widths"].astype("<f8")),
        ("grasp_object_ids", grasps["object_ids"].astype("<i8")),
        ("occupancy_points", occupancy.points.astype("<f8")),
        ("occupancy_labels", occupancy.labels.astype(bool)),
        ("occupancy_near", occupancy.near.astype(bool)),
    ]


def decode_scene(sections: Dict[str, np.ndarray], seed: int = 0) -> LabeledScene:
    """Rebuild a labeled scene, checking that all sections agree.

    Raises:
        DataError: If a section is missing or the lengths disagree
    """
    missing = [name for name in SCENE_SECTIONS if name not in sections]
    if missing:
        raise DataError(f"record lacks sections: {', '.join(missing)}")
    try:
        scene = SceneGT.from_dict(_json_value(sections["scene"]))
        camera_data = _json_value(sections["camera"])
    except (ValueError, KeyError) as e:
        raise DataError(f"bad scene description: {e}") from e

    n = len(sections["points"])
    for name in ("normals", "instance_ids", "semantic_ids"):
        if len(sections[name]) != n:
            raise DataError(f"section {name} has {len(sections[name])} rows for {n} points")
    n_grasps = len(sections["grasp_contacts"])
    for name in ("grasp_normals", "grasp_success", "grasp_widths", "grasp_object_ids"):
        if len(sections[name]) != n_grasps:
            raise DataError(
                f"section {name} has {len(sections[name])} rows for {n_grasps} contacts"
            )
    n_occ = len(sections["occupancy_points"])
    labels = sections["occupancy_labels"]
    if len(labels) != n_occ or len(sections["occupancy_near"]) != n_occ:
        raise DataError("occupancy sections disagree in length")
    if labels.ndim != 2 or labels.shape[1] != scene.k:
        raise DataError(f"occupancy labels of shape {labels.shape} for {scene.k} instances")

    cloud = PointCloud(
        sections["points"].astype(float),
        sections["normals"].astype(float),
        sections["instance_ids"].astype(np.int64),
        sections["semantic_ids"].astype(np.int64),
    )
    grasps = [
        GraspLabel(
            contact=sections["grasp_contacts"][i].astype(float),
            normal=sections["grasp_normals"][i].astype(float),
            success=sections["grasp_success"][i].astype(bool),
            width=float(sections["grasp_widths"][i]),
            object_id=int(sections["grasp_object_ids"][i]),
        )
        for i in range(n_grasps)
    ]
    occupancy = OccupancySamples(
        sections["occupancy_points"].astype(float),
        labels.astype(bool),
        sections["occupancy_near"].astype(bool),
    )
    camera = None if camera_data is None else CameraPose(**camera_data)
    return LabeledScene(scene, cloud, grasps, occupancy, camera, seed)


@dataclass
class DatasetStore:
    """A dataset directory: ``manifest.json`` plus one binary record per scene."""

    root: Path

    @property
    def manifest_path(self) -> Path:
        return self.root / MANIFEST_NAME

    def scene_path(self, index: int) -> Path:
        return self.root / scene_file_name(index)

    def write_scene(self, index: int, labeled: LabeledScene, n_alpha: int) -> Path:
        """Write one scene record.

        Raises:
            DataError: If the file cannot be written
        """
        path = self.scene_path(index)
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            with open(path, "wb") as f:
                f.write(SCENE_MAGIC)
                f.write(struct.pack("<I", SCENE_VERSION))
                write_sections(f, encode_scene(labeled, n_alpha))
        except OSError as e:
            raise DataError(f"cannot write {path}: {e}") from e
        return path

    def read_scene(self, index: int, seed: int = 0) -> LabeledScene:
        """Read and validate one scene record.

        Raises:
            DataError: If the record is missing or corrupt
        """
        path = self.scene_path(index)
        try:
            with open(path, "rb") as f:
                _check_magic(f, SCENE_MAGIC, SCENE_VERSION, "scene record")
                sections = read_sections(f)
        except OSError as e:
            raise DataError(f"cannot read {path}: {e}") from e
        except DataError as e:
            raise DataError(f"{path}: {e}") from e
        return decode_scene(sections, seed)

    def write_manifest(
        self, config: Dict[str, Any], seed: int, scenes: List[Dict[str, Any]]
    ) -> Path:
        """Write the manifest: format version, config echo, base seed and per-scene entries."""
        manifest = {
            "version": MANIFEST_VERSION,
            "config": config,
            "seed": seed,
            "n_scenes": len(scenes),
            "scenes": scenes,
        }
        try:
            self.root.mkdir(parents=True, exist_ok=True)
            text = json.dumps(manifest, indent=2, sort_keys=True) + "\n"
            self.manifest_path.write_text(text, encoding="utf-8")
        except OSError as e:
            raise DataError(f"cannot write {self.manifest_path}: {e}") from e
        return self.manifest_path

    def read_manifest(self) -> Dict[str, Any]:
        """Read and validate the manifest.

        Raises:
            DataError: If it is missing, unparsable or of another version
        """
        try:
            manifest = json.loads(self.manifest_path.read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise DataError(f"cannot read manifest {self.manifest_path}: {e}") from e
        if not isinstance(manifest, dict) or manifest.get("version") != MANIFEST_VERSION:
            raise DataError(f"unsupported manifest in {self.root}")
        if len(manifest.get("scenes", [])) != manifest.get("n_scenes"):
            raise DataError("manifest scene count does not match its entries")
        return manifest

    def load_all(self) -> List[LabeledScene]:
        """Every scene listed in the manifest, in index order."""
        manifest = self.read_manifest()
        return [self.read_scene(int(s["index"]), int(s["seed"])) for s in manifest["scenes"]]


def save_checkpoint(path: Path, tensors: Dict[str, np.ndarray], metadata: Dict[str, Any]) -> Path:
    """Write named parameter arrays and JSON metadata.

    Tensors are stored in sorted name order; reloading gives bit-identical arrays.

    Raises:
        DataError: If the file cannot be written
    """
    sections = [("__metadata__", _json_array(metadata))]
    sections += [(name, np.asarray(tensors[name])) for name in sorted(tensors)]
    try:
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, "wb") as f:
            f.write(CHECKPOINT_MAGIC)
            f.write(struct.pack("<I", CHECKPOINT_VERSION))
            write_sections(f, sections)
    except OSError as e:
        raise DataError(f"cannot write checkpoint {path}: {e}") from e
    logger.info("saved checkpoint", extra={"path": str(path), "tensors": len(tensors)})
    return path


def load_checkpoint(path: Path) -> Tuple[Dict[str, np.ndarray], Dict[str, Any]]:
    """Read a checkpoint.

    Returns:
        ``(tensors, metadata)``

    Raises:
        DataError: If the file is missing or corrupt
    """
    try:
        with open(path, "rb") as f:
            _check_magic(f, CHECKPOINT_MAGIC, CHECKPOINT_VERSION, "checkpoint")
            sections = read_sections(f)
    except OSError as e:
        raise DataError(f"cannot read checkpoint {path}: {e}") from e
    except DataError as e:
        raise DataError(f"{path}: {e}") from e
    if "__metadata__" not in sections:
        raise DataError(f"{path}: checkpoint has no metadata")
    try:
        metadata = _json_value(sections.pop("__metadata__"))
    except ValueError as e:
        raise DataError(f"{path}: bad checkpoint metadata: {e}") from e
    return {name: np.array(arr) for name, arr in sections.items()}, metadata
