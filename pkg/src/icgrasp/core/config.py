"""Validated configuration models.

Every value object that parameterizes an operation lives here. Run configs (one per CLI
subcommand) are loaded from JSON files and reject unknown keys.
"""

import json
import math
from pathlib import Path
from typing import Any, Dict, Literal, Optional, Tuple, Type, TypeVar, Union

from pydantic import BaseModel, ConfigDict, Field, ValidationError, field_validator, model_validator

from .errors import ConfigError
from .settings import settings

Vec3Tuple = Tuple[float, float, float]

SHAPE_KINDS = ("sphere", "box", "cylinder")
CLASS_NAMES = ("sphere", "box", "cylinder", "other")


class _Frozen(BaseModel):
    """Immutable config value rejecting unknown keys."""

    model_config = ConfigDict(extra="forbid", frozen=True)


class GraspConfig(_Frozen):
    """Contact-grasp discretization and gripper limits."""

    n_alpha: int = Field(12, ge=2)
    w_max: float = Field(0.08, gt=0.0)
    gravity: Vec3Tuple = (0.0, 0.0, -1.0)
    singularity_threshold: float = Field(0.98, gt=0.0, lt=1.0)

    @field_validator("gravity")
    @classmethod
    def _unit_gravity(cls, value: Vec3Tuple) -> Vec3Tuple:
        norm = math.sqrt(sum(c * c for c in value))
        if abs(norm - 1.0) > 1e-9:
            raise ValueError(f"gravity must be a unit vector, got norm {norm}")
        return value


class AugmentConfig(_Frozen):
    """Observation augmentations applied to training clouds."""

    noise_sigma: float = Field(0.002, ge=0.0)
    erase_cell: float = Field(0.02, gt=0.0)
    erase_prob: float = Field(0.2, ge=0.0, le=1.0)
    elastic: bool = True
    rotate: bool = True
    elastic_cells: int = Field(4, ge=2)
    elastic_sigma: float = Field(0.005, ge=0.0)
    elastic_clip: float = Field(0.01, ge=0.0)
    rotation_center: Tuple[float, float] = (0.15, 0.15)
    seed: int = 0


class NetConfig(_Frozen):
    """Sizes of the instance network."""

    n_queries: int = Field(32, ge=1)
    d_s: int = Field(32, ge=1)
    d_v: int = Field(32, ge=1)
    d_q: int = Field(64, ge=1)
    d_i: int = Field(32, ge=1)
    d_hidden: int = Field(64, ge=1)
    n_decoder_blocks: int = Field(3, ge=1)
    n_refine_rounds: int = Field(3, ge=1)
    n_heads: int = Field(4, ge=1)
    knn_k: int = Field(8, ge=1)
    fourier_freqs: int = Field(6, ge=1)
    n_alpha: int = Field(12, ge=2)
    n_classes: int = Field(4, ge=1)
    w_max: float = Field(0.08, gt=0.0)
    sparse_cell: float = Field(0.005, gt=0.0)
    message_rounds: int = Field(2, ge=0)
    dense_dims: int = Field(16, ge=1)
    workspace_min: Vec3Tuple = (0.0, 0.0, 0.0)
    workspace_size: float = Field(0.3, gt=0.0)
    seed: int = 0

    @model_validator(mode="after")
    def _heads_divide_query_dim(self) -> "NetConfig":
        if self.d_q % self.n_heads != 0:
            raise ValueError(f"d_q={self.d_q} must be divisible by n_heads={self.n_heads}")
        return self

    @property
    def no_object_class(self) -> int:
        """Index of the no-object class in the classifier output."""
        return self.n_classes


class SceneConfig(_Frozen):
    """Synthetic scene, camera and label sampling parameters."""

    workspace_min: Vec3Tuple = (0.0, 0.0, 0.0)
    workspace_size: float = Field(0.3, gt=0.0)
    table_height: float = 0.0
    shapes: Tuple[str, ...] = SHAPE_KINDS
    radius_range: Tuple[float, float] = (0.015, 0.035)
    half_extent_range: Tuple[float, float] = (0.015, 0.035)
    box_half_height_range: Tuple[float, float] = (0.02, 0.05)
    cylinder_height_range: Tuple[float, float] = (0.04, 0.12)
    separation: float = Field(0.005, ge=0.0)
    placement_margin: float = Field(0.03, ge=0.0)
    max_attempts: int = Field(10_000, ge=1)
    image_width: int = Field(160, ge=2)
    image_height: int = Field(120, ge=2)
    fx: float = Field(135.0, gt=0.0)
    fy: float = Field(135.0, gt=0.0)
    camera_radius: Tuple[float, float] = (0.48, 0.72)
    camera_theta: Tuple[float, float] = (0.0, math.pi / 4)
    n_occupancy: int = Field(2000, ge=0)
    near_frac: float = Field(0.3, ge=0.0, le=1.0)
    near_band: float = Field(0.01, ge=0.0)
    n_contacts: int = Field(64, ge=0)
    friction: float = Field(0.5, gt=0.0)
    clearance: float = Field(0.005, ge=0.0)

    @field_validator("shapes")
    @classmethod
    def _known_shapes(cls, value: Tuple[str, ...]) -> Tuple[str, ...]:
        unknown = [s for s in value if s not in SHAPE_KINDS]
        if unknown or not value:
            raise ValueError(f"shapes must be a nonempty subset of {SHAPE_KINDS}, got {value}")
        return value

    @property
    def workspace_max(self) -> Vec3Tuple:
        """Upper corner of the workspace box."""
        size = self.workspace_size
        lo = self.workspace_min
        return (lo[0] + size, lo[1] + size, lo[2] + size)


class TrainConfig(_Frozen):
    """Optimizer, schedule and early stopping."""

    epochs: int = Field(200, ge=1)
    lr: float = Field(1e-3, gt=0.0)
    weight_decay: float = Field(1e-2, ge=0.0)
    warmup_frac: float = Field(0.05, ge=0.0, le=1.0)
    batch_size: int = Field(4, ge=1)
    patience: int = Field(10, ge=1)
    f1_threshold: float = Field(0.5, ge=0.0, le=1.0)
    val_frac: float = Field(0.2, ge=0.0, lt=1.0)
    augment_enabled: bool = True
    augment: AugmentConfig = AugmentConfig()


class SelectConfig(_Frozen):
    """Grasp selection cascade and preprocessing."""

    thresholds: Tuple[float, ...] = (0.9, 0.8, 0.7)
    outlier_k: int = Field(16, ge=1)
    outlier_std: float = Field(2.0, gt=0.0)
    downsample: float = Field(0.002, gt=0.0)
    normal_k: int = Field(16, ge=3)
    table_margin: float = 0.002
    occ_thresh: float = Field(0.5, gt=0.0, lt=1.0)
    clearance: float = Field(0.005, ge=0.0)
    fallback: bool = True
    fallback_points: int = Field(256, ge=1)
    # None scores every observed point; a cap thins contacts by farthest-point sampling
    max_contacts_per_instance: Optional[int] = Field(None, ge=1)
    seed: int = 0


class _RunConfig(BaseModel):
    """Base for subcommand configs: unknown keys are rejected."""

    model_config = ConfigDict(extra="forbid")

    seed: int = 0
    out: Path = Path("out")
    workers: int = Field(1, ge=1)


class GenRunConfig(_RunConfig):
    """``icgrasp gen``."""

    n_scenes: int = Field(10, ge=0)
    kind: Literal["packed", "pile"] = "packed"
    k_min: int = Field(1, ge=1, le=8)
    k_max: int = Field(4, ge=1, le=8)
    scene: SceneConfig = SceneConfig()
    grasp: GraspConfig = GraspConfig()

    @model_validator(mode="after")
    def _k_order(self) -> "GenRunConfig":
        if self.k_min > self.k_max:
            raise ValueError("k_min must not exceed k_max")
        return self


class TrainRunConfig(_RunConfig):
    """``icgrasp train``."""

    dataset: Path = Path("dataset")
    net: NetConfig = NetConfig()
    train: TrainConfig = TrainConfig()
    grasp: GraspConfig = GraspConfig()


class EvalGraspRunConfig(_RunConfig):
    """``icgrasp eval-grasp``."""

    model: Literal["network", "oracle"] = "network"
    checkpoint: Optional[Path] = None
    kind: Literal["packed", "pile"] = "packed"
    n_runs: int = Field(2, ge=1)
    n_scenes: int = Field(20, ge=0)
    k: int = Field(3, ge=1, le=8)
    max_interactions: int = Field(20, ge=1)
    max_failures: int = Field(2, ge=1)
    max_empty_observations: int = Field(5, ge=1)
    scene: SceneConfig = SceneConfig()
    grasp: GraspConfig = GraspConfig()
    select: SelectConfig = SelectConfig()

    @model_validator(mode="after")
    def _checkpoint_for_network(self) -> "EvalGraspRunConfig":
        if self.model == "network" and self.checkpoint is None:
            raise ValueError("model 'network' requires a checkpoint")
        return self


class EvalReconRunConfig(_RunConfig):
    """``icgrasp eval-recon``."""

    model: Literal["network", "ground_truth"] = "network"
    checkpoint: Optional[Path] = None
    kind: Literal["packed", "pile"] = "packed"
    n_scenes: int = Field(20, ge=0)
    k: int = Field(3, ge=1, le=8)
    resolution: int = Field(64, ge=2)
    n_chamfer: int = Field(10_000, ge=1)
    n_iou: int = Field(100_000, ge=1)
    scene: SceneConfig = SceneConfig()
    select: SelectConfig = SelectConfig()

    @model_validator(mode="after")
    def _checkpoint_for_network(self) -> "EvalReconRunConfig":
        if self.model == "network" and self.checkpoint is None:
            raise ValueError("model 'network' requires a checkpoint")
        return self


class ReconstructRunConfig(_RunConfig):
    """``icgrasp reconstruct``."""

    checkpoint: Path = Path("checkpoint.icg")
    input: Path = Path("cloud.ply")
    resolution: int = Field(64, ge=2)
    mesh_format: Literal["obj", "ply"] = "obj"
    table_height: float = 0.0
    viewpoint: Vec3Tuple = (0.15, 0.15, 0.6)
    select: SelectConfig = SelectConfig()


RunConfig = Union[
    GenRunConfig, TrainRunConfig, EvalGraspRunConfig, EvalReconRunConfig, ReconstructRunConfig
]

RUN_CONFIGS: Dict[str, Type[_RunConfig]] = {
    "gen": GenRunConfig,
    "train": TrainRunConfig,
    "eval-grasp": EvalGraspRunConfig,
    "eval-recon": EvalReconRunConfig,
    "reconstruct": ReconstructRunConfig,
}

C = TypeVar("C", bound=BaseModel)


def parse_config(config_type: Type[C], data: Dict[str, Any]) -> C:
    """Validate a config dictionary.

    Args:
        config_type: Pydantic model to validate against
        data: Raw dictionary

    Returns:
        The validated model

    Raises:
        ConfigError: If validation fails or unknown keys are present
    """
    try:
        return config_type.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"invalid {config_type.__name__}: {e}") from e


def load_run_config(
    command: str,
    path: Optional[Path] = None,
    seed: Optional[int] = None,
    out: Optional[Path] = None,
    workers: Optional[int] = None,
) -> _RunConfig:
    """Load the run config of a subcommand from a JSON file.

    Keys the file leaves out fall back to the process settings: ``seed`` to
    ``DEFAULT_SEED``, ``workers`` to ``NUM_WORKERS`` and ``out`` to a directory named after
    the subcommand under ``RUNS_DIR`` (under ``DATA_DIR`` for ``gen``).

    Args:
        command: Subcommand name (``gen``, ``train``, ...)
        path: JSON file; defaults apply when omitted
        seed: Optional ``--seed`` override
        out: Optional ``--out`` override
        workers: Optional ``--workers`` override

    Returns:
        The validated run config

    Raises:
        ConfigError: If the file is unreadable or does not validate
    """
    if command not in RUN_CONFIGS:
        raise ConfigError(f"unknown subcommand {command!r}")

    data: Dict[str, Any] = {}
    if path is not None:
        try:
            data = json.loads(Path(path).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigError(f"cannot read config {path}: {e}") from e
        if not isinstance(data, dict):
            raise ConfigError(f"config {path} must contain a JSON object")

    if seed is not None:
        data["seed"] = seed
    if out is not None:
        data["out"] = str(out)
    if workers is not None:
        data["workers"] = workers
    home = settings.DATA_DIR if command == "gen" else settings.RUNS_DIR
    data.setdefault("seed", settings.DEFAULT_SEED)
    data.setdefault("workers", settings.NUM_WORKERS)
    data.setdefault("out", str(home / command))

    return parse_config(RUN_CONFIGS[command], data)


def echo_config(config: BaseModel, out_dir: Path) -> Path:
    """Write the effective config next to a run's outputs.

    Args:
        config: The validated config
        out_dir: Output directory

    Returns:
        Path of the written ``config_echo.json``
    """
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / "config_echo.json"
    path.write_text(config.model_dump_json(indent=2), encoding="utf-8")
    return path
