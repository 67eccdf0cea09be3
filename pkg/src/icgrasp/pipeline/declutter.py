"""``icgrasp eval-grasp``: the declutter loop and its report.

Each interaction renders the current scene from a fresh random camera, selects a grasp and
lets the analytic oracle decide whether it succeeds. A successful grasp removes the object.
A scene ends when it is empty, after ``max_failures`` consecutive failed grasps, after
``max_empty_observations`` consecutive observations without a grasp, or after
``max_interactions`` interactions.
"""

import json
import logging
from dataclasses import dataclass, field
from functools import partial
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional

import numpy as np

from ..core.config import EvalGraspRunConfig, echo_config
from ..core.errors import GenerationError, InvalidArgumentError, InvariantViolation
from ..core.history import TrialEntry, TrialLog
from ..fields.collision import GripperModel, check_grasp_collision
from ..fields.primitives import SceneGT
from ..sim.camera import render_depth, sample_camera
from ..sim.oracle import OracleResult, oracle_grasp
from ..sim.scenes import generate_scene
from .scene_model import OracleSceneModel, SceneModel, cached_network_model
from .selection import GraspChoice, choose_grasp, preprocess
from .workers import derive_seed, map_jobs

logger = logging.getLogger(__name__)

REPORT_VERSION = 1
REPORT_NAME = "eval_grasp.json"
TRIALS_NAME = "trials.jsonl"

SUCCESS = "success"
FAILURE = "failure"
EMPTY_OBSERVATION = "empty_observation"
NO_GRASP = "no_grasp"

ModelFactory = Callable[[SceneGT], SceneModel]
Adjudicator = Callable[[SceneGT, GraspChoice], OracleResult]


def rate(count: int, total: int) -> float:
    return count / total if total else 0.0


@dataclass
class SceneResult:
    """Outcome of one declutter episode."""

    run: int
    scene_index: int
    seed: int
    n_objects: int
    removed: int = 0
    attempts: int = 0
    successes: int = 0
    stop_reason: str = ""
    trials: List[TrialEntry] = field(default_factory=list)

    @property
    def gsr(self) -> float:
        return rate(self.successes, self.attempts)

    @property
    def dr(self) -> float:
        return rate(self.removed, self.n_objects)

    def to_dict(self) -> dict:
        """Convert to dictionary (trials are logged separately)."""
        return {
            "run": self.run,
            "scene_index": self.scene_index,
            "seed": self.seed,
            "n_objects": self.n_objects,
            "removed": self.removed,
            "attempts": self.attempts,
            "successes": self.successes,
            "stop_reason": self.stop_reason,
            "gsr": self.gsr,
            "dr": self.dr,
        }


@dataclass
class DeclutterReport:
    """Grasp success and declutter rates over all evaluated scenes.

    Rates are pooled: GSR is successes over attempts, DR is removed over present objects.
    Reconstruction metrics are filled in only when a reconstruction evaluation ran on the
    same scenes.
    """

    scenes: List[SceneResult] = field(default_factory=list)
    chamfer: Optional[float] = None
    iou: Optional[float] = None

    @property
    def attempts(self) -> int:
        return sum(s.attempts for s in self.scenes)

    @property
    def successes(self) -> int:
        return sum(s.successes for s in self.scenes)

    @property
    def removed(self) -> int:
        return sum(s.removed for s in self.scenes)

    @property
    def n_objects(self) -> int:
        return sum(s.n_objects for s in self.scenes)

    @property
    def gsr(self) -> float:
        return rate(self.successes, self.attempts)

    @property
    def dr(self) -> float:
        return rate(self.removed, self.n_objects)

    def run_rates(self) -> Dict[int, Dict[str, float]]:
        """Pooled GSR and DR of every run."""
        rates = {}
        for run in sorted({s.run for s in self.scenes}):
            part = DeclutterReport([s for s in self.scenes if s.run == run])
            rates[run] = {"gsr": part.gsr, "dr": part.dr}
        return rates

    def run_stats(self) -> Dict[str, float]:
        """Mean and standard deviation of the per-run rates."""
        rates = list(self.run_rates().values())
        gsr = np.array([r["gsr"] for r in rates]) if rates else np.zeros(1)
        dr = np.array([r["dr"] for r in rates]) if rates else np.zeros(1)
        return {
            "gsr_mean": float(gsr.mean()),
            "gsr_std": float(gsr.std()),
            "dr_mean": float(dr.mean()),
            "dr_std": float(dr.std()),
        }

    def trials(self) -> List[TrialEntry]:
        return [t for s in self.scenes for t in s.trials]

    def to_dict(self) -> Dict[str, Any]:
        """Convert to dictionary."""
        return {
            "version": REPORT_VERSION,
            "gsr": self.gsr,
            "dr": self.dr,
            "attempts": self.attempts,
            "successes": self.successes,
            "removed": self.removed,
            "n_objects": self.n_objects,
            "chamfer": self.chamfer,
            "iou": self.iou,
            **self.run_stats(),
            "runs": [{"run": run, **r} for run, r in self.run_rates().items()],
            "scenes": [s.to_dict() for s in self.scenes],
        }


def oracle_adjudicator(
    scene: SceneGT,
    choice: GraspChoice,
    cfg: EvalGraspRunConfig,
    gripper: Optional[GripperModel] = None,
) -> OracleResult:
    """Grasp outcome from the analytic oracle; a contact off every surface is a failure."""
    try:
        return oracle_grasp(
            scene,
            choice.contact,
            choice.normal,
            choice.alpha,
            cfg.grasp,
            gripper,
            friction=cfg.scene.friction,
            clearance=cfg.scene.clearance,
        )
    except InvalidArgumentError as e:
        logger.debug("grasp contact off the surface", extra={"error": str(e)})
        return OracleResult(np.zeros(1, dtype=bool), 0.0, -1, -1)


def _trial(
    run: int,
    scene_index: int,
    interaction: int,
    outcome: str,
    choice: Optional[GraspChoice] = None,
    object_id: Optional[int] = None,
) -> TrialEntry:
    if choice is None:
        return TrialEntry(scene_index, interaction, outcome, run=run)
    return TrialEntry(
        scene_index=scene_index,
        interaction=interaction,
        outcome=outcome,
        score=choice.score,
        instance=choice.instance,
        object_id=object_id,
        width=choice.width,
        rotation=choice.pose.rotation.tolist(),
        translation=choice.pose.translation.tolist(),
        threshold=choice.threshold,
        fallback=choice.fallback,
        run=run,
    )


def run_declutter(
    scene: SceneGT,
    model_for: ModelFactory,
    cfg: EvalGraspRunConfig,
    seed: int,
    scene_index: int = 0,
    run: int = 0,
    adjudicate: Optional[Adjudicator] = None,
    gripper: Optional[GripperModel] = None,
) -> SceneResult:
    """Declutter one scene.

    Args:
        scene: Initial ground-truth scene
        model_for: Scene model for the current scene state
        cfg: Evaluation config (loop limits, selection and grasp parameters)
        seed: Seeds the camera of every interaction
        scene_index: Index reported in the trial log
        run: Run reported in the trial log
        adjudicate: Grasp outcome; the analytic oracle when omitted
        gripper: Gripper model for the collision check

    Returns:
        The episode's counts and trial log

    Raises:
        InvariantViolation: If the selector returned a grasp its own field flags as colliding
    """
    gripper = gripper or GripperModel(w_max=cfg.grasp.w_max)
    adjudicate = adjudicate or partial(oracle_adjudicator, cfg=cfg, gripper=gripper)
    rng = np.random.default_rng(seed)
    result = SceneResult(run, scene_index, seed, scene.k)
    failures = 0
    empty = 0

    for interaction in range(cfg.max_interactions):
        if scene.k == 0:
            result.stop_reason = "cleared"
            break
        camera = sample_camera(int(rng.integers(2**31)), cfg.scene)
        cloud = render_depth(scene, camera)
        pc = preprocess(cloud, cfg.select, scene.table_height, camera.position)

        choice = None
        if len(pc):
            prediction = model_for(scene).predict(pc)
            choice = choose_grasp(
                pc, prediction, cfg.select, cfg.grasp, scene.bounds, scene.table_height, gripper
            )
        if choice is None:
            outcome = NO_GRASP if len(pc) else EMPTY_OBSERVATION
            result.trials.append(_trial(run, scene_index, interaction, outcome))
            empty += 1
            if empty >= cfg.max_empty_observations:
                result.stop_reason = "no_grasp_found"
                break
            continue
        empty = 0

        if check_grasp_collision(
            choice.pose,
            choice.opening,
            choice.instance,
            prediction.field,
            scene.table_height,
            cfg.select.occ_thresh,
            gripper,
        ):
            raise InvariantViolation(
                f"scene {scene_index}: selected grasp collides with the predicted scene"
            )

        outcome_of = adjudicate(scene, choice)
        success = bool(outcome_of.success[0])
        result.attempts += 1
        object_id = outcome_of.object_id if outcome_of.instance >= 0 else None
        outcome = SUCCESS if success else FAILURE
        result.trials.append(_trial(run, scene_index, interaction, outcome, choice, object_id))
        if success:
            scene = scene.without(outcome_of.instance)
            result.successes += 1
            result.removed += 1
            failures = 0
        else:
            failures += 1
            if failures >= cfg.max_failures:
                result.stop_reason = "consecutive_failures"
                break
    else:
        result.stop_reason = "cleared" if scene.k == 0 else "max_interactions"

    logger.info(
        "scene decluttered",
        extra={
            "run": run,
            "scene_index": scene_index,
            "removed": result.removed,
            "objects": result.n_objects,
            "attempts": result.attempts,
            "stop_reason": result.stop_reason,
        },
    )
    return result


def _network_for(scene: SceneGT, checkpoint: str) -> SceneModel:
    return cached_network_model(checkpoint)


def _oracle_for(scene: SceneGT, cfg: EvalGraspRunConfig) -> SceneModel:
    return OracleSceneModel(scene, cfg.grasp, cfg.scene.friction, cfg.scene.clearance)


def model_factory(cfg: EvalGraspRunConfig) -> ModelFactory:
    """Scene model of the configured kind.

    The oracle model is rebuilt from the current scene every interaction; the network model
    is loaded once per process.
    """
    if cfg.model == "oracle":
        return partial(_oracle_for, cfg=cfg)
    return partial(_network_for, checkpoint=str(cfg.checkpoint))


@dataclass(frozen=True)
class _EpisodeJob:
    cfg: EvalGraspRunConfig
    run: int
    index: int


def _run_episode(job: _EpisodeJob) -> SceneResult:
    cfg = job.cfg
    seed = derive_seed(cfg.seed, job.run * cfg.n_scenes + job.index)
    try:
        scene = generate_scene(cfg.kind, cfg.k, seed, cfg.scene)
    except GenerationError as e:
        raise GenerationError(str(e), scene_index=job.index) from e
    return run_declutter(scene, model_factory(cfg), cfg, seed, job.index, job.run)


def cmd_eval_grasp(cfg: EvalGraspRunConfig) -> DeclutterReport:
    """Declutter ``n_runs * n_scenes`` generated scenes and write the report and trial log.

    Scenes are independent and may run in a worker pool; the report is ordered by run and
    scene index either way.
    """
    out = Path(cfg.out)
    echo_config(cfg, out)
    if cfg.model == "network":
        # fail fast on a bad checkpoint, before any worker starts
        cached_network_model(str(cfg.checkpoint))

    jobs = [_EpisodeJob(cfg, run, i) for run in range(cfg.n_runs) for i in range(cfg.n_scenes)]
    results = map_jobs(_run_episode, jobs, cfg.workers)
    report = DeclutterReport(sorted(results, key=lambda r: (r.run, r.scene_index)))

    TrialLog(out / TRIALS_NAME).extend(report.trials())
    (out / REPORT_NAME).write_text(
        json.dumps(report.to_dict(), indent=2, sort_keys=True) + "\n", encoding="utf-8"
    )
    logger.info(
        "declutter evaluation finished",
        extra={"gsr": report.gsr, "dr": report.dr, "scenes": len(report.scenes)},
    )
    return report
