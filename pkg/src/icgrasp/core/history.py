"""Append-only JSON-lines histories: training metrics and declutter trials."""

import json
import logging
from dataclasses import dataclass, asdict
from pathlib import Path
from typing import Dict, List, Optional

from .errors import DataError

logger = logging.getLogger(__name__)


@dataclass
class MetricEntry:
    """A single metric record (one training step, one validation pass, ...)."""

    kind: str
    step: int
    values: Dict[str, float]
    epoch: Optional[int] = None

    def to_dict(self) -> dict:
        """Convert to dictionary."""
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "MetricEntry":
        """Create from dictionary."""
        return cls(**data)


@dataclass
class TrialEntry:
    """A single grasp attempt (or empty observation) of the declutter loop."""

    scene_index: int
    interaction: int
    outcome: str
    score: Optional[float] = None
    instance: Optional[int] = None
    object_id: Optional[int] = None
    width: Optional[float] = None
    rotation: Optional[List[List[float]]] = None
    translation: Optional[List[float]] = None
    threshold: Optional[float] = None
    fallback: bool = False
    run: int = 0

    def to_dict(self) -> dict:
        """Convert to dictionary."""
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "TrialEntry":
        """Create from dictionary."""
        return cls(**data)


class MetricHistory:
    """Manages a JSON-lines metric log.

    Entries are written through to disk as they are added. Timestamps are deliberately
    not recorded so that reruns with the same config produce identical logs.
    """

    def __init__(self, log_file: Optional[Path] = None):
        """Initialize the history.

        Args:
            log_file: JSON-lines file to append to; in-memory only when omitted
        """
        self.log_file = log_file
        self.entries: List[MetricEntry] = []
        if self.log_file is not None:
            self.log_file.parent.mkdir(parents=True, exist_ok=True)
            self.log_file.write_text("", encoding="utf-8")

    def add_entry(
        self, kind: str, step: int, values: Dict[str, float], epoch: Optional[int] = None
    ) -> MetricEntry:
        """Add an entry and append it to the log file.

        Args:
            kind: Entry kind, e.g. ``"train_step"`` or ``"validation"``
            step: Global optimizer step
            values: Metric values
            epoch: Optional epoch index

        Returns:
            The stored entry
        """
        entry = MetricEntry(
            kind=kind, step=step, values={k: float(v) for k, v in values.items()}, epoch=epoch
        )
        self.entries.append(entry)
        if self.log_file is not None:
            with open(self.log_file, "a", encoding="utf-8") as f:
                f.write(json.dumps(entry.to_dict(), sort_keys=True) + "\n")
        return entry

    def of_kind(self, kind: str) -> List[MetricEntry]:
        """Return all entries of a given kind in insertion order."""
        return [e for e in self.entries if e.kind == kind]

    def to_list(self) -> List[dict]:
        """Return all entries as dictionaries."""
        return [e.to_dict() for e in self.entries]

    @classmethod
    def load(cls, log_file: Path) -> "MetricHistory":
        """Load a history from a JSON-lines file without truncating it.

        Args:
            log_file: File written by a previous run

        Returns:
            In-memory history holding the file's entries

        Raises:
            DataError: If a line is not valid JSON
        """
        history = cls()
        try:
            lines = log_file.read_text(encoding="utf-8").splitlines()
        except OSError as e:
            raise DataError(f"cannot read metric log {log_file}: {e}") from e
        for number, line in enumerate(lines, 1):
            if not line.strip():
                continue
            try:
                history.entries.append(MetricEntry.from_dict(json.loads(line)))
            except (json.JSONDecodeError, TypeError) as e:
                raise DataError(f"{log_file}:{number}: bad metric entry: {e}") from e
        return history

    def export_to_file(self, filepath: Path, format: str = "json") -> bool:
        """Export the history.

        Args:
            filepath: Path to export file
            format: Export format ("json" or "txt")

        Returns:
            True if successful, False otherwise
        """
        try:
            if format == "json":
                with open(filepath, "w", encoding="utf-8") as f:
                    json.dump(self.to_list(), f, indent=2)
            elif format == "txt":
                with open(filepath, "w", encoding="utf-8") as f:
                    for entry in self.entries:
                        epoch = "" if entry.epoch is None else f" epoch={entry.epoch}"
                        values = " ".join(f"{k}={v:.6g}" for k, v in sorted(entry.values.items()))
                        f.write(f"[{entry.kind}] step={entry.step}{epoch} {values}\n")
            else:
                return False
            return True
        except OSError as e:
            logger.error("Error exporting metric history to %s: %s", filepath, e)
            return False


class TrialLog:
    """JSON-lines log of declutter trials, one line per attempt or empty observation."""

    def __init__(self, log_file: Optional[Path] = None):
        """Initialize the log.

        Args:
            log_file: JSON-lines file, truncated on creation; in-memory only when omitted
        """
        self.log_file = log_file
        self.entries: List[TrialEntry] = []
        if self.log_file is not None:
            self.log_file.parent.mkdir(parents=True, exist_ok=True)
            self.log_file.write_text("", encoding="utf-8")

    def extend(self, entries: List[TrialEntry]) -> None:
        """Append entries in the given order."""
        self.entries.extend(entries)
        if self.log_file is not None and entries:
            with open(self.log_file, "a", encoding="utf-8") as f:
                for entry in entries:
                    f.write(json.dumps(entry.to_dict(), sort_keys=True) + "\n")

    def of_scene(self, scene_index: int) -> List[TrialEntry]:
        """Trials of one scene in interaction order."""
        return [e for e in self.entries if e.scene_index == scene_index]

    @classmethod
    def load(cls, log_file: Path) -> "TrialLog":
        """Load a trial log without truncating it.

        Raises:
            DataError: If the file is unreadable or a line is malformed
        """
        log = cls()
        try:
            lines = log_file.read_text(encoding="utf-8").splitlines()
        except OSError as e:
            raise DataError(f"cannot read trial log {log_file}: {e}") from e
        for number, line in enumerate(lines, 1):
            if line.strip():
                try:
                    log.entries.append(TrialEntry.from_dict(json.loads(line)))
                except (json.JSONDecodeError, TypeError) as e:
                    raise DataError(f"{log_file}:{number}: bad trial entry: {e}") from e
        return log
