"""Resume state for N-sequence runs and rich progress bars."""

import hashlib
import json
import logging
from datetime import datetime
from pathlib import Path
from typing import Any, Optional

from rich.console import Console
from rich.progress import BarColumn, MofNCompleteColumn, Progress, SpinnerColumn, TextColumn, TimeElapsedColumn

from config.settings import settings

logger = logging.getLogger(__name__)


def fingerprint(setup: dict[str, Any]) -> str:
    """Stable digest of a run setup; records are only reused under the same digest."""
    payload = json.dumps(setup, sort_keys=True, default=str)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


class StateManager:
    """
    JSON state of a run over atom counts N.

    Each finished N stores its result record so a resumed run can rebuild
    the sequence without recomputing it. The file lives at
    ``<state_dir>/<run_name>_progress.json``.
    """

    def __init__(self, run_name: str, state_dir: Optional[Path] = None, setup_digest: Optional[str] = None):
        self._run_name = run_name
        self._state_dir = Path(state_dir or settings.paths.state_dir)
        self._state_file = self._state_dir / f"{run_name}_progress.json"
        self._setup_digest = setup_digest
        self._state: dict[str, Any] = self._fresh()

    @property
    def state_file(self) -> Path:
        return self._state_file

    def _fresh(self) -> dict[str, Any]:
        now = datetime.now().isoformat()
        return {
            "run": self._run_name,
            "setup": self._setup_digest,
            "started_at": now,
            "updated_at": now,
            "n_total": 0,
            "finished": [],
            "failed": {},
            "records": {},
        }

    def load(self) -> dict[str, Any]:
        """
        Read the state file.

        A missing file, or one written for a different setup digest, yields
        a fresh state.
        """
        if not self._state_file.exists():
            self._state = self._fresh()
            return self._state
        with open(self._state_file, "r", encoding="utf-8") as f:
            stored = json.load(f)
        if self._setup_digest is not None and stored.get("setup") != self._setup_digest:
            logger.warning(f"{self._state_file.name} was written for another setup; starting over")
            self._state = self._fresh()
        else:
            self._state = stored
        return self._state

    def save(self) -> None:
        self._state_dir.mkdir(parents=True, exist_ok=True)
        self._state["updated_at"] = datetime.now().isoformat()
        with open(self._state_file, "w", encoding="utf-8") as f:
            json.dump(self._state, f, ensure_ascii=False, indent=2)

    def reset(self) -> None:
        self._state = self._fresh()
        self.save()

    def exists(self) -> bool:
        return self._state_file.exists()

    def delete(self) -> None:
        if self._state_file.exists():
            self._state_file.unlink()

    @property
    def total(self) -> int:
        return int(self._state.get("n_total", 0))

    def set_total(self, total: int) -> None:
        self._state["n_total"] = total

    def finished(self) -> set[int]:
        """Atom counts with a stored record."""
        return {int(n) for n in self._state.get("finished", [])}

    def failed(self) -> dict[int, str]:
        """Atom counts whose last attempt raised, with the message."""
        return {int(n): message for n, message in self._state.get("failed", {}).items()}

    def record(self, n: int) -> Optional[dict[str, Any]]:
        return self._state.get("records", {}).get(str(n))

    def mark_finished(self, n: int, record: dict[str, Any]) -> None:
        key = str(n)
        if key not in self._state["finished"]:
            self._state["finished"].append(key)
        self._state["records"][key] = record
        self._state["failed"].pop(key, None)

    def mark_failed(self, n: int, error: str) -> None:
        self._state["failed"][str(n)] = error


class ProgressTracker:
    """Rich progress bar on stderr; a no-op when disabled."""

    def __init__(
        self,
        description: str,
        total: int,
        state_manager: Optional[StateManager] = None,
        enabled: bool = True,
    ):
        self._description = description
        self._total = total
        self._state_manager = state_manager
        self._enabled = enabled
        self._progress: Optional[Progress] = None
        self._task_id = None

    def __enter__(self):
        if not self._enabled:
            return self
        self._progress = Progress(
            SpinnerColumn(),
            TextColumn("[progress.description]{task.description}"),
            BarColumn(),
            MofNCompleteColumn(),
            TimeElapsedColumn(),
            console=Console(stderr=True),
            transient=True,
        )
        self._progress.start()
        done = len(self._state_manager.finished()) if self._state_manager else 0
        self._task_id = self._progress.add_task(self._description, total=self._total, completed=done)
        return self

    def __exit__(self, exc_type, exc_val, exc_tb):
        if self._progress:
            self._progress.stop()

    def advance(self, amount: int = 1) -> None:
        if self._progress and self._task_id is not None:
            self._progress.advance(self._task_id, amount)
