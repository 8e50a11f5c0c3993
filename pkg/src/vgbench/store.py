"""Durable, append-only storage for benchmark runs.

Layout under the store root:

    runs/<run_id>/manifest.json
    runs/<run_id>/transcripts/<case_id>.jsonl
    runs/<run_id>/verdicts.jsonl
    runs/<run_id>/report.<fmt>

Appends are single JSON lines flushed and fsynced before the call returns,
so a crash can lose at most a torn trailing line.  Loading skips a torn
trailing line with a warning and marks the affected record set partial.
Verdicts are event-sourced: later records for a case supersede earlier ones
and nothing is ever rewritten in place.
"""

from __future__ import annotations

import json
import logging
import os
import time
from dataclasses import dataclass, field
from pathlib import Path

from .actor import LintViolation
from .judge import CaseJudgment, judgment_from_record, judgment_to_record
from .orchestrator import Conversation, Turn

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"
VERDICTS_NAME = "verdicts.jsonl"
RUN_STATUSES = ("open", "closed")


class StoreError(RuntimeError):
    pass


class RunExists(StoreError):
    pass


class UnknownRun(StoreError):
    pass


class RunClosed(StoreError):
    pass


@dataclass
class RunManifest:
    run_id: str
    corpus_hash: str
    sut_name: str
    sut_version: str
    sut_model: str
    actor_model: str
    gateway_mode: str
    guideline_version: str
    corpus_path: str = ""
    corpus_filter: dict = field(default_factory=dict)
    policy: dict = field(default_factory=dict)
    status: str = "open"
    started_at: float = 0.0
    ended_at: float | None = None

    def to_dict(self) -> dict:
        return dict(self.__dict__)

    @classmethod
    def from_dict(cls, data: dict) -> "RunManifest":
        return cls(**data)


@dataclass
class LoadedRun:
    """A run read back from disk."""

    manifest: RunManifest
    conversations: dict[str, Conversation]
    judgments: dict[str, CaseJudgment]  # latest verdict per case
    verdict_events: list[CaseJudgment]  # full event order
    partial_cases: tuple[str, ...] = ()
    skipped_lines: int = 0

    @property
    def partial(self) -> bool:
        return bool(self.partial_cases) or self.skipped_lines > 0


def _fsync_write_line(path: Path, record: dict) -> None:
    line = json.dumps(record, ensure_ascii=False, sort_keys=True)
    with open(path, "a", encoding="utf-8") as fh:
        fh.write(line + "\n")
        fh.flush()
        os.fsync(fh.fileno())


def _read_jsonl(path: Path) -> tuple[list[dict], int]:
    """All parseable records plus the count of skipped torn lines.

    Only a torn trailing line (interrupted append) is tolerated; a bad line
    in the middle of the file is corruption and raises.
    """
    records: list[dict] = []
    skipped = 0
    if not path.exists():
        return records, skipped
    raw = path.read_text(encoding="utf-8")
    lines = raw.split("\n")
    complete, tail = lines[:-1], lines[-1]
    for line_no, line in enumerate(complete, start=1):
        if not line.strip():
            continue
        try:
            records.append(json.loads(line))
        except json.JSONDecodeError:
            # Appends write "record\n" in a single buffer, so a complete
            # line that does not parse is corruption, not a torn write.
            raise StoreError(f"{path}:{line_no}: corrupt record") from None
    if tail.strip():
        logger.warning("%s: skipping torn trailing line", path)
        skipped += 1
    return records, skipped


class RunStore:
    """File-backed store for everything a run produces."""

    def __init__(self, root: str | Path):
        self.root = Path(root)
        self.runs_dir = self.root / "runs"

    def _run_dir(self, run_id: str) -> Path:
        return self.runs_dir / run_id

    def _manifest_path(self, run_id: str) -> Path:
        return self._run_dir(run_id) / MANIFEST_NAME

    def _require_run(self, run_id: str) -> Path:
        run_dir = self._run_dir(run_id)
        if not (run_dir / MANIFEST_NAME).exists():
            raise UnknownRun(f"no run {run_id!r} under {self.runs_dir}")
        return run_dir

    def _write_manifest(self, manifest: RunManifest) -> None:
        path = self._manifest_path(manifest.run_id)
        tmp = path.with_suffix(".json.tmp")
        payload = json.dumps(manifest.to_dict(), indent=2, sort_keys=True)
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(payload + "\n")
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)

    def open_run(self, manifest: RunManifest) -> RunManifest:
        run_dir = self._run_dir(manifest.run_id)
        if (run_dir / MANIFEST_NAME).exists():
            raise RunExists(f"run {manifest.run_id!r} already exists")
        (run_dir / "transcripts").mkdir(parents=True, exist_ok=True)
        if not manifest.started_at:
            manifest.started_at = time.time()
        manifest.status = "open"
        self._write_manifest(manifest)
        return manifest

    def manifest(self, run_id: str) -> RunManifest:
        path = self._manifest_path(run_id)
        if not path.exists():
            raise UnknownRun(f"no run {run_id!r} under {self.runs_dir}")
        return RunManifest.from_dict(json.loads(path.read_text("utf-8")))

    def _require_open(self, run_id: str) -> None:
        if self.manifest(run_id).status == "closed":
            raise RunClosed(f"run {run_id!r} is closed")

    def append_turn(self, run_id: str, case_id: str, turn: Turn) -> None:
        run_dir = self._require_run(run_id)
        self._require_open(run_id)
        record = {
            "kind": "turn",
            "index": turn.index,
            "role": turn.role,
            "text": turn.text,
            "timestamp": turn.timestamp,
            "contains_question": turn.contains_question,
            "lint": [
                {"rule": v.rule, "turn_index": v.turn_index,
                 "severity": v.severity, "excerpt": v.excerpt}
                for v in turn.lint
            ],
        }
        _fsync_write_line(run_dir / "transcripts" / f"{case_id}.jsonl", record)

    def append_terminal(
        self, run_id: str, case_id: str, state: str, question_count: int
    ) -> None:
        run_dir = self._require_run(run_id)
        self._require_open(run_id)
        record = {"kind": "terminal", "state": state, "question_count": question_count}
        _fsync_write_line(run_dir / "transcripts" / f"{case_id}.jsonl", record)

    def append_verdict(self, run_id: str, judgment: CaseJudgment) -> None:
        """Verdicts may be appended while open or after close: adjudication
        of a finished run is the normal human-review path."""
        run_dir = self._require_run(run_id)
        _fsync_write_line(run_dir / VERDICTS_NAME, judgment_to_record(judgment))

    def write_report(self, run_id: str, fmt: str, data: bytes) -> Path:
        run_dir = self._require_run(run_id)
        ext = {"table": "txt", "csv": "csv", "markdown": "md"}.get(fmt, fmt)
        path = run_dir / f"report.{ext}"
        tmp = path.with_suffix(path.suffix + ".tmp")
        with open(tmp, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())
        os.replace(tmp, path)
        return path

    def close_run(self, run_id: str) -> RunManifest:
        manifest = self.manifest(run_id)
        if manifest.status == "closed":
            raise RunClosed(f"run {run_id!r} is already closed")
        manifest.status = "closed"
        manifest.ended_at = time.time()
        self._write_manifest(manifest)
        return manifest

    def list_runs(self) -> list[RunManifest]:
        if not self.runs_dir.exists():
            return []
        out = []
        for entry in sorted(self.runs_dir.iterdir()):
            if (entry / MANIFEST_NAME).exists():
                out.append(self.manifest(entry.name))
        return out

    def _load_conversation(
        self, run_id: str, case_id: str, path: Path
    ) -> tuple[Conversation, bool, int]:
        records, skipped = _read_jsonl(path)
        turns: list[Turn] = []
        terminal: str | None = None
        for record in records:
            if record.get("kind") == "turn":
                turns.append(
                    Turn(
                        index=record["index"],
                        role=record["role"],
                        text=record["text"],
                        timestamp=record["timestamp"],
                        contains_question=record["contains_question"],
                        lint=tuple(
                            LintViolation(
                                rule=v["rule"], turn_index=v["turn_index"],
                                severity=v["severity"], excerpt=v["excerpt"],
                            )
                            for v in record.get("lint", ())
                        ),
                    )
                )
            elif record.get("kind") == "terminal":
                terminal = record["state"]
        conversation = Conversation(
            id=case_id,
            vignette_id=case_id,
            run_id=run_id,
            turns=tuple(turns),
            terminal_state=terminal,
        )
        partial = terminal is None
        return conversation, partial, skipped

    def load_run(self, run_id: str) -> LoadedRun:
        run_dir = self._require_run(run_id)
        manifest = self.manifest(run_id)
        conversations: dict[str, Conversation] = {}
        partial_cases: list[str] = []
        skipped_total = 0
        transcripts = run_dir / "transcripts"
        if transcripts.exists():
            for path in sorted(transcripts.glob("*.jsonl")):
                case_id = path.stem
                conversation, partial, skipped = self._load_conversation(
                    run_id, case_id, path
                )
                conversations[case_id] = conversation
                skipped_total += skipped
                if partial or skipped:
                    partial_cases.append(case_id)
        verdict_records, skipped = _read_jsonl(run_dir / VERDICTS_NAME)
        skipped_total += skipped
        events = [judgment_from_record(r) for r in verdict_records]
        latest: dict[str, CaseJudgment] = {}
        for event in events:
            latest[event.case_id] = event
        return LoadedRun(
            manifest=manifest,
            conversations=conversations,
            judgments=latest,
            verdict_events=events,
            partial_cases=tuple(partial_cases),
            skipped_lines=skipped_total,
        )
