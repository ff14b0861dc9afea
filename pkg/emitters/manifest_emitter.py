from dataclasses import dataclass, field
from datetime import datetime, timedelta
from pathlib import Path
from typing import Any, Dict, List, Optional
import json
import logging

from dateutil import parser as date_parser
from dateutil import tz

from emitters.base_emitter import BaseEmitter
from utils import ARTIFACT_VERSION, format_json

logger = logging.getLogger(__name__)

MANIFEST_NAME = "manifest.json"


def utc_now() -> datetime:
    return datetime.now(tz.tzutc()).replace(microsecond=0)


@dataclass
class RunManifest:
    """Provenance of one CLI invocation."""

    command: str
    config_digest: str
    started: datetime
    finished: Optional[datetime] = None
    version: str = ARTIFACT_VERSION
    cases: List[Dict[str, Any]] = field(default_factory=list)
    outputs: List[str] = field(default_factory=list)
    notes: Dict[str, Any] = field(default_factory=dict)

    @property
    def elapsed(self) -> Optional[timedelta]:
        if self.finished is None:
            return None
        return self.finished - self.started

    def to_dict(self) -> Dict[str, Any]:
        return {
            "command": self.command,
            "config_digest": self.config_digest,
            "version": self.version,
            "started": self.started.isoformat(),
            "finished": self.finished.isoformat() if self.finished else None,
            "cases": self.cases,
            "outputs": sorted(self.outputs),
            "notes": self.notes,
        }

    @classmethod
    def from_dict(cls, data: Dict[str, Any]) -> "RunManifest":
        return cls(
            command=data["command"],
            config_digest=data["config_digest"],
            version=data.get("version", ARTIFACT_VERSION),
            started=date_parser.isoparse(data["started"]),
            finished=date_parser.isoparse(data["finished"]) if data.get("finished") else None,
            cases=list(data.get("cases", [])),
            outputs=list(data.get("outputs", [])),
            notes=dict(data.get("notes", {})),
        )

    @classmethod
    def load(cls, path: Path) -> "RunManifest":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


class ManifestEmitter(BaseEmitter):
    def emit(self, manifest: RunManifest, other_files: List[str]) -> Path:
        """
        Write manifest.json listing every file of the run, itself included.

        Args:
            manifest: Manifest to complete and write
            other_files: Output-relative paths written by the other emitters
        """
        if manifest.finished is None:
            manifest.finished = utc_now()
        manifest.outputs = sorted(set(other_files) | {MANIFEST_NAME})
        path = self.write_text(MANIFEST_NAME, format_json(manifest.to_dict()))
        logger.info(f"Wrote manifest with {len(manifest.outputs)} outputs to {path}")
        return path
