from pathlib import Path
from typing import List, Union
import logging

from utils import resolve_inside

logger = logging.getLogger(__name__)


class BaseEmitter:
    """Writes artifacts below one output directory and remembers what it wrote."""

    def __init__(self, out_dir: Union[str, Path]):
        self.out_dir = Path(out_dir)
        self.written_files: List[Path] = []

    def target(self, relative: Union[str, Path]) -> Path:
        """
        Resolve a path inside the output directory, creating parent folders.

        Args:
            relative: Path relative to the output directory

        Returns:
            Absolute path of the file to write
        """
        path = resolve_inside(self.out_dir, relative)
        path.parent.mkdir(parents=True, exist_ok=True)
        return path

    def write_text(self, relative: Union[str, Path], text: str) -> Path:
        path = self.target(relative)
        try:
            with open(path, "w", encoding="utf-8", newline="\n") as f:
                f.write(text)
        except OSError as e:
            logger.error(f"Error writing {path}: {str(e)}")
            raise
        return self._record(path)

    def write_bytes(self, relative: Union[str, Path], data: bytes) -> Path:
        path = self.target(relative)
        try:
            path.write_bytes(data)
        except OSError as e:
            logger.error(f"Error writing {path}: {str(e)}")
            raise
        return self._record(path)

    def _record(self, path: Path) -> Path:
        if path not in self.written_files:
            self.written_files.append(path)
        logger.debug(f"Wrote {path}")
        return path

    def relative_files(self) -> List[str]:
        """Written files relative to the output directory, POSIX separators, sorted."""
        base = self.out_dir.resolve()
        return sorted(p.relative_to(base).as_posix() for p in self.written_files)
