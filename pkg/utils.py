import hashlib
import json
import math
from pathlib import Path
from typing import Any, Dict, Union

ARTIFACT_VERSION = "0.1.0"


def clean_design_tag(tag: str) -> str:
    """Clean and normalize design tag strings"""
    return str(tag).strip().upper()


def format_sig(value: float, digits: int = 6) -> str:
    """Format a number with a fixed count of significant digits"""
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return "nan"
    return f"{value:.{digits}g}"


def format_speed(speed: float) -> str:
    """Compact speed label used in file names, e.g. 2.3 -> '2.3', 1.0 -> '1'"""
    return f"{speed:g}"


def format_json(data: Dict[str, Any]) -> str:
    """Format data as stable, human-readable JSON"""
    return json.dumps(data, indent=2, sort_keys=True) + "\n"


def config_digest(data: Dict[str, Any]) -> str:
    """Content hash of a config dict, independent of key order"""
    canonical = json.dumps(data, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


def resolve_inside(base_dir: Union[str, Path], relative: Union[str, Path]) -> Path:
    """Resolve a path below base_dir, refusing anything that escapes it"""
    base = Path(base_dir).resolve()
    target = (base / relative).resolve()
    if target != base and base not in target.parents:
        raise ValueError(f"Refusing to write outside the output directory: {target}")
    return target
