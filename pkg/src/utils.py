import json
import logging
import os
import tempfile
from pathlib import Path
from typing import Any, Union

from .errors import IoError

logger = logging.getLogger(__name__)

_MISSING = object()


def load_json_file(filename: Union[str, Path], default_value: Any = _MISSING) -> Any:
    """Load data from a JSON file.

    A missing file returns ``default_value`` when one is given and raises
    ``IoError`` otherwise. A file that exists but cannot be parsed always raises.
    """
    filepath = Path(filename)
    if not filepath.exists():
        if default_value is _MISSING:
            raise IoError("File not found", str(filepath))
        logger.info(f"File {filepath} not found, using default value")
        return default_value

    try:
        with open(filepath, encoding="utf-8") as f:
            return json.load(f)
    except (OSError, json.JSONDecodeError) as e:
        logger.error(f"Error loading from {filepath}: {e}")
        raise IoError(f"Cannot read JSON document: {e}", str(filepath))


def write_text_atomic(filename: Union[str, Path], text: str) -> None:
    """Write text through a temporary file in the target directory."""
    filepath = Path(filename)
    try:
        filepath.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(
            dir=filepath.parent, prefix=f".{filepath.name}.", suffix=".tmp"
        )
        with os.fdopen(fd, "w", encoding="utf-8", newline="") as f:
            f.write(text)
        os.replace(tmp_name, filepath)
    except OSError as e:
        logger.error(f"Error saving to {filepath}: {e}")
        raise IoError(f"Cannot write file: {e}", str(filepath))


def save_json_file(filename: Union[str, Path], data: Any) -> None:
    """Save data to a JSON file atomically."""
    text = json.dumps(data, ensure_ascii=False, indent=2, sort_keys=True) + "\n"
    write_text_atomic(filename, text)


def format_float(value: float) -> str:
    """Shortest decimal string that parses back to the same float."""
    return repr(float(value))


def format_bool(value: bool) -> str:
    return "true" if value else "false"


def parse_bool(text: str) -> bool:
    lowered = text.strip().lower()
    if lowered in ("true", "1", "yes"):
        return True
    if lowered in ("false", "0", "no"):
        return False
    raise ValueError(f"not a boolean: {text!r}")
