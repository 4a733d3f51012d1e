from __future__ import annotations

import json
import os
from typing import Any, Dict, Optional

_EMPTY_STORE: Dict[str, Any] = {"runs": [], "checkpoints": {}}


def write_json_atomic(filepath: str, data: Any) -> None:
    """Whole-document write through a temp file and ``os.replace``."""
    directory = os.path.dirname(filepath)
    if directory:
        os.makedirs(directory, exist_ok=True)
    tmp = filepath + ".tmp"
    with open(tmp, "w", encoding="utf-8") as f:
        json.dump(data, f, ensure_ascii=False, indent=2)
    os.replace(tmp, filepath)


def read_json(filepath: str) -> Any:
    with open(filepath, "r", encoding="utf-8") as f:
        return json.load(f)


class JsonFileDatabase:
    """JSON document holding the run log and chain checkpoints."""

    def __init__(self, filepath: str, initial: Optional[Dict[str, Any]] = None) -> None:
        self.filepath = filepath
        if not os.path.exists(filepath):
            self._write(json.loads(json.dumps(initial if initial is not None else _EMPTY_STORE)))

    def _read(self) -> Dict[str, Any]:
        return read_json(self.filepath)

    def _write(self, data: Dict[str, Any]) -> None:
        write_json_atomic(self.filepath, data)

    def read_all(self) -> Dict[str, Any]:
        return self._read()

    def write_all(self, data: Dict[str, Any]) -> None:
        self._write(data)
