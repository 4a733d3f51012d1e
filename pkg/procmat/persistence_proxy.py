from __future__ import annotations

import time
from typing import Any, Dict, List, Optional

from .store_json import JsonFileDatabase


class PersistenceProxy:
    """Proxy (Structural Pattern) over the run log and chain checkpoints."""

    def __init__(self, db: JsonFileDatabase, ttl: float = 1.0) -> None:
        self._db = db
        self._ttl = ttl
        self._cache: Optional[Dict[str, Any]] = None
        self._cache_ts: float = 0.0

    def _ensure_cache(self) -> Dict[str, Any]:
        if self._cache is None or (time.time() - self._cache_ts) > self._ttl:
            self._cache = self._db.read_all()
            self._cache_ts = time.time()
        return self._cache

    def _flush(self) -> None:
        if self._cache is not None:
            self._db.write_all(self._cache)
            self._cache_ts = time.time()

    def append_run(self, manifest: Dict[str, Any]) -> None:
        data = self._ensure_cache()
        data.setdefault("runs", []).append(manifest)
        self._flush()

    def list_runs(self, command: Optional[str] = None) -> List[Dict[str, Any]]:
        data = self._ensure_cache()
        runs: List[Dict[str, Any]] = data.get("runs", [])
        return [r for r in runs if command is None or r.get("command") == command]

    def save_checkpoint(self, name: str, payload: Dict[str, Any]) -> None:
        data = self._ensure_cache()
        data.setdefault("checkpoints", {})[name] = payload
        self._flush()

    def get_checkpoint(self, name: str) -> Optional[Dict[str, Any]]:
        data = self._ensure_cache()
        return data.get("checkpoints", {}).get(name)
