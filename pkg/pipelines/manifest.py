import json
import os
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, List

import pbgcavity
from pbgcavity.utils import sha256_file

MANIFEST_NAME = "manifest.json"


@dataclass
class RunManifest:
    """Config echo, version, stage timings, key results and a hashed file inventory."""

    config: Dict[str, Any]
    output_dir: Path
    version: str = pbgcavity.__version__
    timings: Dict[str, float] = field(default_factory=dict)
    results: Dict[str, Any] = field(default_factory=dict)
    files: List[Path] = field(default_factory=list)
    status: str = "ok"

    def add_file(self, path: Path) -> Path:
        path = Path(path)
        if path not in self.files:
            self.files.append(path)
        return path

    @contextmanager
    def time_stage(self, name: str):
        start = time.monotonic()
        try:
            yield
        finally:
            self.timings[name] = time.monotonic() - start

    def inventory(self) -> List[Dict[str, Any]]:
        entries = []
        for path in self.files:
            if not path.exists():
                continue
            entries.append({
                "path": str(path.relative_to(self.output_dir) if path.is_relative_to(self.output_dir) else path),
                "sha256": sha256_file(path),
                "bytes": path.stat().st_size,
            })
        return entries

    def as_dict(self) -> Dict[str, Any]:
        return {
            "version": self.version,
            "status": self.status,
            "config": self.config,
            "timings": self.timings,
            "results": self.results,
            "files": self.inventory(),
        }

    def write(self) -> Path:
        """Atomic: the manifest is renamed into place after a full write."""
        self.output_dir.mkdir(parents=True, exist_ok=True)
        path = self.output_dir / MANIFEST_NAME
        tmp = path.with_name(MANIFEST_NAME + ".tmp")
        with open(tmp, "w", encoding="utf-8") as handle:
            json.dump(self.as_dict(), handle, indent=2, sort_keys=True, default=str)
            handle.write("\n")
        os.replace(tmp, path)
        return path
