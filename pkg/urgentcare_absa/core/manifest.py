"""Per-stage run manifests: config snapshot, input and artifact hashes, counts and timings."""

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Dict, Mapping

from ..utils.io import dumps_canonical, sha256_file, sha256_text, write_json

logger = logging.getLogger(__name__)

MANIFEST_DIR = 'manifests'
# Location keys dropped from the snapshot used for the manifest id, so that
# identical inputs in different directories hash the same.
LOCATION_KEYS = ('inputs', 'output_dir', 'cache_dir')


def manifest_id(stage: str, config_snapshot: Mapping[str, Any], input_hashes: Mapping[str, str]) -> str:
    portable = {k: v for k, v in config_snapshot.items() if k not in LOCATION_KEYS}
    payload = dumps_canonical({'stage': stage, 'config': portable, 'inputs': dict(input_hashes)})
    return sha256_text(payload)[:16]


@dataclass
class RunManifest:
    stage: str
    tool_version: str
    config: Dict[str, Any]
    output_dir: Path
    inputs: Dict[str, str] = field(default_factory=dict)
    input_paths: Dict[str, str] = field(default_factory=dict)
    artifacts: Dict[str, str] = field(default_factory=dict)
    counts: Dict[str, Any] = field(default_factory=dict)
    timings: Dict[str, float] = field(default_factory=dict)
    decoding: Dict[str, Any] = field(default_factory=dict)
    _started: float = field(default_factory=time.perf_counter, repr=False)

    def add_input(self, role: str, path) -> str:
        """Hash an input file under a location-independent role name."""
        digest = sha256_file(path)
        self.inputs[role] = digest
        self.input_paths[role] = str(path)
        return digest

    def add_upstream(self, path) -> str:
        """Hash an artifact of an earlier stage, keyed by its path under the output directory."""
        return self.add_input(Path(path).relative_to(self.output_dir).as_posix(), path)

    @property
    def manifest_id(self) -> str:
        return manifest_id(self.stage, self.config, self.inputs)

    def stamp(self, payload: Mapping[str, Any]) -> Dict[str, Any]:
        """Copy of a JSON artifact payload carrying this manifest's id."""
        return {**payload, 'manifest_id': self.manifest_id}

    def add_artifact(self, path) -> str:
        path = Path(path)
        digest = sha256_file(path)
        self.artifacts[path.relative_to(self.output_dir).as_posix()] = digest
        return digest

    def lap(self, name: str):
        self.timings[name] = round(time.perf_counter() - self._started, 3)

    def to_dict(self) -> Dict[str, Any]:
        return {
            'manifest_id': self.manifest_id,
            'stage': self.stage,
            'tool_version': self.tool_version,
            'config': self.config,
            'inputs': {role: {'sha256': digest, 'path': self.input_paths.get(role)}
                       for role, digest in self.inputs.items()},
            'artifacts': dict(sorted(self.artifacts.items())),
            'counts': self.counts,
            'timings_seconds': self.timings,
            'decoding': self.decoding,
        }

    def write(self) -> Path:
        self.lap('total')
        path = write_json(self.output_dir / MANIFEST_DIR / f"{self.stage}.json", self.to_dict())
        logger.debug(f"Wrote manifest {path} ({len(self.artifacts)} artifacts)")
        return path
