"""
Experiment Store
Finds, loads and saves experiment configuration documents: the bundled
experiments shipped with the package and the user's own.
"""

import logging
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Any, Dict, List, Optional

from ..config import config
from ..utils.file_utils import read_json, write_json
from .errors import ConfigInvalid

logger = logging.getLogger(__name__)


@dataclass
class ExperimentMetadata:
    """Summary of a stored experiment."""
    name: str
    description: str
    task: str
    path: str
    bundled: bool


class ExperimentStore:
    """
    Index of experiment documents by name.

    User experiments shadow bundled ones of the same name.
    """

    def __init__(self, bundled_dir: Path = None, user_dir: Path = None, defer_load: bool = False):
        self._bundled_dir = Path(bundled_dir) if bundled_dir else config.experiments_directory
        self._user_dir = Path(user_dir) if user_dir else config.user_experiments_directory
        self._cache: Dict[str, ExperimentMetadata] = {}
        self._loaded = False
        if not defer_load:
            self._load_cache()
        logger.debug(f"Experiment store: bundled={self._bundled_dir}, user={self._user_dir}")

    def _ensure_loaded(self):
        if not self._loaded:
            self._load_cache()

    def _load_cache(self):
        self._cache.clear()
        for directory, bundled in ((self._bundled_dir, True), (self._user_dir, False)):
            if not directory.is_dir():
                continue
            for path in sorted(directory.glob("*.json")):
                try:
                    data = read_json(path)
                except ConfigInvalid as e:
                    logger.warning(f"Skipping experiment {path}: {e}")
                    continue
                self._cache[path.stem] = ExperimentMetadata(
                    name=path.stem,
                    description=str(data.get("description", "")),
                    task=str(data.get("task", "")),
                    path=str(path),
                    bundled=bundled,
                )
        self._loaded = True

    def list_experiments(self) -> List[ExperimentMetadata]:
        self._ensure_loaded()
        return [self._cache[name] for name in sorted(self._cache)]

    def resolve(self, name_or_path: str) -> Path:
        """
        Path of an experiment given by file path or by bare name.

        Raises:
            ConfigInvalid: nothing matches.
        """
        candidate = Path(name_or_path)
        if candidate.suffix == ".json" and candidate.exists():
            return candidate
        self._ensure_loaded()
        entry = self._cache.get(candidate.stem if candidate.suffix == ".json" else str(name_or_path))
        if entry is None:
            raise ConfigInvalid(f"no experiment file or bundled experiment named {name_or_path!r}")
        return Path(entry.path)

    def load(self, name_or_path: str) -> Dict[str, Any]:
        """Raw experiment document; `name` defaults to the file stem."""
        path = self.resolve(name_or_path)
        data = read_json(path)
        if not isinstance(data, dict):
            raise ConfigInvalid(f"experiment {path} is not a JSON object")
        data.setdefault("name", path.stem)
        logger.info(f"Loaded experiment {data['name']} from {path}")
        return data

    def save(self, name: str, data: Dict[str, Any]) -> Path:
        """Write an experiment document to the user directory."""
        safe_name = "".join(c if c.isalnum() or c in "-_" else "_" for c in name)
        document = dict(data)
        document["name"] = safe_name
        path = write_json(self._user_dir / f"{safe_name}.json", document)
        self._cache[safe_name] = ExperimentMetadata(
            name=safe_name,
            description=str(document.get("description", "")),
            task=str(document.get("task", "")),
            path=str(path),
            bundled=False,
        )
        logger.info(f"Experiment saved: {safe_name}")
        return path

    def describe(self) -> List[Dict[str, Any]]:
        return [asdict(meta) for meta in self.list_experiments()]


_store: Optional[ExperimentStore] = None


def get_store() -> ExperimentStore:
    """Process-wide store over the configured directories."""
    global _store
    if _store is None:
        _store = ExperimentStore()
    return _store
