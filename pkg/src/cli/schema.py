"""
Experiment configuration schema.

An experiment document is a JSON object:

    {
      "name": "thin_monodromy",
      "description": "...",
      "task": "rank",
      "family": {
        "factors": [{"parameter": "lam"}, {"parameter": "2 - lam"}],
        "base": {"basepoint": [0.5, 1.0], "clearance": 0.25, "extra_punctures": []},
        "cover": {"variables": ["mu", "psi"],
                  "equations": ["mu**2 - (1 + lam)", "psi**2 + mu**2 - 3"],
                  "degree": 4, "start_sheet": 0}
      },
      "section": {"points": [["2", "sqrt(2)*psi"], ["3", "sqrt(6)*mu"]], "torsion_hint": null},
      "loops": [[1], [2]],
      "seed_kernel_words": [[2, 4, -2, -4]],
      "tolerances": {"ode_tol": 1e-12, "round_tol": 1e-4, "rel_tol": 1e-8},
      "options": {"max_word_len": 6},
      "output": {"path": null, "format": "json"}
    }

Complex numbers are plain numbers or [re, im] pairs. Words are lists of
signed 1-based generator indices; loops and seeds are always given in the
letters of the base.
"""

import hashlib
import json
from dataclasses import dataclass, field, replace
from enum import Enum
from typing import Any, Dict, List, Optional, Sequence

from ..core.errors import ConfigInvalid
from ..core.family import FamilySpec, SectionSpec, validate_section
from ..core.numerics import Tolerance
from ..tools.betti.betti_engine import Region
from ..tools.topology.topology_engine import LoopWord, free_reduce


class Task(Enum):
    """Experiment tasks (CLI subcommands)."""
    PERIODS = "periods"
    MONODROMY = "monodromy"
    COCYCLE = "cocycle"
    RANK = "rank"
    BETTI_GRID = "betti-grid"
    TORSION_CHECK = "torsion-check"
    VERIFY = "verify"


SECTION_TASKS = {Task.COCYCLE, Task.RANK, Task.BETTI_GRID, Task.TORSION_CHECK}

TOP_LEVEL_KEYS = {
    "name", "description", "task", "family", "section", "loops",
    "seed_kernel_words", "tolerances", "options", "output",
}

OPTION_KEYS = {
    "periods_at", "region", "resolution", "max_word_len", "max_torsion_order", "orbit_vector",
}

OUTPUT_FORMATS = ("json", "csv")


def parse_words(value: Any, what: str) -> List[LoopWord]:
    """List of words from JSON (a list of integer lists)."""
    if isinstance(value, dict) and "words" in value:
        value = value["words"]
    if not isinstance(value, list):
        raise ConfigInvalid(f"{what} must be a list of words, got {value!r}")
    words = []
    for item in value:
        if not isinstance(item, list) or not all(isinstance(x, int) and not isinstance(x, bool) for x in item):
            raise ConfigInvalid(f"{what}: a word is a list of signed integers, got {item!r}")
        if any(x == 0 for x in item):
            raise ConfigInvalid(f"{what}: letter 0 in {item!r}")
        words.append(free_reduce(item))
    return words


@dataclass
class OutputSpec:
    path: Optional[str] = None
    format: str = "json"

    def __post_init__(self):
        if self.format not in OUTPUT_FORMATS:
            raise ConfigInvalid(f"output format must be one of {OUTPUT_FORMATS}, got {self.format!r}")

    def to_dict(self) -> Dict[str, Any]:
        return {"path": self.path, "format": self.format}


@dataclass
class ExperimentConfig:
    """A validated experiment."""
    name: str
    task: Task
    family: Optional[FamilySpec] = None
    section: Optional[SectionSpec] = None
    loops: Optional[List[LoopWord]] = None
    seed_kernel_words: List[LoopWord] = field(default_factory=list)
    tolerances: Tolerance = field(default_factory=Tolerance)
    options: Dict[str, Any] = field(default_factory=dict)
    output: OutputSpec = field(default_factory=OutputSpec)
    description: str = ""

    def __post_init__(self):
        if self.task is not Task.VERIFY and self.family is None:
            raise ConfigInvalid(f"task {self.task.value} needs a family")
        if self.task in SECTION_TASKS and self.section is None:
            raise ConfigInvalid(f"task {self.task.value} needs a section")
        unknown = set(self.options) - OPTION_KEYS
        if unknown:
            raise ConfigInvalid(f"unknown options: {sorted(unknown)}")
        if "region" in self.options:
            Region.from_list(self.options["region"])
        if "resolution" in self.options:
            res = self.options["resolution"]
            if not (isinstance(res, list) and len(res) == 2 and all(isinstance(v, int) and v > 0 for v in res)):
                raise ConfigInvalid(f"resolution must be [nx, ny] with positive integers, got {res!r}")
        if "max_word_len" in self.options:
            if not (isinstance(self.options["max_word_len"], int) and self.options["max_word_len"] >= 1):
                raise ConfigInvalid("max_word_len must be a positive integer")
        if self.section is not None and self.family is not None:
            validate_section(self.section, self.family, self.tolerances)

    @classmethod
    def from_dict(cls, data: Dict[str, Any], tolerances: Optional[Tolerance] = None) -> "ExperimentConfig":
        """
        Parse and validate a document.

        Raises:
            ConfigInvalid: unknown keys, missing fields or inconsistent content.
        """
        if not isinstance(data, dict):
            raise ConfigInvalid("experiment must be a JSON object")
        unknown = set(data) - TOP_LEVEL_KEYS
        if unknown:
            raise ConfigInvalid(f"unknown top-level keys: {sorted(unknown)}")
        try:
            task = Task(data.get("task", ""))
        except ValueError:
            raise ConfigInvalid(f"unknown task {data.get('task')!r}; expected one of {[t.value for t in Task]}")

        base_tol = tolerances or Tolerance.from_settings()
        tol_data = data.get("tolerances", {}) or {}
        if not isinstance(tol_data, dict) or set(tol_data) - {"ode_tol", "round_tol", "rel_tol"}:
            raise ConfigInvalid(f"tolerances accepts ode_tol, round_tol, rel_tol; got {tol_data!r}")
        tol = Tolerance(**{**base_tol.to_dict(), **{k: float(v) for k, v in tol_data.items()}})

        family = FamilySpec.from_dict(data["family"]) if data.get("family") else None
        section = None
        if data.get("section"):
            variables = family.cover_variables if family is not None else ()
            section = SectionSpec.from_dict(data["section"], variables)
        output_data = data.get("output") or {}
        return cls(
            name=str(data.get("name", "experiment")),
            description=str(data.get("description", "")),
            task=task,
            family=family,
            section=section,
            loops=parse_words(data["loops"], "loops") if data.get("loops") is not None else None,
            seed_kernel_words=parse_words(data.get("seed_kernel_words", []), "seed_kernel_words"),
            tolerances=tol,
            options=dict(data.get("options", {}) or {}),
            output=OutputSpec(path=output_data.get("path"), format=output_data.get("format", "json")),
        )

    def to_dict(self) -> Dict[str, Any]:
        data: Dict[str, Any] = {
            "name": self.name,
            "description": self.description,
            "task": self.task.value,
            "tolerances": self.tolerances.to_dict(),
            "options": dict(self.options),
            "output": self.output.to_dict(),
            "seed_kernel_words": [list(w) for w in self.seed_kernel_words],
        }
        if self.family is not None:
            data["family"] = self.family.to_dict()
        if self.section is not None:
            data["section"] = self.section.to_dict()
        if self.loops is not None:
            data["loops"] = [list(w) for w in self.loops]
        return data

    def config_hash(self) -> str:
        """SHA-256 of the canonical JSON form."""
        canonical = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(canonical.encode("utf-8")).hexdigest()

    def with_overrides(self, task: Optional[Task] = None, out: Optional[str] = None,
                       max_word_len: Optional[int] = None,
                       seed_kernel_words: Optional[Sequence[LoopWord]] = None) -> "ExperimentConfig":
        """Copy with command-line overrides applied."""
        options = dict(self.options)
        if max_word_len is not None:
            options["max_word_len"] = int(max_word_len)
        output = self.output
        if out is not None:
            fmt = "csv" if str(out).endswith(".csv") else output.format
            output = OutputSpec(path=str(out), format=fmt)
        return replace(
            self,
            task=task or self.task,
            options=options,
            output=output,
            seed_kernel_words=list(seed_kernel_words) if seed_kernel_words is not None else self.seed_kernel_words,
        )
