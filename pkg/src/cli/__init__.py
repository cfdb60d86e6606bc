"""
Command-line front end: experiment schema, task runners and the acceptance suite.
"""

from .schema import ExperimentConfig, OutputSpec, Task
from .commands import RunReport, build_cocycle_table, run

__all__ = ["ExperimentConfig", "OutputSpec", "Task", "RunReport", "build_cocycle_table", "run"]
