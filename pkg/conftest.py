"""
Root pytest configuration.

Settings and user experiments go to a throwaway directory so the suite never
reads or writes ~/.config/relmon.
"""

import os
import sys
import tempfile
from pathlib import Path

project_root = Path(__file__).parent
sys.path.insert(0, str(project_root))

os.environ["RELMON_HOME"] = tempfile.mkdtemp(prefix="relmon-tests-")
for _variable in ("RELMON_ODE_TOL", "RELMON_ROUND_TOL", "RELMON_REL_TOL", "RELMON_PRECISION",
                  "RELMON_MAX_THREADS", "RELMON_LOG_LEVEL"):
    os.environ.pop(_variable, None)
