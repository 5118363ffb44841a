import glob
import os
import subprocess
import sys

import pytest

from helpers import USERNS

DEMOS = sorted(glob.glob(os.path.join(os.path.dirname(__file__), "..", "demos", "*.py")))


@pytest.mark.parametrize("path", DEMOS, ids=os.path.basename)
def test_demo_runs(path):
    if "zero_consistency" in path and not USERNS:
        pytest.skip("needs unprivileged user namespaces")
    r = subprocess.run([sys.executable, path], capture_output=True, text=True, timeout=60)
    assert r.returncode == 0, r.stderr
