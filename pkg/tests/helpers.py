"""Shared test helpers: unprivileged execution and environment probing."""

import json
import os
import sys
import traceback

import pytest

from zeroroot import _linux
from zeroroot.runtime import LaunchConfig, LaunchError, launch

NOBODY = 65534
PR_SET_DUMPABLE = 4


def run_unprivileged(fn):
    """Call ``fn()`` in a forked child without privileges; return its JSON result.

    As root the child drops to nobody first, so namespace setup is exercised
    the way an ordinary user would hit it.  Exceptions come back as
    RuntimeError with the child's traceback.
    """
    r, w = os.pipe()
    sys.stdout.flush()
    sys.stderr.flush()
    pid = os.fork()
    if pid == 0:
        os.close(r)
        try:
            if os.geteuid() == 0:
                os.setgroups([])
                os.setresgid(NOBODY, NOBODY, NOBODY)
                os.setresuid(NOBODY, NOBODY, NOBODY)
                # a uid change clears the dumpable flag, which would leave
                # /proc/self owned by root; exec would have reset it
                _linux.prctl(PR_SET_DUMPABLE, 1)
            payload = {"ok": fn()}
        except BaseException:
            payload = {"error": traceback.format_exc()}
        try:
            with os.fdopen(w, "w") as f:
                f.write(json.dumps(payload))
        finally:
            os._exit(0)
    os.close(w)
    with os.fdopen(r, "rb") as f:
        data = f.read()
    os.waitpid(pid, 0)
    result = json.loads(data or b'{"error": "child died"}')
    if "error" in result:
        raise RuntimeError(result["error"])
    return result["ok"]


def make_owned(path: str, content: str = "", mode: int = 0o644) -> str:
    """Create a file the unprivileged test user owns (mapped to root inside)."""
    with open(path, "w") as f:
        f.write(content)
    os.chmod(path, mode)
    if os.geteuid() == 0:
        os.chown(path, NOBODY, NOBODY)
    return path


def _userns_available() -> bool:
    if not _linux.is_linux():
        return False
    try:
        return run_unprivileged(
            lambda: launch(LaunchConfig(["true"], filter=False)).exit_code == 0)
    except (RuntimeError, LaunchError):
        return False


USERNS = _userns_available()
needs_userns = pytest.mark.skipif(not USERNS, reason="unprivileged user namespaces unavailable")
