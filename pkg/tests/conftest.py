import os
import shutil
import sys
import tempfile

import pytest

sys.path.insert(0, os.path.dirname(__file__))

from helpers import NOBODY  # noqa: E402
from zeroroot.scratch import make_rootfs  # noqa: E402


@pytest.fixture
def scratch_dir():
    """World-traversable temp dir owned by whoever runs unprivileged children."""
    d = tempfile.mkdtemp(prefix="zeroroot-test-", dir="/tmp")
    os.chmod(d, 0o755)
    if os.geteuid() == 0:
        os.chown(d, NOBODY, NOBODY)
    yield d
    shutil.rmtree(d, ignore_errors=True)


@pytest.fixture
def rootfs(scratch_dir):
    root = make_rootfs(os.path.join(scratch_dir, "root"))
    if os.geteuid() == 0:
        for dirpath, dirnames, filenames in os.walk(root):
            os.lchown(dirpath, NOBODY, NOBODY)
            for n in filenames:
                os.lchown(os.path.join(dirpath, n), NOBODY, NOBODY)
    return root


# --- acceptance reporting -------------------------------------------------

_ACCEPTANCE: dict[int, tuple[str, str, float]] = {}


def pytest_configure(config):
    config.addinivalue_line("markers", "acceptance(n, title): numbered acceptance criterion")


@pytest.hookimpl(hookwrapper=True)
def pytest_runtest_makereport(item, call):
    outcome = yield
    rep = outcome.get_result()
    m = item.get_closest_marker("acceptance")
    if m is None:
        return
    n, title = m.args
    if rep.when == "call" or (rep.when == "setup" and rep.outcome != "passed"):
        verdict = {"passed": "PASS", "failed": "FAIL", "skipped": "SKIP"}[rep.outcome]
        _ACCEPTANCE[n] = (title, verdict, rep.duration)


def pytest_terminal_summary(terminalreporter):
    if not _ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(_ACCEPTANCE):
        title, verdict, dur = _ACCEPTANCE[n]
        terminalreporter.write_line(f"criterion {n}: {verdict}  {title}  ({dur:.2f}s)")
