"""Full package-manager build in a distribution image.

Needs network access and an unpacked distribution root filesystem owned by
the invoking user, given as ZEROROOT_DISTRO_ROOTFS.  Deselected by default;
run with ``pytest -m integration``.
"""

import os

import pytest

from helpers import needs_userns
from zeroroot.runtime import LaunchConfig, launch

ROOTFS = os.environ.get("ZEROROOT_DISTRO_ROOTFS")

pytestmark = [pytest.mark.integration, needs_userns,
              pytest.mark.skipif(not ROOTFS, reason="ZEROROOT_DISTRO_ROOTFS not set")]


def _install_command(root):
    if os.path.exists(os.path.join(root, "usr/bin/apt-get")):
        return "apt-get update && apt-get install -y openssh-client"
    if os.path.exists(os.path.join(root, "usr/bin/dnf")):
        return "dnf install -y openssh"
    return "yum install -y openssh"


def _run(filter_on):
    cmd = _install_command(ROOTFS)
    return launch(LaunchConfig(["/bin/sh", "-c", cmd], rootfs=ROOTFS, filter=filter_on)).exit_code


def test_package_install_succeeds_with_filter():
    assert _run(True) == 0


def test_package_install_fails_without_filter():
    assert _run(False) != 0
