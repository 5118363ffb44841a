"""Build a tiny throwaway rootfs from host binaries.

Good enough for tests and demos: copies each program plus the shared
libraries ``ldd`` reports, and creates the usual mountpoints.  Not an image
builder.
"""

from __future__ import annotations

import os
import re
import shutil
import subprocess
from typing import Iterable

DEFAULT_PROGRAMS = ("sh", "chown", "stat", "touch", "id", "cat", "ls", "mknod",
                    "pwd", "true", "false", "echo")
_LDD_PATH = re.compile(r"(/\S+)")


def _libraries(binary: str) -> list[str]:
    try:
        out = subprocess.run(["ldd", binary], capture_output=True, text=True).stdout
    except FileNotFoundError:
        return []
    return [m.group(1) for line in out.splitlines() if (m := _LDD_PATH.search(line))]


def _copy(src: str, root: str) -> None:
    dest = os.path.join(root, src.lstrip("/"))
    if os.path.exists(dest):
        return
    os.makedirs(os.path.dirname(dest), exist_ok=True)
    shutil.copy2(os.path.realpath(src), dest)


def make_rootfs(root: str, programs: Iterable[str] = DEFAULT_PROGRAMS,
                mountpoints: Iterable[str] = ("proc", "sys", "dev", "tmp")) -> str:
    """Populate ``root`` and return it.  Programs missing on the host are skipped."""
    os.makedirs(root, exist_ok=True)
    for d in ("bin", "etc", *mountpoints):
        os.makedirs(os.path.join(root, d), exist_ok=True)
    for prog in programs:
        path = shutil.which(prog)
        if path is None:
            continue
        dest = os.path.join(root, "bin", prog)
        if not os.path.exists(dest):
            shutil.copy2(os.path.realpath(path), dest)
        for lib in _libraries(path):
            _copy(lib, root)
    with open(os.path.join(root, "etc", "passwd"), "w") as f:
        f.write("root:x:0:0:root:/:/bin/sh\n")
    with open(os.path.join(root, "etc", "group"), "w") as f:
        f.write("root:x:0:\n")
    return root
