"""Self-checking probes for zero-consistency root emulation.

Every probe issues the privileged syscalls directly, by number, and then
inspects the result with independent reads (stat, getres*id, getgroups,
capget).  A faked call must return 0 *and* leave that state untouched.

Probes run in forked children so that an unfiltered run which really does
change identity or drop capabilities cannot contaminate later probes.
"""

from __future__ import annotations

import ctypes
import json
import os
import stat
import sys
import tempfile
from dataclasses import asdict, dataclass
from typing import Callable, TextIO

from . import _linux
from .runtime import selftest_call
from .systable import SELFTEST_SYSCALL, SyscallClass, builtin_table

TARGET_UID, TARGET_GID = 1234, 5678
NEW_ID = 12
NEW_GROUPS = (7, 8, 9)


@dataclass
class ProbeReport:
    name: str
    expected: str
    observed: str
    verdict: str  # "pass" | "fail" | "skip"
    reason: str = ""

    @classmethod
    def from_checks(cls, name: str, checks: list[tuple[str, str]]) -> "ProbeReport":
        """Build a report from (expected, observed) sub-check pairs."""
        ran = [c for c in checks if not c[0].endswith("skip")]
        expected = "; ".join(e for e, _ in checks)
        observed = "; ".join(o for _, o in checks)
        if not ran:
            return cls(name, expected, observed, "skip", "no applicable syscalls on this arch")
        return cls(name, expected, observed, "pass" if expected == observed else "fail")


def _numbers(cls: SyscallClass) -> list[tuple[str, int | None]]:
    table = builtin_table()
    arch = _linux.host_arch(table)
    return [(s.name, s.number(arch)) for s in table.by_class(cls)]


def _rc(rc: int, err: int) -> str:
    return "rc=0" if rc == 0 else f"rc={rc}({_linux.errno_name(err)})"


def _skip(name: str) -> tuple[str, str]:
    return f"{name}: skip", f"{name}: skip"


def probe_chown(path: str | None = None) -> ProbeReport:
    """Ownership syscalls return 0 and the owner stays put."""
    with tempfile.TemporaryDirectory(prefix="zeroroot-chown-") as tmp:
        if path is None:
            path = os.path.join(tmp, "f")
            with open(path, "w"):
                pass
        before = os.lstat(path)
        want = f"rc=0 owner={before.st_uid}:{before.st_gid}"
        bpath = ctypes.c_char_p(os.fsencode(path))
        checks = []
        fd = os.open(path, os.O_RDONLY)
        try:
            for name, nr in _numbers(SyscallClass.OWNERSHIP):
                if nr is None:
                    checks.append(_skip(name))
                    continue
                base = name.removesuffix("32")
                if base == "fchown":
                    rc, err = _linux.raw_syscall(nr, fd, TARGET_UID, TARGET_GID)
                elif base == "fchownat":
                    rc, err = _linux.raw_syscall(nr, _linux.AT_FDCWD, bpath,
                                                 TARGET_UID, TARGET_GID, 0)
                else:
                    rc, err = _linux.raw_syscall(nr, bpath, TARGET_UID, TARGET_GID)
                after = os.lstat(path)
                checks.append((f"{name}: {want}",
                               f"{name}: {_rc(rc, err)} owner={after.st_uid}:{after.st_gid}"))
        finally:
            os.close(fd)
    return ProbeReport.from_checks("chown", checks)


def _identity_state() -> str:
    return (f"resuid={os.getresuid()} resgid={os.getresgid()} "
            f"groups={sorted(os.getgroups())} caps={_linux.capget()}")


def _identity_args(name: str, legacy16: bool):
    base = name.removesuffix("32")
    if base == "setgroups":
        ctype = ctypes.c_uint16 if legacy16 else ctypes.c_uint32
        return (len(NEW_GROUPS), (ctype * len(NEW_GROUPS))(*NEW_GROUPS))
    if base == "capset":
        hdr = _linux.CapHeader(_linux.LINUX_CAPABILITY_VERSION_3, 0)
        return (ctypes.pointer(hdr), (_linux.CapData * 2)())
    if base in ("setresuid", "setresgid"):
        return (NEW_ID, NEW_ID, NEW_ID)
    if base in ("setreuid", "setregid"):
        return (NEW_ID, NEW_ID)
    return (NEW_ID,)


def probe_identity() -> ProbeReport:
    """set*id, setgroups and capset return 0; ids, groups, caps unchanged."""
    before = _identity_state()
    specs = _numbers(SyscallClass.IDENTITY)
    has32 = {n for n, nr in specs if n.endswith("32") and nr is not None}
    checks = []
    for name, nr in specs:
        if nr is None:
            checks.append(_skip(name))
            continue
        args = _identity_args(name, legacy16=f"{name}32" in has32)
        rc, err = _linux.raw_syscall(nr, *args)
        after = _identity_state()
        checks.append((f"{name}: rc=0 state=unchanged",
                       f"{name}: {_rc(rc, err)} state="
                       + ("unchanged" if after == before else f"changed({after})")))
    return ProbeReport.from_checks("identity", checks)


_DEVICE_KINDS = (("chr", stat.S_IFCHR, os.makedev(1, 3)),
                 ("blk", stat.S_IFBLK, os.makedev(7, 0)))


def _entry(path: str) -> str:
    try:
        st = os.lstat(path)
    except FileNotFoundError:
        return "absent"
    if stat.S_ISFIFO(st.st_mode):
        return "fifo"
    if stat.S_ISREG(st.st_mode):
        return "regular"
    return stat.filemode(st.st_mode)[0]


def _mknod(nr: int, name: str, path: str, mode: int, dev: int) -> tuple[int, int]:
    bpath = ctypes.c_char_p(os.fsencode(path))
    if name == "mknodat":
        return _linux.raw_syscall(nr, _linux.AT_FDCWD, bpath, mode, dev)
    return _linux.raw_syscall(nr, bpath, mode, dev)


def probe_mknod(directory: str | None = None) -> list[ProbeReport]:
    """Device nodes are faked; FIFOs and regular files are really created.

    Returns three reports: mknod_device, mknod_fifo, mknod_regular.
    """
    kinds = {
        "mknod_device": [(k, t, dev, "absent") for k, t, dev in _DEVICE_KINDS],
        "mknod_fifo": [("fifo", stat.S_IFIFO, 0, "fifo")],
        "mknod_regular": [("reg", 0, 0, "regular")],
    }
    reports = []
    with tempfile.TemporaryDirectory(prefix="zeroroot-mknod-", dir=directory) as tmp:
        for probe, cases in kinds.items():
            checks = []
            for name, nr in _numbers(SyscallClass.MKNOD_INSPECT):
                for kind, ftype, dev, want in cases:
                    label = f"{name}/{kind}"
                    if nr is None:
                        checks.append(_skip(label))
                        continue
                    path = os.path.join(tmp, f"{name}-{kind}")
                    rc, err = _mknod(nr, name, path, ftype | 0o600, dev)
                    checks.append((f"{label}: rc=0 entry={want}",
                                   f"{label}: {_rc(rc, err)} entry={_entry(path)}"))
            reports.append(ProbeReport.from_checks(probe, checks))
    return reports


def probe_selftest() -> ProbeReport:
    rc, err = selftest_call()
    return ProbeReport.from_checks("selftest", [(f"{SELFTEST_SYSCALL}: rc=0",
                                                 f"{SELFTEST_SYSCALL}: {_rc(rc, err)}")])


def probe_inherit() -> ProbeReport:
    """Fork twice and run the chown probe in the grandchild."""

    def grandchild():
        return [probe_chown()]

    def child():
        return _in_child(grandchild)

    reports = _in_child(child)
    inner = reports[0] if reports else None
    observed = f"grandchild chown: {inner.verdict if inner else 'no report'}"
    if inner and inner.verdict == "fail":
        observed += f" ({inner.observed})"
    return ProbeReport.from_checks("inherit", [("grandchild chown: pass", observed)])


def _in_child(fn: Callable[[], list[ProbeReport]]) -> list[ProbeReport]:
    """Run ``fn`` in a forked child and return the reports it produced."""
    r, w = os.pipe()
    sys.stdout.flush()
    pid = os.fork()
    if pid == 0:
        os.close(r)
        try:
            payload = json.dumps([asdict(x) for x in fn()])
            with os.fdopen(w, "w") as f:
                f.write(payload)
        finally:
            os._exit(0)
    os.close(w)
    with os.fdopen(r) as f:
        data = f.read()
    os.waitpid(pid, 0)
    return [ProbeReport(**d) for d in json.loads(data)] if data else []


PROBES: list[tuple[str, Callable[[], ProbeReport | list[ProbeReport]]]] = [
    ("chown", probe_chown),
    ("identity", probe_identity),
    ("mknod", probe_mknod),
    ("selftest", probe_selftest),
    ("inherit", probe_inherit),
]

# which syscall classes each report exercises
PROBE_CLASSES = {
    "chown": SyscallClass.OWNERSHIP,
    "identity": SyscallClass.IDENTITY,
    "mknod_device": SyscallClass.MKNOD_INSPECT,
    "mknod_fifo": SyscallClass.MKNOD_INSPECT,
    "mknod_regular": SyscallClass.MKNOD_INSPECT,
    "selftest": SyscallClass.SELF_TEST,
    "inherit": SyscallClass.OWNERSHIP,
}

# verdicts with the filter off, inside a user namespace
UNFILTERED_VERDICTS = {
    "chown": "fail",
    "identity": "fail",
    "mknod_device": "fail",
    "mknod_fifo": "pass",
    "mknod_regular": "pass",
    "selftest": "fail",
    "inherit": "fail",
}


def _as_list(fn):
    def run():
        r = fn()
        return r if isinstance(r, list) else [r]
    return run


def collect() -> list[ProbeReport]:
    reports = []
    for _, fn in PROBES:
        reports += _in_child(_as_list(fn))
    return reports


def format_reports(reports: list[ProbeReport], fmt: str = "text") -> str:
    if fmt == "json":
        return json.dumps([asdict(r) for r in reports], indent=2) + "\n"
    lines = [f"1..{len(reports)}"]
    for i, r in enumerate(reports, 1):
        if r.verdict == "pass":
            lines.append(f"ok {i} - {r.name}")
        elif r.verdict == "skip":
            lines.append(f"ok {i} - {r.name} # SKIP {r.reason}")
        else:
            lines.append(f"not ok {i} - {r.name} # expected {r.expected} observed {r.observed}")
    return "\n".join(lines) + "\n"


def run_all(fmt: str = "text", out: TextIO | None = None) -> tuple[list[ProbeReport], int]:
    """Run every probe, print the report, and return ``(reports, exit status)``."""
    reports = collect()
    (out or sys.stdout).write(format_reports(reports, fmt))
    (out or sys.stdout).flush()
    return reports, int(any(r.verdict == "fail" for r in reports))
