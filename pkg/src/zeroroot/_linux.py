"""Thin ctypes layer over the Linux calls the runtime and probes need."""

from __future__ import annotations

import ctypes
import ctypes.util
import errno
import os
import platform

from .systable import Arch, SyscallTable, UnknownArch, builtin_table

CLONE_NEWNS = 0x00020000
CLONE_NEWUSER = 0x10000000

MS_BIND = 0x1000
MS_REC = 0x4000
MS_PRIVATE = 1 << 18
MNT_DETACH = 2

PR_SET_SECCOMP = 22
PR_SET_NO_NEW_PRIVS = 38
PR_GET_NO_NEW_PRIVS = 39
SECCOMP_MODE_FILTER = 2

AT_FDCWD = -100

# syscalls we call directly that are not part of the filter table
EXTRA_NUMBERS = {
    "pivot_root": {"x86_64": 155, "aarch64": 41, "ppc64le": 203, "s390x": 217,
                   "riscv64": 41, "arm": 218},
}

_libc = None


def libc():
    global _libc
    if _libc is None:
        _libc = ctypes.CDLL(ctypes.util.find_library("c") or None, use_errno=True)
        _libc.syscall.restype = ctypes.c_long
    return _libc


def is_linux() -> bool:
    return platform.system() == "Linux"


def host_arch(table: SyscallTable | None = None) -> Arch:
    table = table or builtin_table()
    machine = platform.machine()
    try:
        return table.arch(machine)
    except UnknownArch:
        raise UnknownArch(f"host machine {machine!r} is not in the syscall table") from None


def _check(rc: int, what: str) -> int:
    if rc == -1:
        e = ctypes.get_errno()
        raise OSError(e, f"{what}: {os.strerror(e)}")
    return rc


def raw_syscall(nr: int, *args) -> tuple[int, int]:
    """Issue syscall ``nr``; return ``(return value, errno)`` without raising."""
    ctypes.set_errno(0)
    cargs = [ctypes.c_long(a) if isinstance(a, int) else a
             for a in args]
    rc = libc().syscall(ctypes.c_long(nr), *cargs)
    return rc, (ctypes.get_errno() if rc == -1 else 0)


def unshare(flags: int) -> None:
    _check(libc().unshare(ctypes.c_int(flags)), "unshare")


def mount(source: str | None, target: str, fstype: str | None, flags: int,
          data: str | None = None) -> None:
    enc = lambda s: s.encode() if s is not None else None
    _check(libc().mount(enc(source), enc(target), enc(fstype), ctypes.c_ulong(flags),
                        enc(data)), f"mount {source} -> {target}")


def umount2(target: str, flags: int) -> None:
    _check(libc().umount2(target.encode(), ctypes.c_int(flags)), f"umount {target}")


def pivot_root(new_root: str, put_old: str) -> None:
    nr = EXTRA_NUMBERS["pivot_root"][host_arch().name]
    rc, err = raw_syscall(nr, ctypes.c_char_p(new_root.encode()),
                          ctypes.c_char_p(put_old.encode()))
    if rc == -1:
        raise OSError(err, f"pivot_root: {os.strerror(err)}")


def prctl(option: int, arg2: int = 0, arg3=0, arg4: int = 0, arg5: int = 0) -> int:
    return _check(libc().prctl(ctypes.c_int(option), ctypes.c_ulong(arg2),
                               arg3 if isinstance(arg3, ctypes.c_void_p) else ctypes.c_ulong(arg3),
                               ctypes.c_ulong(arg4), ctypes.c_ulong(arg5)),
                  f"prctl({option})")


def thread_count() -> int:
    return len(os.listdir("/proc/self/task"))


class CapHeader(ctypes.Structure):
    _fields_ = [("version", ctypes.c_uint32), ("pid", ctypes.c_int)]


class CapData(ctypes.Structure):
    _fields_ = [("effective", ctypes.c_uint32), ("permitted", ctypes.c_uint32),
                ("inheritable", ctypes.c_uint32)]


LINUX_CAPABILITY_VERSION_3 = 0x20080522


def capget() -> tuple[int, int, int]:
    """(effective, permitted, inheritable) as 64-bit masks."""
    hdr = CapHeader(LINUX_CAPABILITY_VERSION_3, 0)
    data = (CapData * 2)()
    _check(libc().capget(ctypes.byref(hdr), data), "capget")
    join = lambda f: getattr(data[0], f) | (getattr(data[1], f) << 32)
    return join("effective"), join("permitted"), join("inheritable")


def errno_name(err: int) -> str:
    return errno.errorcode.get(err, str(err))
