"""Type III container launch: unprivileged user+mount namespaces plus the
root-emulation seccomp filter.

Everything between ``fork`` and ``exec`` happens in the child, on a single
thread, in this order: namespaces, rootfs, filter, self-test.  The filter
goes in last so that setup code is never lied to.  The child reports each
stage over a close-on-exec pipe; EOF without an error means exec happened.
"""

from __future__ import annotations

import ctypes
import json
import logging
import os
import posixpath
import sys
from dataclasses import dataclass, field
from typing import Callable, Mapping, Optional, Sequence

from . import _linux
from .bpfgen import BpfProgram, generate, serialize_binary, validate
from .rewrite import rewrite_apt
from .systable import SELFTEST_SYSCALL, UnknownArch, builtin_table

log = logging.getLogger(__name__)

EXIT_LAUNCHER = 125
EXIT_NOT_EXECUTABLE = 126
EXIT_NOT_FOUND = 127

NO_SELFTEST_ENV = "ZEROROOT_NO_SELFTEST"
SHELLS = frozenset({"sh", "bash", "dash", "ash", "ksh", "zsh", "busybox"})
APT_REWRITE_MODES = ("auto", "on", "off")


class LaunchError(Exception):
    """A launch stage failed before the command could be exec'd."""

    def __init__(self, stage: str, message: str):
        super().__init__(f"{stage}: {message}")
        self.stage = stage
        self.message = message


@dataclass
class LaunchConfig:
    command: Sequence[str]
    rootfs: Optional[str] = None
    env: Optional[Mapping[str, str]] = None
    apt_rewrite: str = "auto"
    map_to_root: bool = True
    filter: bool = True
    workdir: Optional[str] = None
    program: Optional[BpfProgram] = None  # defaults to the host-arch filter

    def __post_init__(self):
        self.command = list(self.command)
        if not self.command:
            raise ValueError("command must have at least one element")
        if self.rootfs is not None and not os.path.isdir(self.rootfs):
            raise ValueError(f"rootfs {self.rootfs!r} is not a directory")
        if self.apt_rewrite not in APT_REWRITE_MODES:
            raise ValueError(f"apt_rewrite must be one of {APT_REWRITE_MODES}")


@dataclass
class ContainerStatus:
    exit_code: int
    self_test: str  # "passed" | "failed" | "skipped"
    warnings: list[str] = field(default_factory=list)


# ---------------------------------------------------------------------------
# stages; each runs in the process that will become the container


def _userns_hint() -> str:
    hints = []
    for path, bad in (("/proc/sys/kernel/unprivileged_userns_clone", "0"),
                      ("/proc/sys/user/max_user_namespaces", "0"),
                      ("/proc/sys/kernel/apparmor_restrict_unprivileged_userns", "1")):
        try:
            with open(path) as f:
                if f.read().strip() == bad:
                    hints.append(f"{path} is {bad}")
        except OSError:
            pass
    if hints:
        return "; likely cause: " + ", ".join(hints)
    return "; check that unprivileged user namespaces are enabled"


def _write(path: str, text: str) -> None:
    try:
        with open(path, "w") as f:
            f.write(text)
    except OSError as e:
        raise LaunchError("namespaces", f"cannot write {text.strip()!r} to {path}: {e.strerror}")


def create_namespaces(cfg: LaunchConfig) -> None:
    """Enter new user and mount namespaces, mapping ourselves to root.

    The id maps are single lines written by the process itself; no setuid
    helper is involved.
    """
    uid, gid = os.getuid(), os.getgid()
    try:
        _linux.unshare(_linux.CLONE_NEWUSER | _linux.CLONE_NEWNS)
    except OSError as e:
        raise LaunchError("namespaces",
                          f"cannot create user+mount namespaces: {e.strerror}{_userns_hint()}")
    inner_uid, inner_gid = (0, 0) if cfg.map_to_root else (uid, gid)
    _write("/proc/self/setgroups", "deny\n")
    _write("/proc/self/uid_map", f"{inner_uid} {uid} 1\n")
    _write("/proc/self/gid_map", f"{inner_gid} {gid} 1\n")


def enter_rootfs(cfg: LaunchConfig) -> list[str]:
    """Bind-mount and pivot into ``cfg.rootfs``; return warnings."""
    warnings = []
    root = os.path.realpath(cfg.rootfs)
    if not (os.path.isdir(os.path.join(root, "bin"))
            or os.path.isdir(os.path.join(root, "usr", "bin"))):
        raise LaunchError("rootfs", f"{root} does not look like an image root; expected "
                                    "bin/ or usr/bin/ (plus etc/, and proc/ sys/ dev/ mountpoints)")
    try:
        _linux.mount(None, "/", None, _linux.MS_REC | _linux.MS_PRIVATE)
        _linux.mount(root, root, None, _linux.MS_BIND | _linux.MS_REC)
        for d in ("proc", "sys", "dev"):
            target = os.path.join(root, d)
            if os.path.isdir(target) and not os.path.islink(target):
                _linux.mount("/" + d, target, None, _linux.MS_BIND | _linux.MS_REC)
            else:
                warnings.append(f"/{d} not bind-mounted: {target} is not a directory")
        os.chdir(root)
    except OSError as e:
        raise LaunchError("rootfs", str(e))
    try:
        _linux.pivot_root(".", ".")
        _linux.umount2(".", _linux.MNT_DETACH)
    except OSError as e:
        warnings.append(f"pivot_root failed ({e.strerror}), falling back to chroot")
        try:
            os.chroot(".")
        except OSError as e2:
            raise LaunchError("rootfs", f"chroot {root}: {e2.strerror}")
    try:
        os.chdir(cfg.workdir or "/")
    except OSError as e:
        raise LaunchError("rootfs", f"workdir {cfg.workdir}: {e.strerror}")
    return warnings


class _SockFprog(ctypes.Structure):
    _fields_ = [("len", ctypes.c_ushort), ("filter", ctypes.c_void_p)]


def install_filter(p: BpfProgram) -> None:
    """Set no_new_privs and install ``p``; irreversible for this process tree."""
    problems = validate(p)
    if problems:
        raise LaunchError("filter", "; ".join(map(str, problems)))
    buf = ctypes.create_string_buffer(serialize_binary(p), len(p) * 8)
    prog = _SockFprog(len(p), ctypes.addressof(buf))
    try:
        _linux.prctl(_linux.PR_SET_NO_NEW_PRIVS, 1)
    except OSError as e:
        raise LaunchError("filter", f"cannot set no_new_privs: {e.strerror}")
    try:
        _linux.prctl(_linux.PR_SET_SECCOMP, _linux.SECCOMP_MODE_FILTER,
                     ctypes.c_void_p(ctypes.addressof(prog)))
    except OSError as e:
        raise LaunchError("filter", f"seccomp filter install failed: {e.strerror}; "
                                    "filter mode needs Linux 3.5 or later with CONFIG_SECCOMP_FILTER")


def selftest_call() -> tuple[int, int]:
    """Issue the self-test syscall with zero arguments; ``(rc, errno)``."""
    nr = builtin_table().spec(SELFTEST_SYSCALL).number(_linux.host_arch())
    return _linux.raw_syscall(nr, 0, 0, 0, 0)


def self_test() -> str:
    """"passed" iff the self-test syscall was faked to return 0.

    Only meaningful after ``install_filter``.  Without a filter an
    unprivileged caller gets EPERM, or ENOSYS on kernels built without
    kexec, and the result is "failed".
    """
    rc, _ = selftest_call()
    return "passed" if rc == 0 else "failed"


# ---------------------------------------------------------------------------
# orchestration


def shell_string_form(command: Sequence[str]) -> Optional[int]:
    """Index of the shell script string in ``command``, or None for vector form.

    ``sh -c STRING ...`` -> 2; a single argument containing whitespace -> 0.
    """
    if (len(command) >= 3 and posixpath.basename(command[0]) in SHELLS
            and command[1] == "-c"):
        return 2
    if len(command) == 1 and any(c.isspace() for c in command[0]):
        return 0
    return None


def apply_apt_rewrite(command: Sequence[str], mode: str) -> tuple[list[str], list[str]]:
    """Return the (possibly rewritten) argv and any warnings."""
    command = list(command)
    idx = shell_string_form(command)
    if idx is None:
        return command, []
    if idx == 0:
        command = ["/bin/sh", "-c", command[0]]
        idx = 2
    if mode == "off":
        return command, []
    out = rewrite_apt(command[idx])
    if out.fail_open:
        if mode == "on":
            raise LaunchError("rewrite", "; ".join(out.warnings))
        return command, list(out.warnings)
    command[idx] = out.text
    return command, []


def filter_program(cfg: LaunchConfig) -> BpfProgram:
    if cfg.program is not None:
        return cfg.program
    table = builtin_table()
    try:
        return generate(table, _linux.host_arch(table))
    except UnknownArch as e:
        raise LaunchError("filter", str(e))


def _send(fd: int, **msg) -> None:
    os.write(fd, (json.dumps(msg) + "\n").encode())


def _child(cfg: LaunchConfig, prog: Optional[BpfProgram], command: list[str],
           env: Mapping[str, str], fd: int, target: Optional[Callable[[], int]]) -> None:
    stage = "preflight"
    try:
        n = _linux.thread_count()
        if n != 1:
            raise LaunchError(stage, f"setup must be single-threaded, found {n} threads")
        stage = "namespaces"
        create_namespaces(cfg)
        if cfg.rootfs is not None:
            stage = "rootfs"
            for w in enter_rootfs(cfg):
                _send(fd, kind="warning", message=w)
        elif cfg.workdir:
            os.chdir(cfg.workdir)
        if prog is not None:
            stage = "filter"
            install_filter(prog)
            if os.environ.get(NO_SELFTEST_ENV) == "1":
                _send(fd, kind="selftest", result="skipped")
            else:
                stage = "self-test"
                rc, err = selftest_call()
                if rc != 0:
                    _send(fd, kind="selftest", result="failed",
                          message=f"{SELFTEST_SYSCALL} returned {rc} "
                                  f"({_linux.errno_name(err)}); filter is not active")
                    os._exit(EXIT_LAUNCHER)
                _send(fd, kind="selftest", result="passed")
        else:
            _send(fd, kind="selftest", result="skipped")
    except LaunchError as e:
        _send(fd, kind="error", stage=e.stage, message=e.message)
        os._exit(EXIT_LAUNCHER)
    except BaseException as e:  # noqa: BLE001 -- nothing may escape a forked child
        _send(fd, kind="error", stage=stage, message=f"{type(e).__name__}: {e}")
        os._exit(EXIT_LAUNCHER)

    if target is not None:
        os.close(fd)
        code = EXIT_LAUNCHER
        try:
            code = target()
        finally:
            sys.stdout.flush()
            sys.stderr.flush()
            os._exit(code if isinstance(code, int) else 0)
    try:
        os.execvpe(command[0], command, dict(env))
    except OSError as e:
        code = EXIT_NOT_FOUND if isinstance(e, FileNotFoundError) else EXIT_NOT_EXECUTABLE
        _send(fd, kind="exec-error", code=code, message=f"{command[0]}: {e.strerror}")
        os._exit(code)


def launch(cfg: LaunchConfig, target: Optional[Callable[[], int]] = None) -> ContainerStatus:
    """Run ``cfg.command`` in a new container and wait for it.

    If ``target`` is given it is called in the container instead of exec'ing
    the command, and its return value becomes the exit code.

    Raises LaunchError (with ``.stage``) if setup fails before exec.
    """
    if not _linux.is_linux():
        raise LaunchError("preflight", "containers need Linux")
    warnings: list[str] = []
    command, w = apply_apt_rewrite(cfg.command, cfg.apt_rewrite)
    for msg in w:
        log.warning(msg)
    warnings += w
    prog = filter_program(cfg) if cfg.filter else None
    if prog is not None and validate(prog):
        raise LaunchError("filter", "; ".join(map(str, validate(prog))))
    env = dict(os.environ if cfg.env is None else cfg.env)

    sys.stdout.flush()
    sys.stderr.flush()
    r, wfd = os.pipe()
    pid = os.fork()
    if pid == 0:
        os.close(r)
        try:
            _child(cfg, prog, command, env, wfd, target)
        finally:
            os._exit(EXIT_LAUNCHER)
    os.close(wfd)
    self_test = "skipped"
    error = None
    with os.fdopen(r, "rb") as f:
        for line in f:
            m = json.loads(line)
            kind = m["kind"]
            if kind == "error":
                error = LaunchError(m["stage"], m["message"])
            elif kind == "selftest":
                self_test = m["result"]
                if self_test == "failed":
                    log.error("self-test failed: %s", m["message"])
                    warnings.append(m["message"])
            elif kind == "warning":
                log.warning(m["message"])
                warnings.append(m["message"])
            elif kind == "exec-error":
                log.error(m["message"])
                warnings.append(m["message"])
    _, status = os.waitpid(pid, 0)
    if error is not None:
        raise error
    code = os.waitstatus_to_exitcode(status)
    if code < 0:
        code = 128 - code
    return ContainerStatus(code, self_test, warnings)
