"""Userspace interpreter for the classic-BPF subset emitted by bpfgen.

This is the oracle for filter behaviour: it runs a program over a
serialized ``struct seccomp_data`` exactly as the kernel would, without
needing a Linux host.
"""

from __future__ import annotations

import stat
import struct
from dataclasses import dataclass, field
from typing import Iterable, Optional

from .bpfgen import (ALLOW, AND_K, FAKE_SUCCESS, JA, JEQ_K, LD_W_ABS, MODE_ARG,
                     RET_K, SECCOMP_DATA_SIZE, BpfProgram,
                     FilterAction)
from .systable import Arch, SyscallClass, SyscallTable, builtin_table, classify

# the seven file types plus "no type bits", which mknod treats as regular
FILE_TYPES = (0, stat.S_IFIFO, stat.S_IFCHR, stat.S_IFDIR, stat.S_IFBLK,
              stat.S_IFREG, stat.S_IFLNK, stat.S_IFSOCK)


class BpfVmError(Exception):
    pass


class UnsupportedOpcode(BpfVmError):
    pass


class LoadOutOfRange(BpfVmError):
    pass


class JumpOutOfRange(BpfVmError):
    pass


class FellOffEnd(BpfVmError):
    pass


@dataclass(frozen=True)
class SeccompData:
    nr: int
    arch: int
    ip: int = 0
    args: tuple[int, ...] = (0, 0, 0, 0, 0, 0)

    def pack(self, endianness: str = "little") -> bytes:
        fmt = ("<" if endianness == "little" else ">") + "iIQ6Q"
        return struct.pack(fmt, self.nr, self.arch, self.ip, *self.args)


@dataclass(frozen=True)
class VmResult:
    action: int
    steps: int
    path: tuple[int, ...] = field(default=(), repr=False)

    @property
    def decision(self) -> FilterAction:
        return FilterAction.decode(self.action)


def eval(p: BpfProgram, d: SeccompData | bytes, endianness: str = "little") -> VmResult:
    buf = d if isinstance(d, bytes) else d.pack(endianness)
    if len(buf) != SECCOMP_DATA_SIZE:
        raise LoadOutOfRange(f"input record is {len(buf)} bytes, not {SECCOMP_DATA_SIZE}")
    word = struct.Struct("<I" if endianness == "little" else ">I")
    n = len(p)
    a = 0
    pc = 0
    path = []
    while True:
        if pc >= n:
            raise FellOffEnd(f"execution ran past instruction {n - 1}")
        ins = p[pc]
        path.append(pc)
        if ins.code == LD_W_ABS:
            if ins.k % 4 or ins.k + 4 > SECCOMP_DATA_SIZE:
                raise LoadOutOfRange(f"insn {pc}: load at offset {ins.k}")
            (a,) = word.unpack_from(buf, ins.k)
            pc += 1
        elif ins.code == AND_K:
            a &= ins.k
            pc += 1
        elif ins.code == JEQ_K:
            pc += 1 + (ins.jt if a == ins.k else ins.jf)
            if pc >= n:
                raise JumpOutOfRange(f"insn {path[-1]}: jump to {pc}")
        elif ins.code == JA:
            pc += 1 + ins.k
            if pc >= n:
                raise JumpOutOfRange(f"insn {path[-1]}: jump to {pc}")
        elif ins.code == RET_K:
            return VmResult(ins.k, len(path), tuple(path))
        else:
            raise UnsupportedOpcode(f"insn {pc}: opcode {ins.code:#06x}")


def reference_decision(table: SyscallTable, arch: Arch, d: SeccompData) -> FilterAction:
    """What the generated filter is supposed to decide, computed from the table."""
    if d.arch != arch.audit_id:
        return ALLOW
    cls = classify(table, arch, d.nr)
    if cls is None:
        return ALLOW
    if cls is SyscallClass.MKNOD_INSPECT:
        spec = table.numbers(arch)[d.nr]
        mode = d.args[MODE_ARG[spec.name]]
        if stat.S_IFMT(mode) in (stat.S_IFCHR, stat.S_IFBLK):
            return FAKE_SUCCESS
        return ALLOW
    return FAKE_SUCCESS


def decision_matrix(p: BpfProgram, arch: Arch, nr_range: Iterable[int],
                    table: Optional[SyscallTable] = None,
                    data_arch: Optional[int] = None):
    """Evaluate ``p`` for every syscall number in ``nr_range``.

    Returns ``{nr: FilterAction}``; inspected syscalls instead map to
    ``{file_type_bits: FilterAction}`` over ``FILE_TYPES``.  ``data_arch``
    overrides the audit id placed in the input record.
    """
    table = table or builtin_table()
    inspected = {nr: MODE_ARG[s.name] for nr, s in table.numbers(arch).items()
                 if s.cls is SyscallClass.MKNOD_INSPECT}
    audit = arch.audit_id if data_arch is None else data_arch
    out = {}
    for nr in nr_range:
        if nr in inspected:
            row = {}
            for ft in FILE_TYPES:
                args = [0] * 6
                args[inspected[nr]] = ft | 0o644
                r = eval(p, SeccompData(nr, audit, 0, tuple(args)), arch.endianness)
                row[ft] = r.decision
            out[nr] = row
        else:
            out[nr] = eval(p, SeccompData(nr, audit), arch.endianness).decision
    return out
