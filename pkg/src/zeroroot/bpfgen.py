"""Classic-BPF seccomp filter generation.

The emitted program for one architecture looks like::

    ld  [4]                      ; arch
    jeq #AUDIT_ARCH, next, allow
    ld  [0]                      ; nr
    jeq #chown, fake, next       ; one per unconditionally faked syscall
    ...
    jeq #mknod, mknod_blk, next  ; one per inspected syscall
    allow: ret ALLOW
    mknod_blk:
    ld  [mode arg, low word]
    and #0o170000
    jeq #S_IFCHR, fake, next
    jeq #S_IFBLK, fake, next
    ret ALLOW
    ...
    fake: ret ERRNO(0)

Only the five opcodes below are ever emitted, and ``validate`` rejects
anything else.
"""

from __future__ import annotations

import re
import stat
import struct
import sys
from dataclasses import dataclass, field
from typing import Iterable, NamedTuple, Optional, Sequence

from .systable import (Arch, SyscallClass, SyscallTable, Violation,
                       verify_table)

# <linux/bpf_common.h>
BPF_LD, BPF_ALU, BPF_JMP, BPF_RET = 0x00, 0x04, 0x05, 0x06
BPF_W, BPF_ABS, BPF_K = 0x00, 0x20, 0x00
BPF_AND, BPF_JA, BPF_JEQ = 0x50, 0x00, 0x10

LD_W_ABS = BPF_LD | BPF_W | BPF_ABS  # 0x20
JEQ_K = BPF_JMP | BPF_JEQ | BPF_K  # 0x15
JA = BPF_JMP | BPF_JA  # 0x05
AND_K = BPF_ALU | BPF_AND | BPF_K  # 0x54
RET_K = BPF_RET | BPF_K  # 0x06

SUPPORTED_OPCODES = frozenset({LD_W_ABS, JEQ_K, JA, AND_K, RET_K})

# <linux/seccomp.h>
SECCOMP_RET_ERRNO = 0x00050000
SECCOMP_RET_ALLOW = 0x7FFF0000
SECCOMP_RET_ACTION_FULL = 0xFFFF0000
SECCOMP_RET_DATA = 0x0000FFFF

# struct seccomp_data layout
SECCOMP_DATA_SIZE = 64
OFF_NR, OFF_ARCH, OFF_IP, OFF_ARGS = 0, 4, 8, 16

BPF_MAXINSNS = 4096
MAX_JUMP = 0xFF

S_IFMT = 0o170000
DEVICE_TYPES = (stat.S_IFCHR, stat.S_IFBLK)
# argument index of the mode for each inspected syscall
MODE_ARG = {"mknod": 1, "mknodat": 2}

INSN_SIZE = 8


class BpfInsn(NamedTuple):
    code: int
    jt: int
    jf: int
    k: int


@dataclass(frozen=True)
class BpfProgram:
    insns: tuple[BpfInsn, ...]

    def __len__(self) -> int:
        return len(self.insns)

    def __iter__(self):
        return iter(self.insns)

    def __getitem__(self, i):
        return self.insns[i]


@dataclass(frozen=True)
class FilterAction:
    """A seccomp disposition.  ``FAKE_SUCCESS`` is ``Errno(0)``."""

    kind: str  # "allow" | "errno"
    errno: int = 0

    @classmethod
    def Errno(cls, value: int) -> "FilterAction":
        if not 0 <= value <= SECCOMP_RET_DATA:
            raise ValueError(f"errno {value} does not fit in 16 bits")
        return cls("errno", value)

    def encode(self) -> int:
        if self.kind == "allow":
            return SECCOMP_RET_ALLOW
        return SECCOMP_RET_ERRNO | self.errno

    @classmethod
    def decode(cls, raw: int) -> "FilterAction":
        if raw == SECCOMP_RET_ALLOW:
            return ALLOW
        if raw & SECCOMP_RET_ACTION_FULL == SECCOMP_RET_ERRNO:
            return cls.Errno(raw & SECCOMP_RET_DATA)
        raise ValueError(f"action {raw:#010x} is outside the supported set")

    @property
    def name(self) -> str:
        if self.kind == "allow":
            return "ALLOW"
        if self.errno == 0:
            return "FAKE_SUCCESS"
        return f"ERRNO({self.errno})"

    def __str__(self) -> str:
        return self.name


ALLOW = FilterAction("allow")
FAKE_SUCCESS = FilterAction("errno", 0)


class FilterError(ValueError):
    """The program or its inputs cannot produce a valid filter."""


def arg_low_offset(index: int, endianness: str) -> int:
    """Record offset of the low 32 bits of syscall argument ``index``."""
    base = OFF_ARGS + 8 * index
    return base + 4 if endianness == "big" else base


# ---------------------------------------------------------------------------
# assembler with symbolic labels


@dataclass
class _Op:
    code: int
    k: int = 0
    jt: Optional[str] = None  # target label; None means the next instruction
    jf: Optional[str] = None
    labels: list[str] = field(default_factory=list)


def _op(code, k=0, jt=None, jf=None, label=None) -> _Op:
    return _Op(code, k, jt, jf, [label] if label else [])


def _assemble(ops: list[_Op]) -> BpfProgram:
    """Resolve labels to relative offsets, adding trampolines as needed.

    A conditional branch more than 255 instructions from its target becomes
    a fall-through into an inserted ``ja target`` (32-bit offset), with the
    other branch redirected past the trampoline.
    """
    ops = list(ops)
    n_tramp = 0
    while True:
        pos = {lab: i for i, op in enumerate(ops) for lab in op.labels}
        far = next(((i, br) for i, op in enumerate(ops) if op.code == JEQ_K
                    for br in ("jt", "jf")
                    if getattr(op, br) is not None
                    and pos[getattr(op, br)] - i - 1 > MAX_JUMP), None)
        if far is None:
            break
        i, br = far
        other = "jf" if br == "jt" else "jt"
        op = ops[i]
        if getattr(op, other) is None:
            skip = f"__skip{n_tramp}"
            n_tramp += 1
            ops[i + 1].labels.append(skip)
            setattr(op, other, skip)
        ops.insert(i + 1, _Op(JA, jt=getattr(op, br)))
        setattr(op, br, None)

    pos = {lab: i for i, op in enumerate(ops) for lab in op.labels}
    insns = []
    for i, op in enumerate(ops):
        if op.code == JEQ_K:
            jt = 0 if op.jt is None else pos[op.jt] - i - 1
            jf = 0 if op.jf is None else pos[op.jf] - i - 1
            insns.append(BpfInsn(op.code, jt, jf, op.k))
        elif op.code == JA:
            insns.append(BpfInsn(JA, 0, 0, pos[op.jt] - i - 1))
        else:
            insns.append(BpfInsn(op.code, 0, 0, op.k))
    return BpfProgram(tuple(insns))


def compile_filter(arch: Arch, fake: Iterable[int],
                   inspect: Sequence[tuple[int, int]] = ()) -> BpfProgram:
    """Build the filter from raw syscall numbers.

    ``fake`` are numbers that always get FAKE_SUCCESS; ``inspect`` holds
    ``(number, mode_arg_index)`` pairs faked only for device file types.
    """
    fake = sorted(set(fake))
    ops = [
        _op(LD_W_ABS, OFF_ARCH),
        _op(JEQ_K, arch.audit_id, jt=None, jf="allow"),
        _op(LD_W_ABS, OFF_NR),
    ]
    ops += [_op(JEQ_K, nr, jt="fake") for nr in fake]
    ops += [_op(JEQ_K, nr, jt=f"inspect{i}") for i, (nr, _) in enumerate(inspect)]
    ops.append(_op(RET_K, SECCOMP_RET_ALLOW, label="allow"))
    for i, (_, argi) in enumerate(inspect):
        ops += [
            _op(LD_W_ABS, arg_low_offset(argi, arch.endianness), label=f"inspect{i}"),
            _op(AND_K, S_IFMT),
        ]
        ops += [_op(JEQ_K, t, jt="fake") for t in DEVICE_TYPES]
        ops.append(_op(RET_K, SECCOMP_RET_ALLOW))
    ops.append(_op(RET_K, FAKE_SUCCESS.encode(), label="fake"))
    return _assemble(ops)


def generate(table: SyscallTable, arch: Arch | str) -> BpfProgram:
    """Compile ``table`` into the root-emulation filter for ``arch``."""
    arch = table.arch(arch)
    problems = verify_table(table)
    if problems:
        raise FilterError("table fails verification: " + "; ".join(map(str, problems)))
    fake, inspect = [], []
    for s in table.specs:
        nr = s.number(arch)
        if nr is None:
            continue
        if s.cls is SyscallClass.MKNOD_INSPECT:
            inspect.append((nr, MODE_ARG[s.name]))
        else:
            fake.append(nr)
    inspect.sort()
    return compile_filter(arch, fake, inspect)


def validate(p: BpfProgram) -> list[Violation]:
    v: list[Violation] = []
    n = len(p)
    if not 1 <= n <= BPF_MAXINSNS:
        v.append(Violation("length", "program", f"{n} instructions, allowed 1..{BPF_MAXINSNS}"))
    for i, ins in enumerate(p):
        where = f"insn {i}"
        if ins.code not in SUPPORTED_OPCODES:
            v.append(Violation("opcode", where, f"unsupported opcode {ins.code:#06x}"))
            continue
        if ins.code == LD_W_ABS:
            if ins.k % 4 or ins.k + 4 > SECCOMP_DATA_SIZE:
                v.append(Violation("load-bounds", where,
                                   f"load at offset {ins.k} outside the {SECCOMP_DATA_SIZE}-byte record"))
        elif ins.code == JEQ_K:
            for label, off in (("jt", ins.jt), ("jf", ins.jf)):
                if i + 1 + off >= n:
                    v.append(Violation("jump-range", where, f"{label} lands at {i + 1 + off}, past end"))
        elif ins.code == JA:
            if i + 1 + ins.k >= n:
                v.append(Violation("jump-range", where, f"ja lands at {i + 1 + ins.k}, past end"))
    if n and p[n - 1].code != RET_K:
        v.append(Violation("missing-return", f"insn {n - 1}",
                           "last instruction is not a return; a path falls off the end"))
    return v


def serialize_binary(p: BpfProgram, byteorder: str = sys.byteorder) -> bytes:
    """``struct sock_filter`` array, fields in ``byteorder`` (host by default)."""
    problems = validate(p)
    if problems:
        raise FilterError("; ".join(map(str, problems)))
    s = struct.Struct(("<" if byteorder == "little" else ">") + "HBBI")
    return b"".join(s.pack(*ins) for ins in p)


def deserialize_binary(data: bytes, byteorder: str = sys.byteorder) -> BpfProgram:
    if len(data) % INSN_SIZE:
        raise FilterError(f"length {len(data)} is not a multiple of {INSN_SIZE}")
    s = struct.Struct(("<" if byteorder == "little" else ">") + "HBBI")
    return BpfProgram(tuple(BpfInsn(*t) for t in s.iter_unpack(data)))


# ---------------------------------------------------------------------------
# text form


def _ret_operand(k: int) -> str:
    try:
        return FilterAction.decode(k).name.replace("FAKE_SUCCESS", "ERRNO(0)")
    except ValueError:
        return f"#{k:#x}"


def disassemble(p: BpfProgram) -> str:
    lines = []
    for i, ins in enumerate(p):
        if ins.code == LD_W_ABS:
            text = f"ld [{ins.k}]"
        elif ins.code == JEQ_K:
            text = f"jeq #{ins.k:#x} jt {i + 1 + ins.jt} jf {i + 1 + ins.jf}"
        elif ins.code == JA:
            text = f"ja {i + 1 + ins.k}"
        elif ins.code == AND_K:
            text = f"and #{ins.k:#x}"
        elif ins.code == RET_K:
            text = f"ret {_ret_operand(ins.k)}"
        else:
            text = (f"insn code={ins.code:#06x} jt={ins.jt} jf={ins.jf} k={ins.k:#x}"
                    "  ; unknown opcode")
        lines.append(f"{i}: {text}")
    return "\n".join(lines) + "\n"


_LINE = re.compile(r"^\s*(\d+):\s*(.*?)\s*(;.*)?$")


def assemble(text: str) -> BpfProgram:
    """Inverse of ``disassemble``."""
    insns = []
    for raw in text.splitlines():
        if not raw.strip():
            continue
        m = _LINE.match(raw)
        if not m:
            raise FilterError(f"cannot parse line {raw!r}")
        i, body = int(m.group(1)), m.group(2)
        if i != len(insns):
            raise FilterError(f"line index {i} out of sequence")
        op, _, rest = body.partition(" ")
        if op == "ld":
            insns.append(BpfInsn(LD_W_ABS, 0, 0, int(rest.strip("[]"))))
        elif op == "jeq":
            k, _, jt, _, jf = rest.split()
            insns.append(BpfInsn(JEQ_K, int(jt) - i - 1, int(jf) - i - 1, int(k[1:], 0)))
        elif op == "ja":
            insns.append(BpfInsn(JA, 0, 0, int(rest) - i - 1))
        elif op == "and":
            insns.append(BpfInsn(AND_K, 0, 0, int(rest[1:], 0)))
        elif op == "ret":
            if rest == "ALLOW":
                k = SECCOMP_RET_ALLOW
            elif rest.startswith("ERRNO("):
                k = SECCOMP_RET_ERRNO | int(rest[6:-1])
            else:
                k = int(rest[1:], 0)
            insns.append(BpfInsn(RET_K, 0, 0, k))
        elif op == "insn":
            f = dict(kv.split("=") for kv in rest.split())
            insns.append(BpfInsn(int(f["code"], 0), int(f["jt"]), int(f["jf"]), int(f["k"], 0)))
        else:
            raise FilterError(f"unknown mnemonic {op!r}")
    return BpfProgram(tuple(insns))
