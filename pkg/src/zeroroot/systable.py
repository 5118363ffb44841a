"""Table of the privileged syscalls that the root-emulation filter intercepts.

The numbers below were transcribed from the Linux 7.2 syscall tables
(``arch/*/kernel/syscalls/syscall.tbl`` and
``include/uapi/asm-generic/unistd.h``).  A ``-`` marks a syscall that does
not exist on that architecture; the generic-table architectures (aarch64,
riscv64) have no ``chown``/``lchown``/``mknod`` at all, and only 32-bit ARM
carries the legacy ``*32`` variants.

Adding or dropping an architecture is a data change: edit ``_ARCHS`` and add
or remove the matching column of ``_NUMBERS``.
"""

from __future__ import annotations

import enum
import functools
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Optional

__all__ = [
    "Arch",
    "SyscallClass",
    "SyscallSpec",
    "SyscallTable",
    "UnknownArch",
    "Violation",
    "builtin_table",
    "classify",
    "verify_table",
    "EXPECTED_CLASS_COUNTS",
    "SELFTEST_SYSCALL",
]

AUDIT_ARCH_64BIT = 0x80000000
AUDIT_ARCH_LE = 0x40000000


class UnknownArch(LookupError):
    """Raised when an architecture name or audit id is not in the table."""


@dataclass(frozen=True)
class Arch:
    name: str
    audit_id: int
    endianness: str  # "little" | "big"
    word_width: int  # 32 | 64


class SyscallClass(enum.Enum):
    OWNERSHIP = "Ownership"
    IDENTITY = "Identity"
    MKNOD_INSPECT = "MknodInspect"
    SELF_TEST = "SelfTest"

    def __str__(self) -> str:
        return self.value


EXPECTED_CLASS_COUNTS = {
    SyscallClass.OWNERSHIP: 7,
    SyscallClass.IDENTITY: 19,
    SyscallClass.MKNOD_INSPECT: 2,
    SyscallClass.SELF_TEST: 1,
}
EXPECTED_TOTAL = sum(EXPECTED_CLASS_COUNTS.values())
SELFTEST_SYSCALL = "kexec_load"


@dataclass(frozen=True)
class SyscallSpec:
    name: str
    cls: SyscallClass
    # arch name -> number, or None where the syscall is absent on that arch
    numbers: Mapping[str, Optional[int]] = field(default_factory=dict)

    def number(self, arch: Arch | str) -> Optional[int]:
        name = arch.name if isinstance(arch, Arch) else arch
        return self.numbers.get(name)


@dataclass(frozen=True)
class Violation:
    rule: str
    subject: str
    detail: str

    def __str__(self) -> str:
        return f"{self.rule}: {self.subject}: {self.detail}"


@dataclass(frozen=True)
class SyscallTable:
    archs: tuple[Arch, ...]
    specs: tuple[SyscallSpec, ...]

    def arch(self, key: Arch | str | int) -> Arch:
        """Look up an architecture by name, alias, audit id, or identity."""
        if isinstance(key, Arch):
            if key in self.archs:
                return key
            raise UnknownArch(key.name)
        if isinstance(key, int):
            for a in self.archs:
                if a.audit_id == key:
                    return a
            raise UnknownArch(f"audit id {key:#x}")
        name = ARCH_ALIASES.get(key, key)
        for a in self.archs:
            if a.name == name:
                return a
        raise UnknownArch(key)

    def spec(self, name: str) -> SyscallSpec:
        for s in self.specs:
            if s.name == name:
                return s
        raise KeyError(name)

    def by_class(self, cls: SyscallClass) -> list[SyscallSpec]:
        return [s for s in self.specs if s.cls is cls]

    def numbers(self, arch: Arch | str) -> dict[int, SyscallSpec]:
        """Populated ``number -> spec`` mapping for one architecture."""
        a = self.arch(arch)
        out = {}
        for s in self.specs:
            nr = s.number(a)
            if nr is not None:
                out[nr] = s
        return out

    def sorted_specs(self) -> list[SyscallSpec]:
        order = list(SyscallClass)
        return sorted(self.specs, key=lambda s: (order.index(s.cls), s.name))


# Kernel machine names; audit ids are EM_* | __AUDIT_ARCH_64BIT | __AUDIT_ARCH_LE
# from <linux/audit.h> and <linux/elf-em.h>.
_ARCHS = (
    Arch("x86_64", 0xC000003E, "little", 64),
    Arch("aarch64", 0xC00000B7, "little", 64),
    Arch("ppc64le", 0xC0000015, "little", 64),
    Arch("s390x", 0x80000016, "big", 64),
    Arch("riscv64", 0xC00000F3, "little", 64),
    Arch("arm", 0x40000028, "little", 32),
)

ARCH_ALIASES = {
    "amd64": "x86_64",
    "arm64": "aarch64",
    "armv7l": "arm",
    "armv8l": "arm",
    "armhf": "arm",
    "powerpc64le": "ppc64le",
}

_CLASS_TAGS = {
    "own": SyscallClass.OWNERSHIP,
    "id": SyscallClass.IDENTITY,
    "mknod": SyscallClass.MKNOD_INSPECT,
    "self": SyscallClass.SELF_TEST,
}

_NUMBERS = """
# name        class   x86_64 aarch64 ppc64le s390x riscv64  arm
chown         own         92       -     181   212       -  182
chown32       own          -       -       -     -       -  212
fchown        own         93      55      95   207      55   95
fchown32      own          -       -       -     -       -  207
fchownat      own        260      54     289   291      54  325
lchown        own         94       -      16   198       -   16
lchown32      own          -       -       -     -       -  198
capset        id         126      91     184   185      91  185
setfsgid      id         123     152     139   216     152  139
setfsgid32    id           -       -       -     -       -  216
setfsuid      id         122     151     138   215     151  138
setfsuid32    id           -       -       -     -       -  215
setgid        id         106     144      46   214     144   46
setgid32      id           -       -       -     -       -  214
setgroups     id         116     159      81   206     159   81
setgroups32   id           -       -       -     -       -  206
setregid      id         114     143      71   204     143   71
setregid32    id           -       -       -     -       -  204
setresgid     id         119     149     169   210     149  170
setresgid32   id           -       -       -     -       -  210
setresuid     id         117     147     164   208     147  164
setresuid32   id           -       -       -     -       -  208
setreuid      id         113     145      70   203     145   70
setreuid32    id           -       -       -     -       -  203
setuid        id         105     146      23   213     146   23
setuid32      id           -       -       -     -       -  213
mknod         mknod      133       -      14    14       -   14
mknodat       mknod      259      33     288   290      33  324
kexec_load    self       246     104     268   277     104  347
"""


def parse_table(text: str, archs: Iterable[Arch]) -> SyscallTable:
    """Parse the whitespace-separated layout used by ``_NUMBERS``."""
    archs = tuple(archs)
    specs = []
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        name, tag, *cols = line.split()
        if len(cols) != len(archs):
            raise ValueError(f"line {lineno}: expected {len(archs)} columns, got {len(cols)}")
        numbers = {a.name: (None if c == "-" else int(c)) for a, c in zip(archs, cols)}
        specs.append(SyscallSpec(name, _CLASS_TAGS[tag], numbers))
    return SyscallTable(archs, tuple(specs))


@functools.lru_cache(maxsize=None)
def builtin_table() -> SyscallTable:
    return parse_table(_NUMBERS, _ARCHS)


def classify(table: SyscallTable, arch: Arch | str, nr: int) -> Optional[SyscallClass]:
    """Class of syscall ``nr`` on ``arch``, or None if the filter ignores it.

    Raises UnknownArch if ``arch`` is not part of ``table``.
    """
    spec = table.numbers(arch).get(nr)
    return spec.cls if spec is not None else None


def verify_table(table: SyscallTable) -> list[Violation]:
    v: list[Violation] = []
    add = lambda rule, subject, detail: v.append(Violation(rule, subject, detail))

    ids = Counter(a.audit_id for a in table.archs)
    for a in table.archs:
        if ids[a.audit_id] > 1:
            add("duplicate-audit-id", a.name, f"audit id {a.audit_id:#x} shared")
        want_width = 64 if a.audit_id & AUDIT_ARCH_64BIT else 32
        want_endian = "little" if a.audit_id & AUDIT_ARCH_LE else "big"
        if a.word_width != want_width:
            add("word-width", a.name, f"{a.word_width} but audit id says {want_width}")
        if a.endianness != want_endian:
            add("endianness", a.name, f"{a.endianness} but audit id says {want_endian}")

    names = Counter(s.name for s in table.specs)
    for n, c in names.items():
        if c > 1:
            add("duplicate-name", n, f"appears {c} times")

    if len(table.specs) != EXPECTED_TOTAL:
        add("count", "table", f"{len(table.specs)} specs, expected {EXPECTED_TOTAL}")
    per_class = Counter(s.cls for s in table.specs)
    for cls, want in EXPECTED_CLASS_COUNTS.items():
        if per_class[cls] != want:
            add("class-count", str(cls), f"{per_class[cls]} specs, expected {want}")
    selftests = [s.name for s in table.specs if s.cls is SyscallClass.SELF_TEST]
    if selftests and selftests != [SELFTEST_SYSCALL]:
        add("self-test", ",".join(selftests), f"self-test syscall must be {SELFTEST_SYSCALL}")

    arch_names = {a.name: a for a in table.archs}
    for s in table.specs:
        for an, nr in s.numbers.items():
            if an not in arch_names:
                add("unknown-arch", s.name, f"number given for unknown arch {an!r}")
            elif nr is not None and (not isinstance(nr, int) or nr < 0):
                add("bad-number", f"{s.name}@{an}", f"{nr!r} is not a non-negative integer")
            elif (nr is not None and s.name.endswith("32")
                  and arch_names[an].word_width != 32):
                add("legacy-on-64bit", f"{s.name}@{an}", "32-bit variant on a 64-bit arch")

    for a in table.archs:
        seen: dict[int, str] = {}
        for s in table.specs:
            nr = s.numbers.get(a.name)
            if nr is None:
                continue
            if nr in seen:
                add("duplicate-number", f"{s.name}@{a.name}",
                    f"number {nr} already used by {seen[nr]}")
            else:
                seen[nr] = s.name
    return v
