"""
The filtered syscall table
==========================

Which syscalls get faked, and what they are called on each architecture.
"""

from zeroroot import SyscallClass, builtin_table, classify, verify_table

table = builtin_table()
print(f"{len(table.specs)} syscalls across {len(table.archs)} architectures")
for cls in SyscallClass:
    print(f"  {cls}: {len(table.by_class(cls))}")

# the table checks itself: distinct numbers per arch, class counts, and so on
assert verify_table(table) == []

# numbers differ per arch, and some calls simply do not exist
for name in ("chown", "fchownat", "setresuid", "mknod", "kexec_load"):
    row = "  ".join(f"{a.name}={n if (n := table.spec(name).number(a)) is not None else '-'}"
                    for a in table.archs)
    print(f"{name:<11} {row}")

# classify is the lookup the filter generator is built on
print(classify(table, "x86_64", 92), classify(table, "x86_64", 0))

# audit ids tell the filter which ABI a syscall came in through
for a in table.archs:
    print(f"{a.name:<8} {a.audit_id:#010x} {a.endianness:<6} {a.word_width}-bit")
