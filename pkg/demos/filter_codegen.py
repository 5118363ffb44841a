"""
Compiling the table into a seccomp filter
=========================================

The filter is classic BPF: an arch check, a ladder of equality tests on the
syscall number, and a small block that looks at the file type of mknod's
mode argument.  bpfvm runs it in userspace so we can poke at it anywhere.
"""

from zeroroot import (FAKE_SUCCESS, SeccompData, builtin_table, decision_matrix,
                      disassemble, generate)
from zeroroot.bpfvm import eval as run

table = builtin_table()
arch = table.arch("x86_64")
prog = generate(table, arch)
print(disassemble(prog))

# chown is faked, read goes through
print(run(prog, SeccompData(92, arch.audit_id)).decision)
print(run(prog, SeccompData(0, arch.audit_id)).decision)

# a chown coming in through a different ABI is not ours to judge
print(run(prog, SeccompData(92, table.arch("arm").audit_id)).decision)

# mknod: device nodes are faked, FIFOs really get made
for mode in (0o020644, 0o060644, 0o010644, 0o100644):
    r = run(prog, SeccompData(133, arch.audit_id, 0, (0, mode, 0, 0, 0, 0)))
    print(f"mknod mode {mode:#o}: {r.decision} after {r.steps} steps")

# the whole picture for the first 200 numbers
m = decision_matrix(prog, arch, range(200))
print(sorted(nr for nr, d in m.items() if d == FAKE_SUCCESS))
print({oct(ft): str(d) for ft, d in m[133].items()})

# s390x is big endian, so the low word of an argument sits 4 bytes further in
s390 = generate(table, "s390x")
print([line for line in disassemble(s390).splitlines() if "ld [" in line])
