"""Unprivileged container launcher with zero-consistency root emulation.

A seccomp filter makes a fixed set of privileged syscalls (ownership,
identity, device-node creation, plus a self-test call) do nothing and
return 0, which is enough for distribution package managers to run inside
a fully unprivileged container.
"""

from .bpfgen import (ALLOW, FAKE_SUCCESS, BpfInsn, BpfProgram, FilterAction,
                     disassemble, generate, serialize_binary, validate)
from .bpfvm import SeccompData, VmResult, decision_matrix
from .rewrite import rewrite_apt, split_statements
from .runtime import ContainerStatus, LaunchConfig, LaunchError, launch
from .systable import (Arch, SyscallClass, SyscallSpec, SyscallTable,
                       builtin_table, classify, verify_table)

__version__ = "0.1.0"

__all__ = [
    "ALLOW", "FAKE_SUCCESS", "BpfInsn", "BpfProgram", "FilterAction", "disassemble",
    "generate", "serialize_binary", "validate", "SeccompData", "VmResult", "decision_matrix",
    "rewrite_apt", "split_statements", "ContainerStatus", "LaunchConfig", "LaunchError",
    "launch", "Arch", "SyscallClass", "SyscallSpec", "SyscallTable", "builtin_table",
    "classify", "verify_table",
]
