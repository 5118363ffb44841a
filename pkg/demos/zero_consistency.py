"""
Zero-consistency root, end to end
=================================

Build a throwaway rootfs, then run the same chown twice in an unprivileged
container: once bare, once under the filter.  Linux only; needs unprivileged
user namespaces.
"""

import os
import shutil
import tempfile

from zeroroot import LaunchConfig, launch, probes
from zeroroot.scratch import make_rootfs

root = make_rootfs(tempfile.mkdtemp(prefix="zeroroot-demo-"))
open(os.path.join(root, "f"), "w").close()
script = "cd / && chown 1234:5678 f && stat -c 'chown ok, owner still %u:%g' f"

# without the filter the kernel refuses: 1234 is not mapped in our namespace
print("unfiltered:", flush=True)
print("exit", launch(LaunchConfig(["/bin/sh", "-c", script], rootfs=root, filter=False)).exit_code)

# with it, chown "succeeds" and nothing changes
print("filtered:", flush=True)
status = launch(LaunchConfig(["/bin/sh", "-c", script], rootfs=root))
print("exit", status.exit_code, "self-test", status.self_test, flush=True)

# the probe suite checks every class the same way: rc 0, state unchanged
launch(LaunchConfig(["probes"]), target=lambda: probes.run_all()[1])
shutil.rmtree(root)
