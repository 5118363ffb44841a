import io
import json
import os
from dataclasses import asdict

from helpers import needs_userns, run_unprivileged
from zeroroot import probes
from zeroroot.probes import PROBE_CLASSES, UNFILTERED_VERDICTS, ProbeReport, format_reports
from zeroroot.runtime import LaunchConfig, launch
from zeroroot.systable import SyscallClass

NAMES = ["chown", "identity", "mknod_device", "mknod_fifo", "mknod_regular", "selftest", "inherit"]


def run_probes(scratch_dir, filter=True, fn=probes.collect):
    """Run ``fn`` in an unprivileged container; return the reports as dicts."""
    out = os.path.join(scratch_dir, "reports.json")

    def target():
        with open(out, "w") as f:
            json.dump([asdict(r) for r in fn()], f)
        return 0

    def go():
        return launch(LaunchConfig(["probe"], filter=filter), target=target).exit_code

    assert run_unprivileged(go) == 0
    with open(out) as f:
        return json.load(f)


def test_from_checks():
    r = ProbeReport.from_checks("x", [("a: 1", "a: 1"), ("b: skip", "b: skip")])
    assert r.verdict == "pass" and r.expected == r.observed
    r = ProbeReport.from_checks("x", [("a: 1", "a: 2")])
    assert r.verdict == "fail"
    r = ProbeReport.from_checks("x", [("a: skip", "a: skip")])
    assert r.verdict == "skip" and r.reason


def test_format_text_and_json():
    reports = [ProbeReport("a", "e", "e", "pass"), ProbeReport("b", "e", "o", "fail"),
               ProbeReport("c", "s", "s", "skip", "absent")]
    assert format_reports(reports) == ("1..3\nok 1 - a\nnot ok 2 - b # expected e observed o\n"
                                       "ok 3 - c # SKIP absent\n")
    parsed = json.loads(format_reports(reports, "json"))
    assert [set(d) for d in parsed] == [{"name", "expected", "observed", "verdict", "reason"}] * 3


def test_run_all_exit_status(monkeypatch):
    monkeypatch.setattr(probes, "collect", lambda: [ProbeReport("a", "e", "e", "pass")])
    buf = io.StringIO()
    assert probes.run_all("text", buf)[1] == 0
    monkeypatch.setattr(probes, "collect", lambda: [ProbeReport("a", "e", "o", "fail")])
    assert probes.run_all("json", buf)[1] == 1


def test_every_class_is_probed():
    assert set(PROBE_CLASSES.values()) == set(SyscallClass)
    assert sorted(PROBE_CLASSES) == sorted(UNFILTERED_VERDICTS) == sorted(NAMES)


@needs_userns
def test_all_pass_under_filter(scratch_dir):
    reports = run_probes(scratch_dir)
    assert [r["name"] for r in reports] == NAMES
    for r in reports:
        assert r["verdict"] == "pass", r
        assert r["observed"] == r["expected"]


@needs_userns
def test_unfiltered_vector(scratch_dir):
    reports = run_probes(scratch_dir, filter=False)
    assert {r["name"]: r["verdict"] for r in reports} == UNFILTERED_VERDICTS
    selftest = next(r for r in reports if r["name"] == "selftest")
    assert "EPERM" in selftest["observed"] or "ENOSYS" in selftest["observed"]


@needs_userns
def test_verdicts_are_repeatable(scratch_dir):
    first = [r["verdict"] for r in run_probes(scratch_dir)]
    assert [r["verdict"] for r in run_probes(scratch_dir)] == first


@needs_userns
def test_documented_details(scratch_dir):
    reports = {r["name"]: r for r in run_probes(scratch_dir)}
    ident = reports["identity"]["observed"]
    assert "setresuid: rc=0 state=unchanged" in ident
    assert "setgroups: rc=0 state=unchanged" in ident
    assert "capset: rc=0 state=unchanged" in ident
    assert "mknod/chr: rc=0 entry=absent" in reports["mknod_device"]["observed"]
    assert "mknodat/fifo: rc=0 entry=fifo" in reports["mknod_fifo"]["observed"]
    assert "mknod/reg: rc=0 entry=regular" in reports["mknod_regular"]["observed"]
    # legacy 32-bit variants do not exist on a 64-bit host
    if os.uname().machine in ("x86_64", "aarch64"):
        assert "chown32: skip" in reports["chown"]["observed"]


@needs_userns
def test_probe_chown_on_given_path(scratch_dir):
    path = os.path.join(scratch_dir, "given")
    with open(path, "w"):
        pass
    if os.geteuid() == 0:
        os.chown(path, 65534, 65534)
    reports = run_probes(scratch_dir, fn=lambda: [probes.probe_chown(path)])
    assert reports[0]["verdict"] == "pass"
    assert os.stat(path).st_uid == (65534 if os.geteuid() == 0 else os.getuid())


def test_skip_when_syscall_absent(monkeypatch):
    monkeypatch.setattr(probes, "_numbers", lambda cls: [("chown", None), ("chown32", None)])
    assert probes.probe_chown().verdict == "skip"
