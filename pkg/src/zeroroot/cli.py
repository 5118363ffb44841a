"""``zeroroot`` command line: run, probe, filter, table."""

from __future__ import annotations

import argparse
import logging
import sys

from . import _linux, bpfgen, bpfvm, probes
from .runtime import (APT_REWRITE_MODES, EXIT_LAUNCHER, LaunchConfig,
                      LaunchError, filter_program, launch)
from .systable import UnknownArch, builtin_table

log = logging.getLogger("zeroroot")

EXIT_USAGE = 2


class _Parser(argparse.ArgumentParser):
    """ArgumentParser with a configurable exit status for usage errors."""

    def __init__(self, *args, error_status: int = EXIT_USAGE, **kwargs):
        super().__init__(*args, **kwargs)
        self.error_status = error_status

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(self.error_status, f"{self.prog}: error: {message}\n")


def _known_archs() -> str:
    return ", ".join(a.name for a in builtin_table().archs)


def _arch_or_exit(name: str):
    try:
        return builtin_table().arch(name)
    except UnknownArch:
        print(f"zeroroot: unknown arch {name!r}; known: {_known_archs()}", file=sys.stderr)
        sys.exit(EXIT_USAGE)


def build_parser() -> _Parser:
    p = _Parser(prog="zeroroot",
                description="Unprivileged containers with zero-consistency root emulation.")
    sub = p.add_subparsers(dest="subcommand", required=True, parser_class=_Parser)

    run = sub.add_parser(
        "run", error_status=EXIT_LAUNCHER,
        usage="zeroroot run [options] -- COMMAND [ARG...]",
        help="run a command in a root-emulated container",
        description="Run COMMAND in new user+mount namespaces under the root-emulation "
                    "filter. A '--' must separate options from the command.")
    run.add_argument("--root", metavar="DIR", help="image root directory to pivot into")
    run.add_argument("--apt-rewrite", choices=APT_REWRITE_MODES, default="auto",
                     help="inject -o APT::Sandbox::User=root into apt/apt-get in shell "
                          "string commands (default: auto)")
    run.add_argument("--no-filter", action="store_true",
                     help="do not install the seccomp filter")
    run.add_argument("--no-map-root", action="store_true",
                     help="map the invoking uid/gid to itself instead of to root")
    run.add_argument("--workdir", metavar="PATH", help="working directory in the container")
    run.add_argument("--filter-dump", metavar="PATH",
                     help="write the installed filter in binary form to PATH")

    probe = sub.add_parser("probe", help="run the zero-consistency probe suite",
                           description="Run the probe suite inside a container.")
    probe.add_argument("--json", action="store_true", help="emit a JSON report")
    probe.add_argument("--no-filter", action="store_true",
                       help="run without the filter (expected-failure mode)")
    probe.add_argument("--filter-dump", metavar="PATH",
                       help="write the installed filter in binary form to PATH")

    filt = sub.add_parser("filter", help="inspect the generated seccomp filter")
    fsub = filt.add_subparsers(dest="action", required=True, parser_class=_Parser)
    dump = fsub.add_parser("dump", help="print the filter for an architecture")
    dump.add_argument("--arch", required=True, metavar="NAME")
    dump.add_argument("--format", choices=("text", "binary"), default="text")
    dump.add_argument("--out", metavar="PATH", help="write to PATH instead of stdout")
    ev = fsub.add_parser("eval", help="evaluate the filter for one syscall")
    ev.add_argument("--arch", required=True, metavar="NAME")
    ev.add_argument("--nr", required=True, type=lambda s: int(s, 0))
    ev.add_argument("--arg", action="append", default=[], metavar="I=V",
                    help="syscall argument I (0-5) set to V; repeatable")
    ev.add_argument("--audit-arch", metavar="NAME|ID",
                    help="architecture placed in the input record (default: --arch)")
    ev.add_argument("--file", metavar="PATH",
                    help="binary filter to evaluate instead of generating one")

    table = sub.add_parser("table", help="show the filtered syscall table")
    tsub = table.add_subparsers(dest="action", required=True, parser_class=_Parser)
    show = tsub.add_parser("show", help="one line per syscall")
    show.add_argument("--arch", metavar="NAME", help="only this architecture's numbers")
    p.run_parser = run
    return p


def _dump_filter(path: str, no_filter: bool) -> None:
    if no_filter:
        log.warning("--filter-dump ignored: no filter is installed")
        return
    with open(path, "wb") as f:
        f.write(bpfgen.serialize_binary(filter_program(LaunchConfig(["true"]))))


def cmd_run(args, command: list[str]) -> int:
    if not _linux.is_linux():
        print("zeroroot: run needs Linux", file=sys.stderr)
        return EXIT_LAUNCHER
    try:
        cfg = LaunchConfig(command, rootfs=args.root, apt_rewrite=args.apt_rewrite,
                           map_to_root=not args.no_map_root, filter=not args.no_filter,
                           workdir=args.workdir)
        if args.filter_dump:
            _dump_filter(args.filter_dump, args.no_filter)
        return launch(cfg).exit_code
    except (ValueError, OSError) as e:
        print(f"zeroroot: {e}", file=sys.stderr)
    except LaunchError as e:
        print(f"zeroroot: {e.stage} failed: {e.message}", file=sys.stderr)
    return EXIT_LAUNCHER


def cmd_probe(args) -> int:
    fmt = "json" if args.json else "text"
    if not _linux.is_linux():
        print("zeroroot: probe needs Linux", file=sys.stderr)
        return EXIT_LAUNCHER
    # probes run in the forked container child itself: re-exec'ing python
    # there can lose an install the mapped root is not allowed to read
    cfg = LaunchConfig(["zeroroot-probe"], filter=not args.no_filter, apt_rewrite="off")
    try:
        if args.filter_dump:
            _dump_filter(args.filter_dump, args.no_filter)
        return launch(cfg, target=lambda: probes.run_all(fmt)[1]).exit_code
    except LaunchError as e:
        print(f"zeroroot: {e.stage} failed: {e.message}", file=sys.stderr)
    except (ValueError, OSError) as e:
        print(f"zeroroot: {e}", file=sys.stderr)
    return EXIT_LAUNCHER


def cmd_filter(args) -> int:
    table = builtin_table()
    arch = _arch_or_exit(args.arch)
    if args.action == "dump":
        prog = bpfgen.generate(table, arch)
        if args.format == "binary":
            data = bpfgen.serialize_binary(prog)
        else:
            data = bpfgen.disassemble(prog).encode()
        if args.out:
            with open(args.out, "wb") as f:
                f.write(data)
        else:
            sys.stdout.buffer.write(data)
            sys.stdout.flush()
        return 0

    if args.file:
        with open(args.file, "rb") as f:
            prog = bpfgen.deserialize_binary(f.read())
    else:
        prog = bpfgen.generate(table, arch)
    argv = [0] * 6
    for spec in args.arg:
        i, _, v = spec.partition("=")
        if not i.isdigit() or int(i) > 5 or not v:
            print(f"zeroroot: bad --arg {spec!r}; expected I=V with I in 0..5", file=sys.stderr)
            return EXIT_USAGE
        argv[int(i)] = int(v, 0)
    audit = arch.audit_id
    if args.audit_arch:
        try:
            audit = int(args.audit_arch, 0)
        except ValueError:
            audit = _arch_or_exit(args.audit_arch).audit_id
    try:
        r = bpfvm.eval(prog, bpfvm.SeccompData(args.nr, audit, 0, tuple(argv)), arch.endianness)
        print(r.decision.name)
    except (bpfvm.BpfVmError, ValueError) as e:
        print(f"zeroroot: filter evaluation failed: {e}", file=sys.stderr)
        return 1
    return 0


def cmd_table(args) -> int:
    table = builtin_table()
    archs = [_arch_or_exit(args.arch)] if args.arch else list(table.archs)
    print("#" + "\t".join(["name", "class"] + [a.name for a in archs]))
    for s in table.sorted_specs():
        nums = [str(n) if (n := s.number(a)) is not None else "-" for a in archs]
        print("\t".join([s.name, str(s.cls)] + nums))
    return 0


def main(argv: list[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    logging.basicConfig(format="zeroroot: %(levelname)s: %(message)s", level=logging.WARNING)
    parser = build_parser()
    command: list[str] = []
    if argv and argv[0] == "run":
        if "--" in argv:
            split = argv.index("--")
            argv, command = argv[:split], argv[split + 1:]
            if not command:
                parser.run_parser.error("no command given after '--'")
        elif not {"-h", "--help"} & set(argv):
            parser.run_parser.error("'--' is required before the command")
    if argv and argv[0] == "run":
        # parse with the run subparser so flag errors use its exit status
        return cmd_run(parser.run_parser.parse_args(argv[1:]), command)
    args = parser.parse_args(argv)
    if args.subcommand == "probe":
        return cmd_probe(args)
    if args.subcommand == "filter":
        return cmd_filter(args)
    return cmd_table(args)


if __name__ == "__main__":
    sys.exit(main())
