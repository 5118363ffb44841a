"""Inject ``-o APT::Sandbox::User=root`` into apt/apt-get invocations.

apt drops privileges before downloading and then checks that the drop
worked.  Under zero-consistency emulation that check fails, so shell
command lines get the sandbox user pinned to root instead.

This is a statement splitter, not a shell parser.  It knows about quotes,
backslash escapes, comments, ``$(...)`` and backticks (treated as opaque),
and the control operators ``&& || ; | &`` plus newlines.  Commands hidden
in ``sh -c`` strings, functions, or reserved-word constructs such as
``then apt-get ...`` are not recognised.
"""

from __future__ import annotations

import posixpath
import re
from dataclasses import dataclass, field

__all__ = ["CommandLine", "RewriteOutcome", "split_statements", "rewrite_apt",
           "APT_OPTION", "APT_COMMANDS"]

APT_OPTION = ("-o", "APT::Sandbox::User=root")
APT_COMMANDS = frozenset({"apt", "apt-get"})

_ASSIGNMENT = re.compile(r"[A-Za-z_][A-Za-z0-9_]*=")
_BLANK = " \t"
_OPERATOR_CHARS = "&|;\n"


@dataclass(frozen=True)
class Word:
    start: int
    end: int
    value: str  # with quoting removed


@dataclass(frozen=True)
class Statement:
    start: int
    end: int
    words: tuple[Word, ...]
    command: Word | None  # first word after leading assignments


@dataclass(frozen=True)
class CommandLine:
    text: str
    statement_list: tuple[Statement, ...] = ()
    parseable: bool = True
    error: str = ""

    @property
    def statements(self) -> list[tuple[tuple[int, int] | None, tuple[int, int]]]:
        """``(command-token range, statement range)`` pairs, as byte offsets."""
        return [((s.command.start, s.command.end) if s.command else None, (s.start, s.end))
                for s in self.statement_list]

    def command_tokens(self) -> list[str | None]:
        return [s.command.value if s.command else None for s in self.statement_list]


@dataclass(frozen=True)
class RewriteOutcome:
    text: str
    injections: int = 0
    fail_open: bool = False
    warnings: tuple[str, ...] = field(default=())


class _Unbalanced(Exception):
    pass


def _scan_word(text: str, i: int) -> tuple[int, str]:
    """Scan one word starting at ``i``; return (end, unquoted value)."""
    n = len(text)
    out = []
    while i < n:
        c = text[i]
        if c in _BLANK:
            break
        if c in _OPERATOR_CHARS and not _is_redirect_amp(text, i):
            break
        if c == "\\":
            if i + 1 >= n:
                raise _Unbalanced("trailing backslash")
            if text[i + 1] == "\n":  # line continuation
                i += 2
                continue
            out.append(text[i + 1])
            i += 2
        elif c == "'":
            j = text.find("'", i + 1)
            if j < 0:
                raise _Unbalanced(f"unterminated single quote at {i}")
            out.append(text[i + 1:j])
            i = j + 1
        elif c == '"':
            i += 1
            while True:
                if i >= n:
                    raise _Unbalanced("unterminated double quote")
                c = text[i]
                if c == '"':
                    i += 1
                    break
                if c == "\\" and i + 1 < n:
                    out.append(text[i + 1] if text[i + 1] in '"\\$`' else text[i:i + 2])
                    i += 2
                elif c == "$" and text.startswith("$(", i):
                    j = _skip_subst(text, i + 2)
                    out.append(text[i:j])
                    i = j
                elif c == "`":
                    j = _skip_backtick(text, i + 1)
                    out.append(text[i:j])
                    i = j
                else:
                    out.append(c)
                    i += 1
        elif c == "$" and text.startswith("$(", i):
            j = _skip_subst(text, i + 2)
            out.append(text[i:j])
            i = j
        elif c == "`":
            j = _skip_backtick(text, i + 1)
            out.append(text[i:j])
            i = j
        else:
            out.append(c)
            i += 1
    return i, "".join(out)


def _is_redirect_amp(text: str, i: int) -> bool:
    """``&`` that belongs to a redirection (``2>&1``, ``<&3``, ``&>file``)."""
    if text[i] != "&":
        return False
    return (i > 0 and text[i - 1] in "<>") or text.startswith("&>", i)


def _skip_dquote(text: str, i: int) -> int:
    n = len(text)
    while i < n:
        if text[i] == "\\":
            i += 2
        elif text[i] == '"':
            return i + 1
        else:
            i += 1
    raise _Unbalanced("unterminated double quote in $()")


def _skip_backtick(text: str, i: int) -> int:
    n = len(text)
    while i < n:
        if text[i] == "\\":
            i += 2
        elif text[i] == "`":
            return i + 1
        else:
            i += 1
    raise _Unbalanced("unterminated backtick")


def _skip_subst(text: str, i: int) -> int:
    """Skip a ``$(...)`` body starting after the opening paren."""
    depth = 1
    n = len(text)
    while i < n:
        c = text[i]
        if c == "\\":
            i += 2
        elif c == "'":
            j = text.find("'", i + 1)
            if j < 0:
                raise _Unbalanced("unterminated single quote in $()")
            i = j + 1
        elif c == '"':
            i = _skip_dquote(text, i + 1)
        elif c == "(":
            depth += 1
            i += 1
        elif c == ")":
            depth -= 1
            i += 1
            if depth == 0:
                return i
        else:
            i += 1
    raise _Unbalanced("unterminated $(")


def _statements(text: str) -> list[Statement]:
    out = []
    n = len(text)
    i = 0
    words: list[Word] = []

    def close():
        if not words:
            return
        cmd = next((w for w in words if not _ASSIGNMENT.match(text, w.start)), None)
        out.append(Statement(words[0].start, words[-1].end, tuple(words), cmd))

    while i < n:
        c = text[i]
        if c in _BLANK:
            i += 1
        elif text.startswith("\\\n", i):
            i += 2
        elif c in _OPERATOR_CHARS and not _is_redirect_amp(text, i):
            close()
            words = []
            i += 2 if text.startswith(("&&", "||", "|&", ";;"), i) else 1
        elif c == "#":
            j = text.find("\n", i)
            i = n if j < 0 else j
        else:
            end, value = _scan_word(text, i)
            words.append(Word(i, end, value))
            i = end
    close()
    return out


def split_statements(text: str) -> CommandLine:
    try:
        return CommandLine(text, tuple(_statements(text)))
    except _Unbalanced as e:
        return CommandLine(text, (), parseable=False, error=str(e))


def _has_option(words: tuple[Word, ...]) -> bool:
    values = [w.value for w in words]
    for a, b in zip(values, values[1:]):
        if (a, b) == APT_OPTION:
            return True
    return "".join(APT_OPTION) in values


def rewrite_apt(text: str) -> RewriteOutcome:
    """Splice the apt sandbox option after every apt/apt-get command token.

    Unparseable input comes back unchanged with ``fail_open`` set.
    """
    if "apt" not in text:
        return RewriteOutcome(text)
    cl = split_statements(text)
    if not cl.parseable:
        return RewriteOutcome(text, 0, True, (f"apt rewrite skipped: {cl.error}",))
    splice = " " + " ".join(APT_OPTION)
    pieces = []
    last = 0
    count = 0
    for st in cl.statement_list:
        cmd = st.command
        if cmd is None or posixpath.basename(cmd.value) not in APT_COMMANDS:
            continue
        if _has_option(st.words):
            continue
        pieces += [text[last:cmd.end], splice]
        last = cmd.end
        count += 1
    pieces.append(text[last:])
    return RewriteOutcome("".join(pieces), count)
