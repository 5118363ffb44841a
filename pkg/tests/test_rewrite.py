import pytest
from hypothesis import given, settings, strategies as st

import cmdgen
import oracle
from zeroroot.rewrite import rewrite_apt, split_statements

OPT = " -o APT::Sandbox::User=root"

# (input, expected output, injections)
CORPUS = [
    ("apt-get install -y openssh", "apt-get -o APT::Sandbox::User=root install -y openssh", 1),
    ("yum install -y openssh", "yum install -y openssh", 0),
    ("DEBIAN_FRONTEND=noninteractive /usr/bin/apt-get update; apt list",
     "DEBIAN_FRONTEND=noninteractive /usr/bin/apt-get -o APT::Sandbox::User=root update; "
     "apt -o APT::Sandbox::User=root list", 2),
    ("apt update && apt-get upgrade",
     "apt -o APT::Sandbox::User=root update && apt-get -o APT::Sandbox::User=root upgrade", 2),
    ("echo 'a && b'", "echo 'a && b'", 0),
    ("apt-get -o APT::Sandbox::User=root update", "apt-get -o APT::Sandbox::User=root update", 0),
    ("apt-get -oAPT::Sandbox::User=root update", "apt-get -oAPT::Sandbox::User=root update", 0),
    ("aptitude install x", "aptitude install x", 0),
    ("apt-cache show x", "apt-cache show x", 0),
    ("echo apt-get", "echo apt-get", 0),
    ("sudo apt-get install x", "sudo apt-get install x", 0),
    ('echo "x; apt-get y"', 'echo "x; apt-get y"', 0),
    ("apt-get update 2>&1 | tee log", f"apt-get{OPT} update 2>&1 | tee log", 1),
    ("apt-get update &>/dev/null && apt install -y vim",
     f"apt-get{OPT} update &>/dev/null && apt{OPT} install -y vim", 2),
    ("apt\tupdate", f"apt{OPT}\tupdate", 1),
    ("A=1 B=2 apt-get  install -y x", f"A=1 B=2 apt-get{OPT}  install -y x", 1),
    ("apt-get update\napt-get install -y x", f"apt-get{OPT} update\napt-get{OPT} install -y x", 2),
    ("apt-get update || apt-get update", f"apt-get{OPT} update || apt-get{OPT} update", 2),
    ("apt-get update | apt-get x & apt y", f"apt-get{OPT} update | apt-get{OPT} x & apt{OPT} y", 3),
    ('"apt-get" update', f'"apt-get"{OPT} update', 1),
    ("/usr/bin/apt update", f"/usr/bin/apt{OPT} update", 1),
    ("apt-get install x\\; apt-get y", f"apt-get{OPT} install x\\; apt-get y", 1),
    ('apt-get install "foo" # apt-get', f'apt-get{OPT} install "foo" # apt-get', 1),
    ("$(which apt-get) update", "$(which apt-get) update", 0),
    ("`apt-get` update", "`apt-get` update", 0),
    ("apt-get update;;apt y", f"apt-get{OPT} update;;apt{OPT} y", 2),
    ("", "", 0),
]


@pytest.mark.parametrize("text,expected,n", CORPUS)
def test_corpus(text, expected, n):
    out = rewrite_apt(text)
    assert (out.text, out.injections, out.fail_open) == (expected, n, False)


def test_corpus_size():
    assert len(CORPUS) >= 20


@pytest.mark.parametrize("text", ["apt-get install 'unterminated", 'apt "x', "apt x\\",
                                  "apt-get $(echo", "apt `x"])
def test_unbalanced_fails_open(text):
    out = rewrite_apt(text)
    assert out.fail_open and out.injections == 0 and out.text == text
    assert out.warnings
    assert not split_statements(text).parseable


def test_split_examples():
    cl = split_statements("yum install -y openssh")
    assert cl.command_tokens() == ["yum"]
    assert len(cl.statements) == 1
    assert split_statements("apt update && apt-get upgrade").command_tokens() == ["apt", "apt-get"]
    assert split_statements("echo 'a && b'").command_tokens() == ["echo"]
    assert split_statements("a\nb;c|d&e||f&&g").command_tokens() == list("abcdefg")
    assert split_statements("X=1").command_tokens() == [None]


@pytest.mark.parametrize("text", [t for t, _, _ in CORPUS if oracle.tokenizer_comparable(t)])
def test_command_tokens_match_stdlib_lexer(text):
    assert [t for t in split_statements(text).command_tokens() if t] == oracle.command_tokens(text)


def test_ranges_are_ordered_and_nested():
    text = "A=1 apt-get update && echo 'x;y' ; /usr/bin/apt list"
    cl = split_statements(text)
    prev_end = -1
    for cmd, (s, e) in cl.statements:
        assert prev_end <= s < e
        assert s <= cmd[0] < cmd[1] <= e
        prev_end = e
    assert [text[c[0]:c[1]] for c, _ in cl.statements] == ["apt-get", "echo", "/usr/bin/apt"]


lines = st.randoms(use_true_random=False).map(cmdgen.command_line)


@settings(max_examples=300, deadline=None)
@given(lines)
def test_idempotent(text):
    out = rewrite_apt(text)
    assert not out.fail_open
    assert rewrite_apt(out.text).injections == 0


@settings(max_examples=300, deadline=None)
@given(lines)
def test_byte_preservation(text):
    out = rewrite_apt(text)
    assert out.text.replace(OPT, "") == text.replace(OPT, "")
    assert out.text.count(OPT) - text.count(OPT) == out.injections
    if out.injections == 0:
        assert out.text == text


@settings(max_examples=300, deadline=None)
@given(st.randoms(use_true_random=False).map(lambda r: cmdgen.command_line(r, newline_ok=False)))
def test_command_tokens_match_stdlib_lexer_generated(text):
    if oracle.tokenizer_comparable(text):
        assert split_statements(text).command_tokens() == oracle.command_tokens(text)


@given(st.text())
def test_no_apt_substring_is_identity(text):
    if "apt" not in text:
        assert rewrite_apt(text).text == text


@given(st.text(alphabet="ap t-g'\"\\;&|\n$()`#=", max_size=40))
def test_never_raises_and_preserves_bytes(text):
    out = rewrite_apt(text)
    assert out.text.replace(OPT, "") == text.replace(OPT, "")
    if out.fail_open:
        assert out.text == text and out.injections == 0
