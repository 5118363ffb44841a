"""Quoting-aware random shell command lines, for rewrite property tests."""

import random

SEPARATORS = [" && ", " || ", "; ", ";", " | ", " & ", "&&", "|"]
COMMANDS = ["apt", "apt-get", "/usr/bin/apt-get", "/usr/bin/apt", "yum", "echo",
            "aptitude", "apt-cache", "dnf", "true", "cp", "ls"]
PLAIN = ["install", "update", "-y", "openssh", "list", "--no-install-recommends",
         "apt", "apt-get", "x.deb", "-o", "Dpkg::Options::=--force-confold", "a/b"]
QUOTABLE = ["a && b", "x; apt-get y", "|", "&", "it's", "apt-get update", " ", "$HOME",
            "a\\b", "semi;colon", "pipe|line", ""]


def _single(rng: random.Random) -> str:
    return "'" + rng.choice(QUOTABLE).replace("'", "") + "'"


def _double(rng: random.Random) -> str:
    body = rng.choice(QUOTABLE).replace("\\", "\\\\").replace('"', '\\"')
    if rng.random() < 0.3:
        body += '\\"'
    return '"' + body + '"'


def _escaped(rng: random.Random) -> str:
    return rng.choice(PLAIN) + "\\" + rng.choice([";", "&", "|", " ", "'", '"'])


def word(rng: random.Random) -> str:
    return rng.choice([lambda: rng.choice(PLAIN), lambda: rng.choice(PLAIN),
                       lambda: _single(rng), lambda: _double(rng), lambda: _escaped(rng)])()


def statement(rng: random.Random) -> str:
    parts = [f"V{rng.randint(0, 9)}={rng.choice(['1', 'x', ''])}"
             for _ in range(rng.choice([0, 0, 0, 1, 2]))]
    parts.append(rng.choice(COMMANDS))
    if rng.random() < 0.1:
        parts += ["-o", "APT::Sandbox::User=root"]
    parts += [word(rng) for _ in range(rng.randint(0, 4))]
    return rng.choice([" ", "  ", "\t"]).join(parts)


def command_line(rng: random.Random, newline_ok: bool = True) -> str:
    seps = SEPARATORS + (["\n"] if newline_ok else [])
    out = statement(rng)
    for _ in range(rng.randint(0, 4)):
        out += rng.choice(seps) + statement(rng)
    return out


def corpus(n: int, seed: int = 0) -> list[str]:
    rng = random.Random(seed)
    return [command_line(rng) for _ in range(n)]
