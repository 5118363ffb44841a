"""
Getting apt to cooperate
========================

apt drops privileges for downloads and then checks that the drop worked,
which a faked setresuid cannot pass.  The fix is an option telling apt to
stay root; these are the rules for splicing it into shell command lines.
"""

from zeroroot import rewrite_apt, split_statements

for line in [
    "apt-get install -y openssh",
    "DEBIAN_FRONTEND=noninteractive /usr/bin/apt-get update; apt list",
    "apt update && apt-get upgrade -y 2>&1 | tee log",
    "echo 'apt-get && apt'",
    "yum install -y openssh",
]:
    out = rewrite_apt(line)
    print(f"{out.injections}  {out.text}")

# statement splitting respects quotes, so only real command tokens count
print(split_statements("A=1 apt-get x && echo 'y; apt z'").command_tokens())

# rewriting twice changes nothing
once = rewrite_apt("apt-get update").text
print(rewrite_apt(once).injections)

# if the quoting is broken we leave the line alone rather than guess
print(rewrite_apt("apt-get install 'oops"))
