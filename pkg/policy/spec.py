"""Policy grammar.

    spec   := metric | const | comb
    metric := ("jobs" | "cpu" | "mem" | "temp") ":" number
    const  := "always-local" | "always-remote"
    comb   := ("all-of" | "any-of") "(" spec ("," spec)* ")"

Whitespace between tokens is ignored. Kinds are case-sensitive.
"""
import math
import re
from dataclasses import dataclass
from typing import Optional, Tuple

from utils.constants import COMBINATOR_KINDS, CONSTANT_POLICY_KINDS, METRIC_POLICY_KINDS, TEMP_BAND_C
from utils.helpers import EdgeflowError, format_number


class PolicyError(EdgeflowError):
    pass


class PolicyGrammarError(PolicyError):
    def __init__(self, message, position):
        self.position = position
        super().__init__(f"{message} at position {position}")


class PolicyRangeError(PolicyError):
    code = "OutOfRange"


@dataclass(frozen=True)
class PolicySpec:
    kind: str
    threshold: Optional[float] = None
    children: Tuple["PolicySpec", ...] = ()


_NAME = re.compile(r"[a-z][a-z-]*")
_NUMBER = re.compile(r"[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?")


def _check_range(kind, value, text):
    if not math.isfinite(value):
        raise PolicyRangeError(f"{kind} threshold must be finite, got '{text}'")
    if kind == "jobs":
        if not float(value).is_integer() or value < 0:
            raise PolicyRangeError(f"jobs threshold must be a non-negative integer, got '{text}'")
    elif kind in ("cpu", "mem"):
        if not 0.0 <= value <= 1.0:
            raise PolicyRangeError(f"{kind} threshold must be a fraction in [0, 1], got '{text}'")
    elif kind == "temp":
        low, high = TEMP_BAND_C
        if not low <= value <= high:
            raise PolicyRangeError(f"temp threshold must be within [{low:g}, {high:g}] C, got '{text}'")


class _Parser:
    def __init__(self, text):
        self.text = text
        self.pos = 0

    def skip_space(self):
        while self.pos < len(self.text) and self.text[self.pos].isspace():
            self.pos += 1

    def expect(self, char):
        self.skip_space()
        if self.pos >= len(self.text) or self.text[self.pos] != char:
            raise PolicyGrammarError(f"expected '{char}'", self.pos)
        self.pos += 1

    def parse_spec(self) -> PolicySpec:
        self.skip_space()
        match = _NAME.match(self.text, self.pos)
        if not match:
            raise PolicyGrammarError("expected a policy kind", self.pos)
        kind = match.group(0)
        start = self.pos
        self.pos = match.end()

        if kind in METRIC_POLICY_KINDS:
            self.expect(":")
            self.skip_space()
            number = _NUMBER.match(self.text, self.pos)
            if not number:
                raise PolicyGrammarError(f"expected a number after '{kind}:'", self.pos)
            self.pos = number.end()
            value = float(number.group(0))
            _check_range(kind, value, number.group(0))
            return PolicySpec(kind, value)
        if kind in CONSTANT_POLICY_KINDS:
            return PolicySpec(kind)
        if kind in COMBINATOR_KINDS:
            self.expect("(")
            children = [self.parse_spec()]
            self.skip_space()
            while self.pos < len(self.text) and self.text[self.pos] == ",":
                self.pos += 1
                children.append(self.parse_spec())
                self.skip_space()
            self.expect(")")
            return PolicySpec(kind, None, tuple(children))
        raise PolicyGrammarError(f"unknown policy kind '{kind}'", start)


def parse_policy(spec) -> PolicySpec:
    """Parse a policy string such as "jobs:4" or "any-of(cpu:0.75, temp:75)" """
    if not isinstance(spec, str):
        raise PolicyGrammarError("policy must be a string", 0)
    parser = _Parser(spec)
    result = parser.parse_spec()
    parser.skip_space()
    if parser.pos != len(spec):
        raise PolicyGrammarError("unexpected trailing input", parser.pos)
    return result


def format_policy(policy: PolicySpec) -> str:
    if policy.kind in COMBINATOR_KINDS:
        return f"{policy.kind}({','.join(format_policy(c) for c in policy.children)})"
    if policy.kind in CONSTANT_POLICY_KINDS:
        return policy.kind
    if policy.kind == "jobs":
        return f"jobs:{int(policy.threshold)}"
    return f"{policy.kind}:{format_number(policy.threshold)}"


def can_offload(policy: PolicySpec) -> bool:
    """False only for policies that can never choose remote execution"""
    if policy.kind == "always-local":
        return False
    if policy.kind in COMBINATOR_KINDS:
        children = [can_offload(c) for c in policy.children]
        return all(children) if policy.kind == "all-of" else any(children)
    return True
