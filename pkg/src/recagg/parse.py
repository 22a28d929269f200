"""Parser for aggregation spec strings such as ``sub(dsum(0.99),var)``.

Grammar (whitespace-insensitive)::

    spec      := composite | atom
    composite := ("add" | "sub") "(" spec "," spec ")"
               | "lerp" "(" spec "," spec "," number ")"
    atom      := name [ "(" number [ "," number ] ")" ]
"""

from __future__ import annotations

import re

from .aggregation import (
    Aggregation,
    AggregationError,
    Composite,
    DiscountedMax,
    DiscountedMin,
    DiscountedSum,
    LogSumExp,
    Mean,
    Range,
    RunningMean,
    Sharpe,
    TopK,
    Variance,
    WelfordVariance,
)


class ParseError(AggregationError):
    def __init__(self, message: str, spec: str, position: int):
        super().__init__(f"{message} at position {position} in {spec!r}")
        self.spec = spec
        self.position = position


_DISCOUNTED = {"dsum": DiscountedSum, "dmin": DiscountedMin, "dmax": DiscountedMax}
# undiscounted shorthands
_ALIASES = {"sum": "dsum", "min": "dmin", "max": "dmax"}
_PLAIN = {
    "lse": LogSumExp,
    "range": Range,
    "mean": Mean,
    "runmean": RunningMean,
    "var": Variance,
    "welfordvar": WelfordVariance,
    "sharpe": Sharpe,
}
_TOKEN = re.compile(r"\s*(?:(?P<name>[A-Za-z_][A-Za-z0-9_]*)|(?P<num>[-+]?(?:\d+\.?\d*|\.\d+)(?:[eE][-+]?\d+)?)|(?P<punct>[(),]))")


def _tokenize(spec: str) -> list[tuple[str, str, int]]:
    tokens = []
    pos = 0
    while pos < len(spec):
        if spec[pos:].strip() == "":
            break
        m = _TOKEN.match(spec, pos)
        if not m:
            start = len(spec) - len(spec[pos:].lstrip())
            raise ParseError(f"unexpected character {spec[start]!r}", spec, start)
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    return tokens


class _Parser:
    def __init__(self, spec: str):
        self.spec = spec
        self.tokens = _tokenize(spec)
        self.i = 0

    def error(self, msg: str, pos: int | None = None):
        if pos is None:
            pos = self.tokens[self.i][2] if self.i < len(self.tokens) else len(self.spec)
        raise ParseError(msg, self.spec, pos)

    def peek(self):
        return self.tokens[self.i] if self.i < len(self.tokens) else (None, None, len(self.spec))

    def expect(self, punct: str):
        kind, text, pos = self.peek()
        if kind != "punct" or text != punct:
            self.error(f"expected {punct!r}")
        self.i += 1

    def number(self) -> tuple[float, int]:
        kind, text, pos = self.peek()
        if kind != "num":
            self.error("expected a number")
        self.i += 1
        return float(text), pos

    def parse(self) -> Aggregation:
        agg = self.spec_()
        if self.i != len(self.tokens):
            self.error("trailing input")
        return agg

    def spec_(self) -> Aggregation:
        kind, name, pos = self.peek()
        if kind != "name":
            self.error("expected an aggregation name")
        self.i += 1
        name = name.lower()
        if name in ("add", "sub", "lerp"):
            self.expect("(")
            left = self.spec_()
            self.expect(",")
            right = self.spec_()
            lam = 0.0
            if name == "lerp":
                self.expect(",")
                lam, lpos = self.number()
                if not 0.0 <= lam <= 1.0:
                    self.error(f"interpolation weight {lam} outside [0, 1]", lpos)
            self.expect(")")
            return Composite(left, right, name, lam)
        name = _ALIASES.get(name, name)
        params: list[tuple[float, int]] = []
        if self.peek()[1] == "(":
            self.i += 1
            params.append(self.number())
            while self.peek()[1] == ",":
                self.i += 1
                params.append(self.number())
            self.expect(")")
        if name in _DISCOUNTED:
            if len(params) > 1:
                self.error(f"{name} takes at most one parameter", params[1][1])
            gamma = params[0][0] if params else 1.0
            if not 0.0 <= gamma <= 1.0:
                self.error(f"discount {gamma} outside [0, 1]", params[0][1])
            return _DISCOUNTED[name](gamma)
        if name == "top":
            if len(params) != 1:
                self.error("top takes exactly one integer parameter k", pos)
            k, kpos = params[0]
            if k != int(k) or k < 1:
                self.error(f"top-k needs an integer k >= 1, got {k:g}", kpos)
            return TopK(int(k))
        if name in _PLAIN:
            if params:
                self.error(f"{name} takes no parameters", params[0][1])
            return _PLAIN[name]()
        self.error(f"unknown aggregation {name!r}", pos)


def parse_aggregation(spec: str) -> Aggregation:
    """Parse one aggregation spec, e.g. ``"dsum(0.9)"`` or ``"lerp(min,max,0.3)"``."""
    return _Parser(spec).parse()


def split_specs(text: str) -> list[str]:
    """Split a comma-separated list of specs at top-level commas only."""
    out, depth, start = [], 0, 0
    for i, ch in enumerate(text):
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        elif ch == "," and depth == 0:
            out.append(text[start:i].strip())
            start = i + 1
    out.append(text[start:].strip())
    return [s for s in out if s]
