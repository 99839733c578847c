r"""Recursive-descent parser for the ASCII PCTL surface syntax.

Grammar (whitespace-insensitive)::

    state    ::= conj [ ("=>" | "->") state ]
    conj     ::= unary { "&" unary }
    unary    ::= "!" unary | primary
    primary  ::= "true" | "false" | IDENT | "(" state ")"
               | "P" CMP NUMBER bracket(path)
               | "C" CMP NUMBER ( bracket(cost) | cost )
    cost     ::= "F" "<=" INT state
    path     ::= "X" state
               | "F" [ "<=" INT ] state
               | state "U" [ "<=" INT ] state
    bracket(x) ::= "(" x ")" | "[" x "]"
    CMP      ::= "<=" | "<" | ">=" | ">"

``P``, ``C``, ``X``, ``F`` and ``U`` are reserved; ``false`` is read as
``!true``.  Probabilities must lie in ``[0, 1]`` and step bounds are
nonnegative integers.
"""

from __future__ import annotations

import re
from dataclasses import dataclass

from ..errors import PctlSyntaxError
from .ast import (
    And,
    Atom,
    BoundedEventually,
    BoundedUntil,
    CostBound,
    Eventually,
    Implies,
    Next,
    Not,
    Prob,
    TrueF,
    Until,
)

KEYWORDS = {"true", "false", "P", "C", "X", "F", "U"}

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<ident>[A-Za-z_][A-Za-z0-9_]*)
  | (?P<op>=>|->|<=|>=|<|>|&|!|-|\(|\)|\[|\])
    """,
    re.VERBOSE,
)


@dataclass(frozen=True)
class Token:
    kind: str  # "num", "ident", "kw", "op", "eof"
    text: str
    offset: int


def tokenize(text: str) -> list[Token]:
    tokens, pos = [], 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None:
            raise PctlSyntaxError(f"unexpected character {text[pos]!r}", len(text[:pos].encode()))
        kind = m.lastgroup
        if kind != "ws":
            value = m.group()
            if kind == "ident" and value in KEYWORDS:
                kind = "kw"
            tokens.append(Token(kind, value, len(text[:pos].encode())))
        pos = m.end()
    tokens.append(Token("eof", "", len(text.encode())))
    return tokens


class _Parser:
    def __init__(self, text: str):
        self.tokens = tokenize(text)
        self.i = 0

    @property
    def tok(self) -> Token:
        return self.tokens[self.i]

    def at(self, *texts) -> bool:
        return self.tok.kind in ("kw", "op") and self.tok.text in texts

    def advance(self) -> Token:
        t = self.tok
        self.i += 1
        return t

    def fail(self, expected):
        found = self.tok.text or "end of input"
        raise PctlSyntaxError(f"unexpected {found!r}", self.tok.offset, expected)

    def expect(self, *texts) -> Token:
        if not self.at(*texts):
            self.fail(texts)
        return self.advance()

    # -- state formulas
    def state(self):
        left = self.conj()
        if self.at("=>", "->"):
            self.advance()
            return Implies(left, self.state())
        return left

    def conj(self):
        f = self.unary()
        while self.at("&"):
            self.advance()
            f = And(f, self.unary())
        return f

    def unary(self):
        if self.at("!"):
            self.advance()
            return Not(self.unary())
        return self.primary()

    def primary(self):
        t = self.tok
        if self.at("true"):
            self.advance()
            return TrueF()
        if self.at("false"):
            self.advance()
            return Not(TrueF())
        if t.kind == "ident":
            self.advance()
            return Atom(t.text)
        if self.at("("):
            self.advance()
            f = self.state()
            self.expect(")")
            return f
        if self.at("P"):
            self.advance()
            op = self.comparator()
            p = self.number(probability=True)
            close = self.open_bracket()
            path = self.path()
            self.expect(close)
            return Prob(op, p, path)
        if self.at("C"):
            self.advance()
            op = self.comparator()
            m = self.number()
            if self.at("(", "["):
                close = self.open_bracket()
                f = self.cost_body(op, m)
                self.expect(close)
                return f
            return self.cost_body(op, m)
        self.fail(("true", "false", "identifier", "(", "!", "P", "C"))

    def cost_body(self, op, m):
        self.expect("F")
        k = self.bound(required=True)
        return CostBound(op, m, k, self.state())

    # -- path formulas
    def path(self):
        if self.at("X"):
            self.advance()
            return Next(self.state())
        if self.at("F"):
            self.advance()
            k = self.bound()
            arg = self.state()
            return Eventually(arg) if k is None else BoundedEventually(arg, k)
        left = self.state()
        if not self.at("U"):
            self.fail(("U", "&", "=>"))
        self.advance()
        k = self.bound()
        right = self.state()
        return Until(left, right) if k is None else BoundedUntil(left, right, k)

    # -- lexical helpers
    def open_bracket(self) -> str:
        t = self.expect("(", "[")
        return ")" if t.text == "(" else "]"

    def comparator(self) -> str:
        return self.expect("<=", "<", ">=", ">").text

    def bound(self, required: bool = False):
        if not self.at("<="):
            if required:
                self.fail(("<=",))
            return None
        self.advance()
        t = self.tok
        if t.kind != "num" or not t.text.isdigit():
            self.fail(("nonnegative integer",))
        self.advance()
        return int(t.text)

    def number(self, probability: bool = False) -> float:
        sign = 1.0
        if not probability and self.at("-"):
            self.advance()
            sign = -1.0
        t = self.tok
        if t.kind != "num":
            self.fail(("number",))
        self.advance()
        value = sign * float(t.text)
        if probability and not 0.0 <= value <= 1.0:
            raise PctlSyntaxError(f"probability {t.text} outside [0, 1]", t.offset)
        return value


def parse(text: str):
    """Parse a PCTL state formula; raises :class:`PctlSyntaxError` with a byte offset."""
    p = _Parser(text)
    f = p.state()
    if p.tok.kind != "eof":
        p.fail(("end of input", "&", "=>"))
    return f
