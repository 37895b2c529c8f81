"""Text front-end for noncommutative expressions.

Grammar (explicit ``*`` everywhere, primes mark derivatives)::

    expr    := ['-'] term (('+'|'-') term)*
    term    := factor ('*' factor)*
    factor  := primary ('^' ['-'] INT)*
    primary := NUMBER | 'i' | IDENT "'"* | 'inv(' expr ')' | 'D(' expr ')' | '(' expr ')'

NUMBER is an integer or exact rational p/q.  '^n' with n >= 1 expands to an
n-fold product (order preserved); '^-1' is only legal on single atoms and maps
to a formal inverse.  'i' is the imaginary coefficient unit, never an atom.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from fractions import Fraction

from .algebra import (
    CENTRAL_NAMES,
    FormalInverseError,
    GR_ONE,
    GaussRat,
    NCExpr,
    Word,
    default_atom_key,
    derive,
    scalar,
    sym,
    word_key,
)


class ParseError(ValueError):
    """Lex or parse failure with 1-based line/column position."""

    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{message} (line {line}, column {col})")
        self.line = line
        self.col = col


@dataclass(frozen=True)
class _Token:
    kind: str  # NUMBER IDENT OP END
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<NUMBER>\d+(?:/\d+)?)
  | (?P<IDENT>[A-Za-z_][A-Za-z_0-9]*'*)
  | (?P<OP>[-+*^(),])
  | (?P<WS>\s+)
  | (?P<BAD>.)
    """,
    re.VERBOSE,
)


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    line, col = 1, 1
    for m in _TOKEN_RE.finditer(text):
        kind = m.lastgroup
        value = m.group()
        if kind == "WS":
            newlines = value.count("\n")
            if newlines:
                line += newlines
                col = len(value) - value.rfind("\n")
            else:
                col += len(value)
            continue
        if kind == "BAD":
            raise ParseError(f"unexpected character {value!r}", line, col)
        tokens.append(_Token(kind, value, line, col))
        col += len(value)
    tokens.append(_Token("END", "", line, col))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def next(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def expect(self, text: str) -> _Token:
        tok = self.next()
        if tok.text != text:
            raise ParseError(f"expected {text!r}, found {tok.text or 'end of input'!r}",
                             tok.line, tok.col)
        return tok

    def fail(self, message: str) -> ParseError:
        tok = self.peek()
        return ParseError(message, tok.line, tok.col)

    # expr := ['-'] term (('+'|'-') term)*
    def expr(self) -> NCExpr:
        negate = False
        if self.peek().text == "-":
            self.next()
            negate = True
        value = self.term()
        if negate:
            value = -value
        while self.peek().text in ("+", "-"):
            op = self.next().text
            rhs = self.term()
            value = value + rhs if op == "+" else value - rhs
        return value

    # term := factor ('*' factor)*
    def term(self) -> NCExpr:
        value = self.factor()
        while self.peek().text == "*":
            self.next()
            value = value * self.factor()
        return value

    # factor := primary ('^' ['-'] INT)*
    def factor(self) -> NCExpr:
        value = self.primary()
        while self.peek().text == "^":
            self.next()
            sign = 1
            if self.peek().text == "-":
                self.next()
                sign = -1
            tok = self.next()
            if tok.kind != "NUMBER" or "/" in tok.text:
                raise ParseError("exponent must be an integer", tok.line, tok.col)
            n = sign * int(tok.text)
            if n >= 1:
                value = value**n
            elif n == -1:
                try:
                    value = value.inv()
                except FormalInverseError as exc:
                    raise ParseError(str(exc), tok.line, tok.col) from None
            else:
                raise ParseError(f"unsupported exponent {n}", tok.line, tok.col)
        return value

    def primary(self) -> NCExpr:
        tok = self.next()
        if tok.kind == "NUMBER":
            return scalar(GaussRat.of(Fraction(tok.text)))
        if tok.text == "(":
            inner = self.expr()
            self.expect(")")
            return inner
        if tok.kind == "IDENT":
            base = tok.text.rstrip("'")
            prime = len(tok.text) - len(base)
            if base == "i":
                if prime:
                    raise ParseError("'i' is the imaginary unit; primes not allowed",
                                     tok.line, tok.col)
                return scalar(GaussRat.of(0, 1))
            if base in ("inv", "D") and self.peek().text == "(":
                if prime:
                    raise ParseError(f"{base}(...) cannot be primed", tok.line, tok.col)
                self.next()
                inner = self.expr()
                self.expect(")")
                if base == "D":
                    return derive(inner)
                try:
                    return inner.inv()
                except FormalInverseError as exc:
                    raise ParseError(str(exc), tok.line, tok.col) from None
            if base in ("inv", "D"):
                raise ParseError(f"{base!r} requires parenthesized argument",
                                 tok.line, tok.col)
            if base in CENTRAL_NAMES and prime:
                raise ParseError(f"parameter {base!r} is constant; primes not allowed",
                                 tok.line, tok.col)
            return sym(base, prime)
        raise ParseError(
            f"unexpected token {tok.text or 'end of input'!r}", tok.line, tok.col
        )


def parse_expression(text: str) -> NCExpr:
    """Parse source text to an expression; positioned ParseError on bad input."""
    parser = _Parser(_tokenize(text))
    value = parser.expr()
    tok = parser.peek()
    if tok.kind != "END":
        raise ParseError(f"trailing input {tok.text!r}", tok.line, tok.col)
    return value


# ---------------------------------------------------------------------------
# printing


def _frac_str(f: Fraction) -> str:
    return str(f) if f.denominator == 1 else f"{f.numerator}/{f.denominator}"


def _coeff_factors(c: GaussRat) -> tuple[bool, list[str]]:
    """Signed factor list for a nonzero coefficient multiplying a word."""
    if c.im == 0:
        negative = c.re < 0
        mag = abs(c.re)
        return negative, [] if mag == 1 else [_frac_str(mag)]
    if c.re == 0:
        negative = c.im < 0
        mag = abs(c.im)
        factors = [] if mag == 1 else [_frac_str(mag)]
        return negative, factors + ["i"]
    # mixed coefficient: keep it grouped so reparsing is unambiguous
    re_s = _frac_str(c.re)
    im_mag = abs(c.im)
    im_s = ("" if im_mag == 1 else _frac_str(im_mag) + "*") + "i"
    joiner = " - " if c.im < 0 else " + "
    return False, [f"({re_s}{joiner}{im_s})"]


def _atom_str(a) -> str:
    body = a.name + "'" * a.prime
    return f"inv({body})" if a.inv else body


def _word_factors(w: Word) -> list[str]:
    factors: list[str] = []
    for name, exp in w.params:
        if exp >= 1:
            factors.append(name if exp == 1 else f"{name}^{exp}")
        else:
            base = f"inv({name})"
            factors.append(base if exp == -1 else f"{base}^{-exp}")
    run_atom, run_len = None, 0
    for a in tuple(w.ops) + (None,):
        if a is not None and a == run_atom:
            run_len += 1
            continue
        if run_atom is not None:
            text = _atom_str(run_atom)
            factors.append(text if run_len == 1 else f"{text}^{run_len}")
        run_atom, run_len = a, 1
    return factors


def print_expr(e: NCExpr) -> str:
    """Canonical text form; parse_expression(print_expr(e)) == e structurally."""
    if e.is_zero():
        return "0"
    pieces: list[str] = []
    ordered = sorted(
        e.terms(), key=lambda it: word_key(it[0], default_atom_key), reverse=True
    )
    for w, c in ordered:
        word_factors = _word_factors(w)
        if not word_factors:
            # pure scalar term: render the full coefficient
            if c.im == 0:
                negative, text = c.re < 0, _frac_str(abs(c.re))
            elif c.re == 0:
                negative = c.im < 0
                mag = abs(c.im)
                text = "i" if mag == 1 else f"{_frac_str(mag)}*i"
            else:
                negative, [text] = False, _coeff_factors(c)[1]
        else:
            negative, coeff_factors = _coeff_factors(c)
            text = "*".join(coeff_factors + word_factors)
        if not pieces:
            pieces.append(("-" if negative else "") + text)
        else:
            pieces.append(("- " if negative else "+ ") + text)
    return " ".join(pieces)
