"""STIX 2.x pattern subset: parser, canonicalizer, and renderer.

Supported grammar (one observation expression):

    pattern     = '[' expr ']'
    expr        = term ( OR term )*
    term        = factor ( AND factor )*
    factor      = comparison | '(' expr ')'
    comparison  = path '=' string
                | path IN '(' string ( ',' string )* ')'

Object paths are limited to ipv4-addr:value, domain-name:value, url:value,
file:hashes.MD5 and file:hashes.'SHA-256'.  IN desugars to an OR of leaves,
nested same-operator nodes are flattened, and observable values are
canonicalized (domains and hashes lowercased, trailing dot stripped from
domains).
"""

from __future__ import annotations

import ipaddress
import re
from dataclasses import dataclass
from enum import Enum
from typing import Iterator, Union
from urllib.parse import urlsplit


class PatternError(ValueError):
    """Base class for pattern parse failures."""

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.message = message
        self.offset = offset


class PatternSyntaxError(PatternError):
    """Input does not conform to the subset grammar."""


class UnsupportedConstructError(PatternError):
    """Syntactically valid STIX that falls outside the supported subset."""

    def __init__(self, construct: str, offset: int):
        super().__init__(f"unsupported construct: {construct}", offset)
        self.construct = construct


class ObservableKind(str, Enum):
    IPV4 = "ipv4"
    DOMAIN = "domain"
    URL = "url"
    MD5 = "md5"
    SHA256 = "sha256"
    OTHER = "other"


# The five object paths in scope; everything else is an unsupported construct.
PATH_TO_KIND = {
    "ipv4-addr:value": ObservableKind.IPV4,
    "domain-name:value": ObservableKind.DOMAIN,
    "url:value": ObservableKind.URL,
    "file:hashes.MD5": ObservableKind.MD5,
    "file:hashes.'SHA-256'": ObservableKind.SHA256,
}
KIND_TO_PATH = {kind: path for path, kind in PATH_TO_KIND.items()}

# Kinds that stay relevant without a topology match (see relevance engine).
HOST_AGNOSTIC_KINDS = frozenset({ObservableKind.MD5, ObservableKind.SHA256, ObservableKind.URL})

_MD5_RE = re.compile(r"[0-9a-f]{32}\Z")
_SHA256_RE = re.compile(r"[0-9a-f]{64}\Z")
_DOMAIN_RE = re.compile(r"[a-z0-9_-]+(\.[a-z0-9_-]+)*\Z")


@dataclass(frozen=True)
class Observable:
    kind: ObservableKind
    value: str
    object_path: str


@dataclass(frozen=True)
class Leaf:
    observable: Observable


@dataclass(frozen=True)
class And:
    children: tuple["Expr", ...]


@dataclass(frozen=True)
class Or:
    children: tuple["Expr", ...]


Expr = Union[Leaf, And, Or]


def canonicalize_domain(value: str) -> str:
    value = value.lower()
    if value.endswith("."):
        value = value[:-1]
    return value


def canonicalize_value(kind: ObservableKind, value: str, offset: int = 0) -> str:
    """Canonicalize and validate one observable value; raises PatternSyntaxError."""
    if kind is ObservableKind.IPV4:
        try:
            return str(ipaddress.IPv4Address(value))
        except ipaddress.AddressValueError:
            raise PatternSyntaxError(f"not a dotted-quad IPv4 address: {value!r}", offset) from None
    if kind is ObservableKind.DOMAIN:
        canonical = canonicalize_domain(value)
        if not canonical or not _DOMAIN_RE.match(canonical):
            raise PatternSyntaxError(f"not a valid domain name: {value!r}", offset)
        return canonical
    if kind is ObservableKind.URL:
        parts = urlsplit(value)
        if not parts.scheme or not parts.netloc:
            raise PatternSyntaxError(f"not an absolute URL: {value!r}", offset)
        return value
    if kind is ObservableKind.MD5:
        canonical = value.lower()
        if not _MD5_RE.match(canonical):
            raise PatternSyntaxError(f"not a 32-hex-char MD5 digest: {value!r}", offset)
        return canonical
    if kind is ObservableKind.SHA256:
        canonical = value.lower()
        if not _SHA256_RE.match(canonical):
            raise PatternSyntaxError(f"not a 64-hex-char SHA-256 digest: {value!r}", offset)
        return canonical
    raise PatternSyntaxError(f"no canonical form for kind {kind}", offset)


def make_observable(kind: ObservableKind, value: str) -> Observable:
    """Build a canonicalized observable for a supported kind."""
    return Observable(kind=kind, value=canonicalize_value(kind, value), object_path=KIND_TO_PATH[kind])


def leaf(kind: ObservableKind, value: str) -> Leaf:
    return Leaf(make_observable(kind, value))


# --- tokenizer -------------------------------------------------------------

_TOKEN_SPEC = [
    ("LBRACKET", re.compile(r"\[")),
    ("RBRACKET", re.compile(r"\]")),
    ("LPAREN", re.compile(r"\(")),
    ("RPAREN", re.compile(r"\)")),
    ("COMMA", re.compile(r",")),
    # Multi-char comparators first so '!=' is not read as '!' + '='.
    ("BADOP", re.compile(r"!=|<=|>=|<|>")),
    ("EQ", re.compile(r"=")),
    # Object path: object type, colon, dotted property chain with optional
    # single-quoted segments (file:hashes.'SHA-256').
    ("PATH", re.compile(r"[a-zA-Z0-9_-]+:(?:[a-zA-Z0-9_-]+|'[^']+')(?:\.(?:[a-zA-Z0-9_-]+|'[^']+'))*")),
    ("STRING", re.compile(r"'(?:\\.|[^'\\])*'")),
    ("WORD", re.compile(r"[A-Za-z_][A-Za-z0-9_]*")),
]

_UNSUPPORTED_KEYWORDS = {
    "LIKE", "MATCHES", "ISSUBSET", "ISSUPERSET", "FOLLOWEDBY",
    "WITHIN", "REPEATS", "START", "STOP", "NOT", "EXISTS",
}


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    offset: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    length = len(text)
    while pos < length:
        if text[pos].isspace():
            pos += 1
            continue
        for kind, regex in _TOKEN_SPEC:
            match = regex.match(text, pos)
            if match:
                tokens.append(_Token(kind, match.group(0), pos))
                pos = match.end()
                break
        else:
            raise PatternSyntaxError(f"unexpected character {text[pos]!r}", pos)
    tokens.append(_Token("EOF", "", length))
    return tokens


def _unquote(literal: str) -> str:
    return literal[1:-1].replace("\\'", "'").replace("\\\\", "\\")


def _quote(value: str) -> str:
    return "'" + value.replace("\\", "\\\\").replace("'", "\\'") + "'"


# --- parser ----------------------------------------------------------------

class _Parser:
    def __init__(self, text: str):
        self.text = text
        self.tokens = _tokenize(text)
        self.index = 0

    def peek(self) -> _Token:
        return self.tokens[self.index]

    def advance(self) -> _Token:
        token = self.tokens[self.index]
        self.index += 1
        return token

    def expect(self, kind: str, what: str) -> _Token:
        token = self.peek()
        if token.kind != kind:
            raise PatternSyntaxError(f"expected {what}, found {token.text or 'end of input'!r}", token.offset)
        return self.advance()

    def parse(self) -> Expr:
        self.expect("LBRACKET", "'['")
        expr = self.parse_or()
        self.expect("RBRACKET", "']'")
        trailing = self.peek()
        if trailing.kind != "EOF":
            if trailing.kind == "WORD" and trailing.text.upper() in _UNSUPPORTED_KEYWORDS:
                raise UnsupportedConstructError(trailing.text.upper(), trailing.offset)
            if trailing.kind == "LBRACKET":
                raise UnsupportedConstructError("multiple observation expressions", trailing.offset)
            raise PatternSyntaxError(f"unexpected trailing input {trailing.text!r}", trailing.offset)
        return expr

    def parse_or(self) -> Expr:
        children = [self.parse_and()]
        while self._take_keyword("OR"):
            children.append(self.parse_and())
        if len(children) == 1:
            return children[0]
        return Or(tuple(children))

    def parse_and(self) -> Expr:
        children = [self.parse_factor()]
        while self._take_keyword("AND"):
            children.append(self.parse_factor())
        if len(children) == 1:
            return children[0]
        return And(tuple(children))

    def parse_factor(self) -> Expr:
        token = self.peek()
        if token.kind == "LPAREN":
            self.advance()
            expr = self.parse_or()
            self.expect("RPAREN", "')'")
            return expr
        if token.kind == "PATH":
            return self.parse_comparison()
        if token.kind == "WORD" and token.text.upper() in _UNSUPPORTED_KEYWORDS:
            raise UnsupportedConstructError(token.text.upper(), token.offset)
        raise PatternSyntaxError(f"expected a comparison, found {token.text or 'end of input'!r}", token.offset)

    def parse_comparison(self) -> Expr:
        path_token = self.expect("PATH", "object path")
        kind = PATH_TO_KIND.get(path_token.text)
        if kind is None:
            raise UnsupportedConstructError(f"object path {path_token.text}", path_token.offset)
        op = self.peek()
        if op.kind == "EQ":
            self.advance()
            value_token = self.expect("STRING", "quoted value")
            value = _unquote(value_token.text)
            observable = Observable(kind, canonicalize_value(kind, value, value_token.offset), path_token.text)
            return Leaf(observable)
        if op.kind == "WORD" and op.text.upper() == "IN":
            self.advance()
            self.expect("LPAREN", "'('")
            values: list[Leaf] = []
            while True:
                value_token = self.expect("STRING", "quoted value")
                value = _unquote(value_token.text)
                observable = Observable(kind, canonicalize_value(kind, value, value_token.offset), path_token.text)
                values.append(Leaf(observable))
                if self.peek().kind == "COMMA":
                    self.advance()
                    continue
                break
            self.expect("RPAREN", "')'")
            if len(values) == 1:
                return values[0]
            return Or(tuple(values))
        if op.kind == "BADOP":
            raise UnsupportedConstructError(f"comparator {op.text}", op.offset)
        if op.kind == "WORD":
            raise UnsupportedConstructError(f"comparator {op.text.upper()}", op.offset)
        raise PatternSyntaxError(f"expected '=' or IN, found {op.text or 'end of input'!r}", op.offset)

    def _take_keyword(self, keyword: str) -> bool:
        token = self.peek()
        if token.kind == "WORD" and token.text.upper() == keyword:
            self.advance()
            return True
        return False


def parse_pattern(pattern_text: str) -> Expr:
    """Parse a pattern in the subset grammar into a canonical expression tree."""
    expr = _Parser(pattern_text).parse()
    return canonicalize_expr(expr)


# --- canonical form and rendering -------------------------------------------

def canonicalize_expr(expr: Expr) -> Expr:
    """Flatten nested same-operator nodes and collapse single-child nodes."""
    if isinstance(expr, Leaf):
        return expr
    node_type = type(expr)
    flattened: list[Expr] = []
    for child in expr.children:
        child = canonicalize_expr(child)
        if isinstance(child, node_type):
            flattened.extend(child.children)
        else:
            flattened.append(child)
    if len(flattened) == 1:
        return flattened[0]
    return node_type(tuple(flattened))


def render_pattern(expr: Expr) -> str:
    """Render an expression back to pattern text; inverse of parse_pattern."""
    return f"[{_render(expr)}]"


def _render(expr: Expr) -> str:
    if isinstance(expr, Leaf):
        return f"{expr.observable.object_path} = {_quote(expr.observable.value)}"
    if isinstance(expr, And):
        parts = []
        for child in expr.children:
            rendered = _render(child)
            if isinstance(child, Or):
                rendered = f"({rendered})"
            parts.append(rendered)
        return " AND ".join(parts)
    parts = [_render(child) for child in expr.children]
    return " OR ".join(parts)


def iter_leaves(expr: Expr) -> Iterator[Leaf]:
    """Yield leaves in left-to-right order."""
    if isinstance(expr, Leaf):
        yield expr
        return
    for child in expr.children:
        yield from iter_leaves(child)


def evaluate_expr(expr: Expr, leaf_truth) -> bool:
    """Evaluate the tree with `leaf_truth(leaf) -> bool` deciding each leaf."""
    if isinstance(expr, Leaf):
        return bool(leaf_truth(expr))
    if isinstance(expr, And):
        return all(evaluate_expr(child, leaf_truth) for child in expr.children)
    return any(evaluate_expr(child, leaf_truth) for child in expr.children)
