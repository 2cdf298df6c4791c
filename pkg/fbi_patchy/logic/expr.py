# ## path: fbi_patchy/logic/expr.py
"""Expression language for system definitions.

Grammar (whitespace-insensitive)::

    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := '-' unary | power
    power  := atom ('^' unary)?        exponent must be a nonnegative integer literal
    atom   := number | name | func '(' expr ')' | '(' expr ')'

Parsing is done with binding powers (Pratt style); evaluation works on floats,
numpy arrays and :class:`~fbi_patchy.logic.jets.Jet` values alike.
"""
from __future__ import annotations

import logging
import operator
import re
from dataclasses import dataclass
from functools import lru_cache
from typing import Any, Callable, Dict, Iterable, List, Mapping, Optional, Sequence, Set, Tuple, Union

from fbi_patchy import constants as const
from fbi_patchy.errors import ExpressionSyntaxError, UnboundName
from fbi_patchy.logic import jets

logger = logging.getLogger(__name__)


# -----------------------------------------------------------------------------
# AST
# -----------------------------------------------------------------------------
@dataclass(frozen=True)
class Number:
    value: float


@dataclass(frozen=True)
class Name:
    name: str


@dataclass(frozen=True)
class Unary:
    op: str
    operand: "Node"


@dataclass(frozen=True)
class Binary:
    op: str
    left: "Node"
    right: "Node"


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Node"


Node = Union[Number, Name, Unary, Binary, Call]


# -----------------------------------------------------------------------------
# Tokenizer
# -----------------------------------------------------------------------------
_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_][A-Za-z_0-9]*)|(?P<op>[-+*/^(),]))"
)
_TRAILING_WS = re.compile(r"\s*")


@dataclass(frozen=True)
class _Token:
    kind: str  # 'number', 'name', 'op' or 'end'
    text: str
    offset: int


def _tokenize(source: str) -> List[_Token]:
    tokens: List[_Token] = []
    pos = 0
    while True:
        ws = _TRAILING_WS.match(source, pos)
        if ws.end() == len(source):
            break
        match = _TOKEN_RE.match(source, pos)
        if match is None:
            raise ExpressionSyntaxError(f"unexpected character '{source[ws.end()]}'", ws.end(), source)
        kind = match.lastgroup
        tokens.append(_Token(kind, match.group(kind), match.start(kind)))
        pos = match.end()
    tokens.append(_Token("end", "", len(source)))
    return tokens


# -----------------------------------------------------------------------------
# Parser
# -----------------------------------------------------------------------------
_INFIX_BP = {"+": 10, "-": 10, "*": 20, "/": 20, "^": 40}
_PREFIX_BP = 30


class _Parser:
    def __init__(self, source: str):
        self.source = source
        self.tokens = _tokenize(source)
        self.pos = 0

    def _peek(self) -> _Token:
        return self.tokens[self.pos]

    def _advance(self) -> _Token:
        tok = self.tokens[self.pos]
        if tok.kind != "end":
            self.pos += 1
        return tok

    def _error(self, message: str, tok: _Token) -> ExpressionSyntaxError:
        return ExpressionSyntaxError(message, tok.offset, self.source)

    def _expect(self, text: str) -> None:
        tok = self._advance()
        if tok.text != text or tok.kind != "op":
            raise self._error(f"expected '{text}'", tok)

    def _lbp(self, tok: _Token) -> int:
        if tok.kind == "op":
            return _INFIX_BP.get(tok.text, 0)
        return 0

    def parse(self) -> Node:
        node = self.expression(0)
        tok = self._peek()
        if tok.kind != "end":
            raise self._error(f"expected end of input, found '{tok.text}'", tok)
        return node

    def expression(self, rbp: int) -> Node:
        left = self._nud(self._advance())
        while rbp < self._lbp(self._peek()):
            left = self._led(self._advance(), left)
        return left

    def _nud(self, tok: _Token) -> Node:
        if tok.kind == "number":
            return Number(float(tok.text))
        if tok.kind == "name":
            if self._peek().text == "(" and self._peek().kind == "op":
                if tok.text not in const.FUNCTIONS:
                    raise self._error(f"unknown function '{tok.text}'", tok)
                self._advance()
                arg = self.expression(0)
                self._expect(")")
                return Call(tok.text, arg)
            return Name(tok.text)
        if tok.kind == "op" and tok.text == "-":
            return Unary("-", self.expression(_PREFIX_BP))
        if tok.kind == "op" and tok.text == "+":
            return self.expression(_PREFIX_BP)
        if tok.kind == "op" and tok.text == "(":
            inner = self.expression(0)
            self._expect(")")
            return inner
        raise self._error("expected expression", tok)

    def _led(self, tok: _Token, left: Node) -> Node:
        if tok.text == "^":
            exponent_tok = self._peek()
            # right-associative
            right = self.expression(_INFIX_BP["^"] - 1)
            if not (isinstance(right, Number) and right.value >= 0 and right.value == int(right.value)):
                raise self._error("expected nonnegative integer exponent", exponent_tok)
            if isinstance(left, Number):
                return Number(left.value ** int(right.value))
            return Binary("^", left, right)
        return Binary(tok.text, left, self.expression(_INFIX_BP[tok.text]))


@lru_cache(maxsize=1024)
def parse(source: str) -> Node:
    """Parse ``source`` into an AST; raises :class:`ExpressionSyntaxError`."""
    return _Parser(source).parse()


def to_source(node: Node) -> str:
    """Fully parenthesized rendering that parses back to the same tree."""
    if isinstance(node, Number):
        return repr(float(node.value))
    if isinstance(node, Name):
        return node.name
    if isinstance(node, Unary):
        return f"(-{to_source(node.operand)})"
    if isinstance(node, Binary):
        return f"({to_source(node.left)} {node.op} {to_source(node.right)})"
    if isinstance(node, Call):
        return f"{node.func}({to_source(node.arg)})"
    raise TypeError(f"not an expression node: {node!r}")


def free_names(node: Node) -> Set[str]:
    """Names referenced by ``node`` that are not built-in constants."""
    if isinstance(node, Name):
        return set() if node.name in const.CONSTANTS else {node.name}
    if isinstance(node, Unary):
        return free_names(node.operand)
    if isinstance(node, Binary):
        return free_names(node.left) | free_names(node.right)
    if isinstance(node, Call):
        return free_names(node.arg)
    return set()


# -----------------------------------------------------------------------------
# Evaluation
# -----------------------------------------------------------------------------
Evaluator = Callable[[Mapping[str, Any]], Any]

_BINARY_OPS = {"+": operator.add, "-": operator.sub, "*": operator.mul, "/": operator.truediv}
_FUNCS = {"sin": jets.sin, "cos": jets.cos, "exp": jets.exp, "sqrt": jets.sqrt}


@lru_cache(maxsize=4096)
def compile_expression(node: Node) -> Evaluator:
    """Turn an AST into a closure over an environment of names."""
    if isinstance(node, Number):
        value = node.value
        return lambda env: value
    if isinstance(node, Name):
        name = node.name
        fallback = const.CONSTANTS.get(name)

        def lookup(env):
            if name in env:
                return env[name]
            if fallback is not None:
                return fallback
            raise UnboundName(name)

        return lookup
    if isinstance(node, Unary):
        operand = compile_expression(node.operand)
        return lambda env: -operand(env)
    if isinstance(node, Binary):
        left = compile_expression(node.left)
        if node.op == "^":
            power = int(node.right.value)
            return lambda env: left(env) ** power
        right = compile_expression(node.right)
        fn = _BINARY_OPS[node.op]
        return lambda env: fn(left(env), right(env))
    if isinstance(node, Call):
        arg = compile_expression(node.arg)
        fn = _FUNCS[node.func]
        return lambda env: fn(arg(env))
    raise TypeError(f"not an expression node: {node!r}")


def eval_jet(node: Node, bindings: Mapping[str, Any], params: Optional[Mapping[str, float]] = None):
    """Evaluate ``node`` with variables bound to jets (or plain values)."""
    jets.common_shape(list(bindings.values()))
    env: Dict[str, Any] = dict(params or {})
    env.update(bindings)
    return compile_expression(node)(env)


class ExpressionVector:
    """An ordered list of expressions sharing parameters and auxiliary ``let`` names."""

    def __init__(
        self,
        sources: Sequence[str],
        params: Optional[Mapping[str, float]] = None,
        lets: Optional[Sequence[Tuple[str, str]]] = None,
    ):
        self.sources = [str(s) for s in sources]
        self.params = dict(params or {})
        self.lets = [(name, str(src)) for name, src in (lets or [])]
        self._lets = [(name, compile_expression(parse(src))) for name, src in self.lets]
        self._exprs = [compile_expression(parse(src)) for src in self.sources]

    def __len__(self) -> int:
        return len(self._exprs)

    def free_names(self) -> Set[str]:
        names: Set[str] = set()
        defined: Set[str] = set()
        for name, src in self.lets:
            names |= free_names(parse(src)) - defined
            defined.add(name)
        for src in self.sources:
            names |= free_names(parse(src)) - defined
        return names

    def check_names(self, allowed: Iterable[str]) -> None:
        unknown = self.free_names() - set(allowed) - set(self.params)
        if unknown:
            raise UnboundName(sorted(unknown)[0])

    def evaluate(self, bindings: Mapping[str, Any]) -> List[Any]:
        env: Dict[str, Any] = dict(self.params)
        env.update(bindings)
        for name, fn in self._lets:
            env[name] = fn(env)
        return [fn(env) for fn in self._exprs]

    def __call__(self, **bindings) -> List[Any]:
        return self.evaluate(bindings)

    def __repr__(self) -> str:
        return f"ExpressionVector({self.sources!r})"
