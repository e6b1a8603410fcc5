"""Small arithmetic expression language for problem files.

Grammar (standard precedence, left-associative sums and products,
right-associative power, unary minus at factor level)::

    expr   := term (("+"|"-") term)*
    term   := factor (("*"|"/") factor)*
    factor := atom ("^" factor)? | "-" factor
    atom   := number | ident | ident "(" expr ")" | "(" expr ")"

Identifiers are limited to the variables ``t``, ``x1`` .. ``x9``, ``u``
and the functions ``sin``, ``cos``, ``exp``.  Syntax errors carry the
byte offset of the offending token together with the set of tokens that
would have been accepted there.

Evaluation has two paths: a naive recursive tree walk and a compiled
closure per node (cached); both must agree.  First derivatives are exact,
computed by forward-mode dual numbers rather than symbolic rewriting.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Mapping, Union

__all__ = [
    "VARIABLES",
    "FUNCTIONS",
    "ExprSyntaxError",
    "UnknownIdentifierError",
    "EvaluationError",
    "Num",
    "Var",
    "Neg",
    "BinOp",
    "Call",
    "Expression",
    "parse_expression",
    "evaluate",
    "compiled",
    "evaluate_with_derivative",
    "differentiate",
    "variables_used",
    "to_text",
]

VARIABLES = ("t", "u") + tuple(f"x{i}" for i in range(1, 10))
FUNCTIONS = ("sin", "cos", "exp")

_FUNC_TABLE = {"sin": math.sin, "cos": math.cos, "exp": math.exp}


class ExprSyntaxError(ValueError):
    """Malformed expression text."""

    def __init__(self, offset: int, expected: frozenset[str], found: str):
        self.offset = offset
        self.expected = expected
        self.found = found
        wanted = ", ".join(sorted(expected))
        super().__init__(f"at offset {offset}: expected one of {{{wanted}}}, found {found}")


class UnknownIdentifierError(ValueError):
    """Identifier outside the allowed variable/function set."""

    def __init__(self, offset: int, name: str):
        self.offset = offset
        self.name = name
        super().__init__(f"at offset {offset}: unknown identifier {name!r}")


class EvaluationError(ArithmeticError):
    """Expression cannot be evaluated at the given point."""

    def __init__(self, offset: int, message: str):
        self.offset = offset
        super().__init__(f"at offset {offset}: {message}")


@dataclass(frozen=True)
class Num:
    value: float
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Var:
    name: str
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Neg:
    operand: "Expression"
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expression"
    right: "Expression"
    offset: int = field(default=0, compare=False)


@dataclass(frozen=True)
class Call:
    func: str
    arg: "Expression"
    offset: int = field(default=0, compare=False)


Expression = Union[Num, Var, Neg, BinOp, Call]


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<number>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z][A-Za-z0-9]*)"
    r"|(?P<op>[-+*/^()]))"
)


@dataclass(frozen=True)
class _Token:
    kind: str  # number | ident | op | end
    text: str
    offset: int


def _tokenize(text: str) -> list[_Token]:
    tokens: list[_Token] = []
    pos = 0
    while pos < len(text):
        m = _TOKEN_RE.match(text, pos)
        if m is None or m.end() == m.start():
            stripped = text[pos:].lstrip()
            if not stripped:
                break
            bad_at = len(text) - len(stripped)
            raise ExprSyntaxError(bad_at, frozenset({"number", "identifier", "operator"}), repr(text[bad_at]))
        for kind in ("number", "ident", "op"):
            lexeme = m.group(kind)
            if lexeme is not None:
                tokens.append(_Token(kind, lexeme, m.start(kind)))
                break
        pos = m.end()
    tokens.append(_Token("end", "", len(text)))
    return tokens


class _Parser:
    def __init__(self, tokens: list[_Token]):
        self.tokens = tokens
        self.pos = 0

    def peek(self) -> _Token:
        return self.tokens[self.pos]

    def advance(self) -> _Token:
        tok = self.tokens[self.pos]
        self.pos += 1
        return tok

    def fail(self, expected: frozenset[str]) -> "ExprSyntaxError":
        tok = self.peek()
        found = repr(tok.text) if tok.kind != "end" else "end of input"
        return ExprSyntaxError(tok.offset, expected, found)

    def parse(self) -> Expression:
        node = self.expr()
        if self.peek().kind != "end":
            raise self.fail(frozenset({"+", "-", "*", "/", "^", "end of input"}))
        return node

    def expr(self) -> Expression:
        node = self.term()
        while self.peek().kind == "op" and self.peek().text in "+-":
            op = self.advance()
            node = BinOp(op.text, node, self.term(), offset=op.offset)
        return node

    def term(self) -> Expression:
        node = self.factor()
        while self.peek().kind == "op" and self.peek().text in "*/":
            op = self.advance()
            node = BinOp(op.text, node, self.factor(), offset=op.offset)
        return node

    def factor(self) -> Expression:
        tok = self.peek()
        if tok.kind == "op" and tok.text == "-":
            self.advance()
            return Neg(self.factor(), offset=tok.offset)
        node = self.atom()
        nxt = self.peek()
        if nxt.kind == "op" and nxt.text == "^":
            self.advance()
            node = BinOp("^", node, self.factor(), offset=nxt.offset)
        return node

    _ATOM_EXPECTED = frozenset({"number", "identifier", "("})

    def atom(self) -> Expression:
        tok = self.peek()
        if tok.kind == "number":
            self.advance()
            return Num(float(tok.text), offset=tok.offset)
        if tok.kind == "ident":
            self.advance()
            if tok.text in FUNCTIONS:
                opener = self.peek()
                if not (opener.kind == "op" and opener.text == "("):
                    raise self.fail(frozenset({"("}))
                self.advance()
                arg = self.expr()
                closer = self.peek()
                if not (closer.kind == "op" and closer.text == ")"):
                    raise self.fail(frozenset({")"}))
                self.advance()
                return Call(tok.text, arg, offset=tok.offset)
            if tok.text in VARIABLES:
                return Var(tok.text, offset=tok.offset)
            raise UnknownIdentifierError(tok.offset, tok.text)
        if tok.kind == "op" and tok.text == "(":
            self.advance()
            node = self.expr()
            closer = self.peek()
            if not (closer.kind == "op" and closer.text == ")"):
                raise self.fail(frozenset({")"}))
            self.advance()
            return node
        raise self.fail(self._ATOM_EXPECTED)


def parse_expression(text: str) -> Expression:
    """Parse the grammar above; errors carry offsets and expectations."""
    return _Parser(_tokenize(text)).parse()


def evaluate(expr: Expression, env: Mapping[str, float]) -> float:
    """Naive recursive tree walk."""
    if isinstance(expr, Num):
        return expr.value
    if isinstance(expr, Var):
        try:
            return float(env[expr.name])
        except KeyError:
            raise EvaluationError(expr.offset, f"variable {expr.name!r} is unbound") from None
    if isinstance(expr, Neg):
        return -evaluate(expr.operand, env)
    if isinstance(expr, Call):
        return _apply_func(expr, evaluate(expr.arg, env))
    left = evaluate(expr.left, env)
    right = evaluate(expr.right, env)
    return _apply_binop(expr, left, right)


def _apply_func(node: Call, arg: float) -> float:
    try:
        return _FUNC_TABLE[node.func](arg)
    except (OverflowError, ValueError) as exc:
        raise EvaluationError(node.offset, f"{node.func}({arg!r}) out of range") from exc


def _apply_binop(node: BinOp, left: float, right: float) -> float:
    if node.op == "+":
        return left + right
    if node.op == "-":
        return left - right
    if node.op == "*":
        return left * right
    if node.op == "/":
        if right == 0.0:
            raise EvaluationError(node.offset, "division by zero")
        return left / right
    try:
        value = left**right
    except (OverflowError, ZeroDivisionError, ValueError) as exc:
        raise EvaluationError(node.offset, f"invalid power {left!r} ^ {right!r}") from exc
    if isinstance(value, complex):
        raise EvaluationError(node.offset, f"invalid power {left!r} ^ {right!r}")
    return value


@lru_cache(maxsize=512)
def compiled(expr: Expression) -> Callable[[Mapping[str, float]], float]:
    """Closure-compiled evaluator; the second evaluation path."""
    if isinstance(expr, Num):
        value = expr.value
        return lambda env: value
    if isinstance(expr, Var):
        name = expr.name
        offset = expr.offset

        def read(env: Mapping[str, float]) -> float:
            try:
                return float(env[name])
            except KeyError:
                raise EvaluationError(offset, f"variable {name!r} is unbound") from None

        return read
    if isinstance(expr, Neg):
        inner = compiled(expr.operand)
        return lambda env: -inner(env)
    if isinstance(expr, Call):
        inner = compiled(expr.arg)
        node = expr
        return lambda env: _apply_func(node, inner(env))
    left = compiled(expr.left)
    right = compiled(expr.right)
    node = expr
    return lambda env: _apply_binop(node, left(env), right(env))


def _dual_eval(expr: Expression, env: Mapping[str, float], seed: str) -> tuple[float, float]:
    """Forward-mode value/derivative pair with respect to ``seed``."""
    if isinstance(expr, Num):
        return expr.value, 0.0
    if isinstance(expr, Var):
        try:
            value = float(env[expr.name])
        except KeyError:
            raise EvaluationError(expr.offset, f"variable {expr.name!r} is unbound") from None
        return value, (1.0 if expr.name == seed else 0.0)
    if isinstance(expr, Neg):
        v, d = _dual_eval(expr.operand, env, seed)
        return -v, -d
    if isinstance(expr, Call):
        v, d = _dual_eval(expr.arg, env, seed)
        if expr.func == "sin":
            return math.sin(v), math.cos(v) * d
        if expr.func == "cos":
            return math.cos(v), -math.sin(v) * d
        ev = _apply_func(expr, v)
        return ev, ev * d
    lv, ld = _dual_eval(expr.left, env, seed)
    rv, rd = _dual_eval(expr.right, env, seed)
    if expr.op == "+":
        return lv + rv, ld + rd
    if expr.op == "-":
        return lv - rv, ld - rd
    if expr.op == "*":
        return lv * rv, ld * rv + lv * rd
    if expr.op == "/":
        if rv == 0.0:
            raise EvaluationError(expr.offset, "division by zero")
        return lv / rv, (ld * rv - lv * rd) / (rv * rv)
    value = _apply_binop(expr, lv, rv)
    if rd == 0.0:
        # f^c with constant exponent: c f^(c-1) f'
        if ld == 0.0:
            return value, 0.0
        if lv == 0.0:
            if rv == 1.0:
                return value, ld
            if rv > 1.0:
                return value, 0.0
            raise EvaluationError(expr.offset, f"power {lv!r} ^ {rv!r} is not differentiable")
        return value, rv * lv ** (rv - 1.0) * ld
    if lv <= 0.0:
        raise EvaluationError(expr.offset, "power with varying exponent needs a positive base")
    return value, value * (rd * math.log(lv) + rv * ld / lv)


def evaluate_with_derivative(
    expr: Expression, env: Mapping[str, float], var: str
) -> tuple[float, float]:
    """Value of the expression and its exact partial derivative in ``var``."""
    return _dual_eval(expr, env, var)


def _num(value: float) -> Num:
    return Num(float(value))


def _simplify_binop(op: str, left: Expression, right: Expression, offset: int) -> Expression:
    lnum = left.value if isinstance(left, Num) else None
    rnum = right.value if isinstance(right, Num) else None
    if lnum is not None and rnum is not None:
        return _num(_apply_binop(BinOp(op, left, right, offset=offset), lnum, rnum))
    if op == "+":
        if lnum == 0.0:
            return right
        if rnum == 0.0:
            return left
    elif op == "-":
        if rnum == 0.0:
            return left
        if lnum == 0.0:
            return Neg(right, offset=offset)
    elif op == "*":
        if lnum == 0.0 or rnum == 0.0:
            return _num(0.0)
        if lnum == 1.0:
            return right
        if rnum == 1.0:
            return left
    elif op == "/":
        if lnum == 0.0:
            return _num(0.0)
        if rnum == 1.0:
            return left
    elif op == "^":
        if rnum == 1.0:
            return left
        if rnum == 0.0:
            return _num(1.0)
    return BinOp(op, left, right, offset=offset)


def differentiate(expr: Expression, var: str) -> Expression:
    """Symbolic partial derivative with constant folding.

    Powers must have constant exponents (the grammar has no logarithm to
    express the general case); a variable exponent raises ValueError.
    """
    if isinstance(expr, Num):
        return _num(0.0)
    if isinstance(expr, Var):
        return _num(1.0 if expr.name == var else 0.0)
    if isinstance(expr, Neg):
        inner = differentiate(expr.operand, var)
        if isinstance(inner, Num):
            return _num(-inner.value)
        return Neg(inner, offset=expr.offset)
    if isinstance(expr, Call):
        darg = differentiate(expr.arg, var)
        if isinstance(darg, Num) and darg.value == 0.0:
            return _num(0.0)
        if expr.func == "sin":
            outer: Expression = Call("cos", expr.arg, offset=expr.offset)
        elif expr.func == "cos":
            outer = Neg(Call("sin", expr.arg, offset=expr.offset), offset=expr.offset)
        else:
            outer = expr
        return _simplify_binop("*", outer, darg, expr.offset)
    dleft = differentiate(expr.left, var)
    dright = differentiate(expr.right, var)
    if expr.op in ("+", "-"):
        return _simplify_binop(expr.op, dleft, dright, expr.offset)
    if expr.op == "*":
        return _simplify_binop(
            "+",
            _simplify_binop("*", dleft, expr.right, expr.offset),
            _simplify_binop("*", expr.left, dright, expr.offset),
            expr.offset,
        )
    if expr.op == "/":
        numerator = _simplify_binop(
            "-",
            _simplify_binop("*", dleft, expr.right, expr.offset),
            _simplify_binop("*", expr.left, dright, expr.offset),
            expr.offset,
        )
        denominator = _simplify_binop("^", expr.right, _num(2.0), expr.offset)
        return _simplify_binop("/", numerator, denominator, expr.offset)
    # power: constant exponents only
    if not (isinstance(dright, Num) and dright.value == 0.0):
        raise ValueError("cannot differentiate a power with a variable exponent")
    exponent = expr.right
    if not isinstance(exponent, Num):
        # exponent is constant in `var`; keep it verbatim in the result
        pass
    down = (
        _num(exponent.value - 1.0)
        if isinstance(exponent, Num)
        else BinOp("-", exponent, _num(1.0), offset=expr.offset)
    )
    return _simplify_binop(
        "*",
        _simplify_binop(
            "*", exponent, _simplify_binop("^", expr.left, down, expr.offset), expr.offset
        ),
        dleft,
        expr.offset,
    )


def variables_used(expr: Expression) -> frozenset[str]:
    if isinstance(expr, Num):
        return frozenset()
    if isinstance(expr, Var):
        return frozenset({expr.name})
    if isinstance(expr, Neg):
        return variables_used(expr.operand)
    if isinstance(expr, Call):
        return variables_used(expr.arg)
    return variables_used(expr.left) | variables_used(expr.right)


_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 3}


def _node_precedence(expr: Expression) -> int:
    if isinstance(expr, BinOp):
        return _PRECEDENCE[expr.op]
    if isinstance(expr, Neg):
        return 0
    return 9


def to_text(expr: Expression) -> str:
    """Unparse with minimal parentheses; reparsing yields an equal tree."""
    if isinstance(expr, Num):
        return repr(expr.value)
    if isinstance(expr, Var):
        return expr.name
    if isinstance(expr, Neg):
        inner = to_text(expr.operand)
        if _node_precedence(expr.operand) < 3 and not isinstance(expr.operand, Neg):
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(expr, Call):
        return f"{expr.func}({to_text(expr.arg)})"
    prec = _PRECEDENCE[expr.op]
    left = to_text(expr.left)
    right = to_text(expr.right)
    left_prec = _node_precedence(expr.left)
    right_prec = _node_precedence(expr.right)
    if expr.op == "^":
        # right-associative: parenthesize the left operand unless atomic
        if left_prec <= prec:
            left = f"({left})"
        if right_prec < prec:
            right = f"({right})"
    else:
        if left_prec < prec:
            left = f"({left})"
        if right_prec < prec or (right_prec == prec and expr.op in ("-", "/")):
            right = f"({right})"
        elif right_prec == prec and expr.op in ("+", "*") and isinstance(expr.right, BinOp):
            # keep left association canonical on reparse
            right = f"({right})"
    return f"{left} {expr.op} {right}"
