"""
Signal expressions - a small arithmetic language for analytic signals.

Grammar:
    expr   := term (('+' | '-') term)*
    term   := unary (('*' | '/') unary)*
    unary  := ('+' | '-') unary | power
    power  := atom ('^' unary)?
    atom   := NUMBER | VARIABLE | FUNCTION '(' expr ')' | '(' expr ')'

Variables are u, v (surface parameters) and x, y, z (surface point); the
constant pi is predefined. Functions: sin, cos, exp, abs.
Expressions are evaluated elementwise on numpy arrays.
"""

from typing import Dict, List, Optional

import numpy as np

from .errors import ExpressionError

VARIABLES = ("u", "v", "x", "y", "z")
CONSTANTS = {"pi": np.pi}
FUNCTIONS = {"sin": np.sin, "cos": np.cos, "exp": np.exp, "abs": np.abs}
OPERATORS = "+-*/^()"


class Token:
    """A lexical token with its 0-based position in the source text."""

    def __init__(self, kind: str, text: str, position: int) -> None:
        self.kind = kind  # number, name, op, end
        self.text = text
        self.position = position

    def __repr__(self) -> str:
        return f"Token({self.kind}, {self.text!r}, {self.position})"


def tokenize(text: str) -> List[Token]:
    """
    Split an expression into number, name and operator tokens.
    Always ends with an 'end' token.
    """
    tokens = []
    i = 0
    while i < len(text):
        ch = text[i]
        if ch.isspace():
            i += 1
        elif ch.isdigit() or ch == ".":
            start = i
            while i < len(text) and (text[i].isdigit() or text[i] == "."):
                i += 1
            # exponent part: 1e-3, 2.5E+4
            if i < len(text) and text[i] in "eE":
                j = i + 1
                if j < len(text) and text[j] in "+-":
                    j += 1
                if j < len(text) and text[j].isdigit():
                    i = j
                    while i < len(text) and text[i].isdigit():
                        i += 1
            literal = text[start:i]
            try:
                float(literal)
            except ValueError:
                raise ExpressionError(f"malformed number '{literal}'", start, text) from None
            tokens.append(Token("number", literal, start))
        elif ch.isalpha() or ch == "_":
            start = i
            while i < len(text) and (text[i].isalnum() or text[i] == "_"):
                i += 1
            tokens.append(Token("name", text[start:i].lower(), start))
        elif ch in OPERATORS:
            tokens.append(Token("op", ch, i))
            i += 1
        else:
            raise ExpressionError(f"unexpected character '{ch}'", i, text)
    tokens.append(Token("end", "", len(text)))
    return tokens


class ExprNode:
    """Node of the parsed expression tree."""

    def __init__(self, kind: str, value: str = "", children: Optional[List["ExprNode"]] = None) -> None:
        self.kind = kind  # number, variable, constant, call, unary, binary
        self.value = value
        self.children: List["ExprNode"] = children or []

    def evaluate(self, env: Dict[str, np.ndarray]) -> np.ndarray:
        if self.kind == "number":
            return np.float64(self.value)
        if self.kind == "variable":
            return env[self.value]
        if self.kind == "constant":
            return np.float64(CONSTANTS[self.value])
        if self.kind == "call":
            return FUNCTIONS[self.value](self.children[0].evaluate(env))
        if self.kind == "unary":
            operand = self.children[0].evaluate(env)
            return -operand if self.value == "-" else operand
        left = self.children[0].evaluate(env)
        right = self.children[1].evaluate(env)
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            if self.value == "+":
                return left + right
            if self.value == "-":
                return left - right
            if self.value == "*":
                return left * right
            if self.value == "/":
                return left / right
            return np.power(left, right)

    def __repr__(self) -> str:
        if not self.children:
            return f"{self.value}"
        return f"{self.kind}:{self.value}({', '.join(map(repr, self.children))})"


class _Parser:
    def __init__(self, text: str) -> None:
        self.text = text
        self.tokens = tokenize(text)
        self.pos = 0

    @property
    def current(self) -> Token:
        return self.tokens[self.pos]

    def _advance(self) -> Token:
        token = self.tokens[self.pos]
        self.pos += 1
        return token

    def _expect(self, text: str) -> None:
        if self.current.text != text or self.current.kind != "op":
            raise ExpressionError(f"expected '{text}'", self.current.position, self.text)
        self._advance()

    def parse(self) -> ExprNode:
        if self.current.kind == "end":
            raise ExpressionError("empty expression", 0, self.text)
        node = self._expr()
        if self.current.kind != "end":
            raise ExpressionError(f"unexpected '{self.current.text}'", self.current.position, self.text)
        return node

    def _expr(self) -> ExprNode:
        node = self._term()
        while self.current.kind == "op" and self.current.text in "+-":
            op = self._advance().text
            node = ExprNode("binary", op, [node, self._term()])
        return node

    def _term(self) -> ExprNode:
        node = self._unary()
        while self.current.kind == "op" and self.current.text in "*/":
            op = self._advance().text
            node = ExprNode("binary", op, [node, self._unary()])
        return node

    def _unary(self) -> ExprNode:
        if self.current.kind == "op" and self.current.text in "+-":
            op = self._advance().text
            return ExprNode("unary", op, [self._unary()])
        return self._power()

    def _power(self) -> ExprNode:
        base = self._atom()
        if self.current.kind == "op" and self.current.text == "^":
            self._advance()
            return ExprNode("binary", "^", [base, self._unary()])
        return base

    def _atom(self) -> ExprNode:
        token = self.current
        if token.kind == "number":
            self._advance()
            return ExprNode("number", token.text)
        if token.kind == "name":
            self._advance()
            if token.text in FUNCTIONS:
                self._expect("(")
                argument = self._expr()
                self._expect(")")
                return ExprNode("call", token.text, [argument])
            if token.text in VARIABLES:
                return ExprNode("variable", token.text)
            if token.text in CONSTANTS:
                return ExprNode("constant", token.text)
            raise ExpressionError(f"unknown name '{token.text}'", token.position, self.text)
        if token.kind == "op" and token.text == "(":
            self._advance()
            node = self._expr()
            self._expect(")")
            return node
        if token.kind == "end":
            raise ExpressionError("unexpected end of expression", token.position, self.text)
        raise ExpressionError(f"unexpected '{token.text}'", token.position, self.text)


class SignalExpression:
    """
    A parsed signal expression, callable as f(u, v, points).

    Example:
        f = SignalExpression("sin(3*u)*cos(2*v)")
        f(np.array([0.1]), np.array([0.2]), np.zeros((1, 3)))
    """

    def __init__(self, text: str) -> None:
        self.text = text
        self.tree = _Parser(text).parse()

    def __call__(self, u, v, points) -> np.ndarray:
        u = np.asarray(u, dtype=float)
        v = np.asarray(v, dtype=float)
        points = np.asarray(points, dtype=float)
        env = {"u": u, "v": v, "x": points[..., 0], "y": points[..., 1], "z": points[..., 2]}
        result = self.tree.evaluate(env)
        return np.broadcast_to(result, np.broadcast(u, v).shape).astype(float)

    @property
    def variables(self) -> List[str]:
        """Sorted names of the variables the expression uses."""
        found = set()
        stack = [self.tree]
        while stack:
            node = stack.pop()
            if node.kind == "variable":
                found.add(node.value)
            stack.extend(node.children)
        return sorted(found)

    def __repr__(self) -> str:
        return f"SignalExpression({self.text!r})"


def parse_expression(text: str) -> SignalExpression:
    """Parse `text`; raises ExpressionError with the offending position."""
    return SignalExpression(text)
