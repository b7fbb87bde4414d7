"""Scalar field expressions u: R^n -> R.

Holds the expression tree, a Pratt parser for the text grammar documented
in docs/grammar.md, a printer whose output parses back to an equivalent
tree, exact evaluation, and the builtin example families.
"""

import math
import re
from dataclasses import dataclass
from enum import Enum

from utils.errors import DimensionError, DomainError, ExprSyntaxError, NumericFailure


@dataclass(frozen=True)
class Const:
    value: float

    def __post_init__(self):
        if not math.isfinite(self.value):
            raise DomainError(f"constant {self.value!r} is not finite")


@dataclass(frozen=True)
class Var:
    """Coordinate x_index, 1-based."""

    index: int


@dataclass(frozen=True)
class Add:
    left: object
    right: object


@dataclass(frozen=True)
class Mul:
    left: object
    right: object


@dataclass(frozen=True)
class Pow:
    base: object
    exponent: int


@dataclass(frozen=True)
class Exp:
    arg: object


@dataclass(frozen=True)
class Dot:
    """Inner product <c, x> with a constant vector c of length n."""

    coeffs: tuple


def _walk(node):
    yield node
    if isinstance(node, (Add, Mul)):
        yield from _walk(node.left)
        yield from _walk(node.right)
    elif isinstance(node, Pow):
        yield from _walk(node.base)
    elif isinstance(node, Exp):
        yield from _walk(node.arg)


@dataclass(frozen=True)
class ScalarFieldExpr:
    """
    Immutable expression tree of a field on R^n.

    Args:
        dimension (int): n, the number of variables.
        root: Root node of the tree.
    """

    dimension: int
    root: object

    def __post_init__(self):
        if self.dimension < 1:
            raise DomainError("field dimension must be a positive integer")
        for node in _walk(self.root):
            if isinstance(node, Var) and not 1 <= node.index <= self.dimension:
                raise DomainError(
                    f"variable x{node.index} out of range for n={self.dimension}"
                )
            if isinstance(node, Dot) and len(node.coeffs) != self.dimension:
                raise DimensionError(
                    f"dot vector has {len(node.coeffs)} entries, field has n={self.dimension}"
                )
            if isinstance(node, Pow) and node.exponent < 0:
                raise DomainError("powers must be non-negative integers")

    def __str__(self):
        return to_text(self)


# --- Tokenizer -------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"(?P<number>\d+\.\d*(?:[eE][+-]?\d+)?|\.\d+(?:[eE][+-]?\d+)?|\d+(?:[eE][+-]?\d+)?)"
    r"|(?P<var>x\d+)"
    r"|(?P<name>[A-Za-z_]\w*)"
    r"|(?P<op>[-+*^()])"
)


@dataclass(frozen=True)
class _Token:
    kind: str
    text: str
    pos: int


def _tokenize(text):
    pos = 0
    while pos < len(text):
        if text[pos].isspace():
            pos += 1
            continue
        m = _TOKEN_RE.match(text, pos)
        if not m:
            raise ExprSyntaxError(f"unexpected character {text[pos]!r}", pos)
        yield _Token(m.lastgroup, m.group(), pos)
        pos = m.end()
    yield _Token("end", "", len(text))


# --- Pratt parser ----------------------------------------------------------

_SUM_BP = 10
_PRODUCT_BP = 20
_UNARY_BP = 25
_POWER_BP = 30

_LEFT_BP = {"+": _SUM_BP, "-": _SUM_BP, "*": _PRODUCT_BP, "^": _POWER_BP}


def _negate(node):
    return Mul(Const(-1.0), node)


class _Parser:
    """Top-down operator precedence parser over the token stream."""

    def __init__(self, text, n):
        self.tokens = list(_tokenize(text))
        self.index = 0
        self.n = n

    def peek(self):
        return self.tokens[self.index]

    def advance(self):
        token = self.tokens[self.index]
        if token.kind != "end":
            self.index += 1
        return token

    def expect(self, text):
        token = self.advance()
        if token.text != text:
            shown = token.text or "end of input"
            raise ExprSyntaxError(f"expected {text!r}, found {shown!r}", token.pos)
        return token

    def left_bp(self, token):
        if token.kind != "op":
            return 0
        return _LEFT_BP.get(token.text, 0)

    def expression(self, rbp=0):
        token = self.advance()
        left = self.nud(token)
        while rbp < self.left_bp(self.peek()):
            token = self.advance()
            left = self.led(token, left)
        return left

    def nud(self, token):
        if token.kind == "number":
            return Const(float(token.text))
        if token.kind == "var":
            index = int(token.text[1:])
            if not 1 <= index <= self.n:
                raise ExprSyntaxError(
                    f"variable {token.text} out of range for n={self.n}", token.pos
                )
            return Var(index)
        if token.kind == "name":
            if token.text != "exp":
                raise ExprSyntaxError(f"unknown function {token.text!r}", token.pos)
            self.expect("(")
            arg = self.expression()
            self.expect(")")
            return Exp(arg)
        if token.text == "-":
            return _negate(self.expression(_UNARY_BP))
        if token.text == "(":
            inner = self.expression()
            self.expect(")")
            return inner
        shown = token.text or "end of input"
        raise ExprSyntaxError(f"unexpected {shown!r}", token.pos)

    def led(self, token, left):
        if token.text == "+":
            return Add(left, self.expression(_SUM_BP))
        if token.text == "-":
            return Add(left, _negate(self.expression(_SUM_BP)))
        if token.text == "*":
            return Mul(left, self.expression(_PRODUCT_BP))
        # '^' only takes a non-negative integer literal
        exponent = self.advance()
        if exponent.kind != "number" or not exponent.text.isdigit():
            raise ExprSyntaxError(
                "exponent must be a non-negative integer literal", exponent.pos
            )
        return Pow(left, int(exponent.text))


def parse(text, n):
    """
    Parses an expression over the variables x1..xn.

    Args:
        text (str): Source text, e.g. "x1^2 + x2^2".
        n (int): Dimension of the domain.

    Returns:
        ScalarFieldExpr: The parsed tree.

    Raises:
        ExprSyntaxError: On malformed input or a variable index outside 1..n.
    """
    if not text or not text.strip():
        raise ExprSyntaxError("empty expression", 0)
    if n < 1:
        raise DomainError("field dimension must be a positive integer")
    parser = _Parser(text, n)
    root = parser.expression()
    trailing = parser.peek()
    if trailing.kind != "end":
        raise ExprSyntaxError(f"unexpected {trailing.text!r}", trailing.pos)
    return ScalarFieldExpr(n, root)


# --- Printer ---------------------------------------------------------------

def _const_text(value):
    if math.copysign(1.0, value) < 0:
        return f"(-{abs(value)!r})"
    return repr(value)


def _node_text(node):
    if isinstance(node, Const):
        return _const_text(node.value)
    if isinstance(node, Var):
        return f"x{node.index}"
    if isinstance(node, Add):
        return f"({_node_text(node.left)} + {_node_text(node.right)})"
    if isinstance(node, Mul):
        return f"({_node_text(node.left)} * {_node_text(node.right)})"
    if isinstance(node, Pow):
        return f"{_node_text(node.base)}^{node.exponent}"
    if isinstance(node, Exp):
        return f"exp({_node_text(node.arg)})"
    if isinstance(node, Dot):
        terms = [f"{_const_text(c)}*x{i}" for i, c in enumerate(node.coeffs, start=1)]
        return "(" + " + ".join(terms) + ")"
    raise TypeError(f"unknown node {node!r}")


def to_text(expr):
    """Prints expr in the grammar; parse(to_text(e), n) evaluates identically to e."""
    return _node_text(expr.root)


# --- Evaluation ------------------------------------------------------------

def _eval(node, p):
    if isinstance(node, Const):
        return node.value
    if isinstance(node, Var):
        return p[node.index - 1]
    if isinstance(node, Add):
        return _eval(node.left, p) + _eval(node.right, p)
    if isinstance(node, Mul):
        return _eval(node.left, p) * _eval(node.right, p)
    if isinstance(node, Pow):
        return _eval(node.base, p) ** node.exponent
    if isinstance(node, Exp):
        return math.exp(_eval(node.arg, p))
    if isinstance(node, Dot):
        total = node.coeffs[0] * p[0]
        for c, x in zip(node.coeffs[1:], p[1:]):
            total += c * x
        return total
    raise TypeError(f"unknown node {node!r}")


def evaluate(expr, p):
    """
    Evaluates the field at a point.

    Args:
        expr (ScalarFieldExpr): Field to evaluate.
        p (sequence[float]): Point in R^n.

    Returns:
        float: u(p).

    Raises:
        NumericFailure: The value overflows a float.
    """
    coords = [float(c) for c in p]
    if len(coords) != expr.dimension:
        raise DimensionError(
            f"point has {len(coords)} coordinates, field has n={expr.dimension}"
        )
    try:
        return float(_eval(expr.root, coords))
    except OverflowError:
        raise NumericFailure(f"{to_text(expr)} overflows at {tuple(coords)}") from None


# --- Builtin families ------------------------------------------------------

class Family(str, Enum):
    """Example fields shipped with the lab."""

    PRODUCT_DEGENERATE = "product-degenerate"
    PARABOLOID = "paraboloid"
    AFFINE = "affine"
    AFFINE_PLUS_GAUSSIAN = "affine-plus-gaussian"


@dataclass(frozen=True)
class FamilyParams:
    """
    Parameters of a builtin family.

    Args:
        n (int): Dimension.
        r (int | None): Split index for product-degenerate (1 <= r <= n-1).
        alpha (tuple | None): Coefficients alpha_{r+1}..alpha_n (defaults to ones).
        V (tuple | None): Linear part for the affine families (defaults to zero).
        b (float): Constant offset of the affine family.
    """

    n: int
    r: int = None
    alpha: tuple = None
    V: tuple = None
    b: float = 0.0


def _sum_of_squares(count):
    node = Pow(Var(1), 2)
    for i in range(2, count + 1):
        node = Add(node, Pow(Var(i), 2))
    return node


def _linear_part(params):
    if params.V is None:
        return (0.0,) * params.n
    V = tuple(float(v) for v in params.V)
    if len(V) != params.n:
        raise DimensionError(f"V has {len(V)} entries, family has n={params.n}")
    return V


def builtin(family, params):
    """
    Builds one of the builtin example fields.

    Families:
        product-degenerate: (x1^2+...+xr^2)(alpha_{r+1} x_{r+1}+...+alpha_n x_n)
        paraboloid: x1^2+...+xn^2
        affine: <V, x> + b
        affine-plus-gaussian: <V, x> + exp(-|x|^2)

    Args:
        family (Family | str): Family name.
        params (FamilyParams): Family parameters.

    Returns:
        ScalarFieldExpr: The field.

    Raises:
        DomainError: On invalid family parameters.
    """
    family = Family(family)
    n = params.n
    if n < 1:
        raise DomainError("field dimension must be a positive integer")

    if family is Family.PARABOLOID:
        return ScalarFieldExpr(n, _sum_of_squares(n))

    if family is Family.AFFINE:
        return ScalarFieldExpr(n, Add(Dot(_linear_part(params)), Const(float(params.b))))

    if family is Family.AFFINE_PLUS_GAUSSIAN:
        bump = Exp(_negate(_sum_of_squares(n)))
        return ScalarFieldExpr(n, Add(Dot(_linear_part(params)), bump))

    r = params.r
    if r is None or not 1 <= r <= n - 1:
        raise DomainError(f"product-degenerate needs 1 <= r <= n-1, got r={r}, n={n}")
    alpha = params.alpha if params.alpha is not None else (1.0,) * (n - r)
    alpha = tuple(float(a) for a in alpha)
    if len(alpha) != n - r:
        raise DomainError(f"alpha needs {n - r} entries, got {len(alpha)}")
    if all(a == 0.0 for a in alpha):
        raise DomainError("alpha coefficients must not all be zero")
    return ScalarFieldExpr(n, Mul(_sum_of_squares(r), Dot((0.0,) * r + alpha)))
