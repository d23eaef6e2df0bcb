"""A small expression language for prescribing psi(u, rho).

Variables are ``rho`` and the ambient direction cosines ``x, y, z`` of
``u`` on S^2.  Grammar (lowest to highest precedence)::

    expr  := term (('+' | '-') term)*
    term  := unary (('*' | '/') unary)*
    unary := '-' unary | power
    power := atom ('^' unary)?          # right associative
    atom  := NUMBER | NAME | NAME '(' expr ')' | '(' expr ')'

Expressions evaluate elementwise on numpy arrays.
"""

import math
import re
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

__all__ = [
    "ExprError",
    "ParseError",
    "EvalError",
    "Num",
    "Var",
    "Neg",
    "Call",
    "BinOp",
    "parse",
    "to_source",
    "evaluate",
    "diff_rho",
    "eval_drho",
    "ProblemSpec",
    "HypothesisReport",
    "check_hypotheses",
    "homotopy_psibar",
]

VARIABLES = ("rho", "x", "y", "z")
FUNCTIONS = ("sinh", "cosh", "tanh", "coth", "exp", "log", "sin", "cos", "sqrt", "abs")


class ExprError(ValueError):
    pass


class ParseError(ExprError):
    """Lexical or syntax error; ``position`` is a 0-based offset into the source."""

    def __init__(self, message, position, expected=()):
        where = f" at position {position}"
        exp = f" (expected {', '.join(expected)})" if expected else ""
        super().__init__(message + where + exp)
        self.position = position
        self.expected = tuple(expected)


class EvalError(ExprError):
    """Non-finite intermediate value; ``path`` locates the offending node."""

    def __init__(self, message, path):
        super().__init__(f"{message} at {path}")
        self.path = path


# ---------------------------------------------------------------- AST


@dataclass(frozen=True)
class Num:
    value: float


@dataclass(frozen=True)
class Var:
    name: str


@dataclass(frozen=True)
class Neg:
    arg: object


@dataclass(frozen=True)
class Call:
    fn: str
    arg: object


@dataclass(frozen=True)
class BinOp:
    op: str
    left: object
    right: object


# ---------------------------------------------------------------- lexer / parser

_TOKEN = re.compile(r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)|(?P<name>[A-Za-z_]\w*)|(?P<op>[-+*/^()]))")


class _Tok(NamedTuple):
    kind: str
    text: str
    pos: int


def _lex(src):
    toks, pos = [], 0
    while True:
        while pos < len(src) and src[pos].isspace():
            pos += 1
        if pos >= len(src):
            break
        m = _TOKEN.match(src, pos)
        if m is None or m.end() == pos:
            raise ParseError(f"unexpected character {src[pos]!r}", pos)
        kind = m.lastgroup
        toks.append(_Tok(kind, m.group(kind), m.start(kind)))
        pos = m.end()
    toks.append(_Tok("end", "", len(src)))
    return toks


class _Parser:
    def __init__(self, src):
        self.toks = _lex(src)
        self.i = 0

    @property
    def cur(self):
        return self.toks[self.i]

    def take(self):
        tok = self.toks[self.i]
        self.i += 1
        return tok

    def expect(self, text):
        if self.cur.text != text:
            raise ParseError(f"unexpected {self._describe()}", self.cur.pos, (repr(text),))
        return self.take()

    def _describe(self):
        return "end of input" if self.cur.kind == "end" else repr(self.cur.text)

    def expr(self):
        node = self.term()
        while self.cur.text in ("+", "-"):
            op = self.take().text
            node = BinOp(op, node, self.term())
        return node

    def term(self):
        node = self.unary()
        while self.cur.text in ("*", "/"):
            op = self.take().text
            node = BinOp(op, node, self.unary())
        return node

    def unary(self):
        if self.cur.text == "-":
            self.take()
            return Neg(self.unary())
        return self.power()

    def power(self):
        base = self.atom()
        if self.cur.text == "^":
            self.take()
            return BinOp("^", base, self.unary())
        return base

    def atom(self):
        tok = self.cur
        if tok.kind == "num":
            self.take()
            return Num(float(tok.text))
        if tok.kind == "name":
            self.take()
            if tok.text in FUNCTIONS:
                self.expect("(")
                arg = self.expr()
                self.expect(")")
                return Call(tok.text, arg)
            if tok.text in VARIABLES:
                return Var(tok.text)
            raise ParseError(f"unknown identifier {tok.text!r}", tok.pos)
        if tok.text == "(":
            self.take()
            node = self.expr()
            self.expect(")")
            return node
        raise ParseError(f"unexpected {self._describe()}", tok.pos,
                         ("number", "variable", "function", "'('", "'-'"))


def parse(source):
    """Parse ``source`` into an expression tree; raises :class:`ParseError`."""
    p = _Parser(source)
    node = p.expr()
    if p.cur.kind != "end":
        raise ParseError(f"unexpected {p._describe()}", p.cur.pos, ("operator", "end of input"))
    return node


# ---------------------------------------------------------------- printer

_PREC = {"+": 1, "-": 1, "*": 2, "/": 2, "^": 4}


def _prec(node):
    if isinstance(node, BinOp):
        return _PREC[node.op]
    if isinstance(node, Neg):
        return 3
    return 5


def _fmt_num(v):
    return repr(float(v))


def to_source(node):
    """Print an expression tree so that ``parse(to_source(t)) == t``."""
    if isinstance(node, Num):
        return _fmt_num(node.value)
    if isinstance(node, Var):
        return node.name
    if isinstance(node, Call):
        return f"{node.fn}({to_source(node.arg)})"
    if isinstance(node, Neg):
        inner = to_source(node.arg)
        return f"-{inner}" if _prec(node.arg) >= 3 else f"-({inner})"
    if isinstance(node, BinOp):
        p = _PREC[node.op]
        left, right = to_source(node.left), to_source(node.right)
        if node.op == "^":
            if _prec(node.left) <= 4:
                left = f"({left})"
            if _prec(node.right) < 3:
                right = f"({right})"
            return f"{left}^{right}"
        if _prec(node.left) < p:
            left = f"({left})"
        if _prec(node.right) <= p:
            right = f"({right})"
        return f"{left} {node.op} {right}"
    raise TypeError(f"not an expression node: {node!r}")


# ---------------------------------------------------------------- evaluation

_UNARY = {
    "sinh": np.sinh, "cosh": np.cosh, "tanh": np.tanh,
    "coth": lambda a: np.cosh(a) / np.sinh(a),
    "exp": np.exp, "log": np.log, "sin": np.sin, "cos": np.cos,
    "sqrt": np.sqrt, "abs": np.abs,
}


def _check(value, path, what):
    if not np.all(np.isfinite(value)):
        raise EvalError(f"non-finite value in {what}", path)
    return value


def _eval(node, env, path):
    if isinstance(node, Num):
        return node.value
    if isinstance(node, Var):
        return env[node.name]
    if isinstance(node, Neg):
        return -_eval(node.arg, env, path + "/arg")
    if isinstance(node, Call):
        arg = _eval(node.arg, env, path + "/arg")
        if node.fn == "log" and np.any(np.asarray(arg) <= 0):
            raise EvalError("log of non-positive argument", path)
        if node.fn == "sqrt" and np.any(np.asarray(arg) < 0):
            raise EvalError("sqrt of negative argument", path)
        if node.fn == "coth" and np.any(np.asarray(arg) == 0):
            raise EvalError("coth at zero", path)
        with np.errstate(all="ignore"):
            return _check(_UNARY[node.fn](arg), path, node.fn)
    if isinstance(node, BinOp):
        a = _eval(node.left, env, path + "/left")
        b = _eval(node.right, env, path + "/right")
        if node.op == "/" and np.any(np.asarray(b) == 0):
            raise EvalError("division by zero", path)
        with np.errstate(all="ignore"):
            if node.op == "+":
                out = a + b
            elif node.op == "-":
                out = a - b
            elif node.op == "*":
                out = a * b
            elif node.op == "/":
                out = a / b
            else:
                out = np.power(np.asarray(a, dtype=float), b)
        return _check(out, path, repr(node.op))
    raise TypeError(f"not an expression node: {node!r}")


def evaluate(node, u, rho):
    """Evaluate at direction cosines ``u = (x, y, z)`` and radius ``rho``.

    Arguments broadcast against each other.  Raises :class:`EvalError` on any
    non-finite intermediate result.
    """
    if isinstance(node, str):
        node = parse(node)
    x, y, z = (np.asarray(c, dtype=float) for c in u)
    rho = np.asarray(rho, dtype=float)
    if np.any(~(rho > 0)):
        raise ExprError("rho must be positive")
    if np.any(np.abs(x * x + y * y + z * z - 1.0) > 1e-12):
        raise ExprError("u must lie on the unit sphere")
    env = {"rho": rho, "x": x, "y": y, "z": z}
    out = _eval(node, env, "root")
    return np.broadcast_to(np.asarray(out, dtype=float),
                           np.broadcast_shapes(x.shape, y.shape, z.shape, rho.shape)).copy()


# ---------------------------------------------------------------- d/drho

_ZERO, _ONE = Num(0.0), Num(1.0)


def _depends(node):
    if isinstance(node, Var):
        return node.name == "rho"
    if isinstance(node, Num):
        return False
    if isinstance(node, (Neg, Call)):
        return _depends(node.arg)
    return _depends(node.left) or _depends(node.right)


def _add(a, b):
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    if a == _ZERO:
        return b
    if b == _ZERO:
        return a
    return BinOp("+", a, b)


def _sub(a, b):
    if isinstance(a, Num) and isinstance(b, Num) and a.value >= b.value:
        return Num(a.value - b.value)
    if b == _ZERO:
        return a
    if a == _ZERO:
        return _neg(b)
    return BinOp("-", a, b)


def _mul(a, b):
    if a == _ZERO or b == _ZERO:
        return _ZERO
    if a == _ONE:
        return b
    if b == _ONE:
        return a
    return BinOp("*", a, b)


def _div(a, b):
    if a == _ZERO:
        return _ZERO
    if b == _ONE:
        return a
    return BinOp("/", a, b)


def _neg(a):
    if a == _ZERO:
        return _ZERO
    if isinstance(a, Neg):
        return a.arg
    return Neg(a)


def _pow(a, b):
    return BinOp("^", a, b)


def _d_call(fn, u):
    if fn == "sinh":
        return Call("cosh", u)
    if fn == "cosh":
        return Call("sinh", u)
    if fn == "tanh":
        return _div(_ONE, _pow(Call("cosh", u), Num(2.0)))
    if fn == "coth":
        return _neg(_div(_ONE, _pow(Call("sinh", u), Num(2.0))))
    if fn == "exp":
        return Call("exp", u)
    if fn == "log":
        return _div(_ONE, u)
    if fn == "sin":
        return Call("cos", u)
    if fn == "cos":
        return _neg(Call("sin", u))
    if fn == "sqrt":
        return _div(_ONE, _mul(Num(2.0), Call("sqrt", u)))
    if fn == "abs":
        return _div(u, Call("abs", u))
    raise ExprError(f"no derivative rule for {fn}")


def diff_rho(node):
    """Symbolic partial derivative with respect to ``rho``."""
    if not _depends(node):
        return _ZERO
    if isinstance(node, Var):
        return _ONE
    if isinstance(node, Neg):
        return _neg(diff_rho(node.arg))
    if isinstance(node, Call):
        return _mul(_d_call(node.fn, node.arg), diff_rho(node.arg))
    a, b = node.left, node.right
    da, db = diff_rho(a), diff_rho(b)
    if node.op == "+":
        return _add(da, db)
    if node.op == "-":
        return _sub(da, db)
    if node.op == "*":
        return _add(_mul(da, b), _mul(a, db))
    if node.op == "/":
        return _div(_sub(_mul(da, b), _mul(a, db)), _pow(b, Num(2.0)))
    # power
    if not _depends(b):
        return _mul(_mul(b, _pow(a, _sub(b, _ONE))), da)
    return _mul(node, _add(_mul(db, Call("log", a)), _div(_mul(b, da), a)))


def eval_drho(node, u, rho):
    """Evaluate d(expr)/d(rho) through the symbolic derivative."""
    if isinstance(node, str):
        node = parse(node)
    return evaluate(diff_rho(node), u, rho)


# ---------------------------------------------------------------- problem spec


@dataclass(frozen=True)
class ProblemSpec:
    """Problem data: cone order, annulus, homotopy radius and exponent, psi."""

    k: int
    R1: float
    R2: float
    Rbar: float
    psi: object
    epsilon: float = 1.0
    source: str = field(default="", compare=False)

    def __post_init__(self):
        if self.k not in (1, 2):
            raise ValueError(f"k must be 1 or 2 for surfaces, got {self.k}")
        if not 0 < self.R1 < self.Rbar < self.R2:
            raise ValueError(f"need 0 < R1 < Rbar < R2, got {self.R1}, {self.Rbar}, {self.R2}")
        if not self.epsilon > 0:
            raise ValueError(f"epsilon must be positive, got {self.epsilon}")
        if isinstance(self.psi, str):
            object.__setattr__(self, "source", self.psi)
            object.__setattr__(self, "psi", parse(self.psi))
        elif not self.source:
            object.__setattr__(self, "source", to_source(self.psi))

    @property
    def A(self):
        return math.tanh(self.Rbar)

    def psi_at(self, u, rho):
        return evaluate(self.psi, u, rho)


def homotopy_psibar(spec, t, u, rho):
    """t * psi^(1/k) + (1 - t) * A^eps * coth^(1+eps)(rho), A = tanh(Rbar).

    The start term is evaluated as ``coth(rho) * (A coth(rho))^eps`` so that
    it equals ``coth(Rbar)`` to rounding at ``rho = Rbar``.
    """
    if not 0.0 <= t <= 1.0:
        raise ValueError(f"t must lie in [0, 1], got {t}")
    rho = np.asarray(rho, dtype=float)
    coth = 1.0 / np.tanh(rho)
    start = coth * (spec.A * coth) ** spec.epsilon
    if t == 0.0:
        return start
    psi = spec.psi_at(u, rho)
    if np.any(psi <= 0):
        raise EvalError("psi must be positive", "root")
    target = psi ** (1.0 / spec.k)
    if t == 1.0:
        return target
    return t * target + (1.0 - t) * start


# ---------------------------------------------------------------- hypotheses


@dataclass
class HypothesisReport:
    """Sampled check of the barrier and monotonicity conditions.

    This is a sampled certificate, not a proof: conditions are tested only
    on grid nodes times ``n_rho`` radii.
    """

    inner_margin: float
    inner_worst: dict
    outer_margin: float
    outer_worst: dict
    monotonicity_margin: float
    monotonicity_worst: dict
    min_psi: float
    violations: list
    warnings: list
    passed: bool
    kind: str = "sampled certificate"

    def to_dict(self):
        return {
            "kind": self.kind,
            "passed": self.passed,
            "barrier_inner": {"margin": self.inner_margin, "worst": self.inner_worst},
            "barrier_outer": {"margin": self.outer_margin, "worst": self.outer_worst},
            "monotonicity": {"max_derivative": self.monotonicity_margin,
                             "worst": self.monotonicity_worst},
            "min_psi": self.min_psi,
            "violations": self.violations,
            "warnings": self.warnings,
        }


def _where(grid, idx, rho):
    j, m = (int(i) for i in idx)
    return {"theta": float(grid.theta[j]), "phi": float(grid.phi[m]),
            "node": [j, m], "rho": float(rho)}


def check_hypotheses(spec, grid, n_rho=32, tol=1e-12, strict_positivity=False, max_listed=20):
    """Sample psi(u, R1) >= coth^k R1, psi(u, R2) <= coth^k R2, d/drho(psi sinh^k) <= 0.

    Barriers are tested on every grid node.  Monotonicity is tested on every
    node at ``n_rho`` equispaced radii in [R1, R2] using the exact symbolic
    rho-derivative.  Positivity of psi is also required at those samples;
    psi is additionally probed at radial midpoints, and a non-positive value
    there is a warning unless ``strict_positivity``.
    """
    if n_rho < 16:
        raise ValueError("n_rho must be >= 16")
    k = spec.k
    u = tuple(c[..., None] for c in grid.dircos)
    violations, warnings = [], []

    def edge(rho, sign):
        vals = evaluate(spec.psi, u, np.full((1, 1, 1), rho))[..., 0]
        ref = (1.0 / math.tanh(rho)) ** k
        margin = sign * (vals - ref)
        idx = np.unravel_index(np.argmin(margin), margin.shape)
        bad = np.argwhere(margin < -tol * (1.0 + ref))
        return float(margin[idx]), _where(grid, idx, rho), bad

    inner, inner_at, bad_in = edge(spec.R1, 1.0)
    outer, outer_at, bad_out = edge(spec.R2, -1.0)
    for name, bad, rho in (("barrier_inner", bad_in, spec.R1), ("barrier_outer", bad_out, spec.R2)):
        for idx in bad[:max_listed]:
            violations.append({"condition": name, **_where(grid, idx, rho)})

    rhos = np.linspace(spec.R1, spec.R2, n_rho)
    r = rhos[None, None, :]
    psi = evaluate(spec.psi, u, r)
    dpsi = eval_drho(spec.psi, u, r)
    s, c = np.sinh(r), np.cosh(r)
    deriv = dpsi * s ** k + psi * k * s ** (k - 1) * c
    idx = np.unravel_index(np.argmax(deriv), deriv.shape)
    mono = float(deriv[idx])
    mono_at = _where(grid, idx[:2], rhos[idx[2]])
    for b in np.argwhere(deriv > tol)[:max_listed]:
        violations.append({"condition": "monotonicity", "value": float(deriv[tuple(b)]),
                           **_where(grid, b[:2], rhos[b[2]])})

    min_psi = float(psi.min())
    for b in np.argwhere(psi <= 0)[:max_listed]:
        violations.append({"condition": "positivity", **_where(grid, b[:2], rhos[b[2]])})
    mids = 0.5 * (rhos[1:] + rhos[:-1])
    psi_mid = evaluate(spec.psi, u, mids[None, None, :])
    if np.any(psi_mid <= 0):
        b = np.argwhere(psi_mid <= 0)[0]
        entry = {"condition": "positivity_between_samples", **_where(grid, b[:2], mids[b[2]])}
        (violations if strict_positivity else warnings).append(entry)
    min_psi = min(min_psi, float(psi_mid.min()))

    return HypothesisReport(inner, inner_at, outer, outer_at, mono, mono_at, min_psi,
                            violations, warnings, not violations)
