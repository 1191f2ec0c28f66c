"""Abstract syntax for the let-normal language and its direct-style variant.

Terms are immutable tagged tuples: cheap to build, hashable, and freely
shareable across concurrent evaluators. The value forms are Lam, Real and
Var; expression forms add App, Let, Op, If, Sample, Factor and the Dist
sampling form. Both languages use the same node shapes; the let-normal
language L restricts operand positions to syntactic values, which the
parser and `scope_check` enforce, while the direct-style language D allows
arbitrary subexpressions there.

Concrete syntax is parenthesized prefix notation:

    (let (x (sample)) x)
    (app (lam x x) 5.0)
    (+ x 1.0)
    (factor p)
    (normal 0.0 1.0)        ; distribution sampling form

Line comments start with ";". Program files use extension .plc for the
let-normal language and .pdc for direct style.
"""

from __future__ import annotations

import re
from typing import Iterator, NamedTuple, Optional, Union

# Node tags. Values come first so `tag <= T_VAR` tests value-ness.
T_LAM = 0
T_REAL = 1
T_VAR = 2
T_APP = 3
T_LET = 4
T_OP = 5
T_IF = 6
T_SAMPLE = 7
T_FACTOR = 8
T_DIST = 9

Node = tuple
Expr = Node
Value = Node
DExpr = Node
# Continuations: None is halt, otherwise (binder, body, rest).
Cont = Optional[tuple]

HALT: Cont = None
SAMPLE: Expr = (T_SAMPLE,)


def Lam(param: str, body: Expr) -> Value:
    return (T_LAM, param, body)


def Real(r: float) -> Value:
    return (T_REAL, r)


def Var(name: str) -> Value:
    return (T_VAR, name)


def App(fn: Node, arg: Node) -> Expr:
    return (T_APP, fn, arg)


def Let(x: str, rhs: Expr, body: Expr) -> Expr:
    return (T_LET, x, rhs, body)


def If(cond: Node, then: Expr, els: Expr) -> Expr:
    return (T_IF, cond, then, els)


def Factor(arg: Node) -> Expr:
    return (T_FACTOR, arg)


def LetK(x: str, body: Expr, rest: Cont) -> Cont:
    return (x, body, rest)


class OpInfo(NamedTuple):
    code: int
    name: str
    arity: int


_OP_DEFS = [
    ("log", 1),
    ("exp", 1),
    ("real?", 1),
    ("+", 2),
    ("-", 2),
    ("*", 2),
    ("/", 2),
    ("<", 2),
    ("<=", 2),
    ("normalinvcdf", 3),
    ("normalpdf", 3),
    ("normalcdf", 3),
]

OPS: dict[str, OpInfo] = {
    name: OpInfo(code, name, arity) for code, (name, arity) in enumerate(_OP_DEFS)
}
OP_BY_CODE: list[OpInfo] = [OPS[name] for name, _ in _OP_DEFS]

# Distribution sampling forms (sequenced-entropy semantics only).
DISTS: dict[str, int] = {"normal": 2}

_KEYWORDS = {"lam", "let", "if", "app", "sample", "factor", "halt", "letk"}


def Op(name: str, *args: Node) -> Expr:
    info = OPS[name]
    if len(args) != info.arity:
        raise ValueError(f"op {name} expects {info.arity} args, got {len(args)}")
    return (T_OP, info.code, tuple(args))


def Dist(name: str, *args: Node) -> Expr:
    if len(args) != DISTS[name]:
        raise ValueError(f"{name} expects {DISTS[name]} parameters")
    return (T_DIST, name, tuple(args))


def is_value(e: Node) -> bool:
    return e[0] <= T_VAR


def op_name(e: Expr) -> str:
    return OP_BY_CODE[e[1]].name


# ---------------------------------------------------------------------------
# Free variables and scope checking


def free_vars(e: Node) -> frozenset[str]:
    """Variables of `e` not bound by an enclosing lam/let."""
    tag = e[0]
    if tag == T_VAR:
        return frozenset((e[1],))
    if tag == T_REAL or tag == T_SAMPLE:
        return frozenset()
    if tag == T_LAM:
        return free_vars(e[2]) - {e[1]}
    if tag == T_APP:
        return free_vars(e[1]) | free_vars(e[2])
    if tag == T_LET:
        return free_vars(e[2]) | (free_vars(e[3]) - {e[1]})
    if tag == T_OP or tag == T_DIST:
        out: frozenset[str] = frozenset()
        for a in e[2]:
            out |= free_vars(a)
        return out
    if tag == T_IF:
        return free_vars(e[1]) | free_vars(e[2]) | free_vars(e[3])
    if tag == T_FACTOR:
        return free_vars(e[1])
    raise ValueError(f"bad node tag {tag}")


def cont_free_ok(k: Cont) -> bool:
    """Continuations are closed: each frame's body may use only its binder."""
    while k is not None:
        x, body, k = k
        if free_vars(body) - {x}:
            return False
    return True


class ScopeViolation(NamedTuple):
    reason: str
    name: str
    path: tuple[int, ...]

    def __str__(self) -> str:
        where = "/".join(map(str, self.path)) or "root"
        return f"{self.reason}: {self.name} at {where}"


def scope_check(env: frozenset[str] | set[str], e: Node, lang: str = "L") -> Optional[ScopeViolation]:
    """None if `e` is well-scoped under `env`, else the first violation.

    With lang="L" also rejects non-value operands (let-normal form).
    """
    return _scope(frozenset(env), e, lang == "L", ())


def _scope(env, e, strict, path):
    tag = e[0]
    if tag == T_VAR:
        if e[1] not in env:
            return ScopeViolation("unbound variable", e[1], path)
        return None
    if tag == T_REAL or tag == T_SAMPLE:
        return None
    if tag == T_LAM:
        return _scope(env | {e[1]}, e[2], strict, path + (0,))
    if tag == T_APP:
        for i, sub in enumerate((e[1], e[2])):
            if strict and not is_value(sub):
                return ScopeViolation("non-value operand", _head_name(sub), path + (i,))
            v = _scope(env, sub, strict, path + (i,))
            if v:
                return v
        return None
    if tag == T_LET:
        v = _scope(env, e[2], strict, path + (0,))
        if v:
            return v
        return _scope(env | {e[1]}, e[3], strict, path + (1,))
    if tag == T_OP or tag == T_DIST:
        for i, a in enumerate(e[2]):
            if strict and not is_value(a):
                return ScopeViolation("non-value operand", _head_name(a), path + (i,))
            v = _scope(env, a, strict, path + (i,))
            if v:
                return v
        return None
    if tag == T_IF:
        if strict and not is_value(e[1]):
            return ScopeViolation("non-value condition", _head_name(e[1]), path + (0,))
        for i, sub in enumerate((e[1], e[2], e[3])):
            v = _scope(env, sub, strict, path + (i,))
            if v:
                return v
        return None
    if tag == T_FACTOR:
        if strict and not is_value(e[1]):
            return ScopeViolation("non-value operand", _head_name(e[1]), path + (0,))
        return _scope(env, e[1], strict, path + (0,))
    raise ValueError(f"bad node tag {tag}")


def _head_name(e: Node) -> str:
    names = {
        T_LAM: "lam", T_REAL: "real", T_VAR: "var", T_APP: "app", T_LET: "let",
        T_OP: "op", T_IF: "if", T_SAMPLE: "sample", T_FACTOR: "factor", T_DIST: "dist",
    }
    return names[e[0]]


# ---------------------------------------------------------------------------
# Substitution and fresh names


def subst(e: Node, x: str, v: Value) -> Node:
    """Capture-avoiding substitution of value `v` for variable `x` in `e`."""
    return _subst(e, x, v, free_vars(v))


def _subst(e, x, v, fv):
    tag = e[0]
    if tag == T_VAR:
        return v if e[1] == x else e
    if tag == T_REAL or tag == T_SAMPLE:
        return e
    if tag == T_LAM:
        y = e[1]
        if y == x:
            return e
        if y in fv:
            z = fresh(fv | free_vars(e[2]) | {x}, y)
            body = _subst(e[2], y, (T_VAR, z), frozenset())
            return (T_LAM, z, _subst(body, x, v, fv))
        return (T_LAM, y, _subst(e[2], x, v, fv))
    if tag == T_APP:
        return (T_APP, _subst(e[1], x, v, fv), _subst(e[2], x, v, fv))
    if tag == T_LET:
        y = e[1]
        rhs = _subst(e[2], x, v, fv)
        if y == x:
            return (T_LET, y, rhs, e[3])
        if y in fv:
            z = fresh(fv | free_vars(e[3]) | {x}, y)
            body = _subst(e[3], y, (T_VAR, z), frozenset())
            return (T_LET, z, rhs, _subst(body, x, v, fv))
        return (T_LET, y, rhs, _subst(e[3], x, v, fv))
    if tag == T_OP:
        return (T_OP, e[1], tuple(_subst(a, x, v, fv) for a in e[2]))
    if tag == T_DIST:
        return (T_DIST, e[1], tuple(_subst(a, x, v, fv) for a in e[2]))
    if tag == T_IF:
        return (T_IF, _subst(e[1], x, v, fv), _subst(e[2], x, v, fv),
                _subst(e[3], x, v, fv))
    if tag == T_FACTOR:
        return (T_FACTOR, _subst(e[1], x, v, fv))
    raise ValueError(f"bad node tag {tag}")


def fresh(avoid, hint: str = "x") -> str:
    """A name not in `avoid`, deterministic in its inputs."""
    base = hint.rstrip("0123456789") or "x"
    if hint not in avoid:
        return hint
    i = 1
    while f"{base}{i}" in avoid:
        i += 1
    return f"{base}{i}"


def all_names(e: Node) -> set[str]:
    """Every variable name occurring in `e`, bound or free."""
    out: set[str] = set()
    stack = [e]
    while stack:
        n = stack.pop()
        tag = n[0]
        if tag == T_VAR:
            out.add(n[1])
        elif tag == T_LAM:
            out.add(n[1])
            stack.append(n[2])
        elif tag == T_APP:
            stack.append(n[1])
            stack.append(n[2])
        elif tag == T_LET:
            out.add(n[1])
            stack.append(n[2])
            stack.append(n[3])
        elif tag == T_OP or tag == T_DIST:
            stack.extend(n[2])
        elif tag == T_IF:
            stack.append(n[1])
            stack.append(n[2])
            stack.append(n[3])
        elif tag == T_FACTOR:
            stack.append(n[1])
    return out


# ---------------------------------------------------------------------------
# Alpha equivalence


def alpha_key(e: Node) -> tuple:
    """De Bruijn-style canonical form; equal keys iff alpha-equivalent."""
    return _alpha(e, {}, 0)


def _alpha(e, env, depth):
    tag = e[0]
    if tag == T_VAR:
        return (T_VAR, env.get(e[1], e[1]))
    if tag == T_REAL or tag == T_SAMPLE:
        return e
    if tag == T_LAM:
        inner = dict(env)
        inner[e[1]] = depth
        return (T_LAM, _alpha(e[2], inner, depth + 1))
    if tag == T_APP:
        return (T_APP, _alpha(e[1], env, depth), _alpha(e[2], env, depth))
    if tag == T_LET:
        inner = dict(env)
        inner[e[1]] = depth
        return (T_LET, _alpha(e[2], env, depth), _alpha(e[3], inner, depth + 1))
    if tag == T_OP:
        return (T_OP, e[1], tuple(_alpha(a, env, depth) for a in e[2]))
    if tag == T_DIST:
        return (T_DIST, e[1], tuple(_alpha(a, env, depth) for a in e[2]))
    if tag == T_IF:
        return (T_IF, _alpha(e[1], env, depth), _alpha(e[2], env, depth),
                _alpha(e[3], env, depth))
    if tag == T_FACTOR:
        return (T_FACTOR, _alpha(e[1], env, depth))
    raise ValueError(f"bad node tag {tag}")


def alpha_eq(a: Node, b: Node) -> bool:
    return alpha_key(a) == alpha_key(b)


# ---------------------------------------------------------------------------
# Parsing


class ParseError(ValueError):
    def __init__(self, message: str, line: int, col: int):
        super().__init__(f"{line}:{col}: {message}")
        self.line = line
        self.col = col


_NUMBER_RE = re.compile(r"[+-]?(\d+\.?\d*|\.\d+)([eE][+-]?\d+)?\Z")
_IDENT_RE = re.compile(r"[A-Za-z_][A-Za-z0-9_\-]*\??\Z")


class _Tok(NamedTuple):
    text: str
    line: int
    col: int


def _tokenize(text: str) -> Iterator[_Tok]:
    line, col = 1, 1
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c == "\n":
            line += 1
            col = 1
            i += 1
        elif c in " \t\r":
            col += 1
            i += 1
        elif c == ";":
            while i < n and text[i] != "\n":
                i += 1
        elif c in "()":
            yield _Tok(c, line, col)
            col += 1
            i += 1
        else:
            j = i
            while j < n and text[j] not in " \t\r\n();":
                j += 1
            yield _Tok(text[i:j], line, col)
            col += j - i
            i = j


def _read(tokens: list[_Tok], pos: int):
    if pos >= len(tokens):
        last = tokens[-1] if tokens else _Tok("", 1, 1)
        raise ParseError("unexpected end of input", last.line, last.col)
    tok = tokens[pos]
    if tok.text == "(":
        items = []
        pos += 1
        while True:
            if pos >= len(tokens):
                raise ParseError("missing )", tok.line, tok.col)
            if tokens[pos].text == ")":
                return (items, tok), pos + 1
            item, pos = _read(tokens, pos)
            items.append(item)
    if tok.text == ")":
        raise ParseError("unexpected )", tok.line, tok.col)
    return tok, pos + 1


def parse(text: str, lang: str = "L") -> Node:
    """Parse concrete syntax into an AST for language L or D."""
    if lang not in ("L", "D"):
        raise ValueError("lang must be 'L' or 'D'")
    tokens = list(_tokenize(text))
    if not tokens:
        raise ParseError("empty program", 1, 1)
    form, pos = _read(tokens, 0)
    if pos != len(tokens):
        t = tokens[pos]
        raise ParseError("trailing input", t.line, t.col)
    e = _build(form, lang)
    v = scope_check(frozenset(), e, lang)
    if v is not None and v.reason == "unbound variable":
        raise ParseError(str(v), tokens[0].line, tokens[0].col)
    return e


def _err(form, msg) -> ParseError:
    tok = form[1] if isinstance(form, tuple) and isinstance(form[0], list) else form
    return ParseError(msg, tok.line, tok.col)


def _build(form, lang: str) -> Node:
    strict = lang == "L"
    if isinstance(form, _Tok):
        text = form.text
        if _NUMBER_RE.match(text):
            r = float(text)
            if r != r or r in (float("inf"), float("-inf")):
                raise ParseError("non-finite real literal", form.line, form.col)
            return (T_REAL, r)
        if text in _KEYWORDS or text in OPS or text in DISTS:
            raise ParseError(f"reserved word used as variable: {text}", form.line, form.col)
        if not _IDENT_RE.match(text) or text.endswith("?"):
            raise ParseError(f"bad token: {text}", form.line, form.col)
        return (T_VAR, text)

    items, tok = form
    if not items:
        raise ParseError("empty form", tok.line, tok.col)
    head = items[0]
    name = head.text if isinstance(head, _Tok) else None

    if name == "sample":
        if len(items) != 1:
            raise _err(form, "sample takes no arguments")
        return SAMPLE
    if name == "lam":
        if len(items) != 3 or not isinstance(items[1], _Tok):
            raise _err(form, "expected (lam x body)")
        return (T_LAM, _binder(items[1]), _build(items[2], lang))
    if name == "let":
        if (len(items) != 3 or not isinstance(items[1], tuple)
                or isinstance(items[1], _Tok) or len(items[1][0]) != 2
                or not isinstance(items[1][0][0], _Tok)):
            raise _err(form, "expected (let (x rhs) body)")
        binding = items[1][0]
        return (T_LET, _binder(binding[0]), _build(binding[1], lang),
                _build(items[2], lang))
    if name == "app":
        if len(items) != 3:
            raise _err(form, "expected (app fn arg)")
        fn = _operand(items[1], lang, strict)
        arg = _operand(items[2], lang, strict)
        return (T_APP, fn, arg)
    if name == "if":
        if len(items) != 4:
            raise _err(form, "expected (if cond then else)")
        cond = _operand(items[1], lang, strict)
        return (T_IF, cond, _build(items[2], lang), _build(items[3], lang))
    if name == "factor":
        if len(items) != 2:
            raise _err(form, "expected (factor v)")
        return (T_FACTOR, _operand(items[1], lang, strict))
    if name in OPS:
        info = OPS[name]
        if len(items) - 1 != info.arity:
            raise _err(form, f"op {name} expects {info.arity} args, got {len(items) - 1}")
        return (T_OP, info.code, tuple(_operand(a, lang, strict) for a in items[1:]))
    if name in DISTS:
        if len(items) - 1 != DISTS[name]:
            raise _err(form, f"{name} expects {DISTS[name]} parameters")
        return (T_DIST, name, tuple(_operand(a, lang, strict) for a in items[1:]))
    raise _err(form, f"unknown form: {name or '(...)'}" )


def _binder(tok: _Tok) -> str:
    if (tok.text in _KEYWORDS or tok.text in OPS or tok.text in DISTS
            or not _IDENT_RE.match(tok.text) or tok.text.endswith("?")):
        raise ParseError(f"bad binder: {tok.text}", tok.line, tok.col)
    return tok.text


def _operand(form, lang: str, strict: bool) -> Node:
    e = _build(form, lang)
    if strict and not is_value(e):
        tok = form if isinstance(form, _Tok) else form[1]
        raise ParseError(
            "let-normal violation: operand must be a value", tok.line, tok.col)
    return e


# ---------------------------------------------------------------------------
# Printing


def unparse(e: Node) -> str:
    """Canonical text; round-trips through parse."""
    tag = e[0]
    if tag == T_VAR:
        return e[1]
    if tag == T_REAL:
        return repr(e[1])
    if tag == T_LAM:
        return f"(lam {e[1]} {unparse(e[2])})"
    if tag == T_APP:
        return f"(app {unparse(e[1])} {unparse(e[2])})"
    if tag == T_LET:
        return f"(let ({e[1]} {unparse(e[2])}) {unparse(e[3])})"
    if tag == T_OP:
        args = " ".join(unparse(a) for a in e[2])
        return f"({op_name(e)} {args})"
    if tag == T_IF:
        return f"(if {unparse(e[1])} {unparse(e[2])} {unparse(e[3])})"
    if tag == T_SAMPLE:
        return "(sample)"
    if tag == T_FACTOR:
        return f"(factor {unparse(e[1])})"
    if tag == T_DIST:
        args = " ".join(unparse(a) for a in e[2])
        return f"({e[1]} {args})"
    raise ValueError(f"bad node tag {tag}")


def unparse_cont(k: Cont) -> str:
    if k is None:
        return "halt"
    x, body, rest = k
    return f"(letk ({x} {unparse(body)}) {unparse_cont(rest)})"
