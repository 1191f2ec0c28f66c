"""The equivalence catalog as side-condition-checked rewrite rules.

A focus is a path of child indices from the root of an expression; a rule
application rewrites the subterm at the focus and must never enlarge the
free-variable set or break scoping. The child numbering is:

    lam: 0 body         app: 0 fn, 1 arg      let: 0 rhs, 1 body
    op/dist: argument index                   if: 0 cond, 1 then, 2 else
    factor: 0 arg

Side conditions are decidable syntactic checks. Positivity (factor_merge,
conjugacy scales) accepts only positive real literals, exp/normalpdf
applications, and variables bound to those within scope of the focus;
anything else is NotApplicable.

Reverse directions that introduce structure (let_v, let_S) take extra
arguments: the value or hole path they abstract, and a binder hint. Script
steps carry these in an optional `args` field.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional

from .machine import delta
from .syntax import (
    Expr, Value,
    T_LAM, T_REAL, T_VAR, T_APP, T_LET, T_OP, T_IF, T_SAMPLE, T_FACTOR, T_DIST,
    OPS, Op, Real, Var, all_names, free_vars, fresh, is_value, parse,
    scope_check, unparse,
)

OP_ADD = OPS["+"].code
OP_SUB = OPS["-"].code
OP_MUL = OPS["*"].code
OP_EXP = OPS["exp"].code
OP_NORMALPDF = OPS["normalpdf"].code
OP_NORMALINVCDF = OPS["normalinvcdf"].code

Focus = tuple[int, ...]


class NotApplicable(Exception):
    pass


# ---------------------------------------------------------------------------
# Focus navigation


def children(e: Expr) -> tuple[Expr, ...]:
    tag = e[0]
    if tag == T_LAM:
        return (e[2],)
    if tag == T_APP:
        return (e[1], e[2])
    if tag == T_LET:
        return (e[2], e[3])
    if tag == T_OP or tag == T_DIST:
        return e[2]
    if tag == T_IF:
        return (e[1], e[2], e[3])
    if tag == T_FACTOR:
        return (e[1],)
    return ()


def with_child(e: Expr, i: int, new: Expr) -> Expr:
    tag = e[0]
    if tag == T_LAM and i == 0:
        return (T_LAM, e[1], new)
    if tag == T_APP and i in (0, 1):
        return (T_APP, new, e[2]) if i == 0 else (T_APP, e[1], new)
    if tag == T_LET and i in (0, 1):
        return (T_LET, e[1], new, e[3]) if i == 0 else (T_LET, e[1], e[2], new)
    if (tag == T_OP or tag == T_DIST) and 0 <= i < len(e[2]):
        args = e[2][:i] + (new,) + e[2][i + 1:]
        return (tag, e[1], args)
    if tag == T_IF and i in (0, 1, 2):
        parts = [e[1], e[2], e[3]]
        parts[i] = new
        return (T_IF, *parts)
    if tag == T_FACTOR and i == 0:
        return (T_FACTOR, new)
    raise IndexError(f"no child {i} in {unparse(e)}")


def get_sub(e: Expr, focus: Focus) -> Expr:
    for i in focus:
        kids = children(e)
        if i >= len(kids):
            raise NotApplicable(f"focus goes through missing child {i}")
        e = kids[i]
    return e


def replace_sub(e: Expr, focus: Focus, new: Expr) -> Expr:
    if not focus:
        return new
    return with_child(e, focus[0], replace_sub(children(e)[focus[0]], focus[1:], new))


def subterm_paths(e: Expr, prefix: Focus = ()):
    yield prefix, e
    for i, c in enumerate(children(e)):
        yield from subterm_paths(c, prefix + (i,))


# ---------------------------------------------------------------------------
# Context gathered on the way to a focus


@dataclass
class Ctx:
    avoid: set[str]
    positive: frozenset[str]


def _is_positive(e: Expr, positive: frozenset[str]) -> bool:
    tag = e[0]
    if tag == T_REAL:
        return e[1] > 0.0
    if tag == T_VAR:
        return e[1] in positive
    if tag == T_OP:
        return e[1] in (OP_EXP, OP_NORMALPDF)
    return False


def _ctx_at(e: Expr, focus: Focus) -> Ctx:
    avoid = all_names(e)
    positive: set[str] = set()
    cur = e
    for i in focus:
        tag = cur[0]
        if tag == T_LET and i == 1:
            if _is_positive(cur[2], frozenset(positive)):
                positive.add(cur[1])
            else:
                positive.discard(cur[1])
        elif tag == T_LAM and i == 0:
            positive.discard(cur[1])
        cur = children(cur)[i]
    return Ctx(avoid, frozenset(positive))


def _fresh(ctx: Ctx, hint: str) -> str:
    name = fresh(ctx.avoid, hint)
    ctx.avoid.add(name)
    return name


def _require(cond: bool, reason: str):
    if not cond:
        raise NotApplicable(reason)


def _lit_or_var(v: Expr) -> bool:
    return v[0] in (T_REAL, T_VAR)


def _pos_literal(v: Expr) -> Optional[float]:
    return v[1] if v[0] == T_REAL and v[1] > 0.0 else None


# ---------------------------------------------------------------------------
# Value-occurrence replacement (for reverse let_v)


def _replace_value(e: Expr, v: Value, x: str) -> Expr:
    """Replace free occurrences of value `v` in `e` by Var x, stopping under
    binders that capture a free variable of `v`."""
    fv = free_vars(v)

    def go(t):
        if t == v:
            return (T_VAR, x)
        tag = t[0]
        if tag in (T_VAR, T_REAL, T_SAMPLE):
            return t
        if tag == T_LAM:
            if t[1] in fv:
                return t
            return (T_LAM, t[1], go(t[2]))
        if tag == T_APP:
            return (T_APP, go(t[1]), go(t[2]))
        if tag == T_LET:
            rhs = go(t[2])
            if t[1] in fv:
                return (T_LET, t[1], rhs, t[3])
            return (T_LET, t[1], rhs, go(t[3]))
        if tag == T_OP or tag == T_DIST:
            return (tag, t[1], tuple(go(a) for a in t[2]))
        if tag == T_IF:
            return (T_IF, go(t[1]), go(t[2]), go(t[3]))
        if tag == T_FACTOR:
            return (T_FACTOR, go(t[1]))
        raise ValueError(f"bad node tag {tag}")

    return go(e)


# ---------------------------------------------------------------------------
# The rules


def _beta_v_fwd(e, ctx, args):
    _require(e[0] == T_APP, "not an application")
    fn = e[1]
    _require(fn[0] == T_LAM, "function is not a lambda")
    from .syntax import subst
    return subst(fn[2], fn[1], e[2])


def _let_v_fwd(e, ctx, args):
    _require(e[0] == T_LET, "not a let")
    _require(is_value(e[2]), "right-hand side is not a value")
    from .syntax import subst
    return subst(e[3], e[1], e[2])


def _let_v_rev(e, ctx, args):
    _require(args is not None and "value" in args, "reverse let_v needs a value")
    v = args["value"]
    if isinstance(v, str):
        v = parse(v, "D")
    _require(is_value(v), "abstracted term must be a value")
    _require(free_vars(v) <= free_vars(e) | frozenset(), "value must be in scope")
    x = _fresh(ctx, args.get("hint", "x"))
    body = _replace_value(e, v, x)
    _require(body != e, "value does not occur")
    from .syntax import subst
    _require(subst(body, x, v) == e, "abstraction is not invertible")
    return (T_LET, x, v, body)


def _let_id_fwd(e, ctx, args):
    _require(e[0] == T_LET, "not a let")
    _require(e[3] == (T_VAR, e[1]), "body is not the bound variable")
    return e[2]


def _let_id_rev(e, ctx, args):
    x = _fresh(ctx, (args or {}).get("hint", "x"))
    return (T_LET, x, e, (T_VAR, x))


def _delta_fold_fwd(e, ctx, args):
    _require(e[0] == T_OP, "not a primitive operation")
    _require(all(a[0] in (T_REAL, T_LAM) for a in e[2]), "arguments must be closed values")
    v = delta(e[1], e[2])
    _require(v is not None, "operation undefined on these arguments")
    return v


def _assoc_fwd(e, ctx, args):
    # let x2 = (let x1 = e1 in e2) in e3  ->  let x1 = e1 in let x2 = e2 in e3
    _require(e[0] == T_LET, "not a let")
    inner = e[2]
    _require(inner[0] == T_LET, "right-hand side is not a let")
    x2, x1 = e[1], inner[1]
    e1, e2, e3 = inner[2], inner[3], e[3]
    _require(x1 not in free_vars(e3), f"{x1} occurs free in the outer body")
    return (T_LET, x1, e1, (T_LET, x2, e2, e3))


def _assoc_rev(e, ctx, args):
    # let x1 = e1 in let x2 = e2 in e3  ->  let x2 = (let x1 = e1 in e2) in e3
    _require(e[0] == T_LET, "not a let")
    body = e[3]
    _require(body[0] == T_LET, "body is not a let")
    x1, x2 = e[1], body[1]
    e1, e2, e3 = e[2], body[2], body[3]
    _require(x1 not in free_vars(e3), f"{x1} occurs free in the final body")
    return (T_LET, x2, (T_LET, x1, e1, e2), e3)


def _commut(e, ctx, args):
    # let x1 = e1 in let x2 = e2 in e0  ->  let x2 = e2 in let x1 = e1 in e0
    _require(e[0] == T_LET, "not a let")
    body = e[3]
    _require(body[0] == T_LET, "body is not a let")
    x1, x2 = e[1], body[1]
    e1, e2, e0 = e[2], body[2], body[3]
    _require(x1 != x2, "binders must be distinct")
    _require(x1 not in free_vars(e2), f"{x1} occurs free in the second binding")
    _require(x2 not in free_vars(e1), f"{x2} occurs free in the first binding")
    return (T_LET, x2, e2, (T_LET, x1, e1, e0))


# let_S: single-evaluation contexts over the let-normal language are chains
# of lets with the hole in a right-hand side or body position.

def _s_occurrence(body: Expr, x: str) -> Optional[Focus]:
    """Path to the unique occurrence of Var x in `body` if it sits at a
    single-evaluation position (through let rhs/body steps only); None
    otherwise. Requires x free exactly once in body."""
    if body == (T_VAR, x):
        return ()
    if body[0] == T_LET:
        rhs_has = x in free_vars(body[2])
        body_has = body[1] != x and x in free_vars(body[3])
        if rhs_has and not body_has:
            p = _s_occurrence(body[2], x)
            return None if p is None else (0,) + p
        if body_has and not rhs_has:
            p = _s_occurrence(body[3], x)
            return None if p is None else (1,) + p
    return None


def _path_binders(t: Expr, path: Focus) -> list[str]:
    out = []
    for i in path:
        if t[0] == T_LET and i == 1:
            out.append(t[1])
        elif t[0] == T_LAM and i == 0:
            out.append(t[1])
        t = children(t)[i]
    return out


def _let_s_fwd(e, ctx, args):
    # let x = e1 in S[x]  ->  S[e1]
    _require(e[0] == T_LET, "not a let")
    x, rhs, body = e[1], e[2], e[3]
    _require(x in free_vars(body), f"{x} does not occur in the body")
    path = _s_occurrence(body, x)
    _require(path is not None,
             "occurrence is not unique at a single-evaluation position")
    binders = _path_binders(body, path)
    _require(not (set(binders) & free_vars(rhs)),
             "moving the right-hand side would capture its free variables")
    return replace_sub(body, path, rhs)


def _let_s_rev(e, ctx, args):
    # S[e1] -> let x = e1 in S[x], hole given as a path from the focus
    _require(args is not None and "hole" in args, "reverse let_S needs a hole path")
    path = tuple(args["hole"])
    cur = e
    for i in path:
        _require(cur[0] == T_LET and i in (0, 1),
                 "hole path must go through let rhs/body positions")
        cur = children(cur)[i]
    sub = cur
    binders = _path_binders(e, path)
    _require(not (set(binders) & free_vars(sub)),
             "pulling the subterm out would unbind its variables")
    x = _fresh(ctx, args.get("hint", "x"))
    return (T_LET, x, sub, replace_sub(e, path, (T_VAR, x)))


def _check_positive(v: Expr, ctx: Ctx, what: str):
    _require(_is_positive(v, ctx.positive),
             f"{what} must be a positive literal or whitelisted positive value")


def _factor_merge_fwd(e, ctx, args):
    # (factor x); (factor y) = (factor x*y); y   with x, y known positive
    _require(e[0] == T_LET and e[2][0] == T_FACTOR, "not a factor sequence")
    d1, x = e[1], e[2][1]
    body = e[3]
    _check_positive(x, ctx, "first factor argument")
    if body[0] == T_FACTOR:
        y = body[1]
        rest = None
        d2_hint = "w"
    elif body[0] == T_LET and body[2][0] == T_FACTOR:
        y = body[2][1]
        rest = body[3]
        d2_hint = body[1]
    else:
        raise NotApplicable("not a factor sequence")
    _check_positive(y, ctx, "second factor argument")
    _require(d1 not in free_vars(y), f"{d1} occurs free in the second argument")
    if rest is not None:
        from .syntax import subst
        _require(body[1] != d1, "shadowed binder")
        rest = subst(rest, body[1], y)
        _require(d1 not in free_vars(rest), f"{d1} occurs free in the continuation")
    t = _fresh(ctx, "t")
    d2 = _fresh(ctx, d2_hint)
    tail = rest if rest is not None else y
    return (T_LET, t, Op("*", x, y),
            (T_LET, d2, (T_FACTOR, (T_VAR, t)), tail))


def _arith_fwd(e, ctx, args):
    # schema 1: x + y -> y + x
    if e[0] == T_OP and e[1] == OP_ADD:
        return (T_OP, OP_ADD, (e[2][1], e[2][0]))
    # schema 2: let t = (+ y x) in (- t z) ... -> let u = (- z y) in (- x u) ...
    _require(e[0] == T_LET and e[2][0] == T_OP and e[2][1] == OP_ADD,
             "not an addition binding or commutable addition")
    t = e[1]
    y, x = e[2][2]
    body = e[3]
    if body[0] == T_OP and body[1] == OP_SUB and body[2][0] == (T_VAR, t):
        z, rest = body[2][1], None
        d_hint = "u"
    elif (body[0] == T_LET and body[2][0] == T_OP and body[2][1] == OP_SUB
          and body[2][2][0] == (T_VAR, t)):
        z, rest = body[2][2][1], body[3]
        d_hint = body[1]
    else:
        raise NotApplicable("body does not subtract from the sum")
    for v in (x, y, z):
        _require(t not in free_vars(v), f"{t} occurs in an operand")
    if rest is not None:
        _require(t != body[1] and t not in free_vars(rest),
                 f"{t} used beyond the subtraction")
    u = _fresh(ctx, d_hint if rest is None else "u")
    sub2 = (T_OP, OP_SUB, (x, (T_VAR, u)))
    if rest is None:
        return (T_LET, u, (T_OP, OP_SUB, (z, y)), sub2)
    return (T_LET, u, (T_OP, OP_SUB, (z, y)), (T_LET, body[1], sub2, rest))


def _arith_rev(e, ctx, args):
    if e[0] == T_OP and e[1] == OP_ADD:
        return (T_OP, OP_ADD, (e[2][1], e[2][0]))
    # let u = (- z y) in (- x u) ...  ->  let t = (+ y x) in (- t z) ...
    _require(e[0] == T_LET and e[2][0] == T_OP and e[2][1] == OP_SUB,
             "not a subtraction binding")
    u = e[1]
    z, y = e[2][2]
    body = e[3]
    if body[0] == T_OP and body[1] == OP_SUB and body[2][1] == (T_VAR, u):
        x, rest = body[2][0], None
        d_hint = "t"
    elif (body[0] == T_LET and body[2][0] == T_OP and body[2][1] == OP_SUB
          and body[2][2][1] == (T_VAR, u)):
        x, rest = body[2][2][0], body[3]
        d_hint = body[1]
    else:
        raise NotApplicable("body does not subtract the difference")
    for v in (x, y, z):
        _require(u not in free_vars(v), f"{u} occurs in an operand")
    if rest is not None:
        _require(u != body[1] and u not in free_vars(rest),
                 f"{u} used beyond the subtraction")
    t = _fresh(ctx, d_hint if rest is None else "t")
    sub2 = (T_OP, OP_SUB, ((T_VAR, t), z))
    if rest is None:
        return (T_LET, t, (T_OP, OP_ADD, (y, x)), sub2)
    return (T_LET, t, (T_OP, OP_ADD, (y, x)), (T_LET, body[1], sub2, rest))


def _normalpdf_shift_fwd(e, ctx, args):
    # let d = (- x y) in normalpdf(d; 0, s) ...  ->  normalpdf(y; x, s) ...
    _require(e[0] == T_LET and e[2][0] == T_OP and e[2][1] == OP_SUB,
             "not a subtraction binding")
    d = e[1]
    x, y = e[2][2]
    body = e[3]

    def match_pdf(t):
        return (t[0] == T_OP and t[1] == OP_NORMALPDF and t[2][0] == (T_VAR, d)
                and t[2][1] == (T_REAL, 0.0))

    if match_pdf(body):
        s, rest, p_hint = body[2][2], None, None
    elif body[0] == T_LET and match_pdf(body[2]):
        s, rest, p_hint = body[2][2][2], body[3], body[1]
        _require(body[1] != d and d not in free_vars(rest),
                 f"{d} used beyond the density")
    else:
        raise NotApplicable("body is not normalpdf of the difference about 0")
    for v in (x, y, s):
        _require(d not in free_vars(v), f"{d} occurs in an operand")
    pdf = (T_OP, OP_NORMALPDF, (y, x, s))
    if rest is None:
        return pdf
    return (T_LET, p_hint, pdf, rest)


def _normalpdf_shift_rev(e, ctx, args):
    # normalpdf(y; x, s) ...  ->  let d = (- x y) in normalpdf(d; 0, s) ...
    if e[0] == T_OP and e[1] == OP_NORMALPDF:
        y, x, s = e[2]
        d = _fresh(ctx, "d")
        return (T_LET, d, (T_OP, OP_SUB, (x, y)),
                (T_OP, OP_NORMALPDF, ((T_VAR, d), (T_REAL, 0.0), s)))
    _require(e[0] == T_LET and e[2][0] == T_OP and e[2][1] == OP_NORMALPDF,
             "not a normalpdf binding")
    y, x, s = e[2][2]
    d = _fresh(ctx, "d")
    return (T_LET, d, (T_OP, OP_SUB, (x, y)),
            (T_LET, e[1], (T_OP, OP_NORMALPDF, ((T_VAR, d), (T_REAL, 0.0), s)),
             e[3]))


def _dist_invcdf_fwd(e, ctx, args):
    # normal(m, s)  ->  let u = sample in normalinvcdf(u; m, s)
    _require(e[0] == T_DIST and e[1] == "normal", "not a normal sampling form")
    m, s = e[2]
    u = _fresh(ctx, "u")
    return (T_LET, u, (T_SAMPLE,),
            (T_OP, OP_NORMALINVCDF, ((T_VAR, u), m, s)))


def _dist_invcdf_rev(e, ctx, args):
    _require(e[0] == T_LET and e[2] == (T_SAMPLE,), "not a sample binding")
    u, body = e[1], e[3]
    _require(body[0] == T_OP and body[1] == OP_NORMALINVCDF
             and body[2][0] == (T_VAR, u), "body is not normalinvcdf of the draw")
    m, s = body[2][1], body[2][2]
    _require(u not in free_vars(m) | free_vars(s), f"{u} occurs in a parameter")
    return (T_DIST, "normal", (m, s))


def _match_normal_macro(rhs: Expr):
    """let u = sample in normalinvcdf(u; m, s) -> (m, s), else None."""
    if rhs[0] != T_LET or rhs[2] != (T_SAMPLE,):
        return None
    u, body = rhs[1], rhs[3]
    if (body[0] == T_OP and body[1] == OP_NORMALINVCDF
            and body[2][0] == (T_VAR, u)
            and u not in free_vars(body[2][1]) | free_vars(body[2][2])):
        return body[2][1], body[2][2]
    return None


def _emit_chain(terms: list[tuple[str, Expr]], tail: Expr) -> Expr:
    for name, rhs in reversed(terms):
        tail = (T_LET, name, rhs, tail)
    return tail


def _conjugacy_fwd(e, ctx, args):
    """Normal-normal conjugacy:

        let m = normal(m0, s0) in let w = factor normalpdf(d; m, s) in m
     -> let m = normal(M, S) in let w = factor normalpdf(d; m0, s') in m

    with 1/S^2 = 1/s0^2 + 1/s^2, M = S^2 (m0/s0^2 + d/s^2),
    s' = sqrt(s0^2 + s^2). Scales must be positive literals; m0 and d may be
    literals or variables, in which case the posterior mean is emitted as a
    residual op chain.
    """
    _require(e[0] == T_LET, "not a let")
    m, prior, outer = e[1], e[2], e[3]
    params = _match_normal_macro(prior)
    _require(params is not None, "prior is not a normal draw")
    m0, s0v = params
    _require(_lit_or_var(m0), "prior mean must be a literal or a variable")
    s0 = _pos_literal(s0v)
    _require(s0 is not None, "prior scale must be a positive literal")
    _require(outer[0] == T_LET and outer[3] == (T_VAR, m) and outer[1] != m,
             "continuation is not (factor ...; m)")
    w, obs = outer[1], outer[2]
    _require(obs[0] == T_LET and obs[2][0] == T_OP and obs[2][1] == OP_NORMALPDF
             and obs[3] == (T_FACTOR, (T_VAR, obs[1])),
             "observation is not factor of a normalpdf")
    p = obs[1]
    _require(p != m, "density binder shadows the prior draw")
    d, mean, sv = obs[2][2]
    _require(mean == (T_VAR, m), "observation mean is not the prior draw")
    s = _pos_literal(sv)
    _require(s is not None, "observation scale must be a positive literal")
    _require(_lit_or_var(d), "observation must be a literal or a variable")
    _require(m not in free_vars(d), "observation depends on the draw")

    prec = 1.0 / (s0 * s0) + 1.0 / (s * s)
    ipv = 1.0 / prec
    s_post = math.sqrt(ipv)
    s_norm = math.sqrt(s0 * s0 + s * s)

    # posterior mean ipv * (m0/s0^2 + d/s^2), folded where literal
    chain: list[tuple[str, Expr]] = []

    def mul_by(v: Expr, c: float, hint: str) -> Expr:
        if v[0] == T_REAL:
            return (T_REAL, v[1] * c)
        if c == 1.0:
            return v
        name = _fresh(ctx, hint)
        chain.append((name, (T_OP, OP_MUL, ((T_REAL, c), v))))
        return (T_VAR, name)

    ta = mul_by(m0, 1.0 / (s0 * s0), "g")
    tb = mul_by(d, 1.0 / (s * s), "g")
    if ta[0] == T_REAL and tb[0] == T_REAL:
        tsum: Expr = (T_REAL, ta[1] + tb[1])
    elif ta == (T_REAL, 0.0):
        tsum = tb
    elif tb == (T_REAL, 0.0):
        tsum = ta
    else:
        name = _fresh(ctx, "g")
        chain.append((name, (T_OP, OP_ADD, (ta, tb))))
        tsum = (T_VAR, name)
    mu = mul_by(tsum, ipv, "q")

    u = _fresh(ctx, "u")
    draw = _emit_chain(chain, (T_LET, u, (T_SAMPLE,),
                               (T_OP, OP_NORMALINVCDF,
                                ((T_VAR, u), mu, (T_REAL, s_post)))))
    norm = (T_LET, p,
            (T_OP, OP_NORMALPDF, (d, m0, (T_REAL, s_norm))),
            (T_FACTOR, (T_VAR, p)))
    return (T_LET, m, draw, (T_LET, w, norm, (T_VAR, m)))


@dataclass(frozen=True)
class RewriteRule:
    name: str
    bidirectional: bool
    fwd: Callable
    rev: Optional[Callable] = None
    needs_args: tuple[str, ...] = ()  # directions that require args

    def apply(self, sub, ctx, direction, args):
        if direction == "fwd":
            return self.fwd(sub, ctx, args)
        if direction == "rev":
            if not self.bidirectional or self.rev is None:
                raise NotApplicable(f"{self.name} has no reverse direction")
            return self.rev(sub, ctx, args)
        raise ValueError(f"bad direction {direction!r}")


_RULES = [
    RewriteRule("beta_v", False, _beta_v_fwd),
    RewriteRule("let_v", True, _let_v_fwd, _let_v_rev, needs_args=("rev",)),
    RewriteRule("let_id", True, _let_id_fwd, _let_id_rev),
    RewriteRule("delta_fold", False, _delta_fold_fwd),
    RewriteRule("assoc", True, _assoc_fwd, _assoc_rev),
    RewriteRule("commut", True, _commut, _commut),
    RewriteRule("let_S", True, _let_s_fwd, _let_s_rev, needs_args=("rev",)),
    RewriteRule("factor_merge", False, _factor_merge_fwd),
    RewriteRule("normalpdf_shift", True, _normalpdf_shift_fwd, _normalpdf_shift_rev),
    RewriteRule("arith", True, _arith_fwd, _arith_rev),
    RewriteRule("conjugacy_normal", False, _conjugacy_fwd),
    RewriteRule("dist_invcdf", True, _dist_invcdf_fwd, _dist_invcdf_rev),
]

RULES: dict[str, RewriteRule] = {r.name: r for r in _RULES}


def rules() -> list[RewriteRule]:
    """The equivalence catalog."""
    return list(_RULES)


def apply_rule(e: Expr, rule, direction: str = "fwd", focus: Focus = (),
               args: Optional[dict] = None) -> Expr:
    """Rewrite the subterm of `e` at `focus`; raises NotApplicable."""
    if isinstance(rule, str):
        if rule not in RULES:
            raise NotApplicable(f"unknown rule {rule!r}")
        rule = RULES[rule]
    focus = tuple(focus)
    sub = get_sub(e, focus)
    ctx = _ctx_at(e, focus)
    new_sub = rule.apply(sub, ctx, direction, args)
    out = replace_sub(e, focus, new_sub)
    if not free_vars(out) <= free_vars(e):
        raise NotApplicable(f"{rule.name}: rewrite enlarged the free-variable set")
    return out


def applicable(e: Expr) -> list[tuple[str, str, Focus]]:
    """All (rule, direction, focus) triples that apply to `e`, excluding
    reverse directions that need explicit arguments."""
    found = []
    for focus, _sub in subterm_paths(e):
        for r in _RULES:
            for direction in ("fwd", "rev") if r.bidirectional else ("fwd",):
                if direction in r.needs_args:
                    continue
                try:
                    apply_rule(e, r, direction, focus)
                except NotApplicable:
                    continue
                found.append((r.name, direction, focus))
    return found


# ---------------------------------------------------------------------------
# Scripts


@dataclass(frozen=True)
class Step:
    rule: str
    dir: str
    focus: Focus
    args: Optional[dict] = None

    def to_json(self) -> dict:
        out = {"rule": self.rule, "dir": self.dir, "focus": list(self.focus)}
        if self.args:
            a = dict(self.args)
            if "value" in a and not isinstance(a["value"], str):
                a["value"] = unparse(a["value"])
            if "hole" in a:
                a["hole"] = list(a["hole"])
            out["args"] = a
        return out

    @staticmethod
    def from_json(d: dict) -> "Step":
        args = d.get("args")
        if args and "hole" in args:
            args = {**args, "hole": tuple(args["hole"])}
        return Step(d["rule"], d.get("dir", "fwd"), tuple(d["focus"]), args)


RewriteScript = list


def script_to_json(script: list[Step]) -> str:
    return json.dumps([s.to_json() for s in script], indent=1)


def script_from_json(text: str) -> list[Step]:
    return [Step.from_json(d) for d in json.loads(text)]


class ScriptError(Exception):
    def __init__(self, index: int, step: Step, reason: str):
        super().__init__(f"step {index} ({step.rule} {step.dir} at "
                         f"{list(step.focus)}): {reason}")
        self.index = index
        self.step = step


def run_script(e: Expr, script: list[Step]) -> Expr:
    """Fold apply_rule over the script, failing fast with the step index."""
    v = scope_check(free_vars(e), e, "L")
    if v is not None:
        raise ValueError(f"subject does not scope-check: {v}")
    for i, s in enumerate(script):
        try:
            e = apply_rule(e, s.rule, s.dir, s.focus, s.args)
        except NotApplicable as ex:
            raise ScriptError(i, s, str(ex)) from ex
    return e
