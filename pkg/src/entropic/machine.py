"""The small-step abstract machine over split entropy.

Configurations are five-tuples (sigma, expr, cont, tau, logw): the current
entropy, a closed expression, a continuation, the entropy stack encoded as
an entropy value, and the natural log of the positive run weight. Weights
accumulate in log space so long factor chains cannot underflow; `eval`
exponentiates at the boundary.

`step` exposes single rule applications for tests and trace dumps; `run`
iterates the same rules in a tight loop. `run_to_value` stops at the first
configuration whose expression is a value at the original continuation
depth, which is the interpolation point: the step count, value and weight
it reports are independent of the surrounding continuation and stack.
"""

from __future__ import annotations

import math
from statistics import NormalDist
from dataclasses import dataclass
from typing import NamedTuple, Optional, Union

from .entropy import Entropy, TAG_LEFT, TAG_RIGHT, TAG_UNIFORM, derive
from .syntax import (
    Cont, Expr, Value,
    T_LAM, T_REAL, T_VAR, T_APP, T_LET, T_OP, T_IF, T_SAMPLE, T_FACTOR, T_DIST,
    OPS, subst,
)

# Stuck reasons
APPLIED_NON_LAMBDA = "applied-non-lambda"
OP_UNDEFINED = "op-undefined"
IF_ON_CLOSURE = "if-on-closure"
FACTOR_NON_POSITIVE = "factor-non-positive"
FACTOR_ON_CLOSURE = "factor-on-closure"
DIST_UNSUPPORTED = "dist-unsupported"

_INV_2_53 = 1.1102230246251565e-16
_SQRT2 = math.sqrt(2.0)
_INV_SQRT_2PI = 1.0 / math.sqrt(2.0 * math.pi)
_STD_NORMAL = NormalDist()

OP_LOG = OPS["log"].code
OP_EXP = OPS["exp"].code
OP_REALP = OPS["real?"].code
OP_ADD = OPS["+"].code
OP_SUB = OPS["-"].code
OP_MUL = OPS["*"].code
OP_DIV = OPS["/"].code
OP_LT = OPS["<"].code
OP_LE = OPS["<="].code
OP_NORMALINVCDF = OPS["normalinvcdf"].code
OP_NORMALPDF = OPS["normalpdf"].code
OP_NORMALCDF = OPS["normalcdf"].code


def normal_pdf(x: float, m: float, s: float) -> Optional[float]:
    if s <= 0.0:
        return None
    z = (x - m) / s
    try:
        return _INV_SQRT_2PI * math.exp(-0.5 * z * z) / s
    except OverflowError:
        return None


def normal_cdf(x: float, m: float, s: float) -> Optional[float]:
    if s <= 0.0:
        return None
    return 0.5 * math.erfc(-(x - m) / (s * _SQRT2))


def normal_invcdf(u: float, m: float, s: float) -> Optional[float]:
    """Quantile of N(m, s^2); Wichura-class rational approximation with one
    Newton polish step against the cdf. Undefined outside 0 < u < 1."""
    if not 0.0 < u < 1.0 or s <= 0.0:
        return None
    z = _STD_NORMAL.inv_cdf(u)
    d = _INV_SQRT_2PI * math.exp(-0.5 * z * z)
    if d > 1e-280:
        z -= (0.5 * math.erfc(-z / _SQRT2) - u) / d
    return m + s * z


def delta(code: int, args: tuple) -> Optional[Value]:
    """Interpret a primitive operation; None when undefined.

    Undefined on closure arguments (except real?), on math-domain
    violations, and whenever the float result is NaN or infinite.
    """
    if code == OP_REALP:
        return (T_REAL, 1.0 if args[0][0] == T_REAL else 0.0)
    for a in args:
        if a[0] != T_REAL:
            return None
    if code == OP_ADD:
        r = args[0][1] + args[1][1]
    elif code == OP_SUB:
        r = args[0][1] - args[1][1]
    elif code == OP_MUL:
        r = args[0][1] * args[1][1]
    elif code == OP_DIV:
        b = args[1][1]
        if b == 0.0:
            return None
        r = args[0][1] / b
    elif code == OP_LT:
        r = 1.0 if args[0][1] < args[1][1] else 0.0
    elif code == OP_LE:
        r = 1.0 if args[0][1] <= args[1][1] else 0.0
    elif code == OP_LOG:
        x = args[0][1]
        if x <= 0.0:
            return None
        r = math.log(x)
    elif code == OP_EXP:
        try:
            r = math.exp(args[0][1])
        except OverflowError:
            return None
    elif code == OP_NORMALPDF:
        r = normal_pdf(args[0][1], args[1][1], args[2][1])
    elif code == OP_NORMALCDF:
        r = normal_cdf(args[0][1], args[1][1], args[2][1])
    elif code == OP_NORMALINVCDF:
        r = normal_invcdf(args[0][1], args[1][1], args[2][1])
    else:
        raise ValueError(f"unknown op code {code}")
    if r is None or r != r or r == math.inf or r == -math.inf:
        return None
    return (T_REAL, r)


class Config(NamedTuple):
    sigma: Entropy
    expr: Expr
    cont: Cont
    tau: Entropy
    logw: float


@dataclass(frozen=True)
class Stepped:
    config: Config


@dataclass(frozen=True)
class Stuck:
    reason: str


StepOutcome = Union[Stepped, Stuck]


def is_final(c: Config) -> bool:
    return c.expr[0] <= T_VAR and c.cont is None


def step(c: Config) -> StepOutcome:
    """One rule of the small-step semantics; precondition: c is not final."""
    sigma, e, k, tau, logw = c
    tag = e[0]
    if tag <= T_VAR:
        x, body, rest = k
        if type(tau) is tuple:
            s2, t2 = tau
        else:
            s2, t2 = derive(tau, TAG_LEFT), derive(tau, TAG_RIGHT)
        return Stepped(Config(s2, subst(body, x, e), rest, t2, logw))
    if tag == T_LET:
        if type(sigma) is tuple:
            sl, sr = sigma
        else:
            sl, sr = derive(sigma, TAG_LEFT), derive(sigma, TAG_RIGHT)
        return Stepped(Config(sl, e[2], (e[1], e[3], k), (sr, tau), logw))
    if tag == T_APP:
        fn = e[1]
        if fn[0] != T_LAM:
            return Stuck(APPLIED_NON_LAMBDA)
        return Stepped(Config(sigma, subst(fn[2], fn[1], e[2]), k, tau, logw))
    if tag == T_SAMPLE:
        if type(sigma) is tuple:
            sl, sr = sigma
        else:
            sl, sr = derive(sigma, TAG_LEFT), derive(sigma, TAG_RIGHT)
        while type(sl) is tuple:
            sl = sl[0]
        u = ((derive(sl, TAG_UNIFORM) >> 11) & ((1 << 53) - 1)) * _INV_2_53
        return Stepped(Config(sr, (T_REAL, u), k, tau, logw))
    if tag == T_OP:
        v = delta(e[1], e[2])
        if v is None:
            return Stuck(OP_UNDEFINED)
        return Stepped(Config(sigma, v, k, tau, logw))
    if tag == T_IF:
        cond = e[1]
        if cond[0] != T_REAL:
            return Stuck(IF_ON_CLOSURE)
        return Stepped(Config(sigma, e[2] if cond[1] > 0.0 else e[3], k, tau, logw))
    if tag == T_FACTOR:
        v = e[1]
        if v[0] != T_REAL:
            return Stuck(FACTOR_ON_CLOSURE)
        if v[1] <= 0.0:
            return Stuck(FACTOR_NON_POSITIVE)
        return Stepped(Config(sigma, v, k, tau, logw + math.log(v[1])))
    if tag == T_DIST:
        return Stuck(DIST_UNSUPPORTED)
    raise ValueError(f"bad node tag {tag}")


@dataclass(frozen=True)
class RunResult:
    status: str  # "final" | "stuck" | "fuel"
    value: Optional[Value]
    logw: float
    steps: int
    reason: Optional[str] = None


def run(sigma: Entropy, e: Expr, k: Cont, tau: Entropy, fuel: int,
        logw: float = 0.0) -> RunResult:
    """Iterate the machine at most `fuel` steps from (sigma, e, k, tau, logw)."""
    _derive = derive
    _subst = subst
    log = math.log
    steps = 0
    while True:
        tag = e[0]
        if tag <= T_VAR:
            if k is None:
                return RunResult("final", e, logw, steps)
            if steps >= fuel:
                return RunResult("fuel", None, logw, steps)
            steps += 1
            x, body, k = k
            if type(tau) is tuple:
                sigma, tau = tau
            else:
                sigma, tau = _derive(tau, TAG_LEFT), _derive(tau, TAG_RIGHT)
            e = _subst(body, x, e)
            continue
        if steps >= fuel:
            return RunResult("fuel", None, logw, steps)
        steps += 1
        if tag == T_LET:
            if type(sigma) is tuple:
                sl, sr = sigma
            else:
                sl, sr = _derive(sigma, TAG_LEFT), _derive(sigma, TAG_RIGHT)
            k = (e[1], e[3], k)
            tau = (sr, tau)
            sigma = sl
            e = e[2]
        elif tag == T_SAMPLE:
            if type(sigma) is tuple:
                sl, sigma = sigma
            else:
                sl, sigma = _derive(sigma, TAG_LEFT), _derive(sigma, TAG_RIGHT)
            while type(sl) is tuple:
                sl = sl[0]
            e = (T_REAL, ((_derive(sl, TAG_UNIFORM) >> 11) & 0x1FFFFFFFFFFFFF) * _INV_2_53)
        elif tag == T_OP:
            v = delta(e[1], e[2])
            if v is None:
                return RunResult("stuck", None, logw, steps, OP_UNDEFINED)
            e = v
        elif tag == T_APP:
            fn = e[1]
            if fn[0] != T_LAM:
                return RunResult("stuck", None, logw, steps, APPLIED_NON_LAMBDA)
            e = _subst(fn[2], fn[1], e[2])
        elif tag == T_IF:
            cond = e[1]
            if cond[0] != T_REAL:
                return RunResult("stuck", None, logw, steps, IF_ON_CLOSURE)
            e = e[2] if cond[1] > 0.0 else e[3]
        elif tag == T_FACTOR:
            v = e[1]
            if v[0] != T_REAL:
                return RunResult("stuck", None, logw, steps, FACTOR_ON_CLOSURE)
            if v[1] <= 0.0:
                return RunResult("stuck", None, logw, steps, FACTOR_NON_POSITIVE)
            logw += log(v[1])
            e = v
        elif tag == T_DIST:
            return RunResult("stuck", None, logw, steps, DIST_UNSUPPORTED)
        else:
            raise ValueError(f"bad node tag {tag}")


def eval_weight(sigma: Entropy, e: Expr, k: Cont, tau: Entropy, logw: float,
                A, fuel: int) -> float:
    """The paper-style evaluation function, totalized to 0.

    Returns exp(final logw) when the run halts with a real in `A` within
    `fuel` steps; 0 on non-real results, stuckness, or fuel exhaustion.
    `A` is a RealSet (anything with a `contains` method).
    """
    r = run(sigma, e, k, tau, fuel, logw)
    if r.status == "final" and r.value[0] == T_REAL and A.contains(r.value[1]):
        return math.exp(r.logw)
    return 0.0


def run_to_value(sigma: Entropy, e: Expr, k: Cont, tau: Entropy,
                 fuel: int) -> Optional[tuple[int, Value, float]]:
    """Smallest n with (sigma,e,k,tau,1) ->^n (s',v,k,tau,w'), plus v and log w'.

    Returns None if no such n <= fuel (stuck or out of fuel first). The
    result is independent of k and tau, which are tracked only for fidelity.
    """
    depth = 0
    logw = 0.0
    steps = 0
    while True:
        tag = e[0]
        if tag <= T_VAR and depth == 0:
            return (steps, e, logw)
        if steps >= fuel:
            return None
        steps += 1
        if tag <= T_VAR:
            x, body, k = k
            if type(tau) is tuple:
                sigma, tau = tau
            else:
                sigma, tau = derive(tau, TAG_LEFT), derive(tau, TAG_RIGHT)
            e = subst(body, x, e)
            depth -= 1
        elif tag == T_LET:
            if type(sigma) is tuple:
                sl, sr = sigma
            else:
                sl, sr = derive(sigma, TAG_LEFT), derive(sigma, TAG_RIGHT)
            k = (e[1], e[3], k)
            tau = (sr, tau)
            sigma = sl
            e = e[2]
            depth += 1
        else:
            out = step(Config(sigma, e, k, tau, logw))
            if isinstance(out, Stuck):
                return None
            sigma, e, k, tau, logw = out.config


def trace_lines(sigma: Entropy, e: Expr, k: Cont, tau: Entropy, fuel: int):
    """Debug dump: one line per step, 'n: <head> | cont-depth | logw'."""
    from .syntax import _head_name

    c = Config(sigma, e, k, tau, 0.0)
    n = 0
    while True:
        depth = 0
        kk = c.cont
        while kk is not None:
            depth += 1
            kk = kk[2]
        yield f"{n}: {_head_name(c.expr)} | {depth} | {c.logw:.6g}"
        if is_final(c) or n >= fuel:
            return
        out = step(c)
        if isinstance(out, Stuck):
            yield f"{n + 1}: stuck({out.reason})"
            return
        c = out.config
        n += 1
