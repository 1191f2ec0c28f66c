"""Big-step evaluator and the executable agreement check against the machine.

The evaluator follows the natural-deduction rules directly: values return
themselves with weight one, application and conditionals recur on the same
entropy, and let splits it, evaluating the right-hand side under the left
half and the substituted body under the right half, multiplying weights
(adding logs in evaluation order: rhs first, then body).

Fuel counts rule applications, not machine steps. Derivation depth is also
capped so that divergent self-application exhausts fuel instead of blowing
the Python stack; agreement checks only require co-termination under
generous budgets.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

from .entropy import Entropy, Seed, TAG_LEFT, TAG_RIGHT, TAG_UNIFORM, derive, root
from .machine import (
    APPLIED_NON_LAMBDA, DIST_UNSUPPORTED, FACTOR_NON_POSITIVE,
    FACTOR_ON_CLOSURE, IF_ON_CLOSURE, OP_UNDEFINED, delta, run_to_value,
)
from .syntax import (
    Expr, Value,
    T_VAR, T_LET, T_OP, T_IF, T_SAMPLE, T_FACTOR, T_APP, T_LAM, T_REAL, T_DIST,
    alpha_eq, subst,
)

_INV_2_53 = 1.1102230246251565e-16

MAX_DEPTH = 800


@dataclass(frozen=True)
class BigResult:
    status: str  # "ok" | "stuck" | "fuel"
    value: Optional[Value]
    logw: float
    rules: int
    reason: Optional[str] = None


class _Out:
    __slots__ = ("fuel",)

    def __init__(self, fuel: int):
        self.fuel = fuel


class _Halted(Exception):
    def __init__(self, status, reason=None):
        self.status = status
        self.reason = reason


def bigeval(sigma: Entropy, e: Expr, fuel: int) -> BigResult:
    """Evaluate closed `e` under entropy `sigma`; fuel in rule applications."""
    out = _Out(fuel)
    try:
        v, logw = _eval(sigma, e, out, 0)
    except _Halted as h:
        return BigResult(h.status, None, 0.0, fuel - out.fuel, h.reason)
    except RecursionError:
        return BigResult("fuel", None, 0.0, fuel - out.fuel)
    return BigResult("ok", v, logw, fuel - out.fuel)


def _eval(sigma, e, out, depth):
    if out.fuel <= 0 or depth > MAX_DEPTH:
        raise _Halted("fuel")
    out.fuel -= 1
    tag = e[0]
    if tag == T_LAM or tag == T_REAL:
        return e, 0.0
    if tag == T_LET:
        v1, w1 = _eval(derive(sigma, TAG_LEFT) if type(sigma) is not tuple else sigma[0],
                       e[2], out, depth + 1)
        sr = sigma[1] if type(sigma) is tuple else derive(sigma, TAG_RIGHT)
        v2, w2 = _eval(sr, subst(e[3], e[1], v1), out, depth + 1)
        return v2, w1 + w2
    if tag == T_APP:
        fn = e[1]
        if fn[0] != T_LAM:
            raise _Halted("stuck", APPLIED_NON_LAMBDA)
        return _eval(sigma, subst(fn[2], fn[1], e[2]), out, depth + 1)
    if tag == T_SAMPLE:
        sl = sigma[0] if type(sigma) is tuple else derive(sigma, TAG_LEFT)
        while type(sl) is tuple:
            sl = sl[0]
        u = ((derive(sl, TAG_UNIFORM) >> 11) & 0x1FFFFFFFFFFFFF) * _INV_2_53
        return (T_REAL, u), 0.0
    if tag == T_OP:
        v = delta(e[1], e[2])
        if v is None:
            raise _Halted("stuck", OP_UNDEFINED)
        return v, 0.0
    if tag == T_IF:
        cond = e[1]
        if cond[0] != T_REAL:
            raise _Halted("stuck", IF_ON_CLOSURE)
        return _eval(sigma, e[2] if cond[1] > 0.0 else e[3], out, depth + 1)
    if tag == T_FACTOR:
        v = e[1]
        if v[0] != T_REAL:
            raise _Halted("stuck", FACTOR_ON_CLOSURE)
        if v[1] <= 0.0:
            raise _Halted("stuck", FACTOR_NON_POSITIVE)
        return v, math.log(v[1])
    if tag == T_VAR:
        raise ValueError(f"open expression: {e[1]}")
    if tag == T_DIST:
        raise _Halted("stuck", DIST_UNSUPPORTED)
    raise ValueError(f"bad node tag {tag}")


@dataclass(frozen=True)
class AgreementReport:
    agreed: bool
    big: BigResult
    small: Optional[tuple]  # (n, value, logw) or None
    detail: str


LOGW_RTOL = 1e-9


def _logw_close(a: float, b: float) -> bool:
    return abs(a - b) <= LOGW_RTOL * max(1.0, abs(a), abs(b))


def check_agreement(seed: Seed, e: Expr, fuel: int) -> AgreementReport:
    """Run both semantics from the same entropy root and compare outcomes.

    Agreement means: both terminate with alpha-equal values and logw within
    1e-9 relative, or neither terminates normally within fuel. The final
    entropy is intentionally ignored.
    """
    sigma = root(seed)
    big = bigeval(sigma, e, fuel)
    small = run_to_value(sigma, e, None, root(derive(seed, 0x5EED)), fuel)
    if big.status == "ok" and small is not None:
        _, v, logw = small
        if not alpha_eq(big.value, v):
            return AgreementReport(False, big, small, "values differ")
        if not _logw_close(big.logw, logw):
            return AgreementReport(False, big, small, "log-weights differ")
        return AgreementReport(True, big, small, "both terminated, agree")
    if big.status != "ok" and small is None:
        return AgreementReport(True, big, small, f"neither terminated ({big.status})")
    return AgreementReport(False, big, small, "one semantics terminated, other did not")
