"""Sequenced-entropy semantics, the direct-style machine, and translation.

Here randomness is a finite sequence ("trace") of reals consumed left to
right; a run counts only if it exhausts its trace exactly. Two modes share
the machinery:

* replay: a finite trace is supplied up front; `sample` consumes the head
  (stuck on an empty trace or a head outside [0,1]), and a distribution
  form consumes the head and multiplies the weight by its density there.
  Evaluation totalizes to 0 on leftover trace elements.
* lazy: trace elements are drawn on demand from a seed-derived stream, so
  a run exhausts exactly what it consumed and the weighted result is an
  unbiased draw for the sequenced program measure. Distribution forms draw
  through their own inverse cdf, which cancels the density weight.

The direct-style language evaluates by context decomposition; `translate`
maps it into the let-normal language, and `check_simulation` verifies that
evaluation commutes with the translation on given traces.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

from .entropy import Seed, derive
from .machine import (
    APPLIED_NON_LAMBDA, FACTOR_NON_POSITIVE, FACTOR_ON_CLOSURE, IF_ON_CLOSURE,
    OP_UNDEFINED, delta, normal_invcdf, normal_pdf,
)
from .measure import MeasureEstimate, RealSet, aggregate
from .syntax import (
    Cont, DExpr, Expr,
    T_LAM, T_REAL, T_VAR, T_APP, T_LET, T_OP, T_IF, T_SAMPLE, T_FACTOR, T_DIST,
    all_names, fresh, is_value, subst,
)

TRACE_EXHAUSTED = "trace-exhausted"
TRACE_OUT_OF_RANGE = "trace-element-out-of-range"
DIST_BAD_PARAMS = "dist-bad-params"
DECOMPOSE_FAILED = "stuck-redex"

_INV_2_53 = 1.1102230246251565e-16


class _Replay:
    """Finite trace; consumption tracked by index."""

    __slots__ = ("items", "pos")

    def __init__(self, items: Sequence[float]):
        self.items = list(items)
        self.pos = 0

    def next_uniform(self):
        if self.pos >= len(self.items):
            return None
        r = self.items[self.pos]
        if not 0.0 <= r <= 1.0:
            return False
        self.pos += 1
        return r

    def next_dist(self, name, params):
        # normal only: consume head r, weight by its density.
        if self.pos >= len(self.items):
            return None
        r = self.items[self.pos]
        d = normal_pdf(r, params[0], params[1])
        if d is None or d <= 0.0:
            return False
        self.pos += 1
        return r, math.log(d)

    def exhausted(self):
        return self.pos == len(self.items)


class _Lazy:
    """Seed-derived stream; records what it hands out."""

    __slots__ = ("seed", "count", "recorded")

    def __init__(self, seed: Seed):
        self.seed = seed
        self.count = 0
        self.recorded: list[float] = []

    def _u(self) -> float:
        u = ((derive(self.seed, self.count) >> 11) & 0x1FFFFFFFFFFFFF) * _INV_2_53
        self.count += 1
        return u

    def next_uniform(self):
        r = self._u()
        self.recorded.append(r)
        return r

    def next_dist(self, name, params):
        m, s = params
        if s <= 0.0:
            return False
        u = self._u()
        r = normal_invcdf(u, m, s)
        if r is None:
            return False
        self.recorded.append(r)
        # proposal density equals the rule's density weight: net zero.
        return r, 0.0

    def exhausted(self):
        return True


class SeqConfig(NamedTuple):
    trace: tuple
    expr: Expr
    cont: Cont
    logw: float


@dataclass(frozen=True)
class SeqResult:
    status: str  # "final" | "stuck" | "fuel"
    value: Optional[tuple]
    logw: float
    steps: int
    exhausted: bool
    reason: Optional[str] = None


def seq_step(c: SeqConfig):
    """One sequenced-machine step on a replay trace; returns a SeqConfig or
    a stuck reason string. Precondition: c is not final."""
    trace, e, k, logw = c
    tag = e[0]
    if tag <= T_VAR:
        x, body, rest = k
        return SeqConfig(trace, subst(body, x, e), rest, logw)
    if tag == T_LET:
        return SeqConfig(trace, e[2], (e[1], e[3], k), logw)
    if tag == T_SAMPLE:
        if not trace:
            return TRACE_EXHAUSTED
        r = trace[0]
        if not 0.0 <= r <= 1.0:
            return TRACE_OUT_OF_RANGE
        return SeqConfig(trace[1:], (T_REAL, r), k, logw)
    if tag == T_OP:
        v = delta(e[1], e[2])
        if v is None:
            return OP_UNDEFINED
        return SeqConfig(trace, v, k, logw)
    if tag == T_APP:
        fn = e[1]
        if fn[0] != T_LAM:
            return APPLIED_NON_LAMBDA
        return SeqConfig(trace, subst(fn[2], fn[1], e[2]), k, logw)
    if tag == T_IF:
        cond = e[1]
        if cond[0] != T_REAL:
            return IF_ON_CLOSURE
        return SeqConfig(trace, e[2] if cond[1] > 0.0 else e[3], k, logw)
    if tag == T_FACTOR:
        v = e[1]
        if v[0] != T_REAL:
            return FACTOR_ON_CLOSURE
        if v[1] <= 0.0:
            return FACTOR_NON_POSITIVE
        return SeqConfig(trace, v, k, logw + math.log(v[1]))
    if tag == T_DIST:
        if any(a[0] != T_REAL for a in e[2]):
            return DIST_BAD_PARAMS
        if not trace:
            return TRACE_EXHAUSTED
        r = trace[0]
        d = normal_pdf(r, e[2][0][1], e[2][1][1])
        if d is None or d <= 0.0:
            return DIST_BAD_PARAMS
        return SeqConfig(trace[1:], (T_REAL, r), k, logw + math.log(d))
    raise ValueError(f"bad node tag {tag}")


def _seq_run(src, e: Expr, k: Cont, fuel: int, logw: float = 0.0) -> SeqResult:
    steps = 0
    log = math.log
    _subst = subst
    while True:
        tag = e[0]
        if tag <= T_VAR:
            if k is None:
                return SeqResult("final", e, logw, steps, src.exhausted())
            if steps >= fuel:
                return SeqResult("fuel", None, logw, steps, False)
            steps += 1
            x, body, k = k
            e = _subst(body, x, e)
        else:
            if steps >= fuel:
                return SeqResult("fuel", None, logw, steps, False)
            steps += 1
            if tag == T_LET:
                k = (e[1], e[3], k)
                e = e[2]
            elif tag == T_SAMPLE:
                r = src.next_uniform()
                if r is None:
                    return SeqResult("stuck", None, logw, steps, False, TRACE_EXHAUSTED)
                if r is False:
                    return SeqResult("stuck", None, logw, steps, False, TRACE_OUT_OF_RANGE)
                e = (T_REAL, r)
            elif tag == T_OP:
                v = delta(e[1], e[2])
                if v is None:
                    return SeqResult("stuck", None, logw, steps, False, OP_UNDEFINED)
                e = v
            elif tag == T_APP:
                fn = e[1]
                if fn[0] != T_LAM:
                    return SeqResult("stuck", None, logw, steps, False, APPLIED_NON_LAMBDA)
                e = _subst(fn[2], fn[1], e[2])
            elif tag == T_IF:
                cond = e[1]
                if cond[0] != T_REAL:
                    return SeqResult("stuck", None, logw, steps, False, IF_ON_CLOSURE)
                e = e[2] if cond[1] > 0.0 else e[3]
            elif tag == T_FACTOR:
                v = e[1]
                if v[0] != T_REAL:
                    return SeqResult("stuck", None, logw, steps, False, FACTOR_ON_CLOSURE)
                if v[1] <= 0.0:
                    return SeqResult("stuck", None, logw, steps, False, FACTOR_NON_POSITIVE)
                logw += log(v[1])
                e = v
            elif tag == T_DIST:
                params = []
                ok = True
                for a in e[2]:
                    if a[0] != T_REAL:
                        ok = False
                        break
                    params.append(a[1])
                if not ok:
                    return SeqResult("stuck", None, logw, steps, False, DIST_BAD_PARAMS)
                got = src.next_dist(e[1], params)
                if got is None:
                    return SeqResult("stuck", None, logw, steps, False, TRACE_EXHAUSTED)
                if got is False:
                    return SeqResult("stuck", None, logw, steps, False, DIST_BAD_PARAMS)
                r, dlw = got
                logw += dlw
                e = (T_REAL, r)
            else:
                raise ValueError(f"bad node tag {tag}")


def seq_eval(trace: Sequence[float], e: Expr, k: Cont, A, fuel: int) -> float:
    """Sequenced evaluation, totalized: the weight if the run halts with a
    real in `A` AND exhausts the trace exactly, else 0."""
    out = _seq_run(_Replay(trace), e, k, fuel)
    if (out.status == "final" and out.exhausted
            and out.value[0] == T_REAL and A.contains(out.value[1])):
        return math.exp(out.logw)
    return 0.0


def seq_sample(e: Expr, k: Cont, seed: Seed, fuel: int):
    """Lazy-mode weighted draw for the sequenced measure.

    Returns (result, logw, recorded trace, steps) with result as in
    measure.WeightedSample."""
    src = _Lazy(seed)
    out = _seq_run(src, e, k, fuel)
    if out.status == "final":
        v = out.value
        result = ("real", v[1]) if v[0] == T_REAL else ("nonreal",)
    elif out.status == "stuck":
        result = ("stuck", out.reason)
    else:
        result = ("diverged",)
    return result, out.logw, src.recorded, out.steps


def seq_estimate(e: Expr, k: Cont, bins: Sequence[RealSet], n: int, seed: Seed,
                 fuel: int) -> MeasureEstimate:
    """Monte-Carlo estimate of the sequenced measure via lazy draws."""

    def draws():
        for i in range(n):
            src = _Lazy(derive(seed, i))
            out = _seq_run(src, e, k, fuel)
            if out.status == "final":
                v = out.value
                if v[0] == T_REAL:
                    yield 0, v[1], out.logw
                else:
                    yield 1, 0.0, out.logw
            elif out.status == "stuck":
                yield 2, 0.0, 0.0
            else:
                yield 3, 0.0, 0.0

    return aggregate(draws(), bins, n)


# ---------------------------------------------------------------------------
# Direct-style machine


class DConfig(NamedTuple):
    trace: tuple
    expr: DExpr
    logw: float


@dataclass(frozen=True)
class DResult:
    status: str
    value: Optional[tuple]
    logw: float
    steps: int
    exhausted: bool
    reason: Optional[str] = None


def _d_reduce(e: DExpr, src, state: list):
    """Contract the leftmost-innermost redex of `e`; None if `e` is stuck.

    state[0] accumulates the log-weight. Decomposition recomputes the
    context functionally on every step.
    """
    tag = e[0]
    if tag <= T_VAR:
        return None
    if tag == T_LET:
        if is_value(e[2]):
            return subst(e[3], e[1], e[2])
        inner = _d_reduce(e[2], src, state)
        if inner is None or isinstance(inner, str):
            return inner
        return (T_LET, e[1], inner, e[3])
    if tag == T_APP:
        fn, arg = e[1], e[2]
        if not is_value(fn):
            inner = _d_reduce(fn, src, state)
            if inner is None or isinstance(inner, str):
                return inner
            return (T_APP, inner, arg)
        if not is_value(arg):
            inner = _d_reduce(arg, src, state)
            if inner is None or isinstance(inner, str):
                return inner
            return (T_APP, fn, inner)
        if fn[0] != T_LAM:
            return APPLIED_NON_LAMBDA
        return subst(fn[2], fn[1], arg)
    if tag == T_OP:
        args = e[2]
        for i, a in enumerate(args):
            if not is_value(a):
                inner = _d_reduce(a, src, state)
                if inner is None or isinstance(inner, str):
                    return inner
                return (T_OP, e[1], args[:i] + (inner,) + args[i + 1:])
        v = delta(e[1], args)
        if v is None:
            return OP_UNDEFINED
        return v
    if tag == T_IF:
        cond = e[1]
        if not is_value(cond):
            inner = _d_reduce(cond, src, state)
            if inner is None or isinstance(inner, str):
                return inner
            return (T_IF, inner, e[2], e[3])
        if cond[0] != T_REAL:
            return IF_ON_CLOSURE
        return e[2] if cond[1] > 0.0 else e[3]
    if tag == T_SAMPLE:
        r = src.next_uniform()
        if r is None:
            return TRACE_EXHAUSTED
        if r is False:
            return TRACE_OUT_OF_RANGE
        return (T_REAL, r)
    if tag == T_FACTOR:
        arg = e[1]
        if not is_value(arg):
            inner = _d_reduce(arg, src, state)
            if inner is None or isinstance(inner, str):
                return inner
            return (T_FACTOR, inner)
        if arg[0] != T_REAL:
            return FACTOR_ON_CLOSURE
        if arg[1] <= 0.0:
            return FACTOR_NON_POSITIVE
        state[0] += math.log(arg[1])
        return arg
    raise ValueError(f"bad node tag {tag}")


def _d_run(src, e: DExpr, fuel: int, logw: float = 0.0) -> DResult:
    state = [logw]
    steps = 0
    while not is_value(e):
        if steps >= fuel:
            return DResult("fuel", None, state[0], steps, False)
        steps += 1
        nxt = _d_reduce(e, src, state)
        if nxt is None:
            return DResult("stuck", None, state[0], steps, False, DECOMPOSE_FAILED)
        if isinstance(nxt, str):
            return DResult("stuck", None, state[0], steps, False, nxt)
        e = nxt
    return DResult("final", e, state[0], steps, src.exhausted())


def d_step(c: DConfig):
    """One direct-style step; returns a DConfig or a stuck reason string."""
    src = _Replay(list(c.trace))
    state = [c.logw]
    nxt = _d_reduce(c.expr, src, state)
    if nxt is None:
        return DECOMPOSE_FAILED
    if isinstance(nxt, str):
        return nxt
    return DConfig(tuple(c.trace[src.pos:]), nxt, state[0])


def d_eval(trace: Sequence[float], e: DExpr, A, fuel: int) -> float:
    """Direct-style evaluation, totalized as seq_eval."""
    out = _d_run(_Replay(trace), e, fuel)
    if (out.status == "final" and out.exhausted
            and out.value[0] == T_REAL and A.contains(out.value[1])):
        return math.exp(out.logw)
    return 0.0


def d_sample(e: DExpr, seed: Seed, fuel: int):
    """Lazy-mode run of the direct machine; returns (DResult, recorded trace)."""
    src = _Lazy(seed)
    out = _d_run(src, e, fuel)
    return out, src.recorded


# ---------------------------------------------------------------------------
# Translation to the let-normal language


def translate(e: DExpr) -> Expr:
    """Structurally recursive let-normalization of a direct-style term."""
    ctr = [0]
    avoid = all_names(e)
    return _tr(e, avoid, ctr)


def _fresh_tr(avoid: set, ctr: list, hint: str) -> str:
    ctr[0] += 1
    name = fresh(avoid, f"{hint}{ctr[0]}")
    avoid.add(name)
    return name


def _tr(e, avoid, ctr):
    tag = e[0]
    if tag == T_VAR or tag == T_REAL or tag == T_SAMPLE:
        return e
    if tag == T_LAM:
        return (T_LAM, e[1], _tr(e[2], avoid, ctr))
    if tag == T_LET:
        return (T_LET, e[1], _tr(e[2], avoid, ctr), _tr(e[3], avoid, ctr))
    if tag == T_APP:
        x1 = _fresh_tr(avoid, ctr, "f")
        x2 = _fresh_tr(avoid, ctr, "a")
        return (T_LET, x1, _tr(e[1], avoid, ctr),
                (T_LET, x2, _tr(e[2], avoid, ctr),
                 (T_APP, (T_VAR, x1), (T_VAR, x2))))
    if tag == T_OP or tag == T_DIST:
        names = [_fresh_tr(avoid, ctr, "o") for _ in e[2]]
        inner = (tag, e[1], tuple((T_VAR, x) for x in names))
        for x, a in reversed(list(zip(names, e[2]))):
            inner = (T_LET, x, _tr(a, avoid, ctr), inner)
        return inner
    if tag == T_IF:
        c = _fresh_tr(avoid, ctr, "c")
        return (T_LET, c, _tr(e[1], avoid, ctr),
                (T_IF, (T_VAR, c), _tr(e[2], avoid, ctr), _tr(e[3], avoid, ctr)))
    if tag == T_FACTOR:
        x = _fresh_tr(avoid, ctr, "w")
        return (T_LET, x, _tr(e[1], avoid, ctr), (T_FACTOR, (T_VAR, x)))
    raise ValueError(f"bad node tag {tag}")


@dataclass(frozen=True)
class SimulationReport:
    ok: bool
    d_weight: float
    seq_weight: float
    detail: str


def check_simulation(e: DExpr, trace: Sequence[float], A, fuel: int) -> SimulationReport:
    """Compare direct-style evaluation against sequenced evaluation of the
    translation on the same trace."""
    dw = d_eval(trace, e, A, fuel)
    sw = seq_eval(trace, translate(e), None, A, fuel)
    if dw == sw == 0.0:
        return SimulationReport(True, dw, sw, "both zero")
    rel = abs(math.log(dw) - math.log(sw)) if dw > 0 and sw > 0 else math.inf
    if rel <= 1e-9:
        return SimulationReport(True, dw, sw, "weights agree")
    return SimulationReport(False, dw, sw, f"weights differ: {dw} vs {sw}")
