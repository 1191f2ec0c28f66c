"""Random well-scoped program generators for property testing.

Generation is biased toward programs that terminate with a real result:
operands prefer real literals and real-bound variables, applications
prefer literal lambdas, and factor arguments are wrapped in exp so they
are positive. A tunable slice of choices still produces closures in odd
positions, stuck operations, and nonterminating self-application, since
the semantics must agree on those too.

All generators are deterministic functions of a seed via random.Random.
"""

from __future__ import annotations

import random
from typing import Optional

from .syntax import (
    App, Dist, Expr, Factor, If, Lam, Let, Op, Real, SAMPLE, Value, Var,
    free_vars, scope_check,
)

_LITERALS = [0.0, 1.0, -1.0, 0.5, 2.0, -2.5, 3.0, 0.1]
_BIN_OPS = ["+", "-", "*", "/", "<", "<="]
_UN_OPS = ["log", "exp", "real?"]


class GenConfig:
    def __init__(self, max_depth: int = 4, allow_dist: bool = False,
                 wildness: float = 0.15):
        self.max_depth = max_depth
        self.allow_dist = allow_dist
        # probability of choosing an "untidy" alternative (closure operand,
        # raw factor argument, self-application fodder)
        self.wildness = wildness


def gen_value(rng: random.Random, env: list[str], depth: int,
              cfg: GenConfig) -> Value:
    roll = rng.random()
    if env and roll < 0.35:
        return Var(rng.choice(env))
    if depth > 0 and roll > 0.85:
        x = f"v{rng.randrange(1000)}"
        return Lam(x, gen_expr(rng, env + [x], depth - 1, cfg))
    return Real(rng.choice(_LITERALS))


def gen_expr(rng: random.Random, env: list[str], depth: int,
             cfg: GenConfig) -> Expr:
    if depth <= 0:
        return gen_value(rng, env, 0, cfg)
    c = rng.random()
    if c < 0.12:
        return SAMPLE
    if c < 0.24:
        return gen_value(rng, env, depth, cfg)
    if c < 0.50:
        x = f"x{rng.randrange(1000)}"
        return Let(x, gen_expr(rng, env, depth - 1, cfg),
                   gen_expr(rng, env + [x], depth - 1, cfg))
    if c < 0.66:
        op = rng.choice(_BIN_OPS)
        return Op(op, gen_value(rng, env, depth - 1, cfg),
                  gen_value(rng, env, depth - 1, cfg))
    if c < 0.72:
        op = rng.choice(_UN_OPS)
        return Op(op, gen_value(rng, env, depth - 1, cfg))
    if c < 0.80:
        return If(gen_value(rng, env, depth - 1, cfg),
                  gen_expr(rng, env, depth - 1, cfg),
                  gen_expr(rng, env, depth - 1, cfg))
    if c < 0.90:
        x = f"x{rng.randrange(1000)}"
        fn = Lam(x, gen_expr(rng, env + [x], depth - 1, cfg))
        if rng.random() < cfg.wildness:
            fn = gen_value(rng, env, depth - 1, cfg)
        return App(fn, gen_value(rng, env, depth - 1, cfg))
    if c < 0.96 or not cfg.allow_dist:
        # factor: positive by construction most of the time
        if rng.random() < cfg.wildness:
            return Factor(gen_value(rng, env, depth - 1, cfg))
        p = f"p{rng.randrange(1000)}"
        return Let(p, Op("exp", gen_value(rng, env, depth - 1, cfg)),
                   Factor(Var(p)))
    return Dist("normal", gen_value(rng, env, depth - 1, cfg),
                Real(rng.choice([0.5, 1.0, 2.0])))


def gen_program(seed: int, cfg: Optional[GenConfig] = None) -> Expr:
    """A closed let-normal program."""
    cfg = cfg or GenConfig()
    rng = random.Random(seed)
    while True:
        e = gen_expr(rng, [], cfg.max_depth, cfg)
        if not free_vars(e) and scope_check(frozenset(), e, "L") is None:
            return e


def gen_dexpr(rng: random.Random, env: list[str], depth: int,
              cfg: GenConfig) -> Expr:
    """Direct-style expression: operands may be arbitrary subexpressions."""
    if depth <= 0:
        return gen_value_d(rng, env, 0, cfg)
    c = rng.random()
    if c < 0.14:
        return SAMPLE
    if c < 0.26:
        return gen_value_d(rng, env, depth, cfg)
    if c < 0.42:
        x = f"x{rng.randrange(1000)}"
        return Let(x, gen_dexpr(rng, env, depth - 1, cfg),
                   gen_dexpr(rng, env + [x], depth - 1, cfg))
    if c < 0.60:
        op = rng.choice(_BIN_OPS)
        return Op(op, gen_dexpr(rng, env, depth - 1, cfg),
                  gen_dexpr(rng, env, depth - 1, cfg))
    if c < 0.68:
        return Op(rng.choice(_UN_OPS), gen_dexpr(rng, env, depth - 1, cfg))
    if c < 0.78:
        return If(gen_dexpr(rng, env, depth - 1, cfg),
                  gen_dexpr(rng, env, depth - 1, cfg),
                  gen_dexpr(rng, env, depth - 1, cfg))
    if c < 0.90:
        x = f"x{rng.randrange(1000)}"
        fn = Lam(x, gen_dexpr(rng, env + [x], depth - 1, cfg))
        if rng.random() < cfg.wildness:
            fn = gen_dexpr(rng, env, depth - 1, cfg)
        return App(fn, gen_dexpr(rng, env, depth - 1, cfg))
    if rng.random() < cfg.wildness:
        return Factor(gen_dexpr(rng, env, depth - 1, cfg))
    return Factor(Op("exp", gen_dexpr(rng, env, depth - 1, cfg)))


def gen_value_d(rng: random.Random, env: list[str], depth: int,
                cfg: GenConfig) -> Value:
    roll = rng.random()
    if env and roll < 0.35:
        return Var(rng.choice(env))
    if depth > 0 and roll > 0.88:
        x = f"v{rng.randrange(1000)}"
        return Lam(x, gen_dexpr(rng, env + [x], depth - 1, cfg))
    return Real(rng.choice(_LITERALS))


def gen_dprogram(seed: int, cfg: Optional[GenConfig] = None) -> Expr:
    """A closed direct-style program."""
    cfg = cfg or GenConfig()
    rng = random.Random(seed)
    while True:
        e = gen_dexpr(rng, [], cfg.max_depth, cfg)
        if not free_vars(e) and scope_check(frozenset(), e, "D") is None:
            return e
