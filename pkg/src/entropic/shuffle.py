"""Finite shuffling functions over entropy and their empirical testing.

A path [d1, ..., dn] denotes the composition pi_d1 o ... o pi_dn, with d1
applied last (outermost). An FSF is a path or a cons of two FSFs; applying
it disassembles entropy along its paths and reassembles the pieces with
cons. Non-duplication — no path a suffix of another, so no piece of
entropy is read twice — is the checkable condition under which a shuffle
preserves the entropy measure; `shuffled_estimate` tests that claim by
estimating a program's measure with the shuffle applied to each run's root.

The suffix convention: q is a suffix of p iff p = p' ++ q, matching the
order in which projections consume their argument.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence, Union

from .entropy import Entropy, Seed, derive, left, right, root
from .measure import MeasureEstimate, RealSet, aggregate
from .machine import run
from .syntax import Cont, Expr, T_REAL

L = "L"
R = "R"

Path = tuple[str, ...]


@dataclass(frozen=True)
class PathLeaf:
    path: Path


@dataclass(frozen=True)
class ConsNode:
    first: "FSF"
    second: "FSF"


FSF = Union[PathLeaf, ConsNode]


def apply_path(p: Sequence[str], s: Entropy) -> Entropy:
    """(pi_d1 o ... o pi_dn)(s): the last direction hits `s` first."""
    for d in reversed(p):
        s = left(s) if d == L else right(s)
    return s


def apply_fsf(f: FSF, s: Entropy) -> Entropy:
    if isinstance(f, PathLeaf):
        return apply_path(f.path, s)
    return (apply_fsf(f.first, s), apply_fsf(f.second, s))


def paths_of(f: FSF) -> list[Path]:
    """Left-to-right enumeration of the FSF's leaf paths."""
    if isinstance(f, PathLeaf):
        return [tuple(f.path)]
    return paths_of(f.first) + paths_of(f.second)


def is_suffix(q: Path, p: Path) -> bool:
    n = len(q)
    return n <= len(p) and p[len(p) - n:] == q


def is_non_duplicating(f: FSF) -> bool:
    """True iff no path in the FSF is a suffix of another."""
    ps = paths_of(f)
    for i, q in enumerate(ps):
        for j, p in enumerate(ps):
            if i != j and is_suffix(q, p):
                return False
    return True


def parse_fsf(text: str) -> FSF:
    """FSF from text like "(cons [LR] [L])"; a bare path is "[RL]" or "[]"."""
    tokens = text.replace("(", " ( ").replace(")", " ) ").split()
    pos = 0

    def parse_one():
        nonlocal pos
        if pos >= len(tokens):
            raise ValueError("unexpected end of FSF")
        t = tokens[pos]
        if t == "(":
            pos += 1
            if pos >= len(tokens) or tokens[pos] != "cons":
                raise ValueError("expected (cons ...)")
            pos += 1
            a = parse_one()
            b = parse_one()
            if pos >= len(tokens) or tokens[pos] != ")":
                raise ValueError("missing ) in FSF")
            pos += 1
            return ConsNode(a, b)
        if t.startswith("[") and t.endswith("]"):
            pos += 1
            dirs = tuple(c for c in t[1:-1])
            if any(c not in (L, R) for c in dirs):
                raise ValueError(f"bad path: {t}")
            return PathLeaf(dirs)
        raise ValueError(f"bad FSF token: {t}")

    f = parse_one()
    if pos != len(tokens):
        raise ValueError("trailing FSF input")
    return f


def unparse_fsf(f: FSF) -> str:
    if isinstance(f, PathLeaf):
        return "[" + "".join(f.path) + "]"
    return f"(cons {unparse_fsf(f.first)} {unparse_fsf(f.second)})"


# The paper's three equivalence shuffles, plus the duplicating negative
# control. phi_dup aliases the entropy of a program's first two samples:
# both halves read pi_L of the root, so e.g. two successive draws coincide.
PHI_C = ConsNode(PathLeaf((L, R)), ConsNode(PathLeaf((L,)), PathLeaf((R, R))))
PHI_A = ConsNode(PathLeaf((L, L)), ConsNode(PathLeaf((R, L)), PathLeaf((R,))))
PHI_I = PathLeaf((L,))
PHI_DUP = ConsNode(PathLeaf((L,)), ConsNode(PathLeaf((L,)), PathLeaf((R,))))

NAMED_FSFS = {"phi_c": PHI_C, "phi_a": PHI_A, "phi_i": PHI_I, "phi_dup": PHI_DUP}


def shuffled_estimate(e: Expr, k: Cont, f: FSF, bins: Sequence[RealSet], n: int,
                      seed: Seed, fuel: int) -> MeasureEstimate:
    """As measure.estimate but each draw runs under the shuffled root."""

    def draws():
        for i in range(n):
            s = derive(seed, i)
            r = run(apply_fsf(f, root(derive(s, 1))), e, k, root(derive(s, 2)), fuel)
            if r.status == "final":
                v = r.value
                if v[0] == T_REAL:
                    yield 0, v[1], r.logw
                else:
                    yield 1, 0.0, r.logw
            elif r.status == "stuck":
                yield 2, 0.0, 0.0
            else:
                yield 3, 0.0, 0.0

    return aggregate(draws(), bins, n)
