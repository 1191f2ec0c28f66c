"""Monte-Carlo estimation of program measures, with binned standard errors.

The measure of a program (expression + continuation) assigns mass to sets
of real results; it is realized here as the average of exp(logw) times a
bin indicator over independent machine runs, one per seed in a fixed,
reproducible schedule (draw i runs under derive(seed, i)). Since the
entropy space has total measure one, the plain average is an unbiased
estimator whenever no draw sticks or runs out of fuel at the given budget;
stuck and diverged draws are counted separately and reported, never
silently dropped.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

from .entropy import Seed, derive, root
from .machine import run
from .syntax import Cont, Expr, T_REAL

WEIGHT_CLAMP = 1e300


@dataclass(frozen=True)
class RealSet:
    """Finite union of disjoint, sorted half-open intervals [lo, hi)."""

    intervals: tuple[tuple[float, float], ...]

    @staticmethod
    def of(*intervals: tuple[float, float]) -> "RealSet":
        ivs = sorted((float(a), float(b)) for a, b in intervals)
        for (a1, b1), (a2, b2) in zip(ivs, ivs[1:]):
            if a2 < b1:
                raise ValueError("intervals must be disjoint")
        return RealSet(tuple(ivs))

    @staticmethod
    def interval(lo: float, hi: float) -> "RealSet":
        return RealSet.of((lo, hi))

    def contains(self, r: float) -> bool:
        for lo, hi in self.intervals:
            if lo <= r < hi:
                return True
        return False

    def __str__(self) -> str:
        return " u ".join(f"[{lo}, {hi})" for lo, hi in self.intervals)


def default_bins(lo: float = -10.0, hi: float = 10.0, count: int = 64) -> list[RealSet]:
    """Equal-width partition of [lo, hi) plus two unbounded tail bins."""
    edges = np.linspace(lo, hi, count + 1)
    bins = [RealSet.interval(-math.inf, lo)]
    bins.extend(RealSet.interval(float(a), float(b)) for a, b in zip(edges, edges[1:]))
    bins.append(RealSet.interval(hi, math.inf))
    return bins


def bin_edges(bins: Sequence[RealSet]) -> Optional[np.ndarray]:
    """Edges array when `bins` is a contiguous single-interval partition."""
    ivs = [b.intervals for b in bins]
    if any(len(i) != 1 for i in ivs):
        return None
    edges = [ivs[0][0][0]]
    for (lo, hi), in ivs:
        if lo != edges[-1]:
            return None
        edges.append(hi)
    return np.array(edges)


@dataclass(frozen=True)
class WeightedSample:
    result: tuple  # ("real", r) | ("nonreal",) | ("stuck", reason) | ("diverged",)
    logw: float
    seed: Seed
    steps: int


@dataclass
class MeasureEstimate:
    bins: list[RealSet]
    masses: np.ndarray
    std_errors: np.ndarray
    total_mass: float
    total_se: float
    non_real_mass: float
    non_real_se: float
    n: int
    stuck: int = 0
    diverged: int = 0
    overflowed: int = 0
    max_weight: float = 0.0

    @property
    def unresolved_bound(self) -> float:
        """Upper bound on mass lost to fuel-exhausted draws."""
        return (self.diverged / self.n) * max(self.max_weight, 1.0) if self.n else 0.0

    def to_json(self) -> dict:
        out = {
            "schema": "entropic/1",
            "n": self.n,
            "bins": [
                {"lo": b.intervals[0][0], "hi": b.intervals[-1][-1],
                 "mass": float(m), "se": float(s)}
                for b, m, s in zip(self.bins, self.masses, self.std_errors)
            ],
            "total_mass": self.total_mass,
            "total_se": self.total_se,
            "non_real_mass": self.non_real_mass,
            "stuck": self.stuck,
            "diverged": self.diverged,
        }
        if self.overflowed:
            out["overflowed"] = self.overflowed
        return out


def draw(e: Expr, k: Cont, seed: Seed, fuel: int) -> WeightedSample:
    """One weighted run: sigma and tau come from independent seed-derived roots."""
    r = run(root(derive(seed, 1)), e, k, root(derive(seed, 2)), fuel)
    if r.status == "final":
        if r.value[0] == T_REAL:
            return WeightedSample(("real", r.value[1]), r.logw, seed, r.steps)
        return WeightedSample(("nonreal",), r.logw, seed, r.steps)
    if r.status == "stuck":
        return WeightedSample(("stuck", r.reason), r.logw, seed, r.steps)
    return WeightedSample(("diverged",), r.logw, seed, r.steps)


def _raw_draws(e: Expr, k: Cont, n: int, seed: Seed, fuel: int):
    """Yield (kind, real, weight) per draw; kind: 0 real, 1 nonreal, 2 stuck, 3 fuel."""
    _run = run
    _derive = derive
    for i in range(n):
        s = _derive(seed, i)
        r = _run(_derive(s, 1), e, k, _derive(s, 2), fuel)
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


def aggregate(draws, bins: Sequence[RealSet], n: int) -> MeasureEstimate:
    """Fold (kind, real, logw) triples into a binned estimate.

    Accepts any iterable in draw-index order, so results are independent of
    how the draws were produced (serially or merged from workers).
    """
    kinds = np.empty(n, dtype=np.int8)
    reals = np.empty(n, dtype=np.float64)
    logws = np.empty(n, dtype=np.float64)
    for i, (kind, r, lw) in enumerate(draws):
        kinds[i] = kind
        reals[i] = r
        logws[i] = lw

    with np.errstate(over="ignore"):
        weights = np.exp(logws)
    overflowed = int(np.count_nonzero(np.isinf(weights)))
    weights = np.minimum(weights, WEIGHT_CLAMP)

    is_real = kinds == 0
    is_nonreal = kinds == 1
    stuck = int(np.count_nonzero(kinds == 2))
    diverged = int(np.count_nonzero(kinds == 3))

    wr = np.where(is_real, weights, 0.0)
    sqrt_n = math.sqrt(n)

    bins = list(bins)
    edges = bin_edges(bins)
    per_bin = np.zeros((len(bins), n))
    if edges is not None:
        idx = np.searchsorted(edges, reals, side="right") - 1
        valid = is_real & (idx >= 0) & (idx < len(bins))
        # reals exactly at the last edge fall outside the partition
        at_top = is_real & (reals == edges[-1])
        valid &= ~at_top
        rows = idx[valid]
        cols = np.nonzero(valid)[0]
        per_bin[rows, cols] = wr[valid]
    else:
        for j, b in enumerate(bins):
            member = np.fromiter((b.contains(r) for r in reals), dtype=bool, count=n)
            per_bin[j] = np.where(member & is_real, wr, 0.0)

    masses = per_bin.mean(axis=1)
    ses = per_bin.std(axis=1, ddof=1) / sqrt_n if n > 1 else np.zeros(len(bins))

    wn = np.where(is_nonreal, weights, 0.0)
    return MeasureEstimate(
        bins=bins,
        masses=masses,
        std_errors=ses,
        total_mass=float(wr.mean()),
        total_se=float(wr.std(ddof=1) / sqrt_n) if n > 1 else 0.0,
        non_real_mass=float(wn.mean()),
        non_real_se=float(wn.std(ddof=1) / sqrt_n) if n > 1 else 0.0,
        n=n,
        stuck=stuck,
        diverged=diverged,
        overflowed=overflowed,
        max_weight=float(weights.max()) if n else 0.0,
    )


def estimate(e: Expr, k: Cont, bins: Sequence[RealSet], n: int, seed: Seed,
             fuel: int) -> MeasureEstimate:
    """Monte-Carlo estimate of the program measure on each bin."""
    if n < 1:
        raise ValueError("n must be >= 1")
    return aggregate(_raw_draws(e, k, n, seed, fuel), bins, n)


def value_estimate(e: Expr, bins: Sequence[RealSet], n: int, seed: Seed,
                   fuel: int) -> MeasureEstimate:
    """The expression's own measure (halt continuation); closure-valued
    results accumulate in non_real_mass."""
    return estimate(e, None, bins, n, seed, fuel)


def expectation(e: Expr, g: Callable[[float], float], n: int, seed: Seed,
                fuel: int) -> tuple[float, float]:
    """Self-normalized importance estimate of E[g] under the normalized
    program measure, with delta-method standard error."""
    ws = []
    gs = []
    for kind, r, lw in _raw_draws(e, None, n, seed, fuel):
        if kind == 0:
            ws.append(min(math.exp(lw), WEIGHT_CLAMP))
            gs.append(g(r))
    if not ws or sum(ws) == 0.0:
        raise ValueError("all draws had zero weight")
    w = np.array(ws)
    gv = np.array(gs)
    total = w.sum()
    mean = float((w * gv).sum() / total)
    resid = w * (gv - mean)
    se = float(math.sqrt((resid ** 2).sum()) / total)
    return mean, se


def agree_within(a: MeasureEstimate, b: MeasureEstimate, z: float) -> tuple[bool, float]:
    """Bin-wise |m1 - m2| <= z * sqrt(se1^2 + se2^2); returns (ok, worst score)."""
    diff = np.abs(a.masses - b.masses)
    se = np.sqrt(a.std_errors ** 2 + b.std_errors ** 2)
    worst = 0.0
    ok = True
    for d, s in zip(diff, se):
        if d == 0.0:
            continue
        score = d / s if s > 0 else math.inf
        worst = max(worst, score)
        if score > z:
            ok = False
    return ok, worst
