"""Splittable entropy: a deterministic, lazily split pseudo-random source.

An entropy value is either a Leaf, represented as a plain 128-bit int seed,
or a Pair, represented as a 2-tuple of entropy values. The projections and
the uniform observer on a Leaf are pure functions of the seed, so any
evaluation is replayable from its root seed. On Pairs the pairing laws hold
structurally:

    left(cons(a, b)) == a        right(cons(a, b)) == b
    uniform(cons(a, b)) == uniform(a)

Unlike the idealized space, `cons` here is not surjective onto Leafs; all
machine and shuffle code accesses entropy only through left/right/uniform/
cons, for which the required laws hold exactly.

Leaf derivation uses a SplitMix-style mixer: two murmur3 fmix64 finalizer
lanes over the 128-bit seed, keyed by a 64-bit tag, with cross-feed so both
output halves depend on the whole input. The three projection tags plus the
mixing constants below are the single source of truth for reproducibility.
"""

from __future__ import annotations

from typing import Union

Entropy = Union[int, tuple]
Seed = int

MASK64 = (1 << 64) - 1
MASK128 = (1 << 128) - 1

# Projection tags (first 64 bits of pi in three chunks).
TAG_LEFT = 0x243F6A8885A308D3
TAG_RIGHT = 0x13198A2E03707344
TAG_UNIFORM = 0xA4093822299F31D0

# murmur3 fmix64 multipliers; golden-ratio additive constant.
_C1 = 0xFF51AFD7ED558CCD
_C2 = 0xC4CEB9FE1A85EC53
_GOLDEN = 0x9E3779B97F4A7C15


def derive(seed: Seed, tag: int) -> Seed:
    """Fixed 128-bit mixing function; distinct tags give independent streams."""
    lo = seed & MASK64
    hi = (seed >> 64) & MASK64
    z = (hi ^ tag) & MASK64
    z = ((z ^ (z >> 33)) * _C1) & MASK64
    z = ((z ^ (z >> 33)) * _C2) & MASK64
    z ^= z >> 33
    z = (z ^ lo ^ _GOLDEN) & MASK64
    z = ((z ^ (z >> 33)) * _C1) & MASK64
    z = ((z ^ (z >> 33)) * _C2) & MASK64
    a = z ^ (z >> 33)
    z = (a + hi + tag) & MASK64
    z = ((z ^ (z >> 33)) * _C1) & MASK64
    z = ((z ^ (z >> 33)) * _C2) & MASK64
    b = z ^ (z >> 33)
    return (b << 64) | a


def root(seed: Seed) -> Entropy:
    """The Leaf entropy for a 128-bit seed."""
    return seed & MASK128


def expand_seed(n: int) -> Seed:
    """Fixed expansion of a 64-bit integer into a 128-bit root seed."""
    return derive(n & MASK64, _GOLDEN)


def left(s: Entropy) -> Entropy:
    if type(s) is tuple:
        return s[0]
    return derive(s, TAG_LEFT)


def right(s: Entropy) -> Entropy:
    if type(s) is tuple:
        return s[1]
    return derive(s, TAG_RIGHT)


def cons(a: Entropy, b: Entropy) -> Entropy:
    return (a, b)


def uniform(s: Entropy) -> float:
    """One standard uniform draw in [0, 1); pure in `s`.

    The top 53 bits of the derived word form the mantissa, so every result
    is exactly representable and strictly below 1.
    """
    while type(s) is tuple:
        s = s[0]
    return ((derive(s, TAG_UNIFORM) & MASK64) >> 11) * 1.1102230246251565e-16


# The machine's entropy stack is an encoded pair of an entropy value and an
# encoded stack.

def push(s: Entropy, stack: Entropy) -> Entropy:
    return (s, stack)


def pop(stack: Entropy) -> tuple[Entropy, Entropy]:
    if type(stack) is tuple:
        return stack
    return derive(stack, TAG_LEFT), derive(stack, TAG_RIGHT)


def parse_seed(text: str) -> Seed:
    """Seed from a CLI string: 32 hex digits, or a 64-bit decimal integer."""
    t = text.strip()
    if len(t) == 32 and all(c in "0123456789abcdefABCDEF" for c in t):
        return int(t, 16)
    try:
        n = int(t, 10)
    except ValueError:
        raise ValueError(f"bad seed (need 32 hex digits or a decimal integer): {text}")
    if not 0 <= n <= MASK64:
        raise ValueError("decimal seed must fit in 64 bits")
    return expand_seed(n)
