"""Random term builders shared by the term, solver and memory tests."""

import random

from relse import terms as T

BINOPS = ("add", "sub", "mul", "udiv", "and", "or", "xor", "shl", "shr")
COMPARES = ("eq", "ult", "slt")


def random_term(rng: random.Random, width: int, depth: int, leaves) -> T.Term:
    """A random term of ``width``; ``leaves(width)`` returns candidate atoms."""
    if depth == 0 or rng.random() < 0.25:
        pool = leaves(width)
        if pool and rng.random() < 0.7:
            return rng.choice(pool)
        return T.const(rng.randrange(1 << width), width)
    roll = rng.random()
    if width == 1 and roll < 0.6:
        w = rng.choice((4, 8))
        return T.binop(rng.choice(COMPARES), random_term(rng, w, depth - 1, leaves),
                       random_term(rng, w, depth - 1, leaves))
    if roll < 0.15:
        return T.unop(rng.choice(("neg", "not")), random_term(rng, width, depth - 1, leaves))
    if roll < 0.25 and width >= 8:
        half = width // 2
        return T.concat(random_term(rng, half, depth - 1, leaves), random_term(rng, width - half, depth - 1, leaves))
    if roll < 0.32 and width < 32:
        wide = random_term(rng, 32, depth - 1, leaves)
        lo = rng.randrange(0, 33 - width)
        return T.extract(wide, lo + width - 1, lo)
    if roll < 0.38 and width > 4:
        narrow = random_term(rng, 4, depth - 1, leaves)
        return (T.zext if rng.random() < 0.5 else T.sext)(narrow, width)
    return T.binop(rng.choice(BINOPS), random_term(rng, width, depth - 1, leaves),
                   random_term(rng, width, depth - 1, leaves))


def var_leaves(prefix: str, n: int = 3, widths=(1, 4, 8, 16, 32)):
    table = {w: [T.var(f"{prefix}{w}_{i}", w) for i in range(n)] for w in widths}
    return lambda w: table.get(w, [])


def small_index(rng: random.Random, bases, spread: int = 6) -> T.Term:
    """``base + c`` or ``base - c`` over a handful of bases: enough collisions
    to exercise both the equal and the distinct cases of syntactic compare."""
    b = rng.choice(bases)
    c = rng.randrange(-spread, spread + 1)
    shape = rng.random()
    if shape < 0.4:
        return T.add(b, T.const(c, 32))
    if shape < 0.7:
        return T.sub(T.add(b, T.const(c + 2, 32)), T.const(2, 32))
    return T.add(T.const(c, 32), b)
