import random

from hypothesis import given, settings, strategies as st

from relse import terms as T
from relse.terms import ArrayValue, LEFT, RIGHT


def test_hash_consing_identity():
    assert T.var("x", 8) is T.var("x", 8)
    assert T.var("x", 8) is not T.var("x", 16)
    assert T.var("x", 8, LEFT) is not T.var("x", 8, RIGHT)
    a = T.add(T.var("x", 8), T.var("y", 8))
    assert a is T.add(T.var("x", 8), T.var("y", 8))


def test_constant_folding():
    assert T.add(T.const(250, 8), T.const(10, 8)) is T.const(4, 8)
    assert T.sub(T.var("x", 32), T.const(8, 32)) is T.add(T.var("x", 32), T.const(-8, 32))
    base = T.var("x", 32)
    assert T.add(T.add(base, T.const(3, 32)), T.const(4, 32)) is T.add(base, T.const(7, 32))
    assert T.binop("xor", base, base) is T.const(0, 32)
    assert T.eq(base, base) is T.true()


def test_select_over_constant_array():
    assert T.select(T.const_array(7), T.var("i", 32)) is T.const(7, 8)


def test_definitions_are_opaque_but_evaluate_to_body():
    body = T.add(T.var("x", 8), T.const(1, 8))
    d = T.define("t.1", body)
    assert d is not body and d.is_atom and d.width == 8
    assert T.evaluate(d, {"x": 4}) == 5


def test_conj_disj():
    assert T.conj([]) is T.true()
    assert T.disj([]) is T.false()
    c = T.var("c", 1)
    assert T.conj([T.true(), c]) is c
    assert T.disj([c, T.false()]) is c


def test_dag_versus_tree_size():
    t = T.var("x", 8)
    for _ in range(20):
        t = T.binop("mul", t, t)
    assert T.dag_size([t]) == 21
    assert T.tree_size(t) == 2 ** 21 - 1


def test_free_symbols_and_substitution():
    x, y = T.var("x", 8), T.var("y", 8)
    a = T.array("m")
    t = T.add(T.select(T.store(a, T.zext(x, 32), y), T.const(0, 32)), x)
    assert set(T.free_symbols([t])) == {x, y, a}
    u = T.substitute_atoms(t, {x: T.const(2, 8)})
    assert x not in T.free_symbols([u])
    env = {"y": 9, "m": ArrayValue({0: 5})}
    assert T.evaluate(u, env) == T.evaluate(t, {**env, "x": 2})


def test_array_evaluation():
    a = T.array("m")
    i = T.var("i", 32)
    t = T.select(T.store(T.store(a, i, T.const(1, 8)), T.const(3, 32), T.const(2, 8)), i)
    assert T.evaluate(t, {"i": 3, "m": ArrayValue()}) == 2
    assert T.evaluate(t, {"i": 4, "m": ArrayValue()}) == 1


# -- rewrites preserve meaning ------------------------------------------------
# A generator that builds each term together with its value computed by
# plain integer arithmetic, independent of the term library's evaluator.

def _signed(v, w):
    return v - (1 << w) if v >> (w - 1) else v


REF = {
    "add": lambda a, b, w: (a + b) % (1 << w),
    "sub": lambda a, b, w: (a - b) % (1 << w),
    "mul": lambda a, b, w: (a * b) % (1 << w),
    "udiv": lambda a, b, w: (1 << w) - 1 if b == 0 else a // b,
    "and": lambda a, b, w: a & b,
    "or": lambda a, b, w: a | b,
    "xor": lambda a, b, w: a ^ b,
    "shl": lambda a, b, w: (a << b) % (1 << w) if b < w else 0,
    "shr": lambda a, b, w: a >> b if b < w else 0,
}


def build(rng, width, depth, env):
    if depth == 0 or rng.random() < 0.2:
        if rng.random() < 0.5:
            name = f"v{width}_{rng.randrange(3)}"
            env.setdefault(name, rng.randrange(1 << width))
            return T.var(name, width), env[name]
        # small constants trigger the identity / absorption rewrites
        c = rng.choice((0, 1, (1 << width) - 1, rng.randrange(1 << width)))
        return T.const(c, width), c
    roll = rng.random()
    if width == 1 and roll < 0.5:
        w = 8
        (a, va), (b, vb) = build(rng, w, depth - 1, env), build(rng, w, depth - 1, env)
        op = rng.choice(("eq", "ult", "slt"))
        ref = {"eq": va == vb, "ult": va < vb, "slt": _signed(va, w) < _signed(vb, w)}[op]
        return T.binop(op, a, b), int(ref)
    if roll < 0.15:
        a, va = build(rng, width, depth - 1, env)
        if rng.random() < 0.5:
            return T.neg(a), (-va) % (1 << width)
        return T.bvnot(a), (~va) % (1 << width)
    if roll < 0.25 and width == 8:
        a, va = build(rng, 32, depth - 1, env)
        return T.extract(a, 15, 8), (va >> 8) & 0xFF
    if roll < 0.35 and width == 32:
        a, va = build(rng, 8, depth - 1, env)
        if rng.random() < 0.5:
            return T.zext(a, 32), va
        return T.sext(a, 32), _signed(va, 8) % (1 << 32)
    if roll < 0.42 and width == 16:
        (a, va), (b, vb) = build(rng, 8, depth - 1, env), build(rng, 8, depth - 1, env)
        return T.concat(a, b), (va << 8) | vb
    op = rng.choice(list(REF))
    (a, va) = build(rng, width, depth - 1, env)
    (b, vb) = (a, va) if rng.random() < 0.15 else build(rng, width, depth - 1, env)
    return T.binop(op, a, b), REF[op](va, vb, width)


@settings(max_examples=500, deadline=None)
@given(st.integers(0, 2**32), st.sampled_from((1, 8, 16, 32)))
def test_rewrites_preserve_value(seed, width):
    rng = random.Random(seed)
    env: dict = {}
    t, expected = build(rng, width, 5, env)
    assert t.width == width
    assert T.evaluate(t, env) == expected


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**32))
def test_concat_of_adjacent_extracts_merges(seed):
    rng = random.Random(seed)
    x = T.var("x", 32)
    lo = rng.randrange(0, 24)
    mid = rng.randrange(lo, 28)
    hi = rng.randrange(mid + 1, 32)
    t = T.concat(T.extract(x, hi, mid + 1), T.extract(x, mid, lo))
    assert t is T.extract(x, hi, lo)
