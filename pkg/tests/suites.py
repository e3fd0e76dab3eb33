"""Randomized, solver-checked soundness suites for relational memory.

Each suite returns ``(instances, failures, tally)``; a failure is an
instance where the solver finds a model contradicting the claim.
"""

import random
from collections import Counter

from relse import symexp as S
from relse import terms as T
from relse.solver import Unsat
from relse.symexp import Cmp, Pair, RelMemory, Simple

from termgen import small_index


def _bases():
    # weighted toward one base so that syntactic comparison often decides
    x, y = T.var("sx", 32), T.var("sy", 32)
    ebp = T.var("ebp", 32)
    return [ebp] * 7 + [T.var("esp", 32), T.add(x, y), T.binop("mul", x, T.const(3, 32))]


def _byte(rng, k):
    if rng.random() < 0.5:
        return Simple(T.var(f"lam{k}", 8))
    return Pair(T.var(f"beta{k}", 8), T.var(f"beta{k}_r", 8, T.RIGHT))


def _index(rng, bases):
    if rng.random() < 0.1:
        return T.const(rng.randrange(16), 32)
    return small_index(rng, bases, spread=3)


def random_memory(rng, bases, max_stores=8):
    """Stores at shared indices, with the odd duplicated-index store, over a
    pair of distinct initial arrays."""
    m = RelMemory.initial(T.array("ml"), T.array("mr", T.RIGHT))
    for k in range(rng.randint(0, max_stores)):
        v = _byte(rng, k)
        if rng.random() < 0.1:
            m = S.rel_store_split(m, _index(rng, bases), _index(rng, bases), v)
        else:
            m = S.rel_store(m, _index(rng, bases), v)
    return m


def lookup_suite(solver, count=1000, seed=0):
    rng = random.Random(seed)
    bases = _bases()
    tally: Counter = Counter()
    failures = []
    for n in range(count):
        m = random_memory(rng, bases)
        i = _index(rng, bases)
        got = S.lookup(m, i)
        tally[type(got).__name__] += 1
        tally["resolved" if got.left.op != "select" else "select"] += 1
        claim = T.disj([T.ne(got.left, T.select(m.left, i)), T.ne(got.right, T.select(m.right, i))])
        solver.reset()
        if not isinstance(solver.check((), claim), Unsat):
            failures.append((n, m, i))
    return count, failures, tally


def compare_suite(solver, count=1000, seed=0):
    rng = random.Random(seed)
    bases = _bases()
    tally: Counter = Counter()
    failures = []
    for n in range(count):
        a, b = _index(rng, bases), _index(rng, bases)
        na, nb = S.normalize(a), S.normalize(b)
        c = S.compare(na, nb)
        tally[c.value] += 1
        checks = [T.ne(a, na.term()), T.ne(b, nb.term())]
        if c is Cmp.TRUE:
            checks.append(T.ne(a, b))
        elif c is Cmp.FALSE:
            checks.append(T.eq(a, b))
        solver.reset()
        if not isinstance(solver.check((), T.disj(checks)), Unsat):
            failures.append((n, a, b, c))
    return count, failures, tally


_UNARY = ("neg", "not")
_INVERTIBLE = ("add", "sub", "xor")


def _wrap(rng, l, r, depth):
    """Apply the same random operator chain to both sides; some chains are
    invertible (untainting applies), some are not."""
    for _ in range(depth):
        roll = rng.random()
        if roll < 0.3:
            op = rng.choice(_UNARY)
            l, r = T.unop(op, l), T.unop(op, r)
        elif roll < 0.8:
            op = rng.choice(_INVERTIBLE)
            c = T.const(rng.randrange(16), l.width)
            if rng.random() < 0.5:
                l, r = T.binop(op, l, c), T.binop(op, r, c)
            else:
                l, r = T.binop(op, c, l), T.binop(op, c, r)
        else:
            w = T.var(f"w{rng.randrange(2)}", l.width)
            w_r = T.var(f"w{rng.randrange(2)}_r", l.width, T.RIGHT)
            op = rng.choice(("mul", "and", "or"))
            l, r = T.binop(op, l, w), T.binop(op, r, w_r)
    return l, r


def untaint_suite(solver, count=1000, seed=0):
    """Before/after untaint, every register and memory cell agrees on every
    model of ``π ∧ φ_l = φ_r`` (4-bit data)."""
    rng = random.Random(seed)
    tally: Counter = Counter()
    failures = []
    vl = [T.var(f"v{k}", 4) for k in range(3)]
    vr = [T.var(f"v{k}_r", 4, T.RIGHT) for k in range(3)]
    for n in range(count):
        k = rng.randrange(3)
        base_l, base_r = vl[k], vr[k]
        if rng.random() < 0.2:
            base_l, base_r = T.concat(vl[k], vl[(k + 1) % 3]), T.concat(vr[k], vr[(k + 1) % 3])
        leak_l, leak_r = _wrap(rng, base_l, base_r, rng.randint(0, 3))
        leaked = S.rel(leak_l, leak_r)
        regs = {}
        for j in range(4):
            a = rng.randrange(3)
            l, r = _wrap(rng, vl[a], vr[a], rng.randint(0, 2))
            regs[f"r{j}"] = S.rel(l, r)
        mem = RelMemory.initial(T.array("ul"), T.array("ur", T.RIGHT))
        for j in range(3):
            a = rng.randrange(3)
            val = S.rel(T.zext(vl[a], 8), T.zext(vr[a], 8))
            mem = S.rel_store(mem, T.const(j, 32), val)
        path = [T.binop("ult", vl[rng.randrange(3)], T.const(rng.randrange(1, 16), 4))]
        new_regs, new_mem = S.untaint(regs, mem, leaked)
        changed = sum(new_regs[x] is not regs[x] for x in regs)
        tally["untainted" if changed else "unchanged"] += 1
        tally["collapsed"] += sum(isinstance(new_regs[x], Simple) and isinstance(regs[x], Pair) for x in regs)
        idx = T.var("ui", 32)
        diffs = [T.ne(regs[x].left, new_regs[x].left) for x in regs]
        diffs += [T.ne(regs[x].right, new_regs[x].right) for x in regs]
        diffs.append(T.ne(T.select(mem.left, idx), T.select(new_mem.left, idx)))
        diffs.append(T.ne(T.select(mem.right, idx), T.select(new_mem.right, idx)))
        for (i0, v0), (i1, v1) in zip(mem.history, new_mem.history):
            diffs.append(T.ne(v0.right, v1.right))
        solver.reset()
        r = solver.check(path + [T.eq(leak_l, leak_r)], T.disj(diffs))
        if not isinstance(r, Unsat):
            failures.append((n, leaked, regs))
    return count, failures, tally
