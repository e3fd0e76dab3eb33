"""Hash-consed bitvector/array terms.

Structurally equal terms are the same Python object, so ``a is b`` decides
syntactic equality. Constructors fold constants and apply a handful of
local rewrites that never change meaning; array read-over-write is not one
of them (that is the job of the relational memory).
"""

from __future__ import annotations

import itertools
import weakref
from typing import Callable, Iterable, Iterator, Mapping

from .ir import apply_binop, apply_unop, binop_width, mask, unop_width

LEFT, RIGHT = "l", "r"
ARRAY = 0  # width marker for array-sorted terms

_table: "weakref.WeakValueDictionary[tuple, Term]" = weakref.WeakValueDictionary()
_uid = itertools.count()


class Term:
    __slots__ = ("op", "args", "params", "width", "uid", "_hash", "__weakref__")

    op: str
    args: tuple
    params: tuple
    width: int

    def __repr__(self) -> str:
        return pretty(self)

    def __hash__(self) -> int:
        return self._hash

    # structural equality is identity thanks to hash-consing
    def __eq__(self, other) -> bool:
        return self is other

    @property
    def is_array(self) -> bool:
        return self.width == ARRAY

    @property
    def is_const(self) -> bool:
        return self.op == "const"

    @property
    def value(self) -> int:
        assert self.op == "const"
        return self.params[0]

    @property
    def name(self) -> str:
        assert self.op in ("var", "array", "def")
        return self.params[0]

    @property
    def side(self) -> str:
        """LEFT for shared/left-copy symbols, RIGHT for right-copy symbols."""
        assert self.op in ("var", "array", "def")
        return self.params[1]

    @property
    def is_atom(self) -> bool:
        return self.op in ("var", "def")


def _mk(op: str, args: tuple, params: tuple, width: int) -> Term:
    key = (op, params, args, width)
    t = _table.get(key)
    if t is None:
        t = object.__new__(Term)
        t.op, t.args, t.params, t.width = op, args, params, width
        t.uid = next(_uid)
        t._hash = hash(key)
        _table[key] = t
    return t


# -- leaves -----------------------------------------------------------------

def var(name: str, width: int, side: str = LEFT) -> Term:
    return _mk("var", (), (name, side), width)


def const(value: int, width: int) -> Term:
    return _mk("const", (), (value & mask(width), width), width)


def true() -> Term:
    return const(1, 1)


def false() -> Term:
    return const(0, 1)


def array(name: str, side: str = LEFT) -> Term:
    return _mk("array", (), (name, side), ARRAY)


def const_array(byte: int) -> Term:
    return _mk("constarray", (), (byte & 0xFF,), ARRAY)


def define(name: str, body: Term, side: str = LEFT) -> Term:
    """A named definition: behaves as an opaque variable for syntactic
    comparisons while denoting ``body``."""
    return _mk("def", (body,), (name, side), body.width)


# -- arrays -----------------------------------------------------------------

def store(a: Term, i: Term, v: Term) -> Term:
    assert a.is_array and i.width == 32 and v.width == 8, (a, i, v)
    return _mk("store", (a, i, v), (), ARRAY)


def select(a: Term, i: Term) -> Term:
    assert a.is_array and i.width == 32, (a, i)
    if a.op == "constarray":
        return const(a.params[0], 8)
    return _mk("select", (a, i), (), 8)


def array_root(a: Term) -> Term:
    while a.op == "store":
        a = a.args[0]
    return a


# -- bitvector operators ----------------------------------------------------

def unop(op: str, a: Term, params: tuple = ()) -> Term:
    w = unop_width(op, params, a.width)
    if a.is_const:
        return const(apply_unop(op, params, a.value, a.width), w)
    if op in ("neg", "not") and a.op == op:
        return a.args[0]
    if op in ("zext", "sext") and params[0] == a.width:
        return a
    if op == "extract":
        hi, lo = params
        if lo == 0 and hi == a.width - 1:
            return a
        if a.op == "extract":
            return unop("extract", a.args[0], (hi + a.params[1], lo + a.params[1]))
        if a.op == "zext" and hi < a.args[0].width:
            return unop("extract", a.args[0], params)
        if a.op == "concat":
            hi_part, lo_part = a.args
            if hi < lo_part.width:
                return unop("extract", lo_part, params)
            if lo >= lo_part.width:
                return unop("extract", hi_part, (hi - lo_part.width, lo - lo_part.width))
    return _mk(op, (a,), tuple(params), w)


def neg(a: Term) -> Term:
    return unop("neg", a)


def bvnot(a: Term) -> Term:
    return unop("not", a)


def zext(a: Term, width: int) -> Term:
    return unop("zext", a, (width,))


def sext(a: Term, width: int) -> Term:
    return unop("sext", a, (width,))


def extract(a: Term, hi: int, lo: int) -> Term:
    return unop("extract", a, (hi, lo))


_COMMUTATIVE = frozenset({"add", "mul", "and", "or", "xor", "eq"})


def binop(op: str, a: Term, b: Term) -> Term:
    if op != "concat":
        assert a.width == b.width, (op, a, b)
    w = binop_width(op, a.width, b.width)
    if a.is_const and b.is_const:
        return const(apply_binop(op, a.value, b.value, a.width, b.width), w)
    if op in _COMMUTATIVE and a.is_const:
        a, b = b, a
    m = mask(a.width)
    if op == "sub":
        if b.is_const:
            return binop("add", a, const(-b.value, a.width))
        if a is b:
            return const(0, w)
    if op == "add" and b.is_const:
        if b.value == 0:
            return a
        if a.op == "add" and a.args[1].is_const:
            return binop("add", a.args[0], const(a.args[1].value + b.value, w))
    if op == "mul" and b.is_const:
        if b.value == 0:
            return b
        if b.value == 1:
            return a
    if op == "and":
        if b.is_const and b.value == 0:
            return b
        if b.is_const and b.value == m:
            return a
        if a is b:
            return a
    if op == "or":
        if b.is_const and b.value == 0:
            return a
        if b.is_const and b.value == m:
            return b
        if a is b:
            return a
    if op == "xor":
        if b.is_const and b.value == 0:
            return a
        if a is b:
            return const(0, w)
    if op in ("shl", "shr") and b.is_const:
        if b.value == 0:
            return a
        if b.value >= a.width:
            return const(0, w)
    if op == "eq" and a is b:
        return true()
    if op == "ult" and a is b:
        return false()
    if op == "slt" and a is b:
        return false()
    if op == "concat":
        merged = _merge_extracts(a, b)
        if merged is not None:
            return merged
    return _mk(op, (a, b), (), w)


def _merge_extracts(a: Term, b: Term):
    # concat(x[h1:l1], x[h2:l2]) with l1 == h2 + 1  ->  x[h1:l2]
    if a.op != "extract":
        return None
    if b.op == "extract" and b.args[0] is a.args[0] and a.params[1] == b.params[0] + 1:
        return extract(a.args[0], a.params[0], b.params[1])
    if b.op == "concat":
        inner = _merge_extracts(a, b.args[0])
        if inner is not None:
            return binop("concat", inner, b.args[1])
    return None


def add(a, b):
    return binop("add", a, b)


def sub(a, b):
    return binop("sub", a, b)


def eq(a, b):
    return binop("eq", a, b)


def ne(a, b):
    return bvnot(eq(a, b))


def concat(a, b):
    return binop("concat", a, b)


def conj(terms: Iterable[Term]) -> Term:
    out = true()
    for t in terms:
        out = binop("and", out, t)
    return out


def disj(terms: Iterable[Term]) -> Term:
    out = false()
    for t in terms:
        out = binop("or", out, t)
    return out


# -- traversal --------------------------------------------------------------

def iter_dag(roots: Iterable[Term]) -> Iterator[Term]:
    """Post-order walk visiting each distinct node once."""
    seen: set[int] = set()
    for root in roots:
        stack = [(root, False)]
        while stack:
            t, done = stack.pop()
            if done:
                yield t
                continue
            if t.uid in seen:
                continue
            seen.add(t.uid)
            stack.append((t, True))
            for a in reversed(t.args):
                if a.uid not in seen:
                    stack.append((a, False))


def free_symbols(roots: Iterable[Term]) -> list[Term]:
    """Declared symbols (bitvector vars, array vars) reachable from ``roots``."""
    return [t for t in iter_dag(roots) if t.op in ("var", "array")]


def dag_size(roots: Iterable[Term]) -> int:
    return sum(1 for _ in iter_dag(roots))


def tree_size(t: Term, _memo=None) -> int:
    memo = {} if _memo is None else _memo
    for n in iter_dag([t]):
        memo[n.uid] = 1 + sum(memo[a.uid] for a in n.args)
    return memo[t.uid]


def rebuild(t: Term, args: tuple) -> Term:
    """Reconstruct ``t`` over new children through the smart constructors."""
    op = t.op
    if not args or all(x is y for x, y in zip(args, t.args)):
        return t
    if op == "store":
        return store(*args)
    if op == "select":
        return select(*args)
    if op == "def":
        return define(t.params[0], args[0], t.params[1])
    if len(args) == 1:
        return unop(op, args[0], t.params)
    return binop(op, args[0], args[1])


def substitute(t: Term, fn: Callable[[Term], "Term | None"], memo: dict | None = None,
               descend_defs: bool = False) -> Term:
    """Bottom-up rewrite: ``fn`` may return a replacement for any node.

    Definition nodes are treated as atoms unless ``descend_defs``.
    """
    memo = {} if memo is None else memo
    for n in iter_dag([t]):
        if n.uid in memo:
            continue
        r = fn(n)
        if r is None:
            if n.op == "def" and not descend_defs:
                r = n
            else:
                r = rebuild(n, tuple(memo[a.uid] for a in n.args))
        memo[n.uid] = r
    return memo[t.uid]


def substitute_atoms(t: Term, mapping: Mapping[Term, Term], memo: dict | None = None) -> Term:
    if not mapping:
        return t
    return substitute(t, mapping.get, memo)


# -- evaluation -------------------------------------------------------------

class ArrayValue:
    """A total byte map: explicit entries over a default."""

    __slots__ = ("entries", "default")

    def __init__(self, entries=None, default: int = 0):
        self.entries = dict(entries or {})
        self.default = default

    def get(self, i: int) -> int:
        return self.entries.get(i, self.default)

    def set(self, i: int, v: int) -> "ArrayValue":
        out = ArrayValue(self.entries, self.default)
        out.entries[i] = v
        return out


def evaluate(t: Term, env: Mapping[str, object], memo: dict | None = None) -> object:
    """Evaluate under an assignment of symbol names to ints / ArrayValues.

    Missing array symbols read as all-zero arrays; missing bitvector
    symbols raise KeyError.
    """
    memo = {} if memo is None else memo
    for n in iter_dag([t]):
        if n.uid in memo:
            continue
        op = n.op
        if op == "const":
            v = n.value
        elif op == "var":
            v = env[n.name]
        elif op == "array":
            v = env.get(n.name) or ArrayValue()
        elif op == "constarray":
            v = ArrayValue(default=n.params[0])
        elif op == "def":
            v = memo[n.args[0].uid]
        elif op == "store":
            a, i, x = (memo[c.uid] for c in n.args)
            v = a.set(i, x)
        elif op == "select":
            a, i = (memo[c.uid] for c in n.args)
            v = a.get(i)
        elif len(n.args) == 1:
            a = n.args[0]
            v = apply_unop(op, n.params, memo[a.uid], a.width)
        else:
            a, b = n.args
            v = apply_binop(op, memo[a.uid], memo[b.uid], a.width, b.width)
        memo[n.uid] = v
    return memo[t.uid]


# -- printing ---------------------------------------------------------------

def pretty(t: Term, depth: int = 6) -> str:
    op = t.op
    if op == "const":
        return f"{t.value}:{t.width}"
    if op in ("var", "array", "def"):
        return t.name
    if op == "constarray":
        return f"const[{t.params[0]}]"
    if depth == 0:
        return "…"
    inner = " ".join(pretty(a, depth - 1) for a in t.args)
    if t.params:
        return f"({op}{list(t.params)} {inner})"
    return f"({op} {inner})"
