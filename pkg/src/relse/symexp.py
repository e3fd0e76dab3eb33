"""Relational expressions and relational memory.

A relational value is either shared by both executions (``Simple``) or
duplicated (``Pair``). The memory is a pair of arrays plus the history of
relational stores, which lets ``lookup`` resolve most reads syntactically
before anything reaches the solver.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterator, Mapping, Optional, Union

from . import terms as T
from .ir import mask
from .terms import RIGHT, Term


# -- relational expressions ---------------------------------------------------

@dataclass(frozen=True)
class Simple:
    term: Term

    @property
    def left(self) -> Term:
        return self.term

    @property
    def right(self) -> Term:
        return self.term

    @property
    def width(self) -> int:
        return self.term.width

    def __repr__(self) -> str:
        return f"<{self.term!r}>"


@dataclass(frozen=True)
class Pair:
    left: Term
    right: Term

    def __post_init__(self):
        if self.left.width != self.right.width:
            raise ValueError(f"pair sides differ in width: {self.left!r} | {self.right!r}")

    @property
    def width(self) -> int:
        return self.left.width

    def __repr__(self) -> str:
        return f"<{self.left!r} | {self.right!r}>"


RelExpr = Union[Simple, Pair]


def rel(left: Term, right: Term) -> RelExpr:
    """Build a relational value, collapsing structurally equal sides."""
    if left is right:
        return Simple(left)
    return Pair(left, right)


def left_proj(v: RelExpr) -> Term:
    return v.left


def right_proj(v: RelExpr) -> Term:
    return v.right


def lift(fn, *vals: RelExpr) -> RelExpr:
    """Apply a term constructor component-wise; shared inputs stay shared."""
    if all(isinstance(v, Simple) for v in vals):
        return Simple(fn(*(v.term for v in vals)))
    return rel(fn(*(v.left for v in vals)), fn(*(v.right for v in vals)))


# -- normalized indices -------------------------------------------------------

@dataclass(frozen=True)
class NormTerm:
    """``base + offset``; ``base`` is None for a pure constant."""

    base: Optional[Term]
    offset: int
    width: int = 32

    def term(self) -> Term:
        off = T.const(self.offset, self.width)
        return off if self.base is None else T.add(self.base, off)

    def __repr__(self) -> str:
        if self.base is None:
            return f"{self.offset:#x}"
        return f"{self.base!r} + {self.offset:#x}"


def _add_leaves(t: Term, sign: int, out: list, acc: list) -> None:
    if t.op == "add":
        _add_leaves(t.args[0], sign, out, acc)
        _add_leaves(t.args[1], sign, out, acc)
    elif t.op == "sub":
        _add_leaves(t.args[0], sign, out, acc)
        _add_leaves(t.args[1], -sign, out, acc)
    elif t.op == "neg":
        _add_leaves(t.args[0], -sign, out, acc)
    elif t.is_const:
        acc[0] += sign * t.value
    else:
        out.append((sign, t))


def normalize(t: Term) -> NormTerm:
    """Flatten add/sub chains into a residual base plus a constant offset."""
    w = t.width
    leaves: list = []
    acc = [0]
    _add_leaves(t, 1, leaves, acc)
    offset = acc[0] & mask(w)
    if not leaves:
        return NormTerm(None, offset, w)
    # cancel x - x
    counts: dict[int, int] = {}
    by_uid: dict[int, Term] = {}
    for sign, leaf in leaves:
        counts[leaf.uid] = counts.get(leaf.uid, 0) + sign
        by_uid[leaf.uid] = leaf
    base = None
    for uid in sorted(counts):
        c = counts[uid]
        leaf = by_uid[uid]
        for _ in range(abs(c)):
            if base is None:
                base = leaf if c > 0 else T.neg(leaf)
            else:
                base = T.add(base, leaf) if c > 0 else T.sub(base, leaf)
    if base is None:
        return NormTerm(None, offset, w)
    return NormTerm(base, offset, w)


class Cmp(enum.Enum):
    TRUE = "true"
    FALSE = "false"
    UNKNOWN = "unknown"


def compare(i: NormTerm, j: NormTerm) -> Cmp:
    """Syntactic index comparison: decided only when the bases coincide."""
    if i.base is j.base and i.width == j.width:
        return Cmp.TRUE if i.offset == j.offset else Cmp.FALSE
    return Cmp.UNKNOWN


# -- relational memory --------------------------------------------------------

@dataclass(frozen=True)
class StoreRecord:
    index: Optional[NormTerm]  # None: opaque (duplicated index), aborts lookups
    value: RelExpr
    prev: Optional["StoreRecord"]


@dataclass(frozen=True)
class RelMemory:
    left: Term
    right: Term
    init_left: Term
    init_right: Term
    last: Optional[StoreRecord] = None

    @classmethod
    def initial(cls, left: Term, right: Optional[Term] = None) -> "RelMemory":
        right = left if right is None else right
        return cls(left, right, left, right)

    def records(self) -> Iterator[StoreRecord]:
        r = self.last
        while r is not None:
            yield r
            r = r.prev

    @property
    def history(self) -> list[tuple[Optional[NormTerm], RelExpr]]:
        """Newest-first list of (normalized index, value)."""
        return [(r.index, r.value) for r in self.records()]

    def __len__(self) -> int:
        return sum(1 for _ in self.records())


def rel_store(m: RelMemory, i: Term, v: RelExpr) -> RelMemory:
    """Store at a shared index: both arrays get a store, history records it."""
    norm = normalize(i)
    return RelMemory(
        T.store(m.left, i, v.left),
        T.store(m.right, i, v.right),
        m.init_left,
        m.init_right,
        StoreRecord(norm, v, m.last),
    )


def rel_store_split(m: RelMemory, i_left: Term, i_right: Term, v: RelExpr) -> RelMemory:
    """Store at a duplicated index, bypassing syntactic resolution.

    The history gets an opaque record so later lookups abort instead of
    skipping past this write.
    """
    if i_left is i_right:
        return rel_store(m, i_left, v)
    return RelMemory(
        T.store(m.left, i_left, v.left),
        T.store(m.right, i_right, v.right),
        m.init_left,
        m.init_right,
        StoreRecord(None, v, m.last),
    )


def select_pair(m: RelMemory, i_left: Term, i_right: Term | None = None) -> RelExpr:
    i_right = i_left if i_right is None else i_right
    return rel(T.select(m.left, i_left), T.select(m.right, i_right))


def lookup(m: RelMemory, i: Term) -> RelExpr:
    """Resolve a read at shared index ``i`` by walking the store history."""
    norm = normalize(i)
    for r in m.records():
        if r.index is None:
            return select_pair(m, i)
        c = compare(norm, r.index)
        if c is Cmp.TRUE:
            return rel(r.value.left, r.value.right)
        if c is Cmp.UNKNOWN:
            return select_pair(m, i)
    return rel(T.select(m.init_left, i), T.select(m.init_right, i))


# -- canonical inlining -------------------------------------------------------

def is_canonical(t: Term) -> bool:
    """Variable, constant, or variable plus constant."""
    if t.is_atom or t.is_const:
        return True
    return t.op == "add" and t.args[0].is_atom and t.args[1].is_const


def inline_canonical(t: Term, bindings: Mapping[Term, Term] | None = None,
                     memo: dict | None = None) -> Term:
    """Replace bound atoms whose binding is in canonical form.

    Definition nodes carry their own binding; ``bindings`` adds explicit
    ones for free variables. Anything else is left untouched so the term
    does not grow.
    """
    bindings = bindings or {}

    def fn(n: Term):
        body = bindings.get(n)
        if body is None and n.op == "def":
            body = n.args[0]
        if body is not None and is_canonical(body):
            return inline_canonical(body, bindings, memo)
        return None

    return T.substitute(t, fn, memo)


# -- untainting ---------------------------------------------------------------

_INJECTIVE_UNARY = frozenset({"neg", "not", "zext", "sext"})
_INVERTIBLE_BINARY = frozenset({"add", "sub", "xor"})


def _is_right_atom(t: Term) -> bool:
    return t.is_atom and t.side == RIGHT


def deduce_equalities(left: Term, right: Term) -> list[tuple[Term, Term]]:
    """Atom equalities (right atom, left term) implied by ``left == right``."""
    out: list[tuple[Term, Term]] = []
    stack = [(left, right)]
    while stack:
        a, b = stack.pop()
        if a is b:
            continue
        if _is_right_atom(b) and a.is_atom and not _is_right_atom(a):
            out.append((b, a))
        elif a.op == b.op and a.op in _INJECTIVE_UNARY and a.params == b.params:
            stack.append((a.args[0], b.args[0]))
        elif a.op == b.op and a.op in _INVERTIBLE_BINARY:
            (a0, a1), (b0, b1) = a.args, b.args
            if a1.is_const and a1 is b1:
                stack.append((a0, b0))
            elif a0.is_const and a0 is b0:
                stack.append((a1, b1))
    return out


class UntaintCache:
    """Right-copy atoms known equal to left-side atoms, applied lazily."""

    __slots__ = ("mapping", "_memo")

    def __init__(self, mapping: Mapping[Term, Term] | None = None):
        self.mapping = dict(mapping or {})
        self._memo: dict = {}

    def __len__(self) -> int:
        return len(self.mapping)

    def extend(self, pairs) -> "UntaintCache":
        new = {r: l for r, l in pairs if r not in self.mapping}
        if not new:
            return self
        merged = dict(self.mapping)
        merged.update(new)
        return UntaintCache(merged)

    def term(self, t: Term) -> Term:
        if not self.mapping:
            return t
        return T.substitute_atoms(t, self.mapping, self._memo)

    def apply(self, v: RelExpr) -> RelExpr:
        if isinstance(v, Simple) or not self.mapping:
            return v
        return rel(v.left, self.term(v.right))


def untaint(regs: Mapping[str, RelExpr], mem: RelMemory, leaked: RelExpr):
    """Propagate equalities deduced from a proven-secure leak into registers
    and memory; returns the updated ``(regs, mem)``."""
    if isinstance(leaked, Simple):
        return dict(regs), mem
    cache = UntaintCache().extend(deduce_equalities(leaked.left, leaked.right))
    if not cache.mapping:
        return dict(regs), mem
    new_regs = {k: cache.apply(v) for k, v in regs.items()}
    records = list(mem.records())
    new_mem = RelMemory(mem.left, cache.term(mem.right), mem.init_left, cache.term(mem.init_right))
    prev = None
    for r in reversed(records):
        prev = StoreRecord(r.index, cache.apply(r.value), prev)
    new_mem = RelMemory(new_mem.left, new_mem.right, new_mem.init_left, new_mem.init_right, prev)
    return new_regs, new_mem
