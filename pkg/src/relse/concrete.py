"""Leakage-instrumented concrete interpreter and a brute-force CT oracle.

Every step returns the observations an attacker gets from it: load and
store addresses, branch condition values and dynamic jump targets. The
oracle enumerates pairs of low-equivalent initial states over a small
input domain and compares their leakage traces.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field, replace
from typing import Mapping, Optional, Union

from .ir import (
    ADDR_WIDTH, Assign, BinOp, BitVec, Const, DJump, Expr, Goto, Halt, IRError,
    Ite, Load, Program, Store, UnOp, Var, apply_binop, apply_unop,
    binop_width, maybe_uninitialized, unop_width,
)

RUNNING, HALTED, ERROR = "running", "halted", "error"


class ConcreteError(Exception):
    def __init__(self, loc: int, message: str):
        super().__init__(message)
        self.loc = loc
        self.step: Optional[int] = None


class StuckNoInstruction(ConcreteError):
    def __init__(self, loc: int):
        super().__init__(loc, f"no instruction at location {loc}")


class DivisionByZero(ConcreteError):
    def __init__(self, loc: int):
        super().__init__(loc, f"division by zero at location {loc}")


class BudgetExceeded(Exception):
    pass


# -- leakage ----------------------------------------------------------------

@dataclass(frozen=True)
class MemAccess:
    addr: BitVec

    def __str__(self) -> str:
        return f"mem({self.addr.value:#x})"


@dataclass(frozen=True)
class Branch:
    taken: BitVec

    def __str__(self) -> str:
        return f"branch({self.taken.value})"


@dataclass(frozen=True)
class JumpTarget:
    addr: BitVec

    def __str__(self) -> str:
        return f"jump({self.addr.value:#x})"


LeakEvent = Union[MemAccess, Branch, JumpTarget]
Leakage = tuple  # of LeakEvent


# -- state ------------------------------------------------------------------

@dataclass(frozen=True)
class ConcState:
    loc: int
    regs: Mapping[str, BitVec]
    mem: Mapping[int, int] = field(default_factory=dict)
    mem_default: int = 0
    status: str = RUNNING
    error: Optional[ConcreteError] = None

    @property
    def halted(self) -> bool:
        return self.status != RUNNING

    def read(self, addr: int) -> int:
        return self.mem.get(addr, self.mem_default)

    def mem_equal(self, other: "ConcState", skip=frozenset()) -> bool:
        keys = set(self.mem) | set(other.mem)
        if self.mem_default != other.mem_default:
            return False
        return all(self.read(a) == other.read(a) for a in keys if a not in skip)


def region_bytes(p: Program, regs: Mapping[str, BitVec], region, value: int) -> dict[int, int]:
    """Little-endian bytes of ``value`` laid out over ``region``."""
    base = regs[region.base_reg].value
    return {a: (value >> (8 * i)) & 0xFF for i, a in enumerate(p.region_addresses(region, base))}


def make_state(p: Program, regs: Mapping[str, int] = (), mem: Mapping[int, int] = (),
               mem_default: int = 0) -> ConcState:
    """Initial state: ``init_regs`` overlaid with ``regs``, memory ``mem``."""
    r = dict(p.init_regs)
    for name, v in dict(regs).items():
        r[name] = BitVec(p.reg_widths.get(name, ADDR_WIDTH), v)
    return ConcState(p.entry, r, dict(mem), mem_default)


# -- evaluation -------------------------------------------------------------

def eval_expr(s: ConcState, e: Expr, leaks: list, loc: int) -> BitVec:
    if isinstance(e, Const):
        return e.value
    if isinstance(e, Var):
        try:
            return s.regs[e.name]
        except KeyError:
            raise ConcreteError(loc, f"register {e.name} read before written") from None
    if isinstance(e, Load):
        a = eval_expr(s, e.addr, leaks, loc)
        leaks.append(MemAccess(a))
        return BitVec(8, s.read(a.value))
    if isinstance(e, UnOp):
        a = eval_expr(s, e.arg, leaks, loc)
        return BitVec(unop_width(e.op, e.params, a.width), apply_unop(e.op, e.params, a.value, a.width))
    if isinstance(e, BinOp):
        a = eval_expr(s, e.lhs, leaks, loc)
        b = eval_expr(s, e.rhs, leaks, loc)
        if e.op == "udiv" and b.value == 0:
            raise DivisionByZero(loc)
        return BitVec(binop_width(e.op, a.width, b.width), apply_binop(e.op, a.value, b.value, a.width, b.width))
    raise TypeError(e)


def conc_step(p: Program, s: ConcState) -> tuple[ConcState, Leakage]:
    """Execute one instruction; deterministic."""
    if s.halted:
        return s, ()
    ins = p.code.get(s.loc)
    if ins is None:
        raise StuckNoInstruction(s.loc)
    leaks: list = []
    loc = s.loc
    if isinstance(ins, Assign):
        v = eval_expr(s, ins.rhs, leaks, loc)
        regs = dict(s.regs)
        regs[ins.dst] = v
        return replace(s, loc=p.next_loc(loc), regs=regs), tuple(leaks)
    if isinstance(ins, Store):
        i = eval_expr(s, ins.idx, leaks, loc)
        v = eval_expr(s, ins.val, leaks, loc)
        leaks.append(MemAccess(i))
        mem = dict(s.mem)
        mem[i.value] = v.value
        return replace(s, loc=p.next_loc(loc), mem=mem), tuple(leaks)
    if isinstance(ins, Goto):
        return replace(s, loc=ins.target), ()
    if isinstance(ins, Ite):
        c = eval_expr(s, ins.cond, leaks, loc)
        leaks.append(Branch(c))
        return replace(s, loc=ins.then if c.value else ins.else_), tuple(leaks)
    if isinstance(ins, DJump):
        t = eval_expr(s, ins.target, leaks, loc)
        leaks.append(JumpTarget(t))
        return replace(s, loc=t.value), tuple(leaks)
    if isinstance(ins, Halt):
        return replace(s, status=HALTED), ()
    raise TypeError(ins)


def conc_run(p: Program, s0: ConcState, k: int, on_error: str = "raise"):
    """Run at most ``k`` steps; returns ``(state, leakage, steps_taken)``.

    With ``on_error="halt"`` an execution error ends the run in an error
    state instead of raising.
    """
    if k < 0:
        raise ValueError("step bound must be >= 0")
    s = s0
    out: list = []
    steps = 0
    while steps < k and not s.halted:
        try:
            s, leaks = conc_step(p, s)
        except ConcreteError as exc:
            exc.step = steps
            if on_error != "halt":
                raise
            s = replace(s, status=ERROR, error=exc)
            break
        out.extend(leaks)
        steps += 1
    return s, tuple(out), steps


def low_equivalent(p: Program, s: ConcState, t: ConcState) -> bool:
    """Equal registers and equal memory outside the high regions."""
    if dict(s.regs) != dict(t.regs):
        return False
    high: set[int] = set()
    for r in p.highs:
        if r.base_reg not in s.regs:
            return False
        high.update(p.region_addresses(r, s.regs[r.base_reg].value))
    return s.mem_equal(t, frozenset(high))


# -- oracle -----------------------------------------------------------------

@dataclass(frozen=True)
class Witness:
    low: dict       # input name -> value, shared by both runs
    high_a: dict
    high_b: dict
    divergence: int
    leak_a: Leakage
    leak_b: Leakage

    def to_json(self) -> dict:
        return {
            "low": self.low,
            "high_a": self.high_a,
            "high_b": self.high_b,
            "divergence": self.divergence,
            "leak_a": [str(e) for e in self.leak_a],
            "leak_b": [str(e) for e in self.leak_b],
        }


@dataclass(frozen=True)
class OracleVerdict:
    ct: bool
    k: int
    bits: int
    witness: Optional[Witness] = None
    runs: int = 0

    @property
    def status(self) -> str:
        return "CT" if self.ct else "NotCT"


def first_divergence(a: Leakage, b: Leakage) -> Optional[int]:
    for i, (x, y) in enumerate(zip(a, b)):
        if x != y:
            return i
    if len(a) != len(b):
        return min(len(a), len(b))
    return None


def oracle_inputs(p: Program) -> tuple[list[tuple[str, int]], list[tuple[str, int]]]:
    """(name, bit width) of every low and every high input.

    Each region is one little-endian integer; registers read before any
    write and not initialized are low inputs.
    """
    for r in p.regions:
        if r.base_reg not in p.init_regs:
            raise IRError(f"region base {r.base_reg} must be initialized for the oracle")
    lows = [(f"low[{i}]", 8 * r.length) for i, r in enumerate(p.lows)]
    lows += [(name, p.reg_widths.get(name, ADDR_WIDTH)) for name in maybe_uninitialized(p)]
    highs = [(f"high[{i}]", 8 * r.length) for i, r in enumerate(p.highs)]
    return lows, highs


def oracle_state(p: Program, low: Mapping[str, int], high: Mapping[str, int]) -> ConcState:
    regs = {n: v for n, v in low.items() if "[" not in n}
    s = make_state(p, regs)
    mem: dict[int, int] = {}
    for i, r in enumerate(p.highs):
        mem.update(region_bytes(p, s.regs, r, high[f"high[{i}]"]))
    for i, r in enumerate(p.lows):
        mem.update(region_bytes(p, s.regs, r, low[f"low[{i}]"]))
    return replace(s, mem=mem)


def ct_oracle(p: Program, k: int, bits: int = 4, budget: int = 24) -> OracleVerdict:
    """Decide CT up to ``k`` by enumeration, each input limited to ``bits`` bits.

    For each low assignment every high assignment is run once; the program
    is CT iff all of them produce the same leakage. Cost is counted as if
    pairs were enumerated: ``bits * (lows + 2 * highs)`` must not exceed
    ``budget``.
    """
    lows, highs = oracle_inputs(p)
    cost = bits * (len(lows) + 2 * len(highs))
    if cost > budget:
        raise BudgetExceeded(f"{cost} input bits exceed the budget of {budget}")

    def domain(inputs):
        ranges = [range(1 << min(bits, w)) for _, w in inputs]
        names = [n for n, _ in inputs]
        for combo in itertools.product(*ranges):
            yield dict(zip(names, combo))

    runs = 0
    for low in domain(lows):
        ref = None
        for high in domain(highs):
            _, leak, _ = conc_run(p, oracle_state(p, low, high), k, on_error="halt")
            runs += 1
            if ref is None:
                ref = (high, leak)
                continue
            d = first_divergence(ref[1], leak)
            if d is not None:
                w = Witness(low, ref[0], high, d, ref[1], leak)
                return OracleVerdict(False, k, bits, w, runs)
    return OracleVerdict(True, k, bits, None, runs)

