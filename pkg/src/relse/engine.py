"""Relational symbolic execution for constant-time analysis.

Two executions of the program are explored in lockstep. Values both runs
must agree on are kept as one shared term; anything touched by a secret
is a left/right pair. Every leak (memory index, branch condition, jump
target) is checked: a shared value is secure for free, a pair needs an
insecurity query ``π ∧ left ≠ right``.

Modes:

* ``binsec-rel``: on-the-fly read-over-write, untainting and fault-packing.
* ``relse``: the plain relational engine, all three disabled.
* ``sc``: self-composition; low inputs are duplicated and equated in π.
* ``se``: one execution, exploration queries only (baseline for overhead).
"""

from __future__ import annotations

import enum
import logging
import random
import time
from dataclasses import dataclass, field, replace
from typing import Optional, Union

from . import symexp as S
from . import terms as T
from .concrete import conc_run, first_divergence, make_state, region_bytes
from .ir import (
    ADDR_WIDTH, Assign, BinOp, BitVec, Const, DJump, Expr, Goto, Halt, Ite, Load,
    Program, Store, UnOp, Var, maybe_uninitialized,
)
from .solver import QueryKind, Sat, SmtSolver, Unknown as SolverUnknownResult, Unsat, memory_fetch_terms
from .symexp import Pair, RelExpr, RelMemory, Simple, UntaintCache, rel
from .terms import LEFT, RIGHT, Term

log = logging.getLogger(__name__)

MEMORY_NAME = "mem.0"
RIGHT_SUFFIX = "_r"

LEAK_KINDS = {"mem": "MemAccess", "branch": "Branch", "jump": "JumpTarget"}


class Mode(enum.Enum):
    BINSEC_REL = "binsec-rel"
    RELSE = "relse"
    SC = "sc"
    SE = "se"


# (flyrow, untaint, fault_pack)
PRESETS = {
    Mode.BINSEC_REL: (True, True, True),
    Mode.RELSE: (False, False, False),
    Mode.SC: (False, False, False),
    Mode.SE: (True, False, False),
}


class EngineError(Exception):
    pass


class ModelIncomplete(EngineError):
    pass


class InsecurityFound(Exception):
    def __init__(self, violation: "Violation"):
        super().__init__(f"insecure {violation.kind} at {violation.loc}")
        self.violation = violation


@dataclass(frozen=True)
class AnalysisConfig:
    mode: Mode = Mode.BINSEC_REL
    flyrow: Optional[bool] = None
    untaint: Optional[bool] = None
    fault_pack: Optional[bool] = None
    depth: int = 1000
    djump_enum_bound: int = 16
    solver_timeout: Optional[float] = None
    global_timeout: Optional[float] = None
    stop_at_first: bool = False
    solver_command: Optional[object] = None
    # None: initial memory is a free array; an int makes every cell that byte
    memory_default: Optional[int] = None
    # restrict every input to its low ``input_bits`` bits (oracle comparisons)
    input_bits: Optional[int] = None
    sc_duplicate_all_inputs: bool = False
    audit_fraction: float = 0.0
    audit_seed: int = 0
    verify_models: bool = False

    def __post_init__(self):
        mode = Mode(self.mode)
        object.__setattr__(self, "mode", mode)
        for name, default in zip(("flyrow", "untaint", "fault_pack"), PRESETS[mode]):
            if getattr(self, name) is None:
                object.__setattr__(self, name, default)
        if self.depth < 0:
            raise ValueError("depth bound must be >= 0")

    @property
    def relational(self) -> bool:
        return self.mode is not Mode.SE

    def to_json(self) -> dict:
        return {
            "mode": self.mode.value,
            "flyrow": self.flyrow,
            "untaint": self.untaint,
            "fault_pack": self.fault_pack,
            "depth": self.depth,
            "djump_enum_bound": self.djump_enum_bound,
            "solver_timeout": self.solver_timeout,
            "global_timeout": self.global_timeout,
            "stop_at_first": self.stop_at_first,
            "memory_default": self.memory_default,
            "input_bits": self.input_bits,
            "sc_duplicate_all_inputs": self.sc_duplicate_all_inputs,
        }


# -- states and results -------------------------------------------------------

@dataclass(frozen=True)
class PendingCheck:
    loc: int
    kind: str
    value: Pair


@dataclass(frozen=True)
class SymState:
    loc: int
    regs: dict
    mem: RelMemory
    path: tuple = ()            # conjuncts of π, oldest first
    depth: int = 0
    pending: tuple = ()         # PendingCheck, fault-packing only
    untaint: UntaintCache = field(default_factory=UntaintCache)
    trace: Optional[tuple] = None  # cons list (loc, parent)
    block: tuple = ()           # locations of the current basic block so far

    @property
    def path_pred(self) -> Term:
        return T.conj(self.path)

    def trace_list(self) -> list[int]:
        out = []
        node = self.trace
        while node is not None:
            out.append(node[0])
            node = node[1]
        return out[::-1]


@dataclass
class Violation:
    loc: int
    kind: str
    model: dict                 # input name -> BitVec, both copies
    memory: dict                # initial-memory address -> byte
    trace: list
    packed: bool = False
    block_locs: list = field(default_factory=list)
    depth: int = 0
    validated: Optional[bool] = None

    def to_json(self) -> dict:
        return {
            "loc": self.loc,
            "kind": self.kind,
            "model": {k: {"width": v.width, "value": v.value} for k, v in sorted(self.model.items())},
            "memory": {str(a): b for a, b in sorted(self.memory.items())},
            "trace": list(self.trace),
            "packed": self.packed,
            "block_locs": list(self.block_locs),
            "depth": self.depth,
            "validated": self.validated,
        }


@dataclass(frozen=True)
class SecureUpTo:
    k: int
    exhaustive: bool = False  # every path halted before the bound

    name = "secure"


@dataclass(frozen=True)
class Insecure:
    violations: tuple

    name = "insecure"


@dataclass(frozen=True)
class UnknownStatus:
    reason: str  # "timeout" | "bound" | "solver-unknown"

    name = "unknown"


Status = Union[SecureUpTo, Insecure, UnknownStatus]


@dataclass
class Metrics:
    instrs: int = 0
    queries_explore: int = 0
    queries_insecurity: int = 0
    time_total: float = 0.0
    timeouts: int = 0
    diagnostics: dict = field(default_factory=dict)

    @property
    def queries_total(self) -> int:
        return self.queries_explore + self.queries_insecurity

    @property
    def instrs_per_sec(self) -> float:
        return self.instrs / self.time_total if self.time_total > 0 else 0.0

    def to_json(self) -> dict:
        return {
            "instrs": self.instrs,
            "instrs_per_sec": self.instrs_per_sec,
            "queries_total": self.queries_total,
            "queries_explore": self.queries_explore,
            "queries_insecurity": self.queries_insecurity,
            "time_total": self.time_total,
            "timeouts": self.timeouts,
            "diagnostics": dict(self.diagnostics),
        }


@dataclass
class Verdict:
    status: Status
    stats: Metrics

    @property
    def name(self) -> str:
        return self.status.name

    @property
    def violations(self) -> tuple:
        return self.status.violations if isinstance(self.status, Insecure) else ()

    @property
    def secure(self) -> bool:
        return isinstance(self.status, SecureUpTo)

    @property
    def insecure(self) -> bool:
        return isinstance(self.status, Insecure)


# -- the executor -------------------------------------------------------------

class Explorer:
    """One depth-first exploration of a program; owns a solver session."""

    def __init__(self, p: Program, cfg: AnalysisConfig = AnalysisConfig(),
                 solver: Optional[SmtSolver] = None):
        self.p = p
        self.cfg = cfg
        self._own_solver = solver is None
        if solver is None:
            solver = SmtSolver(cfg.solver_command, cfg.solver_timeout, cfg.verify_models)
        else:
            solver.reset()
        self.solver = solver
        self.metrics = Metrics()
        self.diag = self.metrics.diagnostics
        for key in ("paths", "paths_bounded", "split_accesses", "untainted_vars",
                    "audit_checks", "audit_failures", "unvalidated_violations"):
            self.diag[key] = 0
        self.violations: list[Violation] = []
        self.unknown: Optional[str] = None
        self.inputs: list[Term] = []
        self._defs = 0
        self._inline_memo: dict = {}
        self._rng = random.Random(cfg.audit_seed)
        self._deadline = None

    def close(self) -> None:
        if self._own_solver:
            self.solver.close()

    # -- initial state ------------------------------------------------------

    def _input(self, name: str, width: int, duplicate: bool, bits_constraint: list) -> RelExpr:
        left = T.var(name, width, LEFT)
        self.inputs.append(left)
        bits_constraint.append(left)
        if not duplicate:
            return Simple(left)
        right = T.var(name + RIGHT_SUFFIX, width, RIGHT)
        self.inputs.append(right)
        bits_constraint.append(right)
        return Pair(left, right)

    def _bits_limit(self, v: Term, allowed: int) -> Optional[Term]:
        if allowed >= v.width:
            return None
        if allowed <= 0:
            return T.eq(v, T.const(0, v.width))
        return T.binop("ult", v, T.const(1 << allowed, v.width))

    def init_state(self) -> SymState:
        p, cfg = self.p, self.cfg
        relational = cfg.relational
        sc = cfg.mode is Mode.SC
        path: list[Term] = []

        def limit(v: Term, allowed: Optional[int]) -> None:
            if cfg.input_bits is None or allowed is None:
                return
            c = self._bits_limit(v, allowed)
            if c is not None:
                path.append(c)

        regs: dict[str, RelExpr] = {n: Simple(T.const(bv.value, bv.width)) for n, bv in p.init_regs.items()}
        for name in maybe_uninitialized(p):
            w = p.reg_widths.get(name, ADDR_WIDTH)
            made: list = []
            v = self._input(name, w, sc and cfg.sc_duplicate_all_inputs, made)
            for x in made:
                limit(x, cfg.input_bits)
            if isinstance(v, Pair):
                path.append(T.eq(v.left, v.right))
            regs[name] = v
        root = T.array(MEMORY_NAME) if cfg.memory_default is None else T.const_array(cfg.memory_default)
        mem = RelMemory.initial(root)

        def region_index(r, j) -> Term:
            base = regs.get(r.base_reg)
            if base is None:
                base = regs[r.base_reg] = Simple(T.var(r.base_reg, ADDR_WIDTH))
                self.inputs.append(base.term)
            if not isinstance(base, Simple):
                raise EngineError(f"region base {r.base_reg} is duplicated")
            return T.add(base.term, T.const(r.offset + j, ADDR_WIDTH))

        for kind, regions, dup in (("high", p.highs, relational), ("low", p.lows, sc)):
            for i, r in enumerate(regions):
                for j in range(r.length):
                    made = []
                    v = self._input(f"{kind}.{i}.{j}", 8, dup, made)
                    allowed = None if cfg.input_bits is None else cfg.input_bits - 8 * j
                    for x in made:
                        limit(x, allowed)
                    if kind == "low" and isinstance(v, Pair):
                        path.append(T.eq(v.left, v.right))
                    mem = S.rel_store(mem, region_index(r, j), v)
        return SymState(p.entry, regs, mem, tuple(c for c in path if not (c.is_const and c.value == 1)))

    # -- expressions --------------------------------------------------------

    def _read_reg(self, s: SymState, name: str, width: int) -> RelExpr:
        v = s.regs.get(name)
        if v is None:
            v = Simple(T.var(name, width))
        return s.untaint.apply(v)

    def _index(self, t: Term) -> Term:
        if self.cfg.flyrow:
            return S.inline_canonical(t, None, self._inline_memo)
        return t

    def _load(self, s: SymState, a: RelExpr) -> RelExpr:
        if isinstance(a, Pair):
            self.diag["split_accesses"] += 1
            return s.untaint.apply(S.select_pair(s.mem, a.left, a.right))
        idx = self._index(a.term)
        if self.cfg.flyrow:
            return s.untaint.apply(S.lookup(s.mem, idx))
        return s.untaint.apply(S.select_pair(s.mem, idx))

    def eval_expr(self, s: SymState, e: Expr, leaks: list) -> RelExpr:
        """Relational value of ``e``; memory reads append ``("mem", index)``
        to ``leaks`` in evaluation order."""
        if isinstance(e, Const):
            return Simple(T.const(e.value.value, e.value.width))
        if isinstance(e, Var):
            return self._read_reg(s, e.name, e.width)
        if isinstance(e, Load):
            a = self.eval_expr(s, e.addr, leaks)
            leaks.append(("mem", a))
            return self._load(s, a)
        if isinstance(e, UnOp):
            a = self.eval_expr(s, e.arg, leaks)
            return S.lift(lambda x: T.unop(e.op, x, e.params), a)
        if isinstance(e, BinOp):
            a = self.eval_expr(s, e.lhs, leaks)
            b = self.eval_expr(s, e.rhs, leaks)
            return S.lift(lambda x, y: T.binop(e.op, x, y), a, b)
        raise TypeError(e)

    def _bind(self, dst: str, t: Term, side: str) -> Term:
        if self.cfg.flyrow:
            t = S.inline_canonical(t, None, self._inline_memo)
        if t.is_atom or t.is_const or (self.cfg.flyrow and S.is_canonical(t)):
            return t
        self._defs += 1
        name = f"{dst}.{self._defs}" + (RIGHT_SUFFIX if side == RIGHT else "")
        return T.define(name, t, side)

    def _bind_rel(self, dst: str, v: RelExpr) -> RelExpr:
        if isinstance(v, Simple):
            return Simple(self._bind(dst, v.term, LEFT))
        return rel(self._bind(dst, v.left, LEFT), self._bind(dst, v.right, RIGHT))

    # -- solver helpers -----------------------------------------------------

    def _count(self, kind: QueryKind) -> None:
        if kind is QueryKind.EXPLORE:
            self.metrics.queries_explore += 1
        else:
            self.metrics.queries_insecurity += 1

    def _query(self, kind: QueryKind, path, goal: Optional[Term], fetch=()):
        self._count(kind)
        r = self.solver.check(path, goal, fetch)
        if isinstance(r, SolverUnknownResult):
            if r.reason == "timeout":
                self.metrics.timeouts += 1
            self._set_unknown("timeout" if r.reason == "timeout" else "solver-unknown")
        return r

    def _set_unknown(self, reason: str) -> None:
        if self.unknown is None:
            self.unknown = reason

    def _fetch_terms(self, path, goal: Term, extra=()) -> list[Term]:
        roots = list(path) + [goal]
        present = {t for t in T.free_symbols(roots) if t.op == "var"}
        out = [v for v in self.inputs if v in present]
        out += memory_fetch_terms(roots)
        out += list(extra)
        return out

    # -- leak checks --------------------------------------------------------

    def _leak(self, s: SymState, loc: int, kind: str, v: RelExpr) -> SymState:
        if not self.cfg.relational:
            return s
        v = s.untaint.apply(v)
        if isinstance(v, Simple):
            return s
        if self.cfg.fault_pack:
            return replace(s, pending=s.pending + (PendingCheck(loc, kind, v),))
        return self.secleak(s, loc, kind, v)

    def secleak(self, s: SymState, loc: int, kind: str, v: Pair) -> SymState:
        """Insecurity query for a single leaked pair; returns the state the
        path continues in."""
        goal = T.ne(v.left, v.right)
        r = self._query(QueryKind.INSECURITY, s.path, goal, self._fetch_terms(s.path, goal))
        if isinstance(r, Unsat):
            self._audit(s, goal)
            return self._untaint(s, [v])
        if isinstance(r, Sat):
            self._report(s, r, loc, LEAK_KINDS[kind], packed=False, depth=s.depth + 1)
            return self._assume_equal(s, [v])
        return s

    def flush_checks(self, s: SymState, depth: int) -> Optional[SymState]:
        """One disjunctive query over the block's pending pairs."""
        if not s.pending:
            return s
        checks = s.pending
        s = replace(s, pending=())
        goal = T.disj(T.ne(c.value.left, c.value.right) for c in checks)
        extra = [t for c in checks for t in (c.value.left, c.value.right)]
        r = self._query(QueryKind.INSECURITY, s.path, goal, self._fetch_terms(s.path, goal, extra))
        values = [c.value for c in checks]
        if isinstance(r, Unsat):
            self._audit(s, goal)
            return self._untaint(s, values)
        if isinstance(r, Sat):
            first = next((c for c in checks if r.values[c.value.left] != r.values[c.value.right]), checks[0])
            self._report(s, r, first.loc, LEAK_KINDS[first.kind], packed=True, depth=depth)
            return self._assume_equal(s, values)
        return s

    def _audit(self, s: SymState, goal: Term) -> None:
        if self.cfg.audit_fraction <= 0 or self._rng.random() >= self.cfg.audit_fraction:
            return
        self.diag["audit_checks"] += 1
        if isinstance(self.solver.check(s.path, goal), Sat):
            self.diag["audit_failures"] += 1

    def _untaint(self, s: SymState, values) -> SymState:
        if not self.cfg.untaint:
            return s
        pairs = [eq for v in values for eq in S.deduce_equalities(v.left, v.right)]
        cache = s.untaint.extend(pairs)
        if cache is s.untaint:
            return s
        self.diag["untainted_vars"] += len(cache) - len(s.untaint)
        return replace(s, untaint=cache)

    def _assume_equal(self, s: SymState, values) -> Optional[SymState]:
        """Continue past a violation on the runs where the leaks agree."""
        eqs = [T.eq(v.left, v.right) for v in values]
        r = self._query(QueryKind.EXPLORE, s.path, T.conj(eqs))
        if not isinstance(r, Sat):
            return None
        s = replace(s, path=s.path + tuple(eqs))
        return self._untaint(s, values)

    def _report(self, s: SymState, r: Sat, loc: int, kind: str, packed: bool, depth: int) -> None:
        model = {}
        for v in self.inputs:
            model[v.name] = BitVec(v.width, r.values.get(v, 0))
        memory = {}
        for t, val in r.values.items():
            if t.op == "select" and t.args[0].op == "array":
                idx = t.args[1]
                if idx in r.values:
                    memory[r.values[idx]] = val
                elif idx.is_const:
                    memory[idx.value] = val
        viol = Violation(loc, kind, model, memory, s.trace_list(), packed,
                         list(s.block) if packed else [loc], depth)
        viol.validated = validate_violation(self.p, viol, self.cfg)
        if not viol.validated:
            self.diag["unvalidated_violations"] += 1
            log.error("violation at %s failed concrete replay", loc)
        self.violations.append(viol)
        if self.cfg.stop_at_first:
            raise InsecurityFound(viol)

    # -- instructions -------------------------------------------------------

    def _leaks(self, s: SymState, loc: int, leaks: list) -> Optional[SymState]:
        for kind, v in leaks:
            s = self._leak(s, loc, kind, v)
            if s is None:
                return None
        return s

    def _advance(self, s: SymState, loc: Optional[int], terminator: bool, **kw) -> SymState:
        block = () if terminator else s.block
        return replace(s, loc=loc, depth=s.depth + 1, block=block, **kw)

    def sym_step(self, s: SymState) -> list[SymState]:
        p = self.p
        loc = s.loc
        ins = p.code.get(loc)
        if ins is None:
            raise EngineError(f"no instruction at location {loc}")
        self.metrics.instrs += 1
        s = replace(s, block=s.block + (loc,), trace=(loc, s.trace))
        leaks: list = []
        if isinstance(ins, Assign):
            v = self.eval_expr(s, ins.rhs, leaks)
            s = self._leaks(s, loc, leaks)
            if s is None:
                return []
            regs = dict(s.regs)
            regs[ins.dst] = self._bind_rel(ins.dst, s.untaint.apply(v))
            return [self._advance(s, p.next_loc(loc), False, regs=regs)]
        if isinstance(ins, Store):
            i = self.eval_expr(s, ins.idx, leaks)
            v = self.eval_expr(s, ins.val, leaks)
            leaks.append(("mem", i))
            s = self._leaks(s, loc, leaks)
            if s is None:
                return []
            i, v = s.untaint.apply(i), s.untaint.apply(v)
            if isinstance(i, Simple):
                mem = S.rel_store(s.mem, self._index(i.term), v)
            else:
                self.diag["split_accesses"] += 1
                mem = S.rel_store_split(s.mem, i.left, i.right, v)
            return [self._advance(s, p.next_loc(loc), False, mem=mem)]
        if isinstance(ins, Goto):
            s = self._end_block(s, s.depth + 1)
            return [] if s is None else [self._advance(s, ins.target, True)]
        if isinstance(ins, Halt):
            self._end_block(s, s.depth + 1)
            self.diag["paths"] += 1
            return []
        if isinstance(ins, Ite):
            c = self.eval_expr(s, ins.cond, leaks)
            leaks.append(("branch", c))
            s = self._leaks(s, loc, leaks)
            s = s and self._end_block(s, s.depth + 1)
            if s is None:
                return []
            cl = s.untaint.apply(c).left
            if cl.is_const:
                return [self._advance(s, ins.then if cl.value else ins.else_, True)]
            out = []
            for taken, target in ((cl, ins.then), (T.bvnot(cl), ins.else_)):
                r = self._query(QueryKind.EXPLORE, s.path, taken)
                if isinstance(r, Sat):
                    out.append(self._advance(s, target, True, path=s.path + (taken,)))
            return out
        if isinstance(ins, DJump):
            t = self.eval_expr(s, ins.target, leaks)
            leaks.append(("jump", t))
            s = self._leaks(s, loc, leaks)
            s = s and self._end_block(s, s.depth + 1)
            if s is None:
                return []
            tl = s.untaint.apply(t).left
            if tl.is_const:
                return [self._advance(s, tl.value, True)] if tl.value in p.code else self._dead_end()
            targets = self._enumerate(s, tl)
            out = []
            for value in sorted(targets):
                if value in p.code:
                    cond = T.eq(tl, T.const(value, tl.width))
                    out.append(self._advance(s, value, True, path=s.path + (cond,)))
                else:
                    self.diag["paths"] += 1
            return out
        raise TypeError(ins)

    def _dead_end(self) -> list:
        self.diag["paths"] += 1
        return []

    def _enumerate(self, s: SymState, tl: Term) -> list[int]:
        found: list[int] = []
        while True:
            block = T.conj(T.ne(tl, T.const(v, tl.width)) for v in found)
            r = self._query(QueryKind.EXPLORE, s.path, block, [tl])
            if not isinstance(r, Sat):
                return found
            if len(found) >= self.cfg.djump_enum_bound:
                self._set_unknown("bound")
                return found
            found.append(r.values[tl])

    def _end_block(self, s: SymState, depth: int) -> Optional[SymState]:
        if self.cfg.fault_pack:
            s = self.flush_checks(s, depth)
        return s

    # -- exploration --------------------------------------------------------

    def explore(self) -> Verdict:
        cfg = self.cfg
        start = time.monotonic()
        if cfg.global_timeout:
            self._deadline = start + cfg.global_timeout
        exhaustive = True
        try:
            stack = [self.init_state()]
            while stack:
                if self._deadline is not None and time.monotonic() > self._deadline:
                    self._set_unknown("timeout")
                    break
                s = stack.pop()
                if s.depth >= cfg.depth:
                    exhaustive = False
                    self.diag["paths_bounded"] += 1
                    self._end_block(s, s.depth)
                    continue
                stack.extend(reversed(self.sym_step(s)))
        except InsecurityFound:
            pass
        finally:
            self.metrics.time_total = time.monotonic() - start
            self.diag["solver_crashes"] = self.solver.crashes
        if self.violations:
            status: Status = Insecure(tuple(self.violations))
        elif self.unknown is not None:
            status = UnknownStatus(self.unknown)
        else:
            status = SecureUpTo(cfg.depth, exhaustive)
        return Verdict(status, self.metrics)


# -- validation -------------------------------------------------------------

def replay_states(p: Program, v: Violation, cfg: AnalysisConfig):
    """The two concrete initial states a violation's model describes."""
    def value(name: str, side: str) -> int:
        if side == RIGHT and name + RIGHT_SUFFIX in v.model:
            name = name + RIGHT_SUFFIX
        if name not in v.model:
            raise ModelIncomplete(f"model lacks {name}")
        return v.model[name].value

    default = 0 if cfg.memory_default is None else cfg.memory_default
    states = []
    for side in (LEFT, RIGHT):
        regs = {n: value(n, side) for n in maybe_uninitialized(p)}
        for r in p.regions:
            if r.base_reg not in p.init_regs and r.base_reg not in regs:
                regs[r.base_reg] = value(r.base_reg, side)
        base = make_state(p, regs, v.memory, default)
        mem = dict(v.memory)
        for kind, regions in (("high", p.highs), ("low", p.lows)):
            for i, r in enumerate(regions):
                val = 0
                for j in range(r.length):
                    val |= value(f"{kind}.{i}.{j}", side) << (8 * j)
                mem.update(region_bytes(p, base.regs, r, val))
        states.append(replace(base, mem=mem))
    return states[0], states[1]


def validate_violation(p: Program, v: Violation, cfg: AnalysisConfig) -> bool:
    """Replay both runs concretely; true iff their leakages diverge."""
    left, right = replay_states(p, v, cfg)
    _, la, _ = conc_run(p, left, v.depth, on_error="halt")
    _, lb, _ = conc_run(p, right, v.depth, on_error="halt")
    return first_divergence(la, lb) is not None


def explore(p: Program, cfg: AnalysisConfig = AnalysisConfig(),
            solver: Optional[SmtSolver] = None) -> Verdict:
    ex = Explorer(p, cfg, solver)
    try:
        return ex.explore()
    finally:
        ex.close()


def run_se(p: Program, cfg: AnalysisConfig = AnalysisConfig(Mode.SE),
           solver: Optional[SmtSolver] = None) -> Verdict:
    if cfg.mode is not Mode.SE:
        raise ValueError("run_se needs a configuration in SE mode")
    return explore(p, cfg, solver)


def analyze(p: Program, mode: Union[Mode, str] = Mode.BINSEC_REL, **kw) -> Verdict:
    return explore(p, AnalysisConfig(Mode(mode), **kw))
