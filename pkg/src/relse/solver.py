"""SMT-LIB 2 (QF_ABV) bridge to an external solver process."""

from __future__ import annotations

import enum
import logging
import os
import queue
import re
import shlex
import subprocess
import threading
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence, Union

from . import terms as T
from .ir import BitVec
from .terms import ArrayValue, Term

log = logging.getLogger(__name__)

DEFAULT_COMMAND = ("z3", "-in", "-smt2")
ARRAY_SORT = "(Array (_ BitVec 32) (_ BitVec 8))"

_SMT_OPS = {
    "add": "bvadd", "sub": "bvsub", "mul": "bvmul", "udiv": "bvudiv",
    "and": "bvand", "or": "bvor", "xor": "bvxor", "shl": "bvshl",
    "shr": "bvlshr", "concat": "concat", "neg": "bvneg", "not": "bvnot",
    "select": "select", "store": "store",
}
_SMT_CMP = {"eq": "=", "ult": "bvult", "slt": "bvslt"}
_SIMPLE_SYMBOL = re.compile(r"^[A-Za-z~!@$%^&*_+=<>.?/-][A-Za-z0-9~!@$%^&*_+=<>.?/-]*$")


class SolverError(Exception):
    pass


class SolverCrashed(SolverError):
    pass


class ModelParseError(SolverError):
    pass


class QueryKind(enum.Enum):
    EXPLORE = "explore"
    INSECURITY = "insecurity"


# -- serialization ------------------------------------------------------------

def symbol(name: str) -> str:
    return name if _SIMPLE_SYMBOL.match(name) else "|" + name.replace("|", "") + "|"


def sort_of(t: Term) -> str:
    return ARRAY_SORT if t.is_array else f"(_ BitVec {t.width})"


def bv_literal(value: int, width: int) -> str:
    if width % 4 == 0:
        return "#x" + format(value, f"0{width // 4}x")
    return "#b" + format(value, f"0{width}b")


def _node_text(t: Term, text: dict) -> str:
    op = t.op
    if op == "const":
        return bv_literal(t.value, t.width)
    if op in ("var", "array"):
        return symbol(t.name)
    if op == "constarray":
        return f"((as const {ARRAY_SORT}) {bv_literal(t.params[0], 8)})"
    if op == "def":
        return text[t.args[0].uid]
    args = " ".join(text[a.uid] for a in t.args)
    if op in _SMT_CMP:
        return f"(ite ({_SMT_CMP[op]} {args}) #b1 #b0)"
    if op in ("zext", "sext"):
        k = t.params[0] - t.args[0].width
        kind = "zero_extend" if op == "zext" else "sign_extend"
        return f"((_ {kind} {k}) {args})"
    if op == "extract":
        return f"((_ extract {t.params[0]} {t.params[1]}) {args})"
    return f"({_SMT_OPS[op]} {args})"


_MAX_INLINE_DEPTH = 32


def serialize(t: Term) -> str:
    """SMT-LIB text for ``t``; shared subterms become nested ``let`` bindings
    so the output is linear in the DAG size. Definition nodes are transparent."""
    nodes = list(T.iter_dag([t]))
    parents: Counter = Counter()
    for n in nodes:
        for a in n.args:
            parents[a.uid] += 1
    text: dict[int, str] = {}
    depth: dict[int, int] = {}
    bindings: list[str] = []
    for n in nodes:
        text[n.uid] = _node_text(n, text)
        depth[n.uid] = 1 + max((depth[a.uid] for a in n.args), default=0)
        if n is not t and n.args and (parents[n.uid] >= 2 or depth[n.uid] > _MAX_INLINE_DEPTH):
            name = f"?x{len(bindings)}"
            bindings.append(f"({name} {text[n.uid]})")
            text[n.uid] = name
            depth[n.uid] = 0
    body = text[t.uid]
    for b in reversed(bindings):
        body = f"(let ({b}) {body})"
    return body


def assertion_text(t: Term) -> str:
    assert t.width == 1, t
    return f"(assert (= {serialize(t)} #b1))"


# -- s-expressions ------------------------------------------------------------

_SEXP_TOKEN = re.compile(r'\s*(?:(\()|(\))|("(?:[^"]|"")*")|(\|[^|]*\|)|([^\s()"|]+))')


def parse_sexp(text: str):
    pos = 0
    stack: list[list] = [[]]
    while True:
        m = _SEXP_TOKEN.match(text, pos)
        if not m or m.end() == pos:
            break
        pos = m.end()
        if m.group(1):
            stack.append([])
        elif m.group(2):
            if len(stack) == 1:
                raise ModelParseError(f"unbalanced ')' in {text!r}")
            done = stack.pop()
            stack[-1].append(done)
        else:
            stack[-1].append(m.group(0).strip())
    if len(stack) != 1 or text[pos:].strip():
        raise ModelParseError(f"malformed s-expression: {text!r}")
    return stack[0]


def parse_bv(tok) -> int:
    if isinstance(tok, str):
        if tok.startswith("#x"):
            return int(tok[2:], 16)
        if tok.startswith("#b"):
            return int(tok[2:], 2)
    if isinstance(tok, list) and len(tok) == 3 and tok[0] == "_" and tok[1].startswith("bv"):
        return int(tok[1][2:])
    raise ModelParseError(f"not a bitvector literal: {tok!r}")


# -- results ---------------------------------------------------------------

@dataclass
class Sat:
    values: dict = field(default_factory=dict)  # Term -> int

    @property
    def model(self) -> dict[str, BitVec]:
        return {t.name: BitVec(t.width, v) for t, v in self.values.items() if t.op == "var"}

    def value(self, t: Term) -> int:
        return self.values[t]


@dataclass
class Unsat:
    pass


@dataclass
class Unknown:
    reason: str = "unknown"


SolverResult = Union[Sat, Unsat, Unknown]


@dataclass
class Query:
    kind: QueryKind
    assertion: Term
    declared: tuple = ()

    def __post_init__(self):
        if not self.declared:
            self.declared = tuple(T.free_symbols([self.assertion]))


# -- solver session -----------------------------------------------------------

def solver_command(command: Union[str, Sequence[str], None] = None) -> list[str]:
    if command is None:
        command = os.environ.get("RELSE_SOLVER") or DEFAULT_COMMAND
    if isinstance(command, str):
        return shlex.split(command)
    return list(command)


class SmtSolver:
    """One solver process driven incrementally.

    ``check`` keeps the path-predicate prefix asserted across calls: each
    conjunct lives in its own push frame, so forking paths only pop what
    diverges. The goal of each query sits in a throwaway frame.
    """

    def __init__(self, command=None, timeout: Optional[float] = None,
                 verify_models: bool = False, trace_path: Optional[str] = None):
        self.command = solver_command(command)
        self.timeout = timeout
        self.verify_models = verify_models
        self.counts: Counter = Counter()
        self.crashes = 0
        self._trace = open(trace_path, "w", encoding="utf-8") if trace_path else None
        self._proc = None
        self._start()

    # process management
    def _start(self) -> None:
        try:
            self._proc = subprocess.Popen(
                self.command, stdin=subprocess.PIPE, stdout=subprocess.PIPE,
                stderr=subprocess.DEVNULL, text=True, bufsize=1,
            )
        except OSError as exc:
            raise SolverError(f"cannot start solver {self.command!r}: {exc}") from exc
        self._lines: "queue.Queue[Optional[str]]" = queue.Queue()
        threading.Thread(target=self._pump, args=(self._proc, self._lines), daemon=True).start()
        self._frames: list[Term] = []
        self._declared: list[set[str]] = [set()]
        self._send("(set-option :print-success false)")
        self._send("(set-option :produce-models true)")
        if self.timeout:
            self._send(f"(set-option :timeout {int(self.timeout * 1000)})")
        self._send("(set-logic QF_ABV)")

    @staticmethod
    def _pump(proc, lines) -> None:
        for line in proc.stdout:
            lines.put(line)
        lines.put(None)

    def _restart(self) -> None:
        self.crashes += 1
        try:
            self._proc.kill()
        except OSError:
            pass
        self._start()

    def close(self) -> None:
        if self._proc is not None and self._proc.poll() is None:
            try:
                self._proc.stdin.write("(exit)\n")
                self._proc.stdin.flush()
                self._proc.wait(timeout=2)
            except (OSError, subprocess.TimeoutExpired):
                self._proc.kill()
        if self._trace:
            self._trace.close()
            self._trace = None

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def reset(self) -> None:
        """Drop every frame and declaration (reuse across analyses)."""
        self._send("(reset)")
        self._frames = []
        self._declared = [set()]
        self._send("(set-option :print-success false)")
        self._send("(set-option :produce-models true)")
        if self.timeout:
            self._send(f"(set-option :timeout {int(self.timeout * 1000)})")
        self._send("(set-logic QF_ABV)")

    # raw protocol
    def _send(self, text: str) -> None:
        if self._trace:
            self._trace.write(text + "\n")
        try:
            self._proc.stdin.write(text + "\n")
        except (BrokenPipeError, OSError) as exc:
            raise SolverCrashed(str(exc)) from exc

    def _flush(self) -> None:
        try:
            self._proc.stdin.flush()
        except (BrokenPipeError, OSError) as exc:
            raise SolverCrashed(str(exc)) from exc

    def _read_response(self, wait: Optional[float]) -> str:
        lines: list[str] = []
        depth = 0
        while True:
            try:
                line = self._lines.get(timeout=wait)
            except queue.Empty:
                raise TimeoutError("solver did not answer in time") from None
            if line is None:
                raise SolverCrashed("solver process exited")
            lines.append(line)
            depth += line.count("(") - line.count(")")
            if depth <= 0 and "".join(lines).strip():
                text = "".join(lines).strip()
                if self._trace:
                    self._trace.write("; " + text.replace("\n", "\n; ") + "\n")
                return text

    def _wait(self) -> Optional[float]:
        return None if not self.timeout else self.timeout * 4 + 5

    # declarations
    def _is_declared(self, name: str) -> bool:
        return any(name in level for level in self._declared)

    def _declare(self, roots: Iterable[Term]) -> None:
        for s in T.free_symbols(roots):
            if not self._is_declared(s.name):
                self._send(f"(declare-fun {symbol(s.name)} () {sort_of(s)})")
                self._declared[-1].add(s.name)

    def _push(self) -> None:
        self._send("(push 1)")
        self._declared.append(set())

    def _pop(self, n: int = 1) -> None:
        if n <= 0:
            return
        self._send(f"(pop {n})")
        del self._declared[-n:]

    def _sync_prefix(self, conjuncts: Sequence[Term]) -> None:
        common = 0
        for a, b in zip(self._frames, conjuncts):
            if a is not b:
                break
            common += 1
        self._pop(len(self._frames) - common)
        del self._frames[common:]
        for c in conjuncts[common:]:
            self._push()
            self._declare([c])
            self._send(assertion_text(c))
            self._frames.append(c)

    # queries
    def check(self, conjuncts: Sequence[Term] = (), goal: Optional[Term] = None,
              fetch: Sequence[Term] = (), kind: Optional[QueryKind] = None) -> SolverResult:
        """Satisfiability of ``conjuncts ∧ goal``; on sat, values of ``fetch``."""
        if kind is not None:
            self.counts[kind] += 1
        try:
            return self._check(list(conjuncts), goal, list(fetch))
        except (SolverCrashed, TimeoutError) as exc:
            log.warning("solver failure: %s; restarting", exc)
            self._restart()
            return Unknown("timeout" if isinstance(exc, TimeoutError) else "crash")

    def _check(self, conjuncts, goal, fetch) -> SolverResult:
        conjuncts = [c for c in conjuncts if not (c.is_const and c.value == 1)]
        self._sync_prefix(conjuncts)
        self._push()
        try:
            if goal is not None:
                self._declare([goal])
                self._send(assertion_text(goal))
            self._declare(fetch)
            self._send("(check-sat)")
            self._flush()
            answer = self._read_response(self._wait())
            if answer == "unsat":
                return Unsat()
            if answer != "sat":
                return Unknown(answer if answer != "unknown" else "solver-unknown")
            result = Sat()
            if fetch:
                result.values = self._get_values(fetch)
            if self.verify_models and fetch:
                self._verify(conjuncts, goal, result)
            return result
        finally:
            self._pop(1)
            self._flush()

    def _get_values(self, fetch: Sequence[Term]) -> dict:
        uniq = list(dict.fromkeys(fetch))
        self._send("(get-value (" + " ".join(serialize(t) for t in uniq) + "))")
        self._flush()
        text = self._read_response(self._wait())
        parsed = parse_sexp(text)
        if len(parsed) != 1 or not isinstance(parsed[0], list) or len(parsed[0]) != len(uniq):
            raise ModelParseError(f"unexpected get-value answer: {text[:200]!r}")
        return {t: parse_bv(entry[1]) for t, entry in zip(uniq, parsed[0])}

    def _verify(self, conjuncts, goal, result: Sat) -> None:
        env = model_env(result.values)
        for c in list(conjuncts) + ([goal] if goal is not None else []):
            try:
                ok = T.evaluate(c, env)
            except KeyError:
                continue  # model does not cover every symbol of this assertion
            if ok != 1:
                raise SolverError(f"solver model does not satisfy {c!r}")

    def check_sat(self, q: Query) -> SolverResult:
        """Self-contained query: one assertion, values of every declared bitvector."""
        self._sync_prefix([])
        return self.check((), q.assertion, [d for d in q.declared if not d.is_array], q.kind)


def model_env(values: dict) -> dict:
    """Turn fetched values into an evaluation environment.

    ``select`` entries over an array symbol become array contents at the
    concrete index the model gives for that select's index term.
    """
    env: dict = {}
    arrays: dict[str, ArrayValue] = {}
    for t, v in values.items():
        if t.op == "var":
            env[t.name] = v
    for t, v in values.items():
        if t.op == "select" and t.args[0].op == "array":
            idx = t.args[1]
            try:
                i = values[idx] if idx in values else T.evaluate(idx, env)
            except KeyError:
                continue
            arrays.setdefault(t.args[0].name, ArrayValue()).entries[i] = v
    env.update(arrays)
    return env


def memory_fetch_terms(roots: Iterable[Term]) -> list[Term]:
    """For each read that may reach an initial array symbol, the index and the
    initial-array cell, so the model can be replayed concretely."""
    out: list[Term] = []
    for n in T.iter_dag(roots):
        if n.op == "select":
            root = T.array_root(n.args[0])
            if root.op == "array":
                out.append(n.args[1])
                out.append(T.select(root, n.args[1]))
    return out
