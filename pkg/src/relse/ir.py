"""Bitvector intermediate representation: types, operator semantics, text format.

Programs map integer locations to instructions. Memory is byte addressed
with 32-bit addresses; sequential flow falls through to the next larger
location in the program map.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Union

ALLOWED_WIDTHS = frozenset({1, 8, 16, 32, 64})
ADDR_WIDTH = 32
BYTE_WIDTH = 8

UNARY_OPS = ("neg", "not", "zext", "sext", "extract")
BINARY_OPS = (
    "add", "sub", "mul", "udiv", "and", "or", "xor",
    "shl", "shr", "concat", "eq", "ult", "slt",
)
COMPARISONS = frozenset({"eq", "ult", "slt"})


class IRError(Exception):
    """Base class for IR loading and validation errors."""


class IRSyntaxError(IRError):
    def __init__(self, line: int, column: int, message: str):
        super().__init__(f"line {line}, column {column}: {message}")
        self.line = line
        self.column = column
        self.message = message


class WidthError(IRError):
    def __init__(self, location, expected, found, message: str = ""):
        text = f"width error at {location}: expected {expected}, found {found}"
        if message:
            text += f" ({message})"
        super().__init__(text)
        self.location = location
        self.expected = expected
        self.found = found


class DuplicateLocation(IRError):
    def __init__(self, loc: int):
        super().__init__(f"duplicate location {loc}")
        self.loc = loc


class DanglingTarget(IRError):
    def __init__(self, loc: int, target=None):
        msg = f"instruction at {loc} has no successor"
        if target is not None:
            msg = f"instruction at {loc} targets undefined location {target}"
        super().__init__(msg)
        self.loc = loc
        self.target = target


class OverlapError(IRError):
    pass


def mask(width: int) -> int:
    return (1 << width) - 1


def to_signed(value: int, width: int) -> int:
    if value >> (width - 1):
        return value - (1 << width)
    return value


@dataclass(frozen=True)
class BitVec:
    width: int
    value: int

    def __post_init__(self):
        if self.width <= 0:
            raise ValueError(f"bitvector width must be positive, got {self.width}")
        object.__setattr__(self, "value", self.value & mask(self.width))

    def __int__(self) -> int:
        return self.value

    def signed(self) -> int:
        return to_signed(self.value, self.width)

    def __str__(self) -> str:
        return f"{self.value}:{self.width}"


# -- operator semantics, shared by the interpreter and the term folder --------

def apply_unop(op: str, params: tuple, a: int, wa: int) -> int:
    if op == "neg":
        return -a & mask(wa)
    if op == "not":
        return ~a & mask(wa)
    if op == "zext":
        return a
    if op == "sext":
        return to_signed(a, wa) & mask(params[0])
    if op == "extract":
        hi, lo = params
        return (a >> lo) & mask(hi - lo + 1)
    raise ValueError(f"unknown unary operator {op}")


def apply_binop(op: str, a: int, b: int, wa: int, wb: int) -> int:
    """Evaluate a binary operator on unsigned operands.

    Division by zero follows SMT-LIB (all ones); callers that need a
    trap check the divisor themselves.
    """
    m = mask(wa)
    if op == "add":
        return (a + b) & m
    if op == "sub":
        return (a - b) & m
    if op == "mul":
        return (a * b) & m
    if op == "udiv":
        return m if b == 0 else a // b
    if op == "and":
        return a & b
    if op == "or":
        return a | b
    if op == "xor":
        return a ^ b
    if op == "shl":
        return 0 if b >= wa else (a << b) & m
    if op == "shr":
        return 0 if b >= wa else a >> b
    if op == "concat":
        return (a << wb) | b
    if op == "eq":
        return int(a == b)
    if op == "ult":
        return int(a < b)
    if op == "slt":
        return int(to_signed(a, wa) < to_signed(b, wb))
    raise ValueError(f"unknown binary operator {op}")


def unop_width(op: str, params: tuple, wa: int) -> int:
    if op in ("neg", "not"):
        return wa
    if op in ("zext", "sext"):
        return params[0]
    if op == "extract":
        return params[0] - params[1] + 1
    raise ValueError(op)


def binop_width(op: str, wa: int, wb: int) -> int:
    if op == "concat":
        return wa + wb
    if op in COMPARISONS:
        return 1
    return wa


# -- expressions ------------------------------------------------------------

@dataclass(frozen=True)
class Const:
    value: BitVec


@dataclass(frozen=True)
class Var:
    name: str
    width: int


@dataclass(frozen=True)
class Load:
    addr: "Expr"


@dataclass(frozen=True)
class UnOp:
    op: str
    arg: "Expr"
    params: tuple = ()


@dataclass(frozen=True)
class BinOp:
    op: str
    lhs: "Expr"
    rhs: "Expr"


Expr = Union[Const, Var, Load, UnOp, BinOp]


def const(value: int, width: int) -> Const:
    return Const(BitVec(width, value))


def width_of(e: Expr) -> int:
    """Static width of an expression; raises WidthError on malformed nodes."""
    if isinstance(e, Const):
        return e.value.width
    if isinstance(e, Var):
        return e.width
    if isinstance(e, Load):
        wa = width_of(e.addr)
        if wa != ADDR_WIDTH:
            raise WidthError("load address", ADDR_WIDTH, wa)
        return BYTE_WIDTH
    if isinstance(e, UnOp):
        wa = width_of(e.arg)
        if e.op in ("zext", "sext"):
            if len(e.params) != 1 or e.params[0] < wa:
                raise WidthError(e.op, f">= {wa}", e.params)
        elif e.op == "extract":
            if len(e.params) != 2:
                raise WidthError("extract", "(hi, lo)", e.params)
            hi, lo = e.params
            if not 0 <= lo <= hi < wa:
                raise WidthError("extract", f"0 <= lo <= hi < {wa}", e.params)
        elif e.op not in ("neg", "not"):
            raise WidthError("unary operator", UNARY_OPS, e.op)
        return unop_width(e.op, e.params, wa)
    if isinstance(e, BinOp):
        if e.op not in BINARY_OPS:
            raise WidthError("binary operator", BINARY_OPS, e.op)
        wa, wb = width_of(e.lhs), width_of(e.rhs)
        if e.op != "concat" and wa != wb:
            raise WidthError(e.op, wa, wb, "operand widths differ")
        return binop_width(e.op, wa, wb)
    raise WidthError("expression", "Expr", type(e).__name__)


def iter_subexprs(e: Expr) -> Iterator[Expr]:
    yield e
    if isinstance(e, Load):
        yield from iter_subexprs(e.addr)
    elif isinstance(e, UnOp):
        yield from iter_subexprs(e.arg)
    elif isinstance(e, BinOp):
        yield from iter_subexprs(e.lhs)
        yield from iter_subexprs(e.rhs)


def expr_vars(e: Expr) -> set[str]:
    return {x.name for x in iter_subexprs(e) if isinstance(x, Var)}


# -- instructions -----------------------------------------------------------

@dataclass(frozen=True)
class Assign:
    dst: str
    width: int
    rhs: Expr


@dataclass(frozen=True)
class Store:
    idx: Expr
    val: Expr


@dataclass(frozen=True)
class Goto:
    target: int


@dataclass(frozen=True)
class DJump:
    target: Expr


@dataclass(frozen=True)
class Ite:
    cond: Expr
    then: int
    else_: int


@dataclass(frozen=True)
class Halt:
    pass


Instr = Union[Assign, Store, Goto, DJump, Ite, Halt]
TERMINATORS = (Goto, DJump, Ite, Halt)


def instr_exprs(ins: Instr) -> tuple[Expr, ...]:
    if isinstance(ins, Assign):
        return (ins.rhs,)
    if isinstance(ins, Store):
        return (ins.idx, ins.val)
    if isinstance(ins, DJump):
        return (ins.target,)
    if isinstance(ins, Ite):
        return (ins.cond,)
    return ()


@dataclass(frozen=True)
class InputRegion:
    base_reg: str
    offset: int
    length: int
    kind: str  # "high" | "low"

    def __post_init__(self):
        if self.length < 1:
            raise ValueError("input region length must be >= 1")
        if self.kind not in ("high", "low"):
            raise ValueError(f"unknown region kind {self.kind!r}")


@dataclass(frozen=True)
class Program:
    entry: int
    code: dict
    highs: tuple = ()
    lows: tuple = ()
    init_regs: dict = field(default_factory=dict)
    reg_widths: dict = field(default_factory=dict)

    def __post_init__(self):
        locs = sorted(self.code)
        nxt = {a: b for a, b in zip(locs, locs[1:])}
        object.__setattr__(self, "_next", nxt)

    def next_loc(self, loc: int):
        """Fall-through successor of ``loc``, or None past the last instruction."""
        return self._next.get(loc)

    @property
    def regions(self) -> tuple:
        return tuple(self.highs) + tuple(self.lows)

    def region_addresses(self, region: InputRegion, base_value: int) -> list[int]:
        start = base_value + region.offset
        return [(start + i) & mask(ADDR_WIDTH) for i in range(region.length)]

    def __len__(self) -> int:
        return len(self.code)


# -- validation -------------------------------------------------------------

def validate(p: Program) -> Program:
    """Check every Program invariant; returns ``p`` unchanged on success."""
    if p.entry not in p.code:
        raise DanglingTarget(p.entry, p.entry)
    widths = dict(p.reg_widths)
    for name, bv in p.init_regs.items():
        if widths.setdefault(name, bv.width) != bv.width:
            raise WidthError(f"reg {name}", widths[name], bv.width)
    for loc, ins in p.code.items():
        for e in instr_exprs(ins):
            width_of(e)
            for sub in iter_subexprs(e):
                if isinstance(sub, Var) and widths.setdefault(sub.name, sub.width) != sub.width:
                    raise WidthError(loc, widths[sub.name], sub.width, f"register {sub.name}")
        if isinstance(ins, Assign):
            if widths.setdefault(ins.dst, ins.width) != ins.width:
                raise WidthError(loc, widths[ins.dst], ins.width, f"register {ins.dst}")
            if width_of(ins.rhs) != ins.width:
                raise WidthError(loc, ins.width, width_of(ins.rhs))
        elif isinstance(ins, Store):
            if width_of(ins.idx) != ADDR_WIDTH:
                raise WidthError(loc, ADDR_WIDTH, width_of(ins.idx), "store index")
            if width_of(ins.val) != BYTE_WIDTH:
                raise WidthError(loc, BYTE_WIDTH, width_of(ins.val), "store value")
        elif isinstance(ins, Ite):
            if width_of(ins.cond) != 1:
                raise WidthError(loc, 1, width_of(ins.cond), "condition")
            for t in (ins.then, ins.else_):
                if t not in p.code:
                    raise DanglingTarget(loc, t)
        elif isinstance(ins, Goto):
            if ins.target not in p.code:
                raise DanglingTarget(loc, ins.target)
        elif isinstance(ins, DJump):
            if width_of(ins.target) != ADDR_WIDTH:
                raise WidthError(loc, ADDR_WIDTH, width_of(ins.target), "jump target")
        if not isinstance(ins, TERMINATORS) and p.next_loc(loc) is None:
            raise DanglingTarget(loc)
    _check_regions(p)
    return p


def _check_regions(p: Program) -> None:
    spans = []
    for r in p.regions:
        base = p.init_regs.get(r.base_reg)
        spans.append((r, base))
    for i, (r1, b1) in enumerate(spans):
        for r2, b2 in spans[i + 1:]:
            if r1.base_reg == r2.base_reg:
                s1, s2 = r1.offset, r2.offset
            elif b1 is not None and b2 is not None:
                s1, s2 = b1.value + r1.offset, b2.value + r2.offset
            else:
                continue
            if s1 < s2 + r2.length and s2 < s1 + r1.length:
                raise OverlapError(f"input regions {r1} and {r2} overlap")


# -- text format ------------------------------------------------------------

_TOKEN_RE = re.compile(
    r"""
    (?P<ws>\s+)
  | (?P<const>-?(?:0[xX][0-9a-fA-F]+|\d+):\d+)
  | (?P<name>[A-Za-z_][A-Za-z0-9_]*(?::\d+)?)
  | (?P<load>@\[)
  | (?P<op>(?:<<|>>|<>|!=|<u|<s|::|/u|[-+*&|^=~])(?:\d+)?)
  | (?P<int>(?:0[xX][0-9a-fA-F]+|\d+))
  | (?P<punct>[()\],])
    """,
    re.VERBOSE,
)

_INFIX = {
    "+": "add", "-": "sub", "*": "mul", "/u": "udiv", "&": "and", "|": "or",
    "^": "xor", "<<": "shl", ">>": "shr", "::": "concat", "=": "eq",
    "<>": "ne", "!=": "ne", "<u": "ult", "<s": "slt",
}
_INFIX_OUT = {v: k for k, v in _INFIX.items() if k not in ("!=",)}
_PREFIX_BIN = set(BINARY_OPS) | {"ne"}
_EXT_RE = re.compile(r"^(zext|sext)(\d+)$")


@dataclass
class _Tok:
    kind: str
    text: str
    col: int


def _parse_int(text: str) -> int:
    return int(text, 0)


class _ExprParser:
    def __init__(self, text: str, line: int, col0: int, widths: dict):
        self.line = line
        self.widths = widths
        self.toks = []
        pos = 0
        while pos < len(text):
            m = _TOKEN_RE.match(text, pos)
            if not m:
                raise IRSyntaxError(line, col0 + pos + 1, f"unexpected character {text[pos]!r}")
            kind = m.lastgroup
            if kind != "ws":
                self.toks.append(_Tok(kind, m.group(), col0 + pos + 1))
            pos = m.end()
        self.i = 0
        self.end_col = col0 + len(text) + 1

    def peek(self):
        return self.toks[self.i] if self.i < len(self.toks) else None

    def next(self, expect=None):
        t = self.peek()
        if t is None:
            raise IRSyntaxError(self.line, self.end_col, "unexpected end of expression")
        if expect is not None and t.text != expect:
            raise IRSyntaxError(self.line, t.col, f"expected {expect!r}, found {t.text!r}")
        self.i += 1
        return t

    def error(self, tok, msg):
        col = tok.col if tok is not None else self.end_col
        return IRSyntaxError(self.line, col, msg)

    def parse_all(self) -> Expr:
        e = self.expr()
        if self.peek() is not None:
            raise self.error(self.peek(), f"trailing input {self.peek().text!r}")
        return e

    def expr(self) -> Expr:
        t = self.next()
        if t.kind == "const":
            v, w = t.text.rsplit(":", 1)
            width = int(w)
            if width not in ALLOWED_WIDTHS:
                raise WidthError(f"line {self.line}", sorted(ALLOWED_WIDTHS), width)
            return const(_parse_int(v), width)
        if t.kind == "name":
            return self.var(t)
        if t.kind == "load":
            addr = self.expr()
            n = 1
            if self.peek() is not None and self.peek().text == ",":
                self.next()
                n = _parse_int(self.next().text)
            self.next("]")
            return _multibyte_load(addr, n, self.line)
        if t.text == "(":
            return self.paren()
        raise self.error(t, f"unexpected token {t.text!r}")

    def var(self, t) -> Var:
        if ":" in t.text:
            name, w = t.text.split(":")
            return Var(name, int(w))
        if t.text not in self.widths:
            raise WidthError(f"line {self.line}", "declared width", None, f"register {t.text!r} has no width")
        return Var(t.text, self.widths[t.text])

    def paren(self) -> Expr:
        t = self.peek()
        if t is None:
            raise self.error(t, "unexpected end of expression")
        if t.kind == "op" and t.text in ("-", "~"):
            self.next()
            e = UnOp("neg" if t.text == "-" else "not", self.expr())
            self.next(")")
            return e
        if t.kind == "name" and ":" not in t.text and (
            t.text in _PREFIX_BIN or t.text in ("neg", "not", "extract") or _EXT_RE.match(t.text)
        ):
            self.next()
            e = self.prefix(t)
            self.next(")")
            return e
        lhs = self.expr()
        t = self.peek()
        if t is not None and t.text == ")":
            self.next()
            return lhs
        op = self.next()
        if op.kind != "op":
            raise self.error(op, f"expected operator, found {op.text!r}")
        m = re.match(r"^(.*?)(\d*)$", op.text)
        sym, wsuffix = m.group(1), m.group(2)
        if sym not in _INFIX:
            raise self.error(op, f"unknown operator {op.text!r}")
        rhs = self.expr()
        self.next(")")
        e = _mk_binop(_INFIX[sym], lhs, rhs)
        if wsuffix and width_of(lhs) != int(wsuffix):
            raise WidthError(f"line {self.line}", int(wsuffix), width_of(lhs), f"operator {op.text}")
        return e

    def prefix(self, t) -> Expr:
        name = t.text
        m = _EXT_RE.match(name)
        if m:
            return UnOp(m.group(1), self.expr(), (int(m.group(2)),))
        if name in ("neg", "not"):
            return UnOp(name, self.expr())
        if name == "extract":
            hi = _parse_int(self.next().text)
            lo = _parse_int(self.next().text)
            return UnOp("extract", self.expr(), (hi, lo))
        lhs = self.expr()
        rhs = self.expr()
        return _mk_binop(name, lhs, rhs)


def _mk_binop(op: str, lhs: Expr, rhs: Expr) -> Expr:
    if op == "ne":
        return UnOp("not", BinOp("eq", lhs, rhs))
    return BinOp(op, lhs, rhs)


def _offset(addr: Expr, i: int) -> Expr:
    return addr if i == 0 else BinOp("add", addr, const(i, ADDR_WIDTH))


def _multibyte_load(addr: Expr, n: int, line: int) -> Expr:
    if n < 1 or 8 * n not in ALLOWED_WIDTHS:
        raise WidthError(f"line {line}", "1, 2, 4 or 8 bytes", n)
    # little-endian: byte 0 is least significant
    e: Expr = Load(addr)
    for i in range(1, n):
        e = BinOp("concat", Load(_offset(addr, i)), e)
    return e


_NAME_DECL_RE = re.compile(r"(?<![A-Za-z0-9_])([A-Za-z_][A-Za-z0-9_]*):(\d+)")


def _strip_comment(line: str) -> str:
    i = line.find("#")
    return line if i < 0 else line[:i]


def parse_program(text: str) -> Program:
    """Parse the line-oriented textual IR into a validated Program."""
    lines = [(_strip_comment(raw), n) for n, raw in enumerate(text.splitlines(), 1)]
    widths: dict[str, int] = {}
    for body, n in lines:
        for m in _NAME_DECL_RE.finditer(body):
            name, w = m.group(1), int(m.group(2))
            if widths.setdefault(name, w) != w:
                raise WidthError(f"line {n}", widths[name], w, f"register {name}")
    # constants such as 8:32 never match the name pattern, names never start with digits
    entry = None
    code: dict[int, Instr] = {}
    highs, lows = [], []
    init_regs: dict[str, BitVec] = {}
    for body, n in lines:
        s = body.strip()
        if not s:
            continue
        col0 = len(body) - len(body.lstrip())
        head = s.split(None, 1)[0]
        if head == "entry":
            parts = s.split()
            if len(parts) != 2:
                raise IRSyntaxError(n, col0 + 1, "expected 'entry <loc>'")
            entry = _loc(parts[1], n, col0)
        elif head == "reg":
            m = re.match(r"^reg\s+([A-Za-z_]\w*):(\d+)\s*=\s*(\S+)$", s)
            if not m:
                raise IRSyntaxError(n, col0 + 1, "expected 'reg <name>:<width> = <uint>'")
            w = int(m.group(2))
            if w not in ALLOWED_WIDTHS:
                raise WidthError(f"line {n}", sorted(ALLOWED_WIDTHS), w)
            init_regs[m.group(1)] = BitVec(w, _parse_int(m.group(3)))
        elif head in ("high", "low"):
            m = re.match(r"^(high|low)\s+([A-Za-z_]\w*)\s+(-?(?:0[xX][0-9a-fA-F]+|\d+))\s+(\d+)$", s)
            if not m:
                raise IRSyntaxError(n, col0 + 1, f"expected '{head} <reg> <offset> <len>'")
            region = InputRegion(m.group(2), _parse_int(m.group(3)), int(m.group(4)), head)
            (highs if head == "high" else lows).append(region)
        else:
            m = re.match(r"^(0[xX][0-9a-fA-F]+|\d+)\s*:\s*(.*)$", s)
            if not m:
                raise IRSyntaxError(n, col0 + 1, f"unrecognized line {s!r}")
            loc = _loc(m.group(1), n, col0)
            rest = m.group(2)
            rcol = col0 + m.start(2)
            for l2, ins in _parse_instr(rest, n, rcol, loc, widths):
                if l2 in code:
                    raise DuplicateLocation(l2)
                code[l2] = ins
    if entry is None:
        raise IRSyntaxError(len(lines) + 1, 1, "missing 'entry' directive")
    for r in highs + lows:
        widths.setdefault(r.base_reg, ADDR_WIDTH)
        if widths[r.base_reg] != ADDR_WIDTH:
            raise WidthError(f"region base {r.base_reg}", ADDR_WIDTH, widths[r.base_reg])
    prog = Program(entry, dict(sorted(code.items())), tuple(highs), tuple(lows), init_regs, widths)
    return validate(prog)


def _loc(text: str, line: int, col0: int) -> int:
    try:
        v = _parse_int(text)
    except ValueError:
        raise IRSyntaxError(line, col0 + 1, f"bad location {text!r}") from None
    if not 0 <= v <= mask(32):
        raise IRSyntaxError(line, col0 + 1, f"location {v} out of range")
    return v


def _parse_instr(s: str, n: int, col0: int, loc: int, widths: dict) -> list:
    def expr(text, offset):
        return _ExprParser(text, n, col0 + offset, widths).parse_all()

    if s == "halt":
        return [(loc, Halt())]
    m = re.match(r"^goto\s+(\S+)$", s)
    if m:
        return [(loc, Goto(_loc(m.group(1), n, col0)))]
    m = re.match(r"^djump\s+(.+)$", s)
    if m:
        return [(loc, DJump(expr(m.group(1), m.start(1))))]
    m = re.match(r"^ite\s+(nz\s+)?(.+?)\s*\?\s*(\S+)\s*:\s*(\S+)$", s)
    if m:
        cond = expr(m.group(2), m.start(2))
        if m.group(1):
            w = width_of(cond)
            cond = UnOp("not", BinOp("eq", cond, const(0, w)))
        elif width_of(cond) != 1:
            raise WidthError(loc, 1, width_of(cond), "condition")
        return [(loc, Ite(cond, _loc(m.group(3), n, col0), _loc(m.group(4), n, col0)))]
    m = re.match(r"^@\[(.*)\]\s*:=\s*(.+)$", s)
    if m:
        inner = m.group(1)
        nbytes = 1
        mm = re.match(r"^(.*),\s*(\d+)\s*$", inner)
        if mm:
            inner, nbytes = mm.group(1), int(mm.group(2))
        idx = expr(inner, m.start(1))
        val = expr(m.group(2), m.start(2))
        if width_of(idx) != ADDR_WIDTH:
            raise WidthError(loc, ADDR_WIDTH, width_of(idx), "store index")
        if width_of(val) != 8 * nbytes:
            raise WidthError(loc, 8 * nbytes, width_of(val), "store value")
        if nbytes == 1:
            return [(loc, Store(idx, val))]
        # little-endian byte stores at consecutive locations
        return [
            (loc + i, Store(_offset(idx, i), UnOp("extract", val, (8 * i + 7, 8 * i))))
            for i in range(nbytes)
        ]
    m = re.match(r"^([A-Za-z_]\w*)(?::(\d+))?\s*:=\s*(.+)$", s)
    if m:
        name = m.group(1)
        w = int(m.group(2)) if m.group(2) else widths.get(name)
        if w is None:
            raise WidthError(loc, "declared width", None, f"register {name}")
        rhs = expr(m.group(3), m.start(3))
        if width_of(rhs) != w:
            raise WidthError(loc, w, width_of(rhs))
        return [(loc, Assign(name, w, rhs))]
    raise IRSyntaxError(n, col0 + 1, f"unrecognized instruction {s!r}")


def format_expr(e: Expr) -> str:
    if isinstance(e, Const):
        bv = e.value
        v = hex(bv.value) if bv.value > 255 else str(bv.value)
        return f"{v}:{bv.width}"
    if isinstance(e, Var):
        return f"{e.name}:{e.width}"
    if isinstance(e, Load):
        return f"@[{format_expr(e.addr)}]"
    if isinstance(e, UnOp):
        if e.op in ("zext", "sext"):
            return f"({e.op}{e.params[0]} {format_expr(e.arg)})"
        if e.op == "extract":
            return f"(extract {e.params[0]} {e.params[1]} {format_expr(e.arg)})"
        return f"({e.op} {format_expr(e.arg)})"
    if isinstance(e, BinOp):
        return f"({format_expr(e.lhs)} {_INFIX_OUT[e.op]} {format_expr(e.rhs)})"
    raise TypeError(e)


def format_instr(ins: Instr) -> str:
    if isinstance(ins, Assign):
        return f"{ins.dst}:{ins.width} := {format_expr(ins.rhs)}"
    if isinstance(ins, Store):
        return f"@[{format_expr(ins.idx)}] := {format_expr(ins.val)}"
    if isinstance(ins, Goto):
        return f"goto {ins.target}"
    if isinstance(ins, DJump):
        return f"djump {format_expr(ins.target)}"
    if isinstance(ins, Ite):
        return f"ite {format_expr(ins.cond)} ? {ins.then} : {ins.else_}"
    if isinstance(ins, Halt):
        return "halt"
    raise TypeError(ins)


def format_program(p: Program) -> str:
    out = [f"entry {p.entry}"]
    for name, bv in p.init_regs.items():
        out.append(f"reg {name}:{bv.width} = {hex(bv.value)}")
    for r in p.regions:
        out.append(f"{r.kind} {r.base_reg} {r.offset} {r.length}")
    for loc, ins in p.code.items():
        out.append(f"{loc}: {format_instr(ins)}")
    return "\n".join(out) + "\n"


def load_program(path) -> Program:
    with open(path, encoding="utf-8") as fh:
        return parse_program(fh.read())


def registers_read(p: Program) -> set[str]:
    names: set[str] = set()
    for ins in p.code.values():
        for e in instr_exprs(ins):
            names |= expr_vars(e)
    return names


def maybe_uninitialized(p: Program) -> list[str]:
    """Registers that some path may read before any write, excluding init_regs.

    Forward must-defined analysis; dynamic jumps are assumed to reach any
    location.
    """
    everything = registers_read(p) | {i.dst for i in p.code.values() if isinstance(i, Assign)}
    full = frozenset(everything)
    defined_in: dict[int, frozenset] = {loc: full for loc in p.code}
    start = frozenset(p.init_regs)
    defined_in[p.entry] = start
    preds: dict[int, list[int]] = {loc: [] for loc in p.code}
    has_djump = any(isinstance(i, DJump) for i in p.code.values())
    for loc, ins in p.code.items():
        for s in _successors(p, loc, ins):
            preds[s].append(loc)
    changed = True
    out: dict[int, frozenset] = {}
    while changed:
        changed = False
        for loc, ins in p.code.items():
            d = defined_in[loc]
            o = d | {ins.dst} if isinstance(ins, Assign) else d
            if out.get(loc) != o:
                out[loc] = o
                changed = True
        for loc in p.code:
            srcs = [out[q] for q in preds[loc]]
            if has_djump:
                srcs += [out[q] for q, i in p.code.items() if isinstance(i, DJump)]
            if loc == p.entry:
                new = start
            else:
                new = full
                for s in srcs:
                    new = new & s
            if new != defined_in[loc]:
                defined_in[loc] = new
                changed = True
    result = set()
    for loc, ins in p.code.items():
        for e in instr_exprs(ins):
            result |= expr_vars(e) - defined_in[loc]
    return sorted(result)


def _successors(p: Program, loc: int, ins: Instr) -> Iterable[int]:
    if isinstance(ins, Goto):
        return [ins.target]
    if isinstance(ins, Ite):
        return [ins.then, ins.else_]
    if isinstance(ins, (Halt, DJump)):
        return []
    nxt = p.next_loc(loc)
    return [] if nxt is None else [nxt]
