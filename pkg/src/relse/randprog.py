"""Random small programs for differential testing against the oracle.

Programs read at most two one-byte inputs (masked to 4 bits), work on four
8-bit registers initialized concretely, touch a stack scratch area and a
16-byte table, and use forward branches, bounded loops and two-way
dynamic jumps. Division only ever happens by nonzero constants.
"""

from __future__ import annotations

import random
from typing import Optional

from .ir import Program, parse_program

STACK = 0x100
TABLE = 0x200
REGS = ("r0", "r1", "r2", "r3")
_ARITH = ("+", "-", "^", "&", "|", "*")


class _Regs:
    """Register picker biased toward recently written registers, so input
    values actually flow into leaks."""

    def __init__(self, rng):
        self.rng = rng
        self.recent: list[str] = []

    def read(self) -> str:
        if self.recent and self.rng.random() < 0.6:
            return self.rng.choice(self.recent[-2:])
        return self.rng.choice(REGS)

    def write(self) -> str:
        r = self.rng.choice(REGS)
        self.recent.append(r)
        return r


def _operand(rng, regs) -> str:
    if rng.random() < 0.35:
        return f"{rng.randrange(16)}:8"
    return f"{regs.read()}:8"


def _cond(rng, regs) -> str:
    r = regs.read()
    kind = rng.randrange(3)
    if kind == 0:
        return f"nz {r}:8"
    if kind == 1:
        return f"({r}:8 <u {rng.randrange(1, 16)}:8)"
    return f"({r}:8 = {_operand(rng, regs)})"


def _table_index(rng, regs) -> str:
    return f"(tab:32 + (zext32 ({regs.read()}:8 & 15:8)))"


def random_program_text(rng: random.Random, max_instrs: int = 12,
                        n_high: Optional[int] = None, n_low: Optional[int] = None) -> str:
    if n_high is None:
        n_high = rng.choice((0, 1, 1, 1, 2))
    if n_low is None:
        n_low = rng.choice((0, 1)) if n_high < 2 else 0
    inputs = [("high", i) for i in range(n_high)] + [("low", n_high + i) for i in range(n_low)]
    lines = ["entry 0", f"reg esp:32 = {STACK:#x}", f"reg tab:32 = {TABLE:#x}"]
    for r in REGS:
        lines.append(f"reg {r}:8 = {rng.randrange(16)}")
    for kind, off in inputs:
        lines.append(f"{kind} esp {off} 1")

    regs = _Regs(rng)
    n = rng.randint(2, max_instrs)
    body: list[str] = []
    locs = list(range(n))
    # read inputs early so they matter
    for kind, off in inputs:
        if len(body) < n - 1:
            body.append(f"{regs.write()}:8 := (@[(esp:32 + {off}:32)] & 15:8)")
    while len(body) < n - 1:
        loc = len(body)
        last = loc == n - 2
        roll = rng.random()
        if roll < 0.30:
            op = rng.choice(_ARITH)
            body.append(f"{regs.write()}:8 := ({regs.read()}:8 {op} {_operand(rng, regs)})")
        elif roll < 0.36:
            body.append(f"{regs.write()}:8 := ({regs.read()}:8 /u {rng.randrange(1, 6)}:8)")
        elif roll < 0.40:
            op = rng.choice(("<<", ">>"))
            body.append(f"{regs.write()}:8 := ({regs.read()}:8 {op} {rng.randrange(4)}:8)")
        elif roll < 0.52:
            body.append(f"{regs.write()}:8 := @[{_table_index(rng, regs)}]")
        elif roll < 0.58:
            body.append(f"{regs.write()}:8 := @[(esp:32 + {rng.randrange(8)}:32)]")
        elif roll < 0.64:
            body.append(f"@[(esp:32 + {rng.randrange(4, 8)}:32)] := {_operand(rng, regs)}")
        elif roll < 0.68:
            body.append(f"@[{_table_index(rng, regs)}] := {_operand(rng, regs)}")
        elif roll < 0.84 and not last:
            target = rng.randint(loc + 1, n - 1)
            body.append(f"ite {_cond(rng, regs)} ? {target} : {loc + 1}")
        elif roll < 0.88 and loc > 0:
            # backward branch: a loop cut off by the depth bound
            target = rng.randrange(loc)
            body.append(f"ite {_cond(rng, regs)} ? {target} : {loc + 1}")
        elif roll < 0.94 and not last:
            lo = loc + 1
            d = rng.randint(1, n - 1 - lo) if n - 1 > lo else 0
            body.append(f"djump (((zext32 ({regs.read()}:8 & 1:8)) * {d}:32) + {lo}:32)")
        elif not last:
            body.append(f"goto {rng.randint(loc + 1, n - 1)}")
        else:
            body.append(f"{regs.write()}:8 := {_operand(rng, regs)}")
    body.append("halt")
    lines += [f"{loc}: {ins}" for loc, ins in zip(locs, body)]
    return "\n".join(lines) + "\n"


def random_program(rng: random.Random, **kw) -> Program:
    return parse_program(random_program_text(rng, **kw))


def corpus(seed: int, count: int, **kw) -> list[tuple[str, Program]]:
    rng = random.Random(seed)
    out = []
    for i in range(count):
        text = random_program_text(rng, **kw)
        out.append((text, parse_program(text)))
    return out
