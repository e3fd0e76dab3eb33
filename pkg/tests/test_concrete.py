import itertools
import random
from dataclasses import replace

import pytest
from hypothesis import given, settings, strategies as st

from relse.concrete import (
    ERROR, HALTED, Branch, BudgetExceeded, DivisionByZero, JumpTarget, MemAccess,
    StuckNoInstruction, ConcreteError, conc_run, conc_step, ct_oracle, low_equivalent,
    make_state, oracle_inputs, oracle_state,
)
from relse.ir import BitVec, DJump, Ite, Load, Store, instr_exprs, iter_subexprs, parse_program
from relse.randprog import random_program

from conftest import corpus_program


def bv32(v):
    return BitVec(32, v)


def test_halt_is_terminal():
    p = parse_program("entry 0\n0: halt\n")
    s = make_state(p)
    t, leaks = conc_step(p, s)
    assert leaks == ()
    assert t.status == HALTED and t.loc == s.loc and t.regs == s.regs and t.mem == s.mem
    assert conc_step(p, t) == (t, ())


def test_store_leaks_its_address():
    p = parse_program("entry 0\nreg ebp:32 = 0x1000\n0: @[(ebp - 8:32)] := b:8\n1: halt\n")
    s = make_state(p, {"b": 7})
    t, leaks = conc_step(p, s)
    assert t.mem == {0xFF8: 7}
    assert leaks == (MemAccess(bv32(0xFF8)),)


def test_taken_branch_leaks_true():
    p = parse_program("entry 0\n0: ite nz eax:32 ? 2 : 1\n1: halt\n2: halt\n")
    t, leaks = conc_step(p, make_state(p, {"eax": 5}))
    assert t.loc == 2
    assert leaks == (Branch(BitVec(1, 1)),)


def test_djump_leaks_target():
    p = parse_program("entry 0\n0: djump (a:32 + 1:32)\n1: halt\n2: halt\n")
    t, leaks = conc_step(p, make_state(p, {"a": 1}))
    assert t.loc == 2 and leaks == (JumpTarget(bv32(2)),)


def test_loads_leak_in_evaluation_order():
    p = parse_program("entry 0\n0: a:8 := (@[1:32] + @[2:32])\n1: @[3:32] := @[4:32]\n2: halt\n")
    _, leaks, _ = conc_run(p, make_state(p), 10)
    assert leaks == tuple(MemAccess(bv32(a)) for a in (1, 2, 4, 3))


def test_run_zero_steps():
    p = corpus_program("motivating.ir")
    s0 = make_state(p)
    assert conc_run(p, s0, 0) == (s0, (), 0)
    with pytest.raises(ValueError):
        conc_run(p, s0, -1)


def test_motivating_runs_differ_only_at_secret_access():
    # secret x at ebp-8, public y at ebp-4; y = 0 reaches the secret-indexed load
    p = corpus_program("motivating.ir")
    sa = oracle_state(p, {"low[0]": 0}, {"high[0]": 0})
    sb = oracle_state(p, {"low[0]": 0}, {"high[0]": 1})
    _, la, _ = conc_run(p, sa, 100)
    _, lb, _ = conc_run(p, sb, 100)
    branches = lambda l: [e for e in l if isinstance(e, Branch)]
    assert branches(la) == branches(lb) == [Branch(BitVec(1, 0))]
    diff = [(x, y) for x, y in zip(la, lb) if x != y]
    assert diff == [(MemAccess(bv32(0)), MemAccess(bv32(1)))]
    assert la[-1] == MemAccess(bv32(0)) and lb[-1] == MemAccess(bv32(1))


def test_run_past_halt_equals_exact_run():
    p = corpus_program("loop.ir")
    s0 = oracle_state(p, {"low[0]": 3}, {"high[0]": 9})
    exact = conc_run(p, s0, 10_000)
    steps = exact[2]
    assert exact[0].status == HALTED
    assert conc_run(p, s0, steps) == exact
    assert conc_run(p, s0, steps + 50) == exact


def test_division_by_zero():
    p = parse_program("entry 0\n0: a:8 := (b:8 /u c:8)\n1: halt\n")
    with pytest.raises(DivisionByZero):
        conc_step(p, make_state(p, {"b": 1, "c": 0}))
    s, leaks, steps = conc_run(p, make_state(p, {"b": 1, "c": 0}), 5, on_error="halt")
    assert s.status == ERROR and isinstance(s.error, DivisionByZero) and steps == 0


def test_stuck_reports_step_index():
    p = parse_program("entry 0\n0: a:32 := 1:32\n1: djump 7:32\n")
    with pytest.raises(StuckNoInstruction) as exc:
        conc_run(p, make_state(p), 10)
    assert exc.value.step == 2 and exc.value.loc == 7


def test_unwritten_register():
    p = parse_program("entry 0\n0: a:8 := b:8\n1: halt\n")
    with pytest.raises(ConcreteError):
        conc_step(p, make_state(p))


def test_memory_default():
    p = parse_program("entry 0\n0: a:8 := @[5:32]\n1: halt\n")
    s, _, _ = conc_run(p, make_state(p, mem_default=0xAB), 5)
    assert s.regs["a"] == BitVec(8, 0xAB)


# -- low equivalence ----------------------------------------------------------

def test_low_equivalence():
    p = corpus_program("motivating.ir")
    s = oracle_state(p, {"low[0]": 2}, {"high[0]": 5})
    assert low_equivalent(p, s, s)
    assert low_equivalent(p, s, oracle_state(p, {"low[0]": 2}, {"high[0]": 6}))
    assert not low_equivalent(p, s, oracle_state(p, {"low[0]": 3}, {"high[0]": 5}))
    assert not low_equivalent(p, s, replace(s, regs={**s.regs, "ebp": bv32(0)}))


# -- oracle -------------------------------------------------------------------

def test_oracle_motivating():
    p = corpus_program("motivating.ir")
    o = ct_oracle(p, k=100, bits=2)
    assert not o.ct and o.status == "NotCT"
    w = o.witness
    assert w.low == {"low[0]": 0}
    assert (w.high_a, w.high_b) == ({"high[0]": 0}, {"high[0]": 1})
    assert w.leak_a[w.divergence] == MemAccess(bv32(0))
    assert w.leak_b[w.divergence] == MemAccess(bv32(1))
    doc = w.to_json()
    assert doc["leak_a"][w.divergence] == "mem(0x0)"


def test_oracle_straight_line_is_ct():
    p = parse_program("entry 0\nreg esp:32 = 0x100\nhigh esp 0 1\n"
                      "0: a:8 := (b:8 * 3:8)\n1: c:8 := (a:8 ^ b:8)\n2: halt\n")
    assert ct_oracle(p, 10, bits=4).ct


def test_oracle_public_addresses_is_ct():
    text = ("entry 0\nreg esp:32 = 0x100\nreg tab:32 = 0x200\nhigh esp 0 1\nlow esp 1 1\n"
            "0: k:8 := @[esp]\n"
            "1: n:8 := (@[(esp + 1:32)] & 7:8)\n"
            "2: v:8 := @[(tab + (zext32 n))]\n"
            "3: @[(tab + (zext32 n))] := (v ^ k)\n"
            "4: halt\n")
    p = parse_program(text)
    assert ct_oracle(p, 20, bits=3).ct
    # independent check: every pair of low-equivalent states leaks the same
    for low in range(8):
        traces = {conc_run(p, oracle_state(p, {"low[0]": low}, {"high[0]": h}), 20)[1]
                  for h in range(8)}
        assert len(traces) == 1


def test_oracle_budget():
    p = parse_program("entry 0\nreg esp:32 = 0\n" + "".join(f"high esp {i} 1\n" for i in range(4))
                      + "0: halt\n")
    with pytest.raises(BudgetExceeded):
        ct_oracle(p, 5, bits=4)
    assert ct_oracle(p, 5, bits=3).ct


def test_oracle_inputs_include_free_registers():
    p = parse_program("entry 0\nreg esp:32 = 0\nhigh esp 0 2\n0: a:8 := (b:8 + 1:8)\n1: halt\n")
    lows, highs = oracle_inputs(p)
    assert lows == [("b", 8)] and highs == [("high[0]", 16)]


def test_oracle_detects_secret_jump():
    p = corpus_program("djump.ir")
    o = ct_oracle(p, 20, bits=4)
    assert not o.ct
    assert isinstance(o.witness.leak_a[o.witness.divergence], JumpTarget)


def _full_pairs_ct(p, k, bits):
    """Reference: compare every pair of low-equivalent inputs."""
    lows, highs = oracle_inputs(p)
    dom = lambda ins: [dict(zip([n for n, _ in ins], c))
                       for c in itertools.product(*[range(1 << min(bits, w)) for _, w in ins])]
    for low in dom(lows):
        hs = dom(highs)
        for a, b in itertools.combinations(hs, 2):
            la = conc_run(p, oracle_state(p, low, a), k, on_error="halt")[1]
            lb = conc_run(p, oracle_state(p, low, b), k, on_error="halt")[1]
            if la != lb:
                return False
    return True


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_oracle_matches_pairwise_enumeration(seed):
    p = random_program(random.Random(seed))
    assert ct_oracle(p, 32, bits=3).ct == _full_pairs_ct(p, 32, 3)


# -- properties ---------------------------------------------------------------

def _random_state(p, rng):
    lows, highs = oracle_inputs(p)
    low = {n: rng.randrange(1 << min(w, 8)) for n, w in lows}
    high = {n: rng.randrange(1 << min(w, 8)) for n, w in highs}
    return oracle_state(p, low, high)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_step_is_deterministic(seed):
    rng = random.Random(seed)
    p = random_program(rng)
    s = _random_state(p, rng)
    for _ in range(20):
        try:
            a = conc_step(p, s)
        except ConcreteError:
            return
        assert conc_step(p, s) == a
        s = a[0]


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6))
def test_ct_is_monotone_in_k(seed):
    p = random_program(random.Random(seed))
    k = 24
    if ct_oracle(p, k, bits=3).ct:
        for j in range(k + 1):
            assert ct_oracle(p, j, bits=3).ct


def _leaking_events(ins) -> int:
    n = sum(isinstance(e, Load) for x in instr_exprs(ins) for e in iter_subexprs(x))
    return n + isinstance(ins, (Store, Ite, DJump))


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 10**6))
def test_leakage_length_counts_leaking_instructions(seed):
    rng = random.Random(seed)
    p = random_program(rng)
    s = _random_state(p, rng)
    expected = 0
    t = s
    for _ in range(30):
        if t.halted:
            break
        expected += _leaking_events(p.code[t.loc])
        t, _ = conc_step(p, t)
    _, leaks, _ = conc_run(p, s, 30)
    assert len(leaks) == expected
