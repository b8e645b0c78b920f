import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pga import corpus
from pga.ir import ScalarType, load_program
from pga.vm import Trap, apply_op, execute, to_signed


def run(text, data=b"", **kw):
    return execute(load_program(text), data, **kw)


def test_fig6a_zero_input():
    p, _ = corpus.load("fig6a")
    assert execute(p, b"\x00").sink_values == (("entry:3", 0),)


def test_fig6a_input_three():
    p, _ = corpus.load("fig6a")
    assert execute(p, b"\x03").sink_values == (("entry:3", 2),)


def test_add_wraps_at_width():
    res = run("block e:\n  r1 = const.i8 255\n  r2 = add.i8 r1, r1\n  ret")
    assert res.registers[2] == 254


def test_coverage_is_adjacent_trace_pairs():
    p, seed = corpus.load("checksum")
    res = execute(p, seed)
    assert res.trace[0] == "entry" and res.ok
    assert res.coverage == frozenset(zip(res.trace, res.trace[1:]))
    assert ("body", "loop") in res.coverage


@pytest.mark.parametrize("name", corpus.NAMES)
def test_deterministic(name):
    p, seed = corpus.load(name)
    assert execute(p, seed) == execute(p, seed)


@pytest.mark.parametrize("op", ["sdiv", "srem", "udiv", "urem"])
def test_division_by_zero_traps(op):
    res = run(f"block e:\n  r1 = const.i32 7\n  r2 = {op}.i32 r1, 0\n  ret")
    assert (res.termination, res.trap_kind) == ("trap", "div-by-zero")


def test_out_of_bounds_traps():
    res = run(".memory 4\nblock e:\n  r1 = const.i32 3\n  r2 = load.i16 r1\n  ret")
    assert (res.termination, res.trap_kind) == ("trap", "out-of-bounds")


def test_memcpy_out_of_bounds_traps():
    res = run(".memory 4\nblock e:\n  r1 = const.i32 3\n  memcpy 2, 0, r1\n  ret")
    assert res.trap_kind == "out-of-bounds"


def test_budget_exhausted_on_infinite_loop():
    res = run("block e:\n  jmp e\n", step_budget=50)
    assert res.termination == "budget-exhausted"
    assert res.steps == 50


def test_branch_condition_recorded_as_sink():
    res = run("block e:\n  r1 = const.i8 0\n  br r1, a, b\nblock a:\n  ret\nblock b:\n  ret")
    assert res.sink_values == (("e:1", 0),)
    assert res.trace == ("e", "b")


def test_memory_little_endian_round_trip():
    res = run(".memory 8\nblock e:\n  r1 = const.i32 0x11223344\n  store.i32 0, r1\n"
              "  r2 = load.i8 0\n  r3 = load.i16 2\n  r4 = const.f64 -2.5\n  store.f64 0, r4\n"
              "  r5 = load.f64 0\n  ret")
    assert res.registers[2] == 0x44
    assert res.registers[3] == 0x1122
    assert res.registers[5] == -2.5


def test_memset_and_memcpy():
    res = run(".memory 8\nblock e:\n  memset 0, 0xab, 4\n  memcpy 4, 0, 2\n"
              "  r1 = load.i32 4\n  ret")
    assert res.registers[1] == 0x0000ABAB


I8, I32, I64, F64 = (ScalarType.parse(t) for t in ("i8", "i32", "i64", "f64"))


@pytest.mark.parametrize("op, args, want", [
    ("shl", (1, 8), 0), ("lshr", (0x80, 9), 0), ("ashr", (0x80, 9), 0xFF),
    ("ashr", (0x80, 1), 0xC0), ("lshr", (0x80, 1), 0x40),
    ("sdiv", (0xF9, 2), 0xFD),  # -7 / 2 = -3
    ("srem", (0xF9, 2), 0xFF),  # -7 % 2 = -1
    ("udiv", (0xF9, 2), 124), ("urem", (0xF9, 2), 1),
    ("sdiv", (0x80, 0xFF), 0x80),  # INT_MIN / -1 wraps
    ("icmp.slt", (0xFF, 0), 1), ("icmp.ult", (0xFF, 0), 0),
    ("icmp.eq", (3, 3), 1), ("icmp.sge", (0x80, 0x7F), 0),
])
def test_i8_semantics(op, args, want):
    assert apply_op(op, I8, args) == want


def test_casts():
    assert apply_op("sext", I32, (0xFF,), I8) == 0xFFFFFFFF
    assert apply_op("zext", I32, (0xFF,), I8) == 0xFF
    assert apply_op("trunc", I8, (0x1234,), I32) == 0x34
    assert apply_op("itof", F64, (0xFF,), I8) == -1.0
    assert apply_op("ftoi", I8, (1e9,), F64) == 127
    assert apply_op("ftoi", I8, (-1e9,), F64) == 0x80
    assert apply_op("ftoi", I32, (-2.7,), F64) == 0xFFFFFFFE  # toward zero
    assert apply_op("ftoi", I32, (math.nan,), F64) == 0


def test_itof_rounds_toward_zero():
    big = (1 << 62) + 1
    assert apply_op("itof", F64, (big,), I64) <= big


def test_float_division_by_zero_does_not_trap():
    assert apply_op("fdiv", F64, (1.0, 0.0)) == math.inf
    assert math.isnan(apply_op("frem", F64, (1.0, 0.0)))


@settings(max_examples=300, deadline=None)
@given(st.sampled_from([8, 16, 32, 64]), st.integers(0, 2**64 - 1), st.integers(0, 2**64 - 1),
       st.sampled_from(["add", "sub", "mul"]))
def test_wrapping_matches_exact_arithmetic(w, a, b, op):
    ty = ScalarType("int", w)
    a, b = a % 2**w, b % 2**w
    exact = {"add": a + b, "sub": a - b, "mul": a * b}[op]
    assert apply_op(op, ty, (a, b)) == exact % 2**w


@settings(max_examples=300, deadline=None)
@given(st.sampled_from([8, 16, 32]), st.integers(), st.integers().filter(lambda v: v != 0))
def test_signed_division_truncates(w, a, b):
    ty = ScalarType("int", w)
    sa, sb = to_signed(a % 2**w, w), to_signed(b % 2**w, w)
    if sb == 0:
        return
    q = apply_op("sdiv", ty, (a % 2**w, b % 2**w))
    r = apply_op("srem", ty, (a % 2**w, b % 2**w))
    exact_q = int(sa / sb) if abs(sa) < 2**52 else None
    if exact_q is not None:
        assert q == exact_q % 2**w
    assert (to_signed(q, w) * sb + to_signed(r, w) - sa) % 2**w == 0


def test_short_input_rejected():
    p, _ = corpus.load("magic_byte")
    with pytest.raises(ValueError):
        execute(p, b"\x00")


def test_trap_class():
    with pytest.raises(Trap) as e:
        apply_op("udiv", I8, (1, 0))
    assert e.value.kind == "div-by-zero"
