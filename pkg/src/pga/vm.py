"""Concrete interpreter for ProgramIR.

Integer registers hold unsigned values reduced modulo 2**width; floats are
Python floats. Analyses observe execution through a :class:`Tracker`, which
sees every instruction after its concrete effect but can never change it.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass, field

from .ir import Imm, Instruction, ProgramIR, ScalarType, site_id

DEFAULT_STEP_BUDGET = 1_000_000


class Trap(Exception):
    def __init__(self, kind: str, detail: str = ""):
        super().__init__(f"{kind}: {detail}" if detail else kind)
        self.kind = kind


def to_signed(value: int, width: int) -> int:
    value &= (1 << width) - 1
    return value - (1 << width) if value >> (width - 1) else value


def wrap(value: int, width: int) -> int:
    return value & ((1 << width) - 1)


def _trunc_div(a: int, b: int) -> int:
    q = abs(a) // abs(b)
    return q if (a < 0) == (b < 0) else -q


def _int_to_float(v: int) -> float:
    # round toward zero for magnitudes beyond 2**53
    f = float(v)
    if abs(f) > abs(v):
        f = math.nextafter(f, 0.0)
    return f


def _float_to_int(x: float, ty: ScalarType) -> int:
    lo, hi = -(1 << (ty.width - 1)), (1 << (ty.width - 1)) - 1
    if math.isnan(x):
        return 0
    if x >= hi:
        return wrap(hi, ty.width)
    if x <= lo:
        return wrap(lo, ty.width)
    return wrap(int(x), ty.width)


def _fdiv(a: float, b: float) -> float:
    if b == 0.0:
        if a == 0.0 or math.isnan(a):
            return math.nan
        return math.copysign(math.inf, a) * math.copysign(1.0, b)
    return a / b


def _frem(a: float, b: float) -> float:
    if b == 0.0 or math.isinf(a) or math.isnan(a) or math.isnan(b):
        return math.nan
    return math.fmod(a, b)


def _icmp(pred: str, a: int, b: int, w: int) -> int:
    if pred[0] == "s":
        a, b = to_signed(a, w), to_signed(b, w)
    return int({
        "eq": a == b, "ne": a != b,
        "ult": a < b, "slt": a < b, "ule": a <= b, "sle": a <= b,
        "ugt": a > b, "sgt": a > b, "uge": a >= b, "sge": a >= b,
    }[pred])


def apply_op(opcode: str, ty: ScalarType, args: tuple, src: ScalarType | None = None):
    """Evaluate one pure value operation on raw operand values.

    ``src`` is the operand type for casts (zext/sext/trunc/itof/ftoi). Raises
    :class:`Trap` on integer division by zero.
    """
    base = opcode.split(".", 1)[0]
    if base in ("fadd", "fsub", "fmul", "fdiv", "frem"):
        a, b = float(args[0]), float(args[1])
        if base == "fadd":
            return a + b
        if base == "fsub":
            return a - b
        if base == "fmul":
            return a * b
        if base == "fdiv":
            return _fdiv(a, b)
        return _frem(a, b)

    w = ty.width
    if base == "itof":
        return _int_to_float(to_signed(args[0], src.width))
    if base == "ftoi":
        return _float_to_int(float(args[0]), ty)
    if base == "zext":
        return wrap(args[0], src.width)
    if base == "sext":
        return wrap(to_signed(args[0], src.width), w)
    if base == "trunc":
        return wrap(args[0], w)

    a, b = wrap(args[0], w), wrap(args[1], w)
    if base == "icmp":
        return _icmp(opcode[5:], a, b, w)
    if base == "add":
        return wrap(a + b, w)
    if base == "sub":
        return wrap(a - b, w)
    if base == "mul":
        return wrap(a * b, w)
    if base == "and":
        return a & b
    if base == "or":
        return a | b
    if base == "xor":
        return a ^ b
    if base == "shl":
        return 0 if b >= w else wrap(a << b, w)
    if base == "lshr":
        return 0 if b >= w else a >> b
    if base == "ashr":
        return wrap(to_signed(a, w) >> min(b, w - 1), w)
    if b == 0 and base in ("udiv", "urem", "sdiv", "srem"):
        raise Trap("div-by-zero", opcode)
    if base == "udiv":
        return a // b
    if base == "urem":
        return a % b
    sa, sb = to_signed(a, w), to_signed(b, w)
    q = _trunc_div(sa, sb)
    if base == "sdiv":
        return wrap(q, w)
    if base == "srem":
        return wrap(sa - q * sb, w)
    raise ValueError(f"not a value operation: {opcode}")


def coerce(value, ty: ScalarType):
    """Raw register representation of an immediate."""
    if ty.is_float:
        return float(value)
    return wrap(int(value), ty.width)


class Tracker:
    """Observer hooks called by :func:`execute`; every hook is a no-op here.

    Hooks fire after the instruction's concrete effect. ``site`` is the stable
    ``block:index`` id of the instruction.
    """

    def on_input(self, site: str, ins: Instruction, byte_index: int) -> None: ...
    def on_const(self, site: str, ins: Instruction) -> None: ...
    def on_op(self, site: str, ins: Instruction, args: tuple, src: ScalarType | None) -> None: ...
    def on_load(self, site: str, ins: Instruction, addr: int) -> None: ...
    def on_store(self, site: str, ins: Instruction, addr: int) -> None: ...
    def on_memset(self, site: str, addr: int, length: int) -> None: ...
    def on_memcpy(self, site: str, dst: int, src: int, length: int) -> None: ...
    def on_sink(self, site: str, ins: Instruction) -> None: ...
    def on_branch(self, site: str, ins: Instruction) -> None: ...


@dataclass
class ExecResult:
    trace: tuple
    sink_values: tuple
    coverage: frozenset
    termination: str  # "ret", "trap" or "budget-exhausted"
    trap_kind: str | None = None
    steps: int = 0
    registers: dict = field(default_factory=dict, compare=False, repr=False)

    @property
    def ok(self) -> bool:
        return self.termination == "ret"

    def observable(self) -> tuple:
        """Everything an instrumented run must reproduce exactly."""
        return (self.trace, self.sink_values, self.coverage, self.termination, self.trap_kind)


def edges_of(trace) -> frozenset:
    return frozenset(zip(trace, trace[1:]))


def execute(p: ProgramIR, data: bytes, step_budget: int = DEFAULT_STEP_BUDGET,
            tracker: Tracker | None = None) -> ExecResult:
    if len(data) < p.input_length:
        raise ValueError(f"input has {len(data)} bytes, program declares {p.input_length}")
    t = tracker or Tracker()
    regs: dict[int, tuple] = {}
    mem = bytearray(p.memory_size)
    trace = [p.entry]
    sinks = []
    steps = 0
    termination, trap_kind = "ret", None

    def read(op, ty=None):
        if isinstance(op, Imm):
            return coerce(op.value, ty) if ty is not None else op.value
        try:
            return regs[op.id][0]
        except KeyError:
            raise Trap("unassigned-register", str(op)) from None

    def addr_range(addr: int, n: int) -> None:
        if n < 0 or addr < 0 or addr + n > len(mem):
            raise Trap("out-of-bounds", f"[{addr}, {addr + n})")

    block = p.block(p.entry)
    idx = 0
    try:
        while True:
            if steps >= step_budget:
                termination = "budget-exhausted"
                break
            steps += 1
            ins = block.instructions[idx]
            site = site_id(block.name, idx)
            base = ins.base
            idx += 1

            if base == "br":
                cond = read(ins.operands[0])
                sinks.append((site, cond))
                t.on_branch(site, ins)
                nxt = ins.targets[0] if cond != 0 else ins.targets[1]
            elif base == "jmp":
                nxt = ins.targets[0]
            elif base == "ret":
                break
            else:
                nxt = None
                if base == "const":
                    regs[ins.result.id] = (coerce(ins.operands[0].value, ins.type), ins.type)
                    t.on_const(site, ins)
                elif base == "input":
                    b = ins.operands[0].value
                    if not 0 <= b < len(data):
                        raise Trap("out-of-bounds", f"input byte {b}")
                    regs[ins.result.id] = (data[b], ins.type)
                    t.on_input(site, ins, b)
                elif base == "load":
                    addr = read(ins.operands[0])
                    n = ins.type.nbytes
                    addr_range(addr, n)
                    raw = bytes(mem[addr:addr + n])
                    val = struct.unpack("<d", raw)[0] if ins.type.is_float else int.from_bytes(raw, "little")
                    regs[ins.result.id] = (val, ins.type)
                    t.on_load(site, ins, addr)
                elif base == "store":
                    addr = read(ins.operands[0])
                    val = read(ins.operands[1], ins.type)
                    n = ins.type.nbytes
                    addr_range(addr, n)
                    mem[addr:addr + n] = (struct.pack("<d", val) if ins.type.is_float
                                          else val.to_bytes(n, "little"))
                    t.on_store(site, ins, addr)
                elif base == "memset":
                    addr, val, n = (read(o) for o in ins.operands)
                    addr_range(addr, n)
                    mem[addr:addr + n] = bytes([val & 0xFF]) * n
                    t.on_memset(site, addr, n)
                elif base == "memcpy":
                    dst, src, n = (read(o) for o in ins.operands)
                    addr_range(dst, n)
                    addr_range(src, n)
                    mem[dst:dst + n] = mem[src:src + n]
                    t.on_memcpy(site, dst, src, n)
                elif base == "sink":
                    sinks.append((site, read(ins.operands[0])))
                    t.on_sink(site, ins)
                else:
                    src = None
                    if base in ("zext", "sext", "trunc", "itof", "ftoi"):
                        read(ins.operands[0])
                        src = regs[ins.operands[0].id][1]
                        op_ty = src
                    else:
                        op_ty = ins.type
                    args = tuple(read(o, op_ty) for o in ins.operands)
                    regs[ins.result.id] = (apply_op(ins.opcode, ins.type, args, src), ins.result_type)
                    t.on_op(site, ins, args, src)
            if nxt is not None:
                trace.append(nxt)
                block = p.block(nxt)
                idx = 0
    except Trap as e:
        termination, trap_kind = "trap", e.kind

    return ExecResult(tuple(trace), tuple(sinks), edges_of(trace), termination,
                      trap_kind, steps, {r: v for r, (v, _) in regs.items()})

