"""Register-machine IR: types, text format parser/printer, and static validation.

Text format, one item per line (``;`` starts a comment)::

    .input 1
    .memory 16
    block entry:
      r1 = input.i32 0
      r2 = mul.i32 r1, 2
      r3 = srem.i32 r2, 4
      sink r3
      ret

The first block is the entry block unless an ``.entry <name>`` directive says
otherwise.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Iterator, Union

INT_WIDTHS = (8, 16, 32, 64)


@dataclass(frozen=True)
class ScalarType:
    kind: str  # "int" or "float"
    width: int

    def __post_init__(self):
        if self.kind == "int" and self.width not in INT_WIDTHS:
            raise ValueError(f"bad integer width {self.width}")
        if self.kind == "float" and self.width != 64:
            raise ValueError("float width must be 64")
        if self.kind not in ("int", "float"):
            raise ValueError(f"bad type kind {self.kind!r}")

    @property
    def is_float(self) -> bool:
        return self.kind == "float"

    @property
    def nbytes(self) -> int:
        return self.width // 8

    @property
    def mask(self) -> int:
        return (1 << self.width) - 1

    def __str__(self) -> str:
        return "f64" if self.is_float else f"i{self.width}"

    @classmethod
    def parse(cls, name: str) -> "ScalarType":
        try:
            return TYPES[name]
        except KeyError:
            raise ValueError(f"unknown type {name!r}") from None


I8, I16, I32, I64 = (ScalarType("int", w) for w in INT_WIDTHS)
F64 = ScalarType("float", 64)
TYPES = {"i8": I8, "i16": I16, "i32": I32, "i64": I64, "f64": F64}


@dataclass(frozen=True)
class Reg:
    id: int

    def __str__(self) -> str:
        return f"r{self.id}"


@dataclass(frozen=True)
class Imm:
    value: Union[int, float]

    def __str__(self) -> str:
        return repr(self.value)


Operand = Union[Reg, Imm]

INT_BINARY = ("add", "sub", "mul", "udiv", "sdiv", "urem", "srem",
              "shl", "lshr", "ashr", "and", "or", "xor")
FLOAT_BINARY = ("fadd", "fsub", "fmul", "fdiv", "frem")
ICMP_PREDICATES = ("eq", "ne", "ult", "ule", "ugt", "uge", "slt", "sle", "sgt", "sge")
CASTS = ("zext", "sext", "trunc")
TERMINATORS = ("br", "jmp", "ret")
# opcodes that write a result register
VALUE_OPS = (INT_BINARY + FLOAT_BINARY + CASTS
             + ("icmp", "itof", "ftoi", "const", "input", "load"))
EFFECT_OPS = ("store", "memset", "memcpy", "sink")


@dataclass(frozen=True)
class Instruction:
    opcode: str  # icmp carries its predicate: "icmp.slt"
    type: ScalarType | None = None
    result: Reg | None = None
    operands: tuple = ()
    targets: tuple = ()
    line: int = field(default=0, compare=False)

    @property
    def base(self) -> str:
        return self.opcode.split(".", 1)[0]

    @property
    def predicate(self) -> str | None:
        return self.opcode.split(".", 1)[1] if self.base == "icmp" else None

    @property
    def is_terminator(self) -> bool:
        return self.opcode in TERMINATORS

    @property
    def result_type(self) -> ScalarType | None:
        if self.result is None:
            return None
        return I8 if self.base == "icmp" else self.type

    def uses(self) -> list[Reg]:
        return [op for op in self.operands if isinstance(op, Reg)]

    def __str__(self) -> str:
        ops = ", ".join(str(o) for o in self.operands)
        if self.opcode == "br":
            return f"br {ops}, {self.targets[0]}, {self.targets[1]}"
        if self.opcode == "jmp":
            return f"jmp {self.targets[0]}"
        if self.opcode == "ret":
            return "ret"
        head = self.opcode if self.type is None else f"{self.opcode}.{self.type}"
        text = f"{head} {ops}" if ops else head
        if self.result is not None:
            text = f"{self.result} = {text}"
        return text


@dataclass(frozen=True)
class Block:
    name: str
    instructions: tuple

    def __str__(self) -> str:
        body = "".join(f"\n  {ins}" for ins in self.instructions)
        return f"block {self.name}:{body}"


@dataclass(frozen=True)
class ProgramIR:
    blocks: tuple
    entry: str
    input_length: int = 0
    memory_size: int = 0

    def __post_init__(self):
        object.__setattr__(self, "_index", {b.name: b for b in self.blocks})

    def block(self, name: str) -> Block:
        return self._index[name]

    def has_block(self, name: str) -> bool:
        return name in self._index

    def instructions(self) -> Iterator[tuple[str, int, Instruction]]:
        for b in self.blocks:
            for i, ins in enumerate(b.instructions):
                yield b.name, i, ins

    def sink_sites(self) -> list[str]:
        """Static sink ids in program order: explicit sinks and conditional branches."""
        return [site_id(name, i) for name, i, ins in self.instructions()
                if ins.opcode in ("sink", "br")]

    def __str__(self) -> str:
        head = [f".input {self.input_length}", f".memory {self.memory_size}"]
        if self.blocks and self.blocks[0].name != self.entry:
            head.append(f".entry {self.entry}")
        return "\n".join(head + [str(b) for b in self.blocks]) + "\n"


def site_id(block: str, index: int) -> str:
    return f"{block}:{index}"


# --------------------------------------------------------------------------
# parsing

class ParseError(Exception):
    def __init__(self, message: str, line: int, column: int = 1):
        super().__init__(f"line {line}, column {column}: {message}")
        self.message = message
        self.line = line
        self.column = column


_NAME = r"[A-Za-z_][A-Za-z0-9_.]*"
_BLOCK_RE = re.compile(rf"^block\s+({_NAME})\s*:\s*$")
_ASSIGN_RE = re.compile(r"^(r\d+)\s*=\s*(.*)$")
_REG_RE = re.compile(r"^r(\d+)$")
_INT_RE = re.compile(r"^[+-]?(0x[0-9a-fA-F]+|\d+)$")

# operand count for each opcode (icmp handled via its base)
_ARITY = {op: 2 for op in INT_BINARY + FLOAT_BINARY}
_ARITY.update({"icmp": 2, "zext": 1, "sext": 1, "trunc": 1, "itof": 1, "ftoi": 1,
               "const": 1, "input": 1, "load": 1, "store": 2, "memset": 3,
               "memcpy": 3, "sink": 1})


def _parse_operand(tok: str, lineno: int, col: int) -> Operand:
    m = _REG_RE.match(tok)
    if m:
        return Reg(int(m.group(1)))
    if _INT_RE.match(tok):
        return Imm(int(tok, 0))
    try:
        return Imm(float(tok))
    except ValueError:
        raise ParseError(f"bad operand {tok!r}", lineno, col) from None


def _split_operands(text: str, lineno: int, col: int) -> list[tuple[str, int]]:
    if not text.strip():
        return []
    out = []
    offset = 0
    for part in text.split(","):
        stripped = part.strip()
        if not stripped:
            raise ParseError("empty operand", lineno, col + offset)
        out.append((stripped, col + offset + part.index(stripped)))
        offset += len(part) + 1
    return out


def _parse_instruction(text: str, lineno: int, col: int) -> Instruction:
    result = None
    m = _ASSIGN_RE.match(text)
    if m:
        result = Reg(int(m.group(1)[1:]))
        col += m.start(2)
        text = m.group(2)
    head, _, rest = text.partition(" ")
    rest_col = col + len(head) + 1
    toks = _split_operands(rest, lineno, rest_col)

    if head in ("br", "jmp", "ret"):
        if result is not None:
            raise ParseError(f"{head} produces no value", lineno, col)
        want = {"br": 3, "jmp": 1, "ret": 0}[head]
        if len(toks) != want:
            raise ParseError(f"{head} expects {want} operand(s), got {len(toks)}", lineno, col)
        if head == "br":
            cond = _parse_operand(toks[0][0], lineno, toks[0][1])
            if not isinstance(cond, Reg):
                raise ParseError("branch condition must be a register", lineno, toks[0][1])
            for name, c in toks[1:]:
                if not re.fullmatch(_NAME, name):
                    raise ParseError(f"bad block name {name!r}", lineno, c)
            return Instruction("br", operands=(cond,), targets=(toks[1][0], toks[2][0]), line=lineno)
        if head == "jmp":
            if not re.fullmatch(_NAME, toks[0][0]):
                raise ParseError(f"bad block name {toks[0][0]!r}", lineno, toks[0][1])
            return Instruction("jmp", targets=(toks[0][0],), line=lineno)
        return Instruction("ret", line=lineno)

    parts = head.split(".")
    base = parts[0]
    if base not in _ARITY:
        raise ParseError(f"unknown opcode {base!r}", lineno, col)
    opcode = base
    if base == "icmp":
        if len(parts) < 2 or parts[1] not in ICMP_PREDICATES:
            raise ParseError("icmp needs a predicate, e.g. icmp.slt.i32", lineno, col)
        opcode = f"icmp.{parts[1]}"
        parts = [opcode] + parts[2:]
    ty = None
    if base in ("memset", "memcpy", "sink"):
        if len(parts) != 1:
            raise ParseError(f"{base} takes no type suffix", lineno, col)
    else:
        if len(parts) != 2:
            raise ParseError(f"{base} needs a type suffix", lineno, col)
        try:
            ty = ScalarType.parse(parts[1])
        except ValueError as e:
            raise ParseError(str(e), lineno, col) from None

    if (result is None) != (base in EFFECT_OPS):
        what = "needs a result register" if result is None else "produces no value"
        raise ParseError(f"{base} {what}", lineno, col)
    if len(toks) != _ARITY[base]:
        raise ParseError(f"{base} expects {_ARITY[base]} operand(s), got {len(toks)}", lineno, col)
    operands = tuple(_parse_operand(t, lineno, c) for t, c in toks)
    if base in CASTS + ("itof", "ftoi", "sink") and not isinstance(operands[0], Reg):
        raise ParseError(f"{base} operand must be a register", lineno, toks[0][1])
    if base in ("const", "input") and not isinstance(operands[0], Imm):
        raise ParseError(f"{base} operand must be an immediate", lineno, toks[0][1])
    return Instruction(opcode, ty, result, operands, line=lineno)


def parse_program(text: str) -> ProgramIR:
    blocks: list[Block] = []
    current: list[Instruction] | None = None
    name = None
    header = {"input": 0, "memory": 0, "entry": None}

    def close():
        if name is not None:
            blocks.append(Block(name, tuple(current)))

    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split(";", 1)[0].rstrip()
        stripped = line.strip()
        if not stripped:
            continue
        col = len(line) - len(line.lstrip()) + 1
        if stripped.startswith("."):
            key, _, val = stripped[1:].partition(" ")
            val = val.strip()
            if key not in header or not val:
                raise ParseError(f"bad directive {stripped!r}", lineno, col)
            if blocks or name is not None:
                raise ParseError("directives must precede blocks", lineno, col)
            if key == "entry":
                header[key] = val
            else:
                if not val.isdigit():
                    raise ParseError(f".{key} expects a byte count", lineno, col)
                header[key] = int(val)
            continue
        if stripped.startswith("block"):
            m = _BLOCK_RE.match(stripped)
            if not m:
                raise ParseError("malformed block header", lineno, col)
            close()
            name, current = m.group(1), []
            continue
        if name is None:
            raise ParseError("instruction outside of a block", lineno, col)
        current.append(_parse_instruction(stripped, lineno, col))
    close()
    if not blocks:
        raise ParseError("program has no blocks", 1)
    entry = header["entry"] or blocks[0].name
    return ProgramIR(tuple(blocks), entry, header["input"], header["memory"])


def print_program(p: ProgramIR) -> str:
    return str(p)


# --------------------------------------------------------------------------
# validation

@dataclass(frozen=True)
class Diagnostic:
    block: str
    index: int | None
    rule: str
    message: str

    def __str__(self) -> str:
        if self.index is None:
            return f"block '{self.block}': {self.message}"
        return f"block '{self.block}' instr {self.index}: {self.message}"


def _fits(value, ty: ScalarType) -> bool:
    if ty.is_float:
        return isinstance(value, (int, float))
    if not isinstance(value, int):
        return False
    return -(1 << (ty.width - 1)) <= value <= ty.mask


def register_types(p: ProgramIR) -> tuple[dict[int, ScalarType], list[Diagnostic]]:
    """Static type of every register (from its first definition) plus conflicts."""
    types: dict[int, ScalarType] = {}
    diags = []
    for bname, i, ins in p.instructions():
        if ins.result is None:
            continue
        rt = ins.result_type
        prev = types.setdefault(ins.result.id, rt)
        if prev != rt:
            diags.append(Diagnostic(bname, i, "type-mismatch",
                                    f"{ins.result} redefined as {rt} (was {prev})"))
    return types, diags


def _successors(b: Block) -> tuple:
    if b.instructions and b.instructions[-1].is_terminator:
        return b.instructions[-1].targets
    return ()


def _check_types(bname, i, ins, types, p, out):
    def diag(rule, msg):
        out.append(Diagnostic(bname, i, rule, msg))

    def typeof(op):
        return types.get(op.id) if isinstance(op, Reg) else None

    def expect(op, want: ScalarType, what="operand"):
        if isinstance(op, Imm):
            if not _fits(op.value, want):
                diag("type-mismatch", f"immediate {op} does not fit {want}")
            return
        got = typeof(op)
        if got is not None and got != want:
            diag("type-mismatch", f"{what} {op} is {got}, expected {want}")

    def expect_int(op, what="operand"):
        if isinstance(op, Imm):
            if not isinstance(op.value, int):
                diag("type-mismatch", f"{what} {op} must be an integer")
            return
        got = typeof(op)
        if got is not None and got.is_float:
            diag("type-mismatch", f"{what} {op} must be an integer register")

    base, ty = ins.base, ins.type
    if base in INT_BINARY or base == "icmp":
        if ty.is_float:
            diag("type-mismatch", f"{base} needs an integer type")
        else:
            for op in ins.operands:
                expect(op, ty)
    elif base in FLOAT_BINARY:
        if not ty.is_float:
            diag("type-mismatch", f"{base} needs type f64")
        for op in ins.operands:
            expect(op, F64)
    elif base in CASTS:
        src = typeof(ins.operands[0])
        if ty.is_float or (src is not None and src.is_float):
            diag("type-mismatch", f"{base} works on integers only")
        elif src is not None:
            ok = src.width < ty.width if base != "trunc" else src.width > ty.width
            if not ok:
                diag("type-mismatch", f"{base} from {src} to {ty} is not a valid cast")
    elif base == "itof":
        if not ty.is_float:
            diag("type-mismatch", "itof result must be f64")
        expect_int(ins.operands[0])
    elif base == "ftoi":
        if ty.is_float:
            diag("type-mismatch", "ftoi result must be an integer type")
        expect(ins.operands[0], F64)
    elif base == "const":
        expect(ins.operands[0], ty)
    elif base == "input":
        idx = ins.operands[0].value
        if ty.is_float:
            diag("type-mismatch", "input reads an integer")
        if not isinstance(idx, int) or not 0 <= idx < p.input_length:
            diag("input-range", f"input index {ins.operands[0]} outside declared input length {p.input_length}")
    elif base in ("load", "store"):
        addr = ins.operands[0]
        expect_int(addr, "address")
        if isinstance(addr, Imm) and isinstance(addr.value, int):
            if not 0 <= addr.value <= p.memory_size - ty.nbytes:
                diag("memory-range", f"static address {addr.value} + {ty.nbytes} outside memory size {p.memory_size}")
        if base == "store":
            expect(ins.operands[1], ty, "value")
    elif base in ("memset", "memcpy"):
        for op in ins.operands:
            expect_int(op)
        length = ins.operands[2]
        if isinstance(length, Imm) and isinstance(length.value, int):
            addrs = ins.operands[:1] if base == "memset" else ins.operands[:2]
            for a in addrs:
                if isinstance(a, Imm) and isinstance(a.value, int):
                    if not (0 <= a.value and a.value + length.value <= p.memory_size):
                        diag("memory-range", f"static range [{a.value}, {a.value + length.value}) outside memory size {p.memory_size}")
    elif base == "br":
        expect_int(ins.operands[0], "condition")


def validate(p: ProgramIR) -> list[Diagnostic]:
    out: list[Diagnostic] = []
    names = [b.name for b in p.blocks]
    seen = set()
    for n in names:
        if n in seen:
            out.append(Diagnostic(n, None, "duplicate-block", "duplicate block name"))
        seen.add(n)
    if not p.has_block(p.entry):
        out.append(Diagnostic(p.entry, None, "entry", "entry block does not exist"))

    types, type_diags = register_types(p)
    out.extend(type_diags)

    for b in p.blocks:
        ins_list = b.instructions
        if not ins_list or not ins_list[-1].is_terminator:
            out.append(Diagnostic(b.name, None, "terminator", "missing terminator"))
        for i, ins in enumerate(ins_list):
            if ins.is_terminator and i != len(ins_list) - 1:
                out.append(Diagnostic(b.name, i, "terminator", "terminator before end of block"))
            for t in ins.targets:
                if not p.has_block(t):
                    out.append(Diagnostic(b.name, i, "target", f"branch target '{t}' does not exist"))
            _check_types(b.name, i, ins, types, p, out)

    out.extend(_check_definite_assignment(p))
    return out


def _check_definite_assignment(p: ProgramIR) -> list[Diagnostic]:
    """Every register read must be assigned on every path from entry (must-analysis)."""
    if not p.has_block(p.entry):
        return []
    defs = {b.name: {ins.result.id for ins in b.instructions if ins.result is not None}
            for b in p.blocks}
    preds: dict[str, list[str]] = {b.name: [] for b in p.blocks}
    reachable = {p.entry}
    work = [p.entry]
    while work:
        n = work.pop()
        for s in _successors(p.block(n)):
            if p.has_block(s):
                preds[s].append(n)
                if s not in reachable:
                    reachable.add(s)
                    work.append(s)

    universe = set().union(*defs.values())
    assigned_in = {n: (set() if n == p.entry else set(universe)) for n in reachable}
    changed = True
    while changed:
        changed = False
        for b in p.blocks:
            n = b.name
            if n not in reachable or n == p.entry:
                continue
            incoming = [assigned_in[q] | defs[q] for q in preds[n] if q in reachable]
            new = set.intersection(*incoming) if incoming else set()
            if new != assigned_in[n]:
                assigned_in[n] = new
                changed = True

    out = []
    for b in p.blocks:
        if b.name not in reachable:
            continue
        live = set(assigned_in[b.name])
        for i, ins in enumerate(b.instructions):
            for r in ins.uses():
                if r.id not in live:
                    out.append(Diagnostic(b.name, i, "unassigned",
                                          f"use of unassigned register {r}"))
            if ins.result is not None:
                live.add(ins.result.id)
    return out


class ValidationError(Exception):
    def __init__(self, diagnostics: list[Diagnostic]):
        super().__init__("; ".join(str(d) for d in diagnostics))
        self.diagnostics = diagnostics


def load_program(text: str) -> ProgramIR:
    """Parse and validate; raises ParseError or ValidationError."""
    p = parse_program(text)
    diags = validate(p)
    if diags:
        raise ValidationError(diags)
    return p
