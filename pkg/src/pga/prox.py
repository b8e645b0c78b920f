"""Per-operation derivatives: analytic rules for smooth ops and proximal
sampling for non-smooth ones.

A non-smooth op is sampled at ``x_k + round(dx_k * i)`` for ``i = 1..N``. The
sample that minimises ``-|y - y_i| + 0.5 * distance_i**2`` (largest output
change, penalised by how far the sample moved) gives the derivative
``(y_i - y) / i``.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass

from .ir import CASTS, FLOAT_BINARY, INT_BINARY, ScalarType
from .vm import Trap, apply_op, to_signed, wrap

log = logging.getLogger(__name__)

DEFAULT_SAMPLES = 5

ANALYTIC_FLOAT = ("fadd", "fsub", "fmul", "fdiv", "itof")
ANALYTIC_INT = ("add", "sub", "mul")


@dataclass(frozen=True)
class OpSig:
    """An opcode together with its result type and, for casts, operand type."""

    opcode: str
    type: ScalarType
    src: ScalarType | None = None

    @property
    def base(self) -> str:
        return self.opcode.split(".", 1)[0]

    @property
    def operand_type(self) -> ScalarType:
        return self.src if self.src is not None else self.type

    @property
    def result_type(self) -> ScalarType:
        return ScalarType("int", 8) if self.base == "icmp" else self.type

    @property
    def arity(self) -> int:
        return 2 if self.base in INT_BINARY + FLOAT_BINARY + ("icmp",) else 1

    @classmethod
    def parse(cls, text: str, src: str | None = None) -> "OpSig":
        """``"srem.i32"``, ``"icmp.slt.i8"``, or ``"zext.i32"`` with ``src="i8"``."""
        opcode, _, ty = text.rpartition(".")
        sig = cls(opcode, ScalarType.parse(ty), ScalarType.parse(src) if src else None)
        if sig.base in CASTS + ("itof", "ftoi") and sig.src is None:
            raise ValueError(f"{opcode} needs a source type")
        return sig


def as_sig(op) -> OpSig:
    return op if isinstance(op, OpSig) else OpSig.parse(op)


def uses_analytic(sig: OpSig) -> bool:
    return sig.base in ANALYTIC_FLOAT or sig.base in ANALYTIC_INT


def round_half_away(x: float) -> int:
    return int(math.copysign(math.floor(abs(x) + 0.5), x))


def _value(v, ty: ScalarType) -> float:
    """Numeric value used for differences: signed for integers."""
    return float(v) if ty.is_float else to_signed(v, ty.width)


def _normalise(inputs, ty: ScalarType) -> tuple:
    if ty.is_float:
        return tuple(float(v) for v in inputs)
    return tuple(wrap(int(v), ty.width) for v in inputs)


def _sample(sig: OpSig, x: tuple, dx, i: int):
    """Shifted inputs, squared distance and output for step ``i``; None if skipped."""
    ty = sig.operand_type
    if ty.is_float:
        offsets = [d * i for d in dx]
        shifted = tuple(a + o for a, o in zip(x, offsets))
        if not all(math.isfinite(v) for v in shifted):
            return None
    else:
        offsets = [round_half_away(d * i) for d in dx]
        shifted = tuple(wrap(a + o, ty.width) for a, o in zip(x, offsets))
    if not any(offsets):
        return None
    try:
        y_i = apply_op(sig.opcode, sig.type, shifted, sig.src)
    except Trap:
        return None
    if sig.result_type.is_float and not math.isfinite(y_i):
        return None
    dist2 = float(sum(o * o for o in offsets))
    return shifted, dist2, y_i


def _base_output(sig: OpSig, x: tuple):
    try:
        y = apply_op(sig.opcode, sig.type, x, sig.src)
    except Trap:
        return None
    if sig.result_type.is_float and not math.isfinite(y):
        return None
    return y


def _prepare(op, inputs, derivs):
    sig = as_sig(op)
    if len(inputs) != sig.arity or len(derivs) != sig.arity:
        raise ValueError(f"{sig.opcode} takes {sig.arity} input(s)")
    return sig, _normalise(inputs, sig.operand_type), tuple(float(d) for d in derivs)


def prox_derivative(op, inputs, derivs, n: int = DEFAULT_SAMPLES) -> float:
    """Proximal directional derivative of one op, chained through ``derivs``."""
    sig, x, dx = _prepare(op, inputs, derivs)
    if not any(dx):
        return 0.0
    y = _base_output(sig, x)
    if y is None:
        return 0.0
    rty = sig.result_type
    yv = _value(y, rty)
    best_cost, best_i, best_y = math.inf, 0, yv
    for i in range(1, n + 1):
        s = _sample(sig, x, dx, i)
        if s is None:
            continue
        _, dist2, y_i = s
        yiv = _value(y_i, rty)
        cost = -abs(yv - yiv) + 0.5 * dist2
        if cost < best_cost:
            best_cost, best_i, best_y = cost, i, yiv
    if best_i == 0:
        return 0.0
    return (best_y - yv) / best_i


def prox_derivative_fast(op, inputs, derivs, n: int = DEFAULT_SAMPLES) -> float:
    """First nonzero sampled difference quotient, or 0 if none within ``n`` steps."""
    sig, x, dx = _prepare(op, inputs, derivs)
    if not any(dx):
        return 0.0
    y = _base_output(sig, x)
    if y is None:
        return 0.0
    rty = sig.result_type
    yv = _value(y, rty)
    for i in range(1, n + 1):
        s = _sample(sig, x, dx, i)
        if s is None:
            continue
        yiv = _value(s[2], rty)
        if yiv != yv:
            return (yiv - yv) / i
    return 0.0


def analytic_derivative(op, inputs, derivs, events: list | None = None) -> float:
    """Chain-rule derivative for smooth ops; integer add/sub/mul use signed values.

    ``fdiv`` by zero yields 0 and appends a degenerate event to ``events``.
    """
    sig = as_sig(op)
    base = sig.base
    ty = sig.operand_type
    vals = [_value(v, ty) for v in (_normalise(inputs, ty))]
    d = [float(v) for v in derivs]
    if base in ("add", "fadd"):
        return d[0] + d[1]
    if base in ("sub", "fsub"):
        return d[0] - d[1]
    if base in ("mul", "fmul"):
        a, b = vals
        return a * d[1] + b * d[0]
    if base == "fdiv":
        a, b = vals
        if b == 0.0:
            if events is not None:
                events.append(("fdiv-by-zero", a, b))
            log.debug("degenerate fdiv derivative at divisor 0")
            return 0.0
        return (d[0] * b - a * d[1]) / (b * b)
    if base == "itof":
        return d[0]
    raise ValueError(f"no analytic derivative for {sig.opcode}")


@dataclass(frozen=True)
class OpSample:
    index: int
    shifted: tuple
    output: float
    cost: float


def brute_force_prox(op, inputs, derivs, n: int = DEFAULT_SAMPLES) -> float:
    """Straight-line reference: materialise every sample, then take the argmin."""
    sig = as_sig(op)
    ty, rty = sig.operand_type, sig.result_type
    x = [float(v) if ty.is_float else int(v) % (1 << ty.width) for v in inputs]
    dx = [float(d) for d in derivs]
    if all(d == 0 for d in dx):
        return 0.0
    try:
        y = apply_op(sig.opcode, sig.type, tuple(x), sig.src)
    except Trap:
        return 0.0
    if rty.is_float and not math.isfinite(y):
        return 0.0
    y = float(y) if rty.is_float else to_signed(y, rty.width)

    samples: list[OpSample] = []
    for i in range(1, n + 1):
        if ty.is_float:
            steps = [d * i for d in dx]
            xi = [a + s for a, s in zip(x, steps)]
            if any(math.isinf(v) or math.isnan(v) for v in xi):
                continue
        else:
            steps = [int(math.floor(abs(d * i) + 0.5)) * (1 if d * i >= 0 else -1) for d in dx]
            xi = [(a + s) % (1 << ty.width) for a, s in zip(x, steps)]
        if all(s == 0 for s in steps):
            continue
        try:
            yi = apply_op(sig.opcode, sig.type, tuple(xi), sig.src)
        except Trap:
            continue
        if rty.is_float:
            if math.isinf(yi) or math.isnan(yi):
                continue
            yi = float(yi)
        else:
            yi = to_signed(yi, rty.width)
        distance2 = float(sum(s * s for s in steps))
        samples.append(OpSample(i, tuple(xi), yi, -abs(y - yi) + 0.5 * distance2))

    if not samples:
        return 0.0
    best = min(samples, key=lambda s: (s.cost, s.index))
    return (best.output - y) / best.index
