"""Gradient-tracking execution and source/sink Jacobian assembly.

The program is executed once per source byte. At that byte's ``input``
instruction the result register gets the pair (+1, -1); every later
instruction propagates the pair (analytically for smooth ops, by proximal
sampling otherwise) and sinks record what reaches them.
"""

from __future__ import annotations

import functools
import logging
import math
from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import prox
from .ir import Instruction, ProgramIR, Reg
from .shadow import SEED, ZERO, DerivativePair, GradientTable, LabelExhausted, ShadowMemory
from .vm import DEFAULT_STEP_BUDGET, ExecResult, Tracker, execute

log = logging.getLogger(__name__)

LOAD_ADDRESS_PAIR = DerivativePair(1.0, 1.0)


@dataclass(frozen=True)
class SinkRecord:
    sink: str
    source: int
    pair: DerivativePair
    occurrence: int = 1


@dataclass(frozen=True)
class Provenance:
    occurrence: int
    direction: str  # "pos" or "neg"


@dataclass
class Jacobian:
    sources: list
    sinks: list
    values: np.ndarray = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.values is None:
            self.values = np.zeros((len(self.sources), len(self.sinks)))
        self._row = {s: i for i, s in enumerate(self.sources)}
        self._col = {s: j for j, s in enumerate(self.sinks)}

    def get(self, source: int, sink: str) -> float:
        return float(self.values[self._row[source], self._col[sink]])

    def index(self, source: int, sink: str) -> tuple[int, int]:
        return self._row[source], self._col[sink]

    def nonzero(self) -> np.ndarray:
        return self.values != 0.0


def jacobian_update(j: Jacobian, rec: SinkRecord) -> Jacobian:
    """Keep the derivative of largest magnitude per cell; ties keep the incumbent."""
    r, c = j.index(rec.source, rec.sink)
    for direction, value in (("pos", rec.pair.pos), ("neg", rec.pair.neg)):
        if abs(value) > abs(j.values[r, c]):
            j.values[r, c] = value
            j.provenance[(rec.source, rec.sink)] = Provenance(rec.occurrence, direction)
    return j


@dataclass
class SourceStats:
    labels: int = 0
    exhausted_at: str | None = None
    degenerate: int = 0
    prox_calls: int = 0
    fast_divergences: int = 0

    @property
    def failed(self) -> bool:
        return self.exhausted_at is not None


def _sign(x: float) -> float:
    return float((x > 0) - (x < 0))


def _guarded(hook):
    @functools.wraps(hook)
    def wrapper(self, site, *args):
        if not self.active:
            return
        try:
            hook(self, site, *args)
        except LabelExhausted as e:
            # the concrete run continues; only this source's analysis stops
            self.active = False
            self.stats.exhausted_at = site
            log.warning("source %s: %s", self.source, e)
    return wrapper


class GradientTracker(Tracker):
    """Propagates one source's derivative pair through a single execution."""

    def __init__(self, program: ProgramIR, source: int, samples: int = prox.DEFAULT_SAMPLES,
                 fast: bool = True, binary: bool = False, max_label: int | None = None):
        self.source = source
        self.samples = samples
        self.fast = fast
        self.binary = binary
        self.table = GradientTable() if max_label is None else GradientTable(max_label)
        self.shadow = ShadowMemory(program.memory_size)
        self.stats = SourceStats()
        self.records: list[SinkRecord] = []
        self.occurrences: dict[str, int] = {}
        self.active = True
        self._events: list = []

    # -- helpers
    def label_of(self, op) -> int:
        return self.shadow.reg(op.id) if isinstance(op, Reg) else 0

    def pair_of(self, op) -> DerivativePair:
        return self.table.lookup(self.label_of(op))

    def _set(self, ins: Instruction, d: DerivativePair, inputs, site) -> None:
        label = self.table.intern(d, inputs, site)
        self.shadow.set_reg(ins.result.id, label)
        self.stats.labels = len(self.table)

    def _component(self, sig: prox.OpSig, args, derivs) -> float:
        if not any(derivs):
            return 0.0
        if prox.uses_analytic(sig):
            return prox.analytic_derivative(sig, args, derivs, self._events)
        self.stats.prox_calls += 1
        if self.fast:
            return prox.prox_derivative_fast(sig, args, derivs, self.samples)
        full = prox.prox_derivative(sig, args, derivs, self.samples)
        quick = prox.prox_derivative_fast(sig, args, derivs, self.samples)
        if quick != full:
            self.stats.fast_divergences += 1
            log.info("fast/full prox divergence on %s at %s: fast=%r full=%r",
                     sig.opcode, args, quick, full)
        return full

    def _finite(self, x: float) -> float:
        if math.isfinite(x):
            return x
        self.stats.degenerate += 1
        return 0.0

    def _record(self, site: str, pair: DerivativePair) -> None:
        n = self.occurrences.get(site, 0) + 1
        self.occurrences[site] = n
        if not pair.is_zero:
            self.records.append(SinkRecord(site, self.source, pair, n))

    # -- hooks
    @_guarded
    def on_input(self, site, ins, byte_index):
        self._set(ins, SEED if byte_index == self.source else ZERO, (), site)

    @_guarded
    def on_const(self, site, ins):
        self.shadow.set_reg(ins.result.id, 0)

    @_guarded
    def on_op(self, site, ins, args, src):
        labels = [self.label_of(o) for o in ins.operands]
        pairs = [self.table.lookup(lb) for lb in labels]
        if all(p.is_zero for p in pairs):
            self.shadow.set_reg(ins.result.id, 0)
            return
        sig = prox.OpSig(ins.opcode, ins.type, src)
        n_events = len(self._events)
        pos = self._finite(self._component(sig, args, [p.pos for p in pairs]))
        neg = self._finite(self._component(sig, args, [p.neg for p in pairs]))
        self.stats.degenerate += len(self._events) - n_events
        if self.binary:
            pos, neg = _sign(pos), _sign(neg)
        self._set(ins, DerivativePair(pos, neg), labels, site)

    @_guarded
    def on_load(self, site, ins, addr):
        label = self.shadow.load_shadow(self.table, addr, ins.type.nbytes)
        if label == 0 and not self.pair_of(ins.operands[0]).is_zero:
            self._set(ins, LOAD_ADDRESS_PAIR, (), site)
        else:
            self.shadow.set_reg(ins.result.id, label)

    @_guarded
    def on_store(self, site, ins, addr):
        self.shadow.store_shadow(addr, ins.type.nbytes, self.label_of(ins.operands[1]))

    @_guarded
    def on_memset(self, site, addr, length):
        self.shadow.clear(addr, length)

    @_guarded
    def on_memcpy(self, site, dst, src, length):
        self.shadow.copy_range(dst, src, length)

    @_guarded
    def on_sink(self, site, ins):
        self._record(site, self.pair_of(ins.operands[0]))

    @_guarded
    def on_branch(self, site, ins):
        cond = ins.operands[0]
        self._record(site, self.pair_of(cond))
        # the condition's derivative comes from samples that flip the branch
        self.shadow.set_reg(cond.id, 0)
        assert self.shadow.reg(cond.id) == 0, "branch condition label not cleared"


class PGARun(NamedTuple):
    jacobian: Jacobian
    execution: ExecResult
    stats: dict  # source -> SourceStats
    records: list


def check_sources(p: ProgramIR, sources: Sequence[int] | None) -> list[int]:
    if sources is None:
        return list(range(p.input_length))
    out = [int(s) for s in sources]
    if len(set(out)) != len(out):
        raise ValueError("duplicate source ids")
    for s in out:
        if not 0 <= s < p.input_length:
            raise ValueError(f"source {s} outside declared input length {p.input_length}")
    return out


def _assemble(p, data, sources, step_budget, make_tracker):
    jac = Jacobian(sources, p.sink_sites())
    stats, records = {}, []
    baseline = None
    for src in sources:
        tracker = make_tracker(src)
        res = execute(p, data, step_budget, tracker)
        if baseline is None:
            baseline = res
        elif res.observable() != baseline.observable():
            raise AssertionError("instrumented runs diverged")
        for rec in tracker.records:
            jacobian_update(jac, rec)
        stats[src] = tracker.stats
        records.extend(tracker.records)
    if baseline is None:
        baseline = execute(p, data, step_budget)
    return jac, baseline, stats, records


def run_pga(p: ProgramIR, data: bytes, sources: Sequence[int] | None = None,
            step_budget: int = DEFAULT_STEP_BUDGET, samples: int = prox.DEFAULT_SAMPLES,
            fast: bool = True, binary: bool = False, max_label: int | None = None) -> PGARun:
    """Run one gradient-tracking execution per source and assemble the Jacobian.

    ``fast`` selects first-nonzero sampling; otherwise the full proximal argmin
    is used and disagreements with the fast rule are counted in the stats.
    """
    sources = check_sources(p, sources)
    jac, res, stats, records = _assemble(
        p, data, sources, step_budget,
        lambda s: GradientTracker(p, s, samples, fast, binary, max_label))
    return PGARun(jac, res, stats, records)

