"""Baselines that share the shadow-memory machinery with the gradient engine:
classic boolean taint tracking, and the binary-gradient ablation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Sequence

import numpy as np

from . import prox
from .engine import PGARun, check_sources, run_pga
from .ir import ProgramIR, Reg
from .shadow import ShadowMemory
from .vm import DEFAULT_STEP_BUDGET, ExecResult, Tracker, execute

TAINTED = 1


@dataclass
class TaintStats:
    labels: int = 0
    exhausted_at: str | None = None


@dataclass
class TaintReport:
    sources: list
    sinks: list
    matrix: np.ndarray = None
    stats: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.matrix is None:
            self.matrix = np.zeros((len(self.sources), len(self.sinks)), dtype=bool)

    def get(self, source: int, sink: str) -> bool:
        return bool(self.matrix[self.sources.index(source), self.sinks.index(sink)])


class TaintTracker(Tracker):
    """One source, one taint label; any tainted operand taints the result."""

    def __init__(self, program: ProgramIR, source: int):
        self.source = source
        self.shadow = ShadowMemory(program.memory_size)
        self.stats = TaintStats()
        self.hits: set[str] = set()

    def tainted(self, op) -> bool:
        return isinstance(op, Reg) and self.shadow.reg(op.id) != 0

    def _set(self, ins, flag: bool) -> None:
        self.shadow.set_reg(ins.result.id, TAINTED if flag else 0)

    def on_input(self, site, ins, byte_index):
        hit = byte_index == self.source
        if hit:
            self.stats.labels = 1
        self._set(ins, hit)

    def on_const(self, site, ins):
        self._set(ins, False)

    def on_op(self, site, ins, args, src):
        self._set(ins, any(self.tainted(o) for o in ins.operands))

    def on_load(self, site, ins, addr):
        n = ins.type.nbytes
        loaded = any(self.shadow.labels[addr:addr + n])
        self._set(ins, loaded or self.tainted(ins.operands[0]))

    def on_store(self, site, ins, addr):
        label = TAINTED if self.tainted(ins.operands[1]) else 0
        self.shadow.store_shadow(addr, ins.type.nbytes, label)

    def on_memset(self, site, addr, length):
        self.shadow.clear(addr, length)

    def on_memcpy(self, site, dst, src, length):
        self.shadow.copy_range(dst, src, length)

    def on_sink(self, site, ins):
        if self.tainted(ins.operands[0]):
            self.hits.add(site)

    def on_branch(self, site, ins):
        # no clearing rule: taint survives the branch
        if self.tainted(ins.operands[0]):
            self.hits.add(site)


class DTARun(NamedTuple):
    report: TaintReport
    execution: ExecResult


def run_dta(p: ProgramIR, data: bytes, sources: Sequence[int] | None = None,
            step_budget: int = DEFAULT_STEP_BUDGET) -> DTARun:
    sources = check_sources(p, sources)
    report = TaintReport(sources, p.sink_sites())
    col = {s: j for j, s in enumerate(report.sinks)}
    baseline = None
    for i, src in enumerate(sources):
        tracker = TaintTracker(p, src)
        res = execute(p, data, step_budget, tracker)
        if baseline is None:
            baseline = res
        elif res.observable() != baseline.observable():
            raise AssertionError("instrumented runs diverged")
        for site in tracker.hits:
            report.matrix[i, col[site]] = True
        report.stats[src] = tracker.stats
    if baseline is None:
        baseline = execute(p, data, step_budget)
    return DTARun(report, baseline)


def run_binary_pga(p: ProgramIR, data: bytes, sources: Sequence[int] | None = None,
                   step_budget: int = DEFAULT_STEP_BUDGET,
                   samples: int = prox.DEFAULT_SAMPLES, fast: bool = True) -> PGARun:
    """Gradient tracking with every propagated component rounded to -1, 0 or +1."""
    return run_pga(p, data, sources, step_budget, samples, fast=fast, binary=True)
