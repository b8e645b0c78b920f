"""Ground-truth dataflow estimation by input perturbation, and F1 scoring.

A source byte flows to a sink if changing that byte, while keeping the exact
same block trace, changes the sequence of values observed at the sink.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .engine import check_sources
from .ir import ProgramIR
from .vm import DEFAULT_STEP_BUDGET, ExecResult, execute


class OracleRefusal(Exception):
    """The baseline execution does not terminate normally."""


def perturbations(value: int) -> list[int]:
    """0, 255, then ``value`` with each bit toggled (duplicates kept)."""
    return [0, 255] + [value ^ (1 << k) for k in range(8)]


@dataclass
class GroundTruthMatrix:
    sources: list
    sinks: list
    cells: np.ndarray
    counted: dict = field(default_factory=dict)     # source -> same-path samples
    diverged: dict = field(default_factory=dict)    # source -> samples dropped for path change
    duplicates: dict = field(default_factory=dict)  # source -> samples equal to the original byte
    exhaustive: bool = False

    def excluded_sources(self) -> list[int]:
        return [s for s in self.sources if self.counted.get(s, 0) == 0]

    def excluded_mask(self) -> np.ndarray:
        mask = np.zeros(self.cells.shape, dtype=bool)
        for i, s in enumerate(self.sources):
            if self.counted.get(s, 0) == 0:
                mask[i, :] = True
        return mask


def _key(v):
    # floats compare by bit pattern so NaN sequences match themselves
    return struct.pack("<d", v) if isinstance(v, float) else v


def _sink_sequences(res: ExecResult) -> dict[str, list]:
    seqs: dict[str, list] = {}
    for site, v in res.sink_values:
        seqs.setdefault(site, []).append(_key(v))
    return seqs


def ground_truth(p: ProgramIR, data: bytes, step_budget: int = DEFAULT_STEP_BUDGET,
                 sources: Sequence[int] | None = None, exhaustive: bool = False) -> GroundTruthMatrix:
    """Perturb each source byte (10 protocol values, or all 256 when
    ``exhaustive``) and mark sinks whose value sequence changes on the same path."""
    sources = check_sources(p, sources)
    base = execute(p, data, step_budget)
    if not base.ok:
        raise OracleRefusal(f"baseline execution ended in {base.termination}"
                            + (f" ({base.trap_kind})" if base.trap_kind else ""))
    sinks = p.sink_sites()
    col = {s: j for j, s in enumerate(sinks)}
    base_seqs = _sink_sequences(base)
    gt = GroundTruthMatrix(sources, sinks, np.zeros((len(sources), len(sinks)), dtype=bool),
                           exhaustive=exhaustive)
    for i, b in enumerate(sources):
        v = data[b]
        values = range(256) if exhaustive else perturbations(v)
        counted = diverged = dups = 0
        for nv in values:
            mutated = bytearray(data)
            mutated[b] = nv
            res = execute(p, bytes(mutated), step_budget)
            if nv == v:
                # run for protocol fidelity; carries no information
                assert res.observable() == base.observable()
                dups += 1
                continue
            if res.termination != "ret" or res.trace != base.trace:
                diverged += 1
                continue
            assert res.trace == base.trace
            counted += 1
            seqs = _sink_sequences(res)
            for site in set(seqs) | set(base_seqs):
                if seqs.get(site) != base_seqs.get(site):
                    gt.cells[i, col[site]] = True
        gt.counted[b], gt.diverged[b], gt.duplicates[b] = counted, diverged, dups
    return gt


@dataclass(frozen=True)
class Metrics:
    precision: float
    recall: float
    f1: float
    tp: int
    fp: int
    fn: int
    tn: int
    excluded: int = 0


def f1_score(precision: float, recall: float) -> float:
    if precision + recall == 0:
        return 0.0
    return 2 * precision * recall / (precision + recall)


def metrics_from_counts(tp: int, fp: int, fn: int, tn: int, excluded: int = 0) -> Metrics:
    # with no positives anywhere, an empty prediction is perfect
    precision = tp / (tp + fp) if tp + fp else 1.0
    recall = tp / (tp + fn) if tp + fn else 1.0
    return Metrics(precision, recall, f1_score(precision, recall), tp, fp, fn, tn, excluded)


def score(predicted: np.ndarray, truth: GroundTruthMatrix) -> Metrics:
    predicted = np.asarray(predicted, dtype=bool)
    if predicted.shape != truth.cells.shape:
        raise ValueError(f"shape mismatch: predicted {predicted.shape}, truth {truth.cells.shape}")
    keep = ~truth.excluded_mask()
    pred, real = predicted[keep], truth.cells[keep]
    tp = int(np.sum(pred & real))
    fp = int(np.sum(pred & ~real))
    fn = int(np.sum(~pred & real))
    tn = int(np.sum(~pred & ~real))
    return metrics_from_counts(tp, fp, fn, tn, int(np.sum(~keep)))
