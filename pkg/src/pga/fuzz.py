"""Deterministic dataflow-guided fuzzing.

One analysis pass on the seed picks which input bytes to mutate; each picked
byte is then swept through all 256 values while edge coverage accumulates.
"""

from __future__ import annotations

import random
from dataclasses import dataclass, field

import numpy as np

from . import prox
from .engine import run_pga
from .ir import ProgramIR
from .taint import run_dta
from .vm import DEFAULT_STEP_BUDGET, execute

DEFAULT_BYTE_BUDGET = 128
DEFAULT_CHECKPOINT = 10_000


class FuzzError(Exception):
    pass


@dataclass
class CoverageTimeline:
    guidance: str
    rng_seed: int | None
    selected: list
    checkpoints: list = field(default_factory=list)  # (mutations, distinct edges)
    edges: frozenset = frozenset()
    first_seen: dict = field(default_factory=dict)   # edge -> mutation index (0 = seed)
    traps: list = field(default_factory=list)        # (mutation, byte, value, kind)

    @property
    def mutations(self) -> int:
        return self.checkpoints[-1][0] if self.checkpoints else 0


def rank_by_gradient(jacobian_values: np.ndarray, sources: list) -> list:
    """Bytes ordered by their largest |derivative| at any sink, ties to lower index."""
    strength = np.abs(jacobian_values).max(axis=1) if jacobian_values.size else np.zeros(len(sources))
    return [s for _, s in sorted(zip(-strength, sources))]


def select_bytes(p: ProgramIR, seed: bytes, guidance: str, byte_budget: int, rng_seed: int,
                 step_budget: int = DEFAULT_STEP_BUDGET, samples: int = prox.DEFAULT_SAMPLES) -> list:
    sources = list(range(p.input_length))
    count = min(byte_budget, len(sources))
    if guidance == "pga":
        run = run_pga(p, seed, sources, step_budget, samples)
        failed = [s for s, st in run.stats.items() if st.failed]
        if failed:
            raise FuzzError(f"gradient analysis failed for source {failed[0]} "
                            f"(label exhaustion at {run.stats[failed[0]].exhausted_at})")
        return rank_by_gradient(run.jacobian.values, sources)[:count]
    if guidance == "dta":
        report = run_dta(p, seed, sources, step_budget).report
        tainting = [s for i, s in enumerate(sources) if report.matrix[i].any()]
        rest = [s for s in sources if s not in tainting]
        rng = random.Random(rng_seed)
        rng.shuffle(tainting)
        rng.shuffle(rest)
        return (tainting + rest)[:count]
    raise ValueError(f"unknown guidance {guidance!r}")


def guided_fuzz(p: ProgramIR, seed: bytes, guidance: str = "pga",
                byte_budget: int = DEFAULT_BYTE_BUDGET, mutation_budget: int | None = None,
                checkpoint_interval: int = DEFAULT_CHECKPOINT, rng_seed: int = 0,
                step_budget: int = DEFAULT_STEP_BUDGET,
                samples: int = prox.DEFAULT_SAMPLES) -> CoverageTimeline:
    if checkpoint_interval <= 0:
        raise ValueError("checkpoint interval must be positive")
    base = execute(p, seed, step_budget)
    if base.termination == "trap":
        raise FuzzError(f"seed input traps ({base.trap_kind})")
    selected = select_bytes(p, seed, guidance, byte_budget, rng_seed, step_budget, samples)
    total = len(selected) * 256
    if mutation_budget is not None:
        total = min(total, mutation_budget)

    tl = CoverageTimeline(guidance, rng_seed if guidance == "dta" else None, selected)
    edges = set(base.coverage)
    tl.first_seen = {e: 0 for e in sorted(edges)}
    tl.checkpoints.append((0, len(edges)))
    n = 0
    for b in selected:
        for v in range(256):
            if n >= total:
                break
            n += 1
            mutant = bytearray(seed)
            mutant[b] = v
            res = execute(p, bytes(mutant), step_budget)
            if res.termination == "trap":
                tl.traps.append((n, b, v, res.trap_kind))
            for e in sorted(res.coverage - edges):
                tl.first_seen[e] = n
            edges |= res.coverage
            if n % checkpoint_interval == 0:
                tl.checkpoints.append((n, len(edges)))
    if tl.checkpoints[-1][0] != n:
        tl.checkpoints.append((n, len(edges)))
    counts = [c for _, c in tl.checkpoints]
    assert counts == sorted(counts), "coverage must be monotone"
    tl.edges = frozenset(edges)
    return tl
