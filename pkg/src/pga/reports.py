"""JSON and CSV forms of analysis artifacts.

All JSON documents share a top-level envelope::

    {"schema_version": 1, "kind": ..., "tool": {...}, "config": {...}, ...}

Output is deterministic: keys are sorted and floats use their shortest repr.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import __version__
from .engine import Jacobian
from .fuzz import CoverageTimeline
from .oracle import GroundTruthMatrix, Metrics
from .taint import TaintReport

SCHEMA_VERSION = 1


def envelope(kind: str, config: dict | None) -> dict:
    return {"schema_version": SCHEMA_VERSION, "kind": kind,
            "tool": {"name": "pga", "version": __version__},
            "config": config or {}}


def dumps(doc: dict) -> str:
    return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def _num(v) -> float:
    return float(v) + 0.0  # folds -0.0 into 0.0


def matrix_csv(sources, sinks, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["source"] + list(sinks))
    for s, row in zip(sources, rows):
        w.writerow([s] + list(row))
    return buf.getvalue()


# -- jacobian

def jacobian_json(j: Jacobian, stats: dict | None = None, config: dict | None = None,
                  kind: str = "jacobian") -> dict:
    doc = envelope(kind, config)
    doc["sources"] = list(j.sources)
    doc["sinks"] = list(j.sinks)
    doc["cells"] = [[_num(v) for v in row] for row in j.values]
    doc["provenance"] = [
        {"source": src, "sink": sink, "occurrence": pv.occurrence, "direction": pv.direction}
        for (src, sink), pv in sorted(j.provenance.items())
    ]
    if stats is not None:
        doc["stats"] = {str(s): asdict(st) for s, st in sorted(stats.items())}
    return doc


def jacobian_csv(j: Jacobian) -> str:
    return matrix_csv(j.sources, j.sinks, [[repr(_num(v)) for v in row] for row in j.values])


def jacobian_from_json(doc: dict) -> Jacobian:
    return Jacobian(doc["sources"], doc["sinks"], np.array(doc["cells"], dtype=float).reshape(
        len(doc["sources"]), len(doc["sinks"])))


# -- taint

def taint_json(r: TaintReport, config: dict | None = None) -> dict:
    doc = envelope("taint", config)
    doc["sources"] = list(r.sources)
    doc["sinks"] = list(r.sinks)
    doc["cells"] = [[bool(v) for v in row] for row in r.matrix]
    doc["stats"] = {str(s): asdict(st) for s, st in sorted(r.stats.items())}
    return doc


def bool_csv(sources, sinks, matrix) -> str:
    return matrix_csv(sources, sinks, [[int(bool(v)) for v in row] for row in matrix])


# -- ground truth

def ground_truth_json(gt: GroundTruthMatrix, config: dict | None = None) -> dict:
    doc = envelope("ground_truth", config)
    doc["sources"] = list(gt.sources)
    doc["sinks"] = list(gt.sinks)
    doc["cells"] = [[bool(v) for v in row] for row in gt.cells]
    doc["exhaustive"] = gt.exhaustive
    doc["samples"] = {str(s): {"counted": gt.counted[s], "diverged": gt.diverged[s],
                               "duplicates": gt.duplicates[s]} for s in gt.sources}
    doc["excluded_sources"] = gt.excluded_sources()
    return doc


# -- comparison

@dataclass
class ComparisonReport:
    metrics: dict            # analysis name -> Metrics
    disagreements: list      # dicts, one per cell where the predictions or truth differ
    environment: dict
    config: dict = field(default_factory=dict)
    failures: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        doc = envelope("comparison", self.config)
        doc["metrics"] = {k: asdict(m) for k, m in sorted(self.metrics.items())}
        doc["disagreements"] = self.disagreements
        doc["environment"] = self.environment
        doc["failures"] = self.failures
        return doc

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        cols = ["precision", "recall", "f1", "tp", "fp", "fn", "tn", "excluded"]
        w.writerow(["analysis"] + cols)
        for name, m in sorted(self.metrics.items()):
            d = asdict(m)
            w.writerow([name] + [repr(d[c]) if isinstance(d[c], float) else d[c] for c in cols])
        return buf.getvalue()


def metrics_table(metrics: dict[str, Metrics]) -> str:
    lines = [f"{'analysis':10s} {'precision':>9s} {'recall':>7s} {'f1':>6s}   tp  fp  fn  tn"]
    for name, m in sorted(metrics.items()):
        lines.append(f"{name:10s} {m.precision:9.3f} {m.recall:7.3f} {m.f1:6.3f} "
                     f"{m.tp:4d}{m.fp:4d}{m.fn:4d}{m.tn:4d}")
    return "\n".join(lines)


# -- fuzzing

def timeline_json(t: CoverageTimeline, config: dict | None = None) -> dict:
    doc = envelope("timeline", config)
    doc.update(timeline_body(t))
    return doc


def timeline_body(t: CoverageTimeline) -> dict:
    return {
        "guidance": t.guidance,
        "rng_seed": t.rng_seed,
        "selected_bytes": list(t.selected),
        "checkpoints": [list(c) for c in t.checkpoints],
        "final_edges": len(t.edges),
        "edges": [{"from": a, "to": b, "first_mutation": t.first_seen[(a, b)]}
                  for a, b in sorted(t.edges)],
        "traps": [{"mutation": m, "byte": b, "value": v, "kind": k} for m, b, v, k in t.traps],
    }


def timeline_csv(timelines: list[CoverageTimeline]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    if len(timelines) == 1:
        w.writerow(["mutations", "edges"])
        w.writerows(timelines[0].checkpoints)
    else:
        w.writerow(["guidance", "mutations", "edges"])
        for t in timelines:
            for m, e in t.checkpoints:
                w.writerow([t.guidance, m, e])
    return buf.getvalue()
