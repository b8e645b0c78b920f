"""Command-line entry point.

Examples::

    pga analyze --program corpus:fig6a --mode pga --format csv
    pga compare --program prog.ir --input seed.bin --exhaustive --out report.json
    pga fuzz --program corpus:magic_byte --both --checkpoint 256
    pga report report.json
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__, corpus, prox, reports
from .engine import run_pga
from .fuzz import DEFAULT_BYTE_BUDGET, DEFAULT_CHECKPOINT, FuzzError, guided_fuzz
from .ir import ParseError, ProgramIR, ValidationError, load_program
from .oracle import OracleRefusal, ground_truth, score
from .taint import run_binary_pga, run_dta
from .vm import DEFAULT_STEP_BUDGET

log = logging.getLogger("pga")

EXIT_OK = 0
EXIT_IO = 1
EXIT_PARSE = 3
EXIT_VALIDATION = 4
EXIT_TRAP = 5
EXIT_EXHAUSTION = 6
EXIT_ORACLE = 7
EXIT_FUZZ = 8


@dataclass
class RunConfig:
    command: str
    program: str
    input: str | None = None
    mode: str = "pga"
    samples: int = prox.DEFAULT_SAMPLES
    fast: bool = True
    sources: str | None = None
    step_budget: int = DEFAULT_STEP_BUDGET
    exhaustive: bool = False
    byte_budget: int = DEFAULT_BYTE_BUDGET
    mutations: int | None = None
    checkpoint: int = DEFAULT_CHECKPOINT
    seed: int = 0
    both: bool = False
    out: str | None = None
    format: str = "json"

    def __post_init__(self):
        for name in ("samples", "step_budget", "byte_budget", "checkpoint"):
            if getattr(self, name) <= 0:
                raise ValueError(f"--{name.replace('_', '-')} must be positive")
        if self.mutations is not None and self.mutations <= 0:
            raise ValueError("--mutations must be positive")


class CLIError(Exception):
    def __init__(self, message: str, code: int):
        super().__init__(message)
        self.code = code


def parse_sources(text: str | None) -> list[int] | None:
    """``"0..3"`` (inclusive) or ``"0,2,5"``; None means every input byte."""
    if text is None:
        return None
    out: list[int] = []
    for part in text.split(","):
        part = part.strip()
        if ".." in part:
            lo, hi = part.split("..", 1)
            out.extend(range(int(lo), int(hi) + 1))
        elif part:
            out.append(int(part))
    return out


def load_inputs(cfg: RunConfig) -> tuple[ProgramIR, bytes]:
    if cfg.program.startswith("corpus:"):
        name = cfg.program.split(":", 1)[1]
        if name not in corpus.NAMES:
            raise CLIError(f"unknown corpus program {name!r}", EXIT_IO)
        text = corpus.source(name)
        data = corpus.seed(name) if cfg.input is None else None
    else:
        try:
            text = Path(cfg.program).read_text()
        except OSError as e:
            raise CLIError(f"cannot read program: {e}", EXIT_IO) from None
        data = None
        if cfg.input is None:
            raise CLIError("--input is required", EXIT_IO)
    if data is None:
        try:
            data = Path(cfg.input).read_bytes()
        except OSError as e:
            raise CLIError(f"cannot read input: {e}", EXIT_IO) from None
    try:
        p = load_program(text)
    except ParseError as e:
        raise CLIError(f"parse error: {e}", EXIT_PARSE) from None
    except ValidationError as e:
        raise CLIError("validation failed:\n  " + "\n  ".join(map(str, e.diagnostics)),
                       EXIT_VALIDATION) from None
    if len(data) < p.input_length:
        raise CLIError(f"input has {len(data)} bytes; program declares {p.input_length}", EXIT_IO)
    return p, data


def emit(cfg: RunConfig, text: str) -> None:
    if cfg.out:
        Path(cfg.out).write_text(text)
    else:
        sys.stdout.write(text)


def _sources(cfg):
    try:
        return parse_sources(cfg.sources)
    except ValueError as e:
        raise CLIError(f"bad --sources: {e}", EXIT_IO) from None


# -- commands

def cmd_analyze(cfg: RunConfig) -> int:
    p, data = load_inputs(cfg)
    sources = _sources(cfg)
    config = asdict(cfg)
    try:
        if cfg.mode == "dta":
            report, res = run_dta(p, data, sources, cfg.step_budget)
            failed = [s for s, st in report.stats.items() if st.exhausted_at]
            if cfg.format == "csv":
                text = reports.bool_csv(report.sources, report.sinks, report.matrix)
            else:
                doc = reports.taint_json(report, config)
                doc["termination"] = res.termination
                text = reports.dumps(doc)
        else:
            runner = run_binary_pga if cfg.mode == "binary" else run_pga
            jac, res, stats, _ = runner(p, data, sources, cfg.step_budget, cfg.samples, fast=cfg.fast)
            failed = [s for s, st in stats.items() if st.failed]
            if cfg.format == "csv":
                text = reports.jacobian_csv(jac)
            else:
                doc = reports.jacobian_json(jac, stats, config)
                doc["termination"] = res.termination
                text = reports.dumps(doc)
    except ValueError as e:
        raise CLIError(str(e), EXIT_IO) from None
    emit(cfg, text)
    if res.termination == "trap":
        print(f"program trapped: {res.trap_kind}", file=sys.stderr)
        return EXIT_TRAP
    if failed:
        print(f"label exhaustion for source(s) {failed}", file=sys.stderr)
        return EXIT_EXHAUSTION
    return EXIT_OK


def build_comparison(p: ProgramIR, data: bytes, sources=None, step_budget=DEFAULT_STEP_BUDGET,
                     samples=prox.DEFAULT_SAMPLES, fast=True, exhaustive=False,
                     config: dict | None = None) -> reports.ComparisonReport:
    truth = ground_truth(p, data, step_budget, sources, exhaustive)
    pga = run_pga(p, data, sources, step_budget, samples, fast=fast)
    binary = run_binary_pga(p, data, sources, step_budget, samples, fast=fast)
    dta = run_dta(p, data, sources, step_budget).report
    preds = {"pga": pga.jacobian.nonzero(), "binary": binary.jacobian.nonzero(), "dta": dta.matrix}
    metrics = {name: score(m, truth) for name, m in preds.items()}
    excluded = truth.excluded_mask()
    disagreements = []
    for i, src in enumerate(truth.sources):
        for j, sink in enumerate(truth.sinks):
            row = {k: bool(v[i, j]) for k, v in preds.items()}
            t = bool(truth.cells[i, j])
            if len(set(row.values()) | {t}) > 1:
                disagreements.append({"source": src, "sink": sink, **row, "truth": t,
                                      "pga_value": float(pga.jacobian.values[i, j]) + 0.0,
                                      "excluded": bool(excluded[i, j])})
    failures = {name: [s for s, st in run.stats.items() if st.failed]
                for name, run in (("pga", pga), ("binary", binary))}
    env = {"tool_version": __version__, "samples": samples, "fast": fast,
           "exhaustive": exhaustive, "step_budget": step_budget}
    return reports.ComparisonReport(metrics, disagreements, env, config or {},
                                    {k: v for k, v in failures.items() if v})


def cmd_compare(cfg: RunConfig) -> int:
    p, data = load_inputs(cfg)
    try:
        rep = build_comparison(p, data, _sources(cfg), cfg.step_budget, cfg.samples,
                               cfg.fast, cfg.exhaustive, asdict(cfg))
    except OracleRefusal as e:
        raise CLIError(f"oracle refused: {e}", EXIT_ORACLE) from None
    except ValueError as e:
        raise CLIError(str(e), EXIT_IO) from None
    emit(cfg, rep.to_csv() if cfg.format == "csv" else reports.dumps(rep.to_json()))
    if cfg.out:
        print(reports.metrics_table(rep.metrics))
    return EXIT_EXHAUSTION if rep.failures else EXIT_OK


def cmd_oracle(cfg: RunConfig) -> int:
    p, data = load_inputs(cfg)
    try:
        gt = ground_truth(p, data, cfg.step_budget, _sources(cfg), cfg.exhaustive)
    except OracleRefusal as e:
        raise CLIError(f"oracle refused: {e}", EXIT_ORACLE) from None
    except ValueError as e:
        raise CLIError(str(e), EXIT_IO) from None
    if cfg.format == "csv":
        emit(cfg, reports.bool_csv(gt.sources, gt.sinks, gt.cells))
    else:
        emit(cfg, reports.dumps(reports.ground_truth_json(gt, asdict(cfg))))
    return EXIT_OK


def cmd_fuzz(cfg: RunConfig) -> int:
    p, data = load_inputs(cfg)
    modes = ["pga", "dta"] if cfg.both else [cfg.mode]
    if any(m not in ("pga", "dta") for m in modes):
        raise CLIError("fuzz guidance must be pga or dta", EXIT_IO)
    timelines = []
    try:
        for m in modes:
            timelines.append(guided_fuzz(p, data, m, cfg.byte_budget, cfg.mutations,
                                         cfg.checkpoint, cfg.seed, cfg.step_budget, cfg.samples))
    except FuzzError as e:
        raise CLIError(f"fuzzing failed: {e}", EXIT_FUZZ) from None
    if cfg.format == "csv":
        emit(cfg, reports.timeline_csv(timelines))
    elif len(timelines) == 1:
        emit(cfg, reports.dumps(reports.timeline_json(timelines[0], asdict(cfg))))
    else:
        doc = reports.envelope("timelines", asdict(cfg))
        doc["timelines"] = [reports.timeline_body(t) for t in timelines]
        emit(cfg, reports.dumps(doc))
    if cfg.both:
        for t in timelines:
            print(f"{t.guidance}: {len(t.edges)} edges after {t.mutations} mutations",
                  file=sys.stderr if not cfg.out else sys.stdout)
    return EXIT_OK


def cmd_report(path: str) -> int:
    try:
        doc = json.loads(Path(path).read_text())
    except (OSError, ValueError) as e:
        raise CLIError(f"cannot read report: {e}", EXIT_IO) from None
    kind = doc.get("kind")
    print(f"{kind} report (schema {doc.get('schema_version')}, pga {doc.get('tool', {}).get('version')})")
    cfg = doc.get("config", {})
    if cfg.get("program"):
        print(f"program: {cfg['program']}  input: {cfg.get('input') or '(corpus seed)'}")
    if kind == "comparison":
        from .oracle import Metrics
        print(reports.metrics_table({k: Metrics(**v) for k, v in doc["metrics"].items()}))
        print(f"{len(doc['disagreements'])} disagreeing cell(s)")
        for d in doc["disagreements"]:
            print(f"  source {d['source']:>3} -> {d['sink']:<12} truth={int(d['truth'])} "
                  f"pga={int(d['pga'])} ({d['pga_value']:g}) binary={int(d['binary'])} dta={int(d['dta'])}")
    elif kind in ("jacobian", "taint", "ground_truth"):
        cells = np.array(doc["cells"], dtype=float)
        width = max([len(s) for s in doc["sinks"]] + [8])
        print("source  " + " ".join(f"{s:>{width}}" for s in doc["sinks"]))
        for src, row in zip(doc["sources"], cells):
            print(f"{src:>6}  " + " ".join(f"{v:>{width}g}" for v in row))
    elif kind in ("timeline", "timelines"):
        for t in doc.get("timelines", [doc]):
            print(f"{t['guidance']}: {t['final_edges']} edges, checkpoints {t['checkpoints']}")
    else:
        raise CLIError(f"unknown report kind {kind!r}", EXIT_IO)
    return EXIT_OK


# -- argument parsing

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="pga", description="Proximal gradient dataflow analysis")
    ap.add_argument("--version", action="version", version=f"pga {__version__}")
    sub = ap.add_subparsers(dest="command", required=True)

    def common(sp, modes=("pga", "dta", "binary")):
        sp.add_argument("--program", required=True, help="IR file, or corpus:<name>")
        sp.add_argument("--input", help="raw input bytes (defaults to the corpus seed)")
        sp.add_argument("--mode", choices=modes, default="pga")
        sp.add_argument("--samples", type=int, default=prox.DEFAULT_SAMPLES, metavar="N")
        g = sp.add_mutually_exclusive_group()
        g.add_argument("--fast", dest="fast", action="store_true", default=True,
                       help="first-nonzero proximal sampling (default)")
        g.add_argument("--verify", dest="fast", action="store_false",
                       help="full proximal argmin; logs disagreements with --fast")
        sp.add_argument("--sources", help="source bytes, e.g. 0..3 or 0,2")
        sp.add_argument("--step-budget", type=int, default=DEFAULT_STEP_BUDGET)
        sp.add_argument("--out", help="output file (default stdout)")
        sp.add_argument("--format", choices=("json", "csv"), default="json")
        sp.add_argument("-v", "--verbose", action="store_true")

    common(sub.add_parser("analyze", help="compute a Jacobian or taint matrix"))
    sp = sub.add_parser("compare", help="score pga, binary and dta against ground truth")
    common(sp)
    sp.add_argument("--exhaustive", action="store_true", help="try all 256 values per byte")
    sp = sub.add_parser("oracle", help="estimate ground-truth dataflows")
    common(sp)
    sp.add_argument("--exhaustive", action="store_true")
    sp = sub.add_parser("fuzz", help="dataflow-guided deterministic fuzzing")
    common(sp, modes=("pga", "dta"))
    sp.add_argument("--both", action="store_true", help="run pga and dta guidance")
    sp.add_argument("--byte-budget", type=int, default=DEFAULT_BYTE_BUDGET)
    sp.add_argument("--mutations", type=int)
    sp.add_argument("--checkpoint", type=int, default=DEFAULT_CHECKPOINT)
    sp.add_argument("--seed", type=int, default=0)
    sp = sub.add_parser("report", help="summarise a JSON artifact")
    sp.add_argument("path")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if getattr(args, "verbose", False) else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        if args.command == "report":
            return cmd_report(args.path)
        fields = {k: v for k, v in vars(args).items()
                  if k in RunConfig.__dataclass_fields__ and v is not None}
        try:
            cfg = RunConfig(**fields)
        except ValueError as e:
            raise CLIError(str(e), EXIT_IO) from None
        return {"analyze": cmd_analyze, "compare": cmd_compare,
                "oracle": cmd_oracle, "fuzz": cmd_fuzz}[args.command](cfg)
    except CLIError as e:
        print(f"pga: {e}", file=sys.stderr)
        return e.code


if __name__ == "__main__":
    sys.exit(main())
