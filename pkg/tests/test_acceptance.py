"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line."""

import json
import random
import statistics
import time

import numpy as np
import pytest

from pga import corpus
from pga.cli import EXIT_EXHAUSTION, main
from pga.engine import run_pga
from pga.fuzz import guided_fuzz
from pga.ir import load_program
from pga.oracle import f1_score, ground_truth, metrics_from_counts, score
from pga.prox import OpSig, brute_force_prox, prox_derivative
from pga.shadow import DerivativePair, GradientTable, LabelExhausted
from pga.taint import run_binary_pga, run_dta
from pga.vm import execute

from conftest import criterion
from gen import float_program


def test_01_fig6_reproduction():
    with criterion(1, "srem proximal derivatives") as d:
        a = prox_derivative("srem.i32", (0, 4), (2, 0), 5)
        b = prox_derivative("srem.i32", (4, 0), (0, 0), 5)
        d.update(fig6a=a, fig6b=b)
        assert a == 2.0 and b == 0.0
        p, _ = corpus.load("fig6a")
        assert run_pga(p, b"\x00").records[0].pair.pos == 2.0
        p, _ = corpus.load("fig6b")
        assert run_pga(p, b"\x00").jacobian.get(0, "entry:3") == 0.0


def test_02_mul_then_mask():
    with criterion(2, "mul then mask: PGA 2/0, DTA taints both") as d:
        p, seed = corpus.load("mul_mask")
        pga = run_pga(p, seed).jacobian.values[0].tolist()
        dta = run_dta(p, seed).report.matrix[0].tolist()
        d.update(pga=pga, dta=dta)
        assert pga == [2.0, 0.0] and dta == [True, True]


INT_OPS = ["add", "sub", "mul", "udiv", "sdiv", "urem", "srem", "shl", "lshr", "ashr",
           "and", "or", "xor"] + [f"icmp.{c}" for c in
                                   ("eq", "ne", "ult", "ule", "slt", "sle", "ugt", "sgt")]
CASTS = [("zext", "i8", "i32"), ("sext", "i8", "i32"), ("sext", "i16", "i64"),
         ("trunc", "i32", "i8"), ("trunc", "i64", "i16"), ("ftoi", "f64", "i32"),
         ("itof", "i32", "f64")]


def _random_tuple(rng):
    n = rng.randint(1, 8)
    kind = rng.random()
    if kind < 0.7:
        w = rng.choice([8, 16, 32, 64])
        op = OpSig.parse(f"{rng.choice(INT_OPS)}.i{w}")
        big = rng.random() < 0.5
        xs = tuple(rng.randrange(2**w) if big else rng.randrange(-16, 17) % 2**w for _ in range(2))
        ds = tuple(rng.choice([0.0, 1.0, -1.0, 2.0, rng.uniform(-6, 6)]) for _ in range(2))
    elif kind < 0.85:
        op = OpSig.parse("frem.f64")
        xs = (rng.uniform(-100, 100), rng.choice([0.0, rng.uniform(-10, 10)]))
        ds = (rng.uniform(-3, 3), rng.uniform(-3, 3))
    else:
        name, src, dst = rng.choice(CASTS)
        op = OpSig.parse(f"{name}.{dst}", src=src)
        if src == "f64":
            xs = (rng.uniform(-3e9, 3e9) if rng.random() < 0.3 else rng.uniform(-50, 50),)
        else:
            xs = (rng.randrange(2 ** int(src[1:])),)
        ds = (rng.choice([1.0, -1.0, rng.uniform(-6, 6)]),)
    return op, xs, ds, n


def test_03_prox_oracle_equivalence():
    with criterion(3, "prox == brute force on 10,000 random tuples") as d:
        rng = random.Random(20240)
        mismatches, nonzero = [], 0
        for _ in range(10_000):
            op, xs, ds, n = _random_tuple(rng)
            got, want = prox_derivative(op, xs, ds, n), brute_force_prox(op, xs, ds, n)
            nonzero += got != 0
            if got != want:
                mismatches.append((op.opcode, xs, ds, n, got, want))
        d.update(tuples=10_000, nonzero=nonzero, mismatches=len(mismatches))
        assert not mismatches, mismatches[:5]


def _central_difference(g, x, h=1e-3):
    return (g(x + h) - g(x - h)) / (2 * h)


def test_04_analytic_vs_finite_difference():
    with criterion(4, "float derivatives match central differences") as d:
        rng = random.Random(7)
        worst = 0.0
        for k in range(100):
            p, f = float_program(rng, rng.randint(1, 6))
            b = rng.randrange(256)
            recs = run_pga(p, bytes([b])).records
            got = recs[0].pair.pos if recs else 0.0
            want = _central_difference(lambda t: f(t / 64.0), float(b))
            err = abs(got - want)
            tol = max(1e-6 * abs(want), 1e-9)
            worst = max(worst, err / tol)
            assert err <= tol, (k, str(p), b, got, want)
        d.update(programs=100, worst_err_over_tol=f"{worst:.3g}")


def test_05_non_interference():
    with criterion(5, "instrumented runs match vm.execute") as d:
        checked = 0
        for name in corpus.NAMES:
            p, seed = corpus.load(name)
            rng = random.Random(name)
            for _ in range(100):
                data = bytes(rng.randrange(256) for _ in seed)
                want = execute(p, data)
                want = (want.trace, want.sink_values, want.coverage)
                for run in (run_pga(p, data).execution, run_dta(p, data).execution,
                            run_binary_pga(p, data).execution):
                    assert (run.trace, run.sink_values, run.coverage) == want, (name, data)
                checked += 1
        d.update(runs=checked * 3)


def test_06_accuracy_ordering():
    with criterion(6, "exhaustive macro-F1: PGA >= binary, PGA >= DTA, strict on 3") as d:
        f1 = {"pga": [], "binary": [], "dta": []}
        per = {}
        for name in corpus.NAMES:
            p, seed = corpus.load(name)
            assert p.input_length <= 8
            truth = ground_truth(p, seed, exhaustive=True)
            scores = {"pga": score(run_pga(p, seed).jacobian.nonzero(), truth).f1,
                      "binary": score(run_binary_pga(p, seed).jacobian.nonzero(), truth).f1,
                      "dta": score(run_dta(p, seed).report.matrix, truth).f1}
            per[name] = scores
            for k, v in scores.items():
                f1[k].append(v)
        macro = {k: float(np.mean(v)) for k, v in f1.items()}
        d.update(**{f"macro_{k}": f"{v:.3f}" for k, v in macro.items()})
        assert macro["pga"] >= macro["binary"] and macro["pga"] >= macro["dta"]
        for name in ("fig6b", "mul_mask", "bitfield"):
            assert per[name]["pga"] > per[name]["dta"], (name, per[name])


def test_07_fuzzing_protocol():
    with criterion(7, "PGA reaches the magic edge within 256; DTA median later") as d:
        p, seed = corpus.load("magic_byte")
        edge = ("check", "magic")
        pga = guided_fuzz(p, seed, "pga", checkpoint_interval=256)
        first = pga.first_seen.get(edge)
        dta_first = []
        for s in range(20):
            tl = guided_fuzz(p, seed, "dta", rng_seed=s, checkpoint_interval=256)
            counts = [c for _, c in tl.checkpoints]
            assert counts == sorted(counts)
            dta_first.append(tl.first_seen.get(edge, float("inf")))
        med = statistics.median(dta_first)
        d.update(pga=first, dta_median=med)
        assert first is not None and first <= 256
        counts = [c for _, c in pga.checkpoints]
        assert counts == sorted(counts)
        assert med > first


CHAIN = ".input 1\nblock entry:\n  r0 = input.i32 0\n{body}  sink r{last}\n  ret\n"

EXHAUST = """\
.input 1
block entry:
  r1 = input.i32 0
  r2 = const.i32 0
  r3 = const.i32 0
  jmp loop
block loop:
  r2 = add.i32 r2, r1
  r3 = add.i32 r3, 1
  r4 = icmp.ult.i32 r3, 70000
  br r4, loop, done
block done:
  sink r2
  ret
"""


def test_08_label_economy(tmp_path):
    with criterion(8, "label reuse on add chains; structured exhaustion") as d:
        body = "".join(f"  r{i + 1} = add.i32 r{i}, {1 + i % 7}\n" for i in range(1000))
        p = load_program(CHAIN.format(body=body, last=1000))
        run = run_pga(p, b"\x05")
        labels = run.stats[0].labels
        assert labels - 1 <= 2

        table = GradientTable(max_label=4)
        with pytest.raises(LabelExhausted):
            for k in range(10):
                table.intern(DerivativePair(k + 1, -k - 1), site="entry:0")

        p = load_program(EXHAUST)
        t0 = time.perf_counter()
        run = run_pga(p, b"\x01")
        st = run.stats[0]
        assert st.failed and st.exhausted_at == "loop:0"
        assert run.execution.observable() == execute(p, b"\x01").observable()
        prog = tmp_path / "exhaust.ir"
        prog.write_text(EXHAUST)
        (tmp_path / "in.bin").write_bytes(b"\x01")
        code = main(["analyze", "--program", str(prog), "--input", str(tmp_path / "in.bin"),
                     "--out", str(tmp_path / "out.json")])
        doc = json.loads((tmp_path / "out.json").read_text())
        d.update(chain_extra_labels=labels - 1, exhausted_at=st.exhausted_at, cli_exit=code,
                 seconds=f"{time.perf_counter() - t0:.1f}")
        assert code == EXIT_EXHAUSTION
        assert doc["stats"]["0"]["exhausted_at"] == "loop:0"


def test_09_metrics_formula():
    with criterion(9, "F1 formula") as d:
        a = f1_score(0.63, 0.51)
        b = f1_score(0.5, 1.0)
        d.update(minigzip=f"{a:.4f}", half_one=f"{b:.6f}")
        assert abs(a - 0.57) <= 0.01
        assert b == pytest.approx(2 / 3, abs=1e-15)
        m = metrics_from_counts(1, 1, 0, 0)
        assert (m.precision, m.recall) == (0.5, 1.0) and m.f1 == pytest.approx(2 / 3, abs=1e-15)


CLI_RUNS = {
    "analyze-pga-json": ["analyze", "--program", "corpus:bitfield"],
    "analyze-pga-csv": ["analyze", "--program", "corpus:checksum", "--format", "csv"],
    "analyze-verify": ["analyze", "--program", "corpus:bitfield", "--verify"],
    "analyze-dta": ["analyze", "--program", "corpus:memops", "--mode", "dta"],
    "analyze-binary": ["analyze", "--program", "corpus:fig6b", "--mode", "binary"],
    "compare": ["compare", "--program", "corpus:bitfield", "--exhaustive"],
    "compare-csv": ["compare", "--program", "corpus:mul_mask", "--format", "csv"],
    "oracle": ["oracle", "--program", "corpus:three_source"],
    "fuzz": ["fuzz", "--program", "corpus:magic_byte", "--both", "--checkpoint", "500"],
    "fuzz-dta": ["fuzz", "--program", "corpus:checksum", "--mode", "dta", "--seed", "3",
                 "--mutations", "300", "--checkpoint", "100"],
}


def test_10_cli_determinism(tmp_path, capsys):
    with criterion(10, "CLI outputs byte-identical across runs") as d:
        for name, argv in CLI_RUNS.items():
            outs = []
            path = tmp_path / f"{name}.out"
            for _ in range(2):
                # identical configs, so the same --out path both times
                assert main(argv + ["--out", str(path)]) == 0, name
                outs.append(path.read_bytes())
            assert outs[0] == outs[1], name
        reports = []
        for k in range(2):
            capsys.readouterr()
            assert main(["report", str(tmp_path / "compare.out")]) == 0
            reports.append(capsys.readouterr().out)
        assert reports[0] == reports[1]
        d.update(commands=len(CLI_RUNS) + 1)
