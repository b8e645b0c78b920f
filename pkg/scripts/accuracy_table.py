"""Precision/recall/F1 of PGA, binary ablation and DTA on every corpus program.

    python scripts/accuracy_table.py [--protocol]

Ground truth is exhaustive (all 256 values per byte) unless --protocol is given.
"""

import argparse

import numpy as np

from pga import corpus
from pga.cli import build_comparison


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--protocol", action="store_true", help="10-value perturbation protocol")
    args = ap.parse_args()
    analyses = ("pga", "binary", "dta")
    print(f"{'program':<14}" + "".join(f"{a + ' P/R/F1':>22}" for a in analyses))
    f1 = {a: [] for a in analyses}
    for name in corpus.NAMES:
        p, seed = corpus.load(name)
        rep = build_comparison(p, seed, exhaustive=not args.protocol)
        cells = []
        for a in analyses:
            m = rep.metrics[a]
            f1[a].append(m.f1)
            cells.append(f"{m.precision:.2f}/{m.recall:.2f}/{m.f1:.2f}")
        print(f"{name:<14}" + "".join(f"{c:>22}" for c in cells))
    print(f"{'macro F1':<14}" + "".join(f"{np.mean(f1[a]):>22.3f}" for a in analyses))


if __name__ == "__main__":
    main()
