"""When does each guidance first reach the magic-byte edge?

    python scripts/fuzz_comparison.py [--seeds 20]
"""

import argparse
import statistics

from pga import corpus
from pga.fuzz import guided_fuzz

EDGE = ("check", "magic")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, default=20)
    args = ap.parse_args()
    p, seed = corpus.load("magic_byte")
    pga = guided_fuzz(p, seed, "pga")
    print(f"pga  byte order {pga.selected}  edge at mutation {pga.first_seen.get(EDGE)}")
    hits = []
    for s in range(args.seeds):
        tl = guided_fuzz(p, seed, "dta", rng_seed=s)
        hits.append(tl.first_seen.get(EDGE))
        print(f"dta  seed {s:>2}  byte order {tl.selected}  edge at mutation {hits[-1]}")
    found = [h for h in hits if h is not None]
    print(f"dta median {statistics.median(found) if found else None} "
          f"({len(found)}/{len(hits)} seeds reached the edge)")


if __name__ == "__main__":
    main()
