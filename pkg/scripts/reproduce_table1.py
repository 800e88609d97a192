"""Thresholds for the six Van der Pol settings from the LMI search and the eigen bound."""
import argparse
import time

from instab.eigen import eigen_threshold
from instab.errors import PreconditionError
from instab.lmi import LmiEngine
from instab.model import TABLE1, table1_setting

PUBLISHED = {1: 7.4, 2: 10.8, 3: 8.4, 4: 4.5, 5: 1.0, 6: 4.1}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--phi-grid", type=int, default=64)
    ap.add_argument("--threads", type=int, default=1)
    args = ap.parse_args()

    print(f"{'k':>2} {'a':>5} {'c1':>4} {'c2':>4} {'d':>4} {'lmi':>9} {'published':>9} {'eigen':>7} {'phi_L':>7} {'sec':>5}")
    for k in sorted(TABLE1):
        m = table1_setting(k)
        t0 = time.perf_counter()
        res = LmiEngine(m, threads=args.threads).max_threshold(n_points=args.phi_grid)
        secs = time.perf_counter() - t0
        try:
            eig = f"{eigen_threshold(m)[0]:7.4f}"
        except PreconditionError:
            eig = "      -"
        a, c1, c2, d = (TABLE1[k][key] for key in ("a", "c1", "c2", "d"))
        print(f"{k:>2} {a:5.2f} {c1:4.1f} {c2:4.1f} {d:4.1f} {res.u_star:9.4f} {PUBLISHED[k]:9.1f} "
              f"{eig} {res.certificate.phi_L:7.4f} {secs:5.2f}")


if __name__ == "__main__":
    main()
