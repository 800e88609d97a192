"""Certified threshold of the satellite model as a function of the orbit rate zeta."""
import argparse

import numpy as np

from instab.lmi import max_threshold
from instab.model import satellite


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--zetas", type=float, nargs="+", default=[0.1, 0.25, 0.5, 0.75, 1.0, 1.5])
    ap.add_argument("--phi-grid", type=int, default=64)
    args = ap.parse_args()
    print(f"{'zeta':>6} {'u_star':>9} {'phi_L':>8} {'beta_U':>8}")
    for z in args.zetas:
        res = max_threshold(satellite(z), n_points=args.phi_grid)
        c = res.certificate
        print(f"{z:6.2f} {res.u_star:9.4f} {c.phi_L:8.4f} {c.beta_U:8.4f}")
    # the zeta = 1 certificate is rational; print it for inspection
    c = max_threshold(satellite(1.0)).certificate
    np.set_printoptions(precision=5, suppress=True)
    print("\nzeta = 1 certificate R * 14:\n", c.R * 14)


if __name__ == "__main__":
    main()
