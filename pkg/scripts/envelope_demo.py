"""Uncontrolled moment curve, Monte Carlo ensemble and the Gronwall envelope for one model.

Writes a CSV with columns t, oracle_EV, mc_mean_V, mc_stderr_V, envelope.
"""
import argparse
import csv

from instab.lmi import max_threshold
from instab.model import bundled_config, load_model
from instab.moments import divergence_envelope, propagate_moments
from instab.sim import Controller, SimConfig, simulate


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--model", default=str(bundled_config("table1_setting5")))
    ap.add_argument("--fraction", type=float, default=0.9, help="u_hat as a fraction of u_star")
    ap.add_argument("--t-end", type=float, default=5.0)
    ap.add_argument("--paths", type=int, default=2000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--out", default="envelope.csv")
    args = ap.parse_args()

    model = load_model(args.model)
    res = max_threshold(model)
    cert = res.certificate
    u_hat = args.fraction * res.u_star
    curve = divergence_envelope(model, cert, u_hat)
    cfg = SimConfig(dt=1e-3, t_end=args.t_end, n_paths=args.paths, seed=args.seed)
    rep = simulate(model, Controller.zero(), cfg, R=cert.R)
    traj = propagate_moments(model, None, None, args.t_end, cfg.dt_out, R=cert.R)
    env = curve(rep.times)
    with open(args.out, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["t", "oracle_EV", "mc_mean_V", "mc_stderr_V", "envelope"])
        for k, t in enumerate(rep.times):
            w.writerow([t, traj.EV[k], rep.mean_V[k], rep.stderr_V[k], env[k]])
    print(f"u_star={res.u_star:.4f} u_hat={u_hat:.4f} envelope: c0={curve.c0:.3g} "
          f"c1={curve.c1:.4g} phi={curve.phi:.4g}")
    print(f"t={rep.times[-1]:.2f}: oracle {traj.EV[-1]:.4g}, MC {rep.mean_V[-1]:.4g} "
          f"+/- {rep.stderr_V[-1]:.2g}, envelope {env[-1]:.4g}  -> {args.out}")


if __name__ == "__main__":
    main()
