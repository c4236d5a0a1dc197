#!/usr/bin/env python3
"""Stopping-time survival study.

Estimates P(tau > rho) for the graph-norm threshold stopping rule under
multiplicative noise and fits the quadratic deficiency form 1 - rho^2 M,
writing the curve with its confidence band.
"""

import argparse
from pathlib import Path

import numpy as np

import stochwave as sw


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--out", default="runs/tail", help="output directory")
    ap.add_argument("--paths", type=int, default=1000)
    ap.add_argument("--seed", type=int, default=7)
    ap.add_argument("--margin", type=float, default=2.0,
                    help="threshold as a multiple of the initial sup norm")
    args = ap.parse_args()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    grid = sw.make_grid(1, [16], [2 * np.pi])
    model = sw.build_model("nls", grid, sign=0, smoothness=1)
    x = grid.x_axes[0]
    phi0 = sw.State(grid, np.exp(1j * x)[None, :], model.roles)
    cov = sw.default_covariance(grid, n_modes=3, lambda0=4.0, gamma=1.5)
    n0 = max(model.graph_norms(phi0, 1))
    cfg = sw.EnsembleConfig(model=model, phi0=phi0, T=1.0, dt=1 / 100,
                            covariance=cov, n_paths=args.paths,
                            master_seed=args.seed,
                            threshold=args.margin * n0, n_smooth=1)
    tc = sw.tail_curve(cfg, np.arange(0.05, 1.0, 0.05))

    print(f"fitted M = {tc.m_hat:.4f}; "
          f"lower bound holds on (0, 0.5]: {tc.lower_bound_ok()}")
    print(f"{'rho':>6} {'survival':>9} {'band':>8} {'1 - M rho^2':>12}")
    for r, s, b in zip(tc.rhos, tc.survival, tc.band):
        print(f"{r:>6.2f} {s:>9.3f} {b:>8.3f} {1 - tc.m_hat * r * r:>12.3f}")

    with open(out / "tail_curve.csv", "w") as fh:
        fh.write("rho,survival,band,fitted_lower_bound\n")
        for r, s, b in zip(tc.rhos, tc.survival, tc.band):
            fh.write(f"{r:.10g},{s:.10g},{b:.10g},{1 - tc.m_hat * r * r:.10g}\n")
    print(f"curve written to {out}")


if __name__ == "__main__":
    main()
