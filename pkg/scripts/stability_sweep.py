#!/usr/bin/env python3
"""Fitted vs predicted decay rates of perturbations of C_M over n and C_M."""
import argparse

from wedgepme.experiments import stability_experiment
from wedgepme.geometry import GeometryConfig


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n-cells", type=int, default=48)
    ap.add_argument("--efolds", type=float, default=8.0,
                    help="run length in units of the predicted decay time")
    args = ap.parse_args()
    print(f"{'n':>5} {'C_M':>5} {'form':>8} {'fitted':>9} {'predicted':>9} {'rel':>7}")
    for form in ("pme1", "pme_div"):
        for n in (1.0, 2.0, 3.0):
            for c in (0.5, 1.0, 2.0):
                # predicted rate with lam_min ~ (pi/2)^2, used only to size the run
                guess = (n if form == "pme1" else 1.0) * c ** (n - 1) * 2.4674
                T = round(args.efolds / guess, 2)
                r = stability_experiment(GeometryConfig(), C_M=c, n=n, formulation=form, T=T,
                                         dt=T / 200, n_t=args.n_cells, n_theta=args.n_cells,
                                         w0=lambda m, c=c: 0.1 * c * _bump(m))
                mt = r.metrics
                print(f"{n:5.1f} {c:5.1f} {form:>8} {mt['fitted_rate']:9.4f} "
                      f"{mt['predicted_rate']:9.4f} {mt['relative_rate_error']:7.3f}")


def _bump(mesh):
    from wedgepme.experiments import gaussian_bump
    u = gaussian_bump(mesh, (0.5, mesh.config.circumference / 2), 0.2)
    return u / u.max()


if __name__ == "__main__":
    main()
