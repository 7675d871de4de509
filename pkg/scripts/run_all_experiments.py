#!/usr/bin/env python3
"""Run the full experiment set at acceptance resolution and print a verdict table.

    python3 scripts/run_all_experiments.py [--out results] [--quick]
"""
import argparse
import math
import time
from pathlib import Path

from wedgepme.cli import config_digest
from wedgepme.config import RunConfig
from wedgepme.experiments import (accretivity_experiment, contraction_experiment,
                                  l1_bound_probe, max_principle_sweep, poincare_experiment,
                                  positivity_experiment, refinement_experiment,
                                  spectrum_bound_experiment, stability_experiment)
from wedgepme.geometry import GeometryConfig
from wedgepme.output import write_outputs


def jobs(quick):
    wedge = GeometryConfig()
    torus = GeometryConfig(shape="slit_torus", length=1.0, circumference=1.0, beta=2.0)
    s = 4 if quick else 1
    return [
        ("poincare", lambda: poincare_experiment(wedge, levels=(32, 64, 128, 256 // s))),
        ("poincare_torus", lambda: poincare_experiment(torus, levels=(32, 64, 128 // s))),
        ("spectrum_1", lambda: spectrum_bound_experiment(wedge, 1.0)),
        ("spectrum_1_plus_rho", lambda: spectrum_bound_experiment(wedge, "1+rho")),
        ("max_principle", lambda: max_principle_sweep(wedge, corpus_size=100 // s)),
        ("l1_bound", lambda: l1_bound_probe(wedge)),
        ("accretivity_n2", lambda: accretivity_experiment(wedge, n=2.0)),
        ("accretivity_n3", lambda: accretivity_experiment(wedge, n=3.0)),
        ("contraction", lambda: contraction_experiment(wedge, pairs=20 // s, n_t=64 // s, n_theta=64 // s)),
        ("positivity", lambda: positivity_experiment(wedge)),
        ("stability_pme1", lambda: stability_experiment(wedge, n_t=128 // s, n_theta=128 // s)),
        ("stability_pme_div", lambda: stability_experiment(wedge, formulation="pme_div", T=3.0,
                                                           n_t=128 // s, n_theta=128 // s)),
        ("refinement", lambda: refinement_experiment(wedge)),
    ]


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--out", default="results")
    ap.add_argument("--quick", action="store_true", help="coarser meshes and smaller corpora")
    args = ap.parse_args()
    digest = config_digest(RunConfig())
    failed = 0
    for name, job in jobs(args.quick):
        t0 = time.perf_counter()
        res = job()
        dt = time.perf_counter() - t0
        write_outputs(res, Path(args.out) / name, config_digest=digest, seed=0)
        failed += not res.passed
        key = next((k for k in ("fitted_rate", "min_margin", "alpha", "lambda_min",
                                "worst_sup_violation", "worst_step_increase", "min_value")
                    if isinstance(res.metrics.get(k), float)), None)
        shown = f"{key}={res.metrics[key]:.6g}" if key else ""
        print(f"{name:22s} {'PASS' if res.passed else 'FAIL'}  {dt:6.1f} s  {shown}")
    print(f"{failed} experiment(s) failed")
    return 1 if failed else 0


if __name__ == "__main__":
    raise SystemExit(main())
