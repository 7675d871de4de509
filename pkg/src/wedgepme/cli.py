"""Command line front end: ``wedgepme <subcommand> --config run.yaml``."""
from __future__ import annotations

import argparse
import hashlib
import logging
import sys
from typing import Optional

import numpy as np

from .config import ConfigError, RunConfig, dump_config, output_root, parse_config
from .evolution import TimePartition, evolve, positivity_and_mass_report
from .experiments import (ExperimentResult, StabilityError, accretivity_experiment, digest,
                          gaussian_bump, max_principle_sweep, poincare_experiment,
                          stability_experiment)
from .geometry import GeometryError, build_mesh, make_cusp_characteristic, validate_cusp_characteristic
from .linalg import ConvergenceError
from .operators import CoefficientError, assemble_divergence_form
from .output import read_field_csv, write_mesh_csv, write_outputs
from .resolvent import SemilinearProblem, brezis_strauss_solve

log = logging.getLogger("wedgepme")

EXIT_OK = 0
EXIT_VERDICT = 1
EXIT_CONFIG = 2
EXIT_SOLVER = 3
EXIT_IO = 4
EXIT_DOMAIN = 5

SUBCOMMANDS = ("geometry-check", "poincare", "resolvent", "evolve", "stability",
               "max-principle", "accretivity")


def config_digest(cfg: RunConfig) -> str:
    return hashlib.sha256(dump_config(cfg).encode()).hexdigest()[:16]


def initial_datum(cfg: RunConfig, mesh, default_height: float = 1.0) -> np.ndarray:
    spec = cfg.problem.initial
    if spec.kind == "zero":
        return np.zeros(mesh.n_cells)
    if spec.kind == "constant":
        return np.full(mesh.n_cells, float(spec.value))
    if spec.kind == "from_csv":
        return read_field_csv(mesh, spec.path)
    g = mesh.config
    center = tuple(spec.center) if spec.center else (0.5 * g.length, 0.5 * g.circumference)
    width = spec.width if spec.width is not None else 0.15 * g.length
    height = spec.height if spec.height is not None else default_height
    u = gaussian_bump(mesh, center, width)
    return height * u / u.max()


def partition_of(cfg: RunConfig) -> TimePartition:
    p = cfg.problem
    if p.breakpoints is not None:
        return TimePartition(tuple(p.breakpoints))
    return TimePartition.uniform(p.T, p.steps)


def _solver_kw(cfg: RunConfig) -> dict:
    d = cfg.discretization
    return dict(residual_tol=d.residual_tol, newton_max_iter=d.newton_max_iter, cg_tol=d.cg_tol)


def _mesh(cfg: RunConfig):
    d = cfg.discretization
    return build_mesh(cfg.geometry_config(), d.n_t, d.n_theta, cell_budget=d.cell_budget)


def cmd_geometry_check(cfg: RunConfig) -> ExperimentResult:
    g = cfg.geometry
    params = {k: v for k, v in (("k", g.cusp.k), ("samples", g.cusp.samples)) if v is not None}
    cusp = make_cusp_characteristic(g.cusp.kind, params, check=False)
    report = validate_cusp_characteristic(cusp)
    res = ExperimentResult("geometry_check", digest({"cusp": g.cusp.__dict__}))
    res.metrics.update(report.as_dict())
    res.verdicts["cusp_characteristic"] = report.classification != "not_cusp"
    for cond in report.failed_conditions:
        res.notes.append(f"condition ({cond}) fails")
    if report.classification != "not_cusp":
        mesh = _mesh(cfg)
        res.mesh = mesh
        res.metrics.update(n_cells=mesh.n_cells, total_measure=float(mesh.cell_measures.sum()),
                           rho_min=float(mesh.rho.min()), rho_max=float(mesh.rho.max()),
                           dirichlet_faces=mesh.count_faces(1), neumann_faces=mesh.count_faces(2))
        res.verdicts["rho_in_unit_interval"] = bool(mesh.rho.min() > 0 and mesh.rho.max() <= 1)
    return res


def cmd_poincare(cfg: RunConfig) -> ExperimentResult:
    e = cfg.experiment
    return poincare_experiment(cfg.geometry_config(), e.levels, rel_tol=e.refinement_rel_tol)


def cmd_resolvent(cfg: RunConfig) -> ExperimentResult:
    mesh = _mesh(cfg)
    f = initial_datum(cfg, mesh)
    p = cfg.problem
    prob = SemilinearProblem(mesh, p.lam, f, p.n,
                             delta_schedule=tuple(cfg.discretization.delta_schedule),
                             **_solver_kw(cfg))
    sol = brezis_strauss_solve(prob)
    diag = sol.diagnostics(p.lam, p.n, f)
    res = ExperimentResult("resolvent", digest({"config": config_digest(cfg)}))
    res.metrics.update(diag)
    scale = max(1.0, float(np.sum(mesh.cell_measures * np.abs(f))))
    tol = cfg.experiment.violation_tol
    res.verdict("residual_contract", sol.residual_l1 <= prob.residual_tol * scale,
                "residual_tol", prob.residual_tol)
    res.verdict("max_principle", diag["max_principle_margin"] >= -tol, "violation_tol", tol)
    res.mesh = mesh
    res.tables["solution"] = (("i_t", "i_theta", "t", "theta", "f", "v", "u"),
                              list(zip(mesh.i_t.tolist(), mesh.i_theta.tolist(),
                                       mesh.cell_t.tolist(), mesh.cell_theta.tolist(),
                                       f.tolist(), sol.v.tolist(), sol.u.tolist())))
    return res


def cmd_evolve(cfg: RunConfig) -> ExperimentResult:
    mesh = _mesh(cfg)
    u0 = initial_datum(cfg, mesh)
    p = cfg.problem
    scale = 1.0 if p.formulation == "pme1" else 1.0 / p.n
    trace = evolve(mesh, u0, p.n, partition_of(cfg), assemble_divergence_form(mesh),
                   time_scale=scale, delta_schedule=tuple(cfg.discretization.delta_schedule),
                   **_solver_kw(cfg))
    res = ExperimentResult("evolve", digest({"config": config_digest(cfg)}))
    res.trace, res.mesh = trace, mesh
    rep = positivity_and_mass_report(mesh, trace)
    res.metrics.update(steps=len(trace.states) - 1, final_l1=trace.diagnostics[-1]["l1"],
                       min_value=rep.min_value, mass_drift=rep.mass_drift)
    res.verdicts["complete"] = trace.complete
    if trace.error:
        res.notes.append(trace.error)
    l1 = [d["l1"] for d in trace.diagnostics]
    res.verdict("l1_nonincreasing", all(b <= a + 1e-8 for a, b in zip(l1, l1[1:])), "l1_tol", 1e-8)
    return res


def cmd_stability(cfg: RunConfig) -> ExperimentResult:
    d, p, e = cfg.discretization, cfg.problem, cfg.experiment
    geom = cfg.geometry_config()
    mesh = build_mesh(geom, d.n_t, d.n_theta, cell_budget=d.cell_budget)
    w0 = initial_datum(cfg, mesh, default_height=0.1)
    dt = partition_of(cfg).eps
    return stability_experiment(geom, p.C_M, w0, p.n, p.T, p.formulation, d.n_t, d.n_theta,
                                dt=dt, ball_fraction=e.ball_fraction, rate_tol=e.rate_tol,
                                **_solver_kw(cfg))


def cmd_max_principle(cfg: RunConfig) -> ExperimentResult:
    d, e = cfg.discretization, cfg.experiment
    return max_principle_sweep(cfg.geometry_config(), e.lambda_grid, e.corpus_size, d.seed,
                               d.n_t, d.n_theta, e.violation_tol)


def cmd_accretivity(cfg: RunConfig) -> ExperimentResult:
    d, e, p = cfg.discretization, cfg.experiment, cfg.problem
    grid = [x for x in e.lambda_grid if x <= 10.0] or e.lambda_grid
    return accretivity_experiment(cfg.geometry_config(), p.n, grid, e.sample_pairs, d.seed,
                                  d.n_t, d.n_theta, e.violation_tol)


COMMANDS = {
    "geometry-check": cmd_geometry_check,
    "poincare": cmd_poincare,
    "resolvent": cmd_resolvent,
    "evolve": cmd_evolve,
    "stability": cmd_stability,
    "max-principle": cmd_max_principle,
    "accretivity": cmd_accretivity,
}


def run_command(subcommand: str, cfg: RunConfig, out: Optional[str] = None,
                jobs: Optional[int] = None) -> int:
    """Run one subcommand, write its outputs and return the exit status."""
    if subcommand not in COMMANDS:
        raise ValueError(f"unknown subcommand {subcommand!r}")
    if jobs is not None:
        cfg.output.jobs = jobs
    try:
        result = COMMANDS[subcommand](cfg)
    except ConvergenceError as exc:
        log.error("solver failure: %s", exc)
        return EXIT_SOLVER
    except (GeometryError, CoefficientError, StabilityError) as exc:
        log.error("invalid problem: %s", exc)
        return EXIT_DOMAIN
    out_dir = output_root(cfg, out) / result.name.replace("_", "-")
    try:
        write_outputs(result, out_dir, config_digest=config_digest(cfg),
                      seed=cfg.discretization.seed, dump_fields=cfg.output.dump_fields)
        if subcommand == "geometry-check" and result.mesh is not None:
            write_mesh_csv(result.mesh, out_dir / "mesh.csv")
    except OSError as exc:
        log.error("cannot write outputs: %s", exc)
        return EXIT_IO
    status = "PASS" if result.passed else "FAIL"
    print(f"{subcommand}: {status}")
    for k, v in result.verdicts.items():
        print(f"  {k}: {'pass' if v else 'fail'}")
    for note in result.notes:
        print(f"  note: {note}")
    print(f"  outputs: {out_dir}")
    return EXIT_OK if result.passed else EXIT_VERDICT


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="wedgepme", description=__doc__)
    ap.add_argument("subcommand", choices=SUBCOMMANDS)
    ap.add_argument("--config", required=True, help="YAML run configuration")
    ap.add_argument("--out", help="output root (overrides config and $WEDGEPME_OUTPUT_ROOT)")
    ap.add_argument("--jobs", type=int, help="concurrent jobs")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = parse_config(args.config)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    # echo the fully resolved configuration, defaults included
    print(dump_config(cfg), end="")
    return run_command(args.subcommand, cfg, args.out, args.jobs)


if __name__ == "__main__":
    sys.exit(main())
