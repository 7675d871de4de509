"""Scripted studies: Poincare constant, spectrum bound, stability of constant
equilibria, maximum-principle sweeps and the L1 probes."""
from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from .evolution import (EvolutionTrace, TimePartition, contraction_monitor, evolve,
                        mild_convergence_study, positivity_and_mass_report)
from .geometry import GeometryConfig, SingularMesh, build_mesh
from .linalg import smallest_eigenpair
from .operators import (Coefficient, CoefficientError, assemble_divergence_form, lp_norm)
from .resolvent import accretivity_probe, linear_resolvent


class StabilityError(ValueError):
    """Perturbation outside the smallness ball."""


@dataclass
class ExperimentResult:
    name: str
    inputs_digest: str
    metrics: dict = field(default_factory=dict)
    verdicts: dict = field(default_factory=dict)
    tolerances: dict = field(default_factory=dict)
    tables: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)
    artifacts: list = field(default_factory=list)
    trace: Optional[EvolutionTrace] = None
    mesh: Optional[SingularMesh] = None

    @property
    def passed(self) -> bool:
        return bool(self.verdicts) and all(self.verdicts.values())

    def verdict(self, key: str, ok: bool, tol_name: str, tol: float):
        self.verdicts[key] = bool(ok)
        self.tolerances[tol_name] = tol


def digest(obj) -> str:
    text = json.dumps(obj, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _geom_dict(config: GeometryConfig) -> dict:
    return {"shape": config.shape, "length": config.length, "circumference": config.circumference,
            "cusp": {"kind": config.cusp.kind, **config.cusp.params},
            "singular_radius": config.singular_radius, "beta": config.beta,
            "blend_width": config.blend_width}


# ---------------------------------------------------------------------------
# field corpora


def gaussian_bump(mesh: SingularMesh, center=(0.5, math.pi), width: float = 0.15,
                  height: float = 1.0) -> np.ndarray:
    t = mesh.cell_t
    d2 = (t - center[0]) ** 2
    if not mesh.one_dimensional:
        c = mesh.config.circumference
        dth = np.abs(mesh.cell_theta - center[1]) % c
        dth = np.minimum(dth, c - dth)
        d2 = d2 + dth**2
    return height * np.exp(-0.5 * d2 / width**2)


def random_field(mesh: SingularMesh, rng: np.random.Generator, kind: str = "mixed") -> np.ndarray:
    """Seeded test field: ``mixed`` (signed noise), ``bump``, ``indicator``, ``smooth``."""
    n = mesh.n_cells
    if kind == "mixed":
        return rng.uniform(-1.0, 1.0, n) * rng.uniform(0.1, 10.0)
    if kind == "bump":
        L = mesh.config.length
        center = (rng.uniform(0.1 * L, 0.9 * L), rng.uniform(0, mesh.config.circumference))
        width = rng.uniform(0.05, 0.25) * L
        return gaussian_bump(mesh, center, width, rng.choice([-1.0, 1.0]) * rng.uniform(0.1, 5.0))
    if kind == "indicator":
        u = np.zeros(n)
        k = rng.integers(1, max(2, n // 8))
        u[rng.choice(n, size=k, replace=False)] = rng.uniform(-2.0, 2.0)
        return u
    if kind == "smooth":
        u = np.zeros(n)
        L = mesh.config.length
        for _ in range(4):
            center = (rng.uniform(0.1 * L, 0.9 * L), rng.uniform(0, mesh.config.circumference))
            u += gaussian_bump(mesh, center, rng.uniform(0.05, 0.2) * L, rng.uniform(-1.0, 1.0))
        return u
    raise ValueError(f"unknown field kind {kind!r}")


def field_corpus(mesh: SingularMesh, size: int, seed: int) -> list:
    rng = np.random.default_rng(seed)
    kinds = ("mixed", "bump", "indicator")
    return [random_field(mesh, rng, kinds[i % 3]) for i in range(size)]


# ---------------------------------------------------------------------------
# Poincare / spectral gap


def poincare_experiment(config: GeometryConfig, levels: Sequence[int] = (32, 64, 128, 256),
                        n_theta: Optional[Sequence[int]] = None, floor: float = 1e-3,
                        rel_tol: float = 0.02, eig_tol: float = 1e-9) -> ExperimentResult:
    """Smallest eigenvalue of the ``a = 1`` operator under refinement; ``C = 1/sqrt(lam)``."""
    levels = list(levels)
    n_theta = list(n_theta) if n_theta is not None else levels
    res = ExperimentResult("poincare", digest({"geometry": _geom_dict(config), "levels": levels,
                                               "n_theta": n_theta}))
    lams, consts, rows = [], [], []
    singular = False
    for nt, nth in zip(levels, n_theta):
        mesh = build_mesh(config, nt, nth)
        A = assemble_divergence_form(mesh)
        eig = smallest_eigenpair(A, mesh.cell_measures, tol=eig_tol)
        singular |= eig.singular
        lam = eig.value
        C = 1.0 / math.sqrt(lam) if lam > 0 else math.inf
        lams.append(lam)
        consts.append(C)
        rows.append((nt, nth, lam, C, eig.iterations))
        res.mesh = mesh
    res.tables["levels"] = (("n_t", "n_theta", "lambda_min", "poincare_constant", "iterations"), rows)
    res.metrics.update(lambda_min=lams[-1], poincare_constant=consts[-1], singular=singular,
                       lambda_levels=lams)
    rel = abs(lams[-1] - lams[-2]) / lams[-1] if len(lams) > 1 and lams[-1] > 0 else (
        0.0 if len(lams) == 1 and lams[-1] > 0 else math.inf)
    res.metrics["finest_relative_change"] = rel
    res.verdict("positive_gap", (not singular) and min(lams) > floor, "lambda_floor", floor)
    res.verdict("refinement_stable", rel < rel_tol, "refinement_rel_tol", rel_tol)
    if singular:
        res.notes.append("operator singular (constants in the kernel): no Poincare inequality")
    return res


# ---------------------------------------------------------------------------
# spectrum bound


CoefficientSpec = Union[float, str, Callable[[SingularMesh], Coefficient]]


def make_coefficient(mesh: SingularMesh, spec: CoefficientSpec) -> Coefficient:
    """``float`` -> constant, ``"1+rho"`` -> ``1 + rho`` (decaying part), or a callable."""
    if callable(spec):
        return spec(mesh)
    if isinstance(spec, (int, float)):
        return Coefficient.constant(mesh, float(spec))
    if spec == "1+rho":
        face = 1.0 + mesh.face_rho
        return Coefficient(face, a_min=1.0, constant_part=1.0, decay_exponent=-1.0, decay_constant=1.0)
    raise CoefficientError(f"unknown coefficient spec {spec!r}")


def spectrum_bound_experiment(config: GeometryConfig, a: CoefficientSpec = 1.0, n_t: int = 64,
                              n_theta: int = 64, lam_grid=(0.01, 0.1, 1.0, 10.0),
                              corpus_size: int = 100, seed: int = 0, tol: float = 1e-8,
                              contraction_tol: float = 1e-10) -> ExperimentResult:
    mesh = build_mesh(config, n_t, n_theta)
    coef = make_coefficient(mesh, a)
    res = ExperimentResult("spectrum_bound", digest({"geometry": _geom_dict(config), "a": str(a),
                                                     "n_t": n_t, "n_theta": n_theta, "seed": seed}))
    A1 = assemble_divergence_form(mesh)
    Aa = assemble_divergence_form(mesh, coef)
    lam1 = smallest_eigenpair(A1, mesh.cell_measures, tol=1e-11).value
    lama = smallest_eigenpair(Aa, mesh.cell_measures, tol=1e-11).value
    res.metrics.update(lambda_min=lama, lambda_min_unit=lam1, a_min=coef.a_min,
                       a_max=float(coef.values.max()), spectral_bound=-lama)
    res.verdict("form_comparison", lama >= coef.a_min * lam1 - tol * lam1, "form_tol", tol)
    res.verdict("negative_spectral_bound", lama > 0, "form_tol", tol)
    worst = math.inf
    corpus = field_corpus(mesh, corpus_size, seed)
    for lam in lam_grid:
        for f in corpus:
            u = linear_resolvent(Aa, mesh.cell_measures, lam, f)
            worst = min(worst, float(np.max(np.abs(f)) - np.max(np.abs(u))))
    res.metrics["linf_contraction_margin"] = worst
    res.verdict("linf_contraction", worst >= -contraction_tol, "contraction_tol", contraction_tol)
    res.mesh = mesh
    return res


# ---------------------------------------------------------------------------
# exponential stability


def fit_decay_rate(times, norms, tail_fraction: float = 0.5, floor: float = 0.0) -> float:
    """Least-squares slope of ``-log ||w(t)||`` over the last part of the run.

    Points below ``floor * norms[0]`` are dropped first: once the difference
    reaches the solver tolerance its logarithm is noise, not decay.
    """
    times = np.asarray(times, dtype=float)
    norms = np.asarray(norms, dtype=float)
    keep = norms > floor * norms[0] if norms.size and floor > 0 else np.ones(norms.size, bool)
    # the resolved part is a prefix; take its tail
    stop = int(np.argmin(keep)) if not keep.all() else norms.size
    times, norms = times[:stop], norms[:stop]
    start = int(math.floor(len(times) * (1.0 - tail_fraction)))
    t, y = times[start:], norms[start:]
    ok = y > 0
    if ok.sum() < 2:
        return math.nan
    return float(-np.polyfit(t[ok], np.log(y[ok]), 1)[0])


def stability_experiment(config: GeometryConfig, C_M: float = 1.0, w0=None, n: float = 2.0,
                         T: float = 1.5, formulation: str = "pme1", n_t: int = 128,
                         n_theta: int = 128, dt: float = 0.01, ball_fraction: float = 0.3,
                         rate_tol: float = 0.1, noise_floor: float = 1e-8,
                         **solver_kw) -> ExperimentResult:
    """Decay of a perturbation of the constant state ``C_M``.

    The state ``C_M + w`` is evolved with the Dirichlet trace held at ``C_M``
    (only ``w`` sees the ghost-zero singular boundary); the reference trace
    starts from the unperturbed datum. The decay rate of ``||w - w_ref||_2`` is
    compared with ``|C_M|^(n-1) lam_min`` (times ``n`` for ``pme1``).
    """
    if C_M == 0:
        raise StabilityError("C_M must be nonzero")
    if formulation not in ("pme1", "pme_div"):
        raise ValueError(f"unknown formulation {formulation!r}")
    mesh = build_mesh(config, n_t, n_theta)
    if w0 is None:
        w0 = gaussian_bump(mesh, (0.5 * config.length, 0.5 * config.circumference), 0.2)
        w0 *= 0.1 / w0.max()
    elif callable(w0):
        w0 = w0(mesh)
    w0 = np.asarray(w0, dtype=float)
    sup = float(np.max(np.abs(w0)))
    if sup > ball_fraction * abs(C_M):
        raise StabilityError(f"||w0||_inf = {sup:.4g} exceeds {ball_fraction} |C_M| = {ball_fraction * abs(C_M):.4g}")
    res = ExperimentResult("stability", digest({"geometry": _geom_dict(config), "C_M": C_M, "n": n,
                                                "T": T, "formulation": formulation, "n_t": n_t,
                                                "n_theta": n_theta, "dt": dt,
                                                "w0": hashlib.sha256(w0.tobytes()).hexdigest()}))
    A = assemble_divergence_form(mesh)
    lam_min = smallest_eigenpair(A, mesh.cell_measures, tol=1e-11).value
    scale = 1.0 if formulation == "pme1" else 1.0 / n
    partition = TimePartition.with_step(T, dt)
    trace = evolve(mesh, w0, n, partition, A, offset=C_M, time_scale=scale,
                   raise_on_failure=True, **solver_kw)
    ref = evolve(mesh, np.zeros_like(w0), n, partition, A, offset=C_M, time_scale=scale,
                 raise_on_failure=True, **solver_kw)
    diffs = [lp_norm(mesh, a - b, 2) for a, b in zip(trace.states, ref.states)]
    omega = fit_decay_rate(partition.breakpoints, diffs, floor=noise_floor)
    resolved = int(sum(d > noise_floor * diffs[0] for d in diffs)) if diffs[0] > 0 else 0
    pred = (n if formulation == "pme1" else 1.0) * abs(C_M) ** (n - 1.0) * lam_min
    rel = abs(omega - pred) / pred if diffs[0] > 0 and math.isfinite(omega) else (
        0.0 if diffs[0] == 0 else math.inf)
    # implicit Euler damps a mode of rate w by 1/(1 + dt w) per step
    omega_corrected = (math.exp(omega * dt) - 1.0) / dt if math.isfinite(omega) else omega
    res.metrics.update(lambda_min=lam_min, fitted_rate=omega, predicted_rate=pred,
                       relative_rate_error=rel, step_corrected_rate=omega_corrected,
                       w0_sup=sup, initial_difference=diffs[0], final_difference=diffs[-1],
                       resolved_steps=resolved)
    if diffs[0] == 0.0:
        res.metrics["fitted_rate"] = None
        res.verdict("difference_vanishes", all(d == 0.0 for d in diffs), "rate_tol", rate_tol)
    else:
        res.verdict("decay_rate", rel <= rate_tol, "rate_tol", rate_tol)
    res.tables["difference"] = (("step", "t", "l2_difference"),
                                [(i, t, d) for i, (t, d) in enumerate(zip(partition.breakpoints, diffs))])
    res.notes.append("constant states are not in the Dirichlet space of the discrete operator; "
                     "the trace is held at C_M on the singular faces and only the difference to "
                     "the reference trace is analysed")
    res.trace = trace
    res.mesh = mesh
    return res


# ---------------------------------------------------------------------------
# maximum principle and L1 probes


def max_principle_sweep(config: GeometryConfig, lam_grid=(0.01, 0.1, 1.0, 10.0, 1000.0),
                        corpus_size: int = 100, seed: int = 0, n_t: int = 32, n_theta: int = 32,
                        tol: float = 1e-10) -> ExperimentResult:
    """``sup (M + lam K)^-1 M f <= max(0, sup f)`` plus its mirror and positivity."""
    mesh = build_mesh(config, n_t, n_theta)
    A = assemble_divergence_form(mesh)
    res = ExperimentResult("max_principle", digest({"geometry": _geom_dict(config),
                                                    "lam_grid": list(lam_grid), "seed": seed,
                                                    "corpus_size": corpus_size, "n_t": n_t,
                                                    "n_theta": n_theta}))
    corpus = field_corpus(mesh, corpus_size, seed)
    rows = []
    worst_sup = worst_pos = -math.inf
    for lam in lam_grid:
        wl_sup = wl_pos = -math.inf
        for f in corpus:
            u = linear_resolvent(A, mesh.cell_measures, lam, f)
            v_sup = max(float(u.max()) - max(0.0, float(f.max())),
                        min(0.0, float(f.min())) - float(u.min()))
            fp = np.maximum(f, 0.0)
            up = linear_resolvent(A, mesh.cell_measures, lam, fp)
            v_pos = -float(up.min())
            wl_sup, wl_pos = max(wl_sup, v_sup), max(wl_pos, v_pos)
        rows.append((lam, wl_sup, wl_pos))
        worst_sup, worst_pos = max(worst_sup, wl_sup), max(worst_pos, wl_pos)
    res.tables["sweep"] = (("lambda", "worst_sup_violation", "worst_positivity_violation"), rows)
    res.metrics.update(worst_sup_violation=worst_sup, worst_positivity_violation=worst_pos)
    res.verdict("sup_bound", worst_sup <= tol, "violation_tol", tol)
    res.verdict("positivity", worst_pos <= tol, "violation_tol", tol)
    res.mesh = mesh
    return res


def l1_bound_probe(config: GeometryConfig, sample_size: int = 200, seed: int = 0, n_t: int = 32,
                   n_theta: int = 32, margin: float = 1e-6) -> ExperimentResult:
    """Empirical ``alpha = inf ||A u||_1 / ||u||_1`` over seeded fields."""
    mesh = build_mesh(config, n_t, n_theta)
    A = assemble_divergence_form(mesh)
    m = mesh.cell_measures
    res = ExperimentResult("l1_bound", digest({"geometry": _geom_dict(config), "seed": seed,
                                               "sample_size": sample_size, "n_t": n_t,
                                               "n_theta": n_theta}))
    rng = np.random.default_rng(seed)
    kinds = ("mixed", "bump", "indicator", "smooth")
    samples = [random_field(mesh, rng, kinds[i % 4]) for i in range(sample_size)]
    eig = smallest_eigenpair(A, m, tol=1e-10)
    samples.append(eig.vector)
    samples.append(np.ones(mesh.n_cells))
    ratios = [l1_ratio(mesh, A, u) for u in samples if np.any(u)]
    alpha = float(min(ratios))
    res.metrics.update(alpha=alpha, ground_state_ratio=ratios[-2], lambda_min=eig.value)
    res.verdict("alpha_positive", alpha > margin, "alpha_margin", margin)
    res.mesh = mesh
    return res


def l1_ratio(mesh: SingularMesh, A, u) -> float:
    """``||M^-1 K u||_{1,M} / ||u||_{1,M}`` = ``sum |K u| / sum m |u|``."""
    u = np.asarray(u, dtype=float)
    return float(np.sum(np.abs(A.matrix @ u)) / np.sum(mesh.cell_measures * np.abs(u)))


def accretivity_experiment(config: GeometryConfig, n: float = 2.0,
                           lam_grid=(0.01, 0.1, 1.0, 10.0), pairs: int = 50, seed: int = 0,
                           n_t: int = 16, n_theta: int = 16, tol: float = 1e-10) -> ExperimentResult:
    mesh = build_mesh(config, n_t, n_theta)
    rng = np.random.default_rng(seed)
    kinds = ("mixed", "bump", "smooth")
    sample = [(random_field(mesh, rng, kinds[i % 3]), random_field(mesh, rng, kinds[(i + 1) % 3]))
              for i in range(pairs)]
    rep = accretivity_probe(mesh, n, lam_grid, sample, tolerance=tol)
    res = ExperimentResult("accretivity", digest({"geometry": _geom_dict(config), "n": n,
                                                  "lam_grid": list(lam_grid), "pairs": pairs,
                                                  "seed": seed, "n_t": n_t, "n_theta": n_theta}))
    res.metrics.update(min_margin=rep.min_margin, margins={str(k): v for k, v in rep.margins.items()})
    res.verdict("accretive", rep.passed, "margin_tol", tol)
    res.mesh = mesh
    return res


def contraction_experiment(config: GeometryConfig, n: float = 2.0, pairs: int = 20, steps: int = 100,
                           dt: float = 0.01, seed: int = 0, n_t: int = 64, n_theta: int = 64,
                           tol: float = 1e-8, jobs: int = 1, **solver_kw) -> ExperimentResult:
    """L1 distance between traces from random initial pairs, checked per step."""
    mesh = build_mesh(config, n_t, n_theta)
    A = assemble_divergence_form(mesh)
    rng = np.random.default_rng(seed)
    data = [(random_field(mesh, rng, "smooth"), random_field(mesh, rng, "smooth")) for _ in range(pairs)]
    partition = TimePartition.uniform(steps * dt, steps)
    res = ExperimentResult("contraction", digest({"geometry": _geom_dict(config), "n": n,
                                                  "pairs": pairs, "steps": steps, "dt": dt,
                                                  "seed": seed, "n_t": n_t, "n_theta": n_theta}))

    def run(u0):
        return evolve(mesh, u0, n, partition, A, raise_on_failure=True, **solver_kw)

    flat = [u for pair in data for u in pair]
    if jobs > 1:
        from concurrent.futures import ThreadPoolExecutor
        with ThreadPoolExecutor(max_workers=jobs) as ex:
            traces = list(ex.map(run, flat))
    else:
        traces = [run(u) for u in flat]
    rows = []
    worst_increase = -math.inf
    all_ok = True
    for k in range(pairs):
        rep = contraction_monitor(mesh, traces[2 * k], traces[2 * k + 1], tolerance=tol)
        inc = max((b - a for a, b in zip(rep.distances, rep.distances[1:])), default=0.0)
        worst_increase = max(worst_increase, inc)
        all_ok &= rep.passed
        rows.append((k, rep.distances[0], rep.distances[-1], inc))
    res.tables["pairs"] = (("pair", "d0", "dN", "max_step_increase"), rows)
    res.metrics.update(worst_step_increase=worst_increase)
    res.verdict("l1_contraction", all_ok, "contraction_tol", tol)
    res.mesh = mesh
    return res


def positivity_experiment(config: GeometryConfig, n: float = 2.0, steps: int = 50, dt: float = 0.01,
                          n_t: int = 32, n_theta: int = 32, u0=None,
                          tol: float = 1e-10) -> ExperimentResult:
    mesh = build_mesh(config, n_t, n_theta)
    if u0 is None:
        u0 = gaussian_bump(mesh, (0.5 * config.length, 0.5 * config.circumference), 0.15, 1.0)
    trace = evolve(mesh, u0, n, TimePartition.uniform(steps * dt, steps), raise_on_failure=True)
    rep = positivity_and_mass_report(mesh, trace, tol)
    res = ExperimentResult("positivity", digest({"geometry": _geom_dict(config), "n": n,
                                                 "steps": steps, "dt": dt}))
    res.metrics.update(min_value=rep.min_value, mass_drift=rep.mass_drift,
                       initial_mass=rep.masses[0], final_mass=rep.masses[-1])
    res.verdict("positivity", rep.min_value >= -tol, "positivity_tol", tol)
    if mesh.has_dirichlet:
        res.verdict("mass_nonincreasing", rep.mass_nonincreasing, "mass_tol", tol)
    else:
        res.verdict("mass_conserved", rep.mass_drift <= tol, "mass_tol", tol)
    res.trace = trace
    res.mesh = mesh
    return res


def refinement_experiment(config: GeometryConfig, n: float = 2.0, T: float = 0.5,
                          eps_list=(0.1, 0.05, 0.025, 0.0125), n_t: int = 32, n_theta: int = 32,
                          u0=None, ratio_max: float = 0.8, threshold: float = 1e-2) -> ExperimentResult:
    mesh = build_mesh(config, n_t, n_theta)
    if u0 is None:
        u0 = gaussian_bump(mesh, (0.5 * config.length, 0.5 * config.circumference), 0.15, 1.0)
    study = mild_convergence_study(mesh, u0, n, T, eps_list, threshold=threshold)
    res = ExperimentResult("refinement", digest({"geometry": _geom_dict(config), "n": n, "T": T,
                                                 "eps": list(eps_list), "n_t": n_t,
                                                 "n_theta": n_theta}))
    res.tables["gaps"] = (("eps", "gap_l1"), list(zip(study.eps[:-1], study.gaps)))
    res.metrics.update(gaps=study.gaps, ratios=study.ratios, cauchy=study.cauchy)
    res.verdict("cauchy", study.cauchy, "gap_threshold", threshold)
    res.verdict("gap_ratios", all(r <= ratio_max for r in study.ratios), "ratio_max", ratio_max)
    res.mesh = mesh
    return res
