"""Implicit (Crandall-Liggett) time stepping for ``u_t = Delta Phi(u)``."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .geometry import SingularMesh
from .linalg import ConvergenceError, SparseOperator
from .operators import assemble_divergence_form, lp_norm
from .resolvent import DEFAULT_DELTA_SCHEDULE, pme_resolvent_step

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class TimePartition:
    """Breakpoints ``0 = t_0 <= ... <= t_N = T`` with positive steps."""

    breakpoints: tuple

    def __post_init__(self):
        b = tuple(float(x) for x in self.breakpoints)
        if len(b) < 1 or b[0] != 0.0:
            raise ValueError("partition must start at 0")
        steps = np.diff(b)
        if np.any(steps <= 0):
            raise ValueError("partition steps must be positive")
        object.__setattr__(self, "breakpoints", b)

    @classmethod
    def uniform(cls, T: float, steps: int) -> "TimePartition":
        if not T > 0 or steps < 1:
            raise ValueError("need T > 0 and at least one step")
        return cls(tuple(np.linspace(0.0, T, steps + 1)))

    @classmethod
    def with_step(cls, T: float, eps: float) -> "TimePartition":
        """Uniform partition with step ``eps``; ``T / eps`` must be (nearly) an integer."""
        k = T / eps
        steps = int(round(k))
        if steps < 1 or abs(k - steps) > 1e-9 * max(1.0, k):
            raise ValueError(f"T = {T} is not a multiple of eps = {eps}")
        return cls.uniform(T, steps)

    def scaled(self, s: float) -> "TimePartition":
        return TimePartition(tuple(s * t for t in self.breakpoints))

    @property
    def T(self) -> float:
        return self.breakpoints[-1]

    @property
    def steps(self) -> np.ndarray:
        return np.diff(self.breakpoints)

    @property
    def N(self) -> int:
        return len(self.breakpoints) - 1

    @property
    def eps(self) -> float:
        return float(self.steps.max()) if self.N else 0.0


TRACE_COLUMNS = ("step", "t", "l1", "l2", "linf", "min", "max", "mass", "newton_iters")


@dataclass
class EvolutionTrace:
    partition: TimePartition
    states: list
    n: float
    diagnostics: list = field(default_factory=list)
    complete: bool = True
    error: Optional[str] = None

    def value_at(self, t: float) -> np.ndarray:
        """Right-continuous piecewise-constant interpolant: ``u_i`` on ``[t_i, t_{i+1})``."""
        b = self.partition.breakpoints
        if t < 0 or t > b[-1]:
            raise ValueError("time outside the partition")
        i = int(np.searchsorted(b, t, side="right")) - 1
        return self.states[min(i, len(self.states) - 1)]

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def rows(self) -> list:
        return [tuple(d[c] for c in TRACE_COLUMNS) for d in self.diagnostics]


def _step_record(mesh, i, t, u, iters) -> dict:
    m = mesh.cell_measures
    return {
        "step": i,
        "t": float(t),
        "l1": lp_norm(mesh, u, 1),
        "l2": lp_norm(mesh, u, 2),
        "linf": lp_norm(mesh, u, np.inf),
        "min": float(u.min()),
        "max": float(u.max()),
        "mass": float(np.sum(m * u)),
        "newton_iters": int(iters),
    }


def evolve(mesh: SingularMesh, u0, n: float, partition: TimePartition,
           A: Optional[SparseOperator] = None, *, offset: float = 0.0,
           time_scale: float = 1.0, delta_schedule: Sequence[float] = DEFAULT_DELTA_SCHEDULE,
           warm_start: bool = True, raise_on_failure: bool = False, **solver_kw) -> EvolutionTrace:
    """Apply ``u_i = (id + delta_i Acal)^-1 u_{i-1}`` along the partition.

    ``Acal(u) = -Delta Phi(u)`` (times ``time_scale``). With a warm start the
    first step runs the full delta continuation and later steps start from
    the previous ``v`` directly at ``delta = 0``. A solver failure ends the
    trace early with ``complete = False`` (or raises if asked to).
    """
    if not n >= 1:
        raise ValueError("the time stepper requires n >= 1")
    u = np.array(u0, dtype=float)
    if u.shape != (mesh.n_cells,) or not np.all(np.isfinite(u)):
        raise ValueError("initial datum must be a finite field on the mesh")
    A = assemble_divergence_form(mesh) if A is None else A
    trace = EvolutionTrace(partition, [u.copy()], n, [_step_record(mesh, 0, 0.0, u, 0)])
    v = None
    for i, dt in enumerate(partition.steps, start=1):
        sched = (0.0,) if (warm_start and v is not None) else delta_schedule
        try:
            res = pme_resolvent_step(mesh, A, u, dt * time_scale, n, offset=offset,
                                     v0=v if warm_start else None, delta_schedule=sched,
                                     **solver_kw)
        except ConvergenceError as exc:
            log.warning("step %d failed: %s", i, exc)
            trace.complete = False
            trace.error = str(exc)
            if raise_on_failure:
                exc.trace = trace
                raise
            break
        u, v = res.u, res.v
        trace.states.append(u.copy())
        trace.diagnostics.append(_step_record(mesh, i, partition.breakpoints[i], u, res.newton_iters))
    return trace


@dataclass
class ConvergenceStudy:
    eps: list
    gaps: list
    ratios: list
    cauchy: bool
    threshold: float
    finals: list = field(default_factory=list, repr=False)


def mild_convergence_study(mesh: SingularMesh, u0, n: float, T: float, eps_list: Sequence[float],
                           threshold: float = 1e-2, A: Optional[SparseOperator] = None,
                           **kw) -> ConvergenceStudy:
    """Final-time L1 gaps ``||u_eps(T) - u_{eps'}(T)||_1`` between successive eps."""
    eps_list = [float(e) for e in eps_list]
    if any(b >= a for a, b in zip(eps_list, eps_list[1:])):
        raise ValueError("eps_list must be strictly decreasing")
    A = assemble_divergence_form(mesh) if A is None else A
    finals = []
    for e in eps_list:
        tr = evolve(mesh, u0, n, TimePartition.with_step(T, e), A, raise_on_failure=True, **kw)
        finals.append(tr.final)
    gaps = [lp_norm(mesh, a - b, 1) for a, b in zip(finals, finals[1:])]
    ratios = [g1 / g0 if g0 > 0 else 0.0 for g0, g1 in zip(gaps, gaps[1:])]
    nonincreasing = all(g1 <= g0 for g0, g1 in zip(gaps, gaps[1:]))
    cauchy = bool(nonincreasing and (not gaps or gaps[-1] <= threshold))
    return ConvergenceStudy(eps_list, gaps, ratios, cauchy, threshold, finals)


@dataclass
class ContractionReport:
    distances: list
    nonincreasing: bool
    bounded_by_initial: bool
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.nonincreasing and self.bounded_by_initial


def contraction_monitor(mesh: SingularMesh, trace1: EvolutionTrace, trace2: EvolutionTrace,
                        tolerance: float = 1e-8) -> ContractionReport:
    """Per-step L1 distances between two traces and the contraction verdicts."""
    if trace1.partition != trace2.partition or trace1.n != trace2.n:
        raise ValueError("traces must share partition and exponent")
    if len(trace1.states) != len(trace2.states):
        raise ValueError("traces have different lengths")
    d = [lp_norm(mesh, a - b, 1) for a, b in zip(trace1.states, trace2.states)]
    noninc = all(b <= a + tolerance for a, b in zip(d, d[1:]))
    bounded = all(x <= d[0] + tolerance for x in d)
    return ContractionReport(d, noninc, bounded, tolerance)


@dataclass
class PositivityReport:
    min_value: float
    masses: list
    mass_nonincreasing: bool
    mass_drift: float


def positivity_and_mass_report(mesh: SingularMesh, trace: EvolutionTrace,
                               tolerance: float = 1e-10) -> PositivityReport:
    masses = [float(np.sum(mesh.cell_measures * u)) for u in trace.states]
    mins = min(float(u.min()) for u in trace.states)
    noninc = all(b <= a + tolerance for a, b in zip(masses, masses[1:]))
    drift = max(abs(x - masses[0]) for x in masses)
    return PositivityReport(mins, masses, noninc, drift)
