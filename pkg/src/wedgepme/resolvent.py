"""Linear resolvent ``(M + lam K)^-1 M`` and the semilinear problem
``M beta(v) / lam + K v = M f`` with ``beta`` the inverse of
``Phi(x) = |x|^(n-1) x``; one implicit porous-medium step is such a solve.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .geometry import SingularMesh
from .linalg import ConvergenceError, SparseOperator, solve_cg
from .operators import assemble_divergence_form

DERIVATIVE_CAP = 1e12
DEFAULT_DELTA_SCHEDULE = (1e-2, 1e-6, 0.0)


def phi(x, n: float):
    x = np.asarray(x, dtype=float)
    return np.abs(x) ** (n - 1.0) * x


def beta(v, n: float):
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.abs(v) ** (1.0 / n)


def beta_reg(w, n: float, delta: float):
    """``sign(w) ((|w| + delta)^(1/n) - delta^(1/n))``."""
    w = np.asarray(w, dtype=float)
    return np.sign(w) * ((np.abs(w) + delta) ** (1.0 / n) - delta ** (1.0 / n))


def phi_reg(y, n: float, delta: float):
    """Inverse of :func:`beta_reg`: ``sign(y) ((|y| + delta^(1/n))^n - delta)``."""
    y = np.asarray(y, dtype=float)
    return np.sign(y) * ((np.abs(y) + delta ** (1.0 / n)) ** n - delta)


def beta_reg_prime(w, n: float, delta: float, cap: float = DERIVATIVE_CAP):
    w = np.asarray(w, dtype=float)
    base = np.abs(w) + delta
    with np.errstate(divide="ignore"):
        d = np.where(base > 0, base ** (1.0 / n - 1.0) / n, np.inf)
    return np.minimum(d, cap)


def _l1(x) -> float:
    return float(np.sum(np.abs(x)))


def linear_resolvent(A: SparseOperator, mass, lam: float, f, tol: float = 1e-12,
                     x0: Optional[np.ndarray] = None) -> np.ndarray:
    """Solve ``(M + lam A) u = M f`` by CG."""
    if not lam > 0:
        raise ValueError("lam must be positive")
    m = np.asarray(mass if mass is not None else A.mass, dtype=float)
    f = np.asarray(f, dtype=float)
    mat = A.matrix * lam + sp.diags(m)
    return solve_cg(mat, m * f, tol=tol, x0=x0).x


@dataclass
class SemilinearProblem:
    """``M beta(v + s)/lam - M beta(s)/lam + K v = M f`` with ``s = Phi(offset)``.

    ``offset = 0`` is the plain problem; a nonzero offset linearizes around
    the constant state ``offset`` (used by the stability experiment).
    """

    mesh: SingularMesh
    lam: float
    f: np.ndarray
    n: float = 2.0
    delta_schedule: Sequence[float] = DEFAULT_DELTA_SCHEDULE
    residual_tol: float = 1e-10
    newton_max_iter: int = 60
    operator: Optional[SparseOperator] = None
    offset: float = 0.0
    v0: Optional[np.ndarray] = None
    cg_tol: float = 1e-11
    stage_tol: float = 1e-6

    def __post_init__(self):
        if not self.lam > 0:
            raise ValueError("lam must be positive")
        if not self.n >= 1:
            raise ValueError("n must be >= 1")
        sched = [float(d) for d in self.delta_schedule]
        if not sched or any(d < 0 for d in sched) or sched[-1] > 1e-10:
            raise ValueError("delta schedule must be nonnegative and end at <= 1e-10")
        self.delta_schedule = tuple(sched)
        self.f = np.asarray(self.f, dtype=float)
        if self.f.shape != (self.mesh.n_cells,):
            raise ValueError("rhs does not match mesh")
        if self.operator is None:
            self.operator = assemble_divergence_form(self.mesh)


@dataclass
class SemilinearResult:
    v: np.ndarray
    u: np.ndarray
    newton_iters: int
    residual_l1: float
    history: list = field(default_factory=list)
    delta_schedule: tuple = ()
    derivative_cap: float = DERIVATIVE_CAP
    cg_iters: int = 0

    def diagnostics(self, lam: float, n: float, f) -> dict:
        fmax = float(np.max(f)) if np.size(f) else 0.0
        fmin = float(np.min(f)) if np.size(f) else 0.0
        # sup u <= max(0, lam sup f) and inf u >= min(0, lam inf f)
        upper = max(0.0, lam * fmax)
        lower = min(0.0, lam * fmin)
        margin = min(upper - float(self.u.max()), float(self.u.min()) - lower)
        return {
            "lambda": lam,
            "n": n,
            "delta_schedule": list(self.delta_schedule),
            "newton_iters": self.newton_iters,
            "residual_l1": self.residual_l1,
            "max_principle_margin": margin,
        }


def brezis_strauss_solve(problem: SemilinearProblem) -> SemilinearResult:
    """Damped Newton with delta-continuation for the semilinear resolvent.

    Each stage solves ``G(v) = M beta_delta(v + s)/lam - M beta_delta(s)/lam
    + K v - M f = 0``; the Jacobian ``K + diag(M beta_delta'/lam)`` is SPD so
    the Newton systems go to CG. The correction ``dv`` is applied through the
    state ``u = beta_delta(v + s) - beta_delta(s)`` as ``u + beta_delta' dv``
    and mapped back, which keeps the iteration stable where ``beta`` is steep
    (near ``v = 0``). Armijo backtracking on ``||G||_1``. Only the final
    stage (delta ~ 0) is held to ``residual_tol * max(1, ||f||_1)``.
    """
    p = problem
    mesh, K = p.mesh, p.operator.matrix
    m = np.asarray(mesh.cell_measures)
    lam, n = p.lam, p.n
    mf = m * p.f
    s = float(phi(p.offset, n))
    scale = max(1.0, float(np.sum(m * np.abs(p.f))))
    target = p.residual_tol * scale

    if not np.any(p.f) and p.v0 is None:
        z = np.zeros(mesh.n_cells)
        return SemilinearResult(z, z.copy(), 0, 0.0, [0.0], p.delta_schedule)

    v = np.zeros(mesh.n_cells) if p.v0 is None else np.array(p.v0, dtype=float)
    total_iters = 0
    total_cg = 0
    history: list = []
    for stage, delta in enumerate(p.delta_schedule):
        final = stage == len(p.delta_schedule) - 1
        stage_target = target if final else max(target, p.stage_tol * scale)
        b0 = float(beta_reg(s, n, delta))

        def to_state(w):
            return beta_reg(w + s, n, delta) - b0

        def from_state(y):
            return phi_reg(y + b0, n, delta) - s

        def residual(w):
            return m * to_state(w) / lam + K @ w - mf

        G = residual(v)
        res = _l1(G)
        history.append(res)
        stalled = 0
        while res > stage_target:
            if total_iters >= p.newton_max_iter * len(p.delta_schedule) or stalled >= 3:
                raise ConvergenceError("Newton stagnation in semilinear solve", res, total_iters, history)
            dbeta = beta_reg_prime(v + s, n, delta)
            J = K + sp.diags(m * dbeta / lam)
            # inexact Newton: loose inner solves far from the target
            eta = min(1e-3, max(p.cg_tol, 0.1 * stage_target / res))
            step, it_cg, _ = solve_cg(J, -G, tol=eta, diag=J.diagonal())
            total_cg += it_cg
            y = to_state(v)
            dy = dbeta * step
            t = 1.0
            best = None
            for _ in range(40):
                v_try = from_state(y + t * dy)
                G_try = residual(v_try)
                r_try = _l1(G_try)
                if best is None or r_try < best[2]:
                    best = (v_try, G_try, r_try)
                if r_try <= (1.0 - 1e-4 * t) * res:
                    break
                t *= 0.5
            total_iters += 1
            if best[2] < res:
                stalled = 0 if best[2] <= (1.0 - 1e-4 * t) * res else stalled + 1
                v, G, res = best
            else:
                # the correction has hit rounding level; nothing more to gain
                stalled += 1
                if res > stage_target:
                    raise ConvergenceError("Newton stagnation in semilinear solve", res,
                                           total_iters, history)
            history.append(res)
    u = beta(v + s, n) - float(beta(s, n)) if s != 0.0 else beta(v, n)
    return SemilinearResult(v, np.asarray(u), total_iters, res, history, p.delta_schedule,
                            DERIVATIVE_CAP, total_cg)


def pme_resolvent_step(mesh: SingularMesh, A: Optional[SparseOperator], w_prev, dt: float,
                       n: float, *, offset: float = 0.0, v0=None, **kw) -> SemilinearResult:
    """One implicit step ``w + dt M^-1 K Phi(w) = w_prev`` via the semilinear solve.

    With ``offset = c`` the step is taken for ``c + w`` with the Dirichlet trace
    held at ``c`` (only ``w`` sees the ghost-zero boundary).
    """
    if not dt > 0:
        raise ValueError("time step must be positive")
    w_prev = np.asarray(w_prev, dtype=float)
    prob = SemilinearProblem(mesh, dt, w_prev / dt, n, operator=A, offset=offset, v0=v0, **kw)
    return brezis_strauss_solve(prob)


def pme_operator_apply(A: SparseOperator, x, n: float, offset: float = 0.0) -> np.ndarray:
    """``K (Phi(offset + x) - Phi(offset))``: the mass-weighted PME operator."""
    x = np.asarray(x, dtype=float)
    return A.matrix @ (phi(offset + x, n) - phi(offset, n))


@dataclass
class AccretivityReport:
    min_margin: float
    margins: dict
    passed: bool
    tolerance: float = 1e-10


def accretivity_probe(mesh: SingularMesh, n: float, lam_grid: Sequence[float],
                      sample_pairs: Sequence[tuple], A: Optional[SparseOperator] = None,
                      tolerance: float = 1e-10) -> AccretivityReport:
    """Evaluate ``||(id + lam Acal) x1 - (id + lam Acal) x2||_1 - ||x1 - x2||_1``.

    ``Acal(u) = M^-1 K Phi(u)``; L1 norms are mass weighted, so the left side is
    ``sum |M e + lam K (Phi(x1) - Phi(x2))|``.
    """
    A = assemble_divergence_form(mesh) if A is None else A
    m = np.asarray(mesh.cell_measures)
    margins = {}
    worst = np.inf
    for lam in lam_grid:
        ms = []
        for x1, x2 in sample_pairs:
            x1 = np.asarray(x1, dtype=float)
            x2 = np.asarray(x2, dtype=float)
            e = x1 - x2
            lhs = _l1(m * e + lam * (A.matrix @ (phi(x1, n) - phi(x2, n))))
            rhs = _l1(m * e)
            ms.append(lhs - rhs)
        margins[float(lam)] = float(min(ms)) if ms else 0.0
        worst = min(worst, margins[float(lam)])
    worst = float(worst) if np.isfinite(worst) else 0.0
    return AccretivityReport(worst, margins, worst >= -tolerance, tolerance)
