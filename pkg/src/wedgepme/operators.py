"""Two-point-flux finite-volume operators on a :class:`SingularMesh`.

The stiffness matrix ``K`` assembled here is ``M (-div(a grad .))`` with
``M`` the diagonal mass; it is a symmetric M-matrix. Dirichlet singular
faces use a ghost value 0 placed on the face, Neumann faces carry no flux.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp

from .geometry import DIRICHLET, INTERIOR, NEUMANN, SingularMesh
from .linalg import SparseOperator


class CoefficientError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Coefficient:
    """Per-face diffusion coefficient ``a = C_M + a_hat`` with ``inf a > 0``.

    ``decay_exponent`` (``vartheta < 0``) and ``decay_constant`` (``K``) are set
    for coefficients whose perturbation decays at the singular end,
    ``|a_hat| <= K rho^|vartheta|``.
    """

    values: np.ndarray
    a_min: float
    constant_part: float = 0.0
    decay_exponent: Optional[float] = None
    decay_constant: Optional[float] = None

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if not np.all(np.isfinite(v)):
            raise CoefficientError("coefficient has non-finite entries")
        if not self.a_min > 0:
            raise CoefficientError("a_min must be positive")
        if v.min() < self.a_min:
            raise CoefficientError(f"inf a = {v.min():.6g} violates a_min = {self.a_min:.6g}")
        object.__setattr__(self, "values", v)

    @property
    def perturbation(self) -> np.ndarray:
        return self.values - self.constant_part

    def decay_violation(self, mesh: SingularMesh) -> float:
        """max(|a_hat| - K rho^|vartheta|) over faces; <= 0 when the bound holds."""
        if self.decay_exponent is None:
            raise CoefficientError("coefficient carries no decay record")
        bound = self.decay_constant * mesh.face_rho ** abs(self.decay_exponent)
        return float(np.max(np.abs(self.perturbation) - bound))

    @classmethod
    def constant(cls, mesh: SingularMesh, value: float = 1.0) -> "Coefficient":
        return cls(np.full(mesh.n_faces, float(value)), a_min=float(value), constant_part=float(value))

    @classmethod
    def from_cells(cls, mesh: SingularMesh, cell_values, a_min: Optional[float] = None,
                   constant_part: float = 0.0, **kw) -> "Coefficient":
        face = mesh.face_average(cell_values)
        return cls(face, a_min=float(face.min()) if a_min is None else a_min,
                   constant_part=constant_part, **kw)


def _check_field(mesh: SingularMesh, u) -> np.ndarray:
    u = np.asarray(u, dtype=float)
    if u.shape != (mesh.n_cells,):
        raise ValueError(f"field of shape {u.shape} does not match mesh with {mesh.n_cells} cells")
    return u


def discrete_gradient(mesh: SingularMesh, u) -> np.ndarray:
    """Normal derivative across every face, oriented left -> right."""
    u = _check_field(mesh, u)
    L, R = mesh.face_left, mesh.face_right
    uL = np.where(L >= 0, u[np.maximum(L, 0)], 0.0)
    uR = np.where(R >= 0, u[np.maximum(R, 0)], 0.0)
    g = (uR - uL) / mesh.face_dist
    g[mesh.face_kind == NEUMANN] = 0.0
    return g


def discrete_divergence(mesh: SingularMesh, F) -> np.ndarray:
    """Net outward flux ``sum F * area`` per cell divided by the cell measure."""
    F = np.asarray(F, dtype=float)
    if F.shape != (mesh.n_faces,):
        raise ValueError("face field does not match mesh")
    flux = F * mesh.face_area
    out = np.zeros(mesh.n_cells)
    L, R = mesh.face_left, mesh.face_right
    np.add.at(out, L[L >= 0], flux[L >= 0])
    np.add.at(out, R[R >= 0], -flux[R >= 0])
    return out / mesh.cell_measures


def face_inner(mesh: SingularMesh, F, G) -> float:
    return float(np.sum(mesh.face_volumes * np.asarray(F) * np.asarray(G)))


def cell_inner(mesh: SingularMesh, u, v) -> float:
    return float(np.sum(mesh.cell_measures * np.asarray(u) * np.asarray(v)))


def assemble_divergence_form(mesh: SingularMesh, a: Optional[Coefficient] = None) -> SparseOperator:
    """Stiffness matrix of ``-div(a grad .)`` paired with the mass vector."""
    if a is None:
        a = Coefficient.constant(mesh, 1.0)
    if a.values.shape != (mesh.n_faces,):
        raise CoefficientError("coefficient does not match mesh faces")
    if a.values.min() < a.a_min or not a.a_min > 0:
        raise CoefficientError("coefficient violates its lower bound")
    trans = a.values * mesh.face_area / mesh.face_dist
    L, R, kind = mesh.face_left, mesh.face_right, mesh.face_kind
    n = mesh.n_cells

    inner = kind == INTERIOR
    li, ri, ti = L[inner], R[inner], trans[inner]
    dir_ = kind == DIRICHLET
    dcell = np.where(L[dir_] >= 0, L[dir_], R[dir_])

    diag = np.zeros(n)
    np.add.at(diag, li, ti)
    np.add.at(diag, ri, ti)
    np.add.at(diag, dcell, trans[dir_])
    rows = np.concatenate([np.arange(n), li, ri])
    cols = np.concatenate([np.arange(n), ri, li])
    vals = np.concatenate([diag, -ti, -ti])
    K = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    K.sum_duplicates()
    return SparseOperator(K, np.array(mesh.cell_measures))


def cell_gradient_magnitude(mesh: SingularMesh, u) -> np.ndarray:
    """|grad u| per cell from the mean of the two face derivatives per axis."""
    g = discrete_gradient(mesh, u)
    out = np.zeros(mesh.n_cells)
    for axis in (0, 1):
        sel = mesh.face_axis == axis
        if not np.any(sel):
            continue
        acc = np.zeros(mesh.n_cells)
        cnt = np.zeros(mesh.n_cells)
        for side in (mesh.face_left[sel], mesh.face_right[sel]):
            ok = side >= 0
            np.add.at(acc, side[ok], g[sel][ok])
            np.add.at(cnt, side[ok], 1.0)
        comp = acc / np.maximum(cnt, 1.0)
        out += comp**2
    return np.sqrt(out)


def lp_norm(mesh: SingularMesh, u, p: float) -> float:
    u = np.abs(np.asarray(u, dtype=float))
    if np.isinf(p):
        return float(u.max()) if u.size else 0.0
    return float(np.sum(mesh.cell_measures * u**p) ** (1.0 / p))


def weighted_norm(mesh: SingularMesh, u, k: int = 0, p: float = 2.0, vartheta: float = 0.0) -> float:
    """``(sum_{i<=k} ||rho^(vartheta+i) |grad^i u| ||_p^p)^(1/p)``; ``p = inf`` takes the max."""
    if k not in (0, 1):
        raise ValueError("weighted norms are implemented for k in {0, 1} only")
    if not (p >= 1):
        raise ValueError("p must be in [1, inf]")
    u = _check_field(mesh, u)
    terms = [mesh.rho**vartheta * np.abs(u)]
    if k == 1:
        terms.append(mesh.rho ** (vartheta + 1) * cell_gradient_magnitude(mesh, u))
    if np.isinf(p):
        return float(max(t.max() for t in terms))
    total = sum(float(np.sum(mesh.cell_measures * t**p)) for t in terms)
    return total ** (1.0 / p)


def coefficient_from_state(mesh: SingularMesh, u_star: float, u, n: float,
                           decay_exponent: Optional[float] = None) -> Coefficient:
    """PME coefficient ``|u_star + u|^(n-1)`` on faces (``u`` averaged to faces).

    Requires ``||u||_inf < |u_star|``; then ``inf a >= (|u_star| - ||u||_inf)^(n-1)``
    for ``n >= 1`` (and the mirrored bound for ``n < 1``).
    """
    u = _check_field(mesh, u)
    sup = float(np.max(np.abs(u))) if u.size else 0.0
    if not sup < abs(u_star):
        raise CoefficientError(f"ball condition violated: ||u||_inf = {sup:.6g} >= |u_star| = {abs(u_star):.6g}")
    ubar = mesh.face_average(u)
    a = np.abs(u_star + ubar) ** (n - 1.0)
    cm = abs(u_star) ** (n - 1.0)
    lo = (abs(u_star) - sup) ** (n - 1.0) if n >= 1 else (abs(u_star) + sup) ** (n - 1.0)
    kw = {}
    if decay_exponent is not None:
        # |a_hat| <= Lip * |u|, Lip = (n-1) max(|u*|-sup, |u*|+sup)^(n-2)
        lip = abs(n - 1.0) * max((abs(u_star) - sup) ** (n - 2.0), (abs(u_star) + sup) ** (n - 2.0)) if n != 1 else 0.0
        ratio = np.max(np.abs(ubar) / mesh.face_rho ** abs(decay_exponent))
        kw = dict(decay_exponent=decay_exponent, decay_constant=float(lip * ratio) * (1 + 1e-12))
    return Coefficient(a, a_min=min(lo, float(a.min())), constant_part=cm, **kw)
