"""Sparse kernels: CSR operator wrapper, Jacobi-preconditioned CG and
inverse power iteration for the generalized problem ``A v = lam M v``."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import NamedTuple, Optional

import numpy as np
import scipy.sparse as sp


class ConvergenceError(RuntimeError):
    """An iterative solver hit its iteration cap or broke down."""

    def __init__(self, message: str, residual: float, iterations: int, history=None):
        super().__init__(f"{message} (iterations={iterations}, residual={residual:.3e})")
        self.residual = residual
        self.iterations = iterations
        self.history = list(history or [])


@dataclass(frozen=True)
class SparseOperator:
    """Symmetric CSR matrix with an optional diagonal mass vector."""

    matrix: sp.csr_matrix
    mass: Optional[np.ndarray] = None
    symmetric: bool = True

    def __post_init__(self):
        m = sp.csr_matrix(self.matrix)
        m.sort_indices()
        object.__setattr__(self, "matrix", m)
        if self.mass is not None:
            mass = np.asarray(self.mass, dtype=float)
            if mass.shape != (m.shape[0],):
                raise ValueError("mass vector does not match operator dimension")
            object.__setattr__(self, "mass", mass)

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @property
    def indptr(self) -> np.ndarray:
        return self.matrix.indptr

    @property
    def indices(self) -> np.ndarray:
        return self.matrix.indices

    @property
    def data(self) -> np.ndarray:
        return self.matrix.data

    def diagonal(self) -> np.ndarray:
        return self.matrix.diagonal()

    def __matmul__(self, x):
        return spmv(self, x)

    def __add__(self, other: "SparseOperator") -> "SparseOperator":
        return SparseOperator(self.matrix + other.matrix, self.mass, self.symmetric and other.symmetric)

    def scaled(self, s: float) -> "SparseOperator":
        return SparseOperator(self.matrix * s, self.mass, self.symmetric)

    def symmetry_defect(self) -> float:
        """max |A_ij - A_ji| relative to max |A|."""
        diff = abs(self.matrix - self.matrix.T)
        scale = abs(self.matrix).max() if self.matrix.nnz else 1.0
        return float(diff.max() / scale) if diff.nnz else 0.0

    def todense(self) -> np.ndarray:
        return self.matrix.toarray()


def spmv(A, x: np.ndarray) -> np.ndarray:
    """y = A x. CSR row-ordered accumulation, so results are reproducible."""
    mat = A.matrix if isinstance(A, SparseOperator) else A
    x = np.asarray(x, dtype=float)
    if x.shape[0] != mat.shape[1]:
        raise ValueError(f"dimension mismatch: operator {mat.shape}, vector {x.shape}")
    return mat @ x


class CGResult(NamedTuple):
    x: np.ndarray
    iterations: int
    residual: float


def solve_cg(A, b, tol: float = 1e-10, max_iter: Optional[int] = None,
             x0: Optional[np.ndarray] = None, diag: Optional[np.ndarray] = None) -> CGResult:
    """Jacobi-preconditioned conjugate gradients.

    Returns ``(x, iterations, residual)`` with ``||A x - b||_2 <= tol ||b||_2``.
    Raises :class:`ConvergenceError` carrying the last relative residual when
    ``max_iter`` is exceeded or the search direction degenerates.
    """
    mat = A.matrix if isinstance(A, SparseOperator) else sp.csr_matrix(A)
    b = np.asarray(b, dtype=float)
    n = b.shape[0]
    if mat.shape != (n, n):
        raise ValueError(f"dimension mismatch: operator {mat.shape}, rhs {b.shape}")
    if tol <= 0:
        raise ValueError("tol must be positive")
    if max_iter is None:
        max_iter = max(100, min(10 * n, 20000))
    d = mat.diagonal() if diag is None else np.asarray(diag, dtype=float)
    if np.any(d <= 0):
        raise ValueError("Jacobi preconditioner needs a positive diagonal")
    dinv = 1.0 / d

    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return CGResult(np.zeros(n), 0, 0.0)
    target = tol * bnorm

    x = np.zeros(n) if x0 is None else np.array(x0, dtype=float)
    r = b - mat @ x if x0 is not None else b.copy()
    rnorm = np.linalg.norm(r)
    if rnorm <= target:
        return CGResult(x, 0, rnorm / bnorm)
    z = dinv * r
    p = z.copy()
    rz = r @ z
    for it in range(1, max_iter + 1):
        q = mat @ p
        pq = p @ q
        if not pq > 0:
            raise ConvergenceError("CG breakdown: operator not positive definite on search space",
                                   rnorm / bnorm, it)
        alpha = rz / pq
        x += alpha * p
        r -= alpha * q
        rnorm = np.linalg.norm(r)
        if rnorm <= target:
            # guard against drift of the recursive residual
            true_r = np.linalg.norm(b - mat @ x)
            if true_r <= target:
                return CGResult(x, it, true_r / bnorm)
            # restart from the true residual
            r = b - mat @ x
            rnorm = true_r
            z = dinv * r
            rz = r @ z
            p = z.copy()
            continue
        z = dinv * r
        rz_new = r @ z
        p = z + (rz_new / rz) * p
        rz = rz_new
    raise ConvergenceError("CG did not converge", rnorm / bnorm, max_iter)


@dataclass
class EigenResult:
    value: float
    vector: np.ndarray
    iterations: int = 0
    singular: bool = False
    history: list = field(default_factory=list)

    def __iter__(self):
        yield self.value
        yield self.vector


def _mass_norm(v, m):
    return float(np.sqrt(np.sum(m * v * v)))


def smallest_eigenpair(A, mass: Optional[np.ndarray] = None, tol: float = 1e-10,
                       max_iter: int = 500, cg_tol: Optional[float] = None,
                       v0: Optional[np.ndarray] = None) -> EigenResult:
    """Smallest eigenpair of ``A v = lam M v`` by inverse power iteration.

    ``A`` is symmetric positive semidefinite, ``M = diag(mass)``. If every row
    of ``A`` sums to zero the constants span the kernel (irreducible
    diffusion matrices are singular exactly then) and ``lam = 0`` is returned
    with ``singular=True``.
    """
    mat = A.matrix if isinstance(A, SparseOperator) else sp.csr_matrix(A)
    n = mat.shape[0]
    if mass is None:
        mass = A.mass if isinstance(A, SparseOperator) and A.mass is not None else np.ones(n)
    m = np.asarray(mass, dtype=float)
    scale = abs(mat).max() if mat.nnz else 1.0

    ones = np.ones(n)
    if np.max(np.abs(mat @ ones)) <= 1e-12 * scale * max(1.0, np.max(abs(mat).sum(axis=1))):
        v = ones / _mass_norm(ones, m)
        return EigenResult(0.0, v, 0, singular=True)

    if cg_tol is None:
        cg_tol = min(1e-8, max(tol * 1e-2, 1e-10))
    v = ones.copy() if v0 is None else np.array(v0, dtype=float)
    v /= _mass_norm(v, m)
    lam = float(v @ (mat @ v))
    history = [lam]
    x_guess = v / lam if lam > 0 else None
    for it in range(1, max_iter + 1):
        w, _, _ = solve_cg(mat, m * v, tol=cg_tol, x0=x_guess)
        wn = _mass_norm(w, m)
        if wn == 0.0:
            raise ConvergenceError("inverse iteration collapsed", float("nan"), it, history)
        v_new = w / wn
        lam_new = float(v_new @ (mat @ v_new))
        history.append(lam_new)
        v = v_new
        if lam_new <= 0:
            return EigenResult(0.0, v, it, singular=True, history=history)
        if abs(lam_new - lam) <= tol * abs(lam_new):
            return EigenResult(lam_new, v, it, history=history)
        lam = lam_new
        x_guess = v / lam
    raise ConvergenceError("inverse iteration did not converge",
                           abs(history[-1] - history[-2]) / abs(history[-1]), max_iter, history)


def dense_solve(A, b) -> np.ndarray:
    """Gaussian elimination on the dense matrix; a test oracle for n <= 200."""
    dense = A.todense() if isinstance(A, SparseOperator) else np.asarray(
        A.toarray() if sp.issparse(A) else A, dtype=float)
    if dense.shape[0] > 200:
        raise ValueError("dense oracle is limited to n <= 200")
    return np.linalg.solve(dense, np.asarray(b, dtype=float))
