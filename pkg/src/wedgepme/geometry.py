"""Cusp characteristics, singularity functions and cell-centred meshes for
the wedge cylinder and the slit torus.

Meshes live in stretched coordinates ``(t, theta)`` where the wedge metric
is flat, so the singular end shows up only as a Dirichlet boundary at
``t = 0`` together with the weight ``rho``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Optional, Sequence

import numpy as np


class GeometryError(ValueError):
    """Invalid geometry parameters or an unusable singularity function."""


class FaceKind(str, Enum):
    INTERIOR = "interior"
    DIRICHLET_SINGULAR = "dirichlet_singular"
    NEUMANN_OUTER = "neumann_outer"


# integer codes used in the face arrays
INTERIOR, DIRICHLET, NEUMANN = 0, 1, 2
_FACE_NAMES = {INTERIOR: FaceKind.INTERIOR, DIRICHLET: FaceKind.DIRICHLET_SINGULAR,
               NEUMANN: FaceKind.NEUMANN_OUTER}


# ---------------------------------------------------------------------------
# cusp characteristics


@dataclass(frozen=True)
class CuspCharacteristic:
    """Profile ``R`` on ``(0, 1]`` with derivative ``dR``."""

    kind: str
    R: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    dR: Callable[[np.ndarray], np.ndarray] = field(repr=False)
    params: dict = field(default_factory=dict)

    def __call__(self, t):
        return self.R(np.asarray(t, dtype=float))

    def derivative(self, t):
        return self.dR(np.asarray(t, dtype=float))


def _power(k: float):
    def R(t):
        return np.power(t, k)

    def dR(t):
        return k * np.power(t, k - 1.0)

    return R, dR


def _tabulated(samples):
    ts = np.array([s[0] for s in samples], dtype=float)
    rs = np.array([s[1] for s in samples], dtype=float)
    slopes = np.diff(rs) / np.diff(ts)
    # below the first sample: power law through the first two samples
    expo = math.log(rs[1] / rs[0]) / math.log(ts[1] / ts[0])
    t0, r0 = ts[0], rs[0]

    def R(t):
        t = np.asarray(t, dtype=float)
        out = np.interp(t, ts, rs)
        low = t < t0
        if np.any(low):
            out = np.where(low, r0 * np.power(np.where(low, t, t0) / t0, expo), out)
        return out

    def dR(t):
        t = np.asarray(t, dtype=float)
        idx = np.clip(np.searchsorted(ts, t, side="right") - 1, 0, len(slopes) - 1)
        out = slopes[idx]
        low = t < t0
        if np.any(low):
            tl = np.where(low, t, t0)
            out = np.where(low, expo * r0 / t0 * np.power(tl / t0, expo - 1.0), out)
        return out

    return R, dR, expo


def make_cusp_characteristic(kind: str, params: Optional[dict] = None, *,
                             check: bool = True) -> CuspCharacteristic:
    """Build a cusp profile.

    kinds: ``cone`` (``R(t) = t``), ``power`` (``R(t) = t**k``, ``k >= 1``)
    and ``tabulated`` (piecewise linear through ``samples``; below the first
    sample the profile continues as the power law through the first two
    samples). ``check=False`` skips the ``k >= 1`` guard so that non-cusp
    profiles can still be built and classified.
    """
    params = dict(params or {})
    if kind == "cone":
        R, dR = _power(1.0)
        return CuspCharacteristic("cone", R, dR, {})
    if kind == "power":
        if "k" not in params:
            raise GeometryError("power cusp needs exponent k")
        k = float(params["k"])
        if check and not k >= 1.0:
            raise GeometryError(f"power cusp requires k >= 1, got k={k}")
        if k <= 0:
            raise GeometryError(f"power exponent must be positive, got k={k}")
        R, dR = _power(k)
        return CuspCharacteristic("power", R, dR, {"k": k})
    if kind == "tabulated":
        samples = sorted((float(a), float(b)) for a, b in params.get("samples", []))
        if len(samples) < 2:
            raise GeometryError("tabulated cusp needs at least two samples")
        ts = [s[0] for s in samples]
        if any(t <= 0 or t > 1 for t in ts) or len(set(ts)) != len(ts):
            raise GeometryError("tabulated sample abscissae must be distinct and lie in (0, 1]")
        if any(r <= 0 for _, r in samples):
            raise GeometryError("tabulated samples must be strictly positive")
        if ts[-1] != 1.0 or abs(samples[-1][1] - 1.0) > 1e-12:
            raise GeometryError("tabulated profile must end at (1, 1)")
        R, dR, expo = _tabulated(samples)
        return CuspCharacteristic("tabulated", R, dR,
                                  {"samples": samples, "tail_exponent": expo})
    raise GeometryError(f"unknown cusp kind {kind!r}")


@dataclass
class ValidationReport:
    endpoints: bool
    divergent_integral: bool
    bounded_derivative: bool
    uniformly_mild: bool
    classification: str
    fitted_c: float
    tail_exponent: float
    integrals: list

    @property
    def failed_conditions(self) -> list:
        names = [("i", self.endpoints), ("ii", self.divergent_integral),
                 ("iii", self.bounded_derivative)]
        out = [n for n, ok in names if not ok]
        if self.classification != "not_cusp" and not self.uniformly_mild:
            out.append("iv")
        return out

    def as_dict(self) -> dict:
        return {
            "endpoints": self.endpoints,
            "divergent_integral": self.divergent_integral,
            "bounded_derivative": self.bounded_derivative,
            "uniformly_mild": self.uniformly_mild,
            "classification": self.classification,
            "fitted_c": self.fitted_c,
            "tail_exponent": self.tail_exponent,
            "failed_conditions": self.failed_conditions,
        }


_EPS_EXPONENTS = np.arange(4, 21)


def _inverse_profile_integral(R: CuspCharacteristic, eps: float, quad_points: int) -> float:
    # int_eps^1 dt / R(t) = int_{log eps}^0 t / R(t) ds with t = e^s
    x, w = np.polynomial.legendre.leggauss(quad_points)
    a = math.log(eps)
    s = 0.5 * a * (1.0 - x)
    t = np.exp(s)
    return float(0.5 * (-a) * np.sum(w * t / R(t)))


def validate_cusp_characteristic(R: CuspCharacteristic, quad_points: int = 128) -> ValidationReport:
    """Check the cusp conditions numerically and classify the profile.

    The divergence of ``int dt/R`` is read off the dyadic increments of
    ``I(eps) = int_eps^1 dt/R`` for ``eps = 2^-4 .. 2^-20``: each increment
    divided by ``log 2`` is a local growth rate ``c_k`` of ``I`` against
    ``log(1/eps)``. The integral diverges when these rates stay bounded away
    from zero, i.e. their fitted power-law decay exponent is (numerically)
    zero or negative. ``fitted_c`` is the least-squares slope of ``I`` over
    the tail half of the range.
    """
    if quad_points < 64:
        raise ValueError("quad_points must be >= 64")
    if R.kind == "tabulated" and len(R.params.get("samples", [])) < 8:
        raise GeometryError("tabulated profile too coarse to classify (< 8 samples)")

    eps = 2.0 ** (-_EPS_EXPONENTS.astype(float))
    ints = np.array([_inverse_profile_integral(R, e, quad_points) for e in eps])
    logs = np.log(1.0 / eps)

    r1 = float(R(np.array([1.0]))[0])
    r_small = float(R(np.array([eps[-1]]))[0])
    endpoints = abs(r1 - 1.0) <= 1e-12 and 0.0 < r_small <= 1e-2

    incr = np.diff(ints) / math.log(2.0)
    tail = slice(len(incr) // 2, None)
    tail_rates = incr[tail]
    if np.all(tail_rates > 0):
        gamma = -np.polyfit(logs[1:][tail], np.log(tail_rates), 1)[0]
    else:
        gamma = float("inf")
    half = len(ints) // 2
    fitted_c = float(np.polyfit(logs[half:], ints[half:], 1)[0])
    divergent = bool(fitted_c > 0 and np.all(ints >= 0) and gamma <= 0.02)

    t_all = np.exp(np.linspace(math.log(eps[-1]), 0.0, 4 * quad_points))
    t_coarse = t_all[t_all >= 2.0 ** -10]
    d_all = np.abs(R.derivative(t_all))
    d_coarse = np.abs(R.derivative(t_coarse))
    bounded = bool(np.all(np.isfinite(d_all)) and d_all.max() <= 1.5 * d_coarse.max() + 1e-12)

    dR = R.derivative(t_all)
    mild = bool(bounded and np.all(np.isfinite(dR)) and dR.min() >= 0.1 * dR.max() and dR.max() > 0)

    if not (endpoints and divergent and bounded):
        cls = "not_cusp"
    elif mild:
        cls = "uniformly_mild_cusp"
    else:
        cls = "cusp"
    return ValidationReport(endpoints, divergent, bounded, mild, cls, fitted_c,
                            float(gamma), ints.tolist())


# ---------------------------------------------------------------------------
# configuration and singularity function


SHAPES = ("wedge_cylinder", "slit_torus", "neumann_interval")


@dataclass(frozen=True)
class GeometryConfig:
    shape: str = "wedge_cylinder"
    length: float = 1.0
    circumference: float = 2.0 * math.pi
    cusp: CuspCharacteristic = field(default_factory=lambda: make_cusp_characteristic("cone"))
    singular_radius: float = 0.5
    beta: float = 1.0
    blend_width: float = 0.25

    def __post_init__(self):
        if self.shape not in SHAPES:
            raise GeometryError(f"unknown shape {self.shape!r}")
        if not self.length > 0:
            raise GeometryError("length must be positive")
        if not self.circumference > 0:
            raise GeometryError("circumference must be positive")
        if not 0 < self.singular_radius < self.length:
            raise GeometryError("singular_radius must lie in (0, length)")
        if self.shape == "wedge_cylinder" and self.singular_radius > 1.0:
            raise GeometryError("singular_radius must not exceed 1 (cusp profile lives on (0, 1])")
        if self.shape == "slit_torus" and self.singular_radius > 0.5 * self.length:
            raise GeometryError("slit_torus needs singular_radius <= length / 2")
        if not 0 < self.blend_width <= 0.5 * self.singular_radius:
            raise GeometryError("blend_width must lie in (0, singular_radius / 2]")
        if not self.beta >= 1.0:
            raise GeometryError(f"beta must be >= 1, got {self.beta}")


def _blend(d, inner: Callable, dinner: Callable, r: float, bw: float) -> np.ndarray:
    """``inner(d)`` below ``r - bw``, 1 above ``r``, cubic Hermite in between.

    The start slope is clipped to ``3 (1 - y0) / bw`` which keeps the cubic
    monotone (Fritsch-Carlson); for moderate profiles no clipping happens and
    the blend is C^1.
    """
    d = np.asarray(d, dtype=float)
    a = r - bw
    out = np.ones_like(d)
    core = d <= a
    if np.any(core):
        out[core] = inner(d[core])
    mid = (d > a) & (d < r)
    if np.any(mid):
        y0 = float(inner(np.array([a]))[0])
        m0 = float(dinner(np.array([a]))[0])
        if not 0 < y0 <= 1:
            raise GeometryError(f"profile value {y0} at blend start is outside (0, 1]")
        m0 = min(max(m0, 0.0), 3.0 * (1.0 - y0) / bw)
        s = (d[mid] - a) / bw
        h00 = 2 * s**3 - 3 * s**2 + 1
        h10 = s**3 - 2 * s**2 + s
        h01 = -2 * s**3 + 3 * s**2
        out[mid] = h00 * y0 + h10 * bw * m0 + h01 * 1.0
    return out


def build_singularity_function(config: GeometryConfig, t: np.ndarray) -> np.ndarray:
    """Singularity function ``rho`` at axial cell coordinates ``t``."""
    t = np.asarray(t, dtype=float)
    r, bw = config.singular_radius, config.blend_width
    if config.shape == "wedge_cylinder":
        rho = _blend(t, config.cusp.R, config.cusp.dR, r, bw)
    elif config.shape == "slit_torus":
        d = np.minimum(t, config.length - t)
        b = config.beta
        rho = _blend(d, lambda x: np.power(x, b), lambda x: b * np.power(x, b - 1.0), r, bw)
    else:
        rho = np.ones_like(t)
    if np.any(~(rho > 0)) or np.any(rho > 1.0 + 1e-15):
        raise GeometryError("singularity function left (0, 1]")
    return np.minimum(rho, 1.0)


# ---------------------------------------------------------------------------
# mesh


DEFAULT_CELL_BUDGET = 300_000


@dataclass(frozen=True, eq=False)
class SingularMesh:
    """Cell-centred tensor grid, cells ordered ``c = i_t * n_theta + i_theta``.

    Faces carry ``left``/``right`` cell indices (-1 outside the mesh), the
    centre-to-centre (or centre-to-face) distance, the face area and a kind
    code (0 interior, 1 Dirichlet singular, 2 Neumann outer). ``axis`` is 0 for
    faces normal to ``t`` and 1 for faces normal to ``theta``.
    """

    config: GeometryConfig
    n_t: int
    n_theta: int
    h_t: float
    h_theta: float
    t: np.ndarray
    theta: np.ndarray
    rho: np.ndarray
    cell_measures: np.ndarray
    face_left: np.ndarray
    face_right: np.ndarray
    face_dist: np.ndarray
    face_area: np.ndarray
    face_kind: np.ndarray
    face_axis: np.ndarray

    @property
    def n_cells(self) -> int:
        return self.n_t * self.n_theta

    @property
    def n_faces(self) -> int:
        return self.face_kind.shape[0]

    @property
    def shape(self) -> str:
        return self.config.shape

    @property
    def one_dimensional(self) -> bool:
        return self.config.shape == "neumann_interval"

    @property
    def face_weights(self) -> np.ndarray:
        """Metric area of each face (unit metric in stretched coordinates)."""
        return self.face_area

    @property
    def face_volumes(self) -> np.ndarray:
        """Weights of the discrete face inner product (area x distance)."""
        return self.face_area * self.face_dist

    @property
    def i_t(self) -> np.ndarray:
        return np.repeat(np.arange(self.n_t), self.n_theta)

    @property
    def i_theta(self) -> np.ndarray:
        return np.tile(np.arange(self.n_theta), self.n_t)

    @property
    def cell_t(self) -> np.ndarray:
        return np.repeat(self.t, self.n_theta)

    @property
    def cell_theta(self) -> np.ndarray:
        return np.tile(self.theta, self.n_t)

    @property
    def boundary_flags(self) -> list:
        return [_FACE_NAMES[int(k)] for k in self.face_kind]

    def count_faces(self, kind: int) -> int:
        return int(np.sum(self.face_kind == kind))

    @property
    def has_dirichlet(self) -> bool:
        return self.count_faces(DIRICHLET) > 0

    def face_average(self, cell_values: np.ndarray) -> np.ndarray:
        """Arithmetic mean of the adjacent cells; boundary faces copy their cell."""
        v = np.asarray(cell_values, dtype=float)
        left = np.where(self.face_left >= 0, self.face_left, self.face_right)
        right = np.where(self.face_right >= 0, self.face_right, self.face_left)
        return 0.5 * (v[left] + v[right])

    @property
    def face_rho(self) -> np.ndarray:
        return self.face_average(self.rho)


def build_mesh(config: GeometryConfig, n_t: int, n_theta: int = 1,
               cell_budget: int = DEFAULT_CELL_BUDGET) -> SingularMesh:
    """Cell-centred grid: ``t_i = (i + 1/2) h_t``, periodic ``theta``."""
    one_d = config.shape == "neumann_interval"
    if one_d:
        n_theta = 1
    if n_t < 4 or (not one_d and n_theta < 4):
        raise GeometryError("need n_t >= 4 and n_theta >= 4")
    if n_t * n_theta > cell_budget:
        raise GeometryError(f"{n_t * n_theta} cells exceed the cell budget {cell_budget}")

    h_t = config.length / n_t
    h_th = 1.0 if one_d else config.circumference / n_theta
    t = (np.arange(n_t) + 0.5) * h_t
    theta = (np.arange(n_theta) + 0.5) * h_th if not one_d else np.zeros(1)
    rho_t = build_singularity_function(config, t)
    rho = np.repeat(rho_t, n_theta)
    measures = np.full(n_t * n_theta, h_t * h_th)

    def cell(i, j):
        return i * n_theta + j

    left, right, dist, area, kind, axis = [], [], [], [], [], []
    low_kind = {"wedge_cylinder": DIRICHLET, "slit_torus": DIRICHLET,
                "neumann_interval": NEUMANN}[config.shape]
    high_kind = {"wedge_cylinder": NEUMANN, "slit_torus": DIRICHLET,
                 "neumann_interval": NEUMANN}[config.shape]
    j_idx = np.arange(n_theta)
    # t-normal faces, ordered by face index i = 0..n_t then theta
    for i in range(n_t + 1):
        if i == 0:
            left.append(np.full(n_theta, -1))
            right.append(cell(0, j_idx))
            dist.append(np.full(n_theta, 0.5 * h_t))
            kind.append(np.full(n_theta, low_kind))
        elif i == n_t:
            left.append(cell(n_t - 1, j_idx))
            right.append(np.full(n_theta, -1))
            dist.append(np.full(n_theta, 0.5 * h_t))
            kind.append(np.full(n_theta, high_kind))
        else:
            left.append(cell(i - 1, j_idx))
            right.append(cell(i, j_idx))
            dist.append(np.full(n_theta, h_t))
            kind.append(np.full(n_theta, INTERIOR))
        area.append(np.full(n_theta, h_th))
        axis.append(np.zeros(n_theta, dtype=int))
    if not one_d:
        # periodic theta faces: face j sits between cells j and j+1
        for i in range(n_t):
            left.append(cell(i, j_idx))
            right.append(cell(i, (j_idx + 1) % n_theta))
            dist.append(np.full(n_theta, h_th))
            area.append(np.full(n_theta, h_t))
            kind.append(np.full(n_theta, INTERIOR))
            axis.append(np.ones(n_theta, dtype=int))

    def cat(xs, dtype):
        return np.concatenate(xs).astype(dtype)

    arrays = dict(face_left=cat(left, int), face_right=cat(right, int),
                  face_dist=cat(dist, float), face_area=cat(area, float),
                  face_kind=cat(kind, int), face_axis=cat(axis, int))
    for a in (t, theta, rho, measures, *arrays.values()):
        a.setflags(write=False)
    return SingularMesh(config, n_t, n_theta, h_t, h_th, t, theta, rho, measures, **arrays)


def volume_weights(mesh: SingularMesh) -> np.ndarray:
    """Diagonal mass vector (cell measures)."""
    return np.array(mesh.cell_measures)


def total_measure(mesh: SingularMesh) -> float:
    return float(math.fsum(mesh.cell_measures))


def mesh_rows(mesh: SingularMesh) -> Sequence[tuple]:
    """Rows ``(i_t, i_theta, t, theta, rho, measure)`` for the mesh dump."""
    return list(zip(mesh.i_t.tolist(), mesh.i_theta.tolist(), mesh.cell_t.tolist(),
                    mesh.cell_theta.tolist(), mesh.rho.tolist(), mesh.cell_measures.tolist()))
