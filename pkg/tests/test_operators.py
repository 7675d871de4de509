import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from wedgepme.geometry import INTERIOR, GeometryConfig, build_mesh, make_cusp_characteristic
from wedgepme.linalg import smallest_eigenpair
from wedgepme.operators import (Coefficient, CoefficientError, assemble_divergence_form,
                                cell_inner, coefficient_from_state, discrete_divergence,
                                discrete_gradient, face_inner, weighted_norm)


def random_coefficient(mesh, rng, lo=1.0, hi=2.0):
    return Coefficient(rng.uniform(lo, hi, mesh.n_faces), a_min=lo)


def test_gradient_of_constant_on_neumann_interval(interval8):
    g = discrete_gradient(interval8, np.full(8, 3.7))
    np.testing.assert_array_equal(g, 0.0)


def test_gradient_of_linear_function(interval8):
    g = discrete_gradient(interval8, interval8.cell_t)
    inner = interval8.face_kind == INTERIOR
    np.testing.assert_allclose(g[inner], 1.0, atol=1e-12)


def test_ghost_zero_dirichlet_gradient(wedge8):
    u = np.ones(wedge8.n_cells)
    g = discrete_gradient(wedge8, u)
    d = wedge8.face_left < 0
    np.testing.assert_allclose(g[d], 1.0 / wedge8.face_dist[d])


def test_field_mismatch(wedge8):
    with pytest.raises(ValueError):
        discrete_gradient(wedge8, np.ones(3))
    with pytest.raises(ValueError):
        discrete_divergence(wedge8, np.ones(3))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31))
def test_adjoint_identity(seed):
    mesh = build_mesh(GeometryConfig(), 8, 8)
    r = np.random.default_rng(seed)
    u = r.standard_normal(mesh.n_cells)
    F = r.standard_normal(mesh.n_faces)
    F[mesh.face_kind != INTERIOR] = 0.0
    lhs = face_inner(mesh, discrete_gradient(mesh, u), F)
    rhs = -cell_inner(mesh, u, discrete_divergence(mesh, F))
    assert lhs == pytest.approx(rhs, abs=1e-12 * max(1.0, abs(lhs)))


def test_operator_is_minus_div_grad(wedge8, rng):
    a = random_coefficient(wedge8, rng)
    A = assemble_divergence_form(wedge8, a)
    u = rng.standard_normal(wedge8.n_cells)
    flux = a.values * discrete_gradient(wedge8, u)
    # Dirichlet faces keep their ghost flux, Neumann faces none
    F = flux.copy()
    np.testing.assert_allclose(A @ u, -wedge8.cell_measures * discrete_divergence(wedge8, F), atol=1e-12)


def test_stencil_on_dirichlet_neumann_strip():
    mesh = build_mesh(GeometryConfig(circumference=4.0), 16, 4)
    A = assemble_divergence_form(mesh).todense()
    h = 1.0 / 16
    # h_theta = 1: the t-stencil is scaled by h_theta / h_t, theta links by h_t / h_theta
    row = lambda i: i * 4
    assert A[row(0), row(0)] == pytest.approx(3.0 / h + 2 * h)
    assert A[row(5), row(5)] == pytest.approx(2.0 / h + 2 * h)
    assert A[row(15), row(15)] == pytest.approx(1.0 / h + 2 * h)
    assert A[row(5), row(6)] == pytest.approx(-1.0 / h)
    assert A[row(5), row(5) + 1] == pytest.approx(-h)


def test_eigenvalue_under_refinement():
    lams = []
    for n in (16, 64, 256):
        mesh = build_mesh(GeometryConfig(circumference=1.0), n, 4)
        lams.append(smallest_eigenpair(assemble_divergence_form(mesh), tol=1e-12).value)
    err = np.abs(np.array(lams) - (math.pi / 2) ** 2)
    assert np.all(np.diff(err) < 0)
    assert err[-1] < 1e-4


def test_scaling_in_coefficient(wedge8):
    A1 = assemble_divergence_form(wedge8, Coefficient.constant(wedge8, 1.0)).todense()
    A2 = assemble_divergence_form(wedge8, Coefficient.constant(wedge8, 2.0)).todense()
    np.testing.assert_array_equal(A2, 2 * A1)


def test_linearity_in_coefficient(wedge8, rng):
    a1, a2 = random_coefficient(wedge8, rng), random_coefficient(wedge8, rng)
    s = Coefficient(a1.values + a2.values, a_min=2.0)
    lhs = assemble_divergence_form(wedge8, s).todense()
    rhs = assemble_divergence_form(wedge8, a1).todense() + assemble_divergence_form(wedge8, a2).todense()
    assert np.max(np.abs(lhs - rhs)) <= 1e-12 * np.abs(lhs).max()


def test_random_coefficient_symmetric_psd(wedge8, rng):
    A = assemble_divergence_form(wedge8, random_coefficient(wedge8, rng))
    assert A.symmetry_defect() <= 1e-12
    for _ in range(100):
        u = rng.standard_normal(wedge8.n_cells)
        assert u @ (A @ u) >= 0


def test_coercivity_bound(wedge16, rng):
    a = random_coefficient(wedge16, rng, 0.5, 3.0)
    A = assemble_divergence_form(wedge16, a)
    lam0 = smallest_eigenpair(assemble_divergence_form(wedge16), tol=1e-12).value
    m = wedge16.cell_measures
    for _ in range(50):
        u = rng.standard_normal(wedge16.n_cells)
        assert u @ (A @ u) >= a.a_min * lam0 * np.sum(m * u * u) * (1 - 1e-10)


def test_coefficient_lower_bound_enforced(wedge8):
    with pytest.raises(CoefficientError):
        Coefficient(np.full(wedge8.n_faces, 0.5), a_min=1.0)
    with pytest.raises(CoefficientError):
        Coefficient(np.zeros(wedge8.n_faces), a_min=0.0)


def test_weighted_norm_sup_of_one(wedge8):
    assert weighted_norm(wedge8, np.ones(wedge8.n_cells), 0, math.inf, 0.0) == 1.0


def test_weighted_norm_integral_of_rho():
    # rho = t on (0, 1) up to a blend of width 1e-3 at the end
    cfg = GeometryConfig(length=1.0, circumference=2 * math.pi, singular_radius=0.999999,
                         blend_width=1e-3, cusp=make_cusp_characteristic("cone"))
    mesh = build_mesh(cfg, 2000, 4)
    val = weighted_norm(mesh, np.ones(mesh.n_cells), 0, 1.0, 1.0)
    assert val == pytest.approx(math.pi, rel=1e-5)


def test_weighted_norm_k_guard(wedge8):
    with pytest.raises(ValueError):
        weighted_norm(wedge8, np.ones(wedge8.n_cells), k=2)


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**31), t0=st.floats(-2, 2), t1=st.floats(-2, 2),
       p=st.sampled_from([1.0, 2.0, 3.5, math.inf]), k=st.sampled_from([0, 1]))
def test_weighted_norm_embedding(seed, t0, t1, p, k):
    mesh = build_mesh(GeometryConfig(), 8, 8)
    u = np.random.default_rng(seed).standard_normal(mesh.n_cells)
    lo, hi = min(t0, t1), max(t0, t1)
    assert weighted_norm(mesh, u, k, p, hi) <= weighted_norm(mesh, u, k, p, lo) * (1 + 1e-12)


def test_coefficient_from_zero_state(wedge8):
    a = coefficient_from_state(wedge8, 2.0, np.zeros(wedge8.n_cells), 3)
    np.testing.assert_allclose(a.values, 4.0)
    assert a.constant_part == 4.0


def test_coefficient_from_constant_state(wedge8):
    a = coefficient_from_state(wedge8, 1.0, np.full(wedge8.n_cells, 0.5), 2)
    np.testing.assert_allclose(a.values, 1.5)


def test_coefficient_decay_bound(wedge16):
    u = 0.3 * wedge16.rho
    a = coefficient_from_state(wedge16, 1.0, u, 2, decay_exponent=-1.0)
    # n = 2: a_hat = u_bar exactly, so |a_hat| <= 0.3 rho on every face
    assert np.all(np.abs(a.perturbation) <= 0.3 * wedge16.face_rho + 1e-12)
    assert a.decay_violation(wedge16) <= 0


def test_ball_condition(wedge8):
    with pytest.raises(CoefficientError, match="ball"):
        coefficient_from_state(wedge8, 1.0, np.full(wedge8.n_cells, 1.0), 2)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**31), us=st.floats(0.2, 5.0), frac=st.floats(0.0, 0.99),
       n=st.floats(1.0, 4.0), sign=st.sampled_from([-1.0, 1.0]))
def test_coefficient_from_state_invariants(seed, us, frac, n, sign):
    mesh = build_mesh(GeometryConfig(), 6, 6)
    u = np.random.default_rng(seed).uniform(-1, 1, mesh.n_cells)
    u *= frac * us / max(np.abs(u).max(), 1e-300)
    a = coefficient_from_state(mesh, sign * us, u, n)
    sup = np.abs(u).max()
    assert a.values.min() >= a.a_min > 0
    assert a.a_min >= (us - sup) ** (n - 1) * (1 - 1e-12)
