import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import lagged_diffusivity
from wedgepme.experiments import gaussian_bump, random_field
from wedgepme.geometry import GeometryConfig, build_mesh
from wedgepme.linalg import smallest_eigenpair
from wedgepme.operators import assemble_divergence_form, lp_norm
from wedgepme.resolvent import (SemilinearProblem, accretivity_probe, beta, beta_reg,
                                beta_reg_prime, brezis_strauss_solve, linear_resolvent, phi,
                                phi_reg, pme_operator_apply, pme_resolvent_step)


@pytest.fixture(scope="module")
def mesh8():
    return build_mesh(GeometryConfig(), 8, 8)


@pytest.fixture(scope="module")
def A8(mesh8):
    return assemble_divergence_form(mesh8)


@settings(max_examples=60, deadline=None)
@given(x=st.floats(-50, 50), n=st.floats(1.0, 5.0), delta=st.sampled_from([0.0, 1e-6, 1e-2, 1.0]))
def test_regularized_pair_inverse(x, n, delta):
    assert float(phi_reg(beta_reg(x, n, delta), n, delta)) == pytest.approx(x, rel=1e-9, abs=1e-9)
    assert float(beta(phi(x, n), n)) == pytest.approx(x, rel=1e-9, abs=1e-12)


def test_beta_reg_prime_cap():
    assert beta_reg_prime(np.array([0.0]), 2.0, 0.0)[0] == 1e12
    assert beta_reg_prime(np.array([4.0]), 2.0, 0.0)[0] == pytest.approx(0.25)


def test_linear_resolvent_zero(A8):
    np.testing.assert_array_equal(linear_resolvent(A8, None, 0.3, np.zeros(A8.n)), 0.0)


def test_linear_resolvent_eigenvector(A8):
    lam1, v = smallest_eigenpair(A8, tol=1e-14)
    lam = 0.7
    u = linear_resolvent(A8, None, lam, v)
    np.testing.assert_allclose(u, v / (1 + lam * lam1), atol=1e-9)


def test_linear_resolvent_sup_bound(mesh8, A8, rng):
    for lam in (0.01, 1.0, 100.0):
        f = rng.standard_normal(A8.n)
        f /= f.max()
        assert linear_resolvent(A8, None, lam, f).max() <= 1 + 1e-10


def test_linear_resolvent_rejects_nonpositive_lambda(A8):
    with pytest.raises(ValueError):
        linear_resolvent(A8, None, 0.0, np.ones(A8.n))


@settings(max_examples=30, deadline=None)
@given(seed=st.integers(0, 2**31), lam=st.floats(1e-3, 1e3))
def test_linear_max_principle_and_positivity(seed, lam):
    mesh = build_mesh(GeometryConfig(), 8, 8)
    A = assemble_divergence_form(mesh)
    f = random_field(mesh, np.random.default_rng(seed))
    u = linear_resolvent(A, None, lam, f)
    assert u.max() <= max(0.0, f.max()) + 1e-10
    assert u.min() >= min(0.0, f.min()) - 1e-10
    up = linear_resolvent(A, None, lam, np.abs(f))
    assert up.min() >= -1e-12


def test_semilinear_zero_rhs(mesh8):
    res = brezis_strauss_solve(SemilinearProblem(mesh8, 0.1, np.zeros(mesh8.n_cells)))
    np.testing.assert_array_equal(res.v, 0.0)
    np.testing.assert_array_equal(res.u, 0.0)


@pytest.mark.parametrize("n", [1.0, 2.0, 3.0])
def test_semilinear_constant_on_neumann_interval(interval8, n):
    lam, c = 0.4, -1.3
    res = brezis_strauss_solve(SemilinearProblem(interval8, lam, np.full(8, c), n))
    np.testing.assert_allclose(res.v, phi(lam * c, n), rtol=1e-10)
    np.testing.assert_allclose(res.u, lam * c, rtol=1e-10)


def test_semilinear_matches_fixed_point(mesh8, A8):
    f = gaussian_bump(mesh8, (0.5, np.pi), 0.3, 1.0)
    res = brezis_strauss_solve(SemilinearProblem(mesh8, 0.1, f, 2.0, operator=A8))
    assert res.residual_l1 <= 1e-10 * max(1.0, np.sum(mesh8.cell_measures * np.abs(f)))
    ref = lagged_diffusivity(A8.todense(), mesh8.cell_measures, f, 0.1, 2.0)
    assert lp_norm(mesh8, res.u - ref, 1) <= 1e-6


def test_semilinear_validation(mesh8):
    f = np.ones(mesh8.n_cells)
    with pytest.raises(ValueError):
        SemilinearProblem(mesh8, -1.0, f)
    with pytest.raises(ValueError):
        SemilinearProblem(mesh8, 1.0, f, n=0.5)
    with pytest.raises(ValueError):
        SemilinearProblem(mesh8, 1.0, f, delta_schedule=(1e-2, 1e-6))
    with pytest.raises(ValueError):
        SemilinearProblem(mesh8, 1.0, np.ones(3))


def test_diagnostics_record(mesh8):
    f = gaussian_bump(mesh8, (0.5, np.pi), 0.3, 1.0)
    res = brezis_strauss_solve(SemilinearProblem(mesh8, 0.5, f, 2.0))
    d = res.diagnostics(0.5, 2.0, f)
    assert set(d) == {"lambda", "n", "delta_schedule", "newton_iters", "residual_l1",
                      "max_principle_margin"}
    assert d["max_principle_margin"] >= -1e-10
    json.dumps(d)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), lam=st.sampled_from([0.05, 0.5, 5.0]),
       n=st.sampled_from([1.5, 2.0, 3.0]))
def test_sign_flip_symmetry(seed, lam, n):
    mesh = build_mesh(GeometryConfig(), 8, 8)
    A = assemble_divergence_form(mesh)
    f = random_field(mesh, np.random.default_rng(seed))
    a = brezis_strauss_solve(SemilinearProblem(mesh, lam, f, n, operator=A))
    b = brezis_strauss_solve(SemilinearProblem(mesh, lam, -f, n, operator=A))
    np.testing.assert_allclose(b.v, -a.v, atol=1e-10)
    np.testing.assert_allclose(b.u, -a.u, atol=1e-10)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), n=st.sampled_from([1.5, 2.0, 3.0]))
def test_semilinear_positivity(seed, n):
    mesh = build_mesh(GeometryConfig(), 8, 8)
    f = np.abs(random_field(mesh, np.random.default_rng(seed)))
    res = brezis_strauss_solve(SemilinearProblem(mesh, 0.3, f, n))
    assert res.u.min() >= -1e-10


def test_pme_step_equilibrium_on_neumann(interval8):
    res = pme_resolvent_step(interval8, None, np.full(8, 0.7), 0.05, 2.0)
    np.testing.assert_allclose(res.u, 0.7, rtol=1e-10)


def test_pme_step_zero(mesh8, A8):
    res = pme_resolvent_step(mesh8, A8, np.zeros(mesh8.n_cells), 0.1, 2.0)
    np.testing.assert_array_equal(res.u, 0.0)


def test_pme_step_satisfies_implicit_equation(mesh8, A8):
    w = gaussian_bump(mesh8, (0.4, 2.0), 0.25, 0.8)
    dt = 0.02
    u = pme_resolvent_step(mesh8, A8, w, dt, 3.0).u
    lhs = mesh8.cell_measures * u + dt * pme_operator_apply(A8, u, 3.0)
    np.testing.assert_allclose(lhs, mesh8.cell_measures * w, atol=1e-9)


@settings(max_examples=15, deadline=None)
@given(seed=st.integers(0, 2**31), dt=st.sampled_from([0.01, 0.1]))
def test_pme_step_l1_contraction(seed, dt):
    mesh = build_mesh(GeometryConfig(), 8, 8)
    A = assemble_divergence_form(mesh)
    r = np.random.default_rng(seed)
    w1, w2 = random_field(mesh, r), random_field(mesh, r)
    a = pme_resolvent_step(mesh, A, w1, dt, 2.0).u
    b = pme_resolvent_step(mesh, A, w2, dt, 2.0).u
    assert lp_norm(mesh, a - b, 1) <= lp_norm(mesh, w1 - w2, 1) + 1e-8


def test_offset_step_matches_shifted_equation(mesh8, A8):
    w = 0.1 * gaussian_bump(mesh8, (0.5, 3.0), 0.2, 1.0)
    dt, c, n = 0.05, 1.0, 2.0
    u = pme_resolvent_step(mesh8, A8, w, dt, n, offset=c).u
    lhs = mesh8.cell_measures * u + dt * pme_operator_apply(A8, u, n, offset=c)
    np.testing.assert_allclose(lhs, mesh8.cell_measures * w, atol=1e-9)


def test_accretivity_identical_pairs(mesh8, A8, rng):
    x = rng.standard_normal(mesh8.n_cells)
    rep = accretivity_probe(mesh8, 2.0, [0.1, 1.0], [(x, x)], A8)
    assert rep.min_margin == 0.0 and rep.passed


def test_accretivity_linear_case(mesh8, A8, rng):
    pairs = [(rng.standard_normal(mesh8.n_cells), np.zeros(mesh8.n_cells)) for _ in range(100)]
    rep = accretivity_probe(mesh8, 1.0, [0.01, 0.1, 1.0, 10.0], pairs, A8)
    assert rep.passed
    # independent evaluation of ||(M + lam A) e||_1 - ||M e||_1
    K = A8.todense()
    m = mesh8.cell_measures
    e = pairs[0][0]
    direct = np.abs(m * e + 10.0 * K @ e).sum() - np.abs(m * e).sum()
    assert direct >= rep.margins[10.0] - 1e-12


def test_accretivity_cubic(mesh8, A8):
    r = np.random.default_rng(3)
    pairs = [(random_field(mesh8, r), random_field(mesh8, r)) for _ in range(50)]
    rep = accretivity_probe(mesh8, 3.0, [0.01, 0.1, 1.0, 10.0], pairs, A8)
    assert rep.min_margin >= -1e-10


def test_l1_lower_bound_positive(mesh8, A8):
    r = np.random.default_rng(11)
    m = mesh8.cell_measures
    ratios = []
    for _ in range(200):
        u = random_field(mesh8, r)
        ratios.append(np.abs(A8 @ u).sum() / np.abs(m * u).sum())
    assert min(ratios) > 1e-6
