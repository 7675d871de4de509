import math

import numpy as np
import pytest

from wedgepme.experiments import (StabilityError, accretivity_experiment, contraction_experiment,
                                  field_corpus, fit_decay_rate, l1_bound_probe, l1_ratio,
                                  max_principle_sweep, poincare_experiment, positivity_experiment,
                                  refinement_experiment, spectrum_bound_experiment,
                                  stability_experiment)
from wedgepme.geometry import GeometryConfig, build_mesh
from wedgepme.linalg import smallest_eigenpair
from wedgepme.operators import assemble_divergence_form
from wedgepme.resolvent import linear_resolvent


def test_poincare_wedge_small():
    res = poincare_experiment(GeometryConfig(), levels=(16, 32, 64))
    assert res.passed
    assert res.metrics["lambda_min"] == pytest.approx((math.pi / 2) ** 2, rel=1e-2)
    assert res.metrics["poincare_constant"] == pytest.approx(2 / math.pi, rel=1e-2)
    assert set(res.tolerances) >= {"lambda_floor", "refinement_rel_tol"}


def test_poincare_slit_torus(torus_config):
    res = poincare_experiment(torus_config, levels=(16, 32, 64))
    assert res.metrics["lambda_min"] == pytest.approx(math.pi**2, rel=2e-2)
    assert res.passed


def test_poincare_all_neumann_fails():
    res = poincare_experiment(GeometryConfig(shape="neumann_interval"), levels=(16, 32))
    assert not res.passed
    assert res.metrics["singular"]
    assert res.metrics["lambda_min"] == 0.0


def test_poincare_monotone_in_dirichlet_faces():
    wedge = GeometryConfig(circumference=1.0)
    torus = GeometryConfig(shape="slit_torus", circumference=1.0)
    a = poincare_experiment(wedge, levels=(32,)).metrics["lambda_min"]
    b = poincare_experiment(torus, levels=(32,)).metrics["lambda_min"]
    assert b > a


def test_spectrum_unit_matches_poincare():
    cfg = GeometryConfig()
    s = spectrum_bound_experiment(cfg, 1.0, 16, 16, corpus_size=10)
    p = poincare_experiment(cfg, levels=(16,), eig_tol=1e-11)
    assert s.metrics["lambda_min"] == pytest.approx(p.metrics["lambda_min"], rel=1e-9)
    assert s.passed


@pytest.mark.parametrize("scale", [2.0, 4.0])
def test_spectrum_scaling(scale):
    cfg = GeometryConfig()
    s = spectrum_bound_experiment(cfg, scale, 16, 16, corpus_size=5)
    assert s.metrics["lambda_min"] == pytest.approx(scale * s.metrics["lambda_min_unit"], rel=1e-10)


def test_spectrum_decaying_perturbation():
    s = spectrum_bound_experiment(GeometryConfig(), "1+rho", 16, 16, corpus_size=20)
    lam1 = s.metrics["lambda_min_unit"]
    assert lam1 <= s.metrics["lambda_min"] <= 2 * lam1
    assert s.passed


def test_fit_decay_rate_exact():
    t = np.linspace(0, 2, 41)
    assert fit_decay_rate(t, 3 * np.exp(-1.7 * t)) == pytest.approx(1.7, rel=1e-12)


def test_fit_decay_rate_ignores_noise_floor():
    t = np.linspace(0, 4, 81)
    y = np.maximum(np.exp(-5.0 * t), 1e-6)
    assert fit_decay_rate(t, y, floor=1e-5) == pytest.approx(5.0, rel=1e-10)
    assert fit_decay_rate(t, y) < 2.5


@pytest.mark.parametrize("n, c", [(3.0, 2.0), (2.0, 0.5)])
def test_stability_rate_scaling(n, c):
    guess = n * c ** (n - 1) * 2.4674
    T = round(8 / guess, 2)
    res = stability_experiment(GeometryConfig(), C_M=c, n=n, n_t=16, n_theta=16, T=T, dt=T / 100,
                               w0=lambda m: 0.1 * c * np.exp(-((m.cell_t - 0.5) ** 2) / 0.08))
    assert res.passed, res.metrics


def test_stability_zero_perturbation():
    res = stability_experiment(GeometryConfig(), w0=lambda m: np.zeros(m.n_cells), n_t=16,
                               n_theta=16, T=0.2, dt=0.02)
    assert res.passed
    assert res.metrics["final_difference"] == 0.0


def test_stability_linear_rate():
    res = stability_experiment(GeometryConfig(), n=1.0, n_t=24, n_theta=24, T=3.0, dt=0.01)
    assert res.metrics["predicted_rate"] == pytest.approx(res.metrics["lambda_min"])
    assert res.passed, res.metrics


def test_stability_ball_condition():
    with pytest.raises(StabilityError):
        stability_experiment(GeometryConfig(), w0=lambda m: np.full(m.n_cells, 0.5), n_t=8, n_theta=8)


def test_stability_pme_div_prediction():
    res = stability_experiment(GeometryConfig(), n=2.0, formulation="pme_div", C_M=1.0,
                               n_t=24, n_theta=24, T=3.0, dt=0.01)
    assert res.metrics["predicted_rate"] == pytest.approx(res.metrics["lambda_min"])
    assert res.passed, res.metrics


def test_max_principle_examples():
    mesh = build_mesh(GeometryConfig(), 16, 16)
    A = assemble_divergence_form(mesh)
    rng = np.random.default_rng(5)
    f = -np.abs(rng.standard_normal(mesh.n_cells))
    assert linear_resolvent(A, None, 1.0, f).max() <= 1e-10
    e = np.zeros(mesh.n_cells)
    e[37] = 1.0
    u = linear_resolvent(A, None, 10.0, e)
    assert u.min() >= -1e-10 and u.max() <= 1 + 1e-10
    g = rng.uniform(-3, 3, mesh.n_cells)
    assert np.abs(linear_resolvent(A, None, 1e3, g)).max() <= np.abs(g).max() + 1e-10


def test_max_principle_sweep_small():
    res = max_principle_sweep(GeometryConfig(), corpus_size=12, n_t=12, n_theta=12)
    assert res.passed
    assert len(res.tables["sweep"][1]) == 5


def test_l1_probe():
    res = l1_bound_probe(GeometryConfig(), sample_size=40, n_t=12, n_theta=12)
    assert res.passed
    assert res.metrics["alpha"] > 0


def test_l1_ratio_indicator_and_neumann():
    mesh = build_mesh(GeometryConfig(), 12, 12)
    A = assemble_divergence_form(mesh)
    e = np.zeros(mesh.n_cells)
    e[50] = 1.0
    assert l1_ratio(mesh, A, e) > 0
    nm = build_mesh(GeometryConfig(shape="neumann_interval"), 16)
    assert l1_ratio(nm, assemble_divergence_form(nm), np.ones(16)) == 0.0
    assert not l1_bound_probe(GeometryConfig(shape="neumann_interval"), sample_size=8,
                              n_t=16).passed


def test_l1_ratio_ground_state():
    mesh = build_mesh(GeometryConfig(), 12, 12)
    A = assemble_divergence_form(mesh)
    lam, v = smallest_eigenpair(A, tol=1e-12)
    # A v = lam M v, so the ratio is exactly lam
    assert l1_ratio(mesh, A, v) == pytest.approx(lam, rel=1e-6)


def test_accretivity_experiment_small():
    res = accretivity_experiment(GeometryConfig(), n=3.0, pairs=10, n_t=8, n_theta=8)
    assert res.passed


def test_contraction_experiment_small():
    res = contraction_experiment(GeometryConfig(), pairs=3, steps=10, n_t=12, n_theta=12)
    assert res.passed


def test_contraction_threads_agree():
    kw = dict(pairs=2, steps=5, n_t=8, n_theta=8)
    a = contraction_experiment(GeometryConfig(), jobs=1, **kw)
    b = contraction_experiment(GeometryConfig(), jobs=2, **kw)
    assert a.tables == b.tables


def test_positivity_experiment_both_geometries():
    assert positivity_experiment(GeometryConfig(), steps=10, n_t=12, n_theta=12).passed
    res = positivity_experiment(GeometryConfig(shape="neumann_interval"), steps=10, n_t=16)
    assert "mass_conserved" in res.verdicts and res.passed


def test_refinement_small():
    res = refinement_experiment(GeometryConfig(), n_t=12, n_theta=12)
    assert res.passed, res.metrics


def test_field_corpus_deterministic():
    mesh = build_mesh(GeometryConfig(), 8, 8)
    a, b = field_corpus(mesh, 9, 4), field_corpus(mesh, 9, 4)
    assert all(np.array_equal(x, y) for x, y in zip(a, b))


def test_experiments_bit_reproducible():
    a = max_principle_sweep(GeometryConfig(), corpus_size=6, n_t=8, n_theta=8)
    b = max_principle_sweep(GeometryConfig(), corpus_size=6, n_t=8, n_theta=8)
    assert a.metrics == b.metrics and a.inputs_digest == b.inputs_digest
    c = stability_experiment(GeometryConfig(), n_t=12, n_theta=12, T=0.2, dt=0.02)
    d = stability_experiment(GeometryConfig(), n_t=12, n_theta=12, T=0.2, dt=0.02)
    assert c.metrics == d.metrics
