import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from src.bounds import bound_avg_conditional, bound_avg_theta, bound_global
from src.errors import InvalidSpec, NotSPD, NotSymmetric
from src.matrix_bounds import (
    MATRIX_FLAVORS,
    PsiComponent,
    VectorPsiSpec,
    check_loewner,
    eval_vector_psi,
    hermite_product_rule,
    make_linear_gaussian_vector_model,
    mat_bound,
    mse_matrix_exact,
    optimal_psi,
    stacked_ratio_psi,
)
from src.testfn import PsiSpec
from src.verify import vector_psi_battery


def test_identity_model_posterior(vmodel):
    assert vmodel.posterior_cov == pytest.approx(0.5 * np.eye(2), abs=1e-12)
    assert vmodel.gain == pytest.approx(0.5 * np.eye(2), abs=1e-12)
    assert vmodel.target_posterior_cov() == pytest.approx(0.5 * np.eye(2), abs=1e-12)


def test_partial_observation_posterior():
    model = make_linear_gaussian_vector_model([[1.0, 0.0]], np.eye(2), [[1.0]])
    assert model.observation_dim == 1
    assert model.posterior_cov == pytest.approx(np.diag([0.5, 1.0]), abs=1e-12)


@pytest.mark.parametrize("prior_cov", [
    [[1.0, 2.0], [2.0, 1.0]],
    [[1.0, 0.5], [0.0, 1.0]],
])
def test_prior_must_be_spd(prior_cov):
    with pytest.raises(NotSPD):
        make_linear_gaussian_vector_model(np.eye(2), prior_cov, np.eye(2))


def test_dimension_limits():
    with pytest.raises(InvalidSpec):
        make_linear_gaussian_vector_model(np.eye(3), np.eye(3), np.eye(3))
    with pytest.raises(InvalidSpec):
        make_linear_gaussian_vector_model(np.eye(2), np.eye(2), np.eye(2), target=[[1.0, 0.0, 0.0]])


def test_hermite_rule_moments():
    nodes, weights = hermite_product_rule(12, 2)
    assert nodes.shape == (144, 2)
    assert np.sum(weights) == pytest.approx(1.0)
    assert np.sum(weights * nodes[:, 0] ** 2) == pytest.approx(1.0)
    assert np.sum(weights * nodes[:, 0] * nodes[:, 1]) == pytest.approx(0.0, abs=1e-14)


def test_exact_mse_matrices(vmodel, cfg):
    assert mse_matrix_exact(vmodel, vmodel.posterior_mean_g, cfg) == pytest.approx(0.5 * np.eye(2), abs=1e-8)
    zero = mse_matrix_exact(vmodel, lambda y: np.zeros(np.shape(y)[:-1] + (2,)), cfg)
    assert zero == pytest.approx(np.eye(2), abs=1e-8)
    assert mse_matrix_exact(vmodel, lambda y: y, cfg) == pytest.approx(np.eye(2), abs=1e-8)


def test_component_validation():
    with pytest.raises(InvalidSpec):
        PsiComponent('ww', direction=(0.0, 0.0), h=1.0, s=0.5)
    with pytest.raises(InvalidSpec):
        PsiComponent('cond', direction=(1.0, 0.0), h=1.0, s=0.0)
    with pytest.raises(InvalidSpec):
        VectorPsiSpec(())
    with pytest.raises(InvalidSpec):
        stacked_ratio_psi('ww', [1.0], 0.5, 2)


def test_eval_vector_psi_shape(vmodel):
    spec = VectorPsiSpec(stacked_ratio_psi('ww', [1.0, 0.5], 0.5, 2).components + optimal_psi().components)
    assert spec.dim(vmodel) == 4
    values = eval_vector_psi(spec, vmodel, np.zeros((3, 1, 2)), np.ones((1, 5, 2)))
    assert values.shape == (3, 5, 4)


@pytest.mark.parametrize("flavor", MATRIX_FLAVORS)
def test_optimal_psi_attains_error_covariance(vmodel, cfg, flavor):
    y = np.array([0.3, -0.2]) if flavor == 'conditional' else None
    result = mat_bound(vmodel, optimal_psi(), flavor, cfg, y=y)
    assert result.ok
    assert result.bound_matrix == pytest.approx(0.5 * np.eye(2), abs=1e-8)


def test_matrix_master_inequality(vmodel, cfg):
    sigma = mse_matrix_exact(vmodel, vmodel.posterior_mean_g, cfg)
    for spec in vector_psi_battery(vmodel):
        for flavor in ('global', 'avg_conditional', 'avg_theta'):
            result = mat_bound(vmodel, spec, flavor, cfg)
            assert result.ok
            assert np.array_equal(result.bound_matrix, result.bound_matrix.T)
            passed, lowest = check_loewner(sigma, result.bound_matrix)
            assert passed, (flavor, lowest)


def test_conditional_flavor_needs_y(vmodel, cfg):
    with pytest.raises(InvalidSpec):
        mat_bound(vmodel, optimal_psi(), 'conditional', cfg)
    with pytest.raises(InvalidSpec):
        mat_bound(vmodel, optimal_psi(), 'minimax', cfg)


def test_constant_psi_is_singular(vmodel, cfg):
    spec = VectorPsiSpec((PsiComponent('custom', custom_fn=lambda y, t: 1.0),))
    for flavor in ('global', 'avg_conditional'):
        result = mat_bound(vmodel, spec, flavor, cfg)
        assert result.status == 'singular_psi_cov'
        assert result.bound_matrix is None


def test_collinear_components_are_singular(vmodel, cfg):
    component = PsiComponent('cond', direction=(1.0, 0.0), h=1.0, s=0.5)
    result = mat_bound(vmodel, VectorPsiSpec((component, component)), 'global', cfg)
    assert result.status == 'singular_psi_cov'


def test_one_dimensional_model_matches_scalar_bounds(gg, cfg):
    model = make_linear_gaussian_vector_model([[1.0]], [[1.0]], [[1.0]])
    vector_spec = VectorPsiSpec((PsiComponent('cond', direction=(1.0,), h=1.0, s=0.5),))
    scalar_spec = PsiSpec('cond', h=1.0, s=0.5)
    pairs = [
        ('global', bound_global),
        ('avg_conditional', bound_avg_conditional),
        ('avg_theta', bound_avg_theta),
    ]
    for flavor, scalar_bound in pairs:
        matrix = mat_bound(model, vector_spec, flavor, cfg).bound_matrix
        assert matrix.shape == (1, 1)
        assert matrix[0, 0] == pytest.approx(scalar_bound(gg, scalar_spec, cfg).value, abs=1e-8)


def test_first_coordinate_target_matches_scalar_bound(gg, cfg):
    model = make_linear_gaussian_vector_model(np.eye(2), np.eye(2), np.eye(2), target=[[1.0, 0.0]])
    spec = VectorPsiSpec((PsiComponent('ww', direction=(1.0, 0.0), h=1.0, s=0.5),))
    matrix = mat_bound(model, spec, 'global', cfg).bound_matrix
    assert matrix[0, 0] == pytest.approx(bound_global(gg, PsiSpec('ww', h=1.0, s=0.5), cfg).value, abs=1e-8)


def test_check_loewner_examples():
    a = np.array([[2.0, 0.5], [0.5, 1.0]])
    assert check_loewner(np.eye(2), 0.5 * np.eye(2)) == (True, pytest.approx(0.5))
    assert check_loewner(a, a) == (True, 0.0)
    assert check_loewner(0.5 * np.eye(2), np.eye(2)) == (False, pytest.approx(-0.5))
    with pytest.raises(NotSymmetric):
        check_loewner(np.array([[1.0, 1.0], [0.0, 1.0]]), np.eye(2))
    with pytest.raises(InvalidSpec):
        check_loewner(np.eye(2), np.eye(3))


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (2, 2), elements=st.floats(-10.0, 10.0)))
def test_loewner_is_reflexive(m):
    a = m + m.T
    passed, lowest = check_loewner(a, a)
    assert passed
    assert lowest == 0.0
