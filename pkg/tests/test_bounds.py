import numpy as np
import pytest

from src.bounds import (
    ASYMPTOTIC_NOTE,
    EXCEEDS_RISK_NOTE,
    BoundResult,
    bayes_risk_exact,
    bound_asymptotic,
    bound_avg_conditional,
    bound_avg_theta,
    bound_conditional,
    bound_global,
    bound_ww,
    bound_ww_conditional,
    fisher_information,
    limit_check_small_shift,
    mse_of_estimator,
)
from src.errors import ConditionViolated, InvalidSpec
from src.integrate import posterior_variance
from src.model import Estimator, gaussian_gaussian
from src.optimize import sweep
from src.testfn import ConditionReport, PsiSpec

SLACK = 1e-7


def _averaged_flavors(model, spec, cfg):
    return [bound_global(model, spec, cfg), bound_avg_conditional(model, spec, cfg), bound_avg_theta(model, spec, cfg)]


# ---------------------------------------------------------------------------
# Exact risk
# ---------------------------------------------------------------------------

@pytest.mark.parametrize("n_obs", [1, 4, 25])
def test_gaussian_risk_closed_form(cfg, n_obs):
    model = gaussian_gaussian(1.0, 1.0, n_obs)
    assert bayes_risk_exact(model, cfg).value == pytest.approx(1.0 / (n_obs + 1), abs=1e-10)


def test_channel_risk(bsc, cfg):
    result = bayes_risk_exact(bsc, cfg)
    assert result.ok
    assert result.value == pytest.approx(0.64, abs=1e-12)
    assert result.denominator == 1.0


def test_uniform_risk_below_identity_estimator(uni, cfg):
    risk = bayes_risk_exact(uni, cfg).value
    assert 0.0 < risk < 1.0 / 12.0


def test_estimator_mse(gg, cfg):
    def mse(rule):
        return mse_of_estimator(gg, Estimator(rule, 'test'), cfg)

    assert mse(lambda y: np.zeros_like(y)) == pytest.approx(1.0, abs=1e-10)
    assert mse(lambda y: y) == pytest.approx(1.0, abs=1e-10)
    assert mse(lambda y: 0.5 * y) == pytest.approx(0.5, abs=1e-10)


# ---------------------------------------------------------------------------
# Cauchy-Schwarz flavors
# ---------------------------------------------------------------------------

def test_channel_flavors_are_tight(bsc, cfg):
    spec = PsiSpec('ww', h=2.0, s=0.5)
    assert bound_global(bsc, spec, cfg).value == pytest.approx(0.64, abs=1e-12)
    assert bound_ww(bsc, 2.0, 0.5, cfg).value == pytest.approx(0.64, abs=1e-12)
    assert bound_conditional(bsc, spec, 1.0, cfg).value == pytest.approx(0.64, abs=1e-12)
    assert bound_avg_theta(bsc, PsiSpec('cond', h=2.0, s=0.5), cfg).value == pytest.approx(0.64, abs=1e-12)


def test_channel_ww_peaks_at_half(bsc, cfg):
    # E[t psi] = -0.2 (4^s + 4^(1-s)) and E[psi^2] = 0.125 16^s + 2 16^-s at h = 2
    values = [bound_ww(bsc, 2.0, s, cfg).value for s in (0.1, 0.3, 0.5, 0.7, 0.9)]
    assert values == pytest.approx([0.5104, 0.5964, 0.64, 0.5964, 0.5104], abs=1e-4)
    assert values[2] == pytest.approx(0.64, abs=1e-12)


def test_gaussian_avg_theta_closed_form(gg, cfg):
    # E[(t - y/2) psi | t] = -h/2 and E[psi^2 | t] = e^{h^2} - 1 for the s = 1 conditional ratio
    for h in (0.5, 1.0):
        result = bound_avg_theta(gg, PsiSpec('cond', h=h, s=1.0), cfg)
        assert result.value == pytest.approx((h * h / 4.0) / np.expm1(h * h), rel=1e-8)


@pytest.mark.parametrize("family", ['ww', 'cond'])
@pytest.mark.parametrize("h, s", [(0.5, 0.5), (1.0, 0.3), (2.0, 0.9)])
def test_master_inequality(catalog_model, cfg, family, h, s):
    if catalog_model.theta_discrete:
        h = 2.0
    risk = bayes_risk_exact(catalog_model, cfg).value
    spec = PsiSpec(family, h=h, s=s)
    for result in _averaged_flavors(catalog_model, spec, cfg):
        if result.ok:
            assert result.value <= risk + SLACK
    if family == 'ww':
        result = bound_ww(catalog_model, h, s, cfg)
        if result.ok:
            assert result.value <= risk + SLACK


def test_avg_conditional_dominates_global(gg, cfg):
    spec = PsiSpec('cond', h=1.0, s=0.5)
    assert bound_global(gg, spec, cfg).value <= bound_avg_conditional(gg, spec, cfg).value + SLACK


def test_optimal_test_function_attains_risk(catalog_model, cfg):
    risk = bayes_risk_exact(catalog_model, cfg).value
    for result in _averaged_flavors(catalog_model, PsiSpec('optimal'), cfg):
        assert result.ok
        assert result.value == pytest.approx(risk, abs=SLACK)


def test_optimal_conditional_attains_posterior_variance(gg, bsc, cfg):
    assert bound_conditional(gg, PsiSpec('optimal'), 0.8, cfg).value == pytest.approx(0.5, abs=SLACK)
    expected = posterior_variance(bsc, -1.0, cfg)
    assert bound_conditional(bsc, PsiSpec('optimal'), -1.0, cfg).value == pytest.approx(expected, abs=SLACK)


def test_constant_psi_is_degenerate(gg, cfg):
    spec = PsiSpec('custom', custom_fn=lambda y, t: 1.0)
    assert bound_global(gg, spec, cfg).status == 'degenerate_denominator'
    assert bound_avg_conditional(gg, spec, cfg).status == 'degenerate_denominator'
    result = bound_conditional(gg, spec, 0.0, cfg)
    assert result.status == 'degenerate_denominator'
    assert result.value is None


def test_conditional_below_posterior_variance(gg, cfg):
    for y in (-2.0, 0.0, 1.5):
        result = bound_conditional(gg, PsiSpec('cond', h=1.0, s=0.5), y, cfg)
        assert result.ok
        assert result.value <= 0.5 + SLACK
        assert result.meta['y'] == y


# ---------------------------------------------------------------------------
# ww forms
# ---------------------------------------------------------------------------

def test_ww_rejects_s_one(gg, cfg):
    with pytest.raises(InvalidSpec):
        bound_ww(gg, 1.0, 1.0, cfg)
    with pytest.raises(InvalidSpec):
        bound_ww_conditional(gg, 1.0, 1.0, 0.0, cfg)


def test_ww_agrees_with_general_form(gg, cfg):
    result = bound_ww(gg, 1.0, 0.5, cfg)
    assert result.ok
    assert result.meta['general_form_gap'] <= SLACK
    assert result.meta['condition_deviation'] <= 1e-8
    assert result.value == pytest.approx(bound_global(gg, PsiSpec('ww', h=1.0, s=0.5), cfg).value, abs=SLACK)


def test_ww_conditional_symmetry(gg, cfg):
    left = bound_ww_conditional(gg, 1.0, 0.5, -0.7, cfg)
    right = bound_ww_conditional(gg, 1.0, 0.5, 0.7, cfg)
    assert left.value == pytest.approx(right.value, rel=1e-10)
    assert right.value <= right.meta['posterior_variance'] + SLACK
    assert right.meta['posterior_variance'] == pytest.approx(0.5, abs=1e-10)


def test_ww_on_uniform(uni, cfg):
    risk = bayes_risk_exact(uni, cfg).value
    result = bound_ww(uni, 0.5, 0.5, cfg)
    assert result.ok
    assert 0.0 < result.value <= risk + SLACK


# ---------------------------------------------------------------------------
# Asymptotic bound and the small-shift limit
# ---------------------------------------------------------------------------

def test_gaussian_fisher_information(gg, cfg):
    _, information, reason = fisher_information(gg, cfg, thetas=[-1.0, 0.0, 2.0])
    assert reason is None
    assert information == pytest.approx([1.0, 1.0, 1.0], rel=1e-8)


@pytest.mark.parametrize("n_obs", [1, 10, 100, 1000])
def test_asymptotic_ratio_to_risk(cfg, n_obs):
    model = gaussian_gaussian(1.0, 1.0, n_obs)
    result = bound_asymptotic(model, cfg)
    assert result.ok
    assert ASYMPTOTIC_NOTE in result.notes
    assert result.value / result.meta['exact_risk'] == pytest.approx(1.0 + 1.0 / n_obs, rel=1e-6)
    # 1/n always exceeds 1/(n + 1)
    assert EXCEEDS_RISK_NOTE in result.notes


def test_asymptotic_is_non_regular_off_smooth_models(bsc, uni, cfg):
    for model in (bsc, uni):
        result = bound_asymptotic(model, cfg)
        assert result.status == 'non_regular'
        assert result.value is None
        assert ASYMPTOTIC_NOTE in result.notes


def test_limit_check_gaussian(gg, cfg):
    report = limit_check_small_shift(gg, 1.0, [0.5, 0.25, 0.1, 0.05, 0.01], cfg)
    assert report.status == 'ok'
    assert report.target_bound == pytest.approx(0.25, abs=1e-10)
    assert report.target_denominator == pytest.approx(1.0, abs=1e-10)
    assert report.target_numerator == pytest.approx(-0.5, abs=1e-10)
    assert report.monotone
    assert report.rows[-1].bound_deviation <= 0.01
    assert report.rows[-1].denominator_scaled == pytest.approx(1.0, abs=1e-3)
    assert 1.5 <= report.order <= 2.5


def test_limit_check_input_validation(gg, uni, cfg):
    with pytest.raises(InvalidSpec):
        limit_check_small_shift(gg, 0.5, [0.5, 0.25], cfg)
    with pytest.raises(InvalidSpec):
        limit_check_small_shift(gg, 1.0, [0.1, 0.5], cfg)
    with pytest.raises(InvalidSpec):
        limit_check_small_shift(gg, 1.0, [0.1, 1e-4], cfg)
    assert limit_check_small_shift(uni, 1.0, [0.1, 0.05], cfg).status == 'non_regular'


def test_bound_result_validation():
    with pytest.raises(InvalidSpec):
        BoundResult('global', 'exploded', None)
    with pytest.raises(InvalidSpec):
        BoundResult('global', 'degenerate_denominator', 0.3)
    with pytest.raises(InvalidSpec):
        BoundResult('minimax', 'ok', 0.3)


def test_ww_refuses_a_broken_condition(gg, cfg, monkeypatch):
    broken = ConditionReport(max_deviation=0.1, passed=False, tolerance=1e-9, probes=(0.0,), deviations=(0.1,))
    monkeypatch.setattr('src.bounds.check_zero_condition', lambda *args, **kwargs: broken)
    with pytest.raises(ConditionViolated):
        bound_ww(gg, 1.0, 0.5, cfg)
    with pytest.raises(ConditionViolated):
        bound_ww_conditional(gg, 1.0, 0.5, 0.0, cfg)
    table = sweep(gg, 'ww', 'ww', [1.0], [0.5], cfg)
    assert table.rows[0].status == 'unsupported'
